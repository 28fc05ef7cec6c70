#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spext {

struct Site {
  long id = 0;
  double lon = 0.0;
  double lat = 0.0;
  double elevation = 0.0;  // metres
};

// Ordered sites plus the knot subset (the reduced-rank support of the
// predictive process). Immutable once constructed.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<Site> sites);
  Grid(std::vector<Site> sites, std::vector<std::size_t> knot_indices);

  const std::vector<Site>& sites() const { return sites_; }
  const std::vector<std::size_t>& knot_indices() const { return knots_; }
  std::size_t size() const { return sites_.size(); }
  std::size_t knot_count() const { return knots_.size(); }

  std::vector<Site> knot_sites() const;

  // Index of the site with the given id, or size() if absent.
  std::size_t find(long site_id) const;

  Grid with_knots(std::vector<std::size_t> knot_indices) const;

 private:
  std::vector<Site> sites_;
  std::vector<std::size_t> knots_;
};

struct CovariateScaling {
  std::string name;
  double center = 0.0;
  double sd = 1.0;
  bool log1p = false;
};

// n x (p+1) regression matrix; column 0 is the intercept.
struct DesignMatrix {
  Eigen::MatrixXd rows;
  std::vector<CovariateScaling> scaling;

  Eigen::Index cols() const { return rows.cols(); }
  Eigen::MatrixXd select_rows(const std::vector<std::size_t>& idx) const;
};

// Columns: intercept, lon, lat, log1p(elevation); each covariate standardised.
DesignMatrix scale_covariates(const std::vector<Site>& sites);

// Re-applies stored scaling to new sites (used for prediction on a grid
// that was not the one the scaling was fitted on).
DesignMatrix apply_scaling(const std::vector<Site>& sites,
                           const std::vector<CovariateScaling>& scaling);

// Recovers raw (lon, lat, elevation) from one design row.
Site unscale_row(const DesignMatrix& X, Eigen::Index row);

std::vector<std::size_t> select_subgrid(const Grid& grid, std::size_t stride);

// Planar displacements: dx(i,j) = lon_a[i] - lon_b[j], dy likewise.
struct Displacements {
  Eigen::MatrixXd dx;
  Eigen::MatrixXd dy;
};

Displacements pairwise_displacements(const std::vector<Site>& a,
                                     const std::vector<Site>& b);

Grid read_grid_csv(const std::string& path);
void write_grid_csv(const std::string& path, const Grid& grid,
                    const std::string& header_comment = {});

}  // namespace spext
