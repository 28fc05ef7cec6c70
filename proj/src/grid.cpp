#include "spext/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "spext/csv.hpp"
#include "spext/error.hpp"

namespace spext {

namespace {

void validate_sites(const std::vector<Site>& sites) {
  std::unordered_set<long> ids;
  for (const auto& s : sites) {
    if (!ids.insert(s.id).second)
      fail_validation("duplicate site id " + std::to_string(s.id));
    if (!std::isfinite(s.lon) || !std::isfinite(s.lat))
      fail_validation("site " + std::to_string(s.id) + ": non-finite coordinate");
    if (!std::isfinite(s.elevation) || s.elevation < 0.0)
      fail_validation("site " + std::to_string(s.id) + ": elevation must be finite and >= 0");
  }
}

void validate_knots(const std::vector<std::size_t>& knots, std::size_t n) {
  if (knots.empty()) fail_validation("knot set is empty");
  std::set<std::size_t> seen;
  for (auto k : knots) {
    if (k >= n) fail_validation("knot index " + std::to_string(k) + " out of range");
    if (!seen.insert(k).second) fail_validation("duplicate knot index " + std::to_string(k));
  }
}

// Sorted unique values, merging those within tol of the previous kept value.
std::vector<double> lattice_axis(std::vector<double> v, double tol) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || x - out.back() > tol) out.push_back(x);
  return out;
}

std::size_t axis_index(const std::vector<double>& axis, double x, double tol) {
  auto it = std::lower_bound(axis.begin(), axis.end(), x - tol);
  return static_cast<std::size_t>(it - axis.begin());
}

double column_sd(const Eigen::VectorXd& c, double mean) {
  const double ss = (c.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(c.size() - 1));
}

}  // namespace

Grid::Grid(std::vector<Site> sites) : sites_(std::move(sites)) {
  validate_sites(sites_);
  knots_.resize(sites_.size());
  for (std::size_t i = 0; i < knots_.size(); ++i) knots_[i] = i;
  if (sites_.empty()) fail_validation("grid has no sites");
}

Grid::Grid(std::vector<Site> sites, std::vector<std::size_t> knot_indices)
    : sites_(std::move(sites)), knots_(std::move(knot_indices)) {
  validate_sites(sites_);
  validate_knots(knots_, sites_.size());
}

std::vector<Site> Grid::knot_sites() const {
  std::vector<Site> out;
  out.reserve(knots_.size());
  for (auto k : knots_) out.push_back(sites_[k]);
  return out;
}

std::size_t Grid::find(long site_id) const {
  for (std::size_t i = 0; i < sites_.size(); ++i)
    if (sites_[i].id == site_id) return i;
  return sites_.size();
}

Grid Grid::with_knots(std::vector<std::size_t> knot_indices) const {
  return Grid(sites_, std::move(knot_indices));
}

Eigen::MatrixXd DesignMatrix::select_rows(const std::vector<std::size_t>& idx) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), rows.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = rows.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

DesignMatrix scale_covariates(const std::vector<Site>& sites) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  if (n < 2) fail_validation("scale_covariates: need at least 2 sites");

  Eigen::MatrixXd raw(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = sites[static_cast<std::size_t>(i)];
    if (!(s.elevation > -1.0)) fail_validation("scale_covariates: elevation must exceed -1");
    raw(i, 0) = s.lon;
    raw(i, 1) = s.lat;
    raw(i, 2) = std::log1p(s.elevation);
  }

  DesignMatrix X;
  X.rows.resize(n, 4);
  X.rows.col(0).setOnes();
  const char* names[] = {"lon", "lat", "elevation"};
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd col = raw.col(c);
    const double mean = col.mean();
    const double sd = column_sd(col, mean);
    if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean)))
      fail_validation(std::string("scale_covariates: constant covariate '") + names[c] + "'");
    X.rows.col(c + 1) = (col.array() - mean) / sd;
    X.scaling.push_back({names[c], mean, sd, c == 2});
  }
  return X;
}

DesignMatrix apply_scaling(const std::vector<Site>& sites,
                           const std::vector<CovariateScaling>& scaling) {
  if (scaling.size() != 3) fail_validation("apply_scaling: expected 3 covariates");
  DesignMatrix X;
  X.scaling = scaling;
  X.rows.resize(static_cast<Eigen::Index>(sites.size()), 4);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const double raw[] = {sites[i].lon, sites[i].lat, sites[i].elevation};
    const auto r = static_cast<Eigen::Index>(i);
    X.rows(r, 0) = 1.0;
    for (int c = 0; c < 3; ++c) {
      const auto& s = scaling[static_cast<std::size_t>(c)];
      const double v = s.log1p ? std::log1p(raw[c]) : raw[c];
      X.rows(r, c + 1) = (v - s.center) / s.sd;
    }
  }
  return X;
}

Site unscale_row(const DesignMatrix& X, Eigen::Index row) {
  double v[3];
  for (int c = 0; c < 3; ++c) {
    const auto& s = X.scaling[static_cast<std::size_t>(c)];
    v[c] = X.rows(row, c + 1) * s.sd + s.center;
    if (s.log1p) v[c] = std::expm1(v[c]);
  }
  return Site{0, v[0], v[1], v[2]};
}

std::vector<std::size_t> select_subgrid(const Grid& grid, std::size_t stride) {
  if (stride == 0) fail_validation("select_subgrid: stride must be >= 1");
  const auto& sites = grid.sites();
  std::vector<double> lons, lats;
  for (const auto& s : sites) {
    lons.push_back(s.lon);
    lats.push_back(s.lat);
  }
  auto snap = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return 1e-6 * std::max({std::abs(*lo), std::abs(*hi), *hi - *lo, 1e-300});
  };
  const double tol_x = snap(lons), tol_y = snap(lats);
  const auto xs = lattice_axis(lons, tol_x);
  const auto ys = lattice_axis(lats, tol_y);

  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto col = axis_index(xs, sites[i].lon, tol_x);
    const auto row = axis_index(ys, sites[i].lat, tol_y);
    if (row % stride == 0 && col % stride == 0) out.push_back(i);
  }
  if (out.empty()) fail_validation("select_subgrid: no sites selected");
  return out;
}

Displacements pairwise_displacements(const std::vector<Site>& a, const std::vector<Site>& b) {
  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nb = static_cast<Eigen::Index>(b.size());
  Displacements d{Eigen::MatrixXd(na, nb), Eigen::MatrixXd(na, nb)};
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) {
      d.dx(i, j) = a[static_cast<std::size_t>(i)].lon - b[static_cast<std::size_t>(j)].lon;
      d.dy(i, j) = a[static_cast<std::size_t>(i)].lat - b[static_cast<std::size_t>(j)].lat;
    }
  }
  return d;
}

Grid read_grid_csv(const std::string& path) {
  csv::Reader r(path);
  const auto c_id = r.column("id"), c_lon = r.column("lon"), c_lat = r.column("lat"),
             c_el = r.column("elev");
  std::vector<Site> sites;
  std::vector<std::string> f;
  while (r.next(f)) {
    Site s;
    s.id = csv::to_long(r, f[c_id]);
    s.lon = csv::to_double(r, f[c_lon]);
    s.lat = csv::to_double(r, f[c_lat]);
    s.elevation = csv::to_double(r, f[c_el]);
    sites.push_back(s);
  }
  if (sites.empty()) fail_validation(path + ": no sites");
  return Grid(std::move(sites));
}

void write_grid_csv(const std::string& path, const Grid& grid, const std::string& header_comment) {
  auto out = csv::open_output(path);
  if (!header_comment.empty()) out << header_comment << '\n';
  out << "id,lon,lat,elev\n";
  for (const auto& s : grid.sites())
    out << s.id << ',' << csv::format(s.lon) << ',' << csv::format(s.lat) << ','
        << csv::format(s.elevation) << '\n';
}

}  // namespace spext
