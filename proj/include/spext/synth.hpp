#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spext/grid.hpp"
#include "spext/hier_model.hpp"
#include "spext/preprocess.hpp"
#include "spext/spatial.hpp"

namespace spext::synth {

// X alpha + L z, L the Cholesky factor of the dense n x n covariance
// (nugget included on the diagonal), z iid standard normal.
Eigen::VectorXd sample_gp_surface(const Grid& grid, const DesignMatrix& X,
                                  const Eigen::VectorXd& alpha, const spatial::MaternParams& p,
                                  std::uint64_t seed);

// Regular nx x ny lattice with the given spacing, a smooth non-negative
// elevation field, and knots every `stride` rows and columns.
Grid lattice_grid(std::size_t nx, std::size_t ny, double spacing, std::size_t stride);

struct SurfaceTruth {
  Eigen::VectorXd alpha;
  spatial::MaternParams matern;
};

struct TruthSpec {
  SurfaceTruth phi;
  SurfaceTruth xi;
  SurfaceTruth zeta;
  // Thresholds u_i = threshold_base + threshold_gradient * (lon - min lon) / lon extent.
  double threshold_base = 5.5;
  double threshold_gradient = 0.5;
  std::size_t trials_per_site = 10'957;  // 30 years of days
  double npy = 365.25;
};

// Desk-scale defaults: sigma near 1, xi near -0.1, zeta around 0.003-0.006.
TruthSpec default_truth_spec();

struct TruthRecord {
  model::ModelState state;  // knot_values hold the true latent values at knots
  Eigen::VectorXd sigma;    // per site
  Eigen::VectorXd xi;
  Eigen::VectorXd zeta;
  Eigen::VectorXd threshold;
  std::uint64_t seed = 0;
};

TruthRecord sample_truth(const Grid& grid, const TruthSpec& spec, const model::PriorLedger& ledger,
                         std::uint64_t seed);

// M_i ~ Binomial(m_i, zeta_i), then M_i excesses drawn by inverting the GPD cdf.
ExceedanceSet generate_exceedance_data(const TruthRecord& truth, const Grid& grid,
                                       std::size_t m_per_site, std::uint64_t seed,
                                       double npy = 365.25);

// Sinusoidal seasonal cycle plus iid Gaussian noise, one value per day.
DailySeries sinusoid_series(long site_id, Date start, std::size_t days, double mean,
                            double amplitude, double noise_sd, std::uint64_t seed);

std::string truth_to_json(const TruthRecord& truth, const Grid& grid, const std::string& provenance = {});
void write_truth_json(const std::string& path, const TruthRecord& truth, const Grid& grid,
                      const std::string& provenance = {});

}  // namespace spext::synth
