#pragma once

#include <span>

namespace spext::evt {

// Below this |xi| the exponential-limit forms are used.
inline constexpr double kXiZero = 1e-6;

struct GpdParams {
  double u = 0.0;      // threshold
  double sigma = 1.0;  // scale, > 0
  double xi = 0.0;     // shape
};

struct ReturnSpec {
  double years = 1.0;          // N
  double obs_per_year = 365.25;  // n_y
  double zeta_u = 0.0;         // P(cluster maximum) at the threshold
};

// All functions take the excess z = level - u, except conditional_exceedance
// and return_level, which work on levels.

// -inf outside the support.
double gpd_logpdf(double excess, const GpdParams& p);
// Sum of gpd_logpdf over a sample sharing one parameter set.
double gpd_loglik(std::span<const double> excesses, const GpdParams& p);

double gpd_cdf(double excess, const GpdParams& p);
double gpd_quantile(double prob, const GpdParams& p);

// log P(Z > z | Z > u); -inf beyond a finite upper endpoint.
double log_conditional_exceedance(double level, const GpdParams& p);
double conditional_exceedance(double level, const GpdParams& p);

// Upper end of the support for xi < 0, +inf otherwise.
double upper_endpoint(const GpdParams& p);

// N-year return level. When N * n_y * zeta_u < 1 the level would sit below
// the threshold; u is returned and *clamped (if given) is set.
double return_level(const ReturnSpec& spec, const GpdParams& p, bool* clamped = nullptr);

}  // namespace spext::evt
