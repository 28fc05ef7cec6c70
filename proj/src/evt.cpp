#include "spext/evt.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "spext/error.hpp"

namespace spext::evt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_scale(const GpdParams& p) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma))
    fail_validation("GPD scale must be positive and finite, got " + std::to_string(p.sigma));
  if (!std::isfinite(p.xi)) fail_validation("GPD shape must be finite");
}

// log of (1 + xi*y)^(-1/xi), y = excess / sigma, y >= 0.
double log_survival(double y, double xi) {
  if (std::abs(xi) < kXiZero) return -y + 0.5 * xi * y * y;
  const double t = xi * y;
  if (1.0 + t <= 0.0) return -kInf;
  return -std::log1p(t) / xi;
}

}  // namespace

double gpd_logpdf(double excess, const GpdParams& p) {
  check_scale(p);
  if (excess < 0.0) return -kInf;
  const double y = excess / p.sigma;
  if (std::abs(p.xi) < kXiZero) return -std::log(p.sigma) - y + p.xi * (0.5 * y * y - y);
  const double t = p.xi * y;
  if (1.0 + t <= 0.0) return -kInf;
  return -std::log(p.sigma) - (1.0 / p.xi + 1.0) * std::log1p(t);
}

double gpd_loglik(std::span<const double> excesses, const GpdParams& p) {
  check_scale(p);
  if (excesses.empty()) return 0.0;
  const double inv_sigma = 1.0 / p.sigma;
  const double n = static_cast<double>(excesses.size());
  if (std::abs(p.xi) < kXiZero) {
    double acc = 0.0;
    for (double z : excesses) {
      if (z < 0.0) return -kInf;
      const double y = z * inv_sigma;
      acc += -y + p.xi * (0.5 * y * y - y);
    }
    return acc - n * std::log(p.sigma);
  }
  const double a = p.xi * inv_sigma;
  double acc = 0.0;
  for (double z : excesses) {
    const double t = a * z;
    if (z < 0.0 || 1.0 + t <= 0.0) return -kInf;
    acc += std::log1p(t);
  }
  return -n * std::log(p.sigma) - (1.0 / p.xi + 1.0) * acc;
}

double gpd_cdf(double excess, const GpdParams& p) {
  check_scale(p);
  if (excess <= 0.0) return 0.0;
  const double ls = log_survival(excess / p.sigma, p.xi);
  const double f = -std::expm1(ls);
  return f < 0.0 ? 0.0 : (f > 1.0 ? 1.0 : f);
}

double gpd_quantile(double prob, const GpdParams& p) {
  check_scale(p);
  if (!(prob >= 0.0 && prob < 1.0))
    fail_validation("gpd_quantile: probability must lie in [0,1), got " + std::to_string(prob));
  const double l = -std::log1p(-prob);
  if (std::abs(p.xi) < kXiZero) return p.sigma * (l + 0.5 * p.xi * l * l);
  return p.sigma * std::expm1(p.xi * l) / p.xi;
}

double log_conditional_exceedance(double level, const GpdParams& p) {
  check_scale(p);
  const double excess = level - p.u;
  if (excess <= 0.0) return 0.0;
  return log_survival(excess / p.sigma, p.xi);
}

double conditional_exceedance(double level, const GpdParams& p) {
  return std::exp(log_conditional_exceedance(level, p));
}

double upper_endpoint(const GpdParams& p) {
  return p.xi < 0.0 ? p.u - p.sigma / p.xi : kInf;
}

double return_level(const ReturnSpec& spec, const GpdParams& p, bool* clamped) {
  check_scale(p);
  if (!(spec.years > 0.0) || !(spec.obs_per_year > 0.0))
    fail_validation("return_level: years and observations per year must be positive");
  if (!(spec.zeta_u > 0.0 && spec.zeta_u <= 1.0))
    fail_validation("return_level: exceedance probability must lie in (0,1]");
  const double log_k = std::log(spec.years) + std::log(spec.obs_per_year) + std::log(spec.zeta_u);
  if (clamped) *clamped = log_k < 0.0;
  if (log_k <= 0.0) return p.u;
  if (std::abs(p.xi) < kXiZero) return p.u + p.sigma * (log_k + 0.5 * p.xi * log_k * log_k);
  return p.u + p.sigma * std::expm1(p.xi * log_k) / p.xi;
}

}  // namespace spext::evt
