#include "spext/spatial.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "spext/error.hpp"

namespace spext::spatial {

namespace {

constexpr double kRangeCorrelation = 0.05;

bool is_half(double nu) { return std::abs(nu - 0.5) < 1e-12; }
bool is_five_halves(double nu) { return std::abs(nu - 2.5) < 1e-12; }

}  // namespace

std::string MaternParams::describe() const {
  std::ostringstream os;
  os << "Matern(beta=[" << beta(0, 0) << ',' << beta(0, 1) << ';' << beta(1, 0) << ','
     << beta(1, 1) << "], nu=" << nu << ", sill2=" << sill2 << ", nugget2=" << nugget2 << ')';
  return os.str();
}

void validate(const MaternParams& p) {
  const auto& b = p.beta;
  const double scale = b.cwiseAbs().maxCoeff();
  if (!b.allFinite() || std::abs(b(0, 1) - b(1, 0)) > 1e-12 * scale)
    fail_validation("beta must be a finite symmetric matrix: " + p.describe());
  if (!(b(0, 0) > 0.0) || !(b.determinant() > 0.0))
    fail_validation("beta must be positive definite: " + p.describe());
  if (!is_half(p.nu) && !is_five_halves(p.nu))
    fail_validation("smoothness must be 0.5 or 2.5: " + p.describe());
  if (!(p.sill2 > 0.0) || !std::isfinite(p.sill2))
    fail_validation("partial sill must be positive: " + p.describe());
  if (!(p.nugget2 >= 0.0) || !std::isfinite(p.nugget2))
    fail_validation("nugget must be non-negative: " + p.describe());
}

Eigen::Matrix2d inverse_2x2(const Eigen::Matrix2d& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Eigen::Matrix2d inv;
  inv << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
  return inv;
}

double matern_correlation(double h, double nu) {
  if (h <= 0.0) return 1.0;
  if (is_half(nu)) return std::exp(-h);
  if (is_five_halves(nu)) return (1.0 + h + h * h / 3.0) * std::exp(-h);
  fail_validation("smoothness must be 0.5 or 2.5");
}

double matern_cov(const Eigen::Vector2d& d, const MaternParams& p) {
  validate(p);
  if (d(0) == 0.0 && d(1) == 0.0) return p.sill2 + p.nugget2;
  const double h = scaled_distance(d(0), d(1), inverse_2x2(p.beta));
  return p.sill2 * matern_correlation(h, p.nu);
}

double effective_range(const MaternParams& p, const Eigen::Vector2d& direction) {
  validate(p);
  const double norm = direction.norm();
  if (!(norm > 0.0)) fail_validation("effective_range: direction must be non-zero");
  const Eigen::Vector2d unit = direction / norm;
  // h is linear in r along a fixed direction, so solve in h then rescale.
  const double h_per_unit = scaled_distance(unit(0), unit(1), inverse_2x2(p.beta));
  double lo = 0.0, hi = 1.0;
  while (matern_correlation(hi, p.nu) > kRangeCorrelation) hi *= 2.0;
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (matern_correlation(mid, p.nu) > kRangeCorrelation)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi) / h_per_unit;
}

Eigen::MatrixXd build_cov_matrix(const Displacements& d, const MaternParams& p,
                                 bool include_nugget) {
  validate(p);
  const Eigen::Matrix2d beta_inv = inverse_2x2(p.beta);
  const bool half = is_half(p.nu);
  Eigen::MatrixXd c(d.dx.rows(), d.dx.cols());
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      const double dx = d.dx(i, j), dy = d.dy(i, j);
      if (dx == 0.0 && dy == 0.0) {
        c(i, j) = p.sill2 + (include_nugget ? p.nugget2 : 0.0);
        continue;
      }
      const double h = scaled_distance(dx, dy, beta_inv);
      const double e = std::exp(-h);
      c(i, j) = p.sill2 * (half ? e : (1.0 + h + h * h / 3.0) * e);
    }
  }
  return c;
}

Eigen::MatrixXd build_cov_matrix(const std::vector<Site>& a, const std::vector<Site>& b,
                                 const MaternParams& p, bool include_nugget) {
  return build_cov_matrix(pairwise_displacements(a, b), p, include_nugget);
}

Cholesky factorize(const Eigen::MatrixXd& cov, const MaternParams& p) {
  Cholesky chol(cov);
  if (chol.info() == Eigen::Success) return chol;
  Eigen::MatrixXd jittered = cov;
  jittered.diagonal().array() += 1e-8 * p.sill2;
  chol.compute(jittered);
  if (chol.info() != Eigen::Success)
    fail_validation("covariance matrix is not positive definite for " + p.describe());
  return chol;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Cholesky& chol) {
  const auto k = x.size();
  if (mean.size() != k || chol.rows() != k) fail_validation("mvn_logpdf: dimension mismatch");
  const Eigen::MatrixXd& l = chol.matrixLLT();
  Eigen::VectorXd r = x - mean;
  chol.matrixL().solveInPlace(r);
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(k) * std::log(2.0 * std::numbers::pi) + log_det +
                 r.squaredNorm());
}

KrigingProjector build_projector(const Displacements& site_knot,
                                 const Displacements& knot_knot, const MaternParams& p) {
  if (knot_knot.dx.rows() == 0) fail_validation("build_projector: no knots");
  KrigingProjector out;
  out.knot_chol = factorize(build_cov_matrix(knot_knot, p, true), p);
  out.cross_cov = build_cov_matrix(site_knot, p, false);
  out.projector = out.knot_chol.solve(out.cross_cov.transpose()).transpose();
  return out;
}

KrigingProjector build_projector(const Grid& grid, const MaternParams& p) {
  const auto knots = grid.knot_sites();
  return build_projector(pairwise_displacements(grid.sites(), knots),
                         pairwise_displacements(knots, knots), p);
}

Eigen::VectorXd krige(const KrigingProjector& proj, const Eigen::VectorXd& knot_residuals) {
  if (knot_residuals.size() != proj.projector.cols())
    fail_validation("krige: expected " + std::to_string(proj.projector.cols()) +
                    " knot values, got " + std::to_string(knot_residuals.size()));
  return proj.projector * knot_residuals;
}

}  // namespace spext::spatial
