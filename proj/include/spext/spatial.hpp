#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "spext/grid.hpp"

namespace spext::spatial {

// Anisotropic Matérn covariance. h = sqrt(d' beta^-1 d); supported
// smoothness values are 0.5 (exponential) and 2.5.
struct MaternParams {
  Eigen::Matrix2d beta = Eigen::Matrix2d::Identity();
  double nu = 0.5;
  double sill2 = 1.0;    // partial sill
  double nugget2 = 0.0;  // nugget

  std::string describe() const;
};

void validate(const MaternParams& p);

Eigen::Matrix2d inverse_2x2(const Eigen::Matrix2d& m);

// Normalised correlation m_nu(h), h >= 0.
double matern_correlation(double h, double nu);

// Scaled distance for a displacement given a precomputed beta inverse.
inline double scaled_distance(double dx, double dy, const Eigen::Matrix2d& beta_inv) {
  const double q = beta_inv(0, 0) * dx * dx + 2.0 * beta_inv(0, 1) * dx * dy +
                   beta_inv(1, 1) * dy * dy;
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

double matern_cov(const Eigen::Vector2d& d, const MaternParams& p);

// Distance along `direction` at which the correlation falls to 0.05.
double effective_range(const MaternParams& p, const Eigen::Vector2d& direction);

// Element-wise matern_cov. The nugget is added only where the displacement
// is exactly zero and only if include_nugget is set.
Eigen::MatrixXd build_cov_matrix(const Displacements& d, const MaternParams& p,
                                 bool include_nugget);
Eigen::MatrixXd build_cov_matrix(const std::vector<Site>& a, const std::vector<Site>& b,
                                 const MaternParams& p, bool include_nugget);

using Cholesky = Eigen::LLT<Eigen::MatrixXd>;

// Factorises a covariance built from p; retries once with 1e-8 * sill2 of
// diagonal jitter before failing.
Cholesky factorize(const Eigen::MatrixXd& cov, const MaternParams& p);

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Cholesky& chol);

struct KrigingProjector {
  Cholesky knot_chol;          // C(S*,S*) with nugget, n* x n*
  Eigen::MatrixXd cross_cov;   // C(s,S*) without nugget, n x n*
  Eigen::MatrixXd projector;   // cross_cov * C(S*,S*)^-1, n x n*
};

KrigingProjector build_projector(const Grid& grid, const MaternParams& p);
KrigingProjector build_projector(const Displacements& site_knot,
                                 const Displacements& knot_knot, const MaternParams& p);

Eigen::VectorXd krige(const KrigingProjector& proj, const Eigen::VectorXd& knot_residuals);

}  // namespace spext::spatial
