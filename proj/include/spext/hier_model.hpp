#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "spext/grid.hpp"
#include "spext/preprocess.hpp"
#include "spext/spatial.hpp"

namespace spext::model {

// phi = log(sigma), xi = GPD shape, zeta = logit of the cluster-maximum
// probability.
enum class SurfaceKind { kPhi = 0, kXi = 1, kZeta = 2 };

std::string_view surface_name(SurfaceKind kind);

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;

  double logpdf(double x) const;
};

struct CovarianceChoice {
  Eigen::Matrix2d beta;
  double nu = 0.5;
};

// Third-layer priors, shared by all three surfaces except the intercepts.
struct PriorLedger {
  std::array<NormalPrior, 3> intercept;  // indexed by SurfaceKind
  NormalPrior slope;
  NormalPrior log_sill2;
  NormalPrior log_nugget2;
  std::vector<Eigen::Matrix2d> beta_set;
  std::vector<double> nu_set;
  std::vector<CovarianceChoice> combinations;  // beta-major

  static PriorLedger standard();

  const NormalPrior& intercept_prior(SurfaceKind k) const {
    return intercept[static_cast<std::size_t>(k)];
  }
  // Uniform mass on one (beta, nu) pair.
  double log_combination_mass() const;
};

// Symmetric 2x2 matrices with diagonal in {0.05, 1, 10} and off-diagonal in
// {0, 0.05, 1, 10}, keeping only positive definite ones.
std::vector<Eigen::Matrix2d> build_beta_prior_set();

std::vector<CovarianceChoice> prior_combinations(const std::vector<Eigen::Matrix2d>& betas,
                                                 const std::vector<double>& nus);

// Index of the combination used for initialisation: beta = I, nu = 0.5.
std::size_t default_combination(const PriorLedger& ledger);

struct SurfaceBlock {
  SurfaceKind kind = SurfaceKind::kPhi;
  Eigen::VectorXd alpha;
  spatial::MaternParams matern;
  std::size_t combination = 0;  // index of (beta, nu) in the ledger
  Eigen::VectorXd knot_values;

  void set_combination(const PriorLedger& ledger, std::size_t index);
};

struct ModelState {
  SurfaceBlock phi;
  SurfaceBlock xi;
  SurfaceBlock zeta;

  SurfaceBlock& block(SurfaceKind k);
  const SurfaceBlock& block(SurfaceKind k) const;
};

// Block at its initial position: intercept at the prior mean, slopes zero,
// knot values at the implied mean, log sill 0, log nugget -2.3.
SurfaceBlock initial_block(SurfaceKind kind, const PriorLedger& ledger,
                           const Eigen::MatrixXd& knot_design);

// Read-only data shared by all evaluations: grid, design, cached
// displacements, and exceedance data aligned to grid order.
class ModelContext {
 public:
  ModelContext(Grid grid, const ExceedanceSet& data);

  const Grid& grid() const { return grid_; }
  const DesignMatrix& design() const { return design_; }
  const Eigen::MatrixXd& knot_design() const { return knot_design_; }
  const Displacements& site_knot() const { return site_knot_; }
  const Displacements& knot_knot() const { return knot_knot_; }
  // Entry i belongs to grid site i.
  const std::vector<SiteExceedances>& site_data() const { return data_; }

  spatial::KrigingProjector projector(const spatial::MaternParams& p) const;
  std::size_t total_excesses() const;

 private:
  Grid grid_;
  DesignMatrix design_;
  Eigen::MatrixXd knot_design_;
  Displacements site_knot_;
  Displacements knot_knot_;
  std::vector<SiteExceedances> data_;
};

// X alpha + krige(knot_values - X* alpha).
Eigen::VectorXd surface_at_sites(const SurfaceBlock& block, const DesignMatrix& X,
                                 const Eigen::MatrixXd& knot_design,
                                 const spatial::KrigingProjector& proj);

// Likelihood given per-site surfaces.
double gpd_loglik_sites(const Eigen::VectorXd& phi_sites, const Eigen::VectorXd& xi_sites,
                        const std::vector<SiteExceedances>& data);
double binomial_loglik_sites(const Eigen::VectorXd& zeta_logit_sites,
                             const std::vector<SiteExceedances>& data);

double inverse_logit(double x);

double log_likelihood_gpd(const ModelState& state, const ModelContext& ctx);
double log_likelihood_binomial(const ModelState& state, const ModelContext& ctx);

// Uses the projector's knot factor as the prior covariance.
double log_prior(const SurfaceBlock& block, const PriorLedger& ledger,
                 const Eigen::MatrixXd& knot_design, const spatial::KrigingProjector& proj);
double log_prior(const SurfaceBlock& block, const PriorLedger& ledger, const ModelContext& ctx);

double log_posterior_gpd(const ModelState& state, const ModelContext& ctx,
                         const PriorLedger& ledger);
double log_posterior_binomial(const ModelState& state, const ModelContext& ctx,
                              const PriorLedger& ledger);

}  // namespace spext::model
