#include "spext/hier_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "spext/error.hpp"
#include "spext/evt.hpp"

namespace spext::model {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(inverse_logit(x)) and log(1 - inverse_logit(x)), overflow-safe.
double log_inv_logit(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double log1m_inv_logit(double x) { return log_inv_logit(-x); }

}  // namespace

std::string_view surface_name(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::kPhi: return "phi";
    case SurfaceKind::kXi: return "xi";
    case SurfaceKind::kZeta: return "zeta";
  }
  return "?";
}

double NormalPrior::logpdf(double x) const {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

std::vector<Eigen::Matrix2d> build_beta_prior_set() {
  const double diag[] = {0.05, 1.0, 10.0};
  const double off[] = {0.0, 0.05, 1.0, 10.0};
  std::vector<Eigen::Matrix2d> out;
  for (double a : diag) {
    for (double d : diag) {
      for (double b : off) {
        // Eigenvalues of [[a,b],[b,d]] are positive iff a > 0 and ad > b^2.
        if (a * d - b * b > 0.0) {
          Eigen::Matrix2d m;
          m << a, b, b, d;
          out.push_back(m);
        }
      }
    }
  }
  return out;
}

std::vector<CovarianceChoice> prior_combinations(const std::vector<Eigen::Matrix2d>& betas,
                                                 const std::vector<double>& nus) {
  std::vector<CovarianceChoice> out;
  out.reserve(betas.size() * nus.size());
  for (const auto& b : betas)
    for (double nu : nus) out.push_back({b, nu});
  return out;
}

PriorLedger PriorLedger::standard() {
  PriorLedger l;
  l.intercept = {NormalPrior{0.0, 2.0}, NormalPrior{0.0, 2.0}, NormalPrior{-6.0, 2.0}};
  l.slope = {0.0, 1.0};
  l.log_sill2 = {0.0, 1.0};
  l.log_nugget2 = {-2.3, 1.0};
  l.beta_set = build_beta_prior_set();
  l.nu_set = {0.5, 2.5};
  l.combinations = prior_combinations(l.beta_set, l.nu_set);
  return l;
}

double PriorLedger::log_combination_mass() const {
  return -std::log(static_cast<double>(combinations.size()));
}

std::size_t default_combination(const PriorLedger& ledger) {
  for (std::size_t i = 0; i < ledger.combinations.size(); ++i) {
    const auto& c = ledger.combinations[i];
    if (c.beta.isApprox(Eigen::Matrix2d::Identity()) && c.nu == 0.5) return i;
  }
  fail_validation("prior ledger has no (identity, 0.5) combination");
}

void SurfaceBlock::set_combination(const PriorLedger& ledger, std::size_t index) {
  if (index >= ledger.combinations.size())
    fail_validation("covariance combination index out of range");
  combination = index;
  matern.beta = ledger.combinations[index].beta;
  matern.nu = ledger.combinations[index].nu;
}

SurfaceBlock& ModelState::block(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::kPhi: return phi;
    case SurfaceKind::kXi: return xi;
    default: return zeta;
  }
}

const SurfaceBlock& ModelState::block(SurfaceKind k) const {
  return const_cast<ModelState*>(this)->block(k);
}

SurfaceBlock initial_block(SurfaceKind kind, const PriorLedger& ledger,
                           const Eigen::MatrixXd& knot_design) {
  SurfaceBlock b;
  b.kind = kind;
  b.alpha = Eigen::VectorXd::Zero(knot_design.cols());
  b.alpha(0) = ledger.intercept_prior(kind).mean;
  b.matern.sill2 = std::exp(0.0);
  b.matern.nugget2 = std::exp(-2.3);
  b.set_combination(ledger, default_combination(ledger));
  b.knot_values = knot_design * b.alpha;
  return b;
}

ModelContext::ModelContext(Grid grid, const ExceedanceSet& data)
    : grid_(std::move(grid)), design_(scale_covariates(grid_.sites())) {
  knot_design_ = design_.select_rows(grid_.knot_indices());
  const auto knots = grid_.knot_sites();
  site_knot_ = pairwise_displacements(grid_.sites(), knots);
  knot_knot_ = pairwise_displacements(knots, knots);

  std::unordered_map<long, const SiteExceedances*> by_id;
  for (const auto& s : data.sites) by_id[s.site_id] = &s;
  data_.reserve(grid_.size());
  for (const auto& site : grid_.sites()) {
    const auto it = by_id.find(site.id);
    if (it == by_id.end())
      fail_validation("no exceedance record for grid site " + std::to_string(site.id));
    if (it->second->clusters > it->second->trials)
      fail_validation("site " + std::to_string(site.id) + ": M exceeds m");
    data_.push_back(*it->second);
  }
}

spatial::KrigingProjector ModelContext::projector(const spatial::MaternParams& p) const {
  return spatial::build_projector(site_knot_, knot_knot_, p);
}

std::size_t ModelContext::total_excesses() const {
  std::size_t n = 0;
  for (const auto& s : data_) n += s.excesses.size();
  return n;
}

Eigen::VectorXd surface_at_sites(const SurfaceBlock& block, const DesignMatrix& X,
                                 const Eigen::MatrixXd& knot_design,
                                 const spatial::KrigingProjector& proj) {
  if (block.alpha.size() != X.cols() || knot_design.cols() != X.cols() ||
      block.knot_values.size() != knot_design.rows() ||
      proj.projector.rows() != X.rows.rows())
    fail_validation("surface_at_sites: dimension mismatch");
  const Eigen::VectorXd residual = block.knot_values - knot_design * block.alpha;
  return X.rows * block.alpha + spatial::krige(proj, residual);
}

double gpd_loglik_sites(const Eigen::VectorXd& phi_sites, const Eigen::VectorXd& xi_sites,
                        const std::vector<SiteExceedances>& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].excesses.empty()) continue;
    const auto r = static_cast<Eigen::Index>(i);
    const double ll = evt::gpd_loglik(data[i].excesses,
                                      evt::GpdParams{data[i].u, std::exp(phi_sites(r)), xi_sites(r)});
    if (ll == kNegInf) return kNegInf;
    total += ll;
  }
  return total;
}

double binomial_loglik_sites(const Eigen::VectorXd& zeta_logit_sites,
                             const std::vector<SiteExceedances>& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = zeta_logit_sites(static_cast<Eigen::Index>(i));
    const auto successes = static_cast<double>(data[i].clusters);
    const auto failures = static_cast<double>(data[i].trials - data[i].clusters);
    total += successes * log_inv_logit(x) + failures * log1m_inv_logit(x);
  }
  return total;
}

double inverse_logit(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double log_likelihood_gpd(const ModelState& state, const ModelContext& ctx) {
  const auto phi = surface_at_sites(state.phi, ctx.design(), ctx.knot_design(),
                                    ctx.projector(state.phi.matern));
  const auto xi = surface_at_sites(state.xi, ctx.design(), ctx.knot_design(),
                                   ctx.projector(state.xi.matern));
  return gpd_loglik_sites(phi, xi, ctx.site_data());
}

double log_likelihood_binomial(const ModelState& state, const ModelContext& ctx) {
  const auto zeta = surface_at_sites(state.zeta, ctx.design(), ctx.knot_design(),
                                     ctx.projector(state.zeta.matern));
  return binomial_loglik_sites(zeta, ctx.site_data());
}

double log_prior(const SurfaceBlock& block, const PriorLedger& ledger,
                 const Eigen::MatrixXd& knot_design, const spatial::KrigingProjector& proj) {
  double lp = spatial::mvn_logpdf(block.knot_values, knot_design * block.alpha, proj.knot_chol);
  lp += ledger.intercept_prior(block.kind).logpdf(block.alpha(0));
  for (Eigen::Index j = 1; j < block.alpha.size(); ++j) lp += ledger.slope.logpdf(block.alpha(j));
  lp += ledger.log_sill2.logpdf(std::log(block.matern.sill2));
  lp += ledger.log_nugget2.logpdf(std::log(block.matern.nugget2));
  lp += ledger.log_combination_mass();
  return lp;
}

double log_prior(const SurfaceBlock& block, const PriorLedger& ledger, const ModelContext& ctx) {
  return log_prior(block, ledger, ctx.knot_design(), ctx.projector(block.matern));
}

double log_posterior_gpd(const ModelState& state, const ModelContext& ctx,
                         const PriorLedger& ledger) {
  const double ll = log_likelihood_gpd(state, ctx);
  if (ll == kNegInf) return kNegInf;
  return ll + log_prior(state.phi, ledger, ctx) + log_prior(state.xi, ledger, ctx);
}

double log_posterior_binomial(const ModelState& state, const ModelContext& ctx,
                              const PriorLedger& ledger) {
  return log_likelihood_binomial(state, ctx) + log_prior(state.zeta, ledger, ctx);
}

}  // namespace spext::model
