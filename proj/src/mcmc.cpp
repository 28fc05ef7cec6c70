#include "spext/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "spext/csv.hpp"
#include "spext/error.hpp"
#include "spext/hash.hpp"

namespace spext::mcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kBandLow = 0.2;
constexpr double kBandHigh = 0.5;
constexpr double kAdaptStep = 0.1;
constexpr std::size_t kInitRetries = 100;

// Streaming mean and covariance for one proposal group.
struct Welford {
  std::size_t n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;

  void add(const Eigen::VectorXd& x) {
    if (n == 0) {
      mean = Eigen::VectorXd::Zero(x.size());
      m2 = Eigen::MatrixXd::Zero(x.size(), x.size());
    }
    ++n;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean).transpose();
  }
  Eigen::MatrixXd covariance() const { return m2 / static_cast<double>(n - 1); }
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void validate(const SamplerConfig& cfg) {
  if (cfg.n_chains < 1) fail_validation("sampler: need at least one chain");
  if (cfg.burn_in >= cfg.n_iter) fail_validation("sampler: burn-in must be below the iteration count");
  if (cfg.thin < 1) fail_validation("sampler: thin must be >= 1");
  if (cfg.adapt_window < 1) fail_validation("sampler: adaptation window must be >= 1");
  if (cfg.retained_per_chain() < 1) fail_validation("sampler: no samples would be retained");
  if (!(cfg.alpha_sd >= 0.0 && cfg.knot_sd >= 0.0 && cfg.hyper_sd >= 0.0))
    fail_validation("sampler: proposal sds must be non-negative");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(master) ^ (a + 1)) ^ (b + 0x51ed270b));
}

std::vector<double> adapt_proposals(std::span<const double> acceptance,
                                    std::span<const double> sds) {
  if (acceptance.size() != sds.size()) fail_validation("adapt_proposals: size mismatch");
  std::vector<double> out(sds.begin(), sds.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (acceptance[i] < kBandLow)
      out[i] *= std::exp(-kAdaptStep);
    else if (acceptance[i] > kBandHigh)
      out[i] *= std::exp(kAdaptStep);
  }
  return out;
}

std::vector<std::size_t> group_coords(const GroupSpec& g) {
  if (!g.coords.empty()) return g.coords;
  std::vector<std::size_t> out(g.size);
  for (std::size_t k = 0; k < g.size; ++k) out[k] = g.offset + k;
  return out;
}

ChainRun run_chain(Target& target, std::vector<double> x, const ChainSchedule& schedule,
                   std::uint64_t seed) {
  if (schedule.burn_in >= schedule.n_iter || schedule.thin == 0)
    fail_validation("run_chain: invalid schedule");
  const auto& groups = target.groups();
  const std::size_t dim = target.dimension();
  if (x.size() != dim) fail_validation("run_chain: initial state has wrong dimension");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;

  double current = target.initialize(x);
  if (!std::isfinite(current)) fail_validation("run_chain: initial state has zero density");

  const std::size_t ng = groups.size();
  std::vector<double> scale(ng);
  std::vector<Eigen::MatrixXd> chol(ng);
  std::vector<bool> learned(ng, false);
  std::vector<Welford> moments(ng);
  std::vector<std::size_t> window_accepts(ng, 0), window_props(ng, 0);
  std::vector<std::vector<std::size_t>> coords(ng), touched(ng);
  for (std::size_t g = 0; g < ng; ++g) {
    coords[g] = group_coords(groups[g]);
    if (coords[g].size() != groups[g].size) fail_validation("run_chain: group '" + groups[g].name + "' size mismatch");
    for (auto c : coords[g])
      if (c >= dim) fail_validation("run_chain: group '" + groups[g].name + "' out of range");
    touched[g] = groups[g].touch.empty() ? coords[g] : groups[g].touch;
  }
  for (std::size_t g = 0; g < ng; ++g) {
    scale[g] = groups[g].initial_sd;
    if (!groups[g].discrete) chol[g] = Eigen::MatrixXd::Identity(groups[g].size, groups[g].size);
  }

  ChainRun run;
  const std::size_t retained = (schedule.n_iter - schedule.burn_in) / schedule.thin;
  run.samples.resize(static_cast<Eigen::Index>(retained), static_cast<Eigen::Index>(dim));
  run.log_density.resize(static_cast<Eigen::Index>(retained));
  run.stats.assign(ng, {});

  std::vector<double> cand = x;
  Eigen::VectorXd z;
  const std::size_t learn_from = schedule.burn_in / 4;
  std::size_t stored = 0;

  for (std::size_t it = 0; it < schedule.n_iter; ++it) {
    const bool burning = it < schedule.burn_in;
    for (std::size_t g = 0; g < ng; ++g) {
      const auto& spec = groups[g];
      if (spec.custom) {
        target.propose(cand, g, scale[g], rng);
      } else if (spec.discrete) {
        if (spec.cardinality < 2) continue;
        const auto cur = static_cast<std::size_t>(x[coords[g][0]]);
        auto pick = static_cast<std::size_t>(uniform(rng) * static_cast<double>(spec.cardinality - 1));
        pick = std::min(pick, spec.cardinality - 2);
        if (pick >= cur) ++pick;
        cand[coords[g][0]] = static_cast<double>(pick);
      } else {
        z.resize(static_cast<Eigen::Index>(spec.size));
        for (auto& v : z) v = normal(rng);
        Eigen::VectorXd step = chol[g].triangularView<Eigen::Lower>() * z;
        step *= scale[g];
        for (std::size_t k = 0; k < spec.size; ++k)
          cand[coords[g][k]] = x[coords[g][k]] + step(static_cast<Eigen::Index>(k));
      }
      const Evaluation ev = target.evaluate(cand, g);
      const double log_u = std::log(uniform(rng));
      const bool accept =
          std::isfinite(ev.log_density) && log_u < ev.log_density + ev.log_jacobian - current;
      if (accept) {
        target.accept(g);
        for (auto c : touched[g]) x[c] = cand[c];
        current = ev.log_density;
      } else {
        for (auto c : touched[g]) cand[c] = x[c];
      }
      if (burning) {
        ++window_props[g];
        window_accepts[g] += accept ? 1 : 0;
      } else {
        ++run.stats[g].proposed;
        run.stats[g].accepted += accept ? 1 : 0;
      }
    }

    if (burning) {
      if (schedule.adapt_covariance && it >= learn_from) {
        for (std::size_t g = 0; g < ng; ++g) {
          const auto& spec = groups[g];
          if (spec.discrete || spec.custom || spec.size < 2) continue;
          Eigen::VectorXd v(static_cast<Eigen::Index>(spec.size));
          for (std::size_t k = 0; k < spec.size; ++k) v(static_cast<Eigen::Index>(k)) = x[coords[g][k]];
          moments[g].add(v);
        }
      }
      if ((it + 1) % schedule.adapt_window == 0) {
        std::vector<double> rates, sds;
        for (std::size_t g = 0; g < ng; ++g) {
          rates.push_back(window_props[g] ? static_cast<double>(window_accepts[g]) / window_props[g] : 0.0);
          sds.push_back(scale[g]);
        }
        const auto adapted = adapt_proposals(rates, sds);
        for (std::size_t g = 0; g < ng; ++g) {
          if (!groups[g].discrete || groups[g].custom) scale[g] = adapted[g];
          window_accepts[g] = window_props[g] = 0;
        }
        if (schedule.adapt_covariance) {
          for (std::size_t g = 0; g < ng; ++g) {
            const auto& spec = groups[g];
            if (spec.discrete || spec.custom || spec.size < 2 || scale[g] == 0.0) continue;
            if (moments[g].n < std::max<std::size_t>(200, 20 * spec.size)) continue;
            Eigen::MatrixXd cov = moments[g].covariance();
            if (!(cov.diagonal().minCoeff() > 0.0)) continue;
            cov.diagonal() += 1e-10 * cov.diagonal().maxCoeff() * Eigen::VectorXd::Ones(cov.rows());
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() != Eigen::Success) continue;
            chol[g] = llt.matrixL();
            chol[g] *= 2.38 / std::sqrt(static_cast<double>(spec.size));
            if (!learned[g]) scale[g] = 1.0;
            learned[g] = true;
          }
        }
      }
    } else if ((it - schedule.burn_in + 1) % schedule.thin == 0) {
      const auto row = static_cast<Eigen::Index>(stored++);
      for (std::size_t k = 0; k < dim; ++k) run.samples(row, static_cast<Eigen::Index>(k)) = x[k];
      run.log_density(row) = current;
    }
  }
  run.final_scales = scale;
  return run;
}

// ---------------------------------------------------------------------------
// Hierarchy targets

namespace {

using model::SurfaceBlock;
using model::SurfaceKind;

struct BlockLayout {
  SurfaceKind kind;
  std::size_t offset;
  std::size_t p;  // design columns
  std::size_t k;  // knots

  std::size_t size() const { return p + k + 3; }
  std::size_t knots_at() const { return offset + p; }
  std::size_t sill_at() const { return offset + p + k; }
  std::size_t nugget_at() const { return offset + p + k + 1; }
  std::size_t cov_at() const { return offset + p + k + 2; }
};

// Knot correlation R = U diag(lambda) U' for one (beta, nu) choice, and the
// site-knot correlation rotated into the same basis. With rho = nugget/sill
// the knot covariance is sill (R + rho I) and the kriging projector is
// site_u diag(1 / (lambda + rho)) U', so sill and nugget moves need no
// refactorisation.
struct CorrelationBasis {
  Eigen::MatrixXd u;
  Eigen::VectorXd lambda;
  Eigen::MatrixXd site_u;
};

std::vector<CorrelationBasis> correlation_bases(const model::ModelContext& ctx,
                                                const model::PriorLedger& ledger) {
  std::vector<CorrelationBasis> out;
  for (const auto& c : ledger.combinations) {
    const spatial::MaternParams unit{c.beta, c.nu, 1.0, 0.0};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        spatial::build_cov_matrix(ctx.knot_knot(), unit, false));
    if (eig.info() != Eigen::Success) fail_validation("knot correlation eigendecomposition failed");
    CorrelationBasis b;
    b.u = eig.eigenvectors();
    b.lambda = eig.eigenvalues().cwiseMax(0.0);
    b.site_u = spatial::build_cov_matrix(ctx.site_knot(), unit, false) * b.u;
    out.push_back(std::move(b));
  }
  return out;
}

struct BlockCache {
  SurfaceKind kind = SurfaceKind::kPhi;
  Eigen::VectorXd alpha;
  Eigen::VectorXd coef;   // U' (knots - X* alpha)
  Eigen::VectorXd denom;  // lambda + rho
  double log_sill2 = 0.0;
  double log_nugget2 = 0.0;
  std::size_t comb = 0;
  Eigen::VectorXd sites;
  double log_prior = 0.0;
};

// Besides plain random-walk moves on the state there are companion moves
// along ridges of the posterior: kShift moves alpha and drags the knots with
// it, kHyperNc moves covariance hypers with the whitened residuals fixed,
// kScale shifts sill and nugget together and rescales only the residual
// components the data cannot see, and kPcn is an autoregressive knot
// proposal reversible with respect to the knot prior.
enum class Move { kPlain, kShift, kHyperNc, kScale, kPcn };

GroupSpec make_group(std::string name, std::size_t offset, std::size_t size, double sd) {
  GroupSpec g;
  g.name = std::move(name);
  g.offset = offset;
  g.size = size;
  g.initial_sd = sd;
  return g;
}

class HierarchyTarget final : public Target {
 public:
  HierarchyTarget(const model::ModelContext& ctx, const model::PriorLedger& ledger,
                  std::vector<SurfaceKind> kinds, const SamplerConfig& cfg)
      : ctx_(ctx), ledger_(ledger), bases_(correlation_bases(ctx, ledger)) {
    const std::size_t p = static_cast<std::size_t>(ctx.design().cols());
    const std::size_t k = ctx.grid().knot_count();
    std::size_t offset = 0;
    for (auto kind : kinds) {
      layouts_.push_back({kind, offset, p, k});
      offset += layouts_.back().size();
    }
    dim_ = offset;
    const std::size_t ncomb = ledger.combinations.size();
    const bool extra = cfg.reparam_moves;

    for (std::size_t b = 0; b < layouts_.size(); ++b) {
      const auto& lay = layouts_[b];
      const std::string name(model::surface_name(lay.kind));
      const auto knots_hyper = range(lay.knots_at(), k + 3);

      add_group(make_group(name + ".alpha", lay.offset, p, cfg.alpha_sd), {b}, Move::kPlain);
      if (extra) {
        auto g = make_group(name + ".alpha_shift", lay.offset, p, cfg.alpha_sd);
        g.touch = range(lay.offset, p + k);
        add_group(std::move(g), {b}, Move::kShift);
      }
      if (cfg.knot_update == KnotUpdate::kBlock) {
        add_group(make_group(name + ".knots", lay.knots_at(), k, cfg.knot_sd), {b}, Move::kPlain);
      } else {
        for (std::size_t j = 0; j < k; ++j)
          add_group(make_group(name + ".knot" + std::to_string(j), lay.knots_at() + j, 1, cfg.knot_sd),
                    {b}, Move::kPlain);
      }
      if (extra) {
        auto g = make_group(name + ".knots_pcn", lay.knots_at(), k, 0.1);
        g.custom = true;
        add_group(std::move(g), {b}, Move::kPcn);
      }
      add_group(make_group(name + ".sill_nugget", lay.sill_at(), 2, cfg.hyper_sd), {b}, Move::kPlain);
      if (extra) {
        auto g = make_group(name + ".sill_nugget_nc", lay.sill_at(), 2, cfg.hyper_sd);
        g.touch = knots_hyper;
        add_group(std::move(g), {b}, Move::kHyperNc);
        auto s = make_group(name + ".scale", lay.sill_at(), 2, cfg.hyper_sd);
        s.custom = true;
        s.touch = range(lay.knots_at(), k + 2);
        add_group(std::move(s), {b}, Move::kScale);
      }
      auto cov = make_group(name + ".cov", lay.cov_at(), 1, 0.0);
      cov.discrete = true;
      cov.cardinality = ncomb;
      add_group(cov, {b}, Move::kPlain);
      if (extra) {
        cov.name = name + ".cov_nc";
        cov.touch = knots_hyper;
        add_group(std::move(cov), {b}, Move::kHyperNc);
      }
    }

    // Site-wise GPD scale and shape are strongly dependent; a joint knot
    // move lets the learned proposal covariance pick that up.
    if (extra && layouts_.size() == 2) {
      auto g = make_group("gpd.knots_joint", 0, 2 * k, cfg.knot_sd);
      for (const auto& lay : layouts_)
        for (std::size_t j = 0; j < k; ++j) g.coords.push_back(lay.knots_at() + j);
      add_group(std::move(g), {0, 1}, Move::kPlain);
    }
    current_.resize(layouts_.size());
    candidate_.resize(layouts_.size());
    in_candidate_.assign(layouts_.size(), false);
  }

  const std::vector<GroupSpec>& groups() const override { return groups_; }
  std::size_t dimension() const override { return dim_; }

  double initialize(std::span<const double> x) override {
    std::fill(in_candidate_.begin(), in_candidate_.end(), false);
    for (std::size_t b = 0; b < layouts_.size(); ++b)
      if (!from_state(current_[b], layouts_[b], x)) return kNegInf;
    return total();
  }

  Evaluation evaluate(std::span<double> x, std::size_t group) override {
    const Move move = group_move_[group];
    std::fill(in_candidate_.begin(), in_candidate_.end(), false);
    double log_jac = 0.0;
    for (const auto b : group_blocks_[group]) {
      in_candidate_[b] = true;
      const auto& lay = layouts_[b];
      const auto& cur = current_[b];
      auto& cand = candidate_[b];
      switch (move) {
        case Move::kPlain:
        case Move::kPcn:
          if (!from_state(cand, lay, x)) return {kNegInf, 0.0};
          if (move == Move::kPcn) log_jac += cur.log_prior - cand.log_prior;
          break;
        case Move::kShift:
          cand = cur;
          cand.alpha = Eigen::Map<const Eigen::VectorXd>(x.data() + lay.offset, static_cast<Eigen::Index>(lay.p));
          if (!finish(cand)) return {kNegInf, 0.0};
          write_knots(cand, lay, x);
          break;
        case Move::kHyperNc: {
          // Whitened residuals coef / sqrt(sill * denom) are held fixed.
          cand.alpha = cur.alpha;
          if (!read_hypers(cand, lay, x)) return {kNegInf, 0.0};
          const Eigen::ArrayXd r = ((cand.log_sill2 - cur.log_sill2) + cand.denom.array().log() -
                                    cur.denom.array().log()) * 0.5;
          cand.coef = cur.coef.array() * r.exp();
          log_jac += r.sum();
          if (!finish(cand)) return {kNegInf, 0.0};
          write_knots(cand, lay, x);
          break;
        }
        case Move::kScale: {
          // rho is unchanged; component j is scaled by exp(delta w_j / 2)
          // with w_j = rho / (lambda_j + rho), ~1 where the nugget dominates.
          cand = cur;
          const double delta = x[lay.sill_at()] - cur.log_sill2;
          cand.log_sill2 = x[lay.sill_at()];
          cand.log_nugget2 = x[lay.nugget_at()];
          const double rho = std::exp(cur.log_nugget2 - cur.log_sill2);
          const Eigen::ArrayXd r = (0.5 * delta * rho) * cur.denom.array().inverse();
          cand.coef = cur.coef.array() * r.exp();
          log_jac += r.sum();
          if (!finish(cand)) return {kNegInf, 0.0};
          write_knots(cand, lay, x);
          break;
        }
      }
    }
    return {total(), log_jac};
  }

  void propose(std::span<double> x, std::size_t group, double scale, std::mt19937_64& rng) override {
    const auto b = group_blocks_[group].front();
    const auto& lay = layouts_[b];
    const auto& cur = current_[b];
    std::normal_distribution<double> normal;
    if (group_move_[group] == Move::kScale) {
      const double delta = scale * normal(rng);
      x[lay.sill_at()] = cur.log_sill2 + delta;
      x[lay.nugget_at()] = cur.log_nugget2 + delta;
      return;
    }
    // Crank-Nicolson step around the prior mean of the knots.
    const double beta = std::min(scale, 1.0);
    Eigen::VectorXd coef(static_cast<Eigen::Index>(lay.k));
    const double sill2 = std::exp(cur.log_sill2);
    for (Eigen::Index j = 0; j < coef.size(); ++j)
      coef(j) = std::sqrt(1.0 - beta * beta) * cur.coef(j) +
                beta * std::sqrt(sill2 * cur.denom(j)) * normal(rng);
    Eigen::Map<Eigen::VectorXd> knots(x.data() + lay.knots_at(), static_cast<Eigen::Index>(lay.k));
    knots = ctx_.knot_design() * cur.alpha + bases_[cur.comb].u * coef;
  }

  void accept(std::size_t group) override {
    for (const auto b : group_blocks_[group]) std::swap(current_[b], candidate_[b]);
    std::fill(in_candidate_.begin(), in_candidate_.end(), false);
  }

 private:
  static std::vector<std::size_t> range(std::size_t first, std::size_t n) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = first + i;
    return out;
  }

  void add_group(GroupSpec spec, std::vector<std::size_t> blocks, Move move) {
    groups_.push_back(std::move(spec));
    group_blocks_.push_back(std::move(blocks));
    group_move_.push_back(move);
  }

  bool read_hypers(BlockCache& out, const BlockLayout& lay, std::span<const double> x) const {
    out.kind = lay.kind;
    out.log_sill2 = x[lay.sill_at()];
    out.log_nugget2 = x[lay.nugget_at()];
    const double c = x[lay.cov_at()];
    if (!std::isfinite(out.log_sill2) || !std::isfinite(out.log_nugget2) || !(c >= 0.0) ||
        c >= static_cast<double>(bases_.size()))
      return false;
    out.comb = static_cast<std::size_t>(c);
    const double rho = std::exp(out.log_nugget2 - out.log_sill2);
    if (!(rho > 0.0) || !std::isfinite(rho)) return false;
    out.denom = bases_[out.comb].lambda.array() + rho;
    return true;
  }

  // Centred parametrisation: everything read from x.
  bool from_state(BlockCache& out, const BlockLayout& lay, std::span<const double> x) const {
    if (!read_hypers(out, lay, x)) return false;
    out.alpha = Eigen::Map<const Eigen::VectorXd>(x.data() + lay.offset, static_cast<Eigen::Index>(lay.p));
    const Eigen::Map<const Eigen::VectorXd> knots(x.data() + lay.knots_at(), static_cast<Eigen::Index>(lay.k));
    out.coef.noalias() = bases_[out.comb].u.transpose() * (knots - ctx_.knot_design() * out.alpha);
    return finish(out);
  }

  // Site values and log prior from alpha, coef and hypers.
  bool finish(BlockCache& c) const {
    const auto& basis = bases_[c.comb];
    const double sill2 = std::exp(c.log_sill2);
    const Eigen::ArrayXd var = sill2 * c.denom.array();
    c.sites.noalias() = ctx_.design().rows * c.alpha;
    c.sites.noalias() += basis.site_u * (c.coef.array() / c.denom.array()).matrix();
    const auto k = static_cast<double>(c.coef.size());
    double lp = -0.5 * (k * std::log(2.0 * std::numbers::pi) + var.log().sum() +
                        (c.coef.array().square() / var).sum());
    lp += ledger_.intercept_prior(c.kind).logpdf(c.alpha(0));
    for (Eigen::Index j = 1; j < c.alpha.size(); ++j) lp += ledger_.slope.logpdf(c.alpha(j));
    lp += ledger_.log_sill2.logpdf(c.log_sill2);
    lp += ledger_.log_nugget2.logpdf(c.log_nugget2);
    lp += ledger_.log_combination_mass();
    c.log_prior = lp;
    return std::isfinite(lp);
  }

  void write_knots(const BlockCache& c, const BlockLayout& lay, std::span<double> x) const {
    Eigen::Map<Eigen::VectorXd> knots(x.data() + lay.knots_at(), static_cast<Eigen::Index>(lay.k));
    knots.noalias() = ctx_.knot_design() * c.alpha;
    knots.noalias() += bases_[c.comb].u * c.coef;
  }

  // Log posterior with the flagged blocks taken from the candidate cache.
  double total() const {
    auto pick = [&](std::size_t b) -> const BlockCache& {
      return in_candidate_[b] ? candidate_[b] : current_[b];
    };
    double lp = 0.0;
    for (std::size_t b = 0; b < layouts_.size(); ++b) lp += pick(b).log_prior;
    double ll = 0.0;
    if (layouts_.size() == 2)
      ll = model::gpd_loglik_sites(pick(0).sites, pick(1).sites, ctx_.site_data());
    else
      ll = model::binomial_loglik_sites(pick(0).sites, ctx_.site_data());
    if (!std::isfinite(ll)) return kNegInf;
    return ll + lp;
  }

  const model::ModelContext& ctx_;
  const model::PriorLedger& ledger_;
  std::vector<CorrelationBasis> bases_;
  std::vector<BlockLayout> layouts_;
  std::vector<GroupSpec> groups_;
  std::vector<std::vector<std::size_t>> group_blocks_;
  std::vector<Move> group_move_;
  std::vector<BlockCache> current_, candidate_;
  std::vector<bool> in_candidate_;
  std::size_t dim_ = 0;
};

void encode_block(const SurfaceBlock& b, std::vector<double>& out) {
  for (auto v : b.alpha) out.push_back(v);
  for (auto v : b.knot_values) out.push_back(v);
  out.push_back(std::log(b.matern.sill2));
  out.push_back(std::log(b.matern.nugget2));
  out.push_back(static_cast<double>(b.combination));
}

struct HierarchyRun {
  ChainRun run;
  std::vector<std::string> group_names;
};

HierarchyRun run_hierarchy(const model::ModelContext& ctx, const model::PriorLedger& ledger,
                           const std::vector<SurfaceKind>& kinds, const SamplerConfig& cfg,
                           std::uint64_t seed) {
  HierarchyTarget target(ctx, ledger, kinds, cfg);
  std::vector<double> x0;
  for (auto kind : kinds) encode_block(model::initial_block(kind, ledger, ctx.knot_design()), x0);

  std::mt19937_64 init_rng(derive_seed(seed, 0xfeed));
  std::normal_distribution<double> jitter(0.0, 0.1);
  std::vector<double> start = x0;
  std::size_t attempt = 0;
  while (!std::isfinite(target.initialize(start))) {
    if (++attempt > kInitRetries) {
      std::string which;
      for (auto k : kinds) which += std::string(model::surface_name(k)) + " ";
      fail_validation("sampler initialisation failed: zero posterior density for hierarchy (" +
                      which + ") after 100 retries; check that excesses are positive and finite");
    }
    start = x0;
    for (const auto& g : target.groups())
      if (g.name.find(".knot") != std::string::npos && !g.custom)
        for (auto c : group_coords(g)) start[c] = x0[c] + jitter(init_rng);
  }

  ChainSchedule schedule{cfg.n_iter, cfg.burn_in, cfg.thin, cfg.adapt_window, cfg.adapt_covariance};
  HierarchyRun out;
  out.run = run_chain(target, start, schedule, seed);
  for (const auto& g : target.groups()) out.group_names.push_back(g.name);
  return out;
}

}  // namespace

double sampler_log_posterior(const model::ModelContext& ctx, const model::PriorLedger& ledger,
                             const model::ModelState& state, bool gpd) {
  const std::vector<SurfaceKind> kinds =
      gpd ? std::vector<SurfaceKind>{SurfaceKind::kPhi, SurfaceKind::kXi}
          : std::vector<SurfaceKind>{SurfaceKind::kZeta};
  SamplerConfig cfg;
  HierarchyTarget target(ctx, ledger, kinds, cfg);
  std::vector<double> x;
  for (auto k : kinds) encode_block(state.block(k), x);
  return target.initialize(x);
}

std::vector<std::string> block_names(SurfaceKind kind, std::size_t design_cols, std::size_t knots) {
  const std::string n(model::surface_name(kind));
  std::vector<std::string> out;
  for (std::size_t j = 0; j < design_cols; ++j) out.push_back(n + ".alpha" + std::to_string(j));
  for (std::size_t j = 0; j < knots; ++j) out.push_back(n + ".knot" + std::to_string(j));
  out.push_back(n + ".log_sill2");
  out.push_back(n + ".log_nugget2");
  out.push_back(n + ".cov_index");
  return out;
}

std::string fingerprint(const model::ModelContext& ctx) {
  Fnv1a h;
  for (const auto& s : ctx.grid().sites()) h.add(static_cast<std::uint64_t>(s.id)).add(s.lon).add(s.lat).add(s.elevation);
  for (auto k : ctx.grid().knot_indices()) h.add(static_cast<std::uint64_t>(k));
  for (const auto& d : ctx.site_data()) {
    h.add(d.u).add(static_cast<std::uint64_t>(d.clusters)).add(static_cast<std::uint64_t>(d.trials)).add(d.npy);
    for (double z : d.excesses) h.add(z);
  }
  return h.hex();
}

Trace run_chains(const model::ModelContext& ctx, const model::PriorLedger& ledger,
                 const SamplerConfig& cfg) {
  validate(cfg);
  bool any_excess = false;
  for (const auto& d : ctx.site_data()) any_excess = any_excess || !d.excesses.empty();
  if (!any_excess) fail_validation("run_chains: no site has any excess; the GPD hierarchy is undefined");

  const std::size_t p = static_cast<std::size_t>(ctx.design().cols());
  const std::size_t k = ctx.grid().knot_count();
  Trace trace;
  trace.config = cfg;
  trace.data_fingerprint = fingerprint(ctx);
  trace.knot_indices = ctx.grid().knot_indices();
  trace.design_cols = p;
  for (auto kind : {SurfaceKind::kPhi, SurfaceKind::kXi, SurfaceKind::kZeta}) {
    const auto names = block_names(kind, p, k);
    trace.names.insert(trace.names.end(), names.begin(), names.end());
  }
  trace.names.push_back("log_post_gpd");
  trace.names.push_back("log_post_binomial");

  std::vector<HierarchyRun> gpd(cfg.n_chains), binom(cfg.n_chains);
  std::vector<std::exception_ptr> errors(cfg.n_chains);
  auto work = [&](std::size_t c) {
    try {
      gpd[c] = run_hierarchy(ctx, ledger, {SurfaceKind::kPhi, SurfaceKind::kXi}, cfg,
                             derive_seed(cfg.seed, c, 0));
      binom[c] = run_hierarchy(ctx, ledger, {SurfaceKind::kZeta}, cfg, derive_seed(cfg.seed, c, 1));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, cfg.n_chains));
  for (std::size_t first = 0; first < cfg.n_chains; first += threads) {
    std::vector<std::thread> pool;
    for (std::size_t c = first; c < std::min(cfg.n_chains, first + threads); ++c) {
      if (threads == 1)
        work(c);
      else
        pool.emplace_back(work, c);
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t c = 0; c < cfg.n_chains; ++c) {
    const auto& a = gpd[c].run;
    const auto& b = binom[c].run;
    Eigen::MatrixXd rows(a.samples.rows(), static_cast<Eigen::Index>(trace.names.size()));
    rows << a.samples, b.samples, a.log_density, b.log_density;
    trace.chains.push_back(std::move(rows));
    std::vector<GroupStats> stats = a.stats;
    stats.insert(stats.end(), b.stats.begin(), b.stats.end());
    trace.acceptance.push_back(std::move(stats));
  }
  trace.group_names = gpd[0].group_names;
  trace.group_names.insert(trace.group_names.end(), binom[0].group_names.begin(),
                           binom[0].group_names.end());
  return trace;
}

std::size_t Trace::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) fail_validation("trace has no column '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<Eigen::VectorXd> Trace::series(const std::string& name) const {
  const auto c = static_cast<Eigen::Index>(column(name));
  std::vector<Eigen::VectorXd> out;
  for (const auto& ch : chains) out.emplace_back(ch.col(c));
  return out;
}

model::ModelState Trace::state(std::size_t chain, std::size_t row,
                               const model::PriorLedger& ledger) const {
  const auto& m = chains.at(chain);
  const auto r = static_cast<Eigen::Index>(row);
  const std::size_t k = knot_indices.size();
  model::ModelState s;
  std::size_t offset = 0;
  for (auto kind : {SurfaceKind::kPhi, SurfaceKind::kXi, SurfaceKind::kZeta}) {
    auto& b = s.block(kind);
    b.kind = kind;
    b.alpha.resize(static_cast<Eigen::Index>(design_cols));
    for (std::size_t j = 0; j < design_cols; ++j) b.alpha(static_cast<Eigen::Index>(j)) = m(r, static_cast<Eigen::Index>(offset + j));
    b.knot_values.resize(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j)
      b.knot_values(static_cast<Eigen::Index>(j)) = m(r, static_cast<Eigen::Index>(offset + design_cols + j));
    const auto base = static_cast<Eigen::Index>(offset + design_cols + k);
    b.matern.sill2 = std::exp(m(r, base));
    b.matern.nugget2 = std::exp(m(r, base + 1));
    b.set_combination(ledger, static_cast<std::size_t>(m(r, base + 2)));
    offset += design_cols + k + 3;
  }
  return s;
}

RhatResult gelman_rubin(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) fail_validation("gelman_rubin: need at least 2 chains");
  const auto n = chains.front().size();
  if (n < 10) fail_validation("gelman_rubin: need at least 10 retained samples per chain");
  for (const auto& c : chains)
    if (c.size() != n) fail_validation("gelman_rubin: chains differ in length");
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(chains.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = c.mean();
    means.push_back(mu);
    w += (c.array() - mu).square().sum() / (nd - 1.0);
  }
  w /= md;
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= md;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= nd / (md - 1.0);
  if (!(w > 0.0)) return {std::numeric_limits<double>::quiet_NaN(), true};
  return {std::sqrt(((nd - 1.0) / nd * w + b / nd) / w), false};
}

RhatResult gelman_rubin(const Trace& trace, const std::string& name) {
  return gelman_rubin(trace.series(name));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) fail_validation("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

DiagnosticsReport diagnostics_report(const Trace& trace) {
  if (trace.chains.size() < 2 || trace.retained() < 10)
    fail_validation("diagnostics: need at least 2 chains with 10 retained samples each");
  DiagnosticsReport report;
  report.converged = true;
  for (std::size_t c = 0; c < trace.names.size(); ++c) {
    ScalarSummary s;
    s.name = trace.names[c];
    s.discrete = s.name.ends_with(".cov_index");
    std::vector<double> pooled;
    std::vector<Eigen::VectorXd> per_chain;
    for (const auto& ch : trace.chains) {
      per_chain.emplace_back(ch.col(static_cast<Eigen::Index>(c)));
      pooled.insert(pooled.end(), per_chain.back().begin(), per_chain.back().end());
    }
    double sum = 0.0;
    for (double v : pooled) sum += v;
    s.mean = sum / static_cast<double>(pooled.size());
    s.median = quantile(pooled, 0.5);
    s.q025 = quantile(pooled, 0.025);
    s.q975 = quantile(pooled, 0.975);
    s.rhat = gelman_rubin(per_chain);
    if (!s.discrete) {
      if (s.rhat.degenerate || !(s.rhat.rhat < kRhatThreshold)) report.converged = false;
      if (!s.rhat.degenerate) report.max_rhat = std::max(report.max_rhat, s.rhat.rhat);
    }
    report.scalars.push_back(std::move(s));
  }
  for (std::size_t g = 0; g < trace.group_names.size(); ++g) {
    GroupStats total;
    for (const auto& chain : trace.acceptance) {
      total.proposed += chain[g].proposed;
      total.accepted += chain[g].accepted;
    }
    report.acceptance[trace.group_names[g]] = total.rate();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

nlohmann::ordered_json config_json(const SamplerConfig& c) {
  nlohmann::ordered_json j;
  j["n_chains"] = c.n_chains;
  j["n_iter"] = c.n_iter;
  j["burn_in"] = c.burn_in;
  j["thin"] = c.thin;
  j["seed"] = c.seed;
  j["adapt_window"] = c.adapt_window;
  j["alpha_sd"] = c.alpha_sd;
  j["knot_sd"] = c.knot_sd;
  j["hyper_sd"] = c.hyper_sd;
  j["knot_update"] = c.knot_update == KnotUpdate::kBlock ? "block" : "single";
  j["adapt_covariance"] = c.adapt_covariance;
  j["reparam_moves"] = c.reparam_moves;
  return j;
}

SamplerConfig config_from_json(const nlohmann::json& j) {
  SamplerConfig c;
  c.n_chains = j.at("n_chains").get<std::size_t>();
  c.n_iter = j.at("n_iter").get<std::size_t>();
  c.burn_in = j.at("burn_in").get<std::size_t>();
  c.thin = j.at("thin").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adapt_window = j.at("adapt_window").get<std::size_t>();
  c.alpha_sd = j.at("alpha_sd").get<double>();
  c.knot_sd = j.at("knot_sd").get<double>();
  c.hyper_sd = j.at("hyper_sd").get<double>();
  c.knot_update = j.at("knot_update").get<std::string>() == "block" ? KnotUpdate::kBlock : KnotUpdate::kSingleSite;
  c.adapt_covariance = j.at("adapt_covariance").get<bool>();
  c.reparam_moves = j.value("reparam_moves", true);
  return c;
}

std::string chain_path(const std::string& prefix, std::size_t c) {
  return prefix + "_chain" + std::to_string(c) + ".csv";
}

}  // namespace

void write_trace(const std::string& prefix, const Trace& trace, const std::string& provenance,
                 const std::optional<DiagnosticsReport>& report) {
  for (std::size_t c = 0; c < trace.chains.size(); ++c) {
    auto out = csv::open_output(chain_path(prefix, c));
    if (!provenance.empty()) out << provenance << '\n';
    for (std::size_t j = 0; j < trace.names.size(); ++j) out << (j ? "," : "") << trace.names[j];
    out << '\n';
    const auto& m = trace.chains[c];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << csv::format(m(r, j));
      out << '\n';
    }
  }

  nlohmann::ordered_json doc;
  if (!provenance.empty()) doc["provenance"] = provenance;
  doc["config"] = config_json(trace.config);
  doc["data_fingerprint"] = trace.data_fingerprint;
  doc["knot_indices"] = trace.knot_indices;
  doc["design_cols"] = trace.design_cols;
  doc["retained_per_chain"] = trace.retained();
  doc["names"] = trace.names;
  doc["groups"] = trace.group_names;
  auto& acc = doc["acceptance"] = nlohmann::ordered_json::array();
  for (const auto& chain : trace.acceptance) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& g : chain) arr.push_back({{"proposed", g.proposed}, {"accepted", g.accepted}});
    acc.push_back(std::move(arr));
  }
  if (report) {
    auto& rh = doc["rhat"] = nlohmann::ordered_json::object();
    for (const auto& s : report->scalars) {
      if (s.rhat.degenerate)
        rh[s.name] = nullptr;
      else
        rh[s.name] = s.rhat.rhat;
    }
    doc["converged"] = report->converged;
    doc["max_rhat"] = report->max_rhat;
  }
  auto out = csv::open_output(prefix + ".json");
  out << doc.dump(1) << '\n';
}

Trace read_trace(const std::string& prefix) {
  std::ifstream in(prefix + ".json");
  if (!in) fail_io("cannot open " + prefix + ".json");
  std::stringstream ss;
  ss << in.rdbuf();
  Trace trace;
  try {
    const auto doc = nlohmann::json::parse(ss.str());
    trace.config = config_from_json(doc.at("config"));
    trace.data_fingerprint = doc.at("data_fingerprint").get<std::string>();
    trace.knot_indices = doc.at("knot_indices").get<std::vector<std::size_t>>();
    trace.design_cols = doc.at("design_cols").get<std::size_t>();
    trace.names = doc.at("names").get<std::vector<std::string>>();
    trace.group_names = doc.at("groups").get<std::vector<std::string>>();
    for (const auto& chain : doc.at("acceptance")) {
      std::vector<GroupStats> stats;
      for (const auto& g : chain)
        stats.push_back({g.at("proposed").get<std::size_t>(), g.at("accepted").get<std::size_t>()});
      trace.acceptance.push_back(std::move(stats));
    }
  } catch (const nlohmann::json::exception& e) {
    fail_validation(prefix + ".json: malformed trace sidecar: " + e.what());
  }

  for (std::size_t c = 0; c < trace.config.n_chains; ++c) {
    csv::Reader r(chain_path(prefix, c));
    if (r.header() != trace.names) r.fail("column names do not match the sidecar");
    std::vector<std::vector<double>> rows;
    std::vector<std::string> f;
    while (r.next(f)) {
      std::vector<double> row;
      for (const auto& v : f) row.push_back(csv::to_double(r, v));
      rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(trace.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    trace.chains.push_back(std::move(m));
  }
  return trace;
}

}  // namespace spext::mcmc
