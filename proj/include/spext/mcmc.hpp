#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spext/error.hpp"
#include "spext/hier_model.hpp"

namespace spext::mcmc {

enum class KnotUpdate {
  kBlock,       // one joint proposal per knot vector, covariance learned in burn-in
  kSingleSite,  // one proposal per knot value, cycled within a sweep
};

struct SamplerConfig {
  std::size_t n_chains = 3;
  std::size_t n_iter = 50'000;
  std::size_t burn_in = 10'000;
  std::size_t thin = 10;
  std::uint64_t seed = 20190101;
  std::size_t adapt_window = 100;
  // Initial random-walk sds per parameter group.
  double alpha_sd = 0.05;
  double knot_sd = 0.05;
  double hyper_sd = 0.3;
  KnotUpdate knot_update = KnotUpdate::kBlock;
  // Learn a full proposal covariance for multi-dimensional groups during burn-in.
  bool adapt_covariance = true;
  // Companion moves along the mean/residual and sill/knot ridges.
  bool reparam_moves = true;
  std::size_t threads = 1;

  std::size_t retained_per_chain() const { return (n_iter - burn_in) / thin; }
};

void validate(const SamplerConfig& cfg);

// A block of the flattened state updated together.
struct GroupSpec {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 1;
  bool discrete = false;       // a single index over `cardinality` values
  std::size_t cardinality = 0;
  double initial_sd = 0.1;
  // Proposal drawn by Target::propose instead of the engine's random walk.
  bool custom = false;
  // Explicit coordinates for a non-contiguous group (overrides offset; size
  // must match).
  std::vector<std::size_t> coords;
  // Coordinates the target may rewrite when evaluating this group (a
  // deterministic companion move); empty means the group's own coordinates.
  std::vector<std::size_t> touch;
};

// The group's coordinates in the flat state.
std::vector<std::size_t> group_coords(const GroupSpec& g);

struct Evaluation {
  double log_density = 0.0;
  // log |dx'/dx| of a companion rewrite, or log q(x|x') - log q(x'|x) for an
  // asymmetric custom proposal; enters the acceptance ratio only.
  double log_jacobian = 0.0;
};

// Log-density over a flat parameter vector, evaluated one group at a time so
// implementations can cache everything the group does not touch.
class Target {
 public:
  virtual ~Target() = default;

  virtual const std::vector<GroupSpec>& groups() const = 0;
  virtual std::size_t dimension() const = 0;
  // Full evaluation; x becomes the current state.
  virtual double initialize(std::span<const double> x) = 0;
  // Candidate differs from the current state only inside `group`; the target
  // may rewrite the group's touch range in x.
  virtual Evaluation evaluate(std::span<double> x, std::size_t group) = 0;
  // The last evaluated candidate becomes the current state.
  virtual void accept(std::size_t group) = 0;
  // Draws a candidate for a custom group in place; `scale` is the group's
  // adapted step size.
  virtual void propose(std::span<double> x, std::size_t group, double scale, std::mt19937_64& rng) {
    (void)x, (void)group, (void)scale, (void)rng;
    fail_validation("target has no custom proposal");
  }
};

struct GroupStats {
  std::size_t proposed = 0;
  std::size_t accepted = 0;

  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct ChainRun {
  Eigen::MatrixXd samples;       // retained x dimension
  Eigen::VectorXd log_density;   // per retained sample
  std::vector<GroupStats> stats;  // post burn-in acceptance per group
  std::vector<double> final_scales;
};

struct ChainSchedule {
  std::size_t n_iter = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::size_t adapt_window = 100;
  bool adapt_covariance = true;
};

// Random-walk Metropolis-Hastings over the target's groups in fixed order.
// Continuous groups use Gaussian proposals; discrete groups propose a
// uniformly chosen different index. Deterministic for a given seed.
ChainRun run_chain(Target& target, std::vector<double> x0, const ChainSchedule& schedule,
                   std::uint64_t seed);

// One adaptation step: sds outside the acceptance band [0.2, 0.5] are scaled
// by exp(-0.1) (too few accepted) or exp(+0.1) (too many).
std::vector<double> adapt_proposals(std::span<const double> acceptance,
                                    std::span<const double> sds);

// Derives an independent 64-bit stream seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

// Retained draws from all chains of both hierarchies, paired by row.
struct Trace {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  // retained x names
  std::vector<std::string> group_names;
  std::vector<std::vector<GroupStats>> acceptance;  // per chain, per group
  SamplerConfig config;
  std::string data_fingerprint;
  std::vector<std::size_t> knot_indices;
  std::size_t design_cols = 4;

  std::size_t retained() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().rows()); }
  std::size_t column(const std::string& name) const;  // throws if absent
  std::vector<Eigen::VectorXd> series(const std::string& name) const;
  // Rebuilds the model state stored in one row.
  model::ModelState state(std::size_t chain, std::size_t row, const model::PriorLedger& ledger) const;
};

// Flattened scalar names for one block, e.g. "phi.alpha0", "phi.knot3",
// "phi.log_sill2", "phi.log_nugget2", "phi.cov_index".
std::vector<std::string> block_names(model::SurfaceKind kind, std::size_t design_cols,
                                     std::size_t knots);

std::string fingerprint(const model::ModelContext& ctx);

// Log posterior of the GPD (phi, xi) or binomial (zeta) hierarchy as the
// sampler computes it; agrees with model::log_posterior_* to rounding.
double sampler_log_posterior(const model::ModelContext& ctx, const model::PriorLedger& ledger,
                             const model::ModelState& state, bool gpd);

// Runs both hierarchies for every chain.
Trace run_chains(const model::ModelContext& ctx, const model::PriorLedger& ledger,
                 const SamplerConfig& cfg);

struct RhatResult {
  double rhat = 0.0;
  bool degenerate = false;  // zero within-chain variance
};

RhatResult gelman_rubin(const std::vector<Eigen::VectorXd>& chains);
RhatResult gelman_rubin(const Trace& trace, const std::string& name);

inline constexpr double kRhatThreshold = 1.2;

struct ScalarSummary {
  std::string name;
  double mean = 0.0;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  RhatResult rhat;
  bool discrete = false;
};

struct DiagnosticsReport {
  std::vector<ScalarSummary> scalars;
  std::map<std::string, double> acceptance;  // pooled over chains
  bool converged = false;  // every continuous scalar has R-hat < 1.2
  double max_rhat = 0.0;
};

DiagnosticsReport diagnostics_report(const Trace& trace);

// Type-7 quantile of an unsorted sample.
double quantile(std::vector<double> values, double p);

// One CSV per chain ("<prefix>_chain<k>.csv") plus "<prefix>.json".
void write_trace(const std::string& prefix, const Trace& trace, const std::string& provenance,
                 const std::optional<DiagnosticsReport>& report);
Trace read_trace(const std::string& prefix);

}  // namespace spext::mcmc
