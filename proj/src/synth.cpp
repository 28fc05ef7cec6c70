#include "spext/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"
#include "spext/csv.hpp"
#include "spext/error.hpp"
#include "spext/evt.hpp"
#include "spext/mcmc.hpp"

namespace spext::synth {

Eigen::VectorXd sample_gp_surface(const Grid& grid, const DesignMatrix& X,
                                  const Eigen::VectorXd& alpha, const spatial::MaternParams& p,
                                  std::uint64_t seed) {
  if (X.rows.rows() != static_cast<Eigen::Index>(grid.size()) || alpha.size() != X.cols())
    fail_validation("sample_gp_surface: dimension mismatch");
  const Eigen::MatrixXd cov = spatial::build_cov_matrix(grid.sites(), grid.sites(), p, true);
  const auto chol = spatial::factorize(cov, p);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(cov.rows());
  for (auto& v : z) v = normal(rng);
  return X.rows * alpha + chol.matrixL() * z;
}

Grid lattice_grid(std::size_t nx, std::size_t ny, double spacing, std::size_t stride) {
  if (nx == 0 || ny == 0 || !(spacing > 0.0)) fail_validation("lattice_grid: empty lattice");
  std::vector<Site> sites;
  const double ex = spacing * static_cast<double>(nx - 1);
  const double ey = spacing * static_cast<double>(ny - 1);
  for (std::size_t r = 0; r < ny; ++r) {
    for (std::size_t c = 0; c < nx; ++c) {
      const double x = spacing * static_cast<double>(c);
      const double y = spacing * static_cast<double>(r);
      const double fx = ex > 0.0 ? x / ex : 0.0;
      const double fy = ey > 0.0 ? y / ey : 0.0;
      // Coast on the east side, rising inland with a gentle ridge.
      const double elev = 5.0 + 150.0 * (1.0 - fx) * (1.0 - fx) +
                          40.0 * std::sin(std::numbers::pi * fy) * (1.0 - fx);
      sites.push_back({static_cast<long>(r * nx + c), x, y, elev});
    }
  }
  Grid all(std::move(sites));
  return all.with_knots(select_subgrid(all, stride));
}

TruthSpec default_truth_spec() {
  TruthSpec s;
  const Eigen::Matrix2d beta = 10.0 * Eigen::Matrix2d::Identity();
  s.phi.alpha = Eigen::Vector4d(0.0, 0.05, -0.05, 0.1);
  s.phi.matern = {beta, 2.5, 0.02, 1e-6};
  s.xi.alpha = Eigen::Vector4d(-0.1, 0.0, 0.0, 0.0);
  s.xi.matern = {beta, 2.5, 0.002, 1e-7};
  s.zeta.alpha = Eigen::Vector4d(-5.4, 0.1, 0.0, 0.05);
  s.zeta.matern = {beta, 2.5, 0.02, 1e-6};
  return s;
}

TruthRecord sample_truth(const Grid& grid, const TruthSpec& spec, const model::PriorLedger& ledger,
                         std::uint64_t seed) {
  const auto X = scale_covariates(grid.sites());
  TruthRecord t;
  t.seed = seed;
  auto fill = [&](model::SurfaceKind kind, const SurfaceTruth& st, std::uint64_t stream) {
    auto& b = t.state.block(kind);
    b.kind = kind;
    b.alpha = st.alpha;
    b.matern = st.matern;
    b.combination = 0;
    for (std::size_t i = 0; i < ledger.combinations.size(); ++i)
      if (ledger.combinations[i].beta.isApprox(st.matern.beta) && ledger.combinations[i].nu == st.matern.nu)
        b.combination = i;
    const Eigen::VectorXd field =
        sample_gp_surface(grid, X, st.alpha, st.matern, mcmc::derive_seed(seed, stream));
    b.knot_values.resize(static_cast<Eigen::Index>(grid.knot_count()));
    for (std::size_t j = 0; j < grid.knot_count(); ++j)
      b.knot_values(static_cast<Eigen::Index>(j)) = field(static_cast<Eigen::Index>(grid.knot_indices()[j]));
    return field;
  };
  t.sigma = fill(model::SurfaceKind::kPhi, spec.phi, 1).array().exp();
  t.xi = fill(model::SurfaceKind::kXi, spec.xi, 2);
  t.zeta = fill(model::SurfaceKind::kZeta, spec.zeta, 3).unaryExpr(&model::inverse_logit);

  double lo = grid.sites().front().lon, hi = lo;
  for (const auto& s : grid.sites()) {
    lo = std::min(lo, s.lon);
    hi = std::max(hi, s.lon);
  }
  t.threshold.resize(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double f = hi > lo ? (grid.sites()[i].lon - lo) / (hi - lo) : 0.0;
    t.threshold(static_cast<Eigen::Index>(i)) = spec.threshold_base + spec.threshold_gradient * f;
  }
  return t;
}

ExceedanceSet generate_exceedance_data(const TruthRecord& truth, const Grid& grid,
                                       std::size_t m_per_site, std::uint64_t seed, double npy) {
  if (truth.sigma.size() != static_cast<Eigen::Index>(grid.size()))
    fail_validation("generate_exceedance_data: truth does not match grid");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform;
  ExceedanceSet set;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    SiteExceedances s;
    s.site_id = grid.sites()[i].id;
    s.u = truth.threshold(r);
    s.trials = m_per_site;
    s.npy = npy;
    const double zeta = std::clamp(truth.zeta(r), 0.0, 1.0);
    std::binomial_distribution<long> binom(static_cast<long>(m_per_site), zeta);
    const auto count = static_cast<std::size_t>(binom(rng));
    const evt::GpdParams p{s.u, truth.sigma(r), truth.xi(r)};
    while (s.excesses.size() < count) {
      const double z = evt::gpd_quantile(uniform(rng), p);
      if (z > 0.0) s.excesses.push_back(z);  // u = 0 exactly has probability ~0; redraw
    }
    s.clusters = s.raw_exceedances = count;
    set.sites.push_back(std::move(s));
  }
  return set;
}

DailySeries sinusoid_series(long site_id, Date start, std::size_t days, double mean,
                            double amplitude, double noise_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
  DailySeries s;
  s.site_id = site_id;
  for (std::size_t k = 0; k < days; ++k) {
    const Date d = start + std::chrono::days(static_cast<long>(k));
    const double phase = 2.0 * std::numbers::pi * (day_of_year_index(d) - 15.0) / 366.0;
    const double noise = noise_sd > 0.0 ? normal(rng) : 0.0;
    s.dates.push_back(d);
    s.values.push_back(mean - amplitude * std::cos(phase) + noise);
  }
  return s;
}

std::string truth_to_json(const TruthRecord& truth, const Grid& grid, const std::string& provenance) {
  nlohmann::ordered_json doc;
  if (!provenance.empty()) doc["provenance"] = provenance;
  doc["seed"] = truth.seed;
  for (auto kind : {model::SurfaceKind::kPhi, model::SurfaceKind::kXi, model::SurfaceKind::kZeta}) {
    const auto& b = truth.state.block(kind);
    nlohmann::ordered_json j;
    j["alpha"] = std::vector<double>(b.alpha.begin(), b.alpha.end());
    j["beta"] = {b.matern.beta(0, 0), b.matern.beta(0, 1), b.matern.beta(1, 1)};
    j["nu"] = b.matern.nu;
    j["sill2"] = b.matern.sill2;
    j["nugget2"] = b.matern.nugget2;
    j["knot_values"] = std::vector<double>(b.knot_values.begin(), b.knot_values.end());
    doc[std::string(model::surface_name(kind))] = std::move(j);
  }
  auto& sites = doc["sites"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    sites.push_back({{"site_id", grid.sites()[i].id},
                     {"u", truth.threshold(r)},
                     {"sigma", truth.sigma(r)},
                     {"xi", truth.xi(r)},
                     {"zeta", truth.zeta(r)}});
  }
  return doc.dump(1);
}

void write_truth_json(const std::string& path, const TruthRecord& truth, const Grid& grid,
                      const std::string& provenance) {
  auto out = csv::open_output(path);
  out << truth_to_json(truth, grid, provenance) << '\n';
}

}  // namespace spext::synth
