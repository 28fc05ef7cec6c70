#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "spext/error.hpp"
#include "spext/mcmc.hpp"
#include "spext/synth.hpp"
#include "support.hpp"

using namespace spext;

TEST_SUITE("synth") {

TEST_CASE("lattice grid") {
  const auto g = synth::lattice_grid(15, 15, 0.25, 3);
  CHECK(g.size() == 225);
  CHECK(g.knot_count() == 25);
  for (const auto& s : g.sites()) CHECK(s.elevation >= 0.0);
  CHECK(g.sites()[16].lon == 0.25);
  CHECK(g.sites()[16].lat == 0.25);
  CHECK_THROWS_AS(synth::lattice_grid(0, 3, 1.0, 1), Error);
}

TEST_CASE("gp surface in the zero-variance limit") {
  const auto g = synth::lattice_grid(4, 4, 1.0, 1);
  const auto X = scale_covariates(g.sites());
  const Eigen::Vector4d alpha(0.5, -0.2, 0.1, 0.3);
  const auto s = synth::sample_gp_surface(g, X, alpha, {Eigen::Matrix2d::Identity(), 0.5, 1e-30, 0.0}, 1);
  CHECK((s - X.rows * alpha).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gp surface moments") {
  std::vector<Site> sites;
  for (int i = 0; i < 6; ++i) sites.push_back({i, 0.2 * (i % 3), 0.2 * (i / 3), 10.0 + i * i});
  const Grid g(sites);
  const auto X = scale_covariates(sites);
  const Eigen::Vector4d alpha(1.0, 0.5, -0.5, 0.2);
  const spatial::MaternParams p{Eigen::Matrix2d::Identity(), 2.5, 0.8, 0.05};
  const Eigen::MatrixXd cov = spatial::build_cov_matrix(sites, sites, p, true);
  const Eigen::VectorXd mu = X.rows * alpha;

  const int reps = 5000;
  Eigen::MatrixXd draws(reps, 6);
  for (int r = 0; r < reps; ++r)
    draws.row(r) = synth::sample_gp_surface(g, X, alpha, p, mcmc::derive_seed(77, static_cast<std::uint64_t>(r))).transpose();
  const Eigen::VectorXd mean = draws.colwise().mean().transpose();
  for (Eigen::Index i = 0; i < 6; ++i) {
    // first 2000 replicates against 4 sd / sqrt(2000)
    const double m2000 = draws.col(i).head(2000).mean();
    CHECK(std::abs(m2000 - mu(i)) <= 4.0 * std::sqrt(cov(i, i)) / std::sqrt(2000.0));
  }
  const Eigen::MatrixXd centred = draws.rowwise() - mean.transpose();
  const Eigen::MatrixXd emp = centred.transpose() * centred / (reps - 1.0);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) CHECK(std::abs(emp(i, j) - cov(i, j)) <= 0.1 * cov(i, j));

  CHECK(synth::sample_gp_surface(g, X, alpha, p, 5) == synth::sample_gp_surface(g, X, alpha, p, 5));
  CHECK_THROWS_AS(synth::sample_gp_surface(g, X, Eigen::Vector2d::Zero(), p, 5), Error);
}

TEST_CASE("exceedance generation") {
  const auto g = synth::lattice_grid(5, 5, 0.5, 2);
  const auto ledger = model::PriorLedger::standard();
  auto truth = synth::sample_truth(g, synth::default_truth_spec(), ledger, 9);
  REQUIRE(truth.sigma.size() == 25);
  CHECK(truth.state.phi.knot_values.size() == static_cast<Eigen::Index>(g.knot_count()));
  CHECK((truth.sigma.array() > 0.0).all());

  SUBCASE("zero probability gives no clusters") {
    truth.zeta.setZero();
    const auto d = synth::generate_exceedance_data(truth, g, 5000, 1);
    for (const auto& s : d.sites) CHECK(s.clusters == 0);
  }
  SUBCASE("exponential excesses have mean sigma") {
    truth.xi.setZero();
    truth.zeta.setConstant(0.2);
    const auto d = synth::generate_exceedance_data(truth, g, 5000, 2);
    for (std::size_t i = 0; i < d.sites.size(); ++i) {
      const auto& s = d.sites[i];
      double mean = 0.0;
      for (double z : s.excesses) mean += z / static_cast<double>(s.clusters);
      const double sigma = truth.sigma(static_cast<Eigen::Index>(i));
      CHECK(std::abs(mean - sigma) <= 4.0 * sigma / std::sqrt(static_cast<double>(s.clusters)));
      CHECK(s.clusters == s.excesses.size());
      CHECK(s.trials == 5000);
    }
  }
  SUBCASE("cluster rates match zeta") {
    const int reps = 200;
    std::vector<double> rate(25, 0.0);
    for (int r = 0; r < reps; ++r) {
      const auto d = synth::generate_exceedance_data(truth, g, 10957, 1000 + r);
      for (std::size_t i = 0; i < 25; ++i) rate[i] += static_cast<double>(d.sites[i].clusters) / (10957.0 * reps);
    }
    for (std::size_t i = 0; i < 25; ++i) {
      const double z = truth.zeta(static_cast<Eigen::Index>(i));
      CHECK(std::abs(rate[i] - z) <= 4.0 * std::sqrt(z * (1 - z) / (10957.0 * reps)));
    }
  }
  SUBCASE("determinism and excess support") {
    const auto a = synth::generate_exceedance_data(truth, g, 10957, 3);
    const auto b = synth::generate_exceedance_data(truth, g, 10957, 3);
    for (std::size_t i = 0; i < a.sites.size(); ++i) {
      CHECK(a.sites[i].excesses == b.sites[i].excesses);
      for (double z : a.sites[i].excesses) {
        CHECK(z > 0.0);
        const double xi = truth.xi(static_cast<Eigen::Index>(i));
        if (xi < 0) CHECK(z <= -truth.sigma(static_cast<Eigen::Index>(i)) / xi);
      }
    }
  }
}

TEST_CASE("default truth regime") {
  const auto g = synth::lattice_grid(15, 15, 0.25, 3);
  const auto ledger = model::PriorLedger::standard();
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto truth = synth::sample_truth(g, synth::default_truth_spec(), ledger, seed);
    total += truth.zeta.mean() * 10957.0;
    CHECK(truth.zeta.minCoeff() > 0.001);
    CHECK(truth.zeta.maxCoeff() < 0.02);
  }
  // roughly 40 excesses per site
  CHECK(total / 5.0 > 25.0);
  CHECK(total / 5.0 < 70.0);
}

TEST_CASE("truth json") {
  const auto g = synth::lattice_grid(3, 3, 1.0, 2);
  const auto ledger = model::PriorLedger::standard();
  const auto truth = synth::sample_truth(g, synth::default_truth_spec(), ledger, 4);
  const auto doc = nlohmann::json::parse(synth::truth_to_json(truth, g, "# x"));
  CHECK(doc["seed"] == 4);
  CHECK(doc["sites"].size() == 9);
  CHECK(doc["zeta"]["alpha"][0].get<double>() == -5.4);
  CHECK(doc["sites"][3]["sigma"].get<double>() == truth.sigma(3));
}

TEST_CASE("sinusoid series") {
  const auto s = synth::sinusoid_series(7, parse_date("2001-01-01"), 730, 14.0, 6.0, 0.0, 1);
  CHECK(s.size() == 730);
  CHECK(s.site_id == 7);
  // coldest near mid-January, warmest near mid-July
  CHECK(s.values[15] == doctest::Approx(8.0));
  CHECK(*std::max_element(s.values.begin(), s.values.end()) <= 20.0);
  const auto n1 = synth::sinusoid_series(7, parse_date("2001-01-01"), 100, 14.0, 6.0, 2.0, 3);
  const auto n2 = synth::sinusoid_series(7, parse_date("2001-01-01"), 100, 14.0, 6.0, 2.0, 3);
  CHECK(n1.values == n2.values);
}

}
