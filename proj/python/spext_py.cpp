#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spext/error.hpp"
#include "spext/evt.hpp"
#include "spext/hier_model.hpp"
#include "spext/mcmc.hpp"
#include "spext/posterior.hpp"
#include "spext/preprocess.hpp"
#include "spext/spatial.hpp"
#include "spext/synth.hpp"

namespace py = pybind11;
using namespace spext;

namespace {

DailySeries make_series(long site_id, const std::vector<std::string>& dates, const std::vector<double>& values) {
  if (dates.size() != values.size()) fail_validation("dates and values differ in length");
  DailySeries s;
  s.site_id = site_id;
  for (const auto& d : dates) s.dates.push_back(parse_date(d));
  s.values = values;
  validate(s);
  return s;
}

py::dict exceedance_dict(const SiteExceedances& e) {
  py::dict d;
  d["site_id"] = e.site_id;
  d["u"] = e.u;
  d["excesses"] = e.excesses;
  d["clusters"] = e.clusters;
  d["trials"] = e.trials;
  d["npy"] = e.npy;
  return d;
}

}  // namespace

PYBIND11_MODULE(_spext, m) {
  m.doc() = "Spatial extremes: GPD tools, Matérn kriging and the hierarchical sampler";
  py::register_exception<Error>(m, "SpextError", PyExc_ValueError);

  py::class_<evt::GpdParams>(m, "GpdParams")
      .def(py::init<double, double, double>(), py::arg("u") = 0.0, py::arg("sigma") = 1.0, py::arg("xi") = 0.0)
      .def_readwrite("u", &evt::GpdParams::u)
      .def_readwrite("sigma", &evt::GpdParams::sigma)
      .def_readwrite("xi", &evt::GpdParams::xi);

  m.def("gpd_logpdf", &evt::gpd_logpdf, py::arg("excess"), py::arg("params"));
  m.def("gpd_cdf", &evt::gpd_cdf, py::arg("excess"), py::arg("params"));
  m.def("gpd_quantile", &evt::gpd_quantile, py::arg("prob"), py::arg("params"));
  m.def("conditional_exceedance", &evt::conditional_exceedance, py::arg("level"), py::arg("params"));
  m.def(
      "return_level",
      [](double years, double npy, double zeta, const evt::GpdParams& p) {
        bool clamped = false;
        const double z = evt::return_level({years, npy, zeta}, p, &clamped);
        return py::make_tuple(z, clamped);
      },
      py::arg("years"), py::arg("npy"), py::arg("zeta"), py::arg("params"),
      "N-year return level and whether it was clamped to the threshold.");

  m.def("matern_correlation", &spatial::matern_correlation, py::arg("h"), py::arg("nu"));
  m.def(
      "matern_cov",
      [](const Eigen::Vector2d& d, const Eigen::Matrix2d& beta, double nu, double sill2, double nugget2) {
        return spatial::matern_cov(d, {beta, nu, sill2, nugget2});
      },
      py::arg("d"), py::arg("beta"), py::arg("nu"), py::arg("sill2") = 1.0, py::arg("nugget2") = 0.0);
  m.def(
      "effective_range",
      [](const Eigen::Matrix2d& beta, double nu, const Eigen::Vector2d& direction) {
        return spatial::effective_range({beta, nu, 1.0, 0.0}, direction);
      },
      py::arg("beta"), py::arg("nu"), py::arg("direction"));

  m.def("site_threshold", [](const std::vector<double>& v, double q) { return site_threshold(v, q); },
        py::arg("values"), py::arg("q"));
  m.def(
      "decluster",
      [](long site_id, const std::vector<std::string>& dates, const std::vector<double>& values, double u,
         double npy) { return exceedance_dict(decluster(make_series(site_id, dates, values), u, npy)); },
      py::arg("site_id"), py::arg("dates"), py::arg("values"), py::arg("u"), py::arg("npy") = 365.25);
  m.def(
      "climatology",
      [](long site_id, const std::vector<std::string>& dates, const std::vector<double>& values) {
        const auto c = compute_climatology(make_series(site_id, dates, values));
        return std::vector<double>(c.curve.begin(), c.curve.end());
      },
      py::arg("site_id"), py::arg("dates"), py::arg("values"), "366-entry calendar-day climatology.");
  m.def("verify_correlation",
        [](const std::vector<double>& a, const std::vector<double>& b) { return verify_correlation(a, b); });
  m.def("density_overlap",
        [](const std::vector<double>& a, const std::vector<double>& b) { return density_overlap(a, b); });
  m.def("empirical_return_periods", &posterior::empirical_return_periods, py::arg("sorted_values"),
        py::arg("npy"), py::arg("total_count") = 0);

  m.def("beta_prior_set", &model::build_beta_prior_set);
  m.def("inverse_logit", &model::inverse_logit);
  m.def(
      "gelman_rubin",
      [](const std::vector<Eigen::VectorXd>& chains) {
        const auto r = mcmc::gelman_rubin(chains);
        return py::make_tuple(r.rhat, r.degenerate);
      },
      py::arg("chains"));

  m.def(
      "synthetic_dataset",
      [](std::size_t nx, std::size_t ny, double spacing, std::size_t stride, std::uint64_t seed) {
        const auto grid = synth::lattice_grid(nx, ny, spacing, stride);
        const auto ledger = model::PriorLedger::standard();
        const auto spec = synth::default_truth_spec();
        const auto truth = synth::sample_truth(grid, spec, ledger, seed);
        const auto data =
            synth::generate_exceedance_data(truth, grid, spec.trials_per_site, mcmc::derive_seed(seed, 4), spec.npy);
        py::list sites;
        for (const auto& e : data.sites) sites.append(exceedance_dict(e));
        py::dict out;
        out["sites"] = sites;
        out["knot_indices"] = grid.knot_indices();
        out["sigma"] = truth.sigma;
        out["xi"] = truth.xi;
        out["zeta"] = truth.zeta;
        return out;
      },
      py::arg("nx") = 15, py::arg("ny") = 15, py::arg("spacing") = 0.25, py::arg("knot_stride") = 3,
      py::arg("seed") = 1, "Synthetic lattice exceedance data with its true per-site parameters.");

  m.def(
      "fit_synthetic",
      [](std::size_t nx, std::size_t ny, double spacing, std::size_t stride, std::uint64_t seed, std::size_t n_iter,
         std::size_t burn_in, std::size_t thin, std::size_t n_chains) {
        const auto grid = synth::lattice_grid(nx, ny, spacing, stride);
        const auto ledger = model::PriorLedger::standard();
        const auto spec = synth::default_truth_spec();
        const auto truth = synth::sample_truth(grid, spec, ledger, seed);
        const auto data = synth::generate_exceedance_data(truth, grid, spec.trials_per_site, mcmc::derive_seed(seed, 4));
        const model::ModelContext ctx(grid, data);
        mcmc::SamplerConfig cfg;
        cfg.n_iter = n_iter;
        cfg.burn_in = burn_in;
        cfg.thin = thin;
        cfg.n_chains = n_chains;
        cfg.seed = seed;
        mcmc::validate(cfg);
        mcmc::Trace trace;
        {
          py::gil_scoped_release release;
          trace = mcmc::run_chains(ctx, ledger, cfg);
        }
        const auto rep = mcmc::diagnostics_report(trace);
        py::dict out;
        out["names"] = trace.names;
        out["chains"] = trace.chains;
        out["converged"] = rep.converged;
        out["max_rhat"] = rep.max_rhat;
        return out;
      },
      py::arg("nx") = 6, py::arg("ny") = 6, py::arg("spacing") = 0.25, py::arg("knot_stride") = 2,
      py::arg("seed") = 1, py::arg("n_iter") = 4000, py::arg("burn_in") = 2000, py::arg("thin") = 10,
      py::arg("n_chains") = 3);
}
