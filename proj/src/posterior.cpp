#include "spext/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "spext/csv.hpp"
#include "spext/error.hpp"
#include "spext/evt.hpp"

namespace spext::posterior {

QuantileBand summarize(std::vector<double> draws) {
  std::sort(draws.begin(), draws.end());
  return {mcmc::quantile(draws, 0.025), mcmc::quantile(draws, 0.5), mcmc::quantile(draws, 0.975)};
}

SiteDraws reconstruct(const mcmc::Trace& trace, const model::ModelContext& ctx,
                      const model::PriorLedger& ledger) {
  if (trace.knot_indices != ctx.grid().knot_indices())
    fail_validation("trace was fitted with a different knot set than the supplied grid");
  const Eigen::Index n = static_cast<Eigen::Index>(ctx.grid().size());
  const Eigen::Index total = static_cast<Eigen::Index>(trace.chains.size() * trace.retained());
  SiteDraws out{Eigen::MatrixXd(total, n), Eigen::MatrixXd(total, n), Eigen::MatrixXd(total, n)};
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < trace.chains.size(); ++c) {
    for (std::size_t r = 0; r < trace.retained(); ++r, ++row) {
      const auto state = trace.state(c, r, ledger);
      auto site_values = [&](const model::SurfaceBlock& b) {
        return model::surface_at_sites(b, ctx.design(), ctx.knot_design(), ctx.projector(b.matern));
      };
      out.sigma.row(row) = site_values(state.phi).array().exp().transpose();
      out.xi.row(row) = site_values(state.xi).transpose();
      out.zeta.row(row) = site_values(state.zeta).unaryExpr(&model::inverse_logit).transpose();
    }
  }
  return out;
}

ReturnLevelSurface return_level_surface(const SiteDraws& draws, const model::ModelContext& ctx,
                                        double years) {
  ReturnLevelSurface s;
  s.years = years;
  const auto& data = ctx.site_data();
  std::vector<double> levels(static_cast<std::size_t>(draws.draws()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < draws.draws(); ++d) {
      bool clamped = false;
      levels[static_cast<std::size_t>(d)] = evt::return_level(
          {years, data[i].npy, draws.zeta(d, col)},
          {data[i].u, draws.sigma(d, col), draws.xi(d, col)}, &clamped);
      s.clamped_draws += clamped ? 1 : 0;
    }
    s.site_ids.push_back(ctx.grid().sites()[i].id);
    s.bands.push_back(summarize(levels));
  }
  return s;
}

ReturnLevelSurface return_level_surface(const mcmc::Trace& trace, const model::ModelContext& ctx,
                                        const model::PriorLedger& ledger, double years) {
  return return_level_surface(reconstruct(trace, ctx, ledger), ctx, years);
}

std::vector<double> empirical_return_periods(const std::vector<double>& sorted_values, double npy,
                                             std::size_t total_count) {
  if (!(npy > 0.0)) fail_validation("empirical_return_periods: npy must be positive");
  const std::size_t n = sorted_values.size();
  const std::size_t total = total_count == 0 ? n : total_count;
  if (total < n) fail_validation("empirical_return_periods: total count below sample size");
  for (std::size_t i = 1; i < n; ++i)
    if (sorted_values[i] < sorted_values[i - 1])
      fail_validation("empirical_return_periods: values must be sorted ascending");
  std::vector<double> out;
  out.reserve(n);
  const double denom = static_cast<double>(total) + 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double rank = static_cast<double>(total - n + j + 1);
    out.push_back(1.0 / (1.0 - rank / denom) / npy);
  }
  return out;
}

std::vector<double> curve_years(const std::vector<double>& extra) {
  std::vector<double> out;
  for (int k = 0; k <= 30; ++k) out.push_back(std::pow(10.0, k / 10.0));
  for (double y : extra) {
    const bool present = std::any_of(out.begin(), out.end(),
                                     [&](double v) { return std::abs(v - y) <= 1e-9 * y; });
    if (!present) out.push_back(y);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<OverlayPoint> overlay_points(const SiteExceedances& ex, const std::string& era) {
  std::vector<double> sorted = ex.excesses;
  std::sort(sorted.begin(), sorted.end());
  const auto periods = empirical_return_periods(sorted, ex.npy, ex.trials);
  std::vector<OverlayPoint> out;
  for (std::size_t j = 0; j < sorted.size(); ++j) out.push_back({periods[j], ex.u + sorted[j], era});
  return out;
}

}  // namespace

SiteCurve site_curve(const SiteDraws& draws, const model::ModelContext& ctx, long site_id,
                     const std::optional<DailySeries>& recent_anomalies,
                     const std::vector<double>& years) {
  const std::size_t i = ctx.grid().find(site_id);
  if (i == ctx.grid().size()) fail_validation("unknown site id " + std::to_string(site_id));
  const auto& ex = ctx.site_data()[i];
  const auto col = static_cast<Eigen::Index>(i);

  SiteCurve curve;
  curve.site_id = site_id;
  curve.years = years;
  std::vector<double> levels(static_cast<std::size_t>(draws.draws()));
  for (double n_years : years) {
    for (Eigen::Index d = 0; d < draws.draws(); ++d)
      levels[static_cast<std::size_t>(d)] = evt::return_level(
          {n_years, ex.npy, draws.zeta(d, col)}, {ex.u, draws.sigma(d, col), draws.xi(d, col)});
    curve.bands.push_back(summarize(levels));
  }
  curve.overlay = overlay_points(ex, "model");
  if (recent_anomalies) {
    if (recent_anomalies->site_id != site_id)
      fail_validation("recent series belongs to site " + std::to_string(recent_anomalies->site_id));
    const auto recent = decluster(*recent_anomalies, ex.u, ex.npy);
    const auto pts = overlay_points(recent, "recent");
    curve.overlay.insert(curve.overlay.end(), pts.begin(), pts.end());
  }
  return curve;
}

std::vector<ZetaComparison> zeta_compare(const SiteDraws& draws, const model::ModelContext& ctx,
                                         const std::vector<long>& site_ids,
                                         const std::map<long, RecentCounts>& recent) {
  std::vector<ZetaComparison> out;
  for (long id : site_ids) {
    const std::size_t i = ctx.grid().find(id);
    if (i == ctx.grid().size()) fail_validation("unknown site id " + std::to_string(id));
    const auto it = recent.find(id);
    if (it == recent.end()) fail_validation("no recent counts for site " + std::to_string(id));
    const auto& rc = it->second;
    if (rc.trials == 0 || rc.clusters > rc.trials)
      fail_validation("site " + std::to_string(id) + ": recent counts need 0 <= M <= m, m > 0");

    ZetaComparison z;
    z.site_id = id;
    const auto col = draws.zeta.col(static_cast<Eigen::Index>(i));
    z.posterior = summarize(std::vector<double>(col.begin(), col.end()));
    const auto& ex = ctx.site_data()[i];
    z.model_rate = ex.trials ? static_cast<double>(ex.clusters) / static_cast<double>(ex.trials) : 0.0;
    z.recent_rate = static_cast<double>(rc.clusters) / static_cast<double>(rc.trials);
    if (z.recent_rate > z.posterior.q975)
      z.percent_above_upper = 100.0 * (z.recent_rate - z.posterior.q975) / z.posterior.q975;
    out.push_back(z);
  }
  return out;
}

std::string zeta_comparison_json(const std::vector<ZetaComparison>& rows,
                                 const std::string& provenance) {
  nlohmann::ordered_json doc;
  if (!provenance.empty()) doc["provenance"] = provenance;
  auto& arr = doc["sites"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["site_id"] = r.site_id;
    j["zeta_q025"] = r.posterior.q025;
    j["zeta_median"] = r.posterior.median;
    j["zeta_q975"] = r.posterior.q975;
    j["model_rate"] = r.model_rate;
    j["recent_rate"] = r.recent_rate;
    if (r.percent_above_upper)
      j["percent_above_upper"] = *r.percent_above_upper;
    else
      j["percent_above_upper"] = "within interval";
    arr.push_back(std::move(j));
  }
  return doc.dump(1);
}

void write_surface_csv(const std::string& path, const ReturnLevelSurface& surface,
                       const Grid& grid, const std::string& provenance) {
  auto out = csv::open_output(path);
  if (!provenance.empty()) out << provenance << '\n';
  out << "site_id,lon,lat,q025,median,q975\n";
  for (std::size_t i = 0; i < surface.site_ids.size(); ++i) {
    const auto& s = grid.sites()[grid.find(surface.site_ids[i])];
    const auto& b = surface.bands[i];
    out << s.id << ',' << csv::format(s.lon) << ',' << csv::format(s.lat) << ','
        << csv::format(b.q025) << ',' << csv::format(b.median) << ',' << csv::format(b.q975) << '\n';
  }
}

void write_curve_csv(const std::string& path, const SiteCurve& curve, const std::string& provenance) {
  auto out = csv::open_output(path);
  if (!provenance.empty()) out << provenance << '\n';
  out << "N_years,q025,median,q975\n";
  for (std::size_t k = 0; k < curve.years.size(); ++k)
    out << csv::format(curve.years[k]) << ',' << csv::format(curve.bands[k].q025) << ','
        << csv::format(curve.bands[k].median) << ',' << csv::format(curve.bands[k].q975) << '\n';
}

void write_overlay_csv(const std::string& path, const SiteCurve& curve,
                       const std::string& provenance) {
  auto out = csv::open_output(path);
  if (!provenance.empty()) out << provenance << '\n';
  out << "period_years,level,era\n";
  for (const auto& p : curve.overlay)
    out << csv::format(p.period_years) << ',' << csv::format(p.level) << ',' << p.era << '\n';
}

}  // namespace spext::posterior
