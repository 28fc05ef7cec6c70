#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spext/hier_model.hpp"
#include "spext/mcmc.hpp"
#include "spext/preprocess.hpp"

namespace spext::posterior {

struct QuantileBand {
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
};

QuantileBand summarize(std::vector<double> draws);

// Per-draw site parameters, draws pooled chain by chain (rows) x sites (cols).
struct SiteDraws {
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd xi;
  Eigen::MatrixXd zeta;

  Eigen::Index draws() const { return sigma.rows(); }
};

SiteDraws reconstruct(const mcmc::Trace& trace, const model::ModelContext& ctx,
                      const model::PriorLedger& ledger);

struct ReturnLevelSurface {
  double years = 0.0;
  std::vector<long> site_ids;
  std::vector<QuantileBand> bands;  // per site, degrees anomaly
  std::size_t clamped_draws = 0;    // draws where N * n_y * zeta < 1
};

ReturnLevelSurface return_level_surface(const SiteDraws& draws, const model::ModelContext& ctx,
                                        double years);
ReturnLevelSurface return_level_surface(const mcmc::Trace& trace, const model::ModelContext& ctx,
                                        const model::PriorLedger& ledger, double years);

// Plotting positions 1/(1 - i/(n+1)) / npy for ascending values. When the
// values are the top of a larger sample of `total_count` observations their
// ranks are taken within that sample; total_count = 0 means values.size().
std::vector<double> empirical_return_periods(const std::vector<double>& sorted_values, double npy,
                                             std::size_t total_count = 0);

struct OverlayPoint {
  double period_years = 0.0;
  double level = 0.0;  // u + excess
  std::string era;     // "model" or "recent"
};

struct SiteCurve {
  long site_id = 0;
  std::vector<double> years;
  std::vector<QuantileBand> bands;
  std::vector<OverlayPoint> overlay;
};

// Return periods: 10^(k/10) for k = 0..30 plus any extra years requested.
std::vector<double> curve_years(const std::vector<double>& extra = {20.0, 100.0});

// recent_anomalies, when given, must be anomalies against the model-period
// climatology; they are declustered at the site's model threshold.
SiteCurve site_curve(const SiteDraws& draws, const model::ModelContext& ctx, long site_id,
                     const std::optional<DailySeries>& recent_anomalies,
                     const std::vector<double>& years = curve_years());

struct RecentCounts {
  std::size_t clusters = 0;  // M
  std::size_t trials = 0;    // m
};

struct ZetaComparison {
  long site_id = 0;
  QuantileBand posterior;
  double model_rate = 0.0;
  double recent_rate = 0.0;
  // 100 * (recent - upper) / upper when the recent rate is above the band.
  std::optional<double> percent_above_upper;
};

std::vector<ZetaComparison> zeta_compare(const SiteDraws& draws, const model::ModelContext& ctx,
                                         const std::vector<long>& site_ids,
                                         const std::map<long, RecentCounts>& recent);

std::string zeta_comparison_json(const std::vector<ZetaComparison>& rows,
                                 const std::string& provenance = {});

void write_surface_csv(const std::string& path, const ReturnLevelSurface& surface,
                       const Grid& grid, const std::string& provenance = {});
void write_curve_csv(const std::string& path, const SiteCurve& curve,
                     const std::string& provenance = {});
void write_overlay_csv(const std::string& path, const SiteCurve& curve,
                       const std::string& provenance = {});

}  // namespace spext::posterior
