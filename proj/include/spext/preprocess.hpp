#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace spext {

using Date = std::chrono::sys_days;

Date parse_date(const std::string& iso);  // YYYY-MM-DD
std::string format_date(Date d);

// Position of a date in a 366-day (leap) calendar: Jan 1 -> 0, Feb 29 -> 59,
// Mar 1 -> 60, Dec 31 -> 365.
int day_of_year_index(Date d);

struct DailySeries {
  long site_id = 0;
  std::vector<Date> dates;  // strictly increasing
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  // Number of calendar days absent between the first and last date.
  std::size_t missing_days() const;
};

void validate(const DailySeries& s);

inline constexpr int kDaysInClimateYear = 366;
inline constexpr int kLeapDayIndex = 59;

struct Climatology {
  long site_id = 0;
  std::array<double, kDaysInClimateYear> curve{};
  std::size_t truncated_windows = 0;  // dates whose 31-day window ran off the series
  bool leap_day_interpolated = false;
};

Climatology compute_climatology(const DailySeries& series);

DailySeries compute_anomalies(const DailySeries& series, const Climatology& clim);

// Type-7 empirical percentile, q in (0,100).
double site_threshold(std::span<const double> values, double q);

// True when the sample is large enough for at least one value to sit above
// the q-th percentile (n * (1 - q/100) >= 1).
bool threshold_sample_adequate(std::size_t n, double q);

struct SiteExceedances {
  long site_id = 0;
  double u = 0.0;
  std::vector<double> excesses;  // one per cluster, all > 0
  std::size_t clusters = 0;      // M
  std::size_t trials = 0;        // m: days with data
  double npy = 365.25;
  std::size_t raw_exceedances = 0;
};

struct ExceedanceSet {
  std::vector<SiteExceedances> sites;

  const SiteExceedances* find(long site_id) const;
};

// Runs of consecutive calendar days above u collapse to their maximum; a
// missing day ends a run.
SiteExceedances decluster(const DailySeries& anomalies, double u, double npy = 365.25);

double verify_correlation(std::span<const double> a, std::span<const double> b);

// Silverman rule-of-thumb bandwidth (0.9 * min(sd, IQR/1.34) * n^-1/5).
double silverman_bandwidth(std::span<const double> x);

// Integral of min(f_a, f_b) for Gaussian KDEs on a 512-point grid spanning
// the joint range +/- 3 bandwidths.
double density_overlap(std::span<const double> a, std::span<const double> b);

// Files.
std::vector<DailySeries> read_series_csv(const std::string& path);
void write_series_csv(const std::string& path, const std::vector<DailySeries>& series,
                      const std::string& header_comment = {});

void write_climatology_csv(const std::string& path, const std::vector<Climatology>& clims,
                           const std::string& header_comment = {});
std::vector<Climatology> read_climatology_csv(const std::string& path);

std::string exceedances_to_json(const ExceedanceSet& set, const std::string& provenance = {});
ExceedanceSet exceedances_from_json(const std::string& text);
void write_exceedances_json(const std::string& path, const ExceedanceSet& set,
                            const std::string& provenance = {});
ExceedanceSet read_exceedances_json(const std::string& path);

}  // namespace spext
