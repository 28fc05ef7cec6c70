#include "spext/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "spext/csv.hpp"
#include "spext/error.hpp"

namespace spext {

namespace {

using namespace std::chrono;

constexpr int kHalfWindow = 15;
constexpr int kCumulativeLeapDays[12] = {0, 31, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335};

long day_number(Date d) { return d.time_since_epoch().count(); }

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double type7_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

Date parse_date(const std::string& iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream is(iso);
  is >> y >> dash1 >> m >> dash2 >> d;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!is || dash1 != '-' || dash2 != '-' || !ymd.ok() || !is.eof())
    fail_validation("invalid ISO-8601 date '" + iso + "'");
  return sys_days{ymd};
}

std::string format_date(Date d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int day_of_year_index(Date d) {
  const year_month_day ymd{d};
  return kCumulativeLeapDays[static_cast<unsigned>(ymd.month()) - 1] +
         static_cast<int>(static_cast<unsigned>(ymd.day())) - 1;
}

std::size_t DailySeries::missing_days() const {
  if (dates.size() < 2) return 0;
  const auto span = day_number(dates.back()) - day_number(dates.front()) + 1;
  return static_cast<std::size_t>(span) - dates.size();
}

void validate(const DailySeries& s) {
  const auto id = std::to_string(s.site_id);
  if (s.dates.size() != s.values.size())
    fail_validation("series " + id + ": dates and values differ in length");
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!std::isfinite(s.values[i]))
      fail_validation("series " + id + ": non-finite value on " + format_date(s.dates[i]));
    if (i > 0 && s.dates[i] <= s.dates[i - 1])
      fail_validation("series " + id + ": dates not strictly increasing at " +
                      format_date(s.dates[i]));
  }
}

Climatology compute_climatology(const DailySeries& series) {
  validate(series);
  if (series.dates.empty() ||
      day_number(series.dates.back()) - day_number(series.dates.front()) < 364)
    fail_validation("series " + std::to_string(series.site_id) +
                    ": climatology needs at least one full year of data");

  const auto& dates = series.dates;
  const auto& values = series.values;
  const long first = day_number(dates.front());
  const long last = day_number(dates.back());

  std::array<double, kDaysInClimateYear> sum{};
  std::array<std::size_t, kDaysInClimateYear> count{};
  Climatology clim;
  clim.site_id = series.site_id;

  std::size_t lo = 0, hi = 0;
  for (std::size_t k = 0; k < dates.size(); ++k) {
    const long t = day_number(dates[k]);
    while (day_number(dates[lo]) < t - kHalfWindow) ++lo;
    while (hi < dates.size() && day_number(dates[hi]) <= t + kHalfWindow) ++hi;
    double s = 0.0;
    for (std::size_t j = lo; j < hi; ++j) s += values[j];
    const double smoothed = s / static_cast<double>(hi - lo);
    if (t - kHalfWindow < first || t + kHalfWindow > last) ++clim.truncated_windows;
    const int doy = day_of_year_index(dates[k]);
    sum[static_cast<std::size_t>(doy)] += smoothed;
    ++count[static_cast<std::size_t>(doy)];
  }

  std::vector<int> empty_days;
  for (int d = 0; d < kDaysInClimateYear; ++d) {
    const auto i = static_cast<std::size_t>(d);
    if (count[i] > 0)
      clim.curve[i] = sum[i] / static_cast<double>(count[i]);
    else if (d != kLeapDayIndex)
      empty_days.push_back(d);
  }
  if (count[kLeapDayIndex] == 0 && empty_days.empty()) {
    clim.curve[kLeapDayIndex] = 0.5 * (clim.curve[kLeapDayIndex - 1] + clim.curve[kLeapDayIndex + 1]);
    clim.leap_day_interpolated = true;
  } else if (count[kLeapDayIndex] == 0) {
    empty_days.insert(std::lower_bound(empty_days.begin(), empty_days.end(), kLeapDayIndex),
                      kLeapDayIndex);
  }
  if (!empty_days.empty()) {
    std::string list;
    for (int d : empty_days) list += (list.empty() ? "" : ",") + std::to_string(d);
    fail_validation("series " + std::to_string(series.site_id) +
                    ": no data for day-of-year index " + list);
  }
  return clim;
}

DailySeries compute_anomalies(const DailySeries& series, const Climatology& clim) {
  validate(series);
  if (series.site_id != clim.site_id)
    fail_validation("compute_anomalies: series site " + std::to_string(series.site_id) +
                    " does not match climatology site " + std::to_string(clim.site_id));
  DailySeries out;
  out.site_id = series.site_id;
  out.dates = series.dates;
  out.values.resize(series.size());
  for (std::size_t i = 0; i < series.size(); ++i)
    out.values[i] =
        series.values[i] - clim.curve[static_cast<std::size_t>(day_of_year_index(series.dates[i]))];
  return out;
}

double site_threshold(std::span<const double> values, double q) {
  if (values.empty()) fail_validation("site_threshold: no values");
  if (!(q > 0.0 && q < 100.0)) fail_validation("site_threshold: percentile must lie in (0,100)");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return type7_quantile(sorted, q / 100.0);
}

bool threshold_sample_adequate(std::size_t n, double q) {
  return static_cast<double>(n) * (1.0 - q / 100.0) >= 1.0 - 1e-9;
}

const SiteExceedances* ExceedanceSet::find(long site_id) const {
  for (const auto& s : sites)
    if (s.site_id == site_id) return &s;
  return nullptr;
}

SiteExceedances decluster(const DailySeries& anomalies, double u, double npy) {
  validate(anomalies);
  if (!std::isfinite(u)) fail_validation("decluster: threshold must be finite");
  SiteExceedances out;
  out.site_id = anomalies.site_id;
  out.u = u;
  out.npy = npy;
  out.trials = anomalies.size();

  bool in_run = false;
  double run_max = 0.0;
  long prev_day = 0;
  for (std::size_t i = 0; i < anomalies.size(); ++i) {
    const long t = day_number(anomalies.dates[i]);
    const double v = anomalies.values[i];
    const bool consecutive = i > 0 && t == prev_day + 1;
    if (in_run && !(v > u && consecutive)) {
      out.excesses.push_back(run_max - u);
      in_run = false;
    }
    if (v > u) {
      ++out.raw_exceedances;
      run_max = in_run ? std::max(run_max, v) : v;
      in_run = true;
    }
    prev_day = t;
  }
  if (in_run) out.excesses.push_back(run_max - u);
  out.clusters = out.excesses.size();
  return out;
}

double verify_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    fail_validation("verify_correlation: need two equal-length samples of size >= 2");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) fail_validation("verify_correlation: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double silverman_bandwidth(std::span<const double> x) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  const double iqr = type7_quantile(sorted, 0.75) - type7_quantile(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : (iqr > 0.0 ? iqr / 1.34 : 1.0);
  return 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
}

double density_overlap(std::span<const double> a, std::span<const double> b) {
  constexpr std::size_t kGridPoints = 512;
  if (a.size() < 10 || b.size() < 10)
    fail_validation("density_overlap: each sample needs at least 10 values");
  const double ha = silverman_bandwidth(a), hb = silverman_bandwidth(b);
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const double pad = 3.0 * std::max(ha, hb);
  const double lo = std::min(*amin, *bmin) - pad;
  const double hi = std::max(*amax, *bmax) + pad;
  const double step = (hi - lo) / static_cast<double>(kGridPoints - 1);

  auto kde = [](std::span<const double> x, double h, double at) {
    const double norm = 1.0 / (static_cast<double>(x.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    double s = 0.0;
    for (double v : x) {
      const double z = (at - v) / h;
      s += std::exp(-0.5 * z * z);
    }
    return s * norm;
  };

  double area = 0.0;
  for (std::size_t i = 0; i < kGridPoints; ++i) {
    const double at = lo + step * static_cast<double>(i);
    const double f = std::min(kde(a, ha, at), kde(b, hb, at));
    area += (i == 0 || i + 1 == kGridPoints) ? 0.5 * f : f;
  }
  return std::clamp(area * step, 0.0, 1.0);
}

std::vector<DailySeries> read_series_csv(const std::string& path) {
  csv::Reader r(path);
  const auto c_id = r.column("site_id"), c_date = r.column("date"), c_val = r.column("value");
  std::map<long, DailySeries> by_site;
  std::vector<std::string> f;
  while (r.next(f)) {
    const long id = csv::to_long(r, f[c_id]);
    if (f[c_val].empty()) continue;  // missing value: leaves a gap
    Date d;
    try {
      d = parse_date(f[c_date]);
    } catch (const Error& e) {
      r.fail(e.what());
    }
    const double v = csv::to_double(r, f[c_val]);
    auto& s = by_site[id];
    s.site_id = id;
    if (!s.dates.empty() && d <= s.dates.back())
      r.fail("dates for site " + std::to_string(id) + " are not strictly increasing");
    s.dates.push_back(d);
    s.values.push_back(v);
  }
  std::vector<DailySeries> out;
  for (auto& [id, s] : by_site) out.push_back(std::move(s));
  return out;
}

void write_series_csv(const std::string& path, const std::vector<DailySeries>& series,
                      const std::string& header_comment) {
  auto out = csv::open_output(path);
  if (!header_comment.empty()) out << header_comment << '\n';
  out << "site_id,date,value\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.size(); ++i)
      out << s.site_id << ',' << format_date(s.dates[i]) << ',' << csv::format(s.values[i]) << '\n';
}

void write_climatology_csv(const std::string& path, const std::vector<Climatology>& clims,
                           const std::string& header_comment) {
  auto out = csv::open_output(path);
  if (!header_comment.empty()) out << header_comment << '\n';
  out << "site_id,doy,value\n";
  for (const auto& c : clims)
    for (int d = 0; d < kDaysInClimateYear; ++d)
      out << c.site_id << ',' << d << ',' << csv::format(c.curve[static_cast<std::size_t>(d)])
          << '\n';
}

std::vector<Climatology> read_climatology_csv(const std::string& path) {
  csv::Reader r(path);
  const auto c_id = r.column("site_id"), c_doy = r.column("doy"), c_val = r.column("value");
  std::map<long, std::pair<Climatology, std::size_t>> by_site;
  std::vector<std::string> f;
  while (r.next(f)) {
    const long id = csv::to_long(r, f[c_id]);
    const long doy = csv::to_long(r, f[c_doy]);
    if (doy < 0 || doy >= kDaysInClimateYear) r.fail("day-of-year index out of range");
    auto& [clim, seen] = by_site[id];
    clim.site_id = id;
    clim.curve[static_cast<std::size_t>(doy)] = csv::to_double(r, f[c_val]);
    ++seen;
  }
  std::vector<Climatology> out;
  for (auto& [id, entry] : by_site) {
    if (entry.second != kDaysInClimateYear)
      fail_validation(path + ": site " + std::to_string(id) + " does not have 366 entries");
    out.push_back(entry.first);
  }
  return out;
}

std::string exceedances_to_json(const ExceedanceSet& set, const std::string& provenance) {
  nlohmann::ordered_json doc;
  if (!provenance.empty()) doc["provenance"] = provenance;
  auto& sites = doc["sites"] = nlohmann::ordered_json::array();
  for (const auto& s : set.sites) {
    nlohmann::ordered_json rec;
    rec["site_id"] = s.site_id;
    rec["u"] = s.u;
    rec["excesses"] = s.excesses;
    rec["M"] = s.clusters;
    rec["m"] = s.trials;
    rec["npy"] = s.npy;
    sites.push_back(std::move(rec));
  }
  return doc.dump(1);
}

ExceedanceSet exceedances_from_json(const std::string& text) {
  ExceedanceSet set;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& rec : doc.at("sites")) {
      SiteExceedances s;
      s.site_id = rec.at("site_id").get<long>();
      s.u = rec.at("u").get<double>();
      s.excesses = rec.at("excesses").get<std::vector<double>>();
      s.clusters = rec.at("M").get<std::size_t>();
      s.trials = rec.at("m").get<std::size_t>();
      s.npy = rec.at("npy").get<double>();
      s.raw_exceedances = s.clusters;
      if (s.clusters != s.excesses.size())
        fail_validation("site " + std::to_string(s.site_id) + ": M does not match excess count");
      if (s.clusters > s.trials)
        fail_validation("site " + std::to_string(s.site_id) + ": M exceeds m");
      for (double z : s.excesses)
        if (!(z > 0.0)) fail_validation("site " + std::to_string(s.site_id) + ": non-positive excess");
      set.sites.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    fail_validation(std::string("malformed exceedance JSON: ") + e.what());
  }
  return set;
}

void write_exceedances_json(const std::string& path, const ExceedanceSet& set,
                            const std::string& provenance) {
  auto out = csv::open_output(path);
  out << exceedances_to_json(set, provenance) << '\n';
}

ExceedanceSet read_exceedances_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return exceedances_from_json(ss.str());
}

}  // namespace spext
