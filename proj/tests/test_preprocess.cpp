#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "spext/error.hpp"
#include "spext/preprocess.hpp"
#include "spext/synth.hpp"
#include "support.hpp"

using namespace spext;

namespace {

DailySeries make_series(long id, const std::string& start, const std::vector<double>& values) {
  DailySeries s;
  s.site_id = id;
  const Date d0 = parse_date(start);
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.dates.push_back(d0 + std::chrono::days(static_cast<long>(i)));
    s.values.push_back(values[i]);
  }
  return s;
}

// Brute-force climatology: O(n^2) window search, then calendar-day means.
std::array<double, 366> naive_climatology(const DailySeries& s) {
  std::array<double, 366> sum{}, cnt{};
  for (std::size_t i = 0; i < s.size(); ++i) {
    double acc = 0.0, n = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const auto gap = (s.dates[j] - s.dates[i]).count();
      if (gap >= -15 && gap <= 15) {
        acc += s.values[j];
        n += 1.0;
      }
    }
    const auto doy = static_cast<std::size_t>(day_of_year_index(s.dates[i]));
    sum[doy] += acc / n;
    cnt[doy] += 1.0;
  }
  std::array<double, 366> out{};
  for (std::size_t d = 0; d < 366; ++d) out[d] = cnt[d] > 0 ? sum[d] / cnt[d] : NAN;
  return out;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("calendar indexing uses a 366-day year") {
  CHECK(day_of_year_index(parse_date("2001-01-01")) == 0);
  CHECK(day_of_year_index(parse_date("2004-02-29")) == 59);
  CHECK(day_of_year_index(parse_date("2001-03-01")) == 60);
  CHECK(day_of_year_index(parse_date("2004-03-01")) == 60);
  CHECK(day_of_year_index(parse_date("2001-12-31")) == 365);
  CHECK(format_date(parse_date("1999-07-04")) == "1999-07-04");
  CHECK_THROWS_AS(parse_date("2001-02-29"), Error);
  CHECK_THROWS_AS(parse_date("2001/01/01"), Error);
}

TEST_CASE("constant series gives a constant climatology") {
  const auto s = make_series(1, "2001-01-01", std::vector<double>(800, 12.5));
  const auto c = compute_climatology(s);
  for (double v : c.curve) CHECK(v == doctest::Approx(12.5).epsilon(1e-14));
}

TEST_CASE("climatology matches a direct recomputation") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 2.0);
  std::vector<double> v;
  for (int i = 0; i < 3 * 366; ++i) v.push_back(10.0 + 5.0 * std::sin(2.0 * std::numbers::pi * i / 366.0) + noise(rng));
  auto s = make_series(3, "2003-01-01", v);
  // a two-week gap in the second year
  s.dates.erase(s.dates.begin() + 500, s.dates.begin() + 514);
  s.values.erase(s.values.begin() + 500, s.values.begin() + 514);
  const auto c = compute_climatology(s);
  const auto oracle = naive_climatology(s);
  for (std::size_t d = 0; d < 366; ++d) CHECK(c.curve[d] == doctest::Approx(oracle[d]).epsilon(1e-12));
  CHECK(c.truncated_windows > 0);
  CHECK_FALSE(c.leap_day_interpolated);  // 2004 is a leap year
}

TEST_CASE("30-year noisy sinusoid: climatology within Monte-Carlo error of the smoothed curve") {
  const double sd = 2.0;
  const auto noisy = synth::sinusoid_series(1, parse_date("1981-01-01"), 10957, 14.0, 6.0, sd, 5);
  const auto clean = synth::sinusoid_series(1, parse_date("1981-01-01"), 10957, 14.0, 6.0, 0.0, 5);
  const auto c = compute_climatology(noisy);
  const auto smooth = naive_climatology(clean);
  const double tol = 3.0 * sd / std::sqrt(31.0 * 30.0);
  std::size_t bad = 0;
  for (std::size_t d = 0; d < 366; ++d)
    if (d != 59 && std::abs(c.curve[d] - smooth[d]) > tol) ++bad;
  CHECK(bad == 0);
}

TEST_CASE("climatology errors") {
  CHECK_THROWS_AS(compute_climatology(make_series(1, "2001-01-01", std::vector<double>(200, 1.0))), Error);
  // all of March missing in both years
  auto s = make_series(1, "2001-01-01", std::vector<double>(730, 1.0));
  DailySeries t;
  t.site_id = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int doy = day_of_year_index(s.dates[i]);
    if (doy >= 60 && doy < 91) continue;
    t.dates.push_back(s.dates[i]);
    t.values.push_back(s.values[i]);
  }
  try {
    compute_climatology(t);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("60") != std::string::npos);
  }
}

TEST_CASE("anomalies") {
  const auto s = make_series(2, "2001-01-01", std::vector<double>(730, 0.0));
  Climatology c;
  c.site_id = 2;
  for (int d = 0; d < 366; ++d) c.curve[static_cast<std::size_t>(d)] = 19.8;
  auto one = make_series(2, "2001-06-01", {25.0});
  CHECK(compute_anomalies(one, c).values[0] == doctest::Approx(5.2).epsilon(1e-14));

  // a series equal to its own climatology has zero anomalies
  DailySeries self;
  self.site_id = 2;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 30.0);
  for (int d = 0; d < 366; ++d) c.curve[static_cast<std::size_t>(d)] = u(rng);
  for (int i = 0; i < 3 * 365; ++i) {
    const Date dt = parse_date("2001-01-01") + std::chrono::days(i);
    self.dates.push_back(dt);
    self.values.push_back(c.curve[static_cast<std::size_t>(day_of_year_index(dt))]);
  }
  for (double a : compute_anomalies(self, c).values) CHECK(a == 0.0);

  // shifting values by a constant shifts anomalies by it
  auto shifted = self;
  for (auto& v : shifted.values) v += 1.75;
  const auto a = compute_anomalies(shifted, c);
  for (double v : a.values) CHECK(v == doctest::Approx(1.75).epsilon(1e-12));

  c.site_id = 99;
  CHECK_THROWS_AS(compute_anomalies(self, c), Error);
}

TEST_CASE("type-7 thresholds") {
  std::vector<double> v;
  for (int i = 1; i <= 1000; ++i) v.push_back(i);
  // h = 999 * 0.995 = 994.005 (0-based) -> 995 + 0.005
  CHECK(site_threshold(v, 99.5) == doctest::Approx(995.005).epsilon(1e-13));
  CHECK(site_threshold(std::vector<double>{3.0, 1.0, 2.0}, 50.0) == 2.0);

  const std::vector<double> flat(300, 4.25);
  const double u = site_threshold(flat, 99.5);
  CHECK(u == 4.25);
  CHECK(std::count_if(flat.begin(), flat.end(), [&](double x) { return x > u; }) == 0);

  CHECK_THROWS_AS(site_threshold(std::vector<double>{}, 50.0), Error);
  CHECK_THROWS_AS(site_threshold(v, 100.0), Error);
  CHECK(threshold_sample_adequate(200, 99.5));
  CHECK_FALSE(threshold_sample_adequate(199, 99.5));
}

TEST_CASE("fraction above the threshold") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> v(10957);
    for (auto& x : v) x = g(rng);
    for (double q : {90.0, 99.0, 99.5}) {
      const double u = site_threshold(v, q);
      const auto above = std::count_if(v.begin(), v.end(), [&](double x) { return x > u; });
      const double frac = static_cast<double>(above) / static_cast<double>(v.size());
      CHECK(frac <= (100.0 - q) / 100.0 + 1.0 / static_cast<double>(v.size()));
      if (q == 99.5) {
        const double p = 0.005, sd = std::sqrt(p * (1 - p) / static_cast<double>(v.size()));
        CHECK(std::abs(frac - p) <= 3 * sd);
      }
    }
  }
}

TEST_CASE("declustering") {
  const double u = 1.0;
  SUBCASE("a run collapses to its maximum") {
    std::vector<double> v(10, 0.0);
    v[3] = u + 1.2;
    v[4] = u + 2.0;
    v[5] = u + 1.5;
    const auto ex = decluster(make_series(1, "2001-01-01", v), u);
    REQUIRE(ex.clusters == 1);
    CHECK(ex.excesses[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(ex.raw_exceedances == 3);
    CHECK(ex.trials == 10);
  }
  SUBCASE("isolated exceedances stay separate") {
    std::vector<double> v(10, 0.0);
    v[3] = u + 0.5;
    v[7] = u + 0.25;
    const auto ex = decluster(make_series(1, "2001-01-01", v), u);
    REQUIRE(ex.clusters == 2);
    CHECK(ex.excesses[0] == doctest::Approx(0.5));
    CHECK(ex.excesses[1] == doctest::Approx(0.25));
  }
  SUBCASE("a missing day breaks a run") {
    // days 3..5 exceed but day 4 is absent, so the run splits
    auto s = make_series(1, "2001-01-01", {0.0, 0.0, 0.0, u + 1.0, u + 2.0, u + 3.0, 0.0});
    s.dates.erase(s.dates.begin() + 4);
    s.values.erase(s.values.begin() + 4);
    const auto ex = decluster(s, u);
    CHECK(ex.clusters == 2);
    CHECK(ex.trials == 6);
  }
  SUBCASE("no exceedances is valid") {
    const auto ex = decluster(make_series(1, "2001-01-01", std::vector<double>(20, 0.0)), u);
    CHECK(ex.clusters == 0);
    CHECK(ex.excesses.empty());
  }
  SUBCASE("idempotent on isolated cluster maxima") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> v(3000);
    for (auto& x : v) x = g(rng);
    const auto s = make_series(4, "2001-01-01", v);
    const double thr = site_threshold(v, 98.0);
    const auto first = decluster(s, thr);
    // rebuild a series with only the cluster maxima, one per isolated day
    std::vector<double> iso(first.clusters * 2, thr - 1.0);
    for (std::size_t k = 0; k < first.clusters; ++k) iso[2 * k] = thr + first.excesses[k];
    const auto second = decluster(make_series(4, "2001-01-01", iso), thr);
    CHECK(second.excesses == first.excesses);
    CHECK(first.clusters <= first.raw_exceedances);
    CHECK(first.raw_exceedances == static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double x) { return x > thr; })));
    for (double z : first.excesses) CHECK(z > 0.0);
  }
}

TEST_CASE("verification statistics") {
  const std::vector<double> a = {1, 2, 3}, b = {1, 2, 4};
  CHECK(verify_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> neg = {-1, -2, -3};
  CHECK(verify_correlation(a, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(verify_correlation(a, b) == doctest::Approx(0.9819805060619656).epsilon(1e-12));
  CHECK_THROWS_AS(verify_correlation(a, std::vector<double>{2, 2, 2}), Error);
  CHECK_THROWS_AS(verify_correlation(a, std::vector<double>{1, 2}), Error);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  std::vector<double> x(20000), y(20000);
  for (auto& v : x) v = g(rng);
  for (auto& v : y) v = g(rng) + 1.0;
  CHECK(density_overlap(x, x) >= 0.999);
  CHECK(std::abs(density_overlap(x, y) - 0.6170750774519738) <= 0.03);
  std::vector<double> far(x);
  for (auto& v : far) v += 100.0;
  CHECK(density_overlap(x, far) <= 0.001);
  CHECK_THROWS_AS(density_overlap(std::vector<double>(5, 1.0), x), Error);
}

TEST_CASE("series, climatology and exceedance files round trip") {
  const auto dir = testing::scratch_dir("preprocess_io");
  testing::write_text(dir / "s.csv",
                      "# header comment\nsite_id,date,value\n1,2001-01-01,3.5\n1,2001-01-02,\n1,2001-01-03,4\n2,2001-01-01,-1\n");
  const auto series = read_series_csv((dir / "s.csv").string());
  REQUIRE(series.size() == 2);
  CHECK(series[0].size() == 2);
  CHECK(series[0].missing_days() == 1);
  write_series_csv((dir / "t.csv").string(), series, "# c");
  const auto back = read_series_csv((dir / "t.csv").string());
  CHECK(back[0].values == series[0].values);
  CHECK(back[0].dates == series[0].dates);

  testing::write_text(dir / "bad.csv", "site_id,date,value\n1,2001-01-02,1\n1,2001-01-01,2\n");
  try {
    read_series_csv((dir / "bad.csv").string());
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string what = e.what();
    CHECK(what.find("bad.csv") != std::string::npos);
    CHECK(what.find("3") != std::string::npos);  // line number
  }

  Climatology c;
  c.site_id = 5;
  for (int d = 0; d < 366; ++d) c.curve[static_cast<std::size_t>(d)] = 0.1 * d + 1.0 / 3.0;
  write_climatology_csv((dir / "c.csv").string(), {c});
  const auto cb = read_climatology_csv((dir / "c.csv").string());
  REQUIRE(cb.size() == 1);
  CHECK(cb[0].curve == c.curve);

  ExceedanceSet set;
  set.sites.push_back({7, 2.5, {0.1, 1.0 / 3.0}, 2, 1000, 365.25, 3});
  set.sites.push_back({8, 2.0, {}, 0, 900, 365.0, 0});
  write_exceedances_json((dir / "e.json").string(), set, "# p");
  const auto eb = read_exceedances_json((dir / "e.json").string());
  REQUIRE(eb.sites.size() == 2);
  CHECK(eb.sites[0].excesses == set.sites[0].excesses);
  CHECK(eb.sites[0].clusters == 2);
  CHECK(eb.sites[0].trials == 1000);
  CHECK(eb.sites[1].npy == 365.0);
  CHECK(eb.find(8) != nullptr);
  CHECK(eb.find(9) == nullptr);

  CHECK_THROWS_AS(exceedances_from_json("{\"sites\":[{\"site_id\":1,\"u\":0,\"excesses\":[-1],\"M\":1,\"m\":10,\"npy\":365}]}"), Error);
  CHECK_THROWS_AS(exceedances_from_json("{\"sites\":[{\"site_id\":1,\"u\":0,\"excesses\":[1],\"M\":5,\"m\":2,\"npy\":365}]}"), Error);
}

}
