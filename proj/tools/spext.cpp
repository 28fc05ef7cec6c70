#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spext/csv.hpp"
#include "spext/error.hpp"
#include "spext/grid.hpp"
#include "spext/hash.hpp"
#include "spext/hier_model.hpp"
#include "spext/mcmc.hpp"
#include "spext/posterior.hpp"
#include "spext/preprocess.hpp"
#include "spext/synth.hpp"

#ifndef SPEXT_VERSION
#define SPEXT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace spext;

namespace {

constexpr const char* kOutputDirEnv = "SPEXT_OUTPUT_DIR";

// Settings merged from defaults < config file < environment < flags.
class Settings {
 public:
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_io("cannot open config file " + path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      const auto key = trim(line.substr(0, eq));
      if (key.empty() && eq == std::string::npos) continue;
      if (eq == std::string::npos || key.empty())
        fail_validation(path + ":" + std::to_string(n) + ": expected key = value");
      values_[key] = trim(line.substr(eq + 1));
    }
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback = {}) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string required(const std::string& key) const {
    const auto v = str(key);
    if (v.empty()) fail_validation("missing required setting '" + key + "' (config key or --" + flag(key) + ")");
    return v;
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail_validation("setting '" + key + "' is not a number: " + str(key));
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    const double v = number(key, static_cast<double>(fallback));
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
      fail_validation("setting '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail_validation("setting '" + key + "' must be true or false");
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& f : csv::split(str(key))) {
      const auto t = trim(f);
      if (t.empty()) continue;
      try {
        out.push_back(std::stod(t));
      } catch (const std::exception&) {
        fail_validation("setting '" + key + "' has a non-numeric entry: " + t);
      }
    }
    return out;
  }

  // Hash of every setting that can change results.
  std::string hash() const {
    Fnv1a h;
    for (const auto& [k, v] : values_) {
      if (k == "output_dir" || k == "threads") continue;
      h.add(k).add(std::string_view("=")).add(v).add(std::string_view("\n"));
    }
    return h.hex();
  }

  static std::string flag(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

// One subcommand: its CLI11 app plus string-valued flags that override
// config keys when given.
struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> flags;
  std::string config;
  bool allow_unconverged = false;

  void option(const std::string& key, const std::string& help) {
    app->add_option("--" + Settings::flag(key), flags[key], help);
  }

  Settings settings() const {
    Settings s;
    if (!config.empty()) s.load_file(config);
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) s.set("output_dir", env);
    for (const auto& [key, value] : flags)
      if (app->count("--" + Settings::flag(key)) > 0) s.set(key, value);
    return s;
  }
};

std::string provenance(const Settings& s, std::optional<std::uint64_t> seed = {}) {
  return "# spext " SPEXT_VERSION " config=" + s.hash() +
         " seed=" + (seed ? std::to_string(*seed) : s.str("seed", "none"));
}

fs::path output_dir(const Settings& s) {
  const fs::path dir = s.str("output_dir", ".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_io("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::string out_path(const Settings& s, const std::string& name) { return (output_dir(s) / name).string(); }

std::size_t thread_count(const Settings& s) {
  const std::size_t t = s.count("threads", 1);
  return std::max<std::size_t>(1, t);
}

// Runs f(i) for i in [0, n) on at most `threads` threads.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F f) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double percentile_setting(const Settings& s) {
  const double q = s.number("percentile", 99.5);
  if (!(q > 0.0 && q < 100.0)) fail_validation("percentile must lie in (0, 100)");
  return q;
}

mcmc::SamplerConfig sampler_config(const Settings& s) {
  mcmc::SamplerConfig c;
  c.n_chains = s.count("n_chains", c.n_chains);
  c.n_iter = s.count("n_iter", c.n_iter);
  c.burn_in = s.count("burn_in", c.burn_in);
  c.thin = s.count("thin", c.thin);
  c.seed = static_cast<std::uint64_t>(s.count("seed", c.seed));
  c.adapt_window = s.count("adapt_window", c.adapt_window);
  c.alpha_sd = s.number("alpha_sd", c.alpha_sd);
  c.knot_sd = s.number("knot_sd", c.knot_sd);
  c.hyper_sd = s.number("hyper_sd", c.hyper_sd);
  const auto ku = s.str("knot_update", "block");
  if (ku == "block")
    c.knot_update = mcmc::KnotUpdate::kBlock;
  else if (ku == "single")
    c.knot_update = mcmc::KnotUpdate::kSingleSite;
  else
    fail_validation("knot_update must be 'block' or 'single'");
  c.adapt_covariance = s.boolean("adapt_covariance", c.adapt_covariance);
  c.reparam_moves = s.boolean("reparam_moves", c.reparam_moves);
  c.threads = thread_count(s);
  mcmc::validate(c);
  return c;
}

Grid load_grid(const Settings& s) {
  const Grid all = read_grid_csv(s.required("grid"));
  const std::size_t stride = s.count("knot_stride", 2);
  if (stride == 0) fail_validation("knot_stride must be at least 1");
  return all.with_knots(select_subgrid(all, stride));
}

model::ModelContext load_context(const Settings& s) {
  return model::ModelContext(load_grid(s), read_exceedances_json(s.required("exceedances")));
}

mcmc::Trace load_trace(const Settings& s, const model::ModelContext& ctx) {
  const auto prefix = s.required("trace");
  auto trace = mcmc::read_trace(prefix);
  if (trace.data_fingerprint != mcmc::fingerprint(ctx))
    fail_validation("trace " + prefix + " was fitted to different data or a different grid");
  return trace;
}

std::string years_label(double y) {
  std::ostringstream os;
  os << y;
  return os.str();
}

// Anomalies of a raw series against a climatology written by `preprocess`.
std::map<long, DailySeries> recent_anomalies(const Settings& s) {
  std::map<long, DailySeries> out;
  if (!s.has("recent")) return out;
  std::map<long, Climatology> clims;
  for (auto& c : read_climatology_csv(s.required("climatology"))) clims[c.site_id] = c;
  for (auto& series : read_series_csv(s.required("recent"))) {
    const auto it = clims.find(series.site_id);
    if (it == clims.end())
      fail_validation("no climatology for recent series of site " + std::to_string(series.site_id));
    out[series.site_id] = compute_anomalies(series, it->second);
  }
  return out;
}

std::vector<long> site_list(const Settings& s) {
  std::vector<long> ids;
  for (double v : s.numbers("sites", {})) ids.push_back(static_cast<long>(v));
  if (ids.empty()) fail_validation("no site ids given (--sites)");
  return ids;
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const Command& cmd) {
  const auto s = cmd.settings();
  const double q = percentile_setting(s);
  const double npy = s.number("npy", 365.25);
  const auto series = read_series_csv(s.required("series"));
  if (series.empty()) fail_validation("series file has no sites");

  const std::size_t n = series.size();
  std::vector<Climatology> clims(n);
  std::vector<DailySeries> anomalies(n);
  parallel_for(n, thread_count(s), [&](std::size_t i) {
    clims[i] = compute_climatology(series[i]);
    anomalies[i] = compute_anomalies(series[i], clims[i]);
  });

  std::vector<double> table_q = {98.0, 98.5, 99.0, 99.5, 99.7, 99.9};
  if (std::find(table_q.begin(), table_q.end(), q) == table_q.end()) table_q.push_back(q);
  std::sort(table_q.begin(), table_q.end());

  ExceedanceSet set;
  std::vector<std::vector<double>> counts(table_q.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = anomalies[i];
    const auto [lo, hi] = std::minmax_element(a.values.begin(), a.values.end());
    if (a.values.empty() || *lo == *hi)
      fail_validation("site " + std::to_string(a.site_id) +
                      ": anomalies are constant, so the threshold is degenerate and no day exceeds it");
    if (!threshold_sample_adequate(a.size(), q))
      std::cerr << "warning: site " << a.site_id << " has " << a.size()
                << " values, too few for the " << q << "th percentile\n";
    for (std::size_t t = 0; t < table_q.size(); ++t) {
      const auto ex = decluster(a, site_threshold(a.values, table_q[t]), npy);
      counts[t].push_back(static_cast<double>(ex.clusters));
      if (table_q[t] == q) set.sites.push_back(ex);
    }
  }
  for (const auto& c : clims)
    if (c.truncated_windows > 0 || c.leap_day_interpolated) {
      std::cerr << "note: climatology uses truncated edge windows"
                << (c.leap_day_interpolated ? " and an interpolated Feb 29" : "") << '\n';
      break;
    }

  const auto prov = provenance(s);
  write_climatology_csv(out_path(s, "climatology.csv"), clims, prov);
  write_series_csv(out_path(s, "anomalies.csv"), anomalies, prov);
  write_exceedances_json(out_path(s, "exceedances.json"), set, prov);

  auto out = csv::open_output(out_path(s, "threshold_summary.csv"));
  out << prov << '\n' << "percentile,p2.5,p25,p50,p75,p97.5\n";
  std::cout << "percentile  excess counts across sites (2.5/25/50/75/97.5%)\n";
  for (std::size_t t = 0; t < table_q.size(); ++t) {
    out << csv::format(table_q[t]);
    std::cout << table_q[t] << "  ";
    for (double p : {0.025, 0.25, 0.5, 0.75, 0.975}) {
      const double v = mcmc::quantile(counts[t], p);
      out << ',' << csv::format(v);
      std::cout << ' ' << v;
    }
    out << '\n';
    std::cout << '\n';
  }
  return 0;
}

int cmd_verify(const Command& cmd) {
  const auto s = cmd.settings();
  const auto station = read_series_csv(s.required("station"));
  const auto gridded = read_series_csv(s.required("gridded"));
  std::map<long, const DailySeries*> by_id;
  for (const auto& g : gridded) by_id[g.site_id] = &g;

  const auto prov = provenance(s);
  auto report = csv::open_output(out_path(s, "verification.csv"));
  auto pairs = csv::open_output(out_path(s, "paired_values.csv"));
  report << prov << '\n' << "site_id,n,correlation,overlap\n";
  pairs << prov << '\n' << "site_id,date,station,gridded\n";
  std::size_t matched = 0;
  for (const auto& st : station) {
    const auto it = by_id.find(st.site_id);
    if (it == by_id.end()) continue;
    const auto& g = *it->second;
    std::vector<double> a, b;
    std::size_t j = 0;
    for (std::size_t i = 0; i < st.size(); ++i) {
      while (j < g.size() && g.dates[j] < st.dates[i]) ++j;
      if (j < g.size() && g.dates[j] == st.dates[i]) {
        a.push_back(st.values[i]);
        b.push_back(g.values[j]);
        pairs << st.site_id << ',' << format_date(st.dates[i]) << ',' << csv::format(st.values[i]) << ','
              << csv::format(g.values[j]) << '\n';
      }
    }
    if (a.empty()) continue;
    const double r = verify_correlation(a, b);
    const double ov = density_overlap(a, b);
    report << st.site_id << ',' << a.size() << ',' << csv::format(r) << ',' << csv::format(ov) << '\n';
    std::cout << "site " << st.site_id << ": n=" << a.size() << " r=" << r << " overlap=" << ov << '\n';
    ++matched;
  }
  if (matched == 0) fail_validation("station and gridded files share no site with common dates");
  return 0;
}

nlohmann::ordered_json diagnostics_json(const mcmc::DiagnosticsReport& rep, const std::string& prov) {
  nlohmann::ordered_json doc;
  doc["provenance"] = prov;
  doc["converged"] = rep.converged;
  doc["max_rhat"] = rep.max_rhat;
  auto& acc = doc["acceptance"] = nlohmann::ordered_json::object();
  for (const auto& [g, rate] : rep.acceptance) acc[g] = rate;
  auto& sc = doc["scalars"] = nlohmann::ordered_json::array();
  for (const auto& x : rep.scalars) {
    nlohmann::ordered_json j;
    j["name"] = x.name;
    j["mean"] = x.mean;
    j["median"] = x.median;
    j["q025"] = x.q025;
    j["q975"] = x.q975;
    if (x.discrete || x.rhat.degenerate)
      j["rhat"] = nullptr;
    else
      j["rhat"] = x.rhat.rhat;
    sc.push_back(std::move(j));
  }
  return doc;
}

int report_convergence(const mcmc::DiagnosticsReport& rep, bool allow) {
  std::cout << "max R-hat " << rep.max_rhat << (rep.converged ? " (converged)" : " (NOT converged)") << '\n';
  if (rep.converged) return 0;
  for (const auto& x : rep.scalars)
    if (!x.discrete && !x.rhat.degenerate && x.rhat.rhat >= 1.2)
      std::cerr << "  " << x.name << " R-hat " << x.rhat.rhat << '\n';
  if (allow) {
    std::cerr << "warning: chains have not converged (R-hat >= 1.2); continuing as requested\n";
    return 0;
  }
  std::cerr << "error: chains have not converged (R-hat >= 1.2); rerun longer or pass --allow-unconverged\n";
  return static_cast<int>(ErrorKind::kConvergence);
}

int cmd_fit(const Command& cmd) {
  const auto s = cmd.settings();
  const auto cfg = sampler_config(s);
  const auto ctx = load_context(s);
  const auto ledger = model::PriorLedger::standard();
  const auto trace = mcmc::run_chains(ctx, ledger, cfg);
  const auto rep = mcmc::diagnostics_report(trace);
  const auto prov = provenance(s, cfg.seed);
  mcmc::write_trace(out_path(s, "trace"), trace, prov, rep);
  csv::open_output(out_path(s, "diagnostics.json")) << diagnostics_json(rep, prov).dump(1) << '\n';
  return report_convergence(rep, cmd.allow_unconverged);
}

int cmd_diagnose(const Command& cmd) {
  const auto s = cmd.settings();
  const auto trace = mcmc::read_trace(s.required("trace"));
  const auto rep = mcmc::diagnostics_report(trace);
  const auto prov = provenance(s, trace.config.seed);
  csv::open_output(out_path(s, "diagnostics.json")) << diagnostics_json(rep, prov).dump(1) << '\n';
  std::cout << "scalar,median,q025,q975,rhat\n";
  for (const auto& x : rep.scalars) {
    std::cout << x.name << ',' << csv::format(x.median) << ',' << csv::format(x.q025) << ','
              << csv::format(x.q975) << ',';
    if (x.discrete || x.rhat.degenerate)
      std::cout << "NA\n";
    else
      std::cout << csv::format(x.rhat.rhat) << '\n';
  }
  return report_convergence(rep, cmd.allow_unconverged);
}

int cmd_returnlevels(const Command& cmd) {
  const auto s = cmd.settings();
  const auto ctx = load_context(s);
  const auto ledger = model::PriorLedger::standard();
  const auto trace = load_trace(s, ctx);
  const auto draws = posterior::reconstruct(trace, ctx, ledger);
  const auto years = s.numbers("years", {20.0, 100.0});
  if (years.empty()) fail_validation("no return periods given");
  const auto prov = provenance(s, trace.config.seed);
  for (double y : years) {
    if (!(y > 0.0)) fail_validation("return periods must be positive");
    const auto surface = posterior::return_level_surface(draws, ctx, y);
    const auto path = out_path(s, "returnlevel_" + years_label(y) + "y.csv");
    posterior::write_surface_csv(path, surface, ctx.grid(), prov);
    if (surface.clamped_draws > 0)
      std::cerr << "note: " << surface.clamped_draws << " draws clamped to the threshold for N = " << y
                << " (expected fewer than one exceedance per N years)\n";
    std::cout << "wrote " << path << '\n';
  }
  return 0;
}

int cmd_sitecurve(const Command& cmd) {
  const auto s = cmd.settings();
  const auto ctx = load_context(s);
  const auto ledger = model::PriorLedger::standard();
  const auto ids = site_list(s);
  for (long id : ids)
    if (ctx.grid().find(id) == ctx.grid().size()) fail_validation("unknown site id " + std::to_string(id));
  const auto trace = load_trace(s, ctx);
  const auto draws = posterior::reconstruct(trace, ctx, ledger);
  const auto recent = recent_anomalies(s);
  const auto years = posterior::curve_years(s.numbers("years", {20.0, 100.0}));
  const auto prov = provenance(s, trace.config.seed);
  for (long id : ids) {
    std::optional<DailySeries> r;
    if (const auto it = recent.find(id); it != recent.end()) r = it->second;
    const auto curve = posterior::site_curve(draws, ctx, id, r, years);
    const auto tag = std::to_string(id);
    posterior::write_curve_csv(out_path(s, "curve_site" + tag + ".csv"), curve, prov);
    posterior::write_overlay_csv(out_path(s, "overlay_site" + tag + ".csv"), curve, prov);
  }
  return 0;
}

int cmd_zetacompare(const Command& cmd) {
  const auto s = cmd.settings();
  const auto ctx = load_context(s);
  const auto ledger = model::PriorLedger::standard();
  const auto ids = site_list(s);
  for (long id : ids)
    if (ctx.grid().find(id) == ctx.grid().size()) fail_validation("unknown site id " + std::to_string(id));
  const auto anomalies = recent_anomalies(s);
  if (anomalies.empty()) fail_validation("zetacompare needs --recent and --climatology");
  std::map<long, posterior::RecentCounts> counts;
  for (long id : ids) {
    const auto it = anomalies.find(id);
    if (it == anomalies.end()) fail_validation("no recent series for site " + std::to_string(id));
    const auto& model_site = ctx.site_data()[ctx.grid().find(id)];
    const auto ex = decluster(it->second, model_site.u, model_site.npy);
    counts[id] = {ex.clusters, ex.trials};
  }
  const auto trace = load_trace(s, ctx);
  const auto draws = posterior::reconstruct(trace, ctx, ledger);
  const auto rows = posterior::zeta_compare(draws, ctx, ids, counts);
  csv::open_output(out_path(s, "zeta_compare.json"))
      << posterior::zeta_comparison_json(rows, provenance(s, trace.config.seed)) << '\n';
  for (const auto& r : rows) {
    std::cout << "site " << r.site_id << ": recent " << r.recent_rate << ", posterior 95% ["
              << r.posterior.q025 << ", " << r.posterior.q975 << "]";
    if (r.percent_above_upper) std::cout << ", " << *r.percent_above_upper << "% above the upper bound";
    std::cout << '\n';
  }
  return 0;
}

int cmd_synth(const Command& cmd) {
  const auto s = cmd.settings();
  const std::uint64_t seed = s.count("seed", 1);
  const auto nx = s.count("nx", 15), ny = s.count("ny", 15);
  const auto grid = synth::lattice_grid(nx, ny, s.number("spacing", 0.25), s.count("knot_stride", 3));
  const auto ledger = model::PriorLedger::standard();
  auto spec = synth::default_truth_spec();
  spec.trials_per_site = s.count("trials", spec.trials_per_site);
  spec.threshold_base = s.number("threshold", spec.threshold_base);
  const auto truth = synth::sample_truth(grid, spec, ledger, seed);
  const auto data = synth::generate_exceedance_data(truth, grid, spec.trials_per_site,
                                                    mcmc::derive_seed(seed, 4), spec.npy);
  const auto prov = provenance(s, seed);
  write_grid_csv(out_path(s, "grid.csv"), grid, prov);
  write_exceedances_json(out_path(s, "exceedances.json"), data, prov);
  synth::write_truth_json(out_path(s, "truth.json"), truth, grid, prov);

  if (const std::size_t days = s.count("series_days", 0); days > 0) {
    std::vector<DailySeries> series;
    const Date start = parse_date(s.str("series_start", "1981-01-01"));
    for (std::size_t i = 0; i < grid.size(); ++i)
      series.push_back(synth::sinusoid_series(grid.sites()[i].id, start, days, 14.0, 6.0, 2.5,
                                              mcmc::derive_seed(seed, 5, i)));
    write_series_csv(out_path(s, "series.csv"), series, prov);
  }
  std::size_t total = 0;
  for (const auto& site : data.sites) total += site.clusters;
  std::cout << grid.size() << " sites, " << grid.knot_count() << " knots, " << total << " excesses\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial extremes: preprocessing, hierarchical GPD fitting and return levels"};
  app.set_version_flag("--version", SPEXT_VERSION);
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help, std::vector<std::string> keys) {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->app->add_option("-c,--config", c->config, "key = value config file");
    keys.insert(keys.end(), {"output_dir", "threads", "seed"});
    for (const auto& k : keys) c->option(k, "overrides config key '" + k + "'");
    commands.push_back(std::move(c));
    return commands.back().get();
  };
  const std::vector<std::string> sampler = {"n_chains", "n_iter", "burn_in", "thin", "adapt_window",
                                            "alpha_sd", "knot_sd", "hyper_sd", "knot_update",
                                            "adapt_covariance", "reparam_moves"};
  const std::vector<std::string> model_inputs = {"grid", "exceedances", "knot_stride", "trace"};
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  auto* pre = add("preprocess", "climatology, anomalies, thresholds and declustered excesses",
                  {"series", "percentile", "npy"});
  auto* ver = add("verify", "correlation and density overlap of station vs gridded series",
                  {"station", "gridded"});
  auto* fit = add("fit", "run the MCMC sampler for both hierarchies",
                  with({"grid", "exceedances", "knot_stride"}, sampler));
  auto* dia = add("diagnose", "R-hat and posterior summaries for a trace", {"trace"});
  auto* rl = add("returnlevels", "return-level surfaces", with(model_inputs, {"years"}));
  auto* sc = add("sitecurve", "return-level curve and empirical overlay for sites",
                 with(model_inputs, {"sites", "years", "recent", "climatology"}));
  auto* zc = add("zetacompare", "recent exceedance rates against the posterior of zeta",
                 with(model_inputs, {"sites", "recent", "climatology"}));
  auto* syn = add("synth", "synthetic grid, exceedances and truth",
                  {"nx", "ny", "spacing", "knot_stride", "trials", "threshold", "series_days",
                   "series_start"});
  for (auto* c : {fit, dia})
    c->app->add_flag("--allow-unconverged", c->allow_unconverged, "exit 0 even if R-hat >= 1.2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::kValidation);
  }

  const std::vector<std::pair<Command*, int (*)(const Command&)>> dispatch = {
      {pre, cmd_preprocess}, {ver, cmd_verify},       {fit, cmd_fit},           {dia, cmd_diagnose},
      {rl, cmd_returnlevels}, {sc, cmd_sitecurve}, {zc, cmd_zetacompare}, {syn, cmd_synth}};
  try {
    for (const auto& [c, fn] : dispatch)
      if (c->app->parsed()) return fn(*c);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kValidation);
  }
  return 0;
}
