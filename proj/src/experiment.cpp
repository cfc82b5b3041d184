#include "qloss/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qloss/discrete.hpp"
#include "qloss/rng.hpp"
#include "qloss/stats.hpp"

namespace qloss::experiment {

namespace pt = boost::property_tree;

ConfigError::ConfigError(const std::string& message, std::string key, long line)
    : std::runtime_error([&] {
        std::string m = "config error";
        if (line > 0) m += " at line " + std::to_string(line);
        if (!key.empty()) m += " (key '" + key + "')";
        return m + ": " + message;
      }()),
      detail_(message),
      key_(std::move(key)),
      line_(line) {}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream out;
  out << std::setprecision(12) << x;
  return out.str();
}

namespace {

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"experiment", {"model", "name", "replicas", "seed", "output", "agreement_sigmas"}},
    {"discrete", {"p", "L", "N", "windows", "mc_max_steps"}},
    {"continuous", {"a", "sigma2", "t", "series_tol", "laplace_nodes"}},
    {"traffic",
     {"interarrival", "packet_size", "r_out", "duration", "trace_dt", "fit_dt",
      "correlation_lag"}},
};

double to_double(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + text + "'", key);
  }
}

std::uint64_t to_u64(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected a non-negative integer, got '" + text + "'", key);
  }
}

// "1,2,3" or "logspace:LO,HI,COUNT".
std::vector<double> to_list(std::string text, const std::string& key) {
  boost::algorithm::trim(text);
  std::vector<double> out;
  if (text.empty()) return out;
  if (boost::algorithm::starts_with(text, "logspace:")) {
    std::vector<std::string> parts;
    const std::string body = text.substr(9);
    boost::algorithm::split(parts, body, boost::algorithm::is_any_of(","));
    if (parts.size() != 3) throw ConfigError("logspace needs LO,HI,COUNT", key);
    const double lo = to_double(boost::algorithm::trim_copy(parts[0]), key);
    const double hi = to_double(boost::algorithm::trim_copy(parts[1]), key);
    const auto count = to_u64(boost::algorithm::trim_copy(parts[2]), key);
    if (!(lo > 0.0 && hi >= lo) || count < 1) throw ConfigError("bad logspace range", key);
    for (std::uint64_t i = 0; i < count; ++i) {
      const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
      out.push_back(lo * std::pow(hi / lo, f));
    }
    return out;
  }
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::algorithm::is_any_of(","));
  for (auto& part : parts) out.push_back(to_double(boost::algorithm::trim_copy(part), key));
  return out;
}

std::vector<std::size_t> to_counts(const std::vector<double>& xs, const std::string& key) {
  std::vector<std::size_t> out;
  for (double x : xs) {
    if (!(x >= 1.0)) throw ConfigError("window counts must be >= 1", key);
    const auto n = static_cast<std::size_t>(std::llround(x));
    if (out.empty() || out.back() != n) out.push_back(n);
  }
  return out;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (replicas < 1) throw ConfigError("replicas must be >= 1", "experiment.replicas");
  if (!(agreement_sigmas > 0.0))
    throw ConfigError("agreement_sigmas must be positive", "experiment.agreement_sigmas");
  if (model == Model::discrete) {
    if (p.empty() || L.empty() || N.empty())
      throw ConfigError("empty parameter grid: p, L and N all need values", "discrete");
    for (double x : p)
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("p must lie in [0, 1]", "discrete.p");
    for (int x : L)
      if (x < 1) throw ConfigError("L must be >= 1", "discrete.L");
  } else {
    if (t.empty()) throw ConfigError("empty parameter grid: t needs values", "continuous.t");
    for (double x : t)
      if (!(x > 0.0)) throw ConfigError("window lengths must be positive", "continuous.t");
    if (traffic) {
      try {
        traffic->validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what(), "traffic");
      }
      if (!(duration > 0.0)) throw ConfigError("duration must be positive", "traffic.duration");
      if (correlation_lag < 2)
        throw ConfigError("correlation_lag must be >= 2", "traffic.correlation_lag");
    } else {
      if (a.empty() || sigma2.empty())
        throw ConfigError("empty parameter grid: a and sigma2 need values", "continuous");
      for (double s : sigma2)
        if (!(s > 0.0)) throw ConfigError("sigma2 must be positive", "continuous.sigma2");
    }
    if (!(series_tol > 0.0)) throw ConfigError("series_tol must be positive", "continuous.series_tol");
    if (laplace_nodes < 8) throw ConfigError("laplace_nodes must be >= 8", "continuous.laplace_nodes");
  }
}

std::vector<std::uint64_t> ExperimentConfig::replica_seeds() const {
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < replicas; ++r) seeds.push_back(replica_seed(seed, r));
  return seeds;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "model=" << (model == Model::discrete ? "discrete" : "continuous") << ";name=" << name
      << ";replicas=" << replicas << ";seed=" << seed
      << ";agreement_sigmas=" << format_double(agreement_sigmas);
  if (model == Model::discrete) {
    out << ";p=" << join(p) << ";L=" << join(L) << ";N=" << join(N) << ";windows=" << windows
        << ";mc_max_steps=" << format_double(mc_max_steps);
  } else {
    out << ";a=" << join(a) << ";sigma2=" << join(sigma2) << ";t=" << join(t)
        << ";series_tol=" << format_double(series_tol) << ";laplace_nodes=" << laplace_nodes;
    if (traffic) {
      out << ";interarrival=" << traffic->interarrival.to_string()
          << ";packet_size=" << traffic->packet_size.to_string()
          << ";r_out=" << format_double(traffic->r_out) << ";duration=" << format_double(duration)
          << ";trace_dt=" << format_double(trace_dt) << ";fit_dt=" << format_double(fit_dt)
          << ";correlation_lag=" << correlation_lag;
    }
  }
  return out.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

namespace {

// Line of each "section.key" and of each "[section]" header, 1-based.
std::map<std::string, long> key_lines(const std::string& text) {
  std::map<std::string, long> lines;
  std::istringstream in(text);
  std::string section, line;
  for (long n = 1; std::getline(in, line); ++n) {
    const auto trimmed = boost::algorithm::trim_copy(line);
    if (trimmed.empty() || trimmed[0] == ';' || trimmed[0] == '#') continue;
    if (trimmed.front() == '[' && trimmed.back() == ']') {
      section = boost::algorithm::trim_copy(trimmed.substr(1, trimmed.size() - 2));
      lines.emplace(section, n);
      continue;
    }
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) continue;
    const auto key = boost::algorithm::trim_copy(trimmed.substr(0, eq));
    lines.emplace(section.empty() ? key : section + "." + key, n);
  }
  return lines;
}

ExperimentConfig parse_tree(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.message(), {}, static_cast<long>(e.line()));
  }
  for (const auto& [section, body] : tree) {
    const auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end())
      throw ConfigError("unknown section [" + section + "]", section);
    if (body.empty() && !body.data().empty())
      throw ConfigError("key outside of any section", section);
    for (const auto& [key, value] : body)
      if (!known->second.contains(key))
        throw ConfigError("unknown key in [" + section + "]", section + "." + key);
  }
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.')))
      return boost::algorithm::trim_copy(*v);
    return std::nullopt;
  };

  ExperimentConfig cfg;
  if (auto v = get("experiment.model")) {
    if (*v == "discrete") {
      cfg.model = Model::discrete;
    } else if (*v == "continuous") {
      cfg.model = Model::continuous;
    } else {
      throw ConfigError("model must be discrete or continuous", "experiment.model");
    }
  }
  if (auto v = get("experiment.name")) cfg.name = *v;
  if (auto v = get("experiment.replicas")) cfg.replicas = to_u64(*v, "experiment.replicas");
  if (auto v = get("experiment.seed")) cfg.seed = to_u64(*v, "experiment.seed");
  if (auto v = get("experiment.output")) cfg.output = *v;
  if (auto v = get("experiment.agreement_sigmas"))
    cfg.agreement_sigmas = to_double(*v, "experiment.agreement_sigmas");

  if (auto v = get("discrete.p")) cfg.p = to_list(*v, "discrete.p");
  if (auto v = get("discrete.L")) {
    for (double x : to_list(*v, "discrete.L")) {
      if (x != std::floor(x)) throw ConfigError("L must be an integer", "discrete.L");
      cfg.L.push_back(static_cast<int>(x));
    }
  }
  if (auto v = get("discrete.N")) cfg.N = to_counts(to_list(*v, "discrete.N"), "discrete.N");
  if (auto v = get("discrete.windows")) cfg.windows = to_u64(*v, "discrete.windows");
  if (auto v = get("discrete.mc_max_steps"))
    cfg.mc_max_steps = to_double(*v, "discrete.mc_max_steps");

  if (auto v = get("continuous.a")) cfg.a = to_list(*v, "continuous.a");
  if (auto v = get("continuous.sigma2")) cfg.sigma2 = to_list(*v, "continuous.sigma2");
  if (auto v = get("continuous.t")) cfg.t = to_list(*v, "continuous.t");
  if (auto v = get("continuous.series_tol"))
    cfg.series_tol = to_double(*v, "continuous.series_tol");
  if (auto v = get("continuous.laplace_nodes"))
    cfg.laplace_nodes = static_cast<int>(to_u64(*v, "continuous.laplace_nodes"));

  if (tree.get_child_optional("traffic")) {
    sim::TrafficModel traffic;
    try {
      if (auto v = get("traffic.interarrival")) traffic.interarrival = sim::Distribution::parse(*v);
      if (auto v = get("traffic.packet_size")) traffic.packet_size = sim::Distribution::parse(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), "traffic");
    }
    if (auto v = get("traffic.r_out")) traffic.r_out = to_double(*v, "traffic.r_out");
    if (auto v = get("traffic.duration")) cfg.duration = to_double(*v, "traffic.duration");
    if (auto v = get("traffic.trace_dt")) cfg.trace_dt = to_double(*v, "traffic.trace_dt");
    if (auto v = get("traffic.fit_dt")) cfg.fit_dt = to_double(*v, "traffic.fit_dt");
    if (auto v = get("traffic.correlation_lag"))
      cfg.correlation_lag = to_u64(*v, "traffic.correlation_lag");
    cfg.traffic = traffic;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::istringstream body(text);
  try {
    return parse_tree(body);
  } catch (const ConfigError& e) {
    if (e.line() > 0 || e.key().empty()) throw;
    const auto lines = key_lines(text);
    const auto it = lines.find(e.key());
    if (it == lines.end()) throw;
    throw ConfigError(e.detail(), e.key(), it->second);
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

std::vector<std::string> preset_names() {
  return {"fig2-desk", "loss-asymptotes", "fp-regimes", "bridge"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.name = name;
  cfg.seed = 20240601;
  if (name == "fig2-desk") {
    cfg.model = Model::discrete;
    cfg.p = {0.5};
    cfg.L = {100};
    cfg.N = to_counts(to_list("logspace:10,1e6,21", "N"), "N");
    cfg.windows = 2000;
    cfg.mc_max_steps = 2e7;
  } else if (name == "loss-asymptotes") {
    cfg.model = Model::discrete;
    cfg.p = {0.3, 0.5, 0.7};
    cfg.L = {20};
    cfg.N = {1000};
    cfg.windows = 1000;
  } else if (name == "fp-regimes") {
    cfg.model = Model::continuous;
    cfg.a = {-2.0, 0.0, 2.0};
    cfg.sigma2 = {2.0};
    cfg.t = to_list("logspace:1e-3,1e2,11", "t");
  } else if (name == "bridge") {
    cfg.model = Model::continuous;
    sim::TrafficModel traffic;
    traffic.interarrival = sim::Distribution::exponential(0.01);
    traffic.packet_size = sim::Distribution::deterministic(0.01);
    traffic.r_out = 1.0;
    cfg.traffic = traffic;
    cfg.duration = 4e5;
    cfg.trace_dt = 2.0;
    cfg.t = {10.0, 20.0, 40.0};
    cfg.replicas = 2;
  } else {
    throw ConfigError("unknown preset '" + name + "'", "preset");
  }
  cfg.validate();
  return cfg;
}

WindowPrediction predict_window_statistics(const fp::FpParams& params,
                                           const fp::SeriesControl& ctrl, double t,
                                           std::size_t lag) {
  WindowPrediction out;
  out.mean = fp::loss_moment(params, ctrl, 1, t).value;
  const double m2 = fp::loss_moment(params, ctrl, 2, t).value;
  out.variance = m2 - out.mean * out.mean;
  out.zero_probability = 1.0 - fp::loss_probability(params, ctrl, t).value;
  if (lag >= 2) {
    const double gap = static_cast<double>(lag - 1) * t;
    out.correlation = fp::loss_correlator(params, ctrl, t, t, gap).value / out.variance;
  }
  return out;
}

namespace {

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) body(i);
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

struct RowResult {
  std::vector<std::vector<std::string>> rows;
  bool hard_failure = false;
  std::size_t soft_disagreements = 0;
  std::vector<std::string> messages;
};

std::string flag(bool ok) { return ok ? "pass" : "fail"; }

bool within(double x, double ref, double se, double sigmas) {
  return std::abs(x - ref) <= sigmas * se;
}

// One task per (p, L, N, replica); replica -1 when no Monte Carlo is run.
RowResult discrete_task(const ExperimentConfig& cfg, double p, int L, std::size_t N, long replica,
                        std::uint64_t seed) {
  RowResult out;
  const auto params = discrete::make_params(p, L);
  const discrete::TransitionKernel kernel(params);
  const auto pi = discrete::stationary_distribution(params);
  double pi_sum = 0.0;
  for (double x : pi) pi_sum += x;
  double worst_row = 0.0;
  for (int i = 0; i < kernel.size(); ++i) {
    double s = 0.0;
    for (double x : kernel.row(i)) s += x;
    worst_row = std::max(worst_row, std::abs(s - 1.0));
  }
  const double m = discrete::mean_loss_rate_exact(params);
  const double mean = m * static_cast<double>(N);
  const double var = discrete::loss_variance_exact(kernel, N);
  const bool invariants_ok = std::abs(pi_sum - 1.0) <= 1e-12 && worst_row <= 1e-12 && var >= 0.0;
  if (!invariants_ok) {
    out.hard_failure = true;
    out.messages.push_back("invariant failure at p=" + format_double(p) + " L=" + std::to_string(L));
  }
  const double chi = mean > 0.0 ? var / mean : std::nan("");
  double chi_inf = std::nan("");
  try {
    chi_inf = discrete::chi_infinity_asymptote(params);
  } catch (const std::exception&) {
  }

  std::string mc_mean = "nan", mc_mean_se = "nan", mc_chi = "nan", mc_chi_se = "nan";
  std::string agree = "na";
  std::string status = invariants_ok ? "ok" : "invariant-failure";
  if (replica >= 0) {
    const double steps = static_cast<double>(cfg.windows) * static_cast<double>(N);
    if (steps > cfg.mc_max_steps) {
      status += ";analytic-only";
    } else {
      stats::WindowedSeries series;
      series.values = discrete::simulate_window_losses(params, cfg.windows, N, seed);
      series.window_length = static_cast<double>(N);
      const auto mv = stats::mean_and_variance(series);
      mc_mean = format_double(mv.mean.value);
      mc_mean_se = format_double(mv.mean.se);
      bool ok = within(mv.mean.value, mean, mv.mean.se, cfg.agreement_sigmas);
      if (mv.mean.value == 0.0) {
        // No losses at all: consistent unless the exact count makes that implausible.
        const double expected = mean * static_cast<double>(cfg.windows);
        ok = std::exp(-expected) > 1e-3;
        status += ";no-losses-observed";
      } else {
        const auto c = stats::compressibility_estimate(series, static_cast<double>(N));
        mc_chi = format_double(c.chi.value);
        mc_chi_se = format_double(c.chi.se);
        ok = ok && within(c.chi.value, chi, c.chi.se, cfg.agreement_sigmas);
      }
      agree = flag(ok);
      if (!ok) ++out.soft_disagreements;
    }
  }
  out.rows.push_back({format_double(p), std::to_string(L), std::to_string(N),
                      replica >= 0 ? std::to_string(replica) : "-",
                      replica >= 0 ? std::to_string(seed) : "-",
                      format_double(params.crossover_window()), format_double(m),
                      format_double(discrete::mean_loss_rate_asymptote(params)),
                      format_double(mean), format_double(var), format_double(chi),
                      format_double(chi_inf), mc_mean, mc_mean_se, mc_chi, mc_chi_se, agree,
                      status});
  return out;
}

const std::vector<std::string> kDiscreteColumns = {
    "p", "L", "N", "replica", "seed", "N0", "mean_rate_exact", "mean_rate_asymptote",
    "mean_exact", "var_exact", "chi_exact", "chi_inf_asymptote", "mean_mc", "mean_mc_se",
    "chi_mc", "chi_mc_se", "agree", "status"};

const std::vector<std::string> kFpColumns = {
    "a", "sigma2", "t", "v", "tau", "p1", "m1", "m2", "m2_err", "var", "var_longtime",
    "longtime_regime", "p_loss", "p_loss_short_time", "normalization_error", "status"};

RowResult fp_task(const ExperimentConfig& cfg, double a, double s2, double t) {
  RowResult out;
  const fp::FpParams params{a, s2};
  fp::SeriesControl ctrl;
  ctrl.tol = cfg.series_tol;
  ctrl.laplace_nodes = cfg.laplace_nodes;
  std::vector<std::string> row{format_double(a), format_double(s2), format_double(t),
                               format_double(params.v()), format_double(params.tau(t))};
  try {
    const double p1 = fp::stationary_density(params, 1.0);
    const auto m1 = fp::loss_moment(params, ctrl, 1, t);
    const auto m2 = fp::loss_moment(params, ctrl, 2, t);
    const auto lt = fp::loss_variance_longtime(params, t);
    const auto pl = fp::loss_probability(params, ctrl, t);
    double norm_err = std::nan("");
    std::string status = "ok";
    try {
      const auto norm = numerics::integrate(
          [&](double x) { return fp::transition_density(params, ctrl, x, t, 0.5).value; }, 0.0, 1.0,
          1e-12);
      norm_err = std::abs(norm.value - 1.0);
      if (norm_err > 1e-8) {
        out.hard_failure = true;
        status = "normalization-failure";
        out.messages.push_back("normalization failure at a=" + format_double(a) +
                               " t=" + format_double(t));
      }
    } catch (const numerics::NumericalError& e) {
      status = std::string("series-unavailable: ") + e.what();
    }
    row.insert(row.end(),
               {format_double(p1), format_double(m1.value), format_double(m2.value),
                format_double(m2.error), format_double(m2.value - m1.value * m1.value),
                format_double(lt.value), lt.in_regime ? "1" : "0", format_double(pl.value),
                format_double(fp::loss_probability_short_time(params, t)), format_double(norm_err),
                status});
  } catch (const std::exception& e) {
    while (row.size() + 1 < kFpColumns.size()) row.push_back("nan");
    row.push_back(std::string("error: ") + e.what());
    out.messages.push_back(row.back());
  }
  out.rows.push_back(std::move(row));
  return out;
}

const std::vector<std::string> kBridgeColumns = {
    "t", "replica", "seed", "a_hat", "a_se", "sigma2_hat", "sigma2_se", "windows",
    "mean_sim", "mean_se", "mean_fp", "var_sim", "var_se", "var_fp", "p0_sim", "p0_se", "p0_fp",
    "corr_sim", "corr_se", "corr_fp", "conserved", "agree", "status"};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, unsigned threads) {
  config.validate();
  ExperimentResult result;
  std::vector<std::function<RowResult()>> tasks;
  const auto seeds = config.replica_seeds();
  std::vector<std::optional<sim::EventLog>> logs;
  std::vector<std::string> errors;

  if (config.model == Model::discrete) {
    result.table.columns = kDiscreteColumns;
    for (double p : config.p)
      for (int L : config.L)
        for (std::size_t N : config.N) {
          if (config.windows == 0) {
            tasks.push_back([=, &config] { return discrete_task(config, p, L, N, -1, 0); });
          } else {
            for (std::size_t r = 0; r < config.replicas; ++r)
              tasks.push_back([=, &config] {
                return discrete_task(config, p, L, N, static_cast<long>(r), seeds[r]);
              });
          }
        }
  } else if (!config.traffic) {
    result.table.columns = kFpColumns;
    for (double a : config.a)
      for (double s2 : config.sigma2)
        for (double t : config.t) tasks.push_back([=, &config] { return fp_task(config, a, s2, t); });
  } else {
    result.table.columns = kBridgeColumns;
    // One simulation per replica, shared by all window lengths.
    logs.resize(config.replicas);
    errors.resize(config.replicas);
    parallel_for(config.replicas, threads, [&](std::size_t r) {
      try {
        sim::RunOptions opts;
        opts.trace_dt = config.trace_dt;
        logs[r] = sim::run(*config.traffic, config.duration, seeds[r], opts);
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    });
    for (double t : config.t)
      for (std::size_t r = 0; r < config.replicas; ++r)
        tasks.push_back([=, &config, &logs, &errors]() -> RowResult {
          RowResult out;
          std::vector<std::string> row{format_double(t), std::to_string(r), std::to_string(seeds[r])};
          try {
            if (!logs[r]) throw std::runtime_error(errors[r]);
            const auto& log = *logs[r];
            const bool conserved = log.conserves();
            const double fit_dt = config.fit_dt > 0.0 ? config.fit_dt : log.trace_dt;
            const auto fit = sim::estimate_drift_diffusion(log, fit_dt);
            const auto sample = sim::window_losses(log, t, t, 20.0 / fit.sigma2);
            stats::WindowedSeries series{sample.x, t, t, false};
            const auto mv = stats::mean_and_variance(series);
            const auto p0 = stats::zero_fraction(series);
            const std::size_t lag = config.correlation_lag;
            const auto corr = stats::correlation_estimate(series, std::vector<std::size_t>{lag});
            fp::SeriesControl ctrl;
            ctrl.tol = config.series_tol;
            ctrl.laplace_nodes = config.laplace_nodes;
            const auto pred = predict_window_statistics({fit.a, fit.sigma2}, ctrl, t, lag);
            const double k = config.agreement_sigmas;
            const bool agree = within(mv.mean.value, pred.mean, mv.mean.se, k) &&
                               within(mv.variance.value, pred.variance, mv.variance.se, k) &&
                               within(p0.value, pred.zero_probability, p0.se, k) &&
                               within(corr[0].value.value, pred.correlation, corr[0].value.se, k);
            if (!agree) ++out.soft_disagreements;
            if (!conserved) {
              out.hard_failure = true;
              out.messages.push_back("conservation failure in replica " + std::to_string(r));
            }
            row.insert(row.end(),
                       {format_double(fit.a), format_double(fit.a_se), format_double(fit.sigma2),
                        format_double(fit.sigma2_se), std::to_string(sample.x.size()),
                        format_double(mv.mean.value), format_double(mv.mean.se),
                        format_double(pred.mean), format_double(mv.variance.value),
                        format_double(mv.variance.se), format_double(pred.variance),
                        format_double(p0.value), format_double(p0.se),
                        format_double(pred.zero_probability), format_double(corr[0].value.value),
                        format_double(corr[0].value.se), format_double(pred.correlation),
                        conserved ? "1" : "0", flag(agree), conserved ? "ok" : "conservation-failure"});
          } catch (const std::exception& e) {
            while (row.size() + 1 < kBridgeColumns.size()) row.push_back("nan");
            row.push_back(std::string("error: ") + e.what());
            out.messages.push_back(row.back());
          }
          out.rows.push_back(std::move(row));
          return out;
        });
  }

  std::vector<RowResult> partial(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    try {
      partial[i] = tasks[i]();
    } catch (const std::exception& e) {
      partial[i].messages.push_back(std::string("error: ") + e.what());
      partial[i].rows.push_back(std::vector<std::string>(result.table.columns.size() - 1, "nan"));
      partial[i].rows.back().push_back(std::string("error: ") + e.what());
    }
  });
  for (auto& part : partial) {
    for (auto& row : part.rows) result.table.rows.push_back(std::move(row));
    result.hard_failure = result.hard_failure || part.hard_failure;
    result.soft_disagreements += part.soft_disagreements;
    for (auto& m : part.messages) result.messages.push_back(std::move(m));
  }
  return result;
}

void write_table(std::ostream& out, const ExperimentConfig& config, const Table& table,
                 const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config.hash();
  out << "# qloss " << kVersion << '\n'
      << "# command: " << command << '\n'
      << "# config_hash: " << hash.str() << '\n'
      << "# seeds: " << join(config.replica_seeds()) << '\n'
      << "# generated: " << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      const bool quote = row[i].find(',') != std::string::npos;
      out << (i ? "," : "") << (quote ? "\"" : "") << row[i] << (quote ? "\"" : "");
    }
    out << '\n';
  }
}

}  // namespace qloss::experiment
