// qloss: command-line front end for the queue-loss toolkit.
//
// Exit status: 0 on success, 1 when a hard invariant (normalisation,
// conservation) fails, 2 on configuration or usage errors.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qloss/discrete.hpp"
#include "qloss/experiment.hpp"
#include "qloss/fokker_planck.hpp"
#include "qloss/numerics.hpp"
#include "qloss/simulate.hpp"

namespace {

using qloss::experiment::ExperimentConfig;
using qloss::experiment::Model;

struct CommonOptions {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "INI experiment file")->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "named preset (fig2-desk, loss-asymptotes, fp-regimes, bridge)");
  cmd->add_option("--out", o.out, "output directory ('-' for stdout)");
  cmd->add_option("--seed", o.seed, "base RNG seed");
  cmd->add_option("--replicas", o.replicas, "independent replicas per grid point");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

ExperimentConfig base_config(const CommonOptions& o, Model model) {
  ExperimentConfig cfg;
  if (!o.config.empty() && !o.preset.empty())
    throw qloss::experiment::ConfigError("--config and --preset are mutually exclusive");
  if (!o.config.empty()) {
    cfg = qloss::experiment::load_config(o.config);
  } else if (!o.preset.empty()) {
    cfg = qloss::experiment::preset(o.preset);
  } else {
    cfg.model = model;
    cfg.name = model == Model::discrete ? "discrete" : "continuous";
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.replicas) cfg.replicas = *o.replicas;
  return cfg;
}

int emit(const ExperimentConfig& cfg, const CommonOptions& o, const std::string& command) {
  cfg.validate();
  const auto result = qloss::experiment::run_experiment(cfg, o.threads);
  std::string dir = o.out;
  if (dir.empty() && (!o.config.empty() || !o.preset.empty())) dir = cfg.output.string();
  if (dir.empty() || dir == "-") {
    qloss::experiment::write_table(std::cout, cfg, result.table, command);
  } else {
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::path(dir) / (cfg.name + ".csv");
    std::ofstream file(path);
    if (!file) throw std::runtime_error("cannot write " + path.string());
    qloss::experiment::write_table(file, cfg, result.table, command);
    std::cerr << "wrote " << result.table.rows.size() << " rows to " << path.string() << '\n';
  }
  for (const auto& m : result.messages) std::cerr << m << '\n';
  if (result.soft_disagreements > 0)
    std::cerr << result.soft_disagreements << " point(s) outside the agreement band\n";
  return result.hard_failure ? 1 : 0;
}

// Invariant suite: each line reports one check.
int run_checks() {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    if (!ok) ++failures;
  };
  auto guarded = [&](const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      report(name, false, std::string("threw: ") + e.what());
    }
  };

  guarded("discrete-kernel", [&] {
    double worst = 0.0, worst_fixed = 0.0;
    for (double p : {0.0, 0.3, 0.5, 0.75, 1.0}) {
      const auto params = qloss::discrete::make_params(p, 12);
      const qloss::discrete::TransitionKernel k(params);
      const auto pi = qloss::discrete::stationary_distribution(params);
      for (int i = 0; i < k.size(); ++i) {
        double row = 0.0, fixed = 0.0;
        for (int j = 0; j < k.size(); ++j) {
          row += k(i, j);
          fixed += pi[j] * k(j, i);
        }
        worst = std::max(worst, std::abs(row - 1.0));
        worst_fixed = std::max(worst_fixed, std::abs(fixed - pi[i]));
      }
    }
    report("discrete-kernel", worst <= 1e-12 && worst_fixed <= 1e-10,
           "row error " + qloss::experiment::format_double(worst) + ", fixed-point error " +
               qloss::experiment::format_double(worst_fixed));
  });

  guarded("discrete-green-routes", [&] {
    const qloss::discrete::TransitionKernel k(qloss::discrete::make_params(0.4, 15));
    double worst = 0.0;
    for (std::size_t n : {1u, 7u, 40u})
      for (int i : {0, 7, 15})
        for (int j : {0, 8, 15})
          worst = std::max(worst, std::abs(qloss::discrete::green_function_power(k, n, i, j) -
                                           qloss::discrete::green_function_spectral(k, n, i, j)));
    report("discrete-green-routes", worst <= 1e-10,
           "power vs spectral " + qloss::experiment::format_double(worst));
  });

  guarded("fp-normalization", [&] {
    qloss::fp::SeriesControl ctrl;
    double worst = 0.0, worst_flux = 0.0;
    for (double v : {-5.0, 0.0, 5.0})
      for (double tau : {1e-3, 0.1, 10.0}) {
        const qloss::fp::FpParams params{2.0 * v, 2.0};
        const double t = params.time_from_tau(tau);
        const auto r = qloss::numerics::integrate(
            [&](double x) { return qloss::fp::transition_density(params, ctrl, x, t, 0.3).value; },
            0.0, 1.0, 1e-12);
        worst = std::max(worst, std::abs(r.value - 1.0));
        for (double wall : {0.0, 1.0})
          worst_flux = std::max(
              worst_flux, std::abs(qloss::fp::probability_current(params, ctrl, wall, t, 0.3).value));
      }
    report("fp-normalization", worst <= 1e-8,
           "max |int w - 1| " + qloss::experiment::format_double(worst));
    report("fp-zero-flux", worst_flux <= 1e-6,
           "max |J| at walls " + qloss::experiment::format_double(worst_flux));
  });

  guarded("laplace-known-pairs", [&] {
    double worst = 0.0;
    for (double tau : {0.1, 1.0, 5.0}) {
      const auto a = qloss::numerics::laplace_invert(
          [](std::complex<double> s) { return 1.0 / (s * s); }, tau);
      const auto b = qloss::numerics::laplace_invert(
          [](std::complex<double> s) { return 1.0 / (s + 1.0); }, tau);
      worst = std::max({worst, std::abs(a.value / tau - 1.0), std::abs(b.value / std::exp(-tau) - 1.0)});
    }
    report("laplace-known-pairs", worst <= 1e-7,
           "max relative error " + qloss::experiment::format_double(worst));
  });

  guarded("simulation-conservation", [&] {
    qloss::sim::TrafficModel traffic;
    traffic.interarrival = qloss::sim::Distribution::exponential(0.01);
    traffic.packet_size = qloss::sim::Distribution::uniform(0.0, 0.03);
    traffic.r_out = 1.0;
    const auto log = qloss::sim::run(traffic, 2000.0, 7);
    report("simulation-conservation", log.conserves(),
           "residual " + qloss::experiment::format_double(log.totals.conservation_residual()));
  });

  std::cout << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
            << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss statistics of finite-buffer queues: exact, continuum and Monte Carlo"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qloss::experiment::kVersion));

  CommonOptions common;

  std::vector<double> p_list, a_list, s2_list, t_list;
  std::vector<int> L_list;
  std::vector<std::size_t> N_list;
  std::size_t windows = 2000;

  auto* exact = app.add_subcommand("exact-discrete", "exact loss mean, variance and chi_N");
  auto* simd = app.add_subcommand("sim-discrete", "exact values plus Monte Carlo estimates");
  for (auto* cmd : {exact, simd}) {
    add_common(cmd, common);
    cmd->add_option("--p", p_list, "arrival probabilities")->delimiter(',');
    cmd->add_option("--L", L_list, "buffer capacities")->delimiter(',');
    cmd->add_option("--N", N_list, "window lengths in slots")->delimiter(',');
  }
  simd->add_option("--windows", windows, "Monte Carlo windows per replica");

  auto* fpe = app.add_subcommand("fp-eval", "continuous-model loss moments and probabilities");
  add_common(fpe, common);
  fpe->add_option("--a", a_list, "drifts")->delimiter(',');
  fpe->add_option("--sigma2", s2_list, "diffusion coefficients")->delimiter(',');
  fpe->add_option("--t", t_list, "window lengths")->delimiter(',');

  auto* simc = app.add_subcommand("sim-continuous",
                                  "packet simulation compared with fitted continuous predictions");
  add_common(simc, common);
  std::string interarrival = "exponential:0.01", packet_size = "deterministic:0.01";
  double r_out = 1.0, duration = 2e5, trace_dt = 0.0;
  simc->add_option("--interarrival", interarrival, "kind:params");
  simc->add_option("--packet-size", packet_size, "kind:params");
  simc->add_option("--r-out", r_out, "service rate (buffer units / time)");
  simc->add_option("--duration", duration, "simulated time");
  simc->add_option("--trace-dt", trace_dt, "trace cell length");
  simc->add_option("--t", t_list, "window lengths")->delimiter(',');

  auto* sweep = app.add_subcommand("sweep", "run the experiment described by --config or --preset");
  add_common(sweep, common);

  auto* check = app.add_subcommand("check", "run the invariant suite");

  CLI11_PARSE(app, argc, argv);

  std::string command;
  for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);

  try {
    if (check->parsed()) return run_checks();
    if (sweep->parsed()) {
      if (common.config.empty() && common.preset.empty())
        throw qloss::experiment::ConfigError("sweep needs --config or --preset");
      return emit(base_config(common, Model::discrete), common, command);
    }
    if (exact->parsed() || simd->parsed()) {
      auto cfg = base_config(common, Model::discrete);
      if (!p_list.empty()) cfg.p = p_list;
      if (!L_list.empty()) cfg.L = L_list;
      if (!N_list.empty()) cfg.N = N_list;
      if (exact->parsed()) {
        cfg.windows = 0;
      } else if (simd->count("--windows") > 0 || cfg.windows == 0) {
        cfg.windows = windows;
      }
      cfg.model = Model::discrete;
      return emit(cfg, common, command);
    }
    if (fpe->parsed()) {
      auto cfg = base_config(common, Model::continuous);
      cfg.model = Model::continuous;
      cfg.traffic.reset();
      if (!a_list.empty()) cfg.a = a_list;
      if (!s2_list.empty()) cfg.sigma2 = s2_list;
      if (!t_list.empty()) cfg.t = t_list;
      return emit(cfg, common, command);
    }
    if (simc->parsed()) {
      auto cfg = base_config(common, Model::continuous);
      cfg.model = Model::continuous;
      if (!cfg.traffic || simc->count("--interarrival") || simc->count("--packet-size") ||
          simc->count("--r-out")) {
        qloss::sim::TrafficModel traffic;
        if (cfg.traffic) traffic = *cfg.traffic;
        if (!cfg.traffic || simc->count("--interarrival"))
          traffic.interarrival = qloss::sim::Distribution::parse(interarrival);
        if (!cfg.traffic || simc->count("--packet-size"))
          traffic.packet_size = qloss::sim::Distribution::parse(packet_size);
        if (!cfg.traffic || simc->count("--r-out")) traffic.r_out = r_out;
        cfg.traffic = traffic;
      }
      if (cfg.duration <= 0.0 || simc->count("--duration")) cfg.duration = duration;
      if (simc->count("--trace-dt")) cfg.trace_dt = trace_dt;
      if (!t_list.empty()) cfg.t = t_list;
      return emit(cfg, common, command);
    }
  } catch (const qloss::experiment::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
