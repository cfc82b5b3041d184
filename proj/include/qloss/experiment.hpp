#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qloss/fokker_planck.hpp"
#include "qloss/simulate.hpp"

// Experiment configuration, grid dispatch and CSV output used by the CLI.
namespace qloss::experiment {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string& message, std::string key = {}, long line = 0);
  const std::string& key() const { return key_; }
  long line() const { return line_; }
  const std::string& detail() const { return detail_; }

private:
  std::string detail_;
  std::string key_;
  long line_;
};

enum class Model { discrete, continuous };

struct ExperimentConfig {
  Model model = Model::discrete;
  std::string name = "experiment";
  std::size_t replicas = 1;
  std::uint64_t seed = 1;
  std::filesystem::path output = "qloss-out";
  double agreement_sigmas = 3.0;

  // [discrete]
  std::vector<double> p;
  std::vector<int> L;
  std::vector<std::size_t> N;
  std::size_t windows = 0;           // Monte Carlo windows per replica; 0 = exact only
  double mc_max_steps = 5e7;         // larger points are reported analytic-only

  // [continuous]
  std::vector<double> a;
  std::vector<double> sigma2;
  std::vector<double> t;             // window lengths (time)
  double series_tol = 1e-10;
  int laplace_nodes = 32;

  // [traffic]: packet simulation matched against the FP predictions.
  std::optional<sim::TrafficModel> traffic;
  double duration = 0.0;
  double trace_dt = 0.0;
  double fit_dt = 0.0;               // 0 selects the trace cell length
  std::size_t correlation_lag = 2;

  // Throws ConfigError when the grid is empty or a value is out of range.
  void validate() const;
  std::vector<std::uint64_t> replica_seeds() const;
  // Stable text form; the config hash is FNV-1a of this string.
  std::string canonical() const;
  std::uint64_t hash() const;
};

// INI text: [experiment], [discrete], [continuous], [traffic] sections.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

// "fig2-desk", "loss-asymptotes", "fp-regimes", "bridge".
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct ExperimentResult {
  Table table;
  bool hard_failure = false;
  std::size_t soft_disagreements = 0;
  std::vector<std::string> messages;
};

// Grid points and replicas are evaluated on `threads` workers (0 = hardware
// concurrency); rows are ordered by grid point, then replica.
ExperimentResult run_experiment(const ExperimentConfig& config, unsigned threads = 0);

// Writes `# key: value` metadata lines, then the CSV table. The timestamp line
// is the only part that varies between identical runs.
void write_table(std::ostream& out, const ExperimentConfig& config, const Table& table,
                 const std::string& command);

std::string format_double(double x);

// Window statistics predicted by the continuous model for consecutive
// non-overlapping windows of length t, stationary start.
struct WindowPrediction {
  double mean = 0.0;
  double variance = 0.0;
  double zero_probability = 0.0;
  double correlation = 0.0;  // normalised, windows `lag` indices apart
};
WindowPrediction predict_window_statistics(const fp::FpParams& params,
                                           const fp::SeriesControl& ctrl, double t,
                                           std::size_t lag);

}  // namespace qloss::experiment
