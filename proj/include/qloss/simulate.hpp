#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qloss/rng.hpp"

// Packet-level simulation of a finite buffer (capacity 1) drained at a
// constant rate. A packet is accepted iff level + size <= 1 at its arrival.
namespace qloss::sim {

class InsufficientSamples : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Distribution {
  enum class Kind { exponential, deterministic, uniform };
  Kind kind = Kind::deterministic;
  double first = 0.0;   // mean (exponential), value (deterministic), lower bound (uniform)
  double second = 0.0;  // upper bound (uniform)

  static Distribution exponential(double mean) { return {Kind::exponential, mean, 0.0}; }
  static Distribution deterministic(double value) { return {Kind::deterministic, value, 0.0}; }
  static Distribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }

  // "exponential:MEAN", "deterministic:VALUE", "uniform:LO,HI".
  static Distribution parse(std::string_view spec);
  std::string to_string() const;

  // Throws std::invalid_argument for negative or non-finite parameters.
  void validate() const;
  double mean() const;
  double variance() const;
  double sample(SplitMix64& rng) const;
};

struct TrafficModel {
  Distribution interarrival = Distribution::exponential(0.01);
  Distribution packet_size = Distribution::deterministic(0.01);
  double r_out = 1.0;  // buffer units / time

  // Throws std::invalid_argument on bad distributions, r_out <= 0, a
  // non-positive mean interarrival, or a mean packet size above 0.05.
  void validate() const;
  double eta0() const { return 1.0 / r_out; }
  double r_in() const { return packet_size.mean() / interarrival.mean(); }
  // r_in * eta0 - 1; small in the near-critical regime.
  double near_critical_indicator() const { return r_in() * eta0() - 1.0; }
  // Free-queue drift and diffusion from the renewal-reward central limit:
  // a = r_in - r_out, sigma2 = lambda (Var s + E[s]^2 cv_eta^2).
  double drift() const;
  double diffusion() const;
};

struct RunOptions {
  bool record_events = false;
  double trace_dt = 0.0;   // 0 selects 20 mean interarrivals
  double initial_level = 0.0;
};

struct ArrivalEvent {
  double time = 0.0;
  double size = 0.0;
  bool accepted = false;
  double level_before = 0.0;
  double level_after = 0.0;
};

struct Drop {
  double time = 0.0;
  double size = 0.0;
};

struct IdleInterval {
  double start = 0.0;
  double end = 0.0;
};

// Coarse-grained record of one trace cell [k dt, (k+1) dt).
struct TraceCell {
  double level_start = 0.0;
  double level_min = 0.0;
  double level_max = 0.0;
  double offered = 0.0;  // volume of all arrivals in the cell
  double served = 0.0;
  double lost = 0.0;
  double idle = 0.0;
};

struct Totals {
  double arrived = 0.0;
  double accepted = 0.0;
  double dropped = 0.0;
  double served = 0.0;
  double idle_time = 0.0;
  std::uint64_t arrivals = 0;
  std::uint64_t drops = 0;
  double initial_level = 0.0;
  double final_level = 0.0;
  double level_min = 0.0;
  double level_max = 0.0;

  // arrived - served - dropped - (final - initial).
  double conservation_residual() const;
};

struct EventLog {
  TrafficModel traffic;
  double duration = 0.0;
  std::uint64_t seed = 0;
  double trace_dt = 0.0;
  std::vector<ArrivalEvent> events;  // empty unless RunOptions::record_events
  std::vector<Drop> drops;
  std::vector<IdleInterval> idle;
  std::vector<TraceCell> trace;
  Totals totals;

  // |residual| <= 1e-9 * max(1, arrived) and all levels in [0, 1].
  bool conserves() const;
};

// Event-driven run from t = 0 to `duration`. Deterministic given the seed.
EventLog run(const TrafficModel& traffic, double duration, std::uint64_t seed,
             const RunOptions& opts = {});

// Queue level at time t reconstructed from recorded events (requires
// record_events); piecewise linear with slope -r_out, clipped at 0.
double level_at(const EventLog& log, double t);

struct DriftDiffusion {
  double a = 0.0;
  double sigma2 = 0.0;
  double a_se = 0.0;
  double sigma2_se = 0.0;
  std::size_t samples = 0;
};

// Moments of the free increment (offered volume - r_out dt) over blocks of
// length dt whose starting level lies in [0.1, 0.9]. dt must be a multiple of
// the log's trace_dt and at least 20 mean interarrivals. Throws
// InsufficientSamples with fewer than 30 qualifying blocks.
DriftDiffusion estimate_drift_diffusion(const EventLog& log, double dt);

struct LossSample {
  double t_window = 0.0;
  double spacing = 0.0;
  double t_start = 0.0;  // start of the first window
  std::vector<double> x;     // lost volume per window
  std::vector<double> idle;  // server idle time per window

  bool overlapping() const { return spacing < t_window; }
};

// Windows [t_start + i spacing, t_start + i spacing + t_window) with t_start =
// warmup. Without a warmup, 10 relaxation times 2 / sigma2_hat are skipped.
LossSample window_losses(const EventLog& log, double t_window, double spacing,
                         std::optional<double> warmup = std::nullopt);

// Columns: window_index,t_start,lost_volume,idle_time
void write_loss_csv(std::ostream& out, const LossSample& sample);
// Columns: time,size,accepted,level_before,level_after
void write_event_csv(std::ostream& out, const EventLog& log);

}  // namespace qloss::sim
