#include "qloss/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "qloss/numerics.hpp"

namespace qloss::sim {

namespace {

double parse_number(std::string_view text, std::string_view spec) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw std::invalid_argument("bad number '" + std::string(text) + "' in distribution '" +
                                std::string(spec) + "'");
  return value;
}

}  // namespace

Distribution Distribution::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("distribution '" + std::string(spec) +
                                "' must have the form kind:parameters");
  const auto kind = spec.substr(0, colon);
  const auto args = spec.substr(colon + 1);
  Distribution d;
  if (kind == "exponential") {
    d = exponential(parse_number(args, spec));
  } else if (kind == "deterministic") {
    d = deterministic(parse_number(args, spec));
  } else if (kind == "uniform") {
    const auto comma = args.find(',');
    if (comma == std::string_view::npos)
      throw std::invalid_argument("uniform distribution needs lo,hi: '" + std::string(spec) + "'");
    d = uniform(parse_number(args.substr(0, comma), spec),
                parse_number(args.substr(comma + 1), spec));
  } else {
    throw std::invalid_argument("unknown distribution kind '" + std::string(kind) + "'");
  }
  d.validate();
  return d;
}

std::string Distribution::to_string() const {
  std::ostringstream out;
  out << std::setprecision(17);
  switch (kind) {
    case Kind::exponential: out << "exponential:" << first; break;
    case Kind::deterministic: out << "deterministic:" << first; break;
    case Kind::uniform: out << "uniform:" << first << ',' << second; break;
  }
  return out.str();
}

void Distribution::validate() const {
  if (!std::isfinite(first) || !std::isfinite(second))
    throw std::invalid_argument("distribution parameters must be finite");
  switch (kind) {
    case Kind::exponential:
      if (!(first > 0.0)) throw std::invalid_argument("exponential mean must be positive");
      break;
    case Kind::deterministic:
      if (first < 0.0) throw std::invalid_argument("deterministic value must be >= 0");
      break;
    case Kind::uniform:
      if (first < 0.0 || second < first)
        throw std::invalid_argument("uniform bounds must satisfy 0 <= lo <= hi");
      break;
  }
}

double Distribution::mean() const {
  switch (kind) {
    case Kind::exponential:
    case Kind::deterministic: return first;
    case Kind::uniform: return 0.5 * (first + second);
  }
  return 0.0;
}

double Distribution::variance() const {
  switch (kind) {
    case Kind::exponential: return first * first;
    case Kind::deterministic: return 0.0;
    case Kind::uniform: return (second - first) * (second - first) / 12.0;
  }
  return 0.0;
}

double Distribution::sample(SplitMix64& rng) const {
  switch (kind) {
    case Kind::exponential: return rng.exponential(first);
    case Kind::deterministic: return first;
    case Kind::uniform: return first + (second - first) * rng.uniform();
  }
  return 0.0;
}

void TrafficModel::validate() const {
  interarrival.validate();
  packet_size.validate();
  if (!(r_out > 0.0) || !std::isfinite(r_out))
    throw std::invalid_argument("r_out must be positive and finite");
  if (!(interarrival.mean() > 0.0))
    throw std::invalid_argument("mean interarrival time must be positive");
  if (packet_size.mean() > 0.05)
    throw std::invalid_argument("mean packet size must not exceed 0.05 of the buffer");
}

double TrafficModel::drift() const { return r_in() - r_out; }

double TrafficModel::diffusion() const {
  const double m = interarrival.mean();
  const double cv2 = interarrival.variance() / (m * m);
  const double s = packet_size.mean();
  return (packet_size.variance() + s * s * cv2) / m;
}

double Totals::conservation_residual() const {
  return arrived - served - dropped - (final_level - initial_level);
}

bool EventLog::conserves() const {
  const double scale = std::max(1.0, totals.arrived);
  return std::abs(totals.conservation_residual()) <= 1e-9 * scale && totals.level_min >= 0.0 &&
         totals.level_max <= 1.0;
}

namespace {

class Runner {
public:
  Runner(const TrafficModel& traffic, double duration, std::uint64_t seed, const RunOptions& opts)
      : traffic_(traffic), duration_(duration), rng_(seed), opts_(opts) {
    log_.traffic = traffic;
    log_.duration = duration;
    log_.seed = seed;
    log_.trace_dt = opts.trace_dt > 0.0 ? opts.trace_dt : 20.0 * traffic.interarrival.mean();
    level_ = opts.initial_level;
    log_.totals.initial_level = level_;
    log_.totals.level_min = level_;
    log_.totals.level_max = level_;
    open_cell();
  }

  EventLog finish() {
    double t_arrival = traffic_.interarrival.sample(rng_);
    while (t_arrival < duration_) {
      advance_to(t_arrival);
      arrive(traffic_.packet_size.sample(rng_));
      t_arrival += traffic_.interarrival.sample(rng_);
    }
    advance_to(duration_);
    auto& tot = log_.totals;
    tot.arrived = arrived_.value();
    tot.accepted = accepted_.value();
    tot.dropped = dropped_.value();
    tot.served = served_.value();
    tot.idle_time = idle_.value();
    tot.final_level = level_;
    return std::move(log_);
  }

private:
  void open_cell() {
    cell_ = TraceCell{};
    cell_.level_start = cell_.level_min = cell_.level_max = level_;
    cell_end_ = static_cast<double>(log_.trace.size() + 1) * log_.trace_dt;
  }

  void drain(double dt) {
    if (dt <= 0.0) return;
    const double capacity = traffic_.r_out * dt;
    if (capacity < level_) {
      level_ -= capacity;
      served_ += capacity;
      cell_.served += capacity;
    } else {
      const double busy = level_ / traffic_.r_out;
      served_ += level_;
      cell_.served += level_;
      level_ = 0.0;
      const double start = now_ + busy;
      const double end = now_ + dt;
      const double idle = end - start;
      idle_ += idle;
      cell_.idle += idle;
      if (!log_.idle.empty() && log_.idle.back().end == start) {
        log_.idle.back().end = end;
      } else if (idle > 0.0) {
        log_.idle.push_back({start, end});
      }
    }
    cell_.level_min = std::min(cell_.level_min, level_);
    log_.totals.level_min = std::min(log_.totals.level_min, level_);
  }

  void advance_to(double t) {
    while (cell_end_ <= t) {
      drain(cell_end_ - now_);
      now_ = cell_end_;
      log_.trace.push_back(cell_);
      open_cell();
    }
    drain(t - now_);
    now_ = t;
  }

  void arrive(double size) {
    const double before = level_;
    arrived_ += size;
    cell_.offered += size;
    ++log_.totals.arrivals;
    const bool accepted = level_ + size <= 1.0;
    if (accepted) {
      level_ += size;
      accepted_ += size;
      cell_.level_max = std::max(cell_.level_max, level_);
      log_.totals.level_max = std::max(log_.totals.level_max, level_);
    } else {
      dropped_ += size;
      cell_.lost += size;
      ++log_.totals.drops;
      log_.drops.push_back({now_, size});
    }
    if (opts_.record_events) log_.events.push_back({now_, size, accepted, before, level_});
  }

  const TrafficModel& traffic_;
  double duration_;
  SplitMix64 rng_;
  RunOptions opts_;
  EventLog log_;
  TraceCell cell_;
  double cell_end_ = 0.0;
  double now_ = 0.0;
  double level_ = 0.0;
  numerics::CompensatedSum arrived_, accepted_, dropped_, served_, idle_;
};

}  // namespace

EventLog run(const TrafficModel& traffic, double duration, std::uint64_t seed,
             const RunOptions& opts) {
  traffic.validate();
  if (!(duration > 0.0) || !std::isfinite(duration))
    throw std::invalid_argument("duration must be positive and finite");
  if (opts.trace_dt < 0.0) throw std::invalid_argument("trace_dt must be >= 0");
  if (!(opts.initial_level >= 0.0 && opts.initial_level <= 1.0))
    throw std::invalid_argument("initial level must lie in [0, 1]");
  return Runner(traffic, duration, seed, opts).finish();
}

double level_at(const EventLog& log, double t) {
  if (log.events.empty() && log.totals.arrivals > 0)
    throw std::logic_error("level_at requires a log recorded with record_events");
  const auto it = std::upper_bound(log.events.begin(), log.events.end(), t,
                                   [](double x, const ArrivalEvent& e) { return x < e.time; });
  double level = log.totals.initial_level;
  double since = 0.0;
  if (it != log.events.begin()) {
    const auto& e = *std::prev(it);
    level = e.level_after;
    since = e.time;
  }
  return std::max(0.0, level - log.traffic.r_out * (t - since));
}

DriftDiffusion estimate_drift_diffusion(const EventLog& log, double dt) {
  const double min_dt = 20.0 * log.traffic.interarrival.mean();
  if (!(dt >= min_dt * (1.0 - 1e-12)))
    throw std::invalid_argument("coarse-grain step dt must be >= 20 mean interarrivals");
  const double k_real = dt / log.trace_dt;
  const auto k = static_cast<std::size_t>(std::llround(k_real));
  if (k == 0 || std::abs(k_real - static_cast<double>(k)) > 1e-9 * k_real)
    throw std::invalid_argument("dt must be a whole multiple of the trace cell length");
  const double dt_exact = static_cast<double>(k) * log.trace_dt;

  std::vector<double> increments;
  for (std::size_t start = 0; start + k <= log.trace.size(); start += k) {
    const double level = log.trace[start].level_start;
    if (level < 0.1 || level > 0.9) continue;
    double offered = 0.0;
    for (std::size_t c = start; c < start + k; ++c) offered += log.trace[c].offered;
    increments.push_back(offered - log.traffic.r_out * dt_exact);
  }
  const std::size_t n = increments.size();
  if (n < 30)
    throw InsufficientSamples("insufficient interior samples: " + std::to_string(n) +
                              " blocks with level in [0.1, 0.9], need >= 30");
  numerics::CompensatedSum sum;
  for (double x : increments) sum += x;
  const double mean = sum.value() / static_cast<double>(n);
  numerics::CompensatedSum m2, m4;
  for (double x : increments) {
    const double d = (x - mean) * (x - mean);
    m2 += d;
    m4 += d * d;
  }
  const double nn = static_cast<double>(n);
  const double var = m2.value() / (nn - 1.0);
  const double mu4 = m4.value() / nn;
  const double var_of_var = std::max(0.0, mu4 - var * var) / nn;

  DriftDiffusion out;
  out.samples = n;
  out.a = mean / dt_exact;
  out.sigma2 = var / dt_exact;
  out.a_se = std::sqrt(var / nn) / dt_exact;
  out.sigma2_se = std::sqrt(var_of_var) / dt_exact;
  return out;
}

namespace {

// Cumulative idle time in [0, t].
class IdleIndex {
public:
  explicit IdleIndex(const std::vector<IdleInterval>& idle) : idle_(idle) {
    prefix_.reserve(idle.size() + 1);
    prefix_.push_back(0.0);
    for (const auto& iv : idle) prefix_.push_back(prefix_.back() + (iv.end - iv.start));
  }

  double cumulative(double t) const {
    const auto it = std::upper_bound(idle_.begin(), idle_.end(), t,
                                     [](double x, const IdleInterval& iv) { return x < iv.start; });
    const auto idx = static_cast<std::size_t>(it - idle_.begin());
    if (idx == 0) return 0.0;
    const auto& last = idle_[idx - 1];
    return prefix_[idx - 1] + (std::min(last.end, t) - last.start);
  }

private:
  const std::vector<IdleInterval>& idle_;
  std::vector<double> prefix_;
};

}  // namespace

LossSample window_losses(const EventLog& log, double t_window, double spacing,
                         std::optional<double> warmup) {
  if (!(t_window > 0.0)) throw std::invalid_argument("window length must be positive");
  if (!(t_window < log.duration / 10.0))
    throw std::invalid_argument("window length must be below duration / 10");
  if (!(spacing > 0.0)) throw std::invalid_argument("window spacing must be positive");
  double skip = 0.0;
  if (warmup) {
    skip = *warmup;
  } else {
    const double min_dt = 20.0 * log.traffic.interarrival.mean();
    const double cells = std::max(1.0, std::ceil(min_dt / log.trace_dt * (1.0 - 1e-12)));
    const auto fit = estimate_drift_diffusion(log, cells * log.trace_dt);
    if (!(fit.sigma2 > 0.0))
      throw std::invalid_argument("cannot derive a warm-up from a zero diffusion estimate");
    skip = 10.0 * 2.0 / fit.sigma2;
  }
  if (skip < 0.0) throw std::invalid_argument("warm-up must be >= 0");

  std::vector<double> drop_times, drop_prefix{0.0};
  drop_times.reserve(log.drops.size());
  for (const auto& d : log.drops) {
    drop_times.push_back(d.time);
    drop_prefix.push_back(drop_prefix.back() + d.size);
  }
  const IdleIndex idle(log.idle);
  auto dropped_before = [&](double t) {
    const auto idx = std::lower_bound(drop_times.begin(), drop_times.end(), t) - drop_times.begin();
    return drop_prefix[static_cast<std::size_t>(idx)];
  };

  LossSample sample;
  sample.t_window = t_window;
  sample.spacing = spacing;
  sample.t_start = skip;
  for (std::size_t i = 0;; ++i) {
    const double a = skip + static_cast<double>(i) * spacing;
    const double b = a + t_window;
    if (b > log.duration) break;
    sample.x.push_back(dropped_before(b) - dropped_before(a));
    sample.idle.push_back(idle.cumulative(b) - idle.cumulative(a));
  }
  return sample;
}

void write_loss_csv(std::ostream& out, const LossSample& sample) {
  out << "window_index,t_start,lost_volume,idle_time\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < sample.x.size(); ++i) {
    out << i << ',' << sample.t_start + static_cast<double>(i) * sample.spacing << ','
        << sample.x[i] << ',' << sample.idle[i] << '\n';
  }
}

void write_event_csv(std::ostream& out, const EventLog& log) {
  out << "time,size,accepted,level_before,level_after\n";
  out << std::setprecision(17);
  for (const auto& e : log.events) {
    out << e.time << ',' << e.size << ',' << (e.accepted ? 1 : 0) << ',' << e.level_before << ','
        << e.level_after << '\n';
  }
}

}  // namespace qloss::sim
