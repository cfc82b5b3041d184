#include "qloss/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "qloss/numerics.hpp"

namespace qloss::stats {

using numerics::CompensatedSum;

void WindowedSeries::validate() const {
  if (!(window_length > 0.0)) throw std::invalid_argument("window length must be positive");
  if (spacing < 0.0) throw std::invalid_argument("window spacing must be >= 0");
  if (overlapping != (effective_spacing() < window_length))
    throw std::invalid_argument("overlap flag does not match window spacing");
  for (double x : values)
    if (!std::isfinite(x)) throw std::invalid_argument("window values must be finite");
}

namespace {

constexpr std::size_t kMinWindows = 30;

std::size_t batch_count(std::size_t n, const BatchOptions& opts) {
  const std::size_t b = opts.batches > 0 ? opts.batches : std::clamp<std::size_t>(n / 10, 10, 64);
  if (b < 2 || b > n) throw InsufficientData("batch count must lie in [2, n]");
  return b;
}

double mean_of(std::span<const double> xs) {
  return numerics::compensated_sum(xs) / static_cast<double>(xs.size());
}

// Standard error of the mean of d(0..n-1) from B contiguous batches.
double batch_se(std::size_t n, std::size_t B, const std::function<double(std::size_t)>& d) {
  std::vector<double> means(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t lo = b * n / B;
    const std::size_t hi = (b + 1) * n / B;
    CompensatedSum s;
    for (std::size_t i = lo; i < hi; ++i) s += d(i);
    means[b] = s.value() / static_cast<double>(hi - lo);
  }
  const double m = mean_of(means);
  CompensatedSum ss;
  for (double x : means) ss += (x - m) * (x - m);
  const double var_batch = ss.value() / static_cast<double>(B - 1);
  return std::sqrt(var_batch / static_cast<double>(B));
}

void require_windows(const WindowedSeries& series, std::size_t minimum) {
  series.validate();
  if (series.values.size() < minimum)
    throw InsufficientData("need at least " + std::to_string(minimum) + " windows, got " +
                           std::to_string(series.values.size()));
}

struct RawMoments {
  double m1 = 0.0;
  double m2 = 0.0;
};

RawMoments raw_moments(std::span<const double> xs) {
  CompensatedSum s1, s2;
  for (double x : xs) {
    s1 += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(xs.size());
  return {s1.value() / n, s2.value() / n};
}

double central_variance(std::span<const double> xs, double mean) {
  CompensatedSum ss;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss.value() / static_cast<double>(xs.size() - 1);
}

}  // namespace

MeanVariance mean_and_variance(const WindowedSeries& series, const BatchOptions& opts) {
  require_windows(series, kMinWindows);
  const auto& x = series.values;
  const std::size_t n = x.size();
  const std::size_t B = batch_count(n, opts);
  const double mu = mean_of(x);
  const double nn = static_cast<double>(n);
  MeanVariance out;
  out.n = n;
  out.batches = B;
  out.mean = {mu, batch_se(n, B, [&](std::size_t i) { return x[i]; })};
  const double scale = nn / (nn - 1.0);
  out.variance = {central_variance(x, mu),
                  scale * batch_se(n, B, [&](std::size_t i) { return x[i] * x[i] - 2.0 * mu * x[i]; })};
  return out;
}

Compressibility compressibility_estimate(const WindowedSeries& series, double N,
                                         const BatchOptions& opts) {
  if (!(N > 0.0)) throw std::invalid_argument("window size N must be positive");
  require_windows(series, kMinWindows);
  const auto& x = series.values;
  const std::size_t n = x.size();
  const std::size_t B = batch_count(n, opts);
  const auto raw = raw_moments(x);
  if (!(raw.m1 > 0.0)) throw std::domain_error("compressibility needs a positive mean loss");
  const double var = central_variance(x, raw.m1);
  // chi = (m2 - m1^2) / m1 with gradient (-1 - m2 / m1^2, 1 / m1).
  const double g1 = -1.0 - raw.m2 / (raw.m1 * raw.m1);
  const double g2 = 1.0 / raw.m1;
  Compressibility out;
  out.chi = {var / raw.m1, batch_se(n, B, [&](std::size_t i) { return g1 * x[i] + g2 * x[i] * x[i]; })};
  out.mean_rate = raw.m1 / N;
  return out;
}

std::vector<CorrelationPoint> correlation_estimate(const WindowedSeries& series,
                                                   std::span<const std::size_t> separations,
                                                   const BatchOptions& opts) {
  require_windows(series, kMinWindows);
  if (separations.empty()) return {};
  const auto& x = series.values;
  const std::size_t n = x.size();
  const std::size_t max_lag = *std::max_element(separations.begin(), separations.end());
  if (max_lag == 0) throw std::invalid_argument("separations must be positive");
  if (max_lag * 10 > n)
    throw InsufficientData("largest separation " + std::to_string(max_lag) +
                           " exceeds a tenth of the " + std::to_string(n) + " windows");
  const double mu = mean_of(x);
  const double V = central_variance(x, mu) * (static_cast<double>(n) - 1.0) / static_cast<double>(n);
  if (!(V > 0.0)) throw std::domain_error("correlation undefined for a constant series");

  std::vector<CorrelationPoint> out;
  out.reserve(separations.size());
  for (std::size_t h : separations) {
    if (h == 0) throw std::invalid_argument("separations must be positive");
    const std::size_t pairs = n - h;
    CompensatedSum cross;
    for (std::size_t i = 0; i < pairs; ++i) cross += (x[i] - mu) * (x[i + h] - mu);
    const double C = cross.value() / static_cast<double>(pairs);
    const double R = C / V;
    // Influence of window i on R = C / V.
    auto d = [&](std::size_t i) {
      const double a = x[i] - mu;
      const double b = x[i + h] - mu;
      return a * b / V - R * 0.5 * (a * a + b * b) / V;
    };
    const std::size_t B = batch_count(pairs, opts);
    out.push_back({h, {R, batch_se(pairs, B, d)}, pairs});
  }
  return out;
}

Estimate zero_fraction(const WindowedSeries& series, const BatchOptions& opts) {
  require_windows(series, kMinWindows);
  const auto& x = series.values;
  const std::size_t n = x.size();
  const std::size_t B = batch_count(n, opts);
  const auto zeros = static_cast<double>(std::count(x.begin(), x.end(), 0.0));
  return {zeros / static_cast<double>(n),
          batch_se(n, B, [&](std::size_t i) { return x[i] == 0.0 ? 1.0 : 0.0; })};
}

WindowedSeries read_series_csv(std::istream& in, double window_length, const std::string& column) {
  WindowedSeries series;
  series.window_length = window_length;
  std::string line;
  std::ptrdiff_t col = -1;
  std::size_t line_no = 0;
  std::vector<double> starts;
  std::ptrdiff_t start_col = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (col < 0) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i] == column) col = static_cast<std::ptrdiff_t>(i);
        if (fields[i] == "t_start") start_col = static_cast<std::ptrdiff_t>(i);
      }
      if (col < 0) throw std::invalid_argument("CSV header lacks column '" + column + "'");
      continue;
    }
    if (static_cast<std::size_t>(col) >= fields.size())
      throw std::invalid_argument("CSV line " + std::to_string(line_no) + " is short");
    try {
      series.values.push_back(std::stod(fields[static_cast<std::size_t>(col)]));
      if (start_col >= 0 && static_cast<std::size_t>(start_col) < fields.size())
        starts.push_back(std::stod(fields[static_cast<std::size_t>(start_col)]));
    } catch (const std::exception&) {
      throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  if (starts.size() >= 2) {
    series.spacing = starts[1] - starts[0];
    series.overlapping = series.spacing < window_length;
  }
  series.validate();
  return series;
}

void write_series_csv(std::ostream& out, const WindowedSeries& series) {
  out << "window_index,t_start,lost_volume\n" << std::setprecision(17);
  const double spacing = series.effective_spacing();
  for (std::size_t i = 0; i < series.values.size(); ++i)
    out << i << ',' << static_cast<double>(i) * spacing << ',' << series.values[i] << '\n';
}

}  // namespace qloss::stats
