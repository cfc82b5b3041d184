#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Window-level estimators with batch-means error bars.
namespace qloss::stats {

class InsufficientData : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct WindowedSeries {
  std::vector<double> values;
  double window_length = 1.0;  // steps or time
  double spacing = 0.0;        // distance between window starts; 0 means window_length
  bool overlapping = false;

  // Throws std::invalid_argument on non-finite values, a non-positive window
  // length, or an overlap flag inconsistent with the spacing.
  void validate() const;
  double effective_spacing() const { return spacing > 0.0 ? spacing : window_length; }
};

struct BatchOptions {
  std::size_t batches = 0;  // 0 selects clamp(n / 10, 10, 64)
};

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

struct MeanVariance {
  Estimate mean;
  Estimate variance;  // unbiased (n - 1 denominator)
  std::size_t n = 0;
  std::size_t batches = 0;
};

// Requires at least 30 windows.
MeanVariance mean_and_variance(const WindowedSeries& series, const BatchOptions& opts = {});

struct Compressibility {
  Estimate chi;
  double mean_rate = 0.0;  // mean / N
};

// chi = Var / mean of the window totals, i.e. variance / (N * mean rate).
// Throws std::domain_error when the estimated mean is not positive.
Compressibility compressibility_estimate(const WindowedSeries& series, double N,
                                         const BatchOptions& opts = {});

struct CorrelationPoint {
  std::size_t separation = 0;  // index lag between windows
  Estimate value;
  std::size_t pairs = 0;
};

// <dx(i) dx(i + h)> / <dx^2> for each lag h. The largest lag must not exceed a
// tenth of the series length.
std::vector<CorrelationPoint> correlation_estimate(const WindowedSeries& series,
                                                   std::span<const std::size_t> separations,
                                                   const BatchOptions& opts = {});

// Fraction of windows with a zero value.
Estimate zero_fraction(const WindowedSeries& series, const BatchOptions& opts = {});

// Reads the lost_volume column (or `column`) of a loss CSV; '#' lines skipped.
WindowedSeries read_series_csv(std::istream& in, double window_length,
                               const std::string& column = "lost_volume");
void write_series_csv(std::ostream& out, const WindowedSeries& series);

}  // namespace qloss::stats
