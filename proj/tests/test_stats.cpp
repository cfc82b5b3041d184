#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "qloss/discrete.hpp"
#include "qloss/stats.hpp"

using namespace qloss;
using stats::WindowedSeries;

namespace {

WindowedSeries series_of(std::vector<double> v, double window = 1.0) {
  WindowedSeries s;
  s.values = std::move(v);
  s.window_length = window;
  return s;
}

std::vector<double> bernoulli(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution d(p);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng) ? 1.0 : 0.0;
  return v;
}

std::vector<double> ar1(std::size_t n, double phi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  double x = g(rng) / std::sqrt(1.0 - phi * phi);
  for (auto& y : v) {
    y = x;
    x = phi * x + g(rng);
  }
  return v;
}

}  // namespace

TEST_CASE("series validation") {
  auto s = series_of({1.0, 2.0});
  s.window_length = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.window_length = 2.0;
  s.spacing = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);  // overlapping but flag unset
  s.overlapping = true;
  CHECK_NOTHROW(s.validate());
  s.values.push_back(NAN);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK(series_of({}, 3.0).effective_spacing() == 3.0);
}

TEST_CASE("too few windows") {
  CHECK_THROWS_AS(stats::mean_and_variance(series_of(std::vector<double>(29, 1.0))), stats::InsufficientData);
  CHECK_NOTHROW(stats::mean_and_variance(series_of(std::vector<double>(30, 1.0))));
  stats::BatchOptions one;
  one.batches = 1;
  CHECK_THROWS_AS(stats::mean_and_variance(series_of(std::vector<double>(100, 1.0)), one), stats::InsufficientData);
}

TEST_CASE("constant series has zero variance") {
  const auto mv = stats::mean_and_variance(series_of(std::vector<double>(500, 2.5)));
  CHECK(mv.mean.value == doctest::Approx(2.5));
  CHECK(mv.variance.value == doctest::Approx(0.0));
  CHECK(mv.mean.se == doctest::Approx(0.0));
  CHECK(mv.n == 500);
  CHECK(mv.batches == 50);
  CHECK_THROWS_AS(stats::correlation_estimate(series_of(std::vector<double>(500, 2.5)), std::vector<std::size_t>{1}),
                  std::domain_error);
  CHECK_THROWS_AS(stats::compressibility_estimate(series_of(std::vector<double>(500, 0.0)), 10.0),
                  std::domain_error);
}

TEST_CASE("Bernoulli series: mean, variance and zero fraction") {
  const double p = 0.3;
  const auto s = series_of(bernoulli(200000, p, 5));
  const auto mv = stats::mean_and_variance(s);
  CHECK(std::abs(mv.mean.value - p) < 3.0 * mv.mean.se);
  CHECK(std::abs(mv.variance.value - p * (1.0 - p)) < 3.0 * mv.variance.se);
  // iid: the batch-means error bar matches the textbook one
  CHECK(mv.mean.se == doctest::Approx(std::sqrt(p * (1.0 - p) / 200000.0)).epsilon(0.25));
  const auto z = stats::zero_fraction(s);
  CHECK(std::abs(z.value - (1.0 - p)) < 3.0 * z.se);
}

TEST_CASE("Poisson counts have unit compressibility") {
  std::mt19937_64 rng(11);
  const double rate = 0.02, N = 500.0;
  std::poisson_distribution<int> d(rate * N);
  std::vector<double> v(50000);
  for (auto& x : v) x = d(rng);
  const auto c = stats::compressibility_estimate(series_of(v, N), N);
  CHECK(std::abs(c.chi.value - 1.0) < 3.0 * c.chi.se);
  CHECK(c.mean_rate == doctest::Approx(rate).epsilon(0.01));
  CHECK(c.chi.se > 0.0);
}

TEST_CASE("white noise is uncorrelated; AR(1) has geometric correlation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(100000);
  for (auto& x : v) x = g(rng);
  const std::vector<std::size_t> lags{1, 2, 5, 50};
  for (const auto& pt : stats::correlation_estimate(series_of(v), lags)) {
    CHECK(std::abs(pt.value.value) < 3.0 * pt.value.se);
    CHECK(pt.pairs == v.size() - pt.separation);
  }
  const double phi = 0.6;
  const auto a = series_of(ar1(200000, phi, 8));
  for (const auto& pt : stats::correlation_estimate(a, lags))
    CHECK(std::abs(pt.value.value - std::pow(phi, static_cast<double>(pt.separation))) < 3.0 * pt.value.se);
  const std::vector<std::size_t> too_far{20001};
  CHECK_THROWS_AS(stats::correlation_estimate(a, too_far), stats::InsufficientData);
  const std::vector<std::size_t> zero{0};
  CHECK_THROWS_AS(stats::correlation_estimate(a, zero), std::invalid_argument);
}

TEST_CASE("standard error falls as the inverse square root of the window count") {
  auto mean_se = [](std::size_t n) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      total += stats::mean_and_variance(series_of(bernoulli(n, 0.4, 1000 + seed))).mean.se;
    return total / 20.0;
  };
  const double s3 = mean_se(1000), s4 = mean_se(10000), s5 = mean_se(100000);
  const double expected = std::sqrt(10.0);
  CHECK(s3 / s4 == doctest::Approx(expected).epsilon(0.2));
  CHECK(s4 / s5 == doctest::Approx(expected).epsilon(0.2));
}

TEST_CASE("reordering leaves moments unchanged but not correlations") {
  auto v = ar1(20000, 0.8, 21);
  const auto before = stats::mean_and_variance(series_of(v));
  const std::vector<std::size_t> lag{1};
  const double corr_before = stats::correlation_estimate(series_of(v), lag)[0].value.value;
  std::mt19937_64 rng(4);
  std::shuffle(v.begin(), v.end(), rng);
  const auto after = stats::mean_and_variance(series_of(v));
  CHECK(after.mean.value == doctest::Approx(before.mean.value).epsilon(1e-12));
  CHECK(after.variance.value == doctest::Approx(before.variance.value).epsilon(1e-12));
  const auto shuffled = stats::correlation_estimate(series_of(v), lag)[0];
  CHECK(corr_before > 0.75);
  CHECK(std::abs(shuffled.value.value) < 3.0 * shuffled.value.se);
}

TEST_CASE("discrete queue windows reproduce the exact loss variance") {
  const auto params = discrete::make_params(0.5, 30);
  const std::size_t N = 1000;
  auto s = series_of(discrete::simulate_window_losses(params, 20000, N, 77), static_cast<double>(N));
  const auto mv = stats::mean_and_variance(s);
  const double exact = discrete::loss_variance_exact(params, N);
  CHECK(std::abs(mv.variance.value - exact) < 3.0 * mv.variance.se);
  CHECK(std::abs(mv.mean.value - N * discrete::mean_loss_rate_exact(params)) < 3.0 * mv.mean.se);
  const auto c = stats::compressibility_estimate(s, static_cast<double>(N));
  CHECK(std::abs(c.chi.value - discrete::compressibility(params, N)) < 3.0 * c.chi.se);
}

TEST_CASE("csv round trip") {
  auto s = series_of({0.0, 0.125, 1e-17, 3.0}, 2.0);
  std::stringstream buf;
  buf << "# comment line\n";
  stats::write_series_csv(buf, s);
  const auto back = stats::read_series_csv(buf, 2.0);
  CHECK(back.values == s.values);
  CHECK(back.window_length == 2.0);

  std::istringstream missing("window_index,t_start,idle_time\n0,0,1\n");
  CHECK_THROWS_AS(stats::read_series_csv(missing, 1.0), std::invalid_argument);
  std::istringstream bad("window_index,t_start,lost_volume\n0,0,x\n");
  CHECK_THROWS_AS(stats::read_series_csv(bad, 1.0), std::invalid_argument);
  std::istringstream idle("window_index,t_start,lost_volume,idle_time\n0,0,1,0.5\n1,1,2,0.25\n");
  CHECK(stats::read_series_csv(idle, 1.0, "idle_time").values == std::vector<double>{0.5, 0.25});
}
