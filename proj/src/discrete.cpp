#include "qloss/discrete.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "qloss/rng.hpp"

namespace qloss::discrete {

using numerics::CompensatedSum;

void DiscreteQueueParams::validate() const {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("arrival probability p must lie in [0, 1], got " +
                                std::to_string(p));
  if (L < 1) throw std::invalid_argument("buffer capacity L must be >= 1");
}

double DiscreteQueueParams::q() const {
  if (p >= 1.0) throw std::domain_error("q = p/(1-p) is undefined at p = 1");
  return p / (1.0 - p);
}

double DiscreteQueueParams::log_q() const {
  if (p <= 0.0 || p >= 1.0) throw std::domain_error("log q requires 0 < p < 1");
  return std::log1p((2.0 * p - 1.0) / (1.0 - p));
}

double DiscreteQueueParams::crossover_window() const {
  const double d = 2.0 * p - 1.0;
  const double g = std::numbers::pi / L;
  return 1.0 / (d * d + g * g);
}

DiscreteQueueParams make_params(double p, int L) {
  DiscreteQueueParams params{p, L};
  params.validate();
  return params;
}

TransitionKernel::TransitionKernel(DiscreteQueueParams params)
    : params_(params), spectrum_(std::make_shared<LazySpectrum>()) {
  params_.validate();
  const int n = size();
  const int L = params_.L;
  const double p = params_.p;
  matrix_.assign(static_cast<std::size_t>(n) * n, 0.0);
  auto at = [&](int i, int j) -> double& { return matrix_[static_cast<std::size_t>(i) * n + j]; };
  for (int l = 0; l <= L; ++l) {
    if (l < L) {
      at(l, l + 1) += p;
    } else {
      at(l, l) += p;  // arrival to a full buffer is discarded
    }
    if (l > 0) {
      at(l, l - 1) += 1.0 - p;
    } else {
      at(l, l) += 1.0 - p;  // idle slot
    }
  }
}

const Spectrum& TransitionKernel::spectrum() const {
  std::call_once(spectrum_->once, [this] {
    const int n = size();
    const double p = params_.p;
    std::vector<double> diag(n, 0.0);
    diag[0] += 1.0 - p;
    diag[n - 1] += p;
    std::vector<double> off(n - 1, std::sqrt(p * (1.0 - p)));
    Spectrum s;
    s.eigen = numerics::tridiag_eigen(diag, off);
    s.boundary_weight.resize(n);
    for (int k = 0; k < n; ++k) {
      const double u = s.eigen.component(k, n - 1);
      s.boundary_weight[k] = u * u;
    }
    spectrum_->value = std::move(s);
  });
  return spectrum_->value;
}

TransitionKernel build_kernel(const DiscreteQueueParams& params) { return TransitionKernel(params); }

std::size_t DiscretePath::loss_count() const {
  return static_cast<std::size_t>(std::count(loss_events.begin(), loss_events.end(), 1));
}

namespace {

int draw_stationary(const std::vector<double>& pi, SplitMix64& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t l = 0; l < pi.size(); ++l) {
    acc += pi[l];
    if (u < acc) return static_cast<int>(l);
  }
  return static_cast<int>(pi.size()) - 1;
}

inline int step(int l, int L, double p, SplitMix64& rng) {
  if (rng.bernoulli(p)) return l < L ? l + 1 : L;
  return l > 0 ? l - 1 : 0;
}

int initial_state(const DiscreteQueueParams& params, std::size_t burn_in, SplitMix64& rng) {
  if (burn_in == 0) return draw_stationary(stationary_distribution(params), rng);
  int l = 0;
  for (std::size_t i = 0; i < burn_in; ++i) l = step(l, params.L, params.p, rng);
  return l;
}

}  // namespace

DiscretePath simulate_path(const DiscreteQueueParams& params, std::size_t n_steps,
                           std::size_t burn_in, std::uint64_t seed) {
  params.validate();
  if (n_steps < 1) throw std::invalid_argument("simulate_path: n_steps must be >= 1");
  SplitMix64 rng(seed);
  DiscretePath path;
  path.seed = seed;
  path.lengths.resize(n_steps + 1);
  path.loss_events.resize(n_steps);
  int l = initial_state(params, burn_in, rng);
  path.lengths[0] = l;
  for (std::size_t n = 0; n < n_steps; ++n) {
    const int next = step(l, params.L, params.p, rng);
    path.loss_events[n] = (l == params.L && next == params.L) ? 1 : 0;
    path.lengths[n + 1] = next;
    l = next;
  }
  return path;
}

std::vector<double> window_losses(const DiscretePath& path, std::size_t N, std::size_t spacing) {
  if (N == 0 || spacing == 0) throw std::invalid_argument("window_losses: N and spacing must be >= 1");
  std::vector<std::size_t> prefix(path.steps() + 1, 0);
  for (std::size_t i = 0; i < path.steps(); ++i) prefix[i + 1] = prefix[i] + path.loss_events[i];
  std::vector<double> out;
  for (std::size_t start = 0; start + N <= path.steps(); start += spacing)
    out.push_back(static_cast<double>(prefix[start + N] - prefix[start]));
  return out;
}

std::vector<double> simulate_window_losses(const DiscreteQueueParams& params,
                                           std::size_t n_windows, std::size_t N,
                                           std::uint64_t seed) {
  params.validate();
  SplitMix64 rng(seed);
  int l = initial_state(params, 0, rng);
  std::vector<double> out(n_windows, 0.0);
  for (std::size_t w = 0; w < n_windows; ++w) {
    std::size_t lost = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const int next = step(l, params.L, params.p, rng);
      lost += (l == params.L && next == params.L);
      l = next;
    }
    out[w] = static_cast<double>(lost);
  }
  return out;
}

std::vector<double> stationary_distribution(const DiscreteQueueParams& params) {
  params.validate();
  const int L = params.L;
  std::vector<double> pi(L + 1, 0.0);
  if (params.p == 0.0) {
    pi[0] = 1.0;
    return pi;
  }
  if (params.p == 1.0) {
    pi[L] = 1.0;
    return pi;
  }
  if (params.p == 0.5) {
    std::fill(pi.begin(), pi.end(), 1.0 / (L + 1));
    return pi;
  }
  // pi(l) = q^l (q - 1) / (q^(L+1) - 1), evaluated with a non-positive exponent
  // rate so nothing overflows; near q = 1 expm1 keeps the ratio accurate.
  const double s = params.log_q();
  const double r = -std::abs(s);
  const double norm = std::expm1(r) / std::expm1((L + 1) * r);
  for (int l = 0; l <= L; ++l) {
    const int depth = s < 0.0 ? l : L - l;
    pi[l] = std::exp(depth * r) * norm;
  }
  return pi;
}

double green_function_power(const TransitionKernel& kernel, std::size_t n, int from, int to) {
  const int size = kernel.size();
  if (from < 0 || from >= size || to < 0 || to >= size)
    throw std::out_of_range("green_function: state outside [0, L]");
  std::vector<double> v(size, 0.0), next(size, 0.0);
  v[from] = 1.0;
  const double p = kernel.params().p;
  // For p in {0, 1} the walk is absorbed after at most L + 1 steps.
  const bool degenerate = (p == 0.0 || p == 1.0);
  const std::size_t steps = degenerate ? std::min<std::size_t>(n, size + 1) : n;
  for (std::size_t k = 0; k < steps; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < size; ++i) {
      if (v[i] == 0.0) continue;
      const auto row = kernel.row(i);
      for (int j = std::max(0, i - 1); j <= std::min(size - 1, i + 1); ++j) next[j] += v[i] * row[j];
    }
    v.swap(next);
  }
  return v[to];
}

double green_function_spectral(const TransitionKernel& kernel, std::size_t n, int from, int to) {
  const auto& params = kernel.params();
  if (params.p <= 0.0 || params.p >= 1.0)
    throw std::domain_error("green_function_spectral: kernel not reversible-symmetrizable at p in {0,1}");
  const int size = kernel.size();
  if (from < 0 || from >= size || to < 0 || to >= size)
    throw std::out_of_range("green_function: state outside [0, L]");
  const auto& eig = kernel.spectrum().eigen;
  CompensatedSum s;
  for (int k = 0; k < size; ++k) {
    const double lam = eig.values[k];
    s += std::pow(lam, static_cast<double>(n)) * eig.component(k, from) * eig.component(k, to);
  }
  // K^n = D^-1/2 S^n D^1/2 with D = diag(q^l)
  return std::exp(0.5 * (to - from) * params.log_q()) * s.value();
}

double green_function(const TransitionKernel& kernel, std::size_t n, int from, int to) {
  const double p = kernel.params().p;
  if (n <= 64 || p == 0.0 || p == 1.0) return green_function_power(kernel, n, from, to);
  return green_function_spectral(kernel, n, from, to);
}

double mean_loss_rate_exact(const DiscreteQueueParams& params) {
  params.validate();
  if (params.p == 0.0) return 0.0;
  if (params.p == 0.5) return 0.5 / (params.L + 1);
  return params.p * stationary_distribution(params)[params.L];
}

namespace detail {

double weighted_geometric_sum(double lambda, std::size_t n) {
  if (n == 0) return 0.0;
  const double nd = static_cast<double>(n);
  if (lambda >= 1.0) return 0.5 * nd * (nd + 1.0);
  if (lambda <= 0.5) {
    const double a = 1.0 - lambda;
    return (nd * a - lambda * (1.0 - std::pow(lambda, nd))) / (a * a);
  }
  if (n <= 4096) {
    CompensatedSum s;
    double power = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      s += static_cast<double>(n - k) * power;
      power *= lambda;
    }
    return s.value();
  }
  const double rate = -std::log(lambda);
  if (nd * rate < 1e-2) {
    // Taylor in rate: sum_j (-rate)^j / j! * T_j, T_j = sum_k (n - k) k^j,
    // with Faulhaber sums over k = 0..m, m = n - 1.
    const long double m = nd - 1.0L;
    const long double P1 = m * (m + 1) / 2;
    const long double P2 = m * (m + 1) * (2 * m + 1) / 6;
    const long double P3 = P1 * P1;
    const long double P4 = m * (m + 1) * (2 * m + 1) * (3 * m * m + 3 * m - 1) / 30;
    const long double P5 = m * m * (m + 1) * (m + 1) * (2 * m * m + 2 * m - 1) / 12;
    const long double N = nd;
    const long double T[5] = {N * (N + 1) / 2, N * P1 - P2, N * P2 - P3, N * P3 - P4,
                              N * P4 - P5};
    long double sum = 0.0L, term = 1.0L;
    for (int j = 0; j < 5; ++j) {
      sum += term * T[j];
      term *= -static_cast<long double>(rate) / (j + 1);
    }
    return static_cast<double>(sum);
  }
  const double a = -std::expm1(-rate);
  const double b = -std::expm1(-nd * rate);
  return (nd * a - lambda * b) / (a * a);
}

double geometric_sum(double lambda, std::size_t n) {
  const double nd = static_cast<double>(n);
  if (lambda >= 1.0) return nd;
  if (lambda <= 0.5) return (1.0 - std::pow(lambda, nd)) / (1.0 - lambda);
  const double rate = -std::log(lambda);
  return std::expm1(-nd * rate) / std::expm1(-rate);
}

}  // namespace detail

double loss_variance_exact(const TransitionKernel& kernel, std::size_t N) {
  if (N < 1) throw std::invalid_argument("loss_variance_exact: N must be >= 1");
  const auto& params = kernel.params();
  const double m = mean_loss_rate_exact(params);
  const double Nd = static_cast<double>(N);
  if (params.p == 0.0 || params.p == 1.0) return Nd * m * (1.0 - m);
  // <L^2> - <L>^2 = N m (1 - m) + 2 m p sum_{j>=1} w_j sum_k (N - 1 - k) lambda_j^k;
  // the stationary mode j = 0 cancels against <L>^2 exactly.
  const auto& spec = kernel.spectrum();
  CompensatedSum s;
  for (int j = 1; j < kernel.size(); ++j)
    s += spec.boundary_weight[j] * detail::weighted_geometric_sum(spec.eigen.values[j], N - 1);
  return Nd * m * (1.0 - m) + 2.0 * m * params.p * s.value();
}

double loss_variance_exact(const DiscreteQueueParams& params, std::size_t N) {
  return loss_variance_exact(build_kernel(params), N);
}

double compressibility(const TransitionKernel& kernel, std::size_t N) {
  const double m = mean_loss_rate_exact(kernel.params());
  if (!(m > 0.0)) throw std::domain_error("compressibility undefined: mean loss rate is zero");
  return loss_variance_exact(kernel, N) / (static_cast<double>(N) * m);
}

double compressibility(const DiscreteQueueParams& params, std::size_t N) {
  return compressibility(build_kernel(params), N);
}

double critical_integrand(double x) {
  x = std::abs(x);
  if (x < 0.1) {
    // sum_k (-1)^k x^(2k) / (k + 2)!
    const double x2 = x * x;
    double term = 0.5, sum = 0.0;
    for (int k = 0; k < 8; ++k) {
      sum += term;
      term *= -x2 / (k + 3);
    }
    return sum;
  }
  const double x2 = x * x;
  return (1.0 + std::expm1(-x2) / x2) / x2;
}

numerics::QuadratureResult critical_coefficient_integral(double rel_tol) {
  auto r = numerics::integrate(critical_integrand, 0.0, INFINITY, rel_tol);
  const double scale = 2.0 * std::numbers::sqrt2 / std::numbers::pi;
  r.value *= scale;
  r.error *= scale;
  return r;
}

double critical_coefficient() {
  static const double c = critical_coefficient_integral(1e-12).value;
  return c;
}

double correlator_R2_exact(const TransitionKernel& kernel, std::size_t N, std::size_t M) {
  if (N < 1 || M <= N) throw std::invalid_argument("correlator_R2: requires M > N >= 1");
  const auto& params = kernel.params();
  const double var = loss_variance_exact(kernel, N);
  if (!(var > 0.0)) throw std::domain_error("correlator_R2: zero loss variance");
  const double m = mean_loss_rate_exact(params);
  // cov = pi(L) p^2 sum_{j>=1} w_j lambda_j^(M-N) (sum_{i<N} lambda_j^i)^2
  const auto& spec = kernel.spectrum();
  CompensatedSum s;
  for (int j = 1; j < kernel.size(); ++j) {
    const double lam = spec.eigen.values[j];
    const double g = detail::geometric_sum(lam, N);
    s += spec.boundary_weight[j] * std::pow(lam, static_cast<double>(M - N)) * g * g;
  }
  return m * params.p * s.value() / var;
}

double correlator_R2_analytic(const TransitionKernel& kernel, std::size_t N, std::size_t M) {
  if (N < 1 || M <= N) throw std::invalid_argument("correlator_R2: requires M > N >= 1");
  const double p = kernel.params().p;
  const double d = std::abs(2.0 * p - 1.0);
  const double Md = static_cast<double>(M);
  const double chi = compressibility(kernel, N);
  const double bracket = std::exp(-Md * d * d / 2.0) * std::sqrt(2.0 / (std::numbers::pi * Md)) -
                         d * std::erfc(d * std::sqrt(Md / 2.0));
  return p * static_cast<double>(N) / chi * bracket;
}

double correlator_R2_critical(std::size_t N, std::size_t M) {
  return std::sqrt(static_cast<double>(N) / (2.0 * std::numbers::pi * static_cast<double>(M))) /
         critical_coefficient();
}

double mean_loss_rate_asymptote(const DiscreteQueueParams& params) {
  params.validate();
  const double p = params.p;
  if (p > 0.5) return 2.0 * p - 1.0;
  if (p == 0.5) return 1.0 / (params.L + 1);
  return (1.0 - 2.0 * p) / (1.0 - p) * std::pow(params.q(), params.L);
}

double chi_infinity_asymptote(const DiscreteQueueParams& params) {
  params.validate();
  const double d = std::abs(2.0 * params.p - 1.0);
  if (d * params.L > 1.0) return (1.0 - d) / d;
  return 2.0 * params.L / 3.0;
}

}  // namespace qloss::discrete
