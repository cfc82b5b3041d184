#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "qloss/numerics.hpp"

// Discrete bounded random-walk queue: one service unit per slot, a packet of
// two service units arrives with probability p, buffer capacity L.
namespace qloss::discrete {

struct DiscreteQueueParams {
  double p = 0.5;
  int L = 1;

  // Throws std::invalid_argument unless 0 <= p <= 1 and L >= 1.
  void validate() const;

  // q = p / (1 - p); undefined at p = 1.
  double q() const;
  double log_q() const;

  // N0 = [(2p - 1)^2 + (pi / L)^2]^-1, the crossover window length.
  double crossover_window() const;
};

DiscreteQueueParams make_params(double p, int L);

struct Spectrum {
  // Eigenpairs of the symmetrized kernel D^1/2 K D^-1/2, eigenvalues descending.
  numerics::TridiagEigen eigen;
  // u_k(L)^2, the weight of mode k in the return probability G_n(L, L).
  std::vector<double> boundary_weight;
};

class TransitionKernel {
public:
  explicit TransitionKernel(DiscreteQueueParams params);

  const DiscreteQueueParams& params() const { return params_; }
  int size() const { return params_.L + 1; }
  double operator()(int from, int to) const {
    return matrix_[static_cast<std::size_t>(from) * size() + to];
  }
  std::span<const double> row(int from) const {
    return {matrix_.data() + static_cast<std::size_t>(from) * size(),
            static_cast<std::size_t>(size())};
  }
  std::span<const double> matrix() const { return matrix_; }

  // Computed on first use; thread-safe.
  const Spectrum& spectrum() const;

private:
  struct LazySpectrum {
    std::once_flag once;
    Spectrum value;
  };

  DiscreteQueueParams params_;
  std::vector<double> matrix_;  // row-major, (L+1) x (L+1)
  std::shared_ptr<LazySpectrum> spectrum_;
};

TransitionKernel build_kernel(const DiscreteQueueParams& params);

struct DiscretePath {
  std::uint64_t seed = 0;
  std::vector<int> lengths;               // l_0 .. l_n_steps
  std::vector<std::uint8_t> loss_events;  // [n] = (l_n == L && l_{n+1} == L)

  std::size_t steps() const { return loss_events.size(); }
  std::size_t loss_count() const;
};

// Samples n_steps transitions. With burn_in == 0 the initial state is drawn
// from the exact stationary distribution; otherwise the walk starts at 0 and
// burn_in steps are discarded.
DiscretePath simulate_path(const DiscreteQueueParams& params, std::size_t n_steps,
                           std::size_t burn_in, std::uint64_t seed);

// Loss counts in windows of N steps whose starts are `spacing` steps apart.
std::vector<double> window_losses(const DiscretePath& path, std::size_t N, std::size_t spacing);

// Streaming variant: n_windows consecutive non-overlapping windows of N steps
// from a stationary start, without storing the path.
std::vector<double> simulate_window_losses(const DiscreteQueueParams& params,
                                           std::size_t n_windows, std::size_t N,
                                           std::uint64_t seed);

// pi(l) proportional to q^l; point masses for p = 0 and p = 1.
std::vector<double> stationary_distribution(const DiscreteQueueParams& params);

// G_n(to, from) = (K^n)[from][to]. Matrix powers for n <= 64, spectral sums
// otherwise.
double green_function(const TransitionKernel& kernel, std::size_t n, int from, int to);
double green_function_power(const TransitionKernel& kernel, std::size_t n, int from, int to);
double green_function_spectral(const TransitionKernel& kernel, std::size_t n, int from, int to);

double mean_loss_rate_exact(const DiscreteQueueParams& params);

// Variance of the loss count in a window of N steps in the stationary regime.
double loss_variance_exact(const TransitionKernel& kernel, std::size_t N);
double loss_variance_exact(const DiscreteQueueParams& params, std::size_t N);

// chi_N = Var / <L_N>. Throws std::domain_error when the mean loss is zero.
double compressibility(const TransitionKernel& kernel, std::size_t N);
double compressibility(const DiscreteQueueParams& params, std::size_t N);

// c = (2 sqrt 2 / pi) * int_0^inf dx x^-2 (1 - (1 - e^-x^2) / x^2).
double critical_integrand(double x);
numerics::QuadratureResult critical_coefficient_integral(double rel_tol = 1e-12);
double critical_coefficient();

// Normalized correlation of window losses, windows of N steps whose starts are
// M > N steps apart. The exact branch uses spectral sums.
double correlator_R2_exact(const TransitionKernel& kernel, std::size_t N, std::size_t M);
// Long-time analytic form, with chi_N taken from the exact evaluator.
double correlator_R2_analytic(const TransitionKernel& kernel, std::size_t N, std::size_t M);
// p = 1/2 limit: c^-1 sqrt(N / (2 pi M)).
double correlator_R2_critical(std::size_t N, std::size_t M);

// Large-L asymptotes as tabulated for the mean loss rate (three branches) and
// the saturated compressibility (two branches).
double mean_loss_rate_asymptote(const DiscreteQueueParams& params);
double chi_infinity_asymptote(const DiscreteQueueParams& params);

namespace detail {
// sum_{k=0}^{n-1} (n - k) lambda^k
double weighted_geometric_sum(double lambda, std::size_t n);
// sum_{k=0}^{n-1} lambda^k
double geometric_sum(double lambda, std::size_t n);
}  // namespace detail

}  // namespace qloss::discrete
