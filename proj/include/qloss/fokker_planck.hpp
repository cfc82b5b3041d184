#pragma once

#include <complex>

#include "qloss/numerics.hpp"

// Continuous queue on [0, 1] (buffer size normalised to 1) with drift a and
// diffusion sigma2, reflecting walls at both ends. Time enters through
// tau = sigma2 * t / 2; the shape parameter is v = a / sigma2.
namespace qloss::fp {

struct FpParams {
  double a = 0.0;       // buffer units / time
  double sigma2 = 1.0;  // buffer units^2 / time

  void validate() const;
  double v() const { return a / sigma2; }
  double tau(double t) const { return 0.5 * sigma2 * t; }
  double time_from_tau(double tau) const { return 2.0 * tau / sigma2; }
  // Time for queue fluctuations to span the whole buffer, 2 / sigma2.
  double relaxation_time() const { return 2.0 / sigma2; }
  // Parameters whose loss statistics give the server-idleness statistics of
  // this queue (l -> 1 - l, v -> -v).
  FpParams idleness_dual() const { return {-a, sigma2}; }
};

struct SeriesControl {
  int k_max = 0;           // 0 selects ceil(6 / sqrt(tau)) + 8, capped at 100000
  double tol = 1e-10;      // accepted bound on the truncated tail
  int laplace_nodes = 32;
  double tau_floor = 1e-10;

  int resolved_k_max(double tau) const;
};

struct SeriesValue {
  double value = 0.0;
  double truncation_bound = 0.0;
  int terms = 0;
};

// p(l) = 2v e^{2vl} / (e^{2v} - 1); equals 1 at v = 0.
double stationary_density(const FpParams& params, double ell);
double stationary_density_at(double v, double ell);

// Transition density w(ell_to, t; ell_from) as eigenfunction series plus the
// stationary term. Throws NumericalError when the tail bound exceeds ctrl.tol.
SeriesValue transition_density(const FpParams& params, const SeriesControl& ctrl, double ell_to,
                               double t, double ell_from);

// w - p(ell_to): the decaying part of the series only.
SeriesValue transition_density_relaxing(const FpParams& params, const SeriesControl& ctrl,
                                        double ell_to, double t, double ell_from);

// d/d(ell_to) of the transition density, term by term.
SeriesValue transition_density_gradient(const FpParams& params, const SeriesControl& ctrl,
                                        double ell_to, double t, double ell_from);

// J = a w - (sigma2 / 2) dw/dl'.
SeriesValue probability_current(const FpParams& params, const SeriesControl& ctrl, double ell_to,
                                double t, double ell_from);

// Closed-form Laplace transform (conjugate to tau) of the transition density.
std::complex<double> laplace_propagator(const FpParams& params, double ell_to,
                                        std::complex<double> eps, double ell_from);
double laplace_propagator(const FpParams& params, double ell_to, double eps, double ell_from);

// Return-to-wall transforms W(1, eps; 1) = (kappa coth kappa + v) / eps and
// W(0, eps; 0) = (kappa coth kappa - v) / eps.
std::complex<double> return_transform_full(double v, std::complex<double> eps);
std::complex<double> return_transform_empty(double v, std::complex<double> eps);

// Density on (-inf, 1] with only the upper wall, reflecting.
double halfline_density(const FpParams& params, double ell_to, double t, double ell_from);

// r_loss = sigma2 / 2.
double loss_rate_coefficient(const FpParams& params);

// (1/t) int dl int dl' (l + a t - l') w0(l', t; l): the displacement removed
// by the wall per unit time, integrated over starting points. Tends to r_loss
// as t -> 0.
double halfline_loss_integral(const FpParams& params, double t);

// k-th moment of the traffic lost in a window of length t, stationary start.
// k = 1 is exact (p(1) tau); k >= 2 inverts k! p(1) W(1,eps;1)^(k-1) / eps^2.
numerics::InversionResult loss_moment(const FpParams& params, const SeriesControl& ctrl, int k,
                                      double t);

struct MomentAsymptotes {
  double short_time = 0.0;  // k! p(1) tau^((k+1)/2) / Gamma((k+3)/2), tau << 1
  double long_time = 0.0;   // p(1)^k tau^k, tau >> 1
};
MomentAsymptotes loss_moment_asymptotes(const FpParams& params, int k, double t);

struct LossDensity {
  double value = 0.0;
  double error = 0.0;
  bool asymptotic = false;  // true when the long-time Gaussian surrogate was used
};

// Density of the lost volume x > 0 in a window of length t (excludes the
// atom at x = 0, whose weight is 1 - p_loss(t)).
LossDensity loss_pdf(const FpParams& params, const SeriesControl& ctrl, double x, double t);

// Probability that anything is lost during t.
numerics::InversionResult loss_probability(const FpParams& params, const SeriesControl& ctrl,
                                           double t);

// Density of x conditional on a nonzero loss.
LossDensity conditional_loss_pdf(const FpParams& params, const SeriesControl& ctrl, double x,
                                 double t);

// tau << 1 forms.
double loss_pdf_short_time(const FpParams& params, double x, double t);
double loss_probability_short_time(const FpParams& params, double t);
double conditional_loss_pdf_short_time(const FpParams& params, double x, double t);

// tau >> 1: the loss concentrates at tau p(1); represented by a Gaussian with
// the long-time variance.
struct GaussianSurrogate {
  double mean = 0.0;
  double variance = 0.0;
  double density(double x) const;
};
GaussianSurrogate loss_pdf_long_time(const FpParams& params, double t);

// coth|v| / |v| - 1 / sinh^2|v|, with the v -> 0 limit 2/3.
double loss_variance_factor(double v);

struct LongTimeVariance {
  double value = 0.0;
  bool in_regime = false;  // tau >= long_time_tau_threshold
};
inline constexpr double long_time_tau_threshold = 10.0;
LongTimeVariance loss_variance_longtime(const FpParams& params, double t);

// Covariance of the losses in windows of lengths t1 and t2 separated by a gap
// T, by 2-D quadrature of the return density over the window offsets.
numerics::QuadratureResult loss_correlator(const FpParams& params, const SeriesControl& ctrl,
                                           double t1, double t2, double T);

// 2/sigma2 >> T >> t1, t2: m1(t1) m1(t2) p(1)^-1 sqrt(2 / (pi sigma2 T)).
double loss_correlator_window_regime(const FpParams& params, double t1, double t2, double T);

}  // namespace qloss::fp
