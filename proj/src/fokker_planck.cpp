#include "qloss/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qloss::fp {

using numerics::CompensatedSum;
using numerics::NumericalError;
using std::numbers::pi;

void FpParams::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw std::invalid_argument("diffusion sigma2 must be positive and finite");
  if (!std::isfinite(a)) throw std::invalid_argument("drift a must be finite");
}

int SeriesControl::resolved_k_max(double tau) const {
  if (k_max > 0) return k_max;
  const double k = std::ceil(6.0 / std::sqrt(tau)) + 8.0;
  return static_cast<int>(std::min(k, 1e5));
}

double stationary_density_at(double v, double ell) {
  if (std::abs(v) < 1e-12) return 1.0;
  if (v > 0.0) return 2.0 * v * std::exp(2.0 * v * (ell - 1.0)) / -std::expm1(-2.0 * v);
  return 2.0 * v * std::exp(2.0 * v * ell) / std::expm1(2.0 * v);
}

double stationary_density(const FpParams& params, double ell) {
  params.validate();
  return stationary_density_at(params.v(), ell);
}

namespace {

void check_position(double ell, const char* what) {
  if (!(ell >= 0.0 && ell <= 1.0))
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

// Bound on sum_{k>K} e^{-pi^2 k^2 tau}.
double gaussian_tail(int K, double tau) {
  const double k1 = K + 1.0;
  const double first = std::exp(-pi * pi * k1 * k1 * tau);
  const double ratio = std::exp(-2.0 * pi * pi * k1 * tau);
  return ratio < 1.0 ? first / (1.0 - ratio) : std::numeric_limits<double>::infinity();
}

// Bound on sum_{k>K} (pi k + |v|) e^{-pi^2 k^2 tau}.
double weighted_gaussian_tail(int K, double tau, double av) {
  const double k1 = K + 1.0;
  const double first = (pi * k1 + av) * std::exp(-pi * pi * k1 * k1 * tau);
  const double ratio = (1.0 + 1.0 / k1) * std::exp(-pi * pi * (2.0 * k1 + 1.0) * tau);
  return ratio < 1.0 ? first / (1.0 - ratio) : std::numeric_limits<double>::infinity();
}

struct ModeSums {
  double density = 0.0;   // sum e^{-L tau}/L phi(x') phi(x)
  double gradient = 0.0;  // sum e^{-L tau}/L (v phi(x') + phi'(x')) phi(x)
  double prefactor = 0.0;
  double density_bound = 0.0;
  double gradient_bound = 0.0;
  int terms = 0;
};

// Modes phi_k(x) = pi k cos(pi k x) + v sin(pi k x), eigenvalue pi^2 k^2 + v^2,
// norm^2 = (pi^2 k^2 + v^2) / 2.
ModeSums mode_sums(double v, const SeriesControl& ctrl, double x_to, double tau, double x_from,
                   bool want_gradient) {
  if (!(tau > 0.0)) throw std::invalid_argument("transition density requires t > 0");
  if (tau < ctrl.tau_floor) {
    std::ostringstream msg;
    msg << "insufficient truncation: tau=" << tau << " below floor " << ctrl.tau_floor;
    throw NumericalError(msg.str());
  }
  const int K = ctrl.resolved_k_max(tau);
  ModeSums out;
  out.terms = K;
  out.prefactor = 2.0 * std::exp(v * (x_to - x_from));
  const double decay0 = std::exp(-v * v * tau);
  CompensatedSum dens, grad;
  for (int k = 1; k <= K; ++k) {
    const double wk = pi * k;
    const double lambda = wk * wk + v * v;
    const double e = decay0 * std::exp(-wk * wk * tau) / lambda;
    if (e == 0.0) break;
    const double c1 = std::cos(wk * x_to), s1 = std::sin(wk * x_to);
    const double c0 = std::cos(wk * x_from), s0 = std::sin(wk * x_from);
    const double phi_to = wk * c1 + v * s1;
    const double phi_from = wk * c0 + v * s0;
    dens += e * phi_to * phi_from;
    if (want_gradient) {
      const double dphi_to = -wk * wk * s1 + v * wk * c1;
      grad += e * (v * phi_to + dphi_to) * phi_from;
    }
  }
  out.density = dens.value();
  out.gradient = grad.value();
  const double av = std::abs(v);
  out.density_bound = out.prefactor * decay0 * 2.0 * gaussian_tail(K, tau);
  out.gradient_bound = out.prefactor * decay0 * 2.0 * weighted_gaussian_tail(K, tau, av);
  return out;
}

void check_bound(double bound, const SeriesControl& ctrl, double tau, int K) {
  if (!(bound <= ctrl.tol)) {
    std::ostringstream msg;
    msg << "insufficient truncation: tau=" << tau << ", k_max=" << K << ", tail bound " << bound
        << " > tol " << ctrl.tol;
    throw NumericalError(msg.str());
  }
}

SeriesValue relaxing_in_tau(double v, const SeriesControl& ctrl, double x_to, double tau,
                            double x_from) {
  const auto m = mode_sums(v, ctrl, x_to, tau, x_from, false);
  check_bound(m.density_bound, ctrl, tau, m.terms);
  return {m.prefactor * m.density, m.density_bound, m.terms};
}

}  // namespace

SeriesValue transition_density_relaxing(const FpParams& params, const SeriesControl& ctrl,
                                        double ell_to, double t, double ell_from) {
  params.validate();
  check_position(ell_to, "ell_to");
  check_position(ell_from, "ell_from");
  return relaxing_in_tau(params.v(), ctrl, ell_to, params.tau(t), ell_from);
}

SeriesValue transition_density(const FpParams& params, const SeriesControl& ctrl, double ell_to,
                               double t, double ell_from) {
  auto r = transition_density_relaxing(params, ctrl, ell_to, t, ell_from);
  r.value += stationary_density_at(params.v(), ell_to);
  return r;
}

SeriesValue transition_density_gradient(const FpParams& params, const SeriesControl& ctrl,
                                        double ell_to, double t, double ell_from) {
  params.validate();
  check_position(ell_to, "ell_to");
  check_position(ell_from, "ell_from");
  const double v = params.v();
  const double tau = params.tau(t);
  const auto m = mode_sums(v, ctrl, ell_to, tau, ell_from, true);
  check_bound(m.gradient_bound, ctrl, tau, m.terms);
  const double stationary_grad = 2.0 * v * stationary_density_at(v, ell_to);
  return {stationary_grad + m.prefactor * m.gradient, m.gradient_bound, m.terms};
}

SeriesValue probability_current(const FpParams& params, const SeriesControl& ctrl, double ell_to,
                                double t, double ell_from) {
  const auto w = transition_density(params, ctrl, ell_to, t, ell_from);
  const auto g = transition_density_gradient(params, ctrl, ell_to, t, ell_from);
  const double half = 0.5 * params.sigma2;
  return {params.a * w.value - half * g.value,
          std::abs(params.a) * w.truncation_bound + half * g.truncation_bound, w.terms};
}

std::complex<double> laplace_propagator(const FpParams& params, double ell_to,
                                        std::complex<double> eps, double ell_from) {
  params.validate();
  check_position(ell_to, "ell_to");
  check_position(ell_from, "ell_from");
  using numerics::cosh_ratio;
  using numerics::sinh_ratio;
  const double v = params.v();
  const std::complex<double> kappa = std::sqrt(eps + v * v);
  const double sum = ell_to + ell_from - 1.0;
  const double diff = std::abs(ell_to - ell_from) - 1.0;
  const auto braces = (2.0 * v * v / eps) * cosh_ratio(kappa, sum) +
                      (2.0 * kappa * v / eps) * sinh_ratio(kappa, sum) + cosh_ratio(kappa, diff) +
                      cosh_ratio(kappa, sum);
  return 0.5 * std::exp(v * (ell_to - ell_from)) / kappa * braces;
}

double laplace_propagator(const FpParams& params, double ell_to, double eps, double ell_from) {
  return laplace_propagator(params, ell_to, std::complex<double>(eps, 0.0), ell_from).real();
}

std::complex<double> return_transform_full(double v, std::complex<double> eps) {
  return (numerics::k_coth_k(std::sqrt(eps + v * v)) + v) / eps;
}

std::complex<double> return_transform_empty(double v, std::complex<double> eps) {
  return (numerics::k_coth_k(std::sqrt(eps + v * v)) - v) / eps;
}

double halfline_density(const FpParams& params, double ell_to, double t, double ell_from) {
  params.validate();
  if (!(t > 0.0)) throw std::invalid_argument("halfline_density requires t > 0");
  if (ell_to > 1.0 || ell_from > 1.0)
    throw std::invalid_argument("halfline_density: positions must be <= 1");
  const double a = params.a;
  const double s2 = params.sigma2;
  const double D = s2 * t;
  const double norm = 1.0 / std::sqrt(2.0 * pi * D);
  const double direct = ell_to - ell_from - a * t;
  const double image = 2.0 - ell_to - ell_from - a * t;
  const double wall = -2.0 * a * (1.0 - ell_to) / s2;
  double w = norm * std::exp(-direct * direct / (2.0 * D)) +
             norm * std::exp(wall - image * image / (2.0 * D));
  if (a != 0.0)
    w += (a / s2) * std::exp(wall + numerics::log_erfc(image / std::sqrt(2.0 * D)));
  return w;
}

double loss_rate_coefficient(const FpParams& params) {
  params.validate();
  return 0.5 * params.sigma2;
}

double halfline_loss_integral(const FpParams& params, double t) {
  params.validate();
  if (!(t > 0.0)) throw std::invalid_argument("halfline_loss_integral requires t > 0");
  const double sd = std::sqrt(params.sigma2 * t);
  const double shift = params.a * t;
  const double reach = 14.0 * sd + 2.0 * std::abs(shift);
  numerics::QuadratureOptions inner_opts;
  inner_opts.rel_tol = 1e-11;
  inner_opts.abs_tol = 1e-15 * sd;
  auto inner = [&](double ell) {
    const double lo = std::min(ell, 1.0) - reach;
    auto f = [&](double ell_to) {
      return (ell + shift - ell_to) * halfline_density(params, ell_to, t, ell);
    };
    return numerics::integrate(f, lo, 1.0, inner_opts).value;
  };
  numerics::QuadratureOptions outer_opts;
  outer_opts.rel_tol = 1e-9;
  outer_opts.abs_tol = 1e-14 * sd * sd;
  return numerics::integrate(inner, 1.0 - reach, 1.0, outer_opts).value / t;
}

namespace {

double full_wall_density(const FpParams& params) { return stationary_density_at(params.v(), 1.0); }

void check_time(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("time must be positive");
}

}  // namespace

numerics::InversionResult loss_moment(const FpParams& params, const SeriesControl& ctrl, int k,
                                      double t) {
  params.validate();
  check_time(t);
  if (k < 1) throw std::invalid_argument("loss_moment: order k must be >= 1");
  const double p1 = full_wall_density(params);
  const double tau = params.tau(t);
  if (k == 1) return {p1 * tau, 0.0, 0};
  const double v = params.v();
  const double prefactor = std::tgamma(k + 1.0) * p1;
  auto F = [&](std::complex<double> eps) {
    return prefactor * std::pow(return_transform_full(v, eps), k - 1) / (eps * eps);
  };
  return numerics::laplace_invert(F, tau, ctrl.laplace_nodes);
}

MomentAsymptotes loss_moment_asymptotes(const FpParams& params, int k, double t) {
  params.validate();
  if (k < 1) throw std::invalid_argument("loss_moment_asymptotes: order k must be >= 1");
  const double p1 = full_wall_density(params);
  const double tau = params.tau(t);
  MomentAsymptotes out;
  out.short_time = std::tgamma(k + 1.0) * p1 * std::pow(tau, 0.5 * (k + 1)) / std::tgamma(0.5 * (k + 3));
  out.long_time = std::pow(p1 * tau, k);
  return out;
}

numerics::InversionResult loss_probability(const FpParams& params, const SeriesControl& ctrl,
                                           double t) {
  params.validate();
  check_time(t);
  const double p1 = full_wall_density(params);
  const double v = params.v();
  auto F = [&](std::complex<double> eps) {
    return p1 / (eps * eps * return_transform_full(v, eps));
  };
  // A probability: inversion noise beyond [0, 1] is clipped, the error kept.
  auto r = numerics::laplace_invert(F, params.tau(t), ctrl.laplace_nodes);
  r.value = std::clamp(r.value, 0.0, 1.0);
  return r;
}

LossDensity loss_pdf(const FpParams& params, const SeriesControl& ctrl, double x, double t) {
  params.validate();
  check_time(t);
  if (!(x >= 0.0)) throw std::invalid_argument("loss_pdf: x must be >= 0");
  const double p1 = full_wall_density(params);
  const double v = params.v();
  const double tau = params.tau(t);
  auto F = [&](std::complex<double> eps) {
    const auto W = return_transform_full(v, eps);
    return p1 / (eps * eps * W * W) * std::exp(-x / W);
  };
  // Euler summation is accurate to a fixed absolute level; the density is O(p1).
  // Long windows need more nodes, so the node count is escalated before the
  // Gaussian surrogate is used.
  const int base = ctrl.laplace_nodes;
  for (int nodes : {base, base * 3 / 2, base * 2, base * 5 / 2}) {
    try {
      const auto r = numerics::laplace_invert(F, tau, nodes, numerics::InversionMethod::euler,
                                              1e-5, 1e-9 * p1);
      return {r.value, r.error, false};
    } catch (const NumericalError&) {
    }
  }
  if (tau < long_time_tau_threshold)
    throw NumericalError("loss_pdf: inversion did not converge at tau=" + std::to_string(tau));
  return {loss_pdf_long_time(params, t).density(x), 0.0, true};
}

LossDensity conditional_loss_pdf(const FpParams& params, const SeriesControl& ctrl, double x,
                                 double t) {
  auto d = loss_pdf(params, ctrl, x, t);
  const auto pl = loss_probability(params, ctrl, t);
  d.value /= pl.value;
  d.error = d.error / pl.value + std::abs(d.value) * pl.error / pl.value;
  return d;
}

double loss_pdf_short_time(const FpParams& params, double x, double t) {
  return full_wall_density(params) * std::erfc(x / std::sqrt(4.0 * params.tau(t)));
}

double loss_probability_short_time(const FpParams& params, double t) {
  return full_wall_density(params) * std::sqrt(4.0 * params.tau(t) / pi);
}

double conditional_loss_pdf_short_time(const FpParams& params, double x, double t) {
  const double tau = params.tau(t);
  return std::sqrt(pi / (4.0 * tau)) * std::erfc(x / std::sqrt(4.0 * tau));
}

double GaussianSurrogate::density(double x) const {
  const double z = x - mean;
  return std::exp(-z * z / (2.0 * variance)) / std::sqrt(2.0 * pi * variance);
}

GaussianSurrogate loss_pdf_long_time(const FpParams& params, double t) {
  const auto var = loss_variance_longtime(params, t);
  return {full_wall_density(params) * params.tau(t), var.value};
}

double loss_variance_factor(double v) {
  const double av = std::abs(v);
  if (av < 0.05) {
    const double v2 = av * av;
    return 2.0 / 3.0 + v2 * (-4.0 / 45.0 + v2 * (4.0 / 315.0 - v2 * 8.0 / 4725.0));
  }
  const double sh = std::sinh(av);
  return 1.0 / (std::tanh(av) * av) - 1.0 / (sh * sh);
}

LongTimeVariance loss_variance_longtime(const FpParams& params, double t) {
  params.validate();
  check_time(t);
  const double tau = params.tau(t);
  const double m1 = full_wall_density(params) * tau;
  return {m1 * loss_variance_factor(params.v()), tau >= long_time_tau_threshold};
}

numerics::QuadratureResult loss_correlator(const FpParams& params, const SeriesControl& ctrl,
                                           double t1, double t2, double T) {
  params.validate();
  check_time(t1);
  check_time(t2);
  check_time(T);
  const double v = params.v();
  const double tau1 = params.tau(t1);
  const double tau2 = params.tau(t2);
  const double gap = params.tau(T);
  // corr = r_loss^2 p(1) int int [w(1, t1' + t2'' + T; 1) - p(1)] dt1' dt2''
  //      = p(1) int_0^tau1 int_0^tau2 g(u1 + u2 + gap) du2 du1 in tau units.
  // The integrand depends on u1 + u2 only, so the square collapses onto
  // s = u1 + u2 with weight min(s, tau1, tau2, tau1 + tau2 - s).
  const double lo = std::min(tau1, tau2);
  const double hi = std::max(tau1, tau2);
  numerics::QuadratureOptions opts;
  opts.rel_tol = 1e-10;
  opts.abs_tol = 1e-300;
  opts.max_depth = 24;
  auto piece = [&](double from, double to) {
    auto f = [&](double s) {
      const double weight = std::min({s, lo, tau1 + tau2 - s});
      return weight * relaxing_in_tau(v, ctrl, 1.0, s + gap, 1.0).value;
    };
    return numerics::integrate(f, from, to, opts);
  };
  numerics::QuadratureResult outer;
  for (auto [from, to] : {std::pair{0.0, lo}, std::pair{lo, hi}, std::pair{hi, lo + hi}}) {
    if (!(to > from)) continue;
    const auto r = piece(from, to);
    outer.value += r.value;
    outer.error += r.error;
    outer.evaluations += r.evaluations;
  }
  const double p1 = full_wall_density(params);
  outer.value *= p1;
  outer.error *= p1;
  return outer;
}

double loss_correlator_window_regime(const FpParams& params, double t1, double t2, double T) {
  params.validate();
  const double p1 = full_wall_density(params);
  const double m1 = p1 * params.tau(t1);
  const double m2 = p1 * params.tau(t2);
  return m1 * m2 / p1 * std::sqrt(2.0 / (pi * params.sigma2 * T));
}

}  // namespace qloss::fp
