#include "qloss/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <lapacke.h>

namespace qloss::numerics {

double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s += x;
  return s.value();
}

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureOptions& opts) {
  using boost::math::quadrature::gauss_kronrod;
  if (!(b >= a)) throw std::invalid_argument("integrate: requires a <= b");
  QuadratureResult out;
  if (a == b) return out;

  std::size_t count = 0;
  double error = 0.0;
  double l1 = 0.0;
  if (std::isinf(b)) {
    auto g = [&](double u) {
      if (u >= 1.0) return 0.0;
      ++count;
      const double w = 1.0 / (1.0 - u);
      return f(a + u * w) * w * w;
    };
    out.value = gauss_kronrod<double, 15>::integrate(g, 0.0, 1.0, opts.max_depth, opts.rel_tol,
                                                      &error, &l1);
  } else {
    // Boost compares an unscaled panel error with a scaled tolerance, so the
    // range is always presented as [0, 1].
    const double width = b - a;
    auto g = [&](double u) {
      ++count;
      return f(a + width * u) * width;
    };
    out.value = gauss_kronrod<double, 15>::integrate(g, 0.0, 1.0, opts.max_depth, opts.rel_tol,
                                                      &error, &l1);
  }
  out.error = error;
  out.evaluations = count;
  const double accept = std::max(opts.rel_tol * std::max(std::abs(out.value), l1), opts.abs_tol);
  if (!std::isfinite(out.value) || error > accept) {
    std::ostringstream msg;
    msg << "integrate: no convergence on [" << a << ", " << b << "], value " << out.value
        << ", error estimate " << error << " after " << count << " evaluations";
    throw NumericalError(msg.str());
  }
  return out;
}

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_tol) {
  QuadratureOptions opts;
  opts.rel_tol = rel_tol;
  return integrate(f, a, b, opts);
}

namespace {

double talbot(const Transform& F, double tau, int M) {
  using std::numbers::pi;
  const double r = 2.0 * M / (5.0 * tau);
  CompensatedSum s;
  s += 0.5 * (F({r, 0.0}) * std::exp(r * tau)).real();
  for (int k = 1; k < M; ++k) {
    const double theta = k * pi / M;
    const double cot = 1.0 / std::tan(theta);
    const std::complex<double> node(r * theta * cot, r * theta);
    const double sigma = theta + (theta * cot - 1.0) * cot;
    s += (std::exp(tau * node) * F(node) * std::complex<double>(1.0, sigma)).real();
  }
  return r / M * s.value();
}

double euler(const Transform& F, double tau, int M) {
  using std::numbers::pi;
  std::vector<double> xi(2 * M + 1, 0.0);
  xi[0] = 0.5;
  for (int k = 1; k <= M; ++k) xi[k] = 1.0;
  const double scale = std::ldexp(1.0, -M);
  xi[2 * M] = scale;
  double binom = 1.0;
  for (int k = 1; k < M; ++k) {
    binom = binom * (M - k + 1) / k;
    xi[2 * M - k] = xi[2 * M - k + 1] + scale * binom;
  }
  const double shift = M * std::log(10.0) / 3.0;
  CompensatedSum s;
  for (int k = 0; k <= 2 * M; ++k) {
    const std::complex<double> beta(shift, pi * k);
    const double eta = (k % 2 == 0 ? 1.0 : -1.0) * xi[k];
    s += eta * F(beta / tau).real();
  }
  return std::pow(10.0, M / 3.0) / tau * s.value();
}

double invert_once(const Transform& F, double tau, int nodes, InversionMethod method) {
  return method == InversionMethod::fixed_talbot ? talbot(F, tau, nodes)
                                                 : euler(F, tau, std::max(nodes / 2, 1));
}

}  // namespace

InversionResult laplace_invert(const Transform& F, double tau, int nodes,
                               InversionMethod method, double fail_rel, double fail_abs) {
  if (!(tau > 0.0)) throw std::invalid_argument("laplace_invert: tau must be positive");
  const int min_nodes = 8;
  if (nodes < min_nodes) throw std::invalid_argument("laplace_invert: need at least 8 nodes");
  InversionResult out;
  out.nodes = nodes;
  out.value = invert_once(F, tau, nodes, method);
  const int reduced = std::max(min_nodes, (3 * nodes) / 4);
  const double coarse = invert_once(F, tau, reduced, method);
  out.error = std::abs(out.value - coarse);
  if (!std::isfinite(out.value) || out.error > fail_rel * std::abs(out.value) + fail_abs) {
    std::ostringstream msg;
    msg << "laplace_invert: no convergence at tau=" << tau << " with " << nodes
        << " nodes (value " << out.value << ", estimate " << out.error << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

TridiagEigen tridiag_eigen(std::span<const double> diag, std::span<const double> offdiag) {
  const std::size_t n = diag.size();
  if (n == 0 || offdiag.size() + 1 != n)
    throw std::invalid_argument("tridiag_eigen: off-diagonal must have size n - 1");
  std::vector<double> d(diag.begin(), diag.end());
  std::vector<double> e(offdiag.begin(), offdiag.end());
  e.resize(std::max<std::size_t>(n, 1));  // dstev uses e as workspace of size n - 1, pad
  std::vector<double> z(n * n);
  const lapack_int info =
      LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', static_cast<lapack_int>(n), d.data(), e.data(),
                    z.data(), static_cast<lapack_int>(n));
  if (info != 0) {
    std::ostringstream msg;
    msg << "tridiag_eigen: dstev failed, info=" << info
        << (info > 0 ? " (off-diagonal elements did not converge)" : " (illegal argument)");
    throw NumericalError(msg.str());
  }
  TridiagEigen out;
  out.n = n;
  out.values.resize(n);
  out.vectors.resize(n * n);
  // dstev returns ascending order; column j of z is eigenvector j.
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = n - 1 - k;
    out.values[k] = d[src];
    std::copy_n(z.begin() + static_cast<std::ptrdiff_t>(src * n), n,
                out.vectors.begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return out;
}

std::complex<double> cosh_ratio(std::complex<double> k, double y) {
  if (std::abs(k) < 1.0) return std::cosh(k * y) / std::sinh(k);
  const double ay = std::abs(y);
  return (std::exp(k * (ay - 1.0)) + std::exp(-k * (ay + 1.0))) / (1.0 - std::exp(-2.0 * k));
}

std::complex<double> sinh_ratio(std::complex<double> k, double y) {
  if (std::abs(k) < 1.0) return std::sinh(k * y) / std::sinh(k);
  const double ay = std::abs(y);
  const double sign = y < 0.0 ? -1.0 : 1.0;
  return sign * (std::exp(k * (ay - 1.0)) - std::exp(-k * (ay + 1.0))) /
         (1.0 - std::exp(-2.0 * k));
}

std::complex<double> k_coth_k(std::complex<double> k) {
  const double ak = std::abs(k);
  if (ak < 1e-4) {
    const auto k2 = k * k;
    return 1.0 + k2 / 3.0 - k2 * k2 / 45.0;
  }
  if (ak < 1.0) return k * std::cosh(k) / std::sinh(k);
  const auto e = std::exp(-2.0 * k);
  return k * (1.0 + e) / (1.0 - e);
}

double log_erfc(double z) {
  if (z < 25.0) return std::log(std::erfc(z));
  const double z2 = z * z;
  const double r = 1.0 / z2;
  const double series = r * (-0.5 + r * (0.75 + r * (-1.875 + r * 6.5625)));
  return -z2 - std::log(z * std::sqrt(std::numbers::pi)) + std::log1p(series);
}

}  // namespace qloss::numerics
