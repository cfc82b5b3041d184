#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "qloss/discrete.hpp"
#include "qloss/fokker_planck.hpp"
#include "qloss/numerics.hpp"

using namespace qloss;
using numerics::InversionMethod;
using std::numbers::pi;
using cd = std::complex<double>;

TEST_CASE("compensated sum recovers cancelled low-order terms") {
  const std::vector<double> xs{1e16, 1.0, -1e16, 1.0};
  CHECK(numerics::compensated_sum(xs) == 2.0);
  numerics::CompensatedSum s;
  for (int i = 0; i < 1000000; ++i) s += 0.1;
  CHECK(std::abs(s.value() - 100000.0) < 1e-9);
}

TEST_CASE("integrate: gaussian on the half line") {
  const auto r = numerics::integrate([](double x) { return std::exp(-x * x); }, 0.0, INFINITY, 1e-12);
  CHECK(std::abs(r.value - std::sqrt(pi) / 2.0) < 1e-12);
  CHECK(r.error >= 0.0);
  CHECK(std::abs(r.value - std::sqrt(pi) / 2.0) <= std::max(r.error, 1e-15));
  CHECK(r.evaluations > 0);
}

TEST_CASE("integrate: stationary density normalised") {
  for (double v : {-3.0, 0.5, 4.0}) {
    const auto r = numerics::integrate([v](double l) { return fp::stationary_density_at(v, l); },
                                       0.0, 1.0, 1e-12);
    CHECK(std::abs(r.value - 1.0) < 1e-12);
  }
}

TEST_CASE("integrate: tighter tolerance does not report a larger error") {
  auto f = [](double x) { return std::exp(-x) * std::cos(20.0 * x); };
  double previous = INFINITY;
  for (double tol : {1e-4, 1e-7, 1e-10}) {
    const auto r = numerics::integrate(f, 0.0, 2.0, tol);
    CHECK(r.error <= previous);
    previous = r.error;
  }
}

TEST_CASE("integrate: non-convergence is reported") {
  numerics::QuadratureOptions opts;
  opts.rel_tol = 1e-14;
  opts.max_depth = 2;
  CHECK_THROWS_AS(numerics::integrate([](double x) { return std::sin(1.0 / x); }, 1e-6, 1.0, opts),
                  numerics::NumericalError);
}

TEST_CASE("critical integral is self-consistent across tolerances") {
  const double a = discrete::critical_coefficient_integral(1e-6).value;
  const double b = discrete::critical_coefficient_integral(1e-8).value;
  const double c = discrete::critical_coefficient_integral(1e-10).value;
  CHECK(std::abs(a - c) < 1e-3 * std::abs(c));
  CHECK(std::abs(b - c) < 1e-3 * std::abs(c));
}

TEST_CASE("laplace inversion: known pairs") {
  for (double tau : {0.05, 0.5, 1.0, 3.0, 10.0}) {
    const auto ramp = numerics::laplace_invert([](cd s) { return 1.0 / (s * s); }, tau);
    CHECK(std::abs(ramp.value / tau - 1.0) < 1e-7);
    const auto decay = numerics::laplace_invert([](cd s) { return 1.0 / (s + 1.0); }, tau);
    CHECK(std::abs(decay.value / std::exp(-tau) - 1.0) < 1e-7);
  }
  // Euler summation is accurate in absolute terms, so decaying targets stay O(1).
  for (double tau : {0.05, 0.5, 1.0, 3.0, 10.0}) {
    const auto ramp = numerics::laplace_invert([](cd s) { return 1.0 / (s * s); }, tau, 32,
                                               InversionMethod::euler);
    CHECK(std::abs(ramp.value / tau - 1.0) < 1e-7);
  }
  for (double tau : {0.05, 0.5, 1.0}) {
    const auto decay = numerics::laplace_invert([](cd s) { return 1.0 / (s + 1.0); }, tau, 32,
                                                InversionMethod::euler);
    CHECK(std::abs(decay.value / std::exp(-tau) - 1.0) < 1e-7);
  }
}

TEST_CASE("laplace inversion: square-root transform") {
  // 1/sqrt(s) <-> 1/sqrt(pi tau)
  for (double tau : {1e-3, 0.1, 2.0}) {
    const auto r = numerics::laplace_invert([](cd s) { return 1.0 / std::sqrt(s); }, tau);
    CHECK(std::abs(r.value * std::sqrt(pi * tau) - 1.0) < 1e-7);
  }
}

TEST_CASE("laplace inversion: non-finite transform is reported") {
  CHECK_THROWS_AS(numerics::laplace_invert([](cd) { return cd(NAN, 0.0); }, 1.0),
                  numerics::NumericalError);
}

TEST_CASE("laplace inversion of the return transform matches the eigenseries at v = 0") {
  const fp::FpParams params{0.0, 2.0};
  fp::SeriesControl ctrl;
  for (double tau : {0.01, 0.05, 0.2, 1.0, 5.0}) {
    const auto inv = numerics::laplace_invert(
        [](cd eps) { return fp::return_transform_full(0.0, eps); }, tau);
    const double series = fp::transition_density(params, ctrl, 1.0, params.time_from_tau(tau), 1.0).value;
    CHECK(std::abs(inv.value - series) < 1e-6);
  }
}

TEST_CASE("tridiag_eigen: 2x2 closed form") {
  const std::vector<double> d{2.0, -1.0};
  const std::vector<double> e{0.5};
  const auto eig = numerics::tridiag_eigen(d, e);
  const double mid = 0.5, rad = std::sqrt(1.5 * 1.5 + 0.25);
  CHECK(eig.values[0] == doctest::Approx(mid + rad).epsilon(1e-14));
  CHECK(eig.values[1] == doctest::Approx(mid - rad).epsilon(1e-14));
  // (A - lambda) v = 0 for the leading pair
  const double v0 = eig.component(0, 0), v1 = eig.component(0, 1);
  CHECK(std::abs((2.0 - eig.values[0]) * v0 + 0.5 * v1) < 1e-14);
}

TEST_CASE("tridiag_eigen: kernel at p = 1/2, L = 10") {
  const discrete::TransitionKernel kernel(discrete::make_params(0.5, 10));
  const auto& eig = kernel.spectrum().eigen;
  CHECK(eig.values[0] == doctest::Approx(1.0).epsilon(1e-13));
  for (std::size_t k = 1; k < eig.n; ++k) CHECK(eig.values[k] <= eig.values[k - 1]);
  const double expected = 1.0 / std::sqrt(11.0);  // sqrt(pi(l)), uniform pi
  for (std::size_t i = 0; i < eig.n; ++i)
    CHECK(std::abs(std::abs(eig.component(0, i)) - expected) < 1e-12);
}

TEST_CASE("tridiag_eigen: residuals and reconstruction") {
  const std::size_t n = 40;
  std::vector<double> d(n), e(n - 1);
  for (std::size_t i = 0; i < n; ++i) d[i] = std::sin(1.3 * static_cast<double>(i));
  for (std::size_t i = 0; i + 1 < n; ++i) e[i] = 0.3 + 0.1 * std::cos(static_cast<double>(i));
  const auto eig = numerics::tridiag_eigen(d, e);
  auto A = [&](std::size_t i, std::size_t j) {
    if (i == j) return d[i];
    if (i + 1 == j) return e[i];
    if (j + 1 == i) return e[j];
    return 0.0;
  };
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) norm = std::max(norm, std::abs(d[i]) + 2 * 0.4);
  for (std::size_t k = 0; k < n; ++k) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double av = 0.0;
      for (std::size_t j = 0; j < n; ++j) av += A(i, j) * eig.component(k, j);
      worst = std::max(worst, std::abs(av - eig.values[k] * eig.component(k, i)));
    }
    CHECK(worst <= 1e-10 * norm);
  }
  double recon = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += eig.values[k] * eig.component(k, i) * eig.component(k, j);
      recon = std::max(recon, std::abs(s - A(i, j)));
    }
  CHECK(recon < 1e-10);
}

TEST_CASE("hyperbolic ratios: direct agreement and no overflow") {
  for (double k : {0.3, 2.0, 15.0}) {
    for (double y : {-1.0, -0.4, 0.0, 0.7, 1.0}) {
      CHECK(numerics::cosh_ratio(k, y).real() ==
            doctest::Approx(std::cosh(k * y) / std::sinh(k)).epsilon(1e-13));
      CHECK(numerics::sinh_ratio(k, y).real() ==
            doctest::Approx(std::sinh(k * y) / std::sinh(k)).epsilon(1e-13));
    }
  }
  const cd big(2000.0, 30.0);
  const auto c = numerics::cosh_ratio(big, 1.0);
  CHECK(std::isfinite(c.real()));
  CHECK(std::abs(c - 1.0) < 1e-12);  // coth of a large argument
  CHECK(std::abs(numerics::cosh_ratio(big, 0.5)) < 1e-300);
  CHECK(numerics::k_coth_k(cd(0.0, 0.0)).real() == doctest::Approx(1.0));
  CHECK(numerics::k_coth_k(cd(1e-6, 0.0)).real() == doctest::Approx(1.0 + 1e-12 / 3.0).epsilon(1e-15));
}

TEST_CASE("log_erfc: matches the direct form and stays finite") {
  for (double z : {-3.0, 0.0, 1.0, 5.0, 20.0}) CHECK(numerics::log_erfc(z) == doctest::Approx(std::log(std::erfc(z))).epsilon(1e-12));
  // asymptotic branch at the switch point
  CHECK(numerics::log_erfc(25.0) == doctest::Approx(std::log(std::erfc(25.0))).epsilon(1e-13));
  CHECK(numerics::log_erfc(26.0) == doctest::Approx(std::log(std::erfc(26.0))).epsilon(1e-13));
  CHECK(std::isfinite(numerics::log_erfc(1e4)));
  // log erfc(z) ~ -z^2 - log(z sqrt(pi))
  CHECK(numerics::log_erfc(1e3) == doctest::Approx(-1e6 - std::log(1e3 * std::sqrt(pi))).epsilon(1e-12));
}
