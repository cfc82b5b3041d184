#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qloss::numerics {

// Raised when a numerical kernel fails to reach its tolerance (quadrature,
// Laplace inversion, eigen-solve, series truncation).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Neumaier compensated accumulator.
class CompensatedSum {
public:
  CompensatedSum& operator+=(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
    return *this;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs);

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;           // absolute error estimate, >= 0
  std::size_t evaluations = 0;
};

struct QuadratureOptions {
  double rel_tol = 1e-10;
  double abs_tol = 0.0;         // accepted error floor; 0 means relative only
  unsigned max_depth = 18;
};

// Adaptive Gauss-Kronrod (7/15) on [a, b]. b may be +infinity, in which case
// the range is mapped to [0, 1) by x = a + u / (1 - u). Throws NumericalError
// when the final error estimate exceeds max(rel_tol * |value|, abs_tol).
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureOptions& opts = {});

// Convenience overload taking only a relative tolerance.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_tol);

enum class InversionMethod {
  fixed_talbot,   // Abate-Valko deformed contour; default
  euler           // Abate-Whitt Euler summation on a vertical Bromwich line
};

struct InversionResult {
  double value = 0.0;
  double error = 0.0;  // |f(nodes) - f(reduced nodes)|
  int nodes = 0;
};

using Transform = std::function<std::complex<double>(std::complex<double>)>;

// Numerical inverse Laplace transform of F at time tau > 0. For fixed Talbot
// `nodes` is the contour node count M; for Euler it is 2M (M = nodes / 2
// Euler terms, 2M + 1 evaluations). The error estimate compares against a run
// with 3/4 of the nodes. Throws NumericalError on non-finite output or when the
// estimate exceeds fail_rel * |value| + fail_abs.
InversionResult laplace_invert(const Transform& F, double tau, int nodes = 32,
                               InversionMethod method = InversionMethod::fixed_talbot,
                               double fail_rel = 1e-5, double fail_abs = 1e-12);

struct TridiagEigen {
  std::vector<double> values;   // sorted descending
  std::vector<double> vectors;  // n x n, eigenvector k stored contiguously at [k*n, k*n+n)
  std::size_t n = 0;

  double component(std::size_t k, std::size_t i) const { return vectors[k * n + i]; }
};

// Eigenpairs of the symmetric tridiagonal matrix with diagonal `diag` (size n)
// and off-diagonal `offdiag` (size n - 1). Backed by LAPACK dstev.
TridiagEigen tridiag_eigen(std::span<const double> diag, std::span<const double> offdiag);

// cosh(k y) / sinh(k) and sinh(k y) / sinh(k) for Re k >= 0, |y| <= 1, computed
// without forming the (possibly overflowing) hyperbolics.
std::complex<double> cosh_ratio(std::complex<double> k, double y);
std::complex<double> sinh_ratio(std::complex<double> k, double y);

// k * coth(k) for Re k >= 0, continuous at k = 0.
std::complex<double> k_coth_k(std::complex<double> k);

// log(erfc(z)), finite for large positive z.
double log_erfc(double z);

}  // namespace qloss::numerics
