#pragma once

#include <span>
#include <vector>

#include "mfg/errors.hpp"

namespace mfg::detail {

/// Tridiagonal system with sub-diagonal `lower` (lower[0] unused), diagonal
/// `diag` and super-diagonal `upper` (upper[n-1] unused).
struct Tridiagonal {
  std::vector<double> lower, diag, upper;

  explicit Tridiagonal(std::size_t n) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0) {}
  std::size_t size() const noexcept { return diag.size(); }

  std::vector<double> multiply(std::span<const double> x) const {
    const std::size_t n = size();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double v = diag[i] * x[i];
      if (i > 0) v += lower[i] * x[i - 1];
      if (i + 1 < n) v += upper[i] * x[i + 1];
      y[i] = v;
    }
    return y;
  }

  /// Thomas algorithm; no pivoting, so the matrix should be diagonally dominant.
  std::vector<double> solve(std::span<const double> rhs) const {
    const std::size_t n = size();
    std::vector<double> c(n), d(n);
    double beta = diag[0];
    if (beta == 0.0) throw NumericError("tridiagonal solve: zero pivot");
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for (std::size_t i = 1; i < n; ++i) {
      beta = diag[i] - lower[i] * c[i - 1];
      if (beta == 0.0) throw NumericError("tridiagonal solve: zero pivot");
      c[i] = i + 1 < n ? upper[i] / beta : 0.0;
      d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= c[i] * d[i + 1];
    return d;
  }
};

}  // namespace mfg::detail
