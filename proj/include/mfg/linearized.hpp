#pragma once

// First-order linearization about the uniform background (u, m) = ((T-t)F(1), 1).
// Each Neumann mode n >= 1 decouples into
//
//   -U' + lambda U = F1 M,     M' + lambda M + lambda U = 0,
//   U(T) = 0,                  M(0) = M0,
//
// whose system matrix [[lambda, -F1], [-lambda, -lambda]] has eigenvalues
// +-mu, mu = sqrt(lambda (lambda + F1)). All closed forms below are written
// with exponents <= 0 so they stay finite for large mu T.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/mfg_forward.hpp"
#include "mfg/spectral_basis.hpp"

namespace mfg {

/// Closed-form solution of one linearized mode.
struct ModeSolution {
  double lambda = 0.0;
  double f1 = 0.0;
  double horizon = 0.0;
  double m_initial = 0.0;
  double m_at_T = 0.0;
  double mu = 0.0;
  double a_coef = 0.0;  ///< -lambda + mu  (>= 0)
  double b_coef = 0.0;  ///< lambda + mu   (> 0)

  /// Common factor M0 / (A e^{-2 mu T} + B).
  double scale() const noexcept {
    return m_initial / (a_coef * std::exp(-2.0 * mu * horizon) + b_coef);
  }

  double U(double t) const noexcept {
    const double s = horizon - t;
    return scale() * f1 * (std::exp(mu * (s - horizon)) - std::exp(-mu * (s + horizon)));
  }

  double M(double t) const noexcept {
    if (t == 0.0) return m_initial;
    const double s = horizon - t;
    return scale() * (a_coef * std::exp(-mu * (s + horizon)) + b_coef * std::exp(mu * (s - horizon)));
  }
};

namespace detail {
inline void check_mode_inputs(double lambda, double f1, double horizon, const char* who) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw PreconditionError(std::string(who) + ": eigenvalue must be positive");
  }
  if (!(f1 >= 0.0) || !std::isfinite(f1)) {
    throw PreconditionError(std::string(who) + ": F'(1) must be nonnegative");
  }
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw PreconditionError(std::string(who) + ": horizon must be positive");
  }
}
}  // namespace detail

/// Solution with M(0) = m_initial and U(T) = 0. `f1 = 0` gives the decoupled
/// heat mode (U = 0, M = M0 e^{-lambda t}).
inline ModeSolution mode_solution(double lambda, double f1, double horizon, double m_initial) {
  detail::check_mode_inputs(lambda, f1, horizon, "mode_solution");
  ModeSolution s;
  s.lambda = lambda;
  s.f1 = f1;
  s.horizon = horizon;
  s.m_initial = m_initial;
  s.mu = std::sqrt(lambda * (lambda + f1));
  // -lambda + mu without cancellation.
  s.a_coef = lambda * f1 / (lambda + s.mu);
  s.b_coef = lambda + s.mu;
  s.m_at_T = s.scale() * 2.0 * s.mu * std::exp(-s.mu * horizon);
  return s;
}

/// U_k(0) / M_k(0) for the mode with eigenvalue `lambda`:
///   F1 (e^{2 mu T} - 1) / (A + B e^{2 mu T}).
inline double transfer_ratio(double lambda, double f1, double horizon) {
  detail::check_mode_inputs(lambda, f1, horizon, "transfer_ratio");
  const double mu = std::sqrt(lambda * (lambda + f1));
  const double a = lambda * f1 / (lambda + mu);
  const double b = lambda + mu;
  const double decay = std::exp(-2.0 * mu * horizon);
  return f1 * -std::expm1(-2.0 * mu * horizon) / (a * decay + b);
}

/// The unique F1 > 0 with transfer_ratio(lambda, F1, T) = ratio. The ratio is
/// strictly increasing in F1, tends to 0 as F1 -> 0 and grows without bound,
/// so any positive finite ratio is attainable.
inline double invert_transfer_ratio(double lambda, double horizon, double ratio) {
  if (!std::isfinite(ratio) || ratio <= 0.0) {
    throw RangeError("invert_transfer_ratio: ratio " + std::to_string(ratio) +
                     " is not attainable by any F'(1) > 0");
  }
  double lo = 0.0;
  double hi = 1.0;
  while (transfer_ratio(lambda, hi, horizon) < ratio) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi) || hi > 1e300) {
      throw RangeError("invert_transfer_ratio: could not bracket ratio " + std::to_string(ratio));
    }
  }
  for (int it = 0; it < 4096; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (transfer_ratio(lambda, mid, horizon) < ratio) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-14 * hi) break;
  }
  return 0.5 * (lo + hi);
}

using Matrix2 = std::array<std::array<double, 2>, 2>;

inline Matrix2 multiply(const Matrix2& x, const Matrix2& y) {
  Matrix2 z{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) z[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
  return z;
}

/// Eigendecomposition of the mode system d/dt (U, M) = A (U, M):
/// A = S diag(mu, -mu) S^{-1}.
struct ModeDiagonalization {
  Matrix2 system{};
  Matrix2 eigenvectors{};
  Matrix2 eigenvectors_inverse{};
  double mu = 0.0;

  Matrix2 reconstruct() const {
    const Matrix2 d{{{mu, 0.0}, {0.0, -mu}}};
    return multiply(multiply(eigenvectors, d), eigenvectors_inverse);
  }
};

inline ModeDiagonalization diagonalize_mode(double lambda, double f1) {
  const double sl = std::sqrt(lambda);
  const double sf = std::sqrt(lambda + f1);
  ModeDiagonalization d;
  d.mu = std::sqrt(lambda * (lambda + f1));
  d.system = {{{lambda, -f1}, {-lambda, -lambda}}};
  d.eigenvectors = {{{-sl - sf, -sl + sf}, {sl, sl}}};
  const double c = 1.0 / (2.0 * d.mu);
  d.eigenvectors_inverse = {{{-c * sl, c * (-sl + sf)}, {c * sl, c * (sl + sf)}}};
  return d;
}

/// (u^(l), m^(l)) on the space-time grid.
struct LinearizedPair {
  SpaceTimeField u1;
  SpaceTimeField m1;
};

inline constexpr int kDefaultModeCount = 32;

/// Spectral solve of the linearized system with m^(l)(., 0) = g.
inline LinearizedPair solve_linearized_pde(double f1, std::span<const double> g,
                                           const TimeGrid& tgrid, const Grid1D& grid,
                                           int n_modes = kDefaultModeCount) {
  if (g.size() != grid.size()) throw PreconditionError("solve_linearized_pde: length mismatch");
  const double mean = integrate(g, grid);
  double scale = 0.0;
  for (double v : g) scale = std::max(scale, std::abs(v));
  if (std::abs(mean) > 1e-10 * std::max(1.0, scale)) {
    throw PreconditionError("solve_linearized_pde: initial perturbation has nonzero mean " +
                            std::to_string(mean));
  }
  const int max_mode = std::min(n_modes, grid.n_cells() - 1);
  const auto coeffs = project(g, max_mode, grid);

  std::vector<ModeSolution> modes;
  std::vector<EigenMode> shapes;
  for (int n = 1; n <= max_mode; ++n) {
    if (coeffs[n] == 0.0) continue;
    modes.push_back(mode_solution(eigenvalue(n), f1, tgrid.horizon(), coeffs[n]));
    shapes.push_back(eigenmode(n, grid));
  }

  LinearizedPair pair{SpaceTimeField(grid, tgrid), SpaceTimeField(grid, tgrid)};
  for (int level = 0; level < tgrid.n_levels(); ++level) {
    const double t = tgrid.time(level);
    auto urow = pair.u1.row(level);
    auto mrow = pair.m1.row(level);
    for (std::size_t q = 0; q < modes.size(); ++q) {
      const double uu = level == tgrid.n_steps() ? 0.0 : modes[q].U(t);
      const double mm = level == 0 ? modes[q].m_initial : modes[q].M(t);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        urow[i] += uu * shapes[q].values[i];
        mrow[i] += mm * shapes[q].values[i];
      }
    }
  }
  return pair;
}

}  // namespace mfg
