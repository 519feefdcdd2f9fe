#pragma once

// Forward solver for the coupled mean-field game on [0, 1] x [0, T]:
//
//   -u_t - u_xx + |u_x|^2 / 2 = F(m),   u(., T) = 0,
//    m_t - m_xx - (m u_x)_x   = 0,      m(., 0) = m0,
//
// with zero-flux (Neumann) walls. The two equations are coupled by a damped
// Picard iteration on the density trajectory.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mfg/cost_model.hpp"
#include "mfg/errors.hpp"
#include "mfg/spectral_basis.hpp"
#include "mfg/tridiagonal.hpp"

namespace mfg {

class TimeGrid {
 public:
  TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw PreconditionError("TimeGrid: horizon must be positive");
    }
    if (n_steps < 1) throw PreconditionError("TimeGrid: need at least one step");
    dt_ = horizon / n_steps;
  }

  double horizon() const noexcept { return horizon_; }
  int n_steps() const noexcept { return n_steps_; }
  int n_levels() const noexcept { return n_steps_ + 1; }
  double dt() const noexcept { return dt_; }
  double time(int level) const noexcept {
    return level == n_steps_ ? horizon_ : level * dt_;
  }

 private:
  double horizon_;
  int n_steps_;
  double dt_;
};

/// Nodal values on the space-time grid, one row per time level.
class SpaceTimeField {
 public:
  SpaceTimeField(const Grid1D& grid, const TimeGrid& tgrid, double fill = 0.0)
      : n_cells_(grid.size()), n_levels_(static_cast<std::size_t>(tgrid.n_levels())),
        values_(n_cells_ * n_levels_, fill) {}

  std::size_t n_cells() const noexcept { return n_cells_; }
  std::size_t n_levels() const noexcept { return n_levels_; }

  std::span<double> row(int level) { return {values_.data() + level * n_cells_, n_cells_}; }
  std::span<const double> row(int level) const {
    return {values_.data() + level * n_cells_, n_cells_};
  }
  double& at(int level, std::size_t i) { return values_[level * n_cells_ + i]; }
  double at(int level, std::size_t i) const { return values_[level * n_cells_ + i]; }

  std::span<const double> data() const noexcept { return values_; }
  std::span<double> data() noexcept { return values_; }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  std::size_t n_cells_;
  std::size_t n_levels_;
  std::vector<double> values_;
};

/// max |a - b| over all entries.
inline double max_abs_difference(const SpaceTimeField& a, const SpaceTimeField& b) {
  double out = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) out = std::max(out, std::abs(x[i] - y[i]));
  return out;
}

/// A probability density on the grid: nonnegative with unit mass.
class InitialDensity {
 public:
  static constexpr double kMassTolerance = 1e-12;

  InitialDensity(std::vector<double> values, const Grid1D& grid) : values_(std::move(values)) {
    if (values_.size() != grid.size()) {
      throw PreconditionError("InitialDensity: length mismatch with grid");
    }
    for (double v : values_) {
      if (!std::isfinite(v) || v < 0.0) {
        throw PreconditionError("InitialDensity: values must be finite and nonnegative");
      }
    }
    const double mass = integrate(values_, grid);
    if (std::abs(mass - 1.0) > kMassTolerance) {
      throw PreconditionError("InitialDensity: mass " + std::to_string(mass) + " differs from 1");
    }
  }

  static InitialDensity uniform(const Grid1D& grid) {
    return InitialDensity(std::vector<double>(grid.size(), 1.0), grid);
  }

  /// m0 = 1 + sum_l amplitudes[l] * phi_{frequencies[l]}.
  static InitialDensity perturbed(const Grid1D& grid, std::span<const int> frequencies,
                                  std::span<const double> amplitudes) {
    if (frequencies.size() != amplitudes.size()) {
      throw PreconditionError("InitialDensity: frequency/amplitude count mismatch");
    }
    std::vector<double> values(grid.size(), 1.0);
    const auto nodes = grid.nodes();
    for (std::size_t l = 0; l < frequencies.size(); ++l) {
      if (frequencies[l] < 1) {
        throw PreconditionError("InitialDensity: perturbation frequencies must be >= 1");
      }
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] += amplitudes[l] * eigenfunction(frequencies[l], nodes[i]);
      }
    }
    return InitialDensity(std::move(values), grid);
  }

  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

struct MeasurementRecord {
  double V = 0.0;  ///< integral of u(., 0)
  double W = 0.0;  ///< integral of u(., 0) * m0
};

enum class Scheme {
  /// First order: implicit diffusion, explicit |u_x|^2 and F(m) from the later level.
  kSemiImplicit,
  /// Second order: Crank-Nicolson on the Hopf-Cole transformed HJB equation
  /// and on the flux-form Fokker-Planck equation.
  kCrankNicolson,
};

struct SolverConfig {
  double damping = 0.5;
  double tolerance = 1e-10;
  int max_iterations = 200;
  Scheme scheme = Scheme::kCrankNicolson;
};

struct SolverReport {
  int picard_iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  double mass_error = 0.0;   ///< max over levels of |integral of m - 1|
  double min_density = 0.0;  ///< min over space-time of m
};

inline constexpr double kDensityFloor = -1e-10;

namespace detail {

// Neumann Laplacian stencil: (scale) * Delta written into a tridiagonal.
inline void add_laplacian(Tridiagonal& a, double scale, double h) {
  const std::size_t n = a.size();
  const double s = scale / (h * h);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      a.lower[i] += s;
      a.diag[i] -= s;
    }
    if (i + 1 < n) {
      a.upper[i] += s;
      a.diag[i] -= s;
    }
  }
}

// Flux-form Fokker-Planck operator L(u) m = (m_x + m u_x)_x, with the drift
// at faces taken from the centred average of m. Columns sum to zero, so the
// operator conserves sum(m) exactly.
inline Tridiagonal fokker_planck_operator(std::span<const double> u, double h) {
  const std::size_t n = u.size();
  Tridiagonal a(n);
  add_laplacian(a, 1.0, h);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double slope = (u[i + 1] - u[i]) / h;
    const double c = slope / (2.0 * h);
    // Face i+1/2: contributes +c (m_i + m_{i+1}) to row i, the negative to row i+1.
    a.diag[i] += c;
    a.upper[i] += c;
    a.lower[i + 1] -= c;
    a.diag[i + 1] -= c;
  }
  return a;
}

// |u_x|^2 at cells: average of squared face slopes, wall faces carry zero slope.
inline std::vector<double> gradient_squared(std::span<const double> u, double h) {
  const std::size_t n = u.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double s = (u[i + 1] - u[i]) / h;
    out[i] += 0.5 * s * s;
    out[i + 1] += 0.5 * s * s;
  }
  return out;
}

inline Tridiagonal scaled_identity_plus(const Tridiagonal& op, double scale) {
  Tridiagonal a(op.size());
  for (std::size_t i = 0; i < op.size(); ++i) {
    a.lower[i] = scale * op.lower[i];
    a.diag[i] = 1.0 + scale * op.diag[i];
    a.upper[i] = scale * op.upper[i];
  }
  return a;
}

inline void check_row(std::span<const double> row, int level, const char* what) {
  for (double v : row) {
    if (!std::isfinite(v)) throw StepFailure(std::string(what) + ": non-finite value", level);
  }
}

}  // namespace detail

/// Backward HJB solve for a given density trajectory; u(., T) = 0.
inline SpaceTimeField solve_hjb_backward(const SpaceTimeField& m_traj, const CostFunction& cost,
                                         const TimeGrid& tgrid, const Grid1D& grid,
                                         Scheme scheme = Scheme::kCrankNicolson) {
  if (m_traj.n_cells() != grid.size() || static_cast<int>(m_traj.n_levels()) != tgrid.n_levels()) {
    throw PreconditionError("solve_hjb_backward: density trajectory shape mismatch");
  }
  const std::size_t n = grid.size();
  const double h = grid.cell_width();
  const double dt = tgrid.dt();
  const int last = tgrid.n_steps();
  SpaceTimeField u(grid, tgrid, 0.0);

  if (scheme == Scheme::kSemiImplicit) {
    detail::Tridiagonal lhs(n);
    detail::add_laplacian(lhs, -dt, h);
    for (std::size_t i = 0; i < n; ++i) lhs.diag[i] += 1.0;
    for (int level = last - 1; level >= 0; --level) {
      const auto later = u.row(level + 1);
      const auto m_later = m_traj.row(level + 1);
      const auto grad2 = detail::gradient_squared(later, h);
      std::vector<double> rhs(n);
      for (std::size_t i = 0; i < n; ++i) {
        rhs[i] = later[i] + dt * (cost.evaluate(m_later[i]) - 0.5 * grad2[i]);
      }
      const auto next = lhs.solve(rhs);
      std::copy(next.begin(), next.end(), u.row(level).begin());
      detail::check_row(u.row(level), level, "HJB");
    }
    return u;
  }

  // Hopf-Cole: u = (T - t) F(1) - 2 log w, with
  //   w_t + w_xx = (F(m) - F(1)) w / 2,   w(., T) = 1.
  // Splitting off the background keeps the uniform-density solution exact.
  const double f1 = cost.value_at_one();
  auto reaction = [&](int level) {
    const auto m = m_traj.row(level);
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = 0.5 * (cost.evaluate(m[i]) - f1);
    return g;
  };
  std::vector<double> w(n, 1.0);
  auto g_later = reaction(last);
  for (int level = last - 1; level >= 0; --level) {
    const auto g_now = reaction(level);
    // Backward step of w_tau = A w, A = d_xx - g, tau = T - t, in increment
    // form: (I - dt/2 A_now) dw = dt/2 (A_now + A_later) w.
    detail::Tridiagonal op_now(n);
    detail::add_laplacian(op_now, 1.0, h);
    detail::Tridiagonal op_later = op_now;
    for (std::size_t i = 0; i < n; ++i) {
      op_now.diag[i] -= g_now[i];
      op_later.diag[i] -= g_later[i];
    }
    auto rhs = op_now.multiply(w);
    const auto later_part = op_later.multiply(w);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = 0.5 * dt * (rhs[i] + later_part[i]);
    const auto dw = detail::scaled_identity_plus(op_now, -0.5 * dt).solve(rhs);
    for (std::size_t i = 0; i < n; ++i) w[i] += dw[i];
    const double background = (tgrid.horizon() - tgrid.time(level)) * f1;
    auto row = u.row(level);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(w[i] > 0.0)) throw StepFailure("HJB: Hopf-Cole variable left (0, inf)", level);
      row[i] = background - 2.0 * std::log(w[i]);
    }
    detail::check_row(row, level, "HJB");
    g_later = g_now;
  }
  return u;
}

/// Forward Fokker-Planck solve with zero-flux walls, drift from `u_traj`.
inline SpaceTimeField solve_fp_forward(const SpaceTimeField& u_traj, const InitialDensity& m0,
                                       const TimeGrid& tgrid, const Grid1D& grid,
                                       Scheme scheme = Scheme::kCrankNicolson) {
  if (u_traj.n_cells() != grid.size() || static_cast<int>(u_traj.n_levels()) != tgrid.n_levels()) {
    throw PreconditionError("solve_fp_forward: value trajectory shape mismatch");
  }
  const double h = grid.cell_width();
  const double dt = tgrid.dt();
  SpaceTimeField m(grid, tgrid, 0.0);
  std::copy(m0.values().begin(), m0.values().end(), m.row(0).begin());

  auto op_prev = detail::fokker_planck_operator(u_traj.row(0), h);
  for (int level = 1; level <= tgrid.n_steps(); ++level) {
    auto op_next = detail::fokker_planck_operator(u_traj.row(level), h);
    // Increment form: (I - a L_next) dm = rhs, so a stationary state stays
    // bit-exact instead of picking up round-off from the solve.
    const auto prev = m.row(level - 1);
    std::vector<double> rhs;
    detail::Tridiagonal lhs(grid.size());
    if (scheme == Scheme::kSemiImplicit) {
      rhs = op_next.multiply(prev);
      for (double& v : rhs) v *= dt;
      lhs = detail::scaled_identity_plus(op_next, -dt);
    } else {
      rhs = op_next.multiply(prev);
      const auto older = op_prev.multiply(prev);
      for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = 0.5 * dt * (rhs[i] + older[i]);
      lhs = detail::scaled_identity_plus(op_next, -0.5 * dt);
    }
    auto next = lhs.solve(rhs);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += prev[i];
    std::copy(next.begin(), next.end(), m.row(level).begin());
    detail::check_row(m.row(level), level, "Fokker-Planck");
    const double lowest = *std::min_element(next.begin(), next.end());
    if (lowest < kDensityFloor) {
      throw StepFailure("Fokker-Planck: density " + std::to_string(lowest) + " below floor", level);
    }
    op_prev = std::move(op_next);
  }
  return m;
}

struct MfgSolution {
  SpaceTimeField u;
  SpaceTimeField m;
  SolverReport report;
};

/// Damped Picard iteration m <- (1 - theta) m + theta FP(HJB(m)).
inline MfgSolution solve_mfg(const CostFunction& cost, const InitialDensity& m0,
                             const TimeGrid& tgrid, const Grid1D& grid,
                             const SolverConfig& config = {}) {
  if (!(config.damping > 0.0 && config.damping <= 1.0)) {
    throw PreconditionError("solve_mfg: damping must lie in (0, 1]");
  }
  if (!(config.tolerance > 0.0) || config.max_iterations < 1) {
    throw PreconditionError("solve_mfg: tolerance and iteration cap must be positive");
  }
  SpaceTimeField m(grid, tgrid, 0.0);
  for (int level = 0; level < tgrid.n_levels(); ++level) {
    std::copy(m0.values().begin(), m0.values().end(), m.row(level).begin());
  }

  SolverReport report;
  double residual = std::numeric_limits<double>::infinity();
  double best = residual;
  int since_best = 0;
  for (int it = 1; it <= config.max_iterations; ++it) {
    auto u = solve_hjb_backward(m, cost, tgrid, grid, config.scheme);
    auto m_new = solve_fp_forward(u, m0, tgrid, grid, config.scheme);
    residual = max_abs_difference(m_new, m);
    report.picard_iterations = it;
    report.final_residual = residual;
    if (!std::isfinite(residual)) {
      throw PicardDivergence("Picard iteration produced a non-finite residual", it, residual);
    }
    if (residual <= config.tolerance) {
      report.converged = true;
      double mass_error = 0.0;
      double lowest = std::numeric_limits<double>::infinity();
      for (int level = 0; level < tgrid.n_levels(); ++level) {
        const auto row = m_new.row(level);
        mass_error = std::max(mass_error, std::abs(integrate(row, grid) - 1.0));
        lowest = std::min(lowest, *std::min_element(row.begin(), row.end()));
      }
      report.mass_error = mass_error;
      report.min_density = lowest;
      return {std::move(u), std::move(m_new), report};
    }
    if (residual < best) {
      best = residual;
      since_best = 0;
    } else if (++since_best >= 20) {
      throw PicardDivergence("Picard residual stopped decreasing at " + std::to_string(residual),
                             it, residual);
    }
    const double theta = config.damping;
    auto cur = m.data();
    const auto upd = m_new.data();
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = (1.0 - theta) * cur[i] + theta * upd[i];
  }
  throw PicardDivergence("Picard iteration did not reach tolerance after " +
                             std::to_string(config.max_iterations) + " iterations (residual " +
                             std::to_string(residual) + ")",
                         config.max_iterations, residual);
}

/// Data pair (V, W) from a converged value function.
inline MeasurementRecord measurement_from(const SpaceTimeField& u, const InitialDensity& m0,
                                          const Grid1D& grid) {
  const auto u0 = u.row(0);
  return {integrate(u0, grid), inner(u0, m0.values(), grid)};
}

inline MeasurementRecord measure(const CostFunction& cost, const InitialDensity& m0,
                                 const TimeGrid& tgrid, const Grid1D& grid,
                                 const SolverConfig& config = {}) {
  const auto solution = solve_mfg(cost, m0, tgrid, grid, config);
  return measurement_from(solution.u, m0, grid);
}

}  // namespace mfg
