#pragma once

// Invariant groups run by `mfginv selftest`. Each group is a quick numerical
// check with a pinned threshold; failures carry the observed metric.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mfg/cost_model.hpp"
#include "mfg/inversion.hpp"
#include "mfg/linearized.hpp"
#include "mfg/mfg_forward.hpp"
#include "mfg/spectral_basis.hpp"

namespace mfg {

struct SelftestGroup {
  std::string name;
  bool passed = false;
  double metric = 0.0;     ///< worst observed value
  double threshold = 0.0;  ///< pass iff metric <= threshold
  std::string detail;
};

namespace selftest {

/// Log-spaced grid of `points` values in [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> out(static_cast<std::size_t>(points));
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int i = 0; i < points; ++i) out[i] = std::exp(a + (b - a) * i / (points - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

inline SelftestGroup orthonormality() {
  const Grid1D grid(256);
  double worst = 0.0;
  std::vector<EigenMode> modes;
  for (int n = 0; n <= 32; ++n) modes.push_back(eigenmode(n, grid));
  for (int i = 0; i <= 32; ++i) {
    for (int j = 0; j <= 32; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(inner(modes[i].values, modes[j].values, grid) - target));
    }
  }
  return {"spectral_orthonormality", worst <= 1e-10, worst, 1e-10,
          "max |<phi_i, phi_j> - delta_ij| for i, j <= 32 at 256 cells"};
}

inline SelftestGroup background_exactness() {
  const Grid1D grid(128);
  const TimeGrid tgrid(1.0, 256);
  const double c = 1.7;
  const auto sol = solve_mfg(CostFunction::polynomial({c}), InitialDensity::uniform(grid), tgrid, grid);
  double worst = 0.0;
  for (int level = 0; level < tgrid.n_levels(); ++level) {
    const double exact = (tgrid.horizon() - tgrid.time(level)) * c;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      worst = std::max(worst, std::abs(sol.u.at(level, i) - exact));
      worst = std::max(worst, std::abs(sol.m.at(level, i) - 1.0));
    }
  }
  return {"background_exactness", worst <= 1e-10, worst, 1e-10,
          "max error of (u, m) against ((T-t) F(1), 1) at uniform initial density"};
}

inline SelftestGroup mass_conservation(std::uint64_t seed) {
  const Grid1D grid(64);
  const TimeGrid tgrid(1.0, 128);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(-0.05, 0.05);
  std::uniform_int_distribution<int> freq(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    const std::vector<int> k{freq(rng), freq(rng)};
    const std::vector<double> e{0.5 * amp(rng), 0.5 * amp(rng)};
    const auto sol = solve_mfg(CostFunction({1.0, 1.0, 0.5}), InitialDensity::perturbed(grid, k, e),
                               tgrid, grid);
    worst = std::max(worst, sol.report.mass_error);
  }
  return {"mass_conservation", worst <= 1e-10, worst, 1e-10,
          "max_t |integral of m - 1| over randomized perturbed solves"};
}

inline SelftestGroup monotonicity() {
  const auto f1_grid = log_grid(1e-3, 1e3, 200);
  int violations = 0;
  for (int k = 1; k <= 3; ++k) {
    for (double horizon : {0.5, 1.0, 2.0}) {
      double previous = -1.0;
      for (double f1 : f1_grid) {
        const double r = transfer_ratio(eigenvalue(k), f1, horizon);
        if (!(r > previous)) ++violations;
        previous = r;
      }
    }
  }
  return {"transfer_ratio_monotonicity", violations == 0, static_cast<double>(violations), 0.0,
          "non-increasing steps of the transfer ratio on a 200-point log grid of F'(1)"};
}

inline SelftestGroup diagonalization() {
  double worst = 0.0;
  for (int k = 1; k <= 3; ++k) {
    for (double f1 : log_grid(1e-3, 1e3, 200)) {
      const auto d = diagonalize_mode(eigenvalue(k), f1);
      const auto a = d.reconstruct();
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const double scale = std::max(1.0, std::abs(d.system[i][j]));
          worst = std::max(worst, std::abs(a[i][j] - d.system[i][j]) / scale);
        }
    }
  }
  return {"diagonalization", worst <= 1e-12, worst, 1e-12,
          "entrywise error of S diag(mu, -mu) S^-1 against the mode system matrix"};
}

inline SelftestGroup ratio_round_trip(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> mode(1, 5);
  std::uniform_real_distribution<double> log_f1(std::log(1e-2), std::log(1e2));
  std::uniform_real_distribution<double> horizon(0.25, 4.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double lambda = eigenvalue(mode(rng));
    const double f1 = std::exp(log_f1(rng));
    const double t = horizon(rng);
    const double back = invert_transfer_ratio(lambda, t, transfer_ratio(lambda, f1, t));
    worst = std::max(worst, std::abs(back - f1) / f1);
  }
  return {"ratio_inversion_round_trip", worst <= 1e-10, worst, 1e-10,
          "relative error of invert(transfer_ratio(F'(1))) over random triples"};
}

inline SelftestGroup mode_ode_residual() {
  const auto s = mode_solution(eigenvalue(1), 1.0, 1.0, 1.0);
  const double step = 1e-4;
  double worst = 0.0;
  for (int i = 1; i < 100; ++i) {
    const double t = i / 100.0;
    const double du = (s.U(t + step) - s.U(t - step)) / (2 * step);
    const double dm = (s.M(t + step) - s.M(t - step)) / (2 * step);
    worst = std::max(worst, std::abs(-du + s.lambda * s.U(t) - s.f1 * s.M(t)));
    worst = std::max(worst, std::abs(dm + s.lambda * s.M(t) + s.lambda * s.U(t)));
  }
  return {"mode_ode_residual", worst <= 1e-5, worst, 1e-5,
          "central-difference residual of the closed-form mode solution (step 1e-4)"};
}

}  // namespace selftest

/// Runs every invariant group; exceptions turn into failed groups.
inline std::vector<SelftestGroup> run_selftest(std::uint64_t seed = 0) {
  const std::vector<std::function<SelftestGroup()>> groups{
      selftest::orthonormality,
      selftest::background_exactness,
      [seed] { return selftest::mass_conservation(seed); },
      selftest::monotonicity,
      selftest::diagonalization,
      [seed] { return selftest::ratio_round_trip(seed); },
      selftest::mode_ode_residual,
  };
  std::vector<SelftestGroup> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    try {
      out.push_back(groups[i]());
    } catch (const std::exception& e) {
      out.push_back({"group_" + std::to_string(i), false, 0.0, 0.0, e.what()});
    }
  }
  return out;
}

}  // namespace mfg
