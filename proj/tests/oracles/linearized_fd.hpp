#pragma once

// Test-only oracle: implicit-Euler / central-difference discretization of the
// linearized system
//
//   -u_t - u_xx = F1 m,        u(., T) = 0,
//    m_t - m_xx - u_xx = 0,    m(., 0) = g,
//
// assembled as one space-time sparse system and solved directly. Shares
// nothing with the spectral solver except the grid types.

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <span>
#include <vector>

#include "mfg/mfg_forward.hpp"

namespace mfg::oracle {

struct FdLinearized {
  SpaceTimeField u;
  SpaceTimeField m;
};

inline FdLinearized solve_linearized_fd(double f1, std::span<const double> g, const TimeGrid& tgrid,
                                        const Grid1D& grid) {
  const int nc = grid.n_cells();
  const int nt = tgrid.n_steps();
  const double dt = tgrid.dt();
  const double inv_h2 = 1.0 / (grid.cell_width() * grid.cell_width());
  // Unknowns: u at levels 0..nt-1, m at levels 1..nt.
  auto u_index = [&](int level, int i) { return level * nc + i; };
  auto m_index = [&](int level, int i) { return nt * nc + (level - 1) * nc + i; };
  const int size = 2 * nt * nc;

  std::vector<Eigen::Triplet<double>> entries;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size);
  auto laplacian = [&](int row, int i, double scale, auto index_of) {
    // scale * (Neumann Laplacian of the field at cell i)
    if (i > 0) {
      entries.emplace_back(row, index_of(i - 1), scale * inv_h2);
      entries.emplace_back(row, index_of(i), -scale * inv_h2);
    }
    if (i + 1 < nc) {
      entries.emplace_back(row, index_of(i + 1), scale * inv_h2);
      entries.emplace_back(row, index_of(i), -scale * inv_h2);
    }
  };

  for (int level = 0; level < nt; ++level) {
    for (int i = 0; i < nc; ++i) {
      // (u^n - u^{n+1}) / dt - Lap u^n - F1 m^n = 0
      const int row = u_index(level, i);
      entries.emplace_back(row, u_index(level, i), 1.0 / dt);
      if (level + 1 < nt) entries.emplace_back(row, u_index(level + 1, i), -1.0 / dt);
      laplacian(row, i, -1.0, [&](int j) { return u_index(level, j); });
      if (level == 0) {
        rhs[row] += f1 * g[i];
      } else {
        entries.emplace_back(row, m_index(level, i), -f1);
      }
    }
  }
  for (int level = 1; level <= nt; ++level) {
    for (int i = 0; i < nc; ++i) {
      // (m^n - m^{n-1}) / dt - Lap m^n - Lap u^n = 0, with u^nt = 0
      const int row = m_index(level, i);
      entries.emplace_back(row, m_index(level, i), 1.0 / dt);
      if (level == 1) {
        rhs[row] += g[i] / dt;
      } else {
        entries.emplace_back(row, m_index(level - 1, i), -1.0 / dt);
      }
      laplacian(row, i, -1.0, [&](int j) { return m_index(level, j); });
      if (level < nt) laplacian(row, i, -1.0, [&](int j) { return u_index(level, j); });
    }
  }

  Eigen::SparseMatrix<double> a(size, size);
  a.setFromTriplets(entries.begin(), entries.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  const Eigen::VectorXd x = lu.solve(rhs);

  FdLinearized out{SpaceTimeField(grid, tgrid), SpaceTimeField(grid, tgrid)};
  for (int i = 0; i < nc; ++i) out.m.at(0, i) = g[i];
  for (int level = 0; level < nt; ++level)
    for (int i = 0; i < nc; ++i) out.u.at(level, i) = x[u_index(level, i)];
  for (int level = 1; level <= nt; ++level)
    for (int i = 0; i < nc; ++i) out.m.at(level, i) = x[m_index(level, i)];
  return out;
}

/// Discrete space-time L2 norm of a - b (midpoint in space, trapezoid in time).
inline double space_time_l2(const SpaceTimeField& a, const SpaceTimeField& b, const Grid1D& grid,
                            const TimeGrid& tgrid) {
  double sum = 0.0;
  for (int level = 0; level < tgrid.n_levels(); ++level) {
    const double w = (level == 0 || level == tgrid.n_steps()) ? 0.5 : 1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double d = a.at(level, i) - b.at(level, i);
      sum += w * d * d;
    }
  }
  return std::sqrt(sum * tgrid.dt() * grid.cell_width());
}

}  // namespace mfg::oracle
