#pragma once

// Neumann eigenbasis of -d^2/dx^2 on the unit interval, sampled on a
// cell-centred grid with midpoint quadrature.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mfg/errors.hpp"

namespace mfg {

/// Uniform cell-centred grid on [0, 1]. Every cell carries quadrature weight
/// `cell_width`, so the weights sum to the measure of the domain.
class Grid1D {
 public:
  explicit Grid1D(int n_cells) : n_cells_(n_cells) {
    if (n_cells < 2) {
      throw PreconditionError("Grid1D: need at least 2 cells, got " + std::to_string(n_cells));
    }
    cell_width_ = 1.0 / n_cells;
    nodes_.resize(static_cast<std::size_t>(n_cells));
    for (int i = 0; i < n_cells; ++i) nodes_[i] = (i + 0.5) * cell_width_;
  }

  int n_cells() const noexcept { return n_cells_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  double cell_width() const noexcept { return cell_width_; }
  std::span<const double> nodes() const noexcept { return nodes_; }
  double weight() const noexcept { return cell_width_; }

 private:
  int n_cells_;
  double cell_width_;
  std::vector<double> nodes_;
};

/// Midpoint quadrature of `f` over [0, 1].
inline double integrate(std::span<const double> f, const Grid1D& grid) {
  if (f.size() != grid.size()) {
    throw PreconditionError("integrate: field has " + std::to_string(f.size()) +
                            " values, grid has " + std::to_string(grid.size()));
  }
  double sum = 0.0;
  for (double v : f) sum += v;
  return sum * grid.weight();
}

/// Discrete L2 inner product.
inline double inner(std::span<const double> f, std::span<const double> g, const Grid1D& grid) {
  if (f.size() != grid.size() || g.size() != grid.size()) {
    throw PreconditionError("inner: length mismatch with grid");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += f[i] * g[i];
  return sum * grid.weight();
}

inline double l2_norm(std::span<const double> f, const Grid1D& grid) {
  return std::sqrt(inner(f, f, grid));
}

/// lambda_n = (n pi)^2.
inline double eigenvalue(int n) {
  const double k = n * std::numbers::pi;
  return k * k;
}

/// phi_n(x): 1 for n = 0, sqrt(2) cos(n pi x) otherwise.
inline double eigenfunction(int n, double x) {
  if (n == 0) return 1.0;
  return std::numbers::sqrt2 * std::cos(n * std::numbers::pi * x);
}

struct EigenMode {
  int index = 0;
  double eigenvalue = 0.0;
  std::vector<double> values;
};

inline EigenMode eigenmode(int n, const Grid1D& grid) {
  if (n < 0) throw PreconditionError("eigenmode: negative index " + std::to_string(n));
  EigenMode mode{n, eigenvalue(n), {}};
  mode.values.reserve(grid.size());
  for (double x : grid.nodes()) mode.values.push_back(eigenfunction(n, x));
  return mode;
}

/// Coefficients c_0..c_{max_mode} of `field` against the sampled eigenbasis.
inline std::vector<double> project(std::span<const double> field, int max_mode, const Grid1D& grid) {
  if (field.size() != grid.size()) {
    throw PreconditionError("project: field has " + std::to_string(field.size()) +
                            " values, grid has " + std::to_string(grid.size()));
  }
  if (max_mode < 0) throw PreconditionError("project: negative mode count");
  std::vector<double> coeffs(static_cast<std::size_t>(max_mode) + 1);
  for (int n = 0; n <= max_mode; ++n) {
    const auto mode = eigenmode(n, grid);
    coeffs[n] = inner(field, mode.values, grid);
  }
  return coeffs;
}

/// Nodal values of sum_n coeffs[n] * phi_n.
inline std::vector<double> synthesize(std::span<const double> coeffs, const Grid1D& grid) {
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t n = 0; n < coeffs.size(); ++n) {
    if (coeffs[n] == 0.0) continue;
    const auto nodes = grid.nodes();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += coeffs[n] * eigenfunction(static_cast<int>(n), nodes[i]);
    }
  }
  return out;
}

/// Quadrature of prod_i phi_{k_i} over [0, 1].
inline double triple_product(std::span<const int> k_list, const Grid1D& grid) {
  std::vector<double> prod(grid.size(), 1.0);
  for (int k : k_list) {
    if (k < 1) throw PreconditionError("triple_product: frequencies must be >= 1");
    const auto nodes = grid.nodes();
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= eigenfunction(k, nodes[i]);
  }
  return integrate(prod, grid);
}

/// Three-point Laplacian with reflecting ghost cells (zero normal derivative).
inline std::vector<double> neumann_laplacian(std::span<const double> f, const Grid1D& grid) {
  if (f.size() != grid.size()) throw PreconditionError("neumann_laplacian: length mismatch");
  const std::size_t n = f.size();
  const double inv_h2 = 1.0 / (grid.cell_width() * grid.cell_width());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i == 0 ? f[i] : f[i - 1];
    const double right = i + 1 == n ? f[i] : f[i + 1];
    out[i] = (left - 2.0 * f[i] + right) * inv_h2;
  }
  return out;
}

}  // namespace mfg
