#pragma once

// Order-by-order reconstruction of the Taylor coefficients of F about m = 1
// from the measurement map m0 -> (V, W).
//
//   order 0:  V at m0 = 1 equals T F(1).
//   order 1:  with m0 = 1 + e phi_k, (W'' - V'') / 2 = U_k(0), the transfer
//             ratio of mode k, which is strictly increasing in F'(1).
//   order n:  with m0 = 1 + sum e_l phi_{k_l}, the mixed derivative of V
//             differs from that of a trial model sharing the known
//             coefficients (and F^(n) = 0) by F^(n) times the coupling
//             integral  int_0^T <m^(1) ... m^(n), 1> dt.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfg/cost_model.hpp"
#include "mfg/errors.hpp"
#include "mfg/linearized.hpp"
#include "mfg/mfg_forward.hpp"
#include "mfg/spectral_basis.hpp"
#include "mfg/stencil.hpp"

namespace mfg {

/// Discretization and coupling settings shared by every forward solve.
struct ForwardModel {
  Grid1D grid{128};
  TimeGrid tgrid{1.0, 256};
  SolverConfig solver{};

  /// Defaults used for reconstruction: the Picard tolerance is tightened
  /// because stencils amplify data errors by (2h)^-n.
  static ForwardModel for_inversion(int n_cells = 128, int n_steps = 256, double horizon = 1.0) {
    ForwardModel model{Grid1D(n_cells), TimeGrid(horizon, n_steps), SolverConfig{}};
    model.solver.tolerance = 1e-13;
    return model;
  }
};

struct Observation {
  MeasurementRecord record;
  std::optional<SolverReport> report;  ///< absent for recorded data
};

/// Measurement map restricted to m0 = 1 + sum_l eps[l] phi_{frequencies[l]}.
/// Must be pure and safe to call concurrently.
using MeasureFn =
    std::function<Observation(std::span<const int> frequencies, std::span<const double> eps)>;

inline MeasureFn simulated_measurements(CostFunction cost, ForwardModel model) {
  return [cost = std::move(cost), model = std::move(model)](std::span<const int> frequencies,
                                                            std::span<const double> eps) {
    const auto m0 = InitialDensity::perturbed(model.grid, frequencies, eps);
    const auto solution = solve_mfg(cost, m0, model.tgrid, model.grid, model.solver);
    return Observation{measurement_from(solution.u, m0, model.grid), solution.report};
  };
}

struct PerturbationSpec {
  std::vector<int> frequencies;
  double amplitude = 0.01;

  void validate(const Grid1D& grid) const {
    if (!(amplitude > 0.0)) throw PreconditionError("PerturbationSpec: amplitude must be positive");
    for (int k : frequencies) {
      if (k < 1) throw PreconditionError("PerturbationSpec: frequencies must be >= 1");
    }
    if (frequencies.size() >= 2 && std::abs(triple_product(frequencies, grid)) <= 1e-12) {
      throw PreconditionError("PerturbationSpec: eigenfunction product has zero mean");
    }
  }
};

/// Aggregate of the solver reports behind one recovered coefficient.
struct ForwardDiagnostics {
  int forward_solves = 0;
  int recorded_points = 0;
  int max_picard_iterations = 0;
  double max_final_residual = 0.0;
  double max_mass_error = 0.0;
  double min_density = std::numeric_limits<double>::infinity();

  void add(const Observation& obs) {
    if (!obs.report) {
      ++recorded_points;
      return;
    }
    const auto& r = *obs.report;
    ++forward_solves;
    max_picard_iterations = std::max(max_picard_iterations, r.picard_iterations);
    max_final_residual = std::max(max_final_residual, r.final_residual);
    max_mass_error = std::max(max_mass_error, r.mass_error);
    min_density = std::min(min_density, r.min_density);
  }
};

struct InversionOptions {
  double amplitude = 0.01;  ///< stencil amplitude h
  bool richardson = true;
  int jobs = 1;
  /// Absolute error assumed for each recorded V or W value.
  double data_noise = 1e-13;
};

struct OrderEstimate {
  int order = 0;
  double value = 0.0;
  double uncertainty = 0.0;
  /// |D(h) - D(h/2)| of the data derivative this order was read from.
  double residual = 0.0;
  bool resolved = true;  ///< |value| above the noise floor
  std::vector<int> frequencies;
  DerivativeEstimate data_derivative;
  std::optional<DerivativeEstimate> trial_derivative;
  double denominator = 0.0;  ///< transfer ratio slope proxy or coupling integral
  ForwardDiagnostics diagnostics;
  std::string note;
};

namespace detail {

struct StencilObservations {
  std::vector<Observation> coarse;
  std::vector<Observation> fine;
};

inline StencilObservations observe_stencil(const MeasureFn& measure, std::span<const int> freqs,
                                           double h, bool richardson, int jobs) {
  const int n = static_cast<int>(freqs.size());
  auto sweep = [&](double amp) {
    return parallel_map<Observation>(
        std::size_t{1} << n,
        [&](std::size_t i) {
          auto eps = stencil_point(i, n, amp);
          try {
            return measure(freqs, eps);
          } catch (const StencilPointFailure&) {
            throw;
          } catch (const NumericError& e) {
            throw StencilPointFailure(eps, e.what());
          }
        },
        jobs);
  };
  StencilObservations out;
  out.coarse = sweep(h);
  if (richardson) out.fine = sweep(0.5 * h);
  return out;
}

template <class Project>
DerivativeEstimate derivative_from(const StencilObservations& obs, int n, double h,
                                   Project&& project) {
  std::vector<double> coarse, fine;
  for (const auto& o : obs.coarse) coarse.push_back(project(o.record));
  for (const auto& o : obs.fine) fine.push_back(project(o.record));
  return estimate_from_values(coarse, fine, n, h);
}

inline void collect(ForwardDiagnostics& diag, const StencilObservations& obs) {
  for (const auto& o : obs.coarse) diag.add(o);
  for (const auto& o : obs.fine) diag.add(o);
}

}  // namespace detail

/// F(1) = V / T from the measurement at the uniform density.
inline double recover_order0(const MeasurementRecord& background, double horizon) {
  return background.V / horizon;
}

/// Recovers F'(1) from the second derivatives of V and W along phi_k.
inline OrderEstimate recover_order1(int k, const ForwardModel& model, const MeasureFn& measure,
                                    const InversionOptions& opts = {}) {
  if (k < 1) throw PreconditionError("recover_order1: frequency must be >= 1");
  const std::vector<int> freqs{k, k};
  const auto obs =
      detail::observe_stencil(measure, freqs, opts.amplitude, opts.richardson, opts.jobs);

  OrderEstimate est;
  est.order = 1;
  est.frequencies = {k};
  detail::collect(est.diagnostics, obs);
  est.data_derivative = detail::derivative_from(
      obs, 2, opts.amplitude, [](const MeasurementRecord& r) { return r.W - r.V; });
  est.residual = est.data_derivative.spread;

  const double lambda = eigenvalue(k);
  const double horizon = model.tgrid.horizon();
  const double ratio = 0.5 * est.data_derivative.value;
  const double ratio_noise = 0.5 * noise_floor(est.data_derivative, opts.data_noise);
  est.denominator = ratio;
  if (ratio > ratio_noise) {
    est.value = invert_transfer_ratio(lambda, horizon, ratio);
    est.uncertainty = invert_transfer_ratio(lambda, horizon, ratio + ratio_noise) - est.value;
  } else if (ratio >= -ratio_noise) {
    est.value = 0.0;
    est.resolved = false;
    est.uncertainty = invert_transfer_ratio(lambda, horizon, std::max(ratio_noise, 1e-300));
    est.note = "first-order data within noise floor; F'(1) unresolved";
  } else {
    throw RangeError("recover_order1: measured ratio " + std::to_string(ratio) +
                     " is negative beyond its noise floor " + std::to_string(ratio_noise) +
                     "; no admissible cost produces these data");
  }
  return est;
}

/// Frequencies (1, ..., 1, n-1): phi_1^{n-1} contains cos((n-1) pi x), so the
/// product with phi_{n-1} has nonzero mean.
inline std::vector<int> choose_frequencies(int n, const Grid1D& grid) {
  if (n < 2) throw PreconditionError("choose_frequencies: order must be >= 2");
  std::vector<int> freqs(static_cast<std::size_t>(n), 1);
  freqs.back() = n - 1;
  if (std::abs(triple_product(freqs, grid)) > 1e-12) return freqs;
  for (int k = 1; k <= n; ++k) {
    freqs.back() = k;
    if (std::abs(triple_product(freqs, grid)) > 1e-12) return freqs;
  }
  throw NumericError("choose_frequencies: no admissible frequency found for order " +
                     std::to_string(n));
}

/// int_0^T <m^(1) ... m^(n), 1> dt for m^(l) = M_l(t) phi_{k_l}, M_l(0) = 1.
inline double coupling_integral(std::span<const int> frequencies, double f1, double horizon,
                                const Grid1D& grid) {
  if (frequencies.empty()) throw PreconditionError("coupling_integral: empty frequency list");
  const double spatial = triple_product(frequencies, grid);
  std::vector<ModeSolution> modes;
  for (int k : frequencies) modes.push_back(mode_solution(eigenvalue(k), f1, horizon, 1.0));
  auto integrand = [&](double t) {
    double p = 1.0;
    for (const auto& m : modes) p *= m.M(t);
    return p;
  };
  const double temporal =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, horizon, 20,
                                                                    1e-14);
  const double value = spatial * temporal;
  if (std::abs(value) < 1e-12) {
    throw PreconditionError("coupling_integral: degenerate frequency choice (value " +
                            std::to_string(value) + ")");
  }
  return value;
}

/// Recovers F^(n), n >= 2, given coefficients 0..n-1 in `known`.
inline OrderEstimate recover_orderN(int n, const CostFunction& known, const MeasureFn& measure,
                                    const ForwardModel& model, const InversionOptions& opts = {}) {
  if (n < 2) throw PreconditionError("recover_orderN: order must be >= 2");
  if (known.truncation_order() < n - 1) {
    throw PreconditionError("recover_orderN: coefficients up to order " + std::to_string(n - 1) +
                            " are required");
  }
  const auto freqs = choose_frequencies(n, model.grid);
  const double h = opts.amplitude;

  OrderEstimate est;
  est.order = n;
  est.frequencies = freqs;
  auto take_v = [](const MeasurementRecord& r) { return r.V; };

  const auto truth = detail::observe_stencil(measure, freqs, h, opts.richardson, opts.jobs);
  detail::collect(est.diagnostics, truth);
  est.data_derivative = detail::derivative_from(truth, n, h, take_v);

  const auto trial_cost = known.truncated(n - 1);
  const auto trial_measure = simulated_measurements(trial_cost, model);
  const auto trial = detail::observe_stencil(trial_measure, freqs, h, opts.richardson, opts.jobs);
  detail::collect(est.diagnostics, trial);
  est.trial_derivative = detail::derivative_from(trial, n, h, take_v);

  est.denominator = coupling_integral(freqs, known.derivative_at_one(1),
                                      model.tgrid.horizon(), model.grid);
  est.value = (est.data_derivative.value - est.trial_derivative->value) / est.denominator;
  est.residual = est.data_derivative.spread;
  est.uncertainty = (noise_floor(est.data_derivative, opts.data_noise) +
                     noise_floor(*est.trial_derivative, model.solver.tolerance)) /
                    std::abs(est.denominator);
  est.resolved = std::abs(est.value) > est.uncertainty;
  if (!est.resolved) est.note = "estimate below finite-difference noise floor";
  return est;
}

struct ReconstructionResult {
  std::vector<double> coefficients;
  std::vector<double> uncertainties;
  std::vector<double> residuals;
  std::vector<OrderEstimate> orders;
  bool complete = false;
  std::string failure;

  CostFunction recovered() const { return CostFunction::polynomial(coefficients); }
};

/// Chains order 0, order 1 and orders 2..max_order. Stops at the first
/// failing order and returns what was recovered so far.
inline ReconstructionResult reconstruct(const MeasureFn& measure, int max_order,
                                        const ForwardModel& model,
                                        const InversionOptions& opts = {}) {
  if (max_order < 0) throw PreconditionError("reconstruct: negative order");
  ReconstructionResult result;
  auto append = [&](const OrderEstimate& est) {
    result.coefficients.push_back(est.value);
    result.uncertainties.push_back(est.uncertainty);
    result.residuals.push_back(est.residual);
    result.orders.push_back(est);
  };
  int order = 0;
  try {
    const auto background = measure({}, {});
    OrderEstimate zero;
    zero.order = 0;
    zero.value = recover_order0(background.record, model.tgrid.horizon());
    zero.residual = std::abs(background.record.W - background.record.V);
    zero.uncertainty = std::max(opts.data_noise, zero.residual) / model.tgrid.horizon();
    zero.diagnostics.add(background);
    append(zero);

    for (order = 1; order <= max_order; ++order) {
      if (order == 1) {
        append(recover_order1(1, model, measure, opts));
      } else {
        append(recover_orderN(order, result.recovered(), measure, model, opts));
      }
    }
    result.complete = true;
  } catch (const std::exception& e) {
    result.failure = "order " + std::to_string(order) + ": " + e.what();
  }
  return result;
}

}  // namespace mfg
