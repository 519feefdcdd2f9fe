#pragma once

// Central mixed finite differences over the 2^n sign stencil {-h, +h}^n:
//
//   d^n f / (de_1 ... de_n) at 0  ~  sum_s (prod s_i) f(s h) / (2h)^n,
//
// exact for multilinear f, O(h^2) otherwise, so one Richardson step from
// {h, h/2} removes the leading error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mfg/errors.hpp"

namespace mfg {

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Results land at
/// their own index, so output is independent of scheduling. If several calls
/// throw, the exception of the lowest index is rethrown.
template <class Result, class Fn>
std::vector<Result> parallel_map(std::size_t count, Fn&& fn, int jobs = 1) {
  std::vector<Result> out(count);
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::mutex guard;
  std::size_t failed_index = std::numeric_limits<std::size_t>::max();
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(guard);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct DerivativeEstimate {
  double value = 0.0;
  int order = 0;
  double stencil_amplitude = 0.0;
  bool richardson_used = false;
  /// |D(h) - D(h/2)| when Richardson is used, 0 otherwise.
  double spread = 0.0;
  /// max |f| over the stencil, for round-off floors.
  double data_scale = 0.0;
};

/// Stencil point `index` of order n: bit i set means -h in direction i.
inline std::vector<double> stencil_point(std::size_t index, int n, double h) {
  std::vector<double> eps(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) eps[i] = (index >> i) & 1U ? -h : h;
  return eps;
}

inline double stencil_sign(std::size_t index, int n) {
  int negatives = 0;
  for (int i = 0; i < n; ++i) negatives += static_cast<int>((index >> i) & 1U);
  return negatives % 2 == 0 ? 1.0 : -1.0;
}

inline std::string format_vector(std::span<const double> v) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

/// A forward evaluation failed at a specific stencil point.
class StencilPointFailure : public NumericError {
 public:
  StencilPointFailure(std::vector<double> eps, const std::string& reason)
      : NumericError("evaluation failed at epsilon = " + format_vector(eps) + ": " + reason),
        eps_(std::move(eps)) {}
  std::span<const double> epsilon() const noexcept { return eps_; }

 private:
  std::vector<double> eps_;
};

/// Combines stencil values (index order as in `stencil_point`).
inline double combine_stencil(std::span<const double> values, int n, double h) {
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) sum += stencil_sign(i, n) * values[i];
  return sum / std::pow(2.0 * h, n);
}

/// Evaluates data_fn on the order-n stencil with amplitude h.
template <class DataFn>
std::vector<double> evaluate_stencil(DataFn&& data_fn, int n, double h, int jobs = 1) {
  const std::size_t count = std::size_t{1} << n;
  return parallel_map<double>(
      count,
      [&](std::size_t i) {
        auto eps = stencil_point(i, n, h);
        try {
          return static_cast<double>(data_fn(std::span<const double>(eps)));
        } catch (const StencilPointFailure&) {
          throw;
        } catch (const NumericError& e) {
          throw StencilPointFailure(eps, e.what());
        }
      },
      jobs);
}

/// Derivative estimate from stencil values at amplitude h and, when `fine`
/// is non-empty, at amplitude h/2 (Richardson-extrapolated).
inline DerivativeEstimate estimate_from_values(std::span<const double> coarse,
                                               std::span<const double> fine, int n, double h) {
  auto scale_of = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
  };
  DerivativeEstimate est;
  est.order = n;
  est.stencil_amplitude = h;
  est.data_scale = scale_of(coarse);
  const double d_coarse = combine_stencil(coarse, n, h);
  if (fine.empty()) {
    est.value = d_coarse;
    return est;
  }
  const double d_fine = combine_stencil(fine, n, 0.5 * h);
  est.value = (4.0 * d_fine - d_coarse) / 3.0;
  est.richardson_used = true;
  est.spread = std::abs(d_coarse - d_fine);
  est.data_scale = std::max(est.data_scale, scale_of(fine));
  return est;
}

/// Round-off/data-noise floor of an estimate: `data_noise` (absolute error
/// of each stencil value) amplified by the stencil weights, or the h vs h/2
/// spread if that is larger.
inline double noise_floor(const DerivativeEstimate& est, double data_noise) {
  const int n = est.order;
  const double h_min = est.richardson_used ? 0.5 * est.stencil_amplitude : est.stencil_amplitude;
  const double per_value =
      std::max(data_noise, 64.0 * std::numeric_limits<double>::epsilon() * est.data_scale);
  double floor = per_value * std::pow(2.0, n) / std::pow(2.0 * h_min, n);
  if (est.richardson_used) floor *= 5.0 / 3.0;
  return std::max(est.spread, floor);
}

/// n-th mixed partial of data_fn at 0, optionally Richardson-extrapolated
/// from amplitudes h and h/2.
template <class DataFn>
DerivativeEstimate mixed_partial(DataFn&& data_fn, int n, double h, bool richardson = false,
                                 int jobs = 1) {
  if (n < 1) throw PreconditionError("mixed_partial: order must be >= 1");
  if (!(h > 0.0)) throw PreconditionError("mixed_partial: amplitude must be positive");
  const auto coarse = evaluate_stencil(data_fn, n, h, jobs);
  std::vector<double> fine;
  if (richardson) fine = evaluate_stencil(data_fn, n, 0.5 * h, jobs);
  return estimate_from_values(coarse, fine, n, h);
}

}  // namespace mfg
