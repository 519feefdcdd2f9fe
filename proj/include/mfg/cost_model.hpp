#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mfg/errors.hpp"

namespace mfg {

/// Running cost F(m) stored as Taylor coefficients about m = 1:
///   F(m) = sum_k c_k (m - 1)^k / k!,   c_k = d^k F / dm^k at m = 1.
///
/// The checked constructor enforces admissibility (c_1 > 0 whenever the
/// series has a linear term). Forward models sometimes need costs outside
/// the admissible class, e.g. constant costs or trial models with an
/// unresolved slope; those go through `CostFunction::polynomial`.
class CostFunction {
 public:
  explicit CostFunction(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    validate_finite();
    if (coeffs_.size() >= 2 && !(coeffs_[1] > 0.0)) {
      throw PreconditionError("CostFunction: inadmissible cost, F'(1) = " +
                              std::to_string(coeffs_[1]) + " must be > 0");
    }
  }

  static CostFunction polynomial(std::vector<double> coeffs) {
    CostFunction f;
    f.coeffs_ = std::move(coeffs);
    f.validate_finite();
    return f;
  }

  int truncation_order() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
  std::span<const double> coeffs() const noexcept { return coeffs_; }
  bool admissible() const noexcept { return coeffs_.size() < 2 || coeffs_[1] > 0.0; }

  double evaluate(double m) const noexcept {
    // Horner on c_k / k!.
    const double z = m - 1.0;
    double acc = 0.0;
    for (int k = truncation_order(); k >= 0; --k) {
      acc = acc * z / (k + 1) + coeffs_[k];
    }
    return acc;
  }

  double derivative_at_one(int k) const {
    if (k < 0 || k > truncation_order()) {
      throw PreconditionError("derivative_at_one: order " + std::to_string(k) +
                              " outside 0.." + std::to_string(truncation_order()));
    }
    return coeffs_[k];
  }

  /// F(1) = c_0, or 0 for an empty series.
  double value_at_one() const noexcept { return coeffs_.empty() ? 0.0 : coeffs_[0]; }

  /// Copy with coefficients beyond `order` dropped.
  CostFunction truncated(int order) const {
    std::vector<double> c(coeffs_.begin(),
                          coeffs_.begin() + std::min<std::ptrdiff_t>(order + 1, coeffs_.size()));
    return polynomial(std::move(c));
  }

  friend bool operator==(const CostFunction&, const CostFunction&) = default;

 private:
  CostFunction() = default;

  void validate_finite() const {
    if (coeffs_.empty()) throw PreconditionError("CostFunction: empty coefficient list");
    for (double c : coeffs_) {
      if (!std::isfinite(c)) throw PreconditionError("CostFunction: non-finite coefficient");
    }
  }

  std::vector<double> coeffs_;
};

}  // namespace mfg
