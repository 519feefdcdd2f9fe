#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfg/cost_model.hpp"
#include "mfg/errors.hpp"

using namespace mfg;

namespace {

CostFunction exp_series() { return CostFunction(std::vector<double>(9, 1.0)); }

// Central finite difference of order k with step h (binomial stencil).
double central_derivative(const CostFunction& f, int k, double h) {
  double sum = 0.0;
  double binom = 1.0;
  for (int j = 0; j <= k; ++j) {
    sum += ((j % 2) ? -1.0 : 1.0) * binom * f.evaluate(1.0 + (0.5 * k - j) * h);
    binom = binom * (k - j) / (j + 1);
  }
  return sum / std::pow(h, k);
}

}  // namespace

TEST(CostFunction, EvaluateAtExpansionPoint) {
  EXPECT_EQ(CostFunction({2.0, 1.0}).evaluate(1.0), 2.0);
}

TEST(CostFunction, EvaluatePolynomial) {
  EXPECT_DOUBLE_EQ(CostFunction({0.0, 1.0, 2.0}).evaluate(1.5), 0.75);
}

TEST(CostFunction, ExponentialSeries) {
  const auto f = exp_series();
  EXPECT_NEAR(f.evaluate(1.1), std::exp(0.1), 1e-9);
  EXPECT_NEAR(f.evaluate(0.9), std::exp(-0.1), 1e-9);
  for (int k = 0; k <= 8; ++k) EXPECT_EQ(f.derivative_at_one(k), 1.0);
}

TEST(CostFunction, DerivativeAtOne) {
  EXPECT_EQ(CostFunction({2.0, 1.0}).derivative_at_one(0), 2.0);
  EXPECT_EQ(CostFunction({0.0, 3.0, 5.0}).derivative_at_one(2), 5.0);
  EXPECT_THROW(CostFunction({0.0, 3.0, 5.0}).derivative_at_one(3), PreconditionError);
  EXPECT_THROW(CostFunction({0.0, 3.0}).derivative_at_one(-1), PreconditionError);
}

TEST(CostFunction, AdmissibilityGate) {
  EXPECT_THROW(CostFunction({1.0, 0.0}), PreconditionError);
  EXPECT_THROW(CostFunction({1.0, -0.5, 2.0}), PreconditionError);
  EXPECT_NO_THROW(CostFunction({1.0}));
  EXPECT_NO_THROW(CostFunction({1.0, 1e-6}));
  EXPECT_THROW(CostFunction(std::vector<double>{}), PreconditionError);
  EXPECT_THROW(CostFunction({1.0, NAN}), PreconditionError);
}

TEST(CostFunction, UncheckedPolynomialPath) {
  const auto f = CostFunction::polynomial({1.0, -1.0});
  EXPECT_FALSE(f.admissible());
  EXPECT_TRUE(CostFunction({1.0, 2.0}).admissible());
  EXPECT_THROW(CostFunction::polynomial({INFINITY}), PreconditionError);
}

TEST(CostFunction, Truncation) {
  const CostFunction f({0.5, 2.0, -1.0, 0.6});
  EXPECT_EQ(f.truncated(1), CostFunction({0.5, 2.0}));
  EXPECT_EQ(f.truncated(10), f);
  EXPECT_EQ(f.truncated(2).truncation_order(), 2);
  EXPECT_EQ(f.value_at_one(), 0.5);
}

TEST(CostFunction, FiniteDifferencesConvergeAtSecondOrder) {
  const CostFunction f({0.3, 1.5, -2.0, 0.7, 4.0, -3.0});
  for (int k = 1; k <= 3; ++k) {
    const double exact = f.derivative_at_one(k);
    const double e1 = std::abs(central_derivative(f, k, 0.08) - exact);
    const double e2 = std::abs(central_derivative(f, k, 0.04) - exact);
    ASSERT_GT(e1, 1e-9) << "k=" << k;
    EXPECT_NEAR(e1 / e2, 4.0, 0.4) << "k=" << k;
  }
}
