#include <gtest/gtest.h>

#include <cmath>

#include "hermflow/hermite.hpp"

using namespace hermflow;

TEST(Hermite, LowOrderValues) {
  HermiteEval h(10);
  EXPECT_EQ(h.eval(0, 3.7), 1.0);
  EXPECT_EQ(h.eval(1, 2.5), 2.5);
  EXPECT_NEAR(h.eval(2, 1.0), 0.0, 1e-15);
  // h3 = (x^3 - 3x)/sqrt(6)
  EXPECT_NEAR(h.eval(3, 1.7), (std::pow(1.7, 3) - 3 * 1.7) / std::sqrt(6.0), 1e-14);
  EXPECT_THROW(h.eval(11, 0.0), Error);
  EXPECT_THROW(h.eval(-1, 0.0), Error);
}

TEST(Hermite, EvalAllMatchesEval) {
  HermiteEval h(25);
  const auto v = h.eval_all(-1.3);
  for (int k = 0; k <= 25; ++k) EXPECT_DOUBLE_EQ(v[static_cast<std::size_t>(k)], h.eval(k, -1.3));
}

TEST(Hermite, QuadratureOrthonormality) {
  const auto rule = gauss_hermite(40);
  HermiteEval h(12);
  for (int j = 0; j <= 12; ++j)
    for (int k = 0; k <= 12; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * h.eval(j, rule.nodes[i]) * h.eval(k, rule.nodes[i]);
      EXPECT_NEAR(s, j == k ? 1.0 : 0.0, 1e-10) << j << "," << k;
    }
}

TEST(Hermite, QuadratureMoments) {
  // E x^2 = 1, E x^4 = 3, E x^6 = 15
  const auto rule = gauss_hermite(5);
  double m2 = 0, m4 = 0, m6 = 0, w = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i];
    w += rule.weights[i];
    m2 += rule.weights[i] * x * x;
    m4 += rule.weights[i] * std::pow(x, 4);
    m6 += rule.weights[i] * std::pow(x, 6);
  }
  EXPECT_NEAR(w, 1.0, 1e-14);
  EXPECT_NEAR(m2, 1.0, 1e-13);
  EXPECT_NEAR(m4, 3.0, 1e-12);
  EXPECT_NEAR(m6, 15.0, 1e-11);
}

TEST(Hermite, ProductCoeffsSquareOfLinear) {
  const auto b = product_coeffs(1, 1);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_NEAR(b.at(0), std::sqrt(2.0), 1e-15);  // coefficient of h2
  EXPECT_NEAR(b.at(1), 1.0, 1e-15);             // coefficient of h0
}

TEST(Hermite, ProductWithConstant) {
  const auto b = product_coeffs(0, 7);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_NEAR(b.at(0), 1.0, 1e-15);
}

TEST(Hermite, ProductClosureUnderQuadrature) {
  const auto rule = gauss_hermite(30);
  HermiteEval h(16);
  for (int l = 0; l <= 8; ++l)
    for (int m = 0; m <= 8; ++m) {
      const auto b = product_coeffs(l, m);
      double err = 0;
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double x = rule.nodes[i];
        double r = h.eval(l, x) * h.eval(m, x);
        for (const auto& [p, c] : b) r -= c * h.eval(l + m - 2 * p, x);
        err += rule.weights[i] * r * r;
      }
      EXPECT_LE(err, 1e-18) << l << "," << m;
    }
}

TEST(Hermite, DerivativeShift) {
  EXPECT_EQ(derivative_shift(0), std::make_pair(0, 0.0));
  EXPECT_EQ(derivative_shift(1), std::make_pair(0, 1.0));
  EXPECT_EQ(derivative_shift(4), std::make_pair(3, 2.0));
  HermiteEval h(12);
  const double step = 1e-5;
  for (int k = 1; k <= 12; ++k) {
    const auto [km1, c] = derivative_shift(k);
    for (double x = -4; x <= 4; x += 0.25) {
      const double fd = (h.eval(k, x + step) - h.eval(k, x - step)) / (2 * step);
      EXPECT_NEAR(fd, c * h.eval(km1, x), 1e-6) << k << " at " << x;
    }
  }
}
