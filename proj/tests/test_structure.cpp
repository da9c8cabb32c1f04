#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hermflow/structure.hpp"
#include "oracles.hpp"

using namespace hermflow;

namespace {

HermiteFunction cascade_target() {
  HermiteFunction f(4);
  f.set({2, 0, 0, 0}, 1.0);
  f.set({0, 4, 0, 0}, 1.0);
  f.set({6, 0, 1, 0}, 1.0);
  f.set({3, 0, 5, 3}, 1.0);
  return f;
}

HermiteFunction recombination_target() {
  HermiteFunction f(2);
  const double r = 1 / std::sqrt(2.0);
  f.set({1, 0}, r);
  f.set({0, 1}, r);
  f.set({2, 0}, 0.5);
  f.set({0, 2}, 0.5);
  f.set({1, 1}, -1.0);
  return f;
}

Eigen::MatrixXd axes(int q, std::vector<int> idx) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(q, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) W(idx[k], static_cast<Eigen::Index>(k)) = 1.0;
  return W;
}

double subspace_distance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.cols() != B.cols()) return 1e9;
  return (projector(A) - projector(B)).norm();
}

}  // namespace

TEST(GradientGram, Examples) {
  const auto g1 = gradient_gram(HermiteFunction::basis({1, 0}));
  EXPECT_TRUE(g1.isApprox((Eigen::Matrix2d() << 1, 0, 0, 0).finished()));
  const auto g2 = gradient_gram(HermiteFunction::basis({2, 0}));
  EXPECT_NEAR(g2(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(g2.cwiseAbs().sum(), 2.0, 1e-14);
}

TEST(GradientGram, MatchesQuadratureAndIsEquivariant) {
  PhiloxStream rng(40);
  for (int t = 0; t < 10; ++t) {
    const auto f = oracle::random_function(rng, 3, 4, 6);
    const auto G = gradient_gram(f);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        EXPECT_NEAR(G(i, j), oracle::quad_inner(partial_derivative(f, i), partial_derivative(f, j)), 1e-10);
    const Eigen::MatrixXd U = oracle::random_orthogonal(rng, 3);
    // grad of f(U^T x) is U grad f
    EXPECT_LT((gradient_gram(rotate(f, U)) - U * G * U.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(IntrinsicDimension, Examples) {
  Eigen::Vector3d w(1, 2, -2);
  w /= 3.0;
  const auto a = intrinsic_dimension(ridge_coeffs(w, 3));
  EXPECT_EQ(a.dim, 1);
  EXPECT_LT(subspace_distance(a.support, w), 1e-12);

  HermiteFunction radial(2);
  radial.set({2, 0}, 1 / std::sqrt(2.0));
  radial.set({0, 2}, 1 / std::sqrt(2.0));
  EXPECT_EQ(intrinsic_dimension(radial).dim, 2);

  const auto h = intrinsic_dimension(HermiteFunction::basis({2, 0, 3}));
  EXPECT_EQ(h.dim, 2);
  EXPECT_LT(subspace_distance(h.support, axes(3, {0, 2})), 1e-12);

  EXPECT_THROW(intrinsic_dimension(HermiteFunction::constant(2, 1.0)), Error);
}

TEST(IntrinsicDimension, AfterAveragingAndThresholding) {
  PhiloxStream rng(41);
  for (int t = 0; t < 10; ++t) {
    // f lives on a random 2-dimensional subspace of R^4
    const Eigen::MatrixXd U = oracle::random_orthogonal(rng, 4);
    HermiteFunction g(4);
    const auto g2 = oracle::random_function(rng, 2, 5, 6);
    for (const auto& [b, a] : g2.coeffs())
      if (b.degree() > 0) g.set(MultiIndex{b[0], b[1], 0, 0}, a);
    if (intrinsic_dimension(g).dim < 2) continue;
    const auto f = rotate(g, U);
    const auto id = intrinsic_dimension(f);
    ASSERT_EQ(id.dim, 2);
    const Eigen::MatrixXd M = oracle::random_contraction(rng, 4, 4, 0.9);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M * id.support);
    EXPECT_EQ(intrinsic_dimension(average(f, M)).dim, static_cast<int>(lu.rank()));
    for (int s = 1; s <= 5; ++s) {
      const auto h = threshold(f, Eigen::MatrixXd(4, 0), s);
      if (h.is_zero() || gradient_gram(h).norm() < 1e-12) continue;
      const auto ih = intrinsic_dimension(h);
      EXPECT_LE(ih.dim, id.dim);
      // support of the thresholded function stays inside the original support
      EXPECT_LT(((Eigen::MatrixXd::Identity(4, 4) - projector(id.support)) * ih.support).norm(), 1e-8);
    }
  }
}

TEST(MinimalEnergy, Examples) {
  EXPECT_NEAR(minimal_energy(HermiteFunction::basis({2, 0}), 1), 0.0, 1e-10);
  EXPECT_NEAR(minimal_energy(HermiteFunction::basis({1, 1}), 1), 0.5, 1e-8);
  // grid oracle over the angle of v: ||A_{vv^T} f||^2 in closed form
  double best = 0;
  for (int k = 0; k <= 20000; ++k) {
    const double th = std::numbers::pi * k / 20000;
    const double c = std::cos(th), s = std::sin(th);
    // projection of x1 x2 onto functions of v.x keeps c s h2(v.x) sqrt(2)
    best = std::max(best, 2 * c * c * s * s);
  }
  EXPECT_NEAR(minimal_energy(HermiteFunction::basis({1, 1}), 1), 1 - best, 1e-8);
}

TEST(MinimalEnergy, RotationInvariant) {
  PhiloxStream rng(42);
  const auto f = oracle::random_function(rng, 3, 4, 6);
  const Eigen::MatrixXd U = oracle::random_orthogonal(rng, 3);
  for (int p = 1; p <= 2; ++p) EXPECT_NEAR(minimal_energy(f, p), minimal_energy(rotate(f, U), p), 1e-7);
}

TEST(RelativeInfoExponent, Examples) {
  const auto f = cascade_target();
  EXPECT_EQ(relative_info_exponent(f, Eigen::MatrixXd::Identity(4, 4)), 0);
  EXPECT_EQ(relative_info_exponent(f, Eigen::MatrixXd(4, 0)), 2);
  EXPECT_EQ(relative_info_exponent(f, axes(4, {0})), 1);
  EXPECT_EQ(relative_info_exponent(f, axes(4, {0, 2})), 3);
  EXPECT_EQ(relative_info_exponent(f, axes(4, {0, 2, 3})), 4);
  EXPECT_THROW(relative_info_exponent(HermiteFunction(4), axes(4, {0})), Error);
}

TEST(LeapDecomposition, CascadeExample) {
  const auto rep = leap_decomposition(cascade_target());
  ASSERT_EQ(rep.stages.size(), 4u);
  const std::vector<int> s{2, 1, 3, 4}, p{1, 2, 3, 4};
  const std::vector<std::vector<int>> supp{{0}, {0, 2}, {0, 2, 3}, {0, 1, 2, 3}};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(rep.stages[k].s, s[k]);
    EXPECT_EQ(rep.stages[k].p, p[k]);
    EXPECT_LT(subspace_distance(rep.stages[k].W, axes(4, supp[k])), 1e-10);
  }
  ASSERT_EQ(rep.regrouped.size(), 3u);
  const std::vector<int> st{2, 3, 4}, b{2, 1, 1}, pt{2, 3, 4};
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(rep.regrouped[k].s, st[k]);
    EXPECT_EQ(rep.regrouped[k].b, b[k]);
    EXPECT_EQ(rep.regrouped[k].p, pt[k]);
  }
  EXPECT_EQ(rep.s_star, 4);
  HermiteFunction f2(4);
  f2.set({2, 0, 0, 0}, 1.0);
  f2.set({6, 0, 1, 0}, 1.0);
  EXPECT_LT(distance(rep.regrouped[0].f, f2), 1e-12);
}

TEST(LeapDecomposition, TwoStageNoMerging) {
  HermiteFunction f(2);
  f.set({2, 0}, 1.0);
  f.set({0, 3}, 1.0);
  const auto rep = leap_decomposition(f);
  ASSERT_EQ(rep.stages.size(), 2u);
  EXPECT_EQ(rep.stages[0].s, 2);
  EXPECT_EQ(rep.stages[1].s, 3);
  EXPECT_LT(subspace_distance(rep.stages[0].W, axes(2, {0})), 1e-12);
  EXPECT_EQ(rep.regrouped.size(), 2u);
}

TEST(LeapDecomposition, BasisRecombination) {
  const auto rep = leap_decomposition(recombination_target());
  ASSERT_EQ(rep.stages.size(), 2u);
  EXPECT_EQ(rep.stages[0].s, 1);
  EXPECT_EQ(rep.stages[1].s, 2);
  const Eigen::Vector2d v(1 / std::sqrt(2.0), 1 / std::sqrt(2.0));
  EXPECT_LT((rep.stages[0].W.col(0) - v).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LeapDecomposition, DegenerateInputStaysInSupport) {
  // f uses only x1 and x3 of R^3
  HermiteFunction f(3);
  f.set({2, 0, 0}, 1.0);
  f.set({1, 0, 2}, 1.0);
  const auto rep = leap_decomposition(f);
  EXPECT_EQ(rep.intrinsic_dim, 2);
  EXPECT_EQ(rep.stages.back().p, 2);
  EXPECT_LT(subspace_distance(rep.stages.back().W, axes(3, {0, 2})), 1e-10);
}

TEST(LeapDecomposition, RandomTargetsInvariants) {
  PhiloxStream rng(43);
  int checked = 0;
  while (checked < 50) {
    const int q = 1 + static_cast<int>(rng.below(4));
    auto f = oracle::random_function(rng, q, 8, 1 + static_cast<int>(rng.below(5)));
    f.set(MultiIndex(q), 0.0);
    if (f.is_zero() || gradient_gram(f).norm() == 0) continue;
    const auto rep = leap_decomposition(f);
    ++checked;
    int prev_p = 0, prev_s = 0, smax = 0;
    Eigen::MatrixXd prevW(q, 0);
    for (const auto& st : rep.stages) {
      EXPECT_GT(st.p, prev_p);
      EXPECT_LT(((Eigen::MatrixXd::Identity(q, q) - projector(st.W)) * prevW).norm(), 1e-8);
      prev_p = st.p;
      prevW = st.W;
      smax = std::max(smax, st.s);
    }
    EXPECT_EQ(prev_p, rep.intrinsic_dim);
    for (const auto& st : rep.regrouped) {
      EXPECT_GT(st.s, prev_s);
      prev_s = st.s;
    }
    EXPECT_EQ(rep.s_star, smax);
    EXPECT_EQ(rep.s_star, prev_s);
  }
}

TEST(LeapDecomposition, JsonShape) {
  const auto j = to_json(leap_decomposition(cascade_target()));
  EXPECT_EQ(j["stages"].size(), 4u);
  EXPECT_EQ(j["regrouped"][0]["b"], 2);
  EXPECT_EQ(j["s_star"], 4);
  EXPECT_EQ(j["stages"][1]["support_columns"].size(), 2u);
}
