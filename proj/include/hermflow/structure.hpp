#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <vector>

#include "errors.hpp"
#include "hermite_function.hpp"
#include "rng.hpp"

namespace hermflow {

inline constexpr double kRankTol = 1e-9;

/// E[grad f grad f^T] in coefficient space.
inline Eigen::MatrixXd gradient_gram(const HermiteFunction& f) {
  const auto g = gradient(f);
  const int q = f.q();
  Eigen::MatrixXd G(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j <= i; ++j) G(i, j) = G(j, i) = inner(g[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(j)]);
  return G;
}

/// Flips each column so its largest-magnitude entry is positive (first index on ties).
inline void canonicalize_signs(Eigen::MatrixXd& F) {
  for (Eigen::Index c = 0; c < F.cols(); ++c) {
    Eigen::Index idx = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < F.rows(); ++i)
      if (std::abs(F(i, c)) > best + 1e-15) {
        best = std::abs(F(i, c));
        idx = i;
      }
    if (F(idx, c) < 0) F.col(c) *= -1.0;
  }
}

struct IntrinsicDimension {
  int dim = 0;
  Eigen::MatrixXd support;      // q x dim, columns ordered by eigenvalue
  Eigen::VectorXd eigenvalues;  // all q, nonincreasing
};

inline IntrinsicDimension intrinsic_dimension(const HermiteFunction& f, double tol = kRankTol) {
  const Eigen::MatrixXd G = gradient_gram(f);
  const int q = f.q();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  // solver returns ascending order; reverse it
  Eigen::VectorXd ev = es.eigenvalues().reverse();
  Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
  if (q == 0 || ev(0) <= 0.0) throw Error(ErrorKind::ZeroFunction, "intrinsic_dimension of a constant function");
  int dim = 0;
  for (int i = 0; i < q; ++i)
    if (ev(i) > tol * ev(0)) ++dim;
  IntrinsicDimension out{dim, vecs.leftCols(dim), ev};
  canonicalize_signs(out.support);
  return out;
}

/// Orthogonal projector onto the span of an orthonormal frame.
inline Eigen::MatrixXd projector(const Eigen::MatrixXd& W) { return W * W.transpose(); }

/// Thin QR with positive diagonal in R, so the result depends continuously on A.
inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& A) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
  const Eigen::MatrixXd R = qr.matrixQR().topRows(A.cols()).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

/// (grad_M <f, A_M g>)_ij = <d_i f, A_M d_j g> for a square contraction M.
inline Eigen::MatrixXd correlation_gradient(const std::vector<HermiteFunction>& df, const std::vector<HermiteFunction>& dg,
                                            const Eigen::MatrixXd& M) {
  const auto q = static_cast<Eigen::Index>(df.size());
  const auto r = static_cast<Eigen::Index>(dg.size());
  Eigen::MatrixXd out(q, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const HermiteFunction a = shell_transform(dg[static_cast<std::size_t>(j)], M);
    for (Eigen::Index i = 0; i < q; ++i) out(i, j) = inner(df[static_cast<std::size_t>(i)], a);
  }
  return out;
}

/// ||f||^2 - sup over p-dimensional W of ||Pi_W f||^2, by multi-start
/// Riemannian ascent on the Grassmannian.
inline double minimal_energy(const HermiteFunction& f, int p, int restarts = 32, std::uint64_t seed = 7) {
  const int q = f.q();
  if (p < 0 || p >= q) throw Error(ErrorKind::OutOfDomain, "minimal_energy: need 0 <= p < q");
  const double total = f.norm2();
  if (p == 0) return total - std::pow(f.coeff(MultiIndex(q)), 2);
  const auto df = gradient(f);
  auto value = [&](const Eigen::MatrixXd& W) { return inner(shell_transform(f, projector(W)), f); };
  auto rgrad = [&](const Eigen::MatrixXd& W) {
    const Eigen::MatrixXd P = projector(W);
    const Eigen::MatrixXd Gbar = correlation_gradient(df, df, P);
    return Eigen::MatrixXd((Eigen::MatrixXd::Identity(q, q) - P) * 2.0 * Gbar * W);
  };

  double best = -1.0;
  PhiloxStream rng(seed, 0x6d696e45ULL);
  for (int rs = 0; rs < restarts; ++rs) {
    Eigen::MatrixXd A(q, p);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < p; ++j) A(i, j) = rng.normal();
    Eigen::MatrixXd W = orthonormalize(A);
    double val = value(W);
    double step = 1.0;
    for (int it = 0; it < 400; ++it) {
      const Eigen::MatrixXd g = rgrad(W);
      const double gn2 = g.squaredNorm();
      if (gn2 < 1e-26) break;
      bool moved = false;
      for (int bt = 0; bt < 40; ++bt) {
        Eigen::MatrixXd Wn = orthonormalize(W + step * g);
        const double vn = value(Wn);
        if (vn >= val + 1e-4 * step * gn2) {
          W = Wn;
          val = vn;
          moved = true;
          step *= 2.0;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    best = std::max(best, val);
  }
  return std::max(0.0, total - best);
}

/// Smallest positive degree outside span(W) among coefficients above tol*||f||,
/// in a basis adapted to [W, W_perp]; 0 when f lives inside span(W).
inline int relative_info_exponent(const HermiteFunction& f, const Eigen::MatrixXd& W, double tol = kRankTol) {
  if (f.is_zero()) throw Error(ErrorKind::ZeroFunction, "relative_info_exponent of zero");
  if (W.rows() != f.q()) throw Error(ErrorKind::DimensionMismatch, "relative_info_exponent: frame rows");
  detail::check_orthonormal_columns(W, 1e-10, ErrorKind::NotOrthonormal);
  const int p = static_cast<int>(W.cols());
  const int q = f.q();
  if (p >= q) return 0;
  const HermiteFunction g = coefficients_in_basis(f, complete_basis(W));
  const double cut = tol * f.norm();
  int best = 0;
  for (const auto& [b, a] : g.coeffs()) {
    if (std::abs(a) <= cut) continue;
    const int tail = b.partial_degree(p, q - 1);
    if (tail > 0 && (best == 0 || tail < best)) best = tail;
  }
  return best;
}

inline int information_exponent(const HermiteFunction& f, double tol = kRankTol) {
  return relative_info_exponent(f, Eigen::MatrixXd(f.q(), 0), tol);
}

struct CascadeStage {
  HermiteFunction f;
  Eigen::MatrixXd W;  // q x p support frame
  int s = 0;
  int p = 0;
  int b = 1;  // fine stages merged into this one (regrouped stages only)
};

struct CascadeReport {
  std::vector<CascadeStage> stages;
  std::vector<CascadeStage> regrouped;
  int s_star = 0;
  int intrinsic_dim = 0;
};

/// Merges consecutive fine stages whose exponent does not exceed the stage
/// that opened the group; those are learned in the same escape.
inline std::vector<CascadeStage> regroup(const std::vector<CascadeStage>& fine) {
  std::vector<CascadeStage> out;
  std::size_t k = 0;
  while (k < fine.size()) {
    const int lead = fine[k].s;
    std::size_t j = k;
    while (j + 1 < fine.size() && fine[j + 1].s <= lead) ++j;
    CascadeStage st = fine[j];
    st.s = lead;
    st.b = static_cast<int>(j - k + 1);
    out.push_back(std::move(st));
    k = j + 1;
  }
  return out;
}

inline CascadeReport leap_decomposition(const HermiteFunction& f, double tol = kRankTol) {
  if (f.is_zero()) throw Error(ErrorKind::ZeroFunction, "leap_decomposition of zero");
  const IntrinsicDimension full = intrinsic_dimension(f, tol);
  CascadeReport rep;
  rep.intrinsic_dim = full.dim;
  Eigen::MatrixXd W(f.q(), 0);
  int p = 0;
  while (p < full.dim) {
    const int s = relative_info_exponent(f, W, tol);
    if (s == 0) break;
    CascadeStage st;
    st.f = threshold(f, W, s);
    const IntrinsicDimension id = intrinsic_dimension(st.f, tol);
    if (id.dim <= p) throw Error(ErrorKind::OutOfDomain, "cascade failed to grow its support");
    st.W = id.support;
    st.s = s;
    st.p = id.dim;
    W = st.W;
    p = st.p;
    rep.stages.push_back(std::move(st));
  }
  rep.regrouped = regroup(rep.stages);
  for (const auto& st : rep.stages) rep.s_star = std::max(rep.s_star, st.s);
  return rep;
}

inline nlohmann::json stage_json(const CascadeStage& st, bool with_b) {
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index c = 0; c < st.W.cols(); ++c) {
    nlohmann::json col = nlohmann::json::array();
    for (Eigen::Index i = 0; i < st.W.rows(); ++i) col.push_back(st.W(i, c));
    cols.push_back(col);
  }
  nlohmann::json j{{"s", st.s},
                   {"p", st.p},
                   {"support_columns", cols},
                   {"coeff_summary", {{"terms", st.f.size()}, {"degree", st.f.degree()}, {"norm", st.f.norm()}}}};
  if (with_b) j["b"] = st.b;
  return j;
}

inline nlohmann::json to_json(const CascadeReport& rep) {
  nlohmann::json j;
  j["stages"] = nlohmann::json::array();
  for (const auto& st : rep.stages) j["stages"].push_back(stage_json(st, false));
  j["regrouped"] = nlohmann::json::array();
  for (const auto& st : rep.regrouped) j["regrouped"].push_back(stage_json(st, true));
  j["s_star"] = rep.s_star;
  j["intrinsic_dim"] = rep.intrinsic_dim;
  return j;
}

}  // namespace hermflow
