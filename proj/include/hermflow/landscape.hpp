#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "hermite_function.hpp"
#include "structure.hpp"

namespace hermflow {

using Frame = Eigen::MatrixXd;

inline void check_frame(const Frame& W, const char* what) {
  const double r = (W.transpose() * W - Eigen::MatrixXd::Identity(W.cols(), W.cols())).cwiseAbs().maxCoeff();
  if (!(r <= 1e-10)) throw Error(ErrorKind::NotOrthonormal, std::string(what) + ": residual " + format_double(r));
}

/// Canonical frame [e_1, ..., e_q] in R^d.
inline Frame canonical_frame(int d, int q) { return Eigen::MatrixXd::Identity(d, q); }

struct SummaryStatistics {
  Eigen::MatrixXd M;       // q x r
  Eigen::MatrixXd V;       // q x q
  Eigen::VectorXd lambda;  // q, nonincreasing
  Eigen::MatrixXd U;       // r x q
  Eigen::MatrixXd G;       // q x q
  bool unstable = false;   // nearly repeated singular values; V is not well defined

  static SummaryStatistics from_correlation(const Eigen::MatrixXd& M) {
    if (M.rows() > M.cols()) throw Error(ErrorKind::DimensionMismatch, "summary needs q <= r");
    SummaryStatistics S;
    S.M = M;
    const ThinSVD svd = thin_svd(M);
    S.V = svd.V;
    S.lambda = svd.s;
    S.U = svd.U;
    S.G = M * M.transpose();
    for (Eigen::Index i = 0; i + 1 < S.lambda.size(); ++i)
      if (S.lambda(i) - S.lambda(i + 1) < 1e-8) S.unstable = true;
    return S;
  }
};

inline SummaryStatistics summary(const Frame& Wstar, const Frame& W) {
  if (Wstar.rows() != W.rows()) throw Error(ErrorKind::DimensionMismatch, "summary: frames in different ambient dimensions");
  if (Wstar.cols() > W.cols()) throw Error(ErrorKind::DimensionMismatch, "summary: need q <= r");
  return SummaryStatistics::from_correlation(Wstar.transpose() * W);
}

/// Weighted sum of ridges sum_j Z_j h_s(w_j . x).
struct RidgeSum {
  std::vector<double> Z;
  Eigen::MatrixXd dirs;  // q x N, unit columns
  int s = 1;

  int q() const { return static_cast<int>(dirs.rows()); }

  /// sum_jj' Z_j Z_j' (w_j^T M w_j')^s = <g, A_M g>
  double correlation(const Eigen::MatrixXd& M) const {
    const Eigen::MatrixXd C = dirs.transpose() * M * dirs;
    double v = 0.0;
    for (Eigen::Index j = 0; j < C.rows(); ++j)
      for (Eigen::Index k = 0; k < C.cols(); ++k) v += Z[static_cast<std::size_t>(j)] * Z[static_cast<std::size_t>(k)] * std::pow(C(j, k), s);
    return v;
  }
  Eigen::MatrixXd correlation_grad(const Eigen::MatrixXd& M) const {
    const Eigen::MatrixXd C = dirs.transpose() * M * dirs;
    Eigen::MatrixXd K(C.rows(), C.cols());
    for (Eigen::Index j = 0; j < C.rows(); ++j)
      for (Eigen::Index k = 0; k < C.cols(); ++k)
        K(j, k) = s * Z[static_cast<std::size_t>(j)] * Z[static_cast<std::size_t>(k)] * std::pow(C(j, k), s - 1);
    return dirs * K * dirs.transpose();
  }
  double norm2() const { return correlation(Eigen::MatrixXd::Identity(q(), q())); }
};

/// Link function of a multi-index model: Hermite coefficients, a ridge sum
/// evaluated in closed form, or coefficients plus a weighted ridge sum on a
/// disjoint degree shell. In the mixed case the correlation is
///   <f, A f> + weight * <g, A g>
/// so the represented function is f + sqrt(weight) g.
class Target {
 public:
  enum class Kind { Coefficient, Ridge, Mixed };

  static Target coefficient(HermiteFunction f) {
    Target t;
    t.kind_ = Kind::Coefficient;
    t.f_ = std::move(f);
    t.q_ = t.f_.q();
    t.df_ = gradient(t.f_);
    return t;
  }
  static Target ridge(RidgeSum g) {
    check_ridge(g);
    Target t;
    t.kind_ = Kind::Ridge;
    t.q_ = g.q();
    t.g_ = std::move(g);
    return t;
  }
  static Target mixed(HermiteFunction f, RidgeSum g, double weight) {
    check_ridge(g);
    if (f.q() != g.q()) throw Error(ErrorKind::DimensionMismatch, "mixed target: parts in different dimensions");
    if (!f.shell(g.s).is_zero())
      throw Error(ErrorKind::UnsupportedTargetKind, "mixed target: coefficient part overlaps the ridge degree");
    Target t = coefficient(std::move(f));
    t.kind_ = Kind::Mixed;
    t.g_ = std::move(g);
    t.weight_ = weight;
    return t;
  }

  Kind kind() const { return kind_; }
  int q() const { return q_; }
  const HermiteFunction& coeff_part() const { return f_; }
  const std::optional<RidgeSum>& ridge_part() const { return g_; }
  double weight() const { return weight_; }
  bool has_coefficients() const { return kind_ != Kind::Ridge; }

  double norm2() const {
    double v = has_coefficients() ? f_.norm2() : 0.0;
    if (g_) v += weight_ * g_->norm2();
    return v;
  }

  /// <f, A_M f> for a square contraction M.
  double correlation(const Eigen::MatrixXd& M) const {
    double v = has_coefficients() ? inner(f_, shell_transform(f_, M)) : 0.0;
    if (g_) v += weight_ * g_->correlation(M);
    return v;
  }
  /// Matrix of d/dM_ij <f, A_M f> = <d_i f, A_M d_j f>.
  Eigen::MatrixXd correlation_grad(const Eigen::MatrixXd& M) const {
    Eigen::MatrixXd out = has_coefficients() ? correlation_gradient(df_, df_, M) : Eigen::MatrixXd::Zero(q_, q_);
    if (g_) out += weight_ * g_->correlation_grad(M);
    return out;
  }

  /// Full coefficient expansion; only possible while the ridge degree is within the cap.
  HermiteFunction materialize() const {
    HermiteFunction out = has_coefficients() ? f_ : HermiteFunction(q_);
    if (g_) {
      if (g_->s > out.degree_cap())
        throw Error(ErrorKind::UnsupportedTargetKind, "ridge degree " + std::to_string(g_->s) + " above coefficient cap");
      const double a = std::sqrt(weight_);
      for (Eigen::Index j = 0; j < g_->dirs.cols(); ++j)
        out += ridge_coeffs(g_->dirs.col(j), g_->s) * (a * g_->Z[static_cast<std::size_t>(j)]);
    }
    return out;
  }

 private:
  static void check_ridge(const RidgeSum& g) {
    if (g.s < 1) throw Error(ErrorKind::OutOfDomain, "ridge degree must be >= 1");
    if (static_cast<std::size_t>(g.dirs.cols()) != g.Z.size())
      throw Error(ErrorKind::DimensionMismatch, "ridge weights and directions differ in count");
    for (Eigen::Index j = 0; j < g.dirs.cols(); ++j)
      if (std::abs(g.dirs.col(j).norm() - 1.0) > 1e-12) throw Error(ErrorKind::NotUnit, "ridge direction not unit");
  }

  Kind kind_ = Kind::Coefficient;
  int q_ = 0;
  HermiteFunction f_;
  std::vector<HermiteFunction> df_;
  std::optional<RidgeSum> g_;
  double weight_ = 1.0;
};

/// Correlation <A_G f, f> with G = M M^T; the coefficient part is evaluated in
/// the singular basis as sum_b alpha_b(V)^2 lambda^(2b).
inline double grassmann_loss(const Target& f, const SummaryStatistics& S) {
  double v = 0.0;
  if (f.has_coefficients()) {
    const HermiteFunction a = coefficients_in_basis(f.coeff_part(), S.V);
    const Eigen::VectorXd l2 = S.lambda.cwiseProduct(S.lambda);
    for (const auto& [b, c] : a.coeffs()) {
      double w = c * c;
      for (int i = 0; i < b.q(); ++i)
        if (b[i]) w *= std::pow(l2(i), b[i]);
      v += w;
    }
  }
  if (f.ridge_part()) v += f.weight() * f.ridge_part()->correlation(S.G);
  return v;
}

inline Eigen::MatrixXd grassmann_grad_G(const Target& f, const SummaryStatistics& S) {
  const Eigen::MatrixXd g = f.correlation_grad(S.G);
  return 0.5 * (g + g.transpose());
}

/// (I - W W^T) 2 W* grad_G M.
inline Eigen::MatrixXd grassmann_flow_field(const Target& f, const Frame& Wstar, const Frame& W) {
  if (Wstar.rows() != W.rows() || Wstar.cols() != f.q())
    throw Error(ErrorKind::DimensionMismatch, "grassmann_flow_field: frame shapes");
  const Eigen::MatrixXd M = Wstar.transpose() * W;
  const Eigen::MatrixXd Gbar = f.correlation_grad(M * M.transpose());
  const Eigen::MatrixXd F = 2.0 * Wstar * (0.5 * (Gbar + Gbar.transpose())) * M;
  return F - W * (W.transpose() * F);
}

/// Correlation <f, A_M f> of the planted model.
inline double planted_loss(const Target& f, const SummaryStatistics& S) {
  if (S.M.rows() != S.M.cols()) throw Error(ErrorKind::DimensionMismatch, "planted model needs q = r");
  return f.correlation(S.M);
}

/// F - W F^T W with F = W* grad_M.
inline Eigen::MatrixXd stiefel_flow_field(const Target& f, const Frame& Wstar, const Frame& W) {
  if (Wstar.rows() != W.rows() || Wstar.cols() != W.cols() || W.cols() != f.q())
    throw Error(ErrorKind::DimensionMismatch, "stiefel_flow_field: frame shapes");
  const Eigen::MatrixXd M = Wstar.transpose() * W;
  const Eigen::MatrixXd F = Wstar * f.correlation_grad(M);
  return F - W * (F.transpose() * W);
}

struct CriticalPattern {
  int tau = 0;        // singular values at 1
  int tau_prime = 0;  // singular values strictly inside (0, 1)
  Eigen::MatrixXd sp;
  Eigen::MatrixXd ess;
  bool is_vertex = false;
  bool unstable = false;
};

inline CriticalPattern classify_critical(const SummaryStatistics& S, double tol) {
  CriticalPattern c;
  std::vector<Eigen::Index> sp, ess;
  for (Eigen::Index i = 0; i < S.lambda.size(); ++i) {
    if (S.lambda(i) >= 1.0 - tol)
      sp.push_back(i);
    else if (S.lambda(i) > tol)
      ess.push_back(i);
  }
  c.tau = static_cast<int>(sp.size());
  c.tau_prime = static_cast<int>(ess.size());
  c.sp.resize(S.V.rows(), c.tau);
  c.ess.resize(S.V.rows(), c.tau_prime);
  for (std::size_t k = 0; k < sp.size(); ++k) c.sp.col(static_cast<Eigen::Index>(k)) = S.V.col(sp[k]);
  for (std::size_t k = 0; k < ess.size(); ++k) c.ess.col(static_cast<Eigen::Index>(k)) = S.V.col(ess[k]);
  c.is_vertex = c.tau_prime == 0;
  c.unstable = S.unstable;
  return c;
}

/// Directions at the N-th roots of unity in the plane.
inline Eigen::MatrixXd roots_of_unity(int N) {
  Eigen::MatrixXd W(2, N);
  for (int j = 0; j < N; ++j) {
    const double a = 2.0 * std::numbers::pi * j / N;
    W(0, j) = std::cos(a);
    W(1, j) = std::sin(a);
  }
  return W;
}

/// sum_jj' Z_j Z_j' cos(theta + 2 pi (j - j')/N)^s, the ridge correlation at a
/// rotation by theta. With reflection=true the frame is the reflection
/// across angle theta/2 instead.
inline double autocorrelation_phi(const std::vector<double>& Z, int s, double theta, bool reflection = false) {
  const int N = static_cast<int>(Z.size());
  if (reflection && s % 2) throw Error(ErrorKind::OddDegreeWithReflection, "reflection branch needs even s");
  double v = 0.0;
  for (int j = 0; j < N; ++j)
    for (int k = 0; k < N; ++k) {
      const double a = reflection ? theta - 2.0 * std::numbers::pi * (j + k) / N : theta + 2.0 * std::numbers::pi * (j - k) / N;
      v += Z[static_cast<std::size_t>(j)] * Z[static_cast<std::size_t>(k)] * std::pow(std::cos(a), s);
    }
  return v;
}

/// Discrete cyclic autocorrelation sum_l Z_l Z_{l+k}.
inline std::vector<double> cyclic_autocorrelation(const std::vector<double>& Z) {
  const std::size_t N = Z.size();
  std::vector<double> out(N, 0.0);
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t l = 0; l < N; ++l) out[k] += Z[l] * Z[(l + k) % N];
  return out;
}

/// Even sequence whose cyclic autocorrelation is negative at every shift
/// except 0 and N/2. The power spectrum is a flat level minus a small
/// multiple of the first N/2 - 1 cosine modes; the sequence is the inverse
/// transform of its square root.
inline std::vector<double> negative_autocorrelation_sequence(int N, double eta = -1.0) {
  if (N < 4 || N % 2) throw Error(ErrorKind::InfeasibleN, "N must be even and >= 4");
  const int half = N / 2;
  if (eta <= 0.0) eta = 1.0 / (4.0 * N);
  const double delta = std::sqrt((2.0 * eta - eta * eta) / (half - 1));
  std::vector<double> P(static_cast<std::size_t>(N));
  for (int w = 0; w < N; ++w) {
    double p = 1.0 - eta;
    for (int k = 1; k < half; ++k) p -= delta * std::sqrt(2.0) * std::cos(2.0 * std::numbers::pi * w * k / N);
    if (!(p > 0.0)) throw Error(ErrorKind::InfeasibleN, "spectrum not positive; lower eta");
    P[static_cast<std::size_t>(w)] = p;
  }
  std::vector<double> Z(static_cast<std::size_t>(N));
  for (int l = 0; l < N; ++l) {
    double z = 0.0;
    for (int w = 0; w < N; ++w) z += std::sqrt(P[static_cast<std::size_t>(w)]) * std::cos(2.0 * std::numbers::pi * w * l / N);
    Z[static_cast<std::size_t>(l)] = z / N;
  }
  return Z;
}

/// Largest eps with arccos(1 - 2 eps N sqrt(2 log N)(1 + log(c/eps))) <= pi/(10N),
/// c = 1 + 2||f||^2 + s||g||^2, found by bisection in log scale.
inline double failure_epsilon(int N, int s, double f_norm2, double g_norm2) {
  const double c = 1.0 + 2.0 * f_norm2 + s * g_norm2;
  const double k = 2.0 * N * std::sqrt(2.0 * std::log(static_cast<double>(N)));
  auto ok = [&](double eps) {
    const double arg = 1.0 - k * eps * (1.0 + std::log(c / eps));
    return arg >= -1.0 && std::acos(std::min(1.0, arg)) <= std::numbers::pi / (10.0 * N);
  };
  double lo = std::log(1e-300), hi = std::log(c);
  if (!ok(std::exp(lo))) throw Error(ErrorKind::OutOfDomain, "failure_epsilon: no feasible eps");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (ok(std::exp(mid)) ? lo : hi) = mid;
  }
  return std::exp(lo);
}

/// Smallest even s with cos(pi/(10N))^s <= 1/(10 N^2).
inline int failure_degree(int N) {
  const double need = std::log(10.0 * N * N) / -std::log(std::cos(std::numbers::pi / (10.0 * N)));
  int s = static_cast<int>(std::ceil(need));
  return s % 2 ? s + 1 : s;
}

}  // namespace hermflow
