#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "hermite.hpp"
#include "multi_index.hpp"
#include "numfmt.hpp"

namespace hermflow {

using LinearMap = Eigen::MatrixXd;

inline constexpr double kDropThreshold = 1e-14;
inline constexpr int kDefaultDegreeCap = 40;

/// Band-limited element of L2(gamma_q) stored as sparse Hermite coefficients.
class HermiteFunction {
 public:
  using Map = std::map<MultiIndex, double>;

  HermiteFunction() = default;
  explicit HermiteFunction(int q, int degree_cap = kDefaultDegreeCap) : q_(q), cap_(degree_cap) {
    if (q < 0) throw Error(ErrorKind::DimensionMismatch, "negative dimension");
  }

  static HermiteFunction constant(int q, double c) {
    HermiteFunction f(q);
    f.set(MultiIndex(q), c);
    return f;
  }
  static HermiteFunction basis(const MultiIndex& b, double a = 1.0) {
    HermiteFunction f(b.q());
    f.set(b, a);
    return f;
  }

  int q() const { return q_; }
  int degree_cap() const { return cap_; }
  const Map& coeffs() const { return c_; }
  std::size_t size() const { return c_.size(); }
  bool is_zero() const { return c_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& [b, a] : c_) d = std::max(d, b.degree());
    return d;
  }

  double coeff(const MultiIndex& b) const {
    auto it = c_.find(b);
    return it == c_.end() ? 0.0 : it->second;
  }

  /// Stores a, or erases the entry when |a| is below the drop threshold.
  void set(const MultiIndex& b, double a) {
    if (b.q() != q_) throw Error(ErrorKind::DimensionMismatch, "index " + b.str() + " in q=" + std::to_string(q_));
    if (b.degree() > cap_)
      throw Error(ErrorKind::DegreeCapExceeded, "degree " + std::to_string(b.degree()) + " > cap " + std::to_string(cap_));
    if (std::abs(a) <= kDropThreshold)
      c_.erase(b);
    else
      c_[b] = a;
  }
  void add(const MultiIndex& b, double a) { set(b, coeff(b) + a); }

  double norm2() const {
    double s = 0.0;
    for (const auto& [b, a] : c_) s += a * a;
    return s;
  }
  double norm() const { return std::sqrt(norm2()); }

  /// Part of f with total degree exactly k.
  HermiteFunction shell(int k) const {
    HermiteFunction g(q_, cap_);
    for (const auto& [b, a] : c_)
      if (b.degree() == k) g.c_.emplace(b, a);
    return g;
  }

  HermiteFunction& operator+=(const HermiteFunction& g) {
    if (g.q_ != q_) throw Error(ErrorKind::DimensionMismatch, "sum of functions in different dimensions");
    for (const auto& [b, a] : g.c_) add(b, a);
    return *this;
  }
  HermiteFunction& operator-=(const HermiteFunction& g) { return *this += g * -1.0; }
  HermiteFunction& operator*=(double s) {
    Map out;
    for (const auto& [b, a] : c_)
      if (std::abs(a * s) > kDropThreshold) out.emplace(b, a * s);
    c_ = std::move(out);
    return *this;
  }
  friend HermiteFunction operator+(HermiteFunction f, const HermiteFunction& g) { return f += g; }
  friend HermiteFunction operator-(HermiteFunction f, const HermiteFunction& g) { return f -= g; }
  friend HermiteFunction operator*(HermiteFunction f, double s) { return f *= s; }
  friend HermiteFunction operator*(double s, HermiteFunction f) { return f *= s; }

 private:
  int q_ = 0;
  int cap_ = kDefaultDegreeCap;
  Map c_;
};

inline double inner(const HermiteFunction& f, const HermiteFunction& g) {
  if (f.q() != g.q()) throw Error(ErrorKind::DimensionMismatch, "inner: q differs");
  const auto& small = f.size() <= g.size() ? f : g;
  const auto& large = f.size() <= g.size() ? g : f;
  double s = 0.0;
  for (const auto& [b, a] : small.coeffs()) s += a * large.coeff(b);
  return s;
}

inline double distance(const HermiteFunction& f, const HermiteFunction& g) { return (f - g).norm(); }

namespace detail {

inline double op_norm(const LinearMap& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

inline void check_orthonormal_columns(const LinearMap& W, double tol, ErrorKind kind) {
  if (W.cols() == 0) return;
  const double r = (W.transpose() * W - Eigen::MatrixXd::Identity(W.cols(), W.cols())).cwiseAbs().maxCoeff();
  if (r > tol) throw Error(kind, "columns not orthonormal (residual " + format_double(r) + ")");
}

}  // namespace detail

/// Degree-preserving part of z -> f(L^T z), with L of shape q_out x q_in and
/// f living in dimension q_in. Coefficient of H_b collects the lattice points
/// T of the transport polytope with row sums g (input) and column sums b:
///   sqrt(b! g!) * sum_T prod_ij L_ij^T_ji / T_ji!
/// which is the polytope formula with weight sqrt(Q(T)). Lattice points are
/// built column of T at a time and merged on their partial margins.
inline HermiteFunction shell_transform(const HermiteFunction& f, const LinearMap& L) {
  const int q_out = static_cast<int>(L.rows());
  const int q_in = static_cast<int>(L.cols());
  if (f.q() != q_in)
    throw Error(ErrorKind::DimensionMismatch,
                "map has " + std::to_string(q_in) + " input coordinates, function has q=" + std::to_string(f.q()));
  HermiteFunction out(q_out, f.degree_cap());
  if (f.is_zero()) return out;
  const int maxdeg = f.degree();

  std::vector<double> inv_fact(static_cast<std::size_t>(maxdeg) + 1);
  for (int k = 0; k <= maxdeg; ++k) inv_fact[static_cast<std::size_t>(k)] = std::exp(-log_factorial(k));

  // expansion of (l_j . z)^k / k! over output monomials, cached per (j, k)
  std::map<std::pair<int, int>, std::vector<std::pair<MultiIndex, double>>> powers;
  auto column_power = [&](int j, int k) -> const std::vector<std::pair<MultiIndex, double>>& {
    auto key = std::make_pair(j, k);
    auto it = powers.find(key);
    if (it != powers.end()) return it->second;
    std::vector<std::pair<MultiIndex, double>> terms;
    for (const MultiIndex& c : enumerate_degree(q_out, k)) {
      double w = 1.0;
      for (int i = 0; i < q_out && w != 0.0; ++i) {
        const int e = c[i];
        if (e == 0) continue;
        const double l = L(i, j);
        w = (l == 0.0) ? 0.0 : w * std::pow(l, e) * inv_fact[static_cast<std::size_t>(e)];
      }
      if (w != 0.0) terms.emplace_back(c, w);
    }
    return powers.emplace(key, std::move(terms)).first->second;
  };

  std::map<MultiIndex, double> acc;
  for (const auto& [gamma, alpha] : f.coeffs()) {
    std::map<MultiIndex, double> partial{{MultiIndex(q_out), 1.0}};
    for (int j = 0; j < q_in && !partial.empty(); ++j) {
      if (gamma[j] == 0) continue;
      const auto& terms = column_power(j, gamma[j]);
      std::map<MultiIndex, double> next;
      for (const auto& [b, w] : partial)
        for (const auto& [c, v] : terms) {
          MultiIndex nb = b;
          for (int i = 0; i < q_out; ++i) nb[i] += c[i];
          next[nb] += w * v;
        }
      partial = std::move(next);
    }
    double lg = 0.0;
    for (int j = 0; j < q_in; ++j) lg += log_factorial(gamma[j]);
    for (const auto& [b, w] : partial) {
      double lb = 0.0;
      for (int i = 0; i < q_out; ++i) lb += log_factorial(b[i]);
      acc[b] += alpha * w * std::exp(0.5 * (lb + lg));
    }
  }
  for (const auto& [b, a] : acc) out.set(b, a);
  return out;
}

/// P_U f = f(U^T x) for orthogonal U.
inline HermiteFunction rotate(const HermiteFunction& f, const LinearMap& U) {
  if (U.rows() != U.cols() || U.rows() != f.q())
    throw Error(ErrorKind::DimensionMismatch, "rotate: U must be q x q");
  detail::check_orthonormal_columns(U, 1e-10, ErrorKind::NotOrthogonal);
  return shell_transform(f, U);
}

/// Thin SVD M = V diag(s) U^T with the sign convention used everywhere:
/// the largest-magnitude entry of each left singular vector is positive.
struct ThinSVD {
  Eigen::MatrixXd V;  // q x k
  Eigen::VectorXd s;  // k, nonincreasing
  Eigen::MatrixXd U;  // r x k
};

inline ThinSVD thin_svd(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ThinSVD out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (int c = 0; c < out.V.cols(); ++c) {
    Eigen::Index idx = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < out.V.rows(); ++i)
      if (std::abs(out.V(i, c)) > best + 1e-15) {  // first index wins ties
        best = std::abs(out.V(i, c));
        idx = i;
      }
    if (out.V(idx, c) < 0) {
      out.V.col(c) *= -1.0;
      out.U.col(c) *= -1.0;
    }
  }
  return out;
}

/// Multiplies the coefficient of H_b by prod_i lambda_i^b_i.
inline HermiteFunction damp(const HermiteFunction& f, const Eigen::VectorXd& lambda) {
  if (lambda.size() != f.q()) throw Error(ErrorKind::DimensionMismatch, "damp: lambda length");
  HermiteFunction out(f.q(), f.degree_cap());
  for (const auto& [b, a] : f.coeffs()) {
    double w = a;
    for (int i = 0; i < f.q(); ++i)
      if (b[i] > 0) w *= std::pow(lambda(i), b[i]);
    out.set(b, w);
  }
  return out;
}

/// A_M f for a contraction M (q x r) acting on f in dimension r. Computed as
/// projection onto the right singular frame, diagonal damping, then the
/// left singular frame.
inline HermiteFunction average(const HermiteFunction& f, const LinearMap& M) {
  if (M.cols() != f.q())
    throw Error(ErrorKind::DimensionMismatch, "average: M has " + std::to_string(M.cols()) + " columns, f has q=" + std::to_string(f.q()));
  if (M.size() == 0) {
    HermiteFunction out(static_cast<int>(M.rows()), f.degree_cap());
    out.set(MultiIndex(static_cast<int>(M.rows())), f.coeff(MultiIndex(f.q())));
    return out;
  }
  const ThinSVD svd = thin_svd(M);
  if (svd.s(0) > 1.0 + 1e-12) throw Error(ErrorKind::NormTooLarge, "average: ||M|| = " + format_double(svd.s(0)));
  HermiteFunction g = shell_transform(f, svd.U.transpose());
  g = damp(g, svd.s);
  return shell_transform(g, svd.V);
}

/// Completes an orthonormal q x p frame W to an orthogonal q x q matrix [W, W_perp].
inline Eigen::MatrixXd complete_basis(const Eigen::MatrixXd& W) {
  const auto q = W.rows();
  const auto p = W.cols();
  if (p == 0) return Eigen::MatrixXd::Identity(q, q);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(W);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(q, q);
  Q.leftCols(p) = W;
  return Q;
}

/// Coefficients of f in the rotated basis H_b(O^T x), O orthogonal.
inline HermiteFunction coefficients_in_basis(const HermiteFunction& f, const Eigen::MatrixXd& O) {
  return rotate(f, O.transpose());
}

/// Keeps indices whose degree outside span(W) is at most s, in a basis adapted to [W, W_perp].
inline HermiteFunction threshold(const HermiteFunction& f, const Eigen::MatrixXd& W, int s) {
  if (W.rows() != f.q()) throw Error(ErrorKind::DimensionMismatch, "threshold: frame rows");
  detail::check_orthonormal_columns(W, 1e-10, ErrorKind::NotOrthonormal);
  const int p = static_cast<int>(W.cols());
  const Eigen::MatrixXd O = complete_basis(W);
  HermiteFunction g = coefficients_in_basis(f, O);
  HermiteFunction kept(f.q(), f.degree_cap());
  for (const auto& [b, a] : g.coeffs())
    if (p >= f.q() || b.partial_degree(p, f.q() - 1) <= s) kept.set(b, a);
  return rotate(kept, O);
}

/// d/dx_i f, with i 0-based.
inline HermiteFunction partial_derivative(const HermiteFunction& f, int i) {
  if (i < 0 || i >= f.q()) throw Error(ErrorKind::DimensionMismatch, "partial_derivative: coordinate");
  HermiteFunction out(f.q(), f.degree_cap());
  for (const auto& [b, a] : f.coeffs()) {
    if (b[i] == 0) continue;
    MultiIndex nb = b;
    --nb[i];
    out.set(nb, std::sqrt(static_cast<double>(b[i])) * a);
  }
  return out;
}

inline std::vector<HermiteFunction> gradient(const HermiteFunction& f) {
  std::vector<HermiteFunction> g;
  for (int i = 0; i < f.q(); ++i) g.push_back(partial_derivative(f, i));
  return g;
}

inline double evaluate(const HermiteFunction& f, const Eigen::VectorXd& x) {
  if (x.size() != f.q()) throw Error(ErrorKind::DimensionMismatch, "evaluate: point dimension");
  if (f.is_zero()) return 0.0;
  const int deg = f.degree();
  HermiteEval he(deg);
  std::vector<std::vector<double>> tab;
  for (int i = 0; i < f.q(); ++i) tab.push_back(he.eval_all(x(i)));
  double s = 0.0;
  for (const auto& [b, a] : f.coeffs()) {
    double t = a;
    for (int i = 0; i < f.q(); ++i) t *= tab[static_cast<std::size_t>(i)][static_cast<std::size_t>(b[i])];
    s += t;
  }
  return s;
}

/// Coefficients of x -> h_s(w . x) for a unit vector w.
inline HermiteFunction ridge_coeffs(const Eigen::VectorXd& w, int s) {
  if (std::abs(w.norm() - 1.0) > 1e-12) throw Error(ErrorKind::NotUnit, "ridge direction norm " + format_double(w.norm()));
  const int q = static_cast<int>(w.size());
  HermiteFunction f(q);
  for (const MultiIndex& b : enumerate_degree(q, s)) {
    double lw = log_factorial(s);
    double sign = 1.0, mag = 0.0;
    bool zero = false;
    for (int i = 0; i < q; ++i) {
      lw -= log_factorial(b[i]);
      if (b[i] == 0) continue;
      if (w(i) == 0.0) {
        zero = true;
        break;
      }
      mag += b[i] * std::log(std::abs(w(i)));
      if (w(i) < 0 && (b[i] % 2)) sign = -sign;
    }
    if (!zero) f.set(b, sign * std::exp(0.5 * lw + mag));
  }
  return f;
}

/// Text form: header "q=<q> degree=<deg>", then one line "b_1 ... b_q alpha" per term.
inline void write_function(std::ostream& os, const HermiteFunction& f) {
  os << "q=" << f.q() << " degree=" << f.degree() << '\n';
  for (const auto& [b, a] : f.coeffs()) {
    for (int i = 0; i < f.q(); ++i) os << b[i] << ' ';
    os << format_double(a) << '\n';
  }
}

inline std::string to_text(const HermiteFunction& f) {
  std::ostringstream os;
  write_function(os, f);
  return os.str();
}

inline HermiteFunction read_function(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::ParseError, "missing header");
  std::istringstream hs(line);
  std::string qtok, dtok;
  hs >> qtok >> dtok;
  if (qtok.rfind("q=", 0) != 0 || dtok.rfind("degree=", 0) != 0)
    throw Error(ErrorKind::ParseError, "bad header '" + line + "'");
  const int q = parse_int(qtok.substr(2));
  const int deg = parse_int(dtok.substr(7));
  HermiteFunction f(q);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<int> b(static_cast<std::size_t>(q));
    for (int i = 0; i < q; ++i) {
      std::string t;
      if (!(ls >> t)) throw Error(ErrorKind::ParseError, "short line '" + line + "'");
      b[static_cast<std::size_t>(i)] = parse_int(t);
    }
    std::string at;
    if (!(ls >> at)) throw Error(ErrorKind::ParseError, "missing coefficient in '" + line + "'");
    f.set(MultiIndex(std::move(b)), parse_double(at));
  }
  if (f.degree() != deg) throw Error(ErrorKind::ParseError, "header degree does not match terms");
  return f;
}

inline HermiteFunction from_text(const std::string& s) {
  std::istringstream is(s);
  return read_function(is);
}

}  // namespace hermflow
