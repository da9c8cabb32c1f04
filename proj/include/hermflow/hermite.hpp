#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "multi_index.hpp"

namespace hermflow {

/// Orthonormal probabilist Hermite polynomials h_0..h_max under N(0,1).
class HermiteEval {
 public:
  explicit HermiteEval(int max_degree) : max_degree_(max_degree) {
    if (max_degree < 0) throw Error(ErrorKind::DegreeOutOfRange, "negative max degree");
    sqrt_k_.resize(static_cast<std::size_t>(max_degree) + 2);
    for (std::size_t k = 0; k < sqrt_k_.size(); ++k) sqrt_k_[k] = std::sqrt(static_cast<double>(k));
  }

  int max_degree() const { return max_degree_; }

  double eval(int k, double x) const {
    if (k < 0 || k > max_degree_) throw Error(ErrorKind::DegreeOutOfRange, "hermite degree " + std::to_string(k));
    double prev = 0.0, cur = 1.0;
    for (int j = 0; j < k; ++j) {
      const double next = (x * cur - sqrt_k_[static_cast<std::size_t>(j)] * prev) / sqrt_k_[static_cast<std::size_t>(j) + 1];
      prev = cur;
      cur = next;
    }
    return cur;
  }

  /// h_0(x), ..., h_max(x) written into out.
  void eval_all(double x, double* out) const {
    out[0] = 1.0;
    if (max_degree_ == 0) return;
    out[1] = x;
    for (int j = 1; j < max_degree_; ++j)
      out[j + 1] = (x * out[j] - sqrt_k_[static_cast<std::size_t>(j)] * out[j - 1]) / sqrt_k_[static_cast<std::size_t>(j) + 1];
  }

  std::vector<double> eval_all(double x) const {
    std::vector<double> v(static_cast<std::size_t>(max_degree_) + 1);
    eval_all(x, v.data());
    return v;
  }

 private:
  int max_degree_;
  std::vector<double> sqrt_k_;
};

inline double hermite(int k, double x) { return HermiteEval(k).eval(k, x); }

/// Linearization h_l h_m = sum_p B(l,m,p) h_{l+m-2p}, keyed by p.
inline std::map<int, double> product_coeffs(int l, int m) {
  std::map<int, double> out;
  for (int p = 0; p <= std::min(l, m); ++p) {
    const double lb = log_factorial(l) - log_factorial(p) - log_factorial(l - p) + log_factorial(m) -
                      log_factorial(p) - log_factorial(m - p) + log_factorial(l + m - 2 * p) -
                      log_factorial(l - p) - log_factorial(m - p);
    out[p] = std::exp(0.5 * lb);
  }
  return out;
}

/// d/dx h_k = sqrt(k) h_{k-1}; returned as (k-1, sqrt(k)), or (0, 0) for k = 0.
inline std::pair<int, double> derivative_shift(int k) {
  if (k <= 0) return {0, 0.0};
  return {k - 1, std::sqrt(static_cast<double>(k))};
}

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1 (standard Gaussian measure)
};

/// Gauss-Hermite rule for the standard Gaussian via Golub-Welsch; exact for
/// polynomials of degree <= 2n-1.
inline QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw Error(ErrorKind::OutOfDomain, "quadrature needs at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k - 1, k) = J(k, k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    r.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    r.weights[static_cast<std::size_t>(i)] = v0 * v0;
  }
  return r;
}

/// Node count used when a rule must integrate products of degree-max_degree polynomials.
inline QuadratureRule gauss_hermite_for_degree(int max_degree) { return gauss_hermite(2 * max_degree + 1); }

}  // namespace hermflow
