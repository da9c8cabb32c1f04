#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "errors.hpp"

namespace hermflow {

/// Index (b_1, ..., b_q) of a tensorized Hermite element.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(int q) : e_(static_cast<std::size_t>(q), 0) {}
  MultiIndex(std::initializer_list<int> v) : e_(v) { check(); }
  explicit MultiIndex(std::vector<int> v) : e_(std::move(v)) { check(); }

  int q() const { return static_cast<int>(e_.size()); }
  int operator[](int i) const { return e_[static_cast<std::size_t>(i)]; }
  int& operator[](int i) { return e_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& entries() const { return e_; }

  int degree() const {
    int s = 0;
    for (int v : e_) s += v;
    return s;
  }
  /// Sum of entries r..s, 0-based and inclusive.
  int partial_degree(int r, int s) const {
    int t = 0;
    for (int i = r; i <= s; ++i) t += e_[static_cast<std::size_t>(i)];
    return t;
  }

  MultiIndex plus_unit(int i) const {
    MultiIndex out = *this;
    ++out.e_[static_cast<std::size_t>(i)];
    return out;
  }

  auto operator<=>(const MultiIndex&) const = default;
  bool operator==(const MultiIndex&) const = default;

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < e_.size(); ++i) s += (i ? "," : "") + std::to_string(e_[i]);
    return s + ")";
  }

 private:
  void check() const {
    for (int v : e_)
      if (v < 0) throw Error(ErrorKind::OutOfDomain, "negative multi-index entry");
  }
  std::vector<int> e_;
};

/// Nonnegative integer matrix with prescribed margins. Row i sums to gamma_i
/// (input index), column j sums to beta_j (output index).
struct TransportMatrix {
  int rows = 0, cols = 0;
  std::vector<int> entries;  // row-major
  MultiIndex row_sums;       // gamma
  MultiIndex col_sums;       // beta

  int operator()(int i, int j) const { return entries[static_cast<std::size_t>(i * cols + j)]; }
};

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  return std::round(std::exp(log_factorial(n) - log_factorial(k) - log_factorial(n - k)));
}

/// All b with |b| = k in lexicographic order.
inline std::vector<MultiIndex> enumerate_degree(int q, int k) {
  std::vector<MultiIndex> out;
  MultiIndex cur(q);
  // fill positions left to right; the first entry varies slowest
  auto rec = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == q - 1) {
      cur[pos] = remaining;
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      cur[pos] = v;
      self(self, pos + 1, remaining - v);
    }
  };
  rec(rec, 0, k);
  return out;
}

/// Every transport matrix with row sums gamma and column sums beta.
inline std::vector<TransportMatrix> transport_polytope(const MultiIndex& beta, const MultiIndex& gamma) {
  if (beta.degree() != gamma.degree())
    throw Error(ErrorKind::DegreeMismatch, "transport_polytope: |beta| != |gamma|");
  const int rows = gamma.q(), cols = beta.q();
  std::vector<TransportMatrix> out;
  std::vector<int> t(static_cast<std::size_t>(rows * cols), 0);
  std::vector<int> col_left(beta.entries());

  // Row-by-row filling; each row is a composition of gamma_i bounded by the
  // remaining column budget.
  auto fill = [&](auto&& self, int i, int j, int row_left) -> void {
    if (i == rows) {
      for (int c : col_left)
        if (c != 0) return;
      out.push_back({rows, cols, t, gamma, beta});
      return;
    }
    if (j == cols - 1) {
      if (row_left > col_left[static_cast<std::size_t>(j)]) return;
      t[static_cast<std::size_t>(i * cols + j)] = row_left;
      col_left[static_cast<std::size_t>(j)] -= row_left;
      self(self, i + 1, 0, i + 1 < rows ? gamma[i + 1] : 0);
      col_left[static_cast<std::size_t>(j)] += row_left;
      t[static_cast<std::size_t>(i * cols + j)] = 0;
      return;
    }
    const int hi = std::min(row_left, col_left[static_cast<std::size_t>(j)]);
    for (int v = 0; v <= hi; ++v) {
      t[static_cast<std::size_t>(i * cols + j)] = v;
      col_left[static_cast<std::size_t>(j)] -= v;
      self(self, i, j + 1, row_left - v);
      col_left[static_cast<std::size_t>(j)] += v;
    }
    t[static_cast<std::size_t>(i * cols + j)] = 0;
  };
  if (rows == 0 || cols == 0) {
    if (beta.degree() == 0) out.push_back({rows, cols, t, gamma, beta});
    return out;
  }
  fill(fill, 0, 0, gamma[0]);
  return out;
}

/// Product of the multinomial coefficients of every row and every column.
inline double polytope_weight(const TransportMatrix& T) {
  double lw = 0.0;
  for (int i = 0; i < T.rows; ++i) {
    lw += log_factorial(T.row_sums[i]);
    for (int j = 0; j < T.cols; ++j) lw -= log_factorial(T(i, j));
  }
  for (int j = 0; j < T.cols; ++j) {
    lw += log_factorial(T.col_sums[j]);
    for (int i = 0; i < T.rows; ++i) lw -= log_factorial(T(i, j));
  }
  return std::exp(lw);
}

}  // namespace hermflow
