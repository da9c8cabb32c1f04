#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "hermite.hpp"
#include "hermite_function.hpp"
#include "multi_index.hpp"
#include "rng.hpp"

namespace hermflow {

/// Degree-only spectrum c_0..c_kmax of an isotropic Hermite kernel, with ridge mu.
class KernelSpectrum {
 public:
  KernelSpectrum(int q, std::vector<double> c, double mu) : q_(q), c_(std::move(c)), mu_(mu) {
    if (q < 1) throw Error(ErrorKind::OutOfDomain, "kernel dimension must be >= 1");
    if (c_.empty()) throw Error(ErrorKind::OutOfDomain, "empty spectrum");
    if (!(mu >= 0)) throw Error(ErrorKind::OutOfDomain, "ridge must be >= 0");
    for (double v : c_)
      if (!(v > 0)) throw Error(ErrorKind::OutOfDomain, "spectrum entries must be positive");
    // Decay check: past the first half of the table, c_k (1+k)^(q+1) may not
    // exceed its maximum over the first half.
    const std::size_t head = c_.size() / 2 + 1;
    double env = 0.0;
    for (std::size_t k = 0; k < head; ++k) env = std::max(env, scaled(k));
    for (std::size_t k = head; k < c_.size(); ++k)
      if (scaled(k) > env * (1 + 1e-12))
        throw Error(ErrorKind::OutOfDomain, "spectrum decays slower than k^-(q+1)");
  }

  /// c_k = (1+k)^-(q+2), k = 0..k_max.
  static KernelSpectrum standard(int q, double mu, int k_max = 64) {
    std::vector<double> c(static_cast<std::size_t>(k_max) + 1);
    for (int k = 0; k <= k_max; ++k) c[static_cast<std::size_t>(k)] = std::pow(1.0 + k, -(q + 2.0));
    return {q, std::move(c), mu};
  }

  int q() const { return q_; }
  int k_max() const { return static_cast<int>(c_.size()) - 1; }
  double c(int k) const { return c_[static_cast<std::size_t>(k)]; }
  double mu() const { return mu_; }
  const std::vector<double>& values() const { return c_; }

  /// Number of indices on shell k times c_k.
  double shell_mass(int k) const { return binomial(k + q_ - 1, k) * c(k); }
  /// sum over all indices b of c_|b|.
  double total_mass() const {
    double s = 0.0;
    for (int k = 0; k <= k_max(); ++k) s += shell_mass(k);
    return s;
  }

 private:
  double scaled(std::size_t k) const { return c_[k] * std::pow(1.0 + static_cast<double>(k), q_ + 1.0); }

  int q_;
  std::vector<double> c_;
  double mu_;
};

struct KernelValue {
  double value = 0;
  double truncation = 0;  // magnitude of the last shell kept
};

/// sum_k c_k sum_{|b|=k} H_b(x) H_b(y), truncated at k_max. Each shell sum is
/// the degree-k coefficient of the product over coordinates of the series
/// sum_m h_m(x_i) h_m(y_i) t^m.
inline KernelValue kernel_eval(const KernelSpectrum& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != spec.q() || y.size() != spec.q()) throw Error(ErrorKind::DimensionMismatch, "kernel_eval: point dimension");
  const int K = spec.k_max();
  HermiteEval he(K);
  std::vector<double> shells(static_cast<std::size_t>(K) + 1, 0.0);
  shells[0] = 1.0;
  std::vector<double> hx(static_cast<std::size_t>(K) + 1), hy(static_cast<std::size_t>(K) + 1);
  for (int i = 0; i < spec.q(); ++i) {
    he.eval_all(x(i), hx.data());
    he.eval_all(y(i), hy.data());
    std::vector<double> next(static_cast<std::size_t>(K) + 1, 0.0);
    for (int k = 0; k <= K; ++k)
      for (int m = 0; m <= k; ++m)
        next[static_cast<std::size_t>(k)] += shells[static_cast<std::size_t>(k - m)] * (hx[static_cast<std::size_t>(m)] * hy[static_cast<std::size_t>(m)]);
    shells = std::move(next);
  }
  KernelValue v;
  for (int k = 0; k <= K; ++k) v.value += spec.c(k) * shells[static_cast<std::size_t>(k)];
  v.truncation = std::abs(spec.c(K) * shells[static_cast<std::size_t>(K)]);
  return v;
}

/// i.i.d. indices with P(b) proportional to c_|b|: a degree drawn from the
/// shell masses, then a uniform composition of it (stars and bars).
inline std::vector<MultiIndex> sample_features(const KernelSpectrum& spec, long n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::OutOfDomain, "sample_features: n >= 1");
  const int q = spec.q(), K = spec.k_max();
  std::vector<double> cdf(static_cast<std::size_t>(K) + 1);
  double acc = 0.0;
  for (int k = 0; k <= K; ++k) cdf[static_cast<std::size_t>(k)] = (acc += spec.shell_mass(k));
  for (double& v : cdf) v /= acc;
  PhiloxStream rng(seed, 0x66656174ULL);
  std::vector<MultiIndex> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long t = 0; t < n; ++t) {
    const double u = rng.uniform();
    int k = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    k = std::min(k, K);
    // choose q-1 bar positions among k+q-1 slots (selection sampling)
    MultiIndex b(q);
    int slots = k + q - 1, bars = q - 1, part = 0;
    for (int pos = 0; pos < k + q - 1; ++pos, --slots) {
      if (bars > 0 && rng.uniform() * slots < bars) {
        --bars;
        ++part;
      } else {
        ++b[part];
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

/// Monte-Carlo kernel estimate (total_mass/n) sum_i H_bi(x) H_bi(y).
inline double feature_estimate(const KernelSpectrum& spec, const std::vector<MultiIndex>& feats, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y) {
  HermiteEval he(spec.k_max());
  std::vector<std::vector<double>> hx, hy;
  for (int i = 0; i < spec.q(); ++i) {
    hx.push_back(he.eval_all(x(i)));
    hy.push_back(he.eval_all(y(i)));
  }
  double s = 0.0;
  for (const auto& b : feats) {
    double p = 1.0;
    for (int i = 0; i < spec.q(); ++i) p *= hx[static_cast<std::size_t>(i)][static_cast<std::size_t>(b[i])] * hy[static_cast<std::size_t>(i)][static_cast<std::size_t>(b[i])];
    s += p;
  }
  return spec.total_mass() * s / static_cast<double>(feats.size());
}

enum class ShrinkMode { Target, Link };

/// Target mode: alpha_b * sqrt(c/(c+mu)). Link mode: alpha_b * c/(c+mu).
inline double shrink_multiplier(const KernelSpectrum& spec, int k, ShrinkMode mode) {
  if (std::isinf(spec.mu())) return 0.0;
  const double r = spec.c(k) / (spec.c(k) + spec.mu());
  return mode == ShrinkMode::Target ? std::sqrt(r) : r;
}

inline HermiteFunction ridge_shrink(const HermiteFunction& f, const KernelSpectrum& spec, ShrinkMode mode) {
  if (f.q() != spec.q()) throw Error(ErrorKind::DimensionMismatch, "ridge_shrink: dimension");
  if (f.degree() > spec.k_max())
    throw Error(ErrorKind::DegreeExceedsSpectrum, "degree " + std::to_string(f.degree()) + " beyond spectrum");
  HermiteFunction out(f.q(), f.degree_cap());
  for (const auto& [b, a] : f.coeffs()) out.set(b, a * shrink_multiplier(spec, b.degree(), mode));
  return out;
}

}  // namespace hermflow
