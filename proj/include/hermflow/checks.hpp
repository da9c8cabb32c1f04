#pragma once

#include <functional>
#include <string>
#include <vector>

#include "experiment.hpp"

namespace hermflow {

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

namespace detail {

inline HermiteFunction sample_function(PhiloxStream& rng, int q, int max_degree, int terms) {
  HermiteFunction f(q);
  for (int t = 0; t < terms; ++t) {
    MultiIndex b(q);
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_degree) + 1));
    for (int j = 0; j < k; ++j) ++b[static_cast<int>(rng.below(static_cast<std::uint64_t>(q)))];
    f.add(b, rng.normal());
  }
  return f;
}

inline Eigen::MatrixXd sample_orthogonal(PhiloxStream& rng, int q) {
  Eigen::MatrixXd A(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) A(i, j) = rng.normal();
  return orthonormalize(A);
}

}  // namespace detail

/// Quick self-test of core identities; a few seconds at most.
inline std::vector<CheckResult> run_checks() {
  std::vector<CheckResult> out;
  auto add = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    CheckResult r{name, false, ""};
    try {
      auto [ok, det] = fn();
      r.ok = ok;
      r.detail = det;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(r);
  };
  PhiloxStream rng(2024);

  add("rotation preserves the norm", [&] {
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
      const auto f = detail::sample_function(rng, 3, 6, 8);
      worst = std::max(worst, std::abs(rotate(f, detail::sample_orthogonal(rng, 3)).norm() - f.norm()));
    }
    return std::pair{worst < 1e-10, "max deviation " + format_double(worst)};
  });

  add("averaging composes", [&] {
    double worst = 0;
    for (int t = 0; t < 10; ++t) {
      const auto f = detail::sample_function(rng, 2, 5, 6);
      Eigen::MatrixXd A = 0.7 * detail::sample_orthogonal(rng, 2), B = 0.9 * detail::sample_orthogonal(rng, 2);
      A(0, 1) *= 0.5;
      worst = std::max(worst, distance(average(average(f, A), B), average(f, B * A)));
    }
    return std::pair{worst < 1e-10, "max distance " + format_double(worst)};
  });

  add("threshold is idempotent", [&] {
    const auto f = detail::sample_function(rng, 3, 6, 10);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(3, 1);
    W(0, 0) = 1;
    const auto g = threshold(f, W, 2);
    const double e = distance(threshold(g, W, 2), g);
    return std::pair{e < 1e-12, "distance " + format_double(e)};
  });

  add("cascade of the four-stage example", [&] {
    const auto rep = leap_decomposition(gallery("cascade_example").coeff_part());
    std::string s;
    std::vector<int> fine, coarse;
    for (const auto& st : rep.stages) fine.push_back(st.s);
    for (const auto& st : rep.regrouped) coarse.push_back(st.s);
    for (int v : fine) s += std::to_string(v) + " ";
    s += "| ";
    for (int v : coarse) s += std::to_string(v) + " ";
    return std::pair{fine == std::vector<int>{2, 1, 3, 4} && coarse == std::vector<int>{2, 3, 4} && rep.s_star == 4, s};
  });

  add("Grassmann gradient is PSD and the field tangent", [&] {
    double min_ev = std::numeric_limits<double>::infinity(), tangent = 0;
    for (int t = 0; t < 10; ++t) {
      const auto T = Target::coefficient(detail::sample_function(rng, 2, 5, 6));
      const Frame Ws = canonical_frame(6, 2), W = init_uniform(6, 2, rng.next_u64());
      const auto S = summary(Ws, W);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(grassmann_grad_G(T, S));
      min_ev = std::min(min_ev, es.eigenvalues().minCoeff());
      tangent = std::max(tangent, (W.transpose() * grassmann_flow_field(T, Ws, W)).norm());
    }
    return std::pair{min_ev > -1e-10 && tangent < 1e-10, "min eigenvalue " + format_double(min_ev) + ", tangent residual " + format_double(tangent)};
  });

  add("negative autocorrelation sequence (N=8)", [&] {
    const auto ac = cyclic_autocorrelation(negative_autocorrelation_sequence(8));
    double worst = -1e300;
    for (int k : {1, 2, 3, 5, 6, 7}) worst = std::max(worst, ac[static_cast<std::size_t>(k)]);
    return std::pair{worst < 0, "largest off-peak value " + format_double(worst)};
  });

  add("RK4 against the Bernoulli closed form", [&] {
    auto rhs = [](double, double y) { return y + y * y * y; };
    const double e = std::abs(rk4_scalar(rhs, 0.01, 0, 1, 4000) - bernoulli_oracle(0.01, 1, 3, 1));
    return std::pair{e < 1e-8, "error " + format_double(e)};
  });

  add("kernel symmetry", [&] {
    const auto spec = KernelSpectrum::standard(2, 0.0);
    const Eigen::Vector2d x(0.3, -1.1), y(1.4, 0.2);
    const double a = kernel_eval(spec, x, y).value, b = kernel_eval(spec, y, x).value;
    return std::pair{a == b, format_double(a)};
  });

  add("initial frames orthonormal", [&] {
    double worst = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Frame W = init_uniform(50, 3, s);
      worst = std::max(worst, (W.transpose() * W - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff());
    }
    return std::pair{worst <= 1e-12, "residual " + format_double(worst)};
  });

  add("radial planted flow recovers the subspace", [&] {
    FlowConfig cfg;
    cfg.t_max = 50 * std::log(20.0);
    cfg.record_dt = 1.0;
    const auto tr = integrate(Model::Stiefel, gallery("planted_radial"), canonical_frame(20, 2), init_uniform(20, 2, 1), cfg);
    const double dist = projector_distance2(tr.samples.back().lambda, 2, 2);
    return std::pair{dist <= 1e-3, "final distance " + format_double(dist)};
  });

  return out;
}

}  // namespace hermflow
