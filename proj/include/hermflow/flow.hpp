#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "landscape.hpp"
#include "numfmt.hpp"
#include "rng.hpp"
#include "structure.hpp"

namespace hermflow {

enum class Model { Grassmann, Stiefel };

inline const char* to_string(Model m) { return m == Model::Grassmann ? "grassmann" : "stiefel"; }

struct FlowConfig {
  double dt = 0.01;          // initial step
  double t_max = 100.0;
  double eta = 0.25;         // escape threshold: lambda >= 1 - eta
  int record_every = 1;      // accepted steps between samples, used when record_dt == 0
  double record_dt = 0.0;    // sample on a uniform time grid when > 0
  std::uint64_t seed = 0;
  bool adapt = true;
  double rtol = 1e-6;        // local error relative to the step displacement
  double atol = 1e-14;       // absolute floor on the local error
  double dt_max = std::numeric_limits<double>::infinity();
  double grad_stop = 1e-12;
  double monotone_slack = 1e-9;

  void validate() const {
    if (!(dt > 0)) throw Error(ErrorKind::OutOfDomain, "dt must be positive");
    if (!(eta > 0 && eta < 1)) throw Error(ErrorKind::OutOfDomain, "eta must lie in (0,1)");
    if (!(t_max > 0)) throw Error(ErrorKind::OutOfDomain, "t_max must be positive");
    if (record_every < 1) throw Error(ErrorKind::OutOfDomain, "record_every must be >= 1");
  }
};

struct FlowSample {
  double t = 0;
  double loss = 0;
  double grad_norm = 0;
  Eigen::VectorXd lambda;
  double orth_residual = 0;
  std::vector<double> alignment;
};

struct FlowTrace {
  std::vector<FlowSample> samples;
  std::map<int, double> escapes;
  long accepted = 0;
  long rejected = 0;
  bool converged = false;  // stopped on the gradient threshold
};

/// Haar-distributed frame: QR of a d x r Gaussian matrix with positive R
/// diagonal. Entry (i, j) uses counter i*r + j, so the top rows agree across
/// ambient dimensions for the same seed.
inline Frame init_uniform(int d, int r, std::uint64_t seed) {
  if (r < 1 || r > d) throw Error(ErrorKind::OutOfDomain, "init_uniform: need 1 <= r <= d");
  Philox gen(seed, 0x696e6974ULL);
  Eigen::MatrixXd A(d, r);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < r; ++j) A(i, j) = gen.normal(static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(r) + static_cast<std::uint64_t>(j));
  return orthonormalize(A);
}

/// Log of the ordered-region normalizer of the principal-cosine density,
/// via the Selberg integral with (alpha, beta, gamma) = (1/2, (d-2q+1)/2, 1/2).
inline double angle_density_log_normalizer(int d, int q) {
  const double a = 0.5, b = 0.5 * (d - 2 * q + 1), g = 0.5;
  double ls = 0.0;
  for (int j = 0; j < q; ++j)
    ls += std::lgamma(a + j * g) + std::lgamma(b + j * g) + std::lgamma(1 + (j + 1) * g) -
          std::lgamma(a + b + (q + j - 1) * g) - std::lgamma(1 + g);
  return ls - std::lgamma(q + 1.0) - q * std::log(2.0);
}

/// Joint density of the ordered principal cosines lambda_1 >= ... >= lambda_q
/// between a uniform q-frame and a fixed q-frame in R^d.
inline double angle_density(const Eigen::VectorXd& lambda, int d, int q) {
  if (lambda.size() != q || d <= 2 * q) throw Error(ErrorKind::OutOfDomain, "angle_density: need d > 2q");
  for (int i = 0; i < q; ++i) {
    if (lambda(i) < 0.0 || lambda(i) > 1.0) throw Error(ErrorKind::OutOfDomain, "angle_density: lambda outside [0,1]");
    if (i + 1 < q && lambda(i) < lambda(i + 1)) throw Error(ErrorKind::OutOfDomain, "angle_density: lambda not ordered");
  }
  double lp = -angle_density_log_normalizer(d, q);
  for (int i = 0; i < q; ++i) {
    for (int j = i + 1; j < q; ++j) {
      const double gap = lambda(i) * lambda(i) - lambda(j) * lambda(j);
      if (gap == 0.0) return 0.0;
      lp += std::log(std::abs(gap));
    }
    const double one_minus = 1.0 - lambda(i) * lambda(i);
    if (one_minus <= 0.0) return (d - 2 * q - 1) == 0 ? std::exp(lp) : 0.0;
    lp += 0.5 * (d - 2 * q - 1) * std::log(one_minus);
  }
  return std::exp(lp);
}

/// Flow field and correlation for a model.
struct FlowSystem {
  Model model;
  const Target& target;
  const Frame& Wstar;

  Eigen::MatrixXd field(const Frame& W) const {
    return model == Model::Grassmann ? grassmann_flow_field(target, Wstar, W) : stiefel_flow_field(target, Wstar, W);
  }
  double loss(const SummaryStatistics& S) const {
    return model == Model::Grassmann ? grassmann_loss(target, S) : planted_loss(target, S);
  }
};

/// ||V_p V_p^T - W W^T||_F^2 between the top-p left singular frame and a q x p reference.
inline double alignment_error(const SummaryStatistics& S, const Eigen::MatrixXd& ref) {
  const Eigen::MatrixXd Vp = S.V.leftCols(ref.cols());
  return (Vp * Vp.transpose() - ref * ref.transpose()).squaredNorm();
}

/// Integrates the correlation-ascent flow from W0 with RK4 and QR retraction.
/// With cfg.adapt, each step is compared against two half steps and rejected
/// when the difference exceeds atol + rtol * |displacement| or the
/// correlation drops.
inline FlowTrace integrate(Model model, const Target& f, const Frame& Wstar, const Frame& W0, const FlowConfig& cfg,
                           const std::vector<Eigen::MatrixXd>& align_refs = {}) {
  cfg.validate();
  check_frame(Wstar, "Wstar");
  check_frame(W0, "W0");
  if (Wstar.rows() != W0.rows() || Wstar.cols() != f.q() || W0.cols() < Wstar.cols() ||
      (model == Model::Stiefel && W0.cols() != Wstar.cols()))
    throw Error(ErrorKind::DimensionMismatch, "integrate: frame shapes");
  const FlowSystem sys{model, f, Wstar};

  auto rk4 = [&](const Frame& W, const Eigen::MatrixXd& k1, double h) {
    const Eigen::MatrixXd k2 = sys.field(W + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = sys.field(W + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = sys.field(W + h * k3);
    const Eigen::MatrixXd Y = W + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return Y.allFinite() ? orthonormalize(Y) : Frame(Y);  // non-finite results are rejected by the caller
  };

  FlowTrace tr;
  Frame W = W0;
  double t = 0.0, dt = cfg.dt;
  Eigen::MatrixXd k1 = sys.field(W);
  SummaryStatistics S = summary(Wstar, W);
  double L = sys.loss(S);

  auto make_sample = [&]() {
    FlowSample s;
    s.t = t;
    s.loss = L;
    s.grad_norm = k1.norm();
    s.lambda = S.lambda;
    s.orth_residual = (W.transpose() * W - Eigen::MatrixXd::Identity(W.cols(), W.cols())).cwiseAbs().maxCoeff();
    for (const auto& ref : align_refs) s.alignment.push_back(alignment_error(S, ref));
    return s;
  };
  auto record = [&]() { tr.samples.push_back(make_sample()); };
  record();

  // steps on both sides of a first crossing of 1 - eta are always kept, so escape
  // times resolve to one step whatever the sampling grid
  std::vector<bool> crossed(static_cast<std::size_t>(S.lambda.size()), false);
  for (Eigen::Index k = 0; k < S.lambda.size(); ++k) crossed[static_cast<std::size_t>(k)] = S.lambda(k) >= 1.0 - cfg.eta;
  FlowSample prev = tr.samples.back();

  double next_record = cfg.record_dt;
  long since_record = 0;
  while (t < cfg.t_max) {
    if (k1.norm() < cfg.grad_stop) {
      tr.converged = true;
      break;
    }
    double h = std::min({dt, cfg.dt_max, cfg.t_max - t});
    if (cfg.record_dt > 0) h = std::min(h, next_record - t);
    Frame Wn;
    double err = 0.0, allowed = 0.0;
    if (cfg.adapt) {
      const Frame full = rk4(W, k1, h);
      const Frame mid = rk4(W, k1, 0.5 * h);
      bool finite = full.allFinite() && mid.allFinite();
      if (finite) {
        Wn = rk4(mid, sys.field(mid), 0.5 * h);
        finite = Wn.allFinite();
      }
      SummaryStatistics Sn;
      double Ln = 0.0;
      if (finite) {
        err = (Wn - full).cwiseAbs().maxCoeff() / 15.0;
        allowed = cfg.atol + cfg.rtol * (Wn - W).cwiseAbs().maxCoeff();
        Sn = summary(Wstar, Wn);
        Ln = sys.loss(Sn);
      }
      if (!finite || !std::isfinite(err) || err > allowed || Ln < L - cfg.monotone_slack) {
        ++tr.rejected;
        dt = 0.5 * h;
        if (dt < 1e-14 * std::max(1.0, t))
          throw Error(ErrorKind::StepRejected, "step size underflow at t=" + format_double(t));
        continue;
      }
      S = Sn;
      L = Ln;
    } else {
      Wn = rk4(W, k1, h);
      if (!Wn.allFinite()) throw Error(ErrorKind::NonFiniteState, "non-finite state at t=" + format_double(t));
      S = summary(Wstar, Wn);
      L = sys.loss(S);
    }
    if (!Wn.allFinite() || !std::isfinite(L)) throw Error(ErrorKind::NonFiniteState, "non-finite state at t=" + format_double(t));
    W = std::move(Wn);
    t += h;
    ++tr.accepted;
    k1 = sys.field(W);
    if (cfg.adapt && h >= dt && err < allowed / 32.0) dt = 2.0 * h;

    bool rec = false;
    if (cfg.record_dt > 0) {
      if (t >= next_record - 1e-12 * std::max(1.0, t)) {
        rec = true;
        while (next_record <= t + 1e-12 * std::max(1.0, t)) next_record += cfg.record_dt;
      }
    } else if (++since_record >= cfg.record_every) {
      rec = true;
      since_record = 0;
    }
    bool crossing = false;
    for (Eigen::Index k = 0; k < S.lambda.size(); ++k)
      if (!crossed[static_cast<std::size_t>(k)] && S.lambda(k) >= 1.0 - cfg.eta) crossed[static_cast<std::size_t>(k)] = crossing = true;
    if (crossing && tr.samples.back().t < prev.t) tr.samples.push_back(prev);
    if (rec || crossing) record();
    prev = make_sample();
  }
  if (tr.samples.back().t != t) record();
  return tr;
}

/// First time the p-th singular value reaches 1 - eta, interpolated linearly
/// between bracketing samples; nullopt when never reached.
inline std::optional<double> first_crossing(const FlowTrace& tr, int p, double eta) {
  const double level = 1.0 - eta;
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    const double v = tr.samples[i].lambda(p - 1);
    if (v >= level) {
      if (i == 0) return tr.samples[0].t;
      const auto& a = tr.samples[i - 1];
      const double va = a.lambda(p - 1);
      const double w = (level - va) / (v - va);
      return a.t + w * (tr.samples[i].t - a.t);
    }
  }
  return std::nullopt;
}

/// Escape time per regrouped stage (1-based), keyed on the stage's support dimension.
inline std::map<int, double> escape_times(const FlowTrace& tr, const std::vector<int>& stage_dims, double eta) {
  std::map<int, double> out;
  for (std::size_t k = 0; k < stage_dims.size(); ++k)
    if (auto tau = first_crossing(tr, stage_dims[k], eta)) out[static_cast<int>(k) + 1] = *tau;
  return out;
}

inline std::vector<int> stage_dims(const CascadeReport& rep) {
  std::vector<int> p;
  for (const auto& st : rep.regrouped) p.push_back(st.p);
  return p;
}

inline std::map<int, double> escape_times(const FlowTrace& tr, const CascadeReport& rep, double eta) {
  return escape_times(tr, stage_dims(rep), eta);
}

struct ExponentFit {
  double slope = 0;
  double std_error = 0;
  double intercept = 0;
};

/// Least squares of log tau on log d.
inline ExponentFit fit_exponent(const std::map<double, double>& taus, int drop_smallest = 0) {
  std::vector<std::pair<double, double>> pts;
  int skipped = 0;
  for (const auto& [d, tau] : taus) {
    if (skipped++ < drop_smallest) continue;
    pts.emplace_back(std::log(d), std::log(tau));
  }
  const auto n = static_cast<double>(pts.size());
  if (pts.size() < 3) throw Error(ErrorKind::TooFewPoints, "fit_exponent needs >= 3 points");
  double mx = 0, my = 0;
  for (auto [x, y] : pts) {
    mx += x / n;
    my += y / n;
  }
  double sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  ExponentFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0;
  for (auto [x, y] : pts) ssr += std::pow(y - fit.intercept - fit.slope * x, 2);
  fit.std_error = std::sqrt(ssr / (n - 2) / sxx);
  return fit;
}

/// Exact solution of y' = y + a y^s, y(0) = delta.
inline double bernoulli_oracle(double delta, double a, int s, double t) {
  if (!(delta > 0) || s < 2) throw Error(ErrorKind::OutOfDomain, "bernoulli_oracle: need delta > 0, s >= 2");
  const double base = (std::pow(delta, 1 - s) + a) * std::exp(-(s - 1) * t) - a;
  if (!(base > 0)) throw Error(ErrorKind::BlowUp, "solution blows up before t=" + format_double(t));
  return std::pow(base, -1.0 / (s - 1));
}

/// Blow-up time of the Bernoulli solution (infinite when a <= 0).
inline double bernoulli_blowup_time(double delta, double a, int s) {
  if (a <= 0) return std::numeric_limits<double>::infinity();
  return std::log((std::pow(delta, 1 - s) + a) / a) / (s - 1);
}

/// Classical fixed-step RK4 for a scalar ODE.
inline double rk4_scalar(const std::function<double(double, double)>& rhs, double y0, double t0, double t1, long steps) {
  const double h = (t1 - t0) / static_cast<double>(steps);
  double y = y0, t = t0;
  for (long i = 0; i < steps; ++i) {
    const double k1 = rhs(t, y);
    const double k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    const double k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    const double k4 = rhs(t + h, y + h * k3);
    y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    t = t0 + static_cast<double>(i + 1) * h;
  }
  return y;
}

/// Trace as CSV: a comment line with the config hash and seed, then
/// t,loss,grad_norm,lambda_1..lambda_q.
inline void write_trace_csv(std::ostream& os, const FlowTrace& tr, const std::string& config_hash, std::uint64_t seed) {
  os << "# config_hash=" << config_hash << " seed=" << seed << '\n';
  const auto q = tr.samples.empty() ? 0 : tr.samples.front().lambda.size();
  os << "t,loss,grad_norm";
  for (Eigen::Index i = 0; i < q; ++i) os << ",lambda_" << i + 1;
  os << '\n';
  for (const auto& s : tr.samples) {
    os << format_double(s.t) << ',' << format_double(s.loss) << ',' << format_double(s.grad_norm);
    for (Eigen::Index i = 0; i < q; ++i) os << ',' << format_double(s.lambda(i));
    os << '\n';
  }
}

}  // namespace hermflow
