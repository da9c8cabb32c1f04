#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "flow.hpp"
#include "landscape.hpp"
#include "numfmt.hpp"
#include "rkhs.hpp"
#include "structure.hpp"

namespace hermflow {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Gallery

struct GalleryEntry {
  std::string name;
  std::string summary;
  Model model;
};

inline const std::vector<GalleryEntry>& gallery_list() {
  static const std::vector<GalleryEntry> items{
      {"cascade_example", "q=4: h2(x1) + h4(x2) + h6(x1)h1(x3) + h3(x1)h5(x3)h3(x4)", Model::Grassmann},
      {"recombination", "q=2: (h1(x1)+h1(x2))/sqrt2 + (h2(x1)+h2(x2))/2 - h1(x1)h1(x2)", Model::Grassmann},
      {"timescale", "q=2: h2(x1) + h3(x2)", Model::Grassmann},
      {"single_stage", "q=1: h2(x1)", Model::Grassmann},
      {"planted_radial", "q=2: (h2(x1) + h2(x2))/sqrt2", Model::Stiefel},
      {"planted_failure", "radial + eps * sum_j Z_j h_s(w_j.x), w_j at roots of unity, Z=(2,1,..,1); params N, s, eps",
       Model::Stiefel},
      {"bad_subspace", "sum_j Z_j h_s(w_j.x), Z with negative autocorrelation; params N (8), s (8N^2)", Model::Stiefel},
  };
  return items;
}

inline const GalleryEntry& gallery_entry(const std::string& name) {
  for (const auto& e : gallery_list())
    if (e.name == name) return e;
  throw Error(ErrorKind::UnknownScenario, "unknown gallery item '" + name + "'");
}

namespace detail {

inline HermiteFunction radial2() {
  HermiteFunction f(2);
  f.set({2, 0}, 1 / std::sqrt(2.0));
  f.set({0, 2}, 1 / std::sqrt(2.0));
  return f;
}

template <class T>
T param(const json& p, const char* key, T fallback) {
  if (!p.is_object() || !p.contains(key)) return fallback;
  try {
    return p.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("gallery parameter '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline RidgeSum planted_ridge(std::vector<double> Z, int s) {
  RidgeSum g;
  g.dirs = roots_of_unity(static_cast<int>(Z.size()));
  g.Z = std::move(Z);
  g.s = s;
  return g;
}

inline Target gallery(const std::string& name, const json& params = json::object()) {
  gallery_entry(name);
  if (name == "cascade_example") {
    HermiteFunction f(4);
    f.set({2, 0, 0, 0}, 1.0);
    f.set({0, 4, 0, 0}, 1.0);
    f.set({6, 0, 1, 0}, 1.0);
    f.set({3, 0, 5, 3}, 1.0);
    return Target::coefficient(f);
  }
  if (name == "recombination") {
    HermiteFunction f(2);
    const double r = 1 / std::sqrt(2.0);
    f.set({1, 0}, r);
    f.set({0, 1}, r);
    f.set({2, 0}, 0.5);
    f.set({0, 2}, 0.5);
    f.set({1, 1}, -1.0);
    return Target::coefficient(f);
  }
  if (name == "timescale") {
    HermiteFunction f(2);
    f.set({2, 0}, 1.0);
    f.set({0, 3}, 1.0);
    return Target::coefficient(f);
  }
  if (name == "single_stage") return Target::coefficient(HermiteFunction::basis({2}));
  if (name == "planted_radial") return Target::coefficient(detail::radial2());
  if (name == "planted_failure") {
    const int N = detail::param(params, "N", 5);
    if (N < 2) throw Error(ErrorKind::OutOfDomain, "planted_failure: N >= 2");
    const int s = detail::param(params, "s", failure_degree(N));
    std::vector<double> Z(static_cast<std::size_t>(N), 1.0);
    Z[0] = 2.0;
    RidgeSum g = planted_ridge(Z, s);
    const HermiteFunction f = detail::radial2();
    const double eps = detail::param(params, "eps", failure_epsilon(N, s, f.norm2(), g.norm2()));
    return Target::mixed(f, std::move(g), eps);
  }
  // bad_subspace
  const int N = detail::param(params, "N", 8);
  const int s = detail::param(params, "s", 8 * N * N);
  return Target::ridge(planted_ridge(negative_autocorrelation_sequence(N), s));
}

// ---------------------------------------------------------------------------
// Configuration

struct RkhsConfig {
  double mu = 0.0;
  int k_max = 64;
  ShrinkMode mode = ShrinkMode::Target;
};

struct ExperimentConfig {
  std::string scenario;
  json target;  // {"gallery": name, "params": {...}} | {"coefficients": ...} | {"ridge": ...}
  std::optional<Model> model;
  int r = 0;  // 0: same as q
  std::vector<int> dims;
  int seed_count = 1;
  std::uint64_t seed_base = 0;
  FlowConfig flow;
  double t_max_scale = 0.0;  // > 0: t_max = scale * d^max(1, s*-1)
  int record_points = 0;     // > 0: record_dt = t_max / record_points
  int fit_drop_smallest = 0;
  std::optional<RkhsConfig> rkhs;
  std::string output_dir = ".";
  json raw;
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error(ErrorKind::ParseError, where + ": unknown key '" + k + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, where + "." + key + ": " + e.what());
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = get<T>(j, key, where);
}

inline Model parse_model(const std::string& s) {
  if (s == "grassmann") return Model::Grassmann;
  if (s == "stiefel") return Model::Stiefel;
  throw Error(ErrorKind::ParseError, "model must be 'grassmann' or 'stiefel', got '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  check_keys(j, {"scenario", "target", "model", "r", "dims", "seeds", "flow", "fit", "rkhs", "output_dir"}, "config");
  ExperimentConfig c;
  c.raw = j;
  c.scenario = get<std::string>(j, "scenario", "config");
  if (j.contains("target")) {
    c.target = j.at("target");
    check_keys(c.target, {"gallery", "params", "coefficients", "ridge"}, "target");
    const int kinds = int(c.target.contains("gallery")) + int(c.target.contains("coefficients")) + int(c.target.contains("ridge"));
    if (kinds != 1) throw Error(ErrorKind::ParseError, "target: exactly one of gallery, coefficients, ridge");
  } else {
    c.target = json{{"gallery", c.scenario}};
  }
  if (j.contains("model")) c.model = parse_model(get<std::string>(j, "model", "config"));
  get_opt(j, "r", c.r, "config");
  c.dims = get<std::vector<int>>(j, "dims", "config");
  if (c.dims.empty()) throw Error(ErrorKind::ParseError, "dims: empty");
  for (std::size_t i = 0; i < c.dims.size(); ++i)
    if (c.dims[i] < 1 || (i && c.dims[i] <= c.dims[i - 1])) throw Error(ErrorKind::ParseError, "dims must be positive and strictly increasing");
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    check_keys(s, {"count", "base"}, "seeds");
    get_opt(s, "count", c.seed_count, "seeds");
    get_opt(s, "base", c.seed_base, "seeds");
    if (c.seed_count < 1) throw Error(ErrorKind::ParseError, "seeds.count must be >= 1");
  }
  if (j.contains("flow")) {
    const json& f = j.at("flow");
    check_keys(f, {"dt", "t_max", "t_max_scale", "eta", "record_every", "record_dt", "record_points", "adapt", "rtol", "atol",
                   "dt_max", "grad_stop", "monotone_slack"},
               "flow");
    FlowConfig& fc = c.flow;
    get_opt(f, "dt", fc.dt, "flow");
    get_opt(f, "t_max", fc.t_max, "flow");
    get_opt(f, "t_max_scale", c.t_max_scale, "flow");
    get_opt(f, "eta", fc.eta, "flow");
    get_opt(f, "record_every", fc.record_every, "flow");
    get_opt(f, "record_dt", fc.record_dt, "flow");
    get_opt(f, "record_points", c.record_points, "flow");
    get_opt(f, "adapt", fc.adapt, "flow");
    get_opt(f, "rtol", fc.rtol, "flow");
    get_opt(f, "atol", fc.atol, "flow");
    get_opt(f, "dt_max", fc.dt_max, "flow");
    get_opt(f, "grad_stop", fc.grad_stop, "flow");
    get_opt(f, "monotone_slack", fc.monotone_slack, "flow");
    try {
      fc.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, std::string("flow: ") + e.what());
    }
  }
  if (j.contains("fit")) {
    check_keys(j.at("fit"), {"drop_smallest"}, "fit");
    get_opt(j.at("fit"), "drop_smallest", c.fit_drop_smallest, "fit");
  }
  if (j.contains("rkhs")) {
    const json& k = j.at("rkhs");
    check_keys(k, {"mu", "k_max", "mode"}, "rkhs");
    RkhsConfig rk;
    get_opt(k, "mu", rk.mu, "rkhs");
    get_opt(k, "k_max", rk.k_max, "rkhs");
    std::string mode = "target";
    get_opt(k, "mode", mode, "rkhs");
    if (mode == "link")
      rk.mode = ShrinkMode::Link;
    else if (mode != "target")
      throw Error(ErrorKind::ParseError, "rkhs.mode must be 'target' or 'link'");
    c.rkhs = rk;
  }
  get_opt(j, "output_dir", c.output_dir, "config");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return parse_config(j);
}

/// FNV-1a 64 of the canonical (key-sorted, compact) dump, as 16 hex digits.
inline std::string config_hash(const json& raw) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : raw.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// Target described by a config, with the gallery's model as default.
inline std::pair<Target, Model> build_target(const ExperimentConfig& c) {
  const json& t = c.target;
  Target target;
  Model model = Model::Grassmann;
  if (t.contains("gallery")) {
    const std::string name = detail::get<std::string>(t, "gallery", "target");
    model = gallery_entry(name).model;
    target = gallery(name, t.value("params", json::object()));
  } else if (t.contains("coefficients")) {
    // {"q": 2, "terms": [[[2,0], 1.0], ...]}
    const json& cj = t.at("coefficients");
    detail::check_keys(cj, {"q", "terms"}, "target.coefficients");
    const int q = detail::get<int>(cj, "q", "target.coefficients");
    if (q < 1) throw Error(ErrorKind::ParseError, "target.coefficients.q must be >= 1");
    HermiteFunction f(q);
    try {
      for (const auto& term : cj.at("terms")) {
        const auto b = term.at(0).get<std::vector<int>>();
        if (static_cast<int>(b.size()) != q) throw Error(ErrorKind::ParseError, "target.coefficients: index length differs from q");
        f.add(MultiIndex(b), term.at(1).get<double>());
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, std::string("target.coefficients.terms: ") + e.what());
    }
    target = Target::coefficient(f);
  } else {
    // {"Z": [...], "s": int, "dirs": [[...], ...]}; directions default to roots of unity
    const json& rj = t.at("ridge");
    detail::check_keys(rj, {"Z", "dirs", "s"}, "target.ridge");
    RidgeSum g;
    g.Z = detail::get<std::vector<double>>(rj, "Z", "target.ridge");
    g.s = detail::get<int>(rj, "s", "target.ridge");
    if (rj.contains("dirs")) {
      const auto dirs = detail::get<std::vector<std::vector<double>>>(rj, "dirs", "target.ridge");
      if (dirs.size() != g.Z.size() || dirs.empty()) throw Error(ErrorKind::ParseError, "target.ridge: one direction per weight");
      g.dirs.resize(static_cast<Eigen::Index>(dirs[0].size()), static_cast<Eigen::Index>(dirs.size()));
      for (std::size_t j = 0; j < dirs.size(); ++j) {
        if (dirs[j].size() != dirs[0].size()) throw Error(ErrorKind::ParseError, "target.ridge: directions differ in length");
        for (std::size_t i = 0; i < dirs[j].size(); ++i) g.dirs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dirs[j][i];
      }
    } else {
      g.dirs = roots_of_unity(static_cast<int>(g.Z.size()));
    }
    target = Target::ridge(std::move(g));
    model = Model::Stiefel;
  }
  if (c.model) model = *c.model;
  if (c.rkhs) {
    if (target.kind() != Target::Kind::Coefficient)
      throw Error(ErrorKind::UnsupportedTargetKind, "rkhs shrinkage needs a coefficient target");
    const auto spec = KernelSpectrum::standard(target.q(), c.rkhs->mu, c.rkhs->k_max);
    target = Target::coefficient(ridge_shrink(target.coeff_part(), spec, c.rkhs->mode));
  }
  return {std::move(target), model};
}

/// Cascade of the materialized target; empty when the target cannot be expanded.
inline std::optional<CascadeReport> target_cascade(const Target& t) {
  try {
    const HermiteFunction f = t.materialize();
    if (gradient_gram(f).norm() == 0.0) return std::nullopt;
    return leap_decomposition(f);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Running

struct CellResult {
  int d = 0;
  std::uint64_t seed = 0;
  std::map<int, double> escapes;
  std::optional<double> t_recover;  // first time with ||WW^T - W*W*^T||^2 <= 1e-4
  Eigen::VectorXd final_lambda;
  double final_loss = 0;
  double final_grad = 0;
  double t_end = 0;
  bool converged = false;
  long accepted = 0, rejected = 0;
  bool failed = false;
  ErrorKind error_kind = ErrorKind::ParseError;
  std::string error;
};

inline constexpr double kRecoverLevel = 1e-4;

/// Squared Frobenius distance between the projectors, from the cosines.
inline double projector_distance2(const Eigen::VectorXd& lambda, int q, int r) {
  return q + r - 2.0 * lambda.squaredNorm();
}

inline std::optional<double> recovery_time(const FlowTrace& tr, int q, int r, double level = kRecoverLevel) {
  double prev_t = 0, prev_v = 0;
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    const double v = projector_distance2(tr.samples[i].lambda, q, r);
    if (v <= level) {
      if (i == 0) return tr.samples[0].t;
      return prev_t + (prev_v - level) / (prev_v - v) * (tr.samples[i].t - prev_t);
    }
    prev_t = tr.samples[i].t;
    prev_v = v;
  }
  return std::nullopt;
}

struct RunResult {
  int exit_code = 0;
  std::string message;
  std::filesystem::path out_dir;
  std::vector<CellResult> cells;
  json escapes, cascade, fit;
};

inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n));
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
  };
  if (w == 1) {
    loop();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < w; ++k) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
}

inline int default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n ? static_cast<int>(n) : 1;
}

inline json lambda_json(const Eigen::VectorXd& l) {
  json a = json::array();
  for (Eigen::Index i = 0; i < l.size(); ++i) a.push_back(l(i));
  return a;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Medians and log-log slopes from an escapes document. Runs that never
/// escape count as +infinity; a stage is fitted only when every median is finite.
inline json fit_from_escapes(const json& esc) {
  const json& meta = esc.at("meta");
  const int drop = meta.value("fit_drop_smallest", 0);
  std::map<int, std::map<double, std::vector<double>>> taus;  // stage -> d -> values
  std::map<double, std::vector<double>> recover, loss;
  std::map<double, int> runs, recovered, trapped;
  const int stages = meta.at("stages").get<int>();
  const bool has_trap = meta.contains("trap_level");
  const double trap_level = has_trap ? meta.at("trap_level").get<double>() : 0.0;
  for (const auto& c : esc.at("cells")) {
    const double d = c.at("d").get<double>();
    ++runs[d];
    for (int k = 1; k <= stages; ++k) {
      const std::string key = std::to_string(k);
      taus[k][d].push_back(c.at("escapes").contains(key) ? c.at("escapes").at(key).get<double>() : std::numeric_limits<double>::infinity());
    }
    if (!c.at("t_recover").is_null()) {
      ++recovered[d];
      recover[d].push_back(c.at("t_recover").get<double>());
    } else {
      recover[d].push_back(std::numeric_limits<double>::infinity());
    }
    loss[d].push_back(c.at("final_loss").get<double>());
    if (has_trap && c.at("converged").get<bool>() && c.at("final_loss").get<double>() <= trap_level) ++trapped[d];
  }
  json out;
  out["meta"] = meta;
  json st = json::array();
  for (int k = 1; k <= stages; ++k) {
    json s;
    s["stage"] = k;
    std::map<double, double> med;
    bool finite = true;
    json per = json::object();
    for (const auto& [d, v] : taus[k]) {
      const double m = median(v);
      const int key = static_cast<int>(d);
      per[std::to_string(key)] = std::isfinite(m) ? json(m) : json(nullptr);
      finite = finite && std::isfinite(m);
      med[d] = m;
    }
    s["median_tau"] = per;
    if (finite && med.size() >= static_cast<std::size_t>(3 + drop)) {
      const auto f = fit_exponent(med, drop);
      s["slope"] = f.slope;
      s["std_error"] = f.std_error;
      s["intercept"] = f.intercept;
    } else {
      s["slope"] = nullptr;
    }
    st.push_back(s);
  }
  out["stages"] = st;
  json pl = json::object();
  for (const auto& [d, n] : runs) {
    json row;
    const double m = median(recover[d]);
    row["runs"] = n;
    row["recovered_fraction"] = static_cast<double>(recovered[d]) / n;
    row["median_recovery_time"] = std::isfinite(m) ? json(m) : json(nullptr);
    row["median_final_loss"] = median(loss[d]);
    if (has_trap) row["trapped_fraction"] = static_cast<double>(trapped[d]) / n;
    pl[std::to_string(static_cast<int>(d))] = row;
  }
  out["planted"] = pl;
  return out;
}

inline void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorKind::ParseError, "cannot write " + p.string());
  os << j.dump(2) << '\n';
}

/// Runs every (d, seed) cell and writes traces/, escapes.json, cascade.json
/// and fit.json under out_root / cfg.output_dir.
inline RunResult run_experiment(const ExperimentConfig& cfg, int workers, const std::filesystem::path& out_root) {
  RunResult res;
  const auto [target, model] = build_target(cfg);
  const std::string hash = config_hash(cfg.raw);
  const int q = target.q();
  const int r = cfg.r > 0 ? cfg.r : q;
  if (r < q) throw Error(ErrorKind::ParseError, "r must be >= q");
  if (model == Model::Stiefel && r != q) throw Error(ErrorKind::ParseError, "stiefel model needs r = q");
  for (int d : cfg.dims)
    if (d < r) throw Error(ErrorKind::ParseError, "every d must be >= r");
  const auto cascade = target_cascade(target);
  std::vector<int> dims_k;
  if (cascade)
    dims_k = stage_dims(*cascade);
  else
    for (int k = 1; k <= q; ++k) dims_k.push_back(k);
  const int s_star = cascade ? cascade->s_star : 2;

  res.out_dir = out_root / cfg.output_dir;
  std::filesystem::create_directories(res.out_dir / "traces");

  std::vector<std::pair<int, std::uint64_t>> jobs;
  for (int d : cfg.dims)
    for (int k = 0; k < cfg.seed_count; ++k) jobs.emplace_back(d, cfg.seed_base + static_cast<std::uint64_t>(k));
  res.cells.resize(jobs.size());

  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    auto [d, seed] = jobs[i];
    CellResult& cell = res.cells[i];
    cell.d = d;
    cell.seed = seed;
    try {
      FlowConfig fc = cfg.flow;
      fc.seed = seed;
      if (cfg.t_max_scale > 0) fc.t_max = cfg.t_max_scale * std::pow(static_cast<double>(d), std::max(1, s_star - 1));
      if (cfg.record_points > 0) fc.record_dt = fc.t_max / cfg.record_points;
      const Frame Ws = canonical_frame(d, q);
      const auto tr = integrate(model, target, Ws, init_uniform(d, r, seed), fc);
      cell.escapes = escape_times(tr, dims_k, fc.eta);
      cell.t_recover = recovery_time(tr, q, r);
      const auto& last = tr.samples.back();
      cell.final_lambda = last.lambda;
      cell.final_loss = last.loss;
      cell.final_grad = last.grad_norm;
      cell.t_end = last.t;
      cell.converged = tr.converged;
      cell.accepted = tr.accepted;
      cell.rejected = tr.rejected;
      std::ofstream os(res.out_dir / "traces" / ("trace_d" + std::to_string(d) + "_seed" + std::to_string(seed) + ".csv"),
                       std::ios::binary);
      write_trace_csv(os, tr, hash, seed);
    } catch (const Error& e) {
      cell.failed = true;
      cell.error_kind = e.kind();
      cell.error = e.what();
    }
  });

  json meta{{"config_hash", hash},
            {"seed", cfg.seed_base},
            {"scenario", cfg.scenario},
            {"model", to_string(model)},
            {"q", q},
            {"r", r},
            {"eta", cfg.flow.eta},
            {"stages", static_cast<int>(dims_k.size())},
            {"stage_dims", dims_k},
            {"fit_drop_smallest", cfg.fit_drop_smallest}};
  if (target.ridge_part() && target.has_coefficients()) {
    // the mixed target is maximized at M = I; a trapped run ends below it
    const double l_max = target.correlation(Eigen::MatrixXd::Identity(q, q));
    meta["l_max"] = l_max;
    meta["trap_level"] = l_max - 2.0 / 3.0 * target.weight();
  }

  json cells = json::array();
  for (const auto& c : res.cells) {
    json e = json::object();
    for (const auto& [k, tau] : c.escapes) e[std::to_string(k)] = tau;
    json row{{"d", c.d}, {"seed", c.seed}, {"escapes", e}};
    if (c.failed) {
      row["error"] = c.error;
    } else {
      row["t_recover"] = c.t_recover ? json(*c.t_recover) : json(nullptr);
      row["final_lambda"] = lambda_json(c.final_lambda);
      row["final_loss"] = c.final_loss;
      row["final_grad_norm"] = c.final_grad;
      row["t_end"] = c.t_end;
      row["converged"] = c.converged;
      row["steps"] = {{"accepted", c.accepted}, {"rejected", c.rejected}};
    }
    cells.push_back(row);
  }
  res.escapes = json{{"meta", meta}, {"cells", cells}};
  write_json(res.out_dir / "escapes.json", res.escapes);

  res.cascade = json{{"meta", {{"config_hash", hash}, {"seed", cfg.seed_base}}}};
  if (cascade)
    res.cascade["cascade"] = to_json(*cascade);
  else
    res.cascade["cascade"] = nullptr;
  write_json(res.out_dir / "cascade.json", res.cascade);

  for (const auto& c : res.cells)
    if (c.failed) {
      const bool numeric = c.error_kind == ErrorKind::NonFiniteState || c.error_kind == ErrorKind::StepRejected;
      res.exit_code = numeric ? 3 : 1;
      res.message = "cell d=" + std::to_string(c.d) + " seed=" + std::to_string(c.seed) + " failed: " + c.error;
      return res;
    }

  res.fit = fit_from_escapes(res.escapes);
  write_json(res.out_dir / "fit.json", res.fit);
  return res;
}

}  // namespace hermflow
