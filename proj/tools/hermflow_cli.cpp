// hermflow command line: run experiments, list the gallery, refit escapes, self-check.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hermflow/checks.hpp"
#include "hermflow/experiment.hpp"

namespace fs = std::filesystem;
using namespace hermflow;

namespace {

int cmd_run(const std::string& config_path, int workers, std::optional<std::uint64_t> seed, const std::string& out) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    if (seed) {
      cfg.seed_base = *seed;
      cfg.raw["seeds"]["base"] = *seed;
      cfg.raw["seeds"]["count"] = cfg.seed_count;
    }
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  try {
    const auto res = run_experiment(cfg, workers, out);
    if (res.exit_code) {
      std::cerr << res.message << '\n';
      return res.exit_code;
    }
    std::cout << "wrote " << (res.out_dir / "escapes.json").string() << ", cascade.json, fit.json and "
              << res.cells.size() << " traces\n";
    for (const auto& st : res.fit.at("stages")) {
      std::cout << "  stage " << st.at("stage") << ": median tau " << st.at("median_tau").dump();
      if (!st.at("slope").is_null()) std::cout << ", slope " << st.at("slope").get<double>();
      std::cout << '\n';
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::ParseError || e.kind() == ErrorKind::UnknownScenario ? 2 : 1;
  }
}

int cmd_gallery(bool list) {
  if (!list) {
    std::cerr << "gallery: use --list\n";
    return 2;
  }
  for (const auto& e : gallery_list()) std::cout << e.name << "  [" << to_string(e.model) << "]  " << e.summary << '\n';
  return 0;
}

int cmd_fit(const std::string& path, const std::string& out) {
  json esc;
  try {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot read " + path);
    esc = json::parse(in);
    const json fit = fit_from_escapes(esc);
    if (!out.empty()) {
      fs::create_directories(out);
      write_json(fs::path(out) / "fit.json", fit);
    }
    std::cout << fit.dump(2) << '\n';
    return 0;
  } catch (const json::exception& e) {
    std::cerr << "fit: malformed escapes file: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "fit: " << e.what() << '\n';
    return e.kind() == ErrorKind::ParseError ? 2 : 1;
  }
}

int cmd_check() {
  int failed = 0;
  for (const auto& r : run_checks()) {
    std::cout << (r.ok ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.detail << ")\n";
    failed += !r.ok;
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hermflow: Hermite multi-index gradient flow laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  int workers = default_workers();
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("--workers", workers, "worker threads for independent cells")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "override the base seed of the config");
  app.add_option("--out", out, "root directory for outputs");

  std::string config_path;
  auto* run = app.add_subcommand("run", "integrate every (d, seed) cell of a config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();

  bool list = false;
  auto* gal = app.add_subcommand("gallery", "named targets");
  gal->add_flag("--list", list, "list gallery items");

  std::string escapes_path;
  auto* fit = app.add_subcommand("fit", "medians and exponent fits from an escapes.json");
  fit->add_option("escapes", escapes_path, "escapes.json written by run")->required();

  auto* check = app.add_subcommand("check", "run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*run) return cmd_run(config_path, workers, *seed_opt ? std::optional(seed) : std::nullopt, out.empty() ? "." : out);
  if (*gal) return cmd_gallery(list);
  if (*fit) return cmd_fit(escapes_path, out);
  if (*check) return cmd_check();
  return 2;
}
