#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hermflow/experiment.hpp"

using namespace hermflow;
namespace fs = std::filesystem;

namespace {

json small_config() {
  return json::parse(R"({
    "scenario": "timescale",
    "dims": [6, 8, 10],
    "seeds": {"count": 2, "base": 5},
    "flow": {"t_max": 300, "record_dt": 0.5},
    "output_dir": "small"
  })");
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hermflow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::optional<ErrorKind> parse_kind(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace

TEST(Config, ParsesDefaultsAndOverrides) {
  const auto c = parse_config(small_config());
  EXPECT_EQ(c.scenario, "timescale");
  EXPECT_EQ(c.target, (json{{"gallery", "timescale"}}));
  EXPECT_EQ(c.dims, (std::vector<int>{6, 8, 10}));
  EXPECT_EQ(c.seed_count, 2);
  EXPECT_EQ(c.seed_base, 5u);
  EXPECT_DOUBLE_EQ(c.flow.t_max, 300);
  EXPECT_DOUBLE_EQ(c.flow.record_dt, 0.5);
  EXPECT_FALSE(c.rkhs.has_value());
  EXPECT_FALSE(c.model.has_value());
}

TEST(Config, RejectsMalformedInput) {
  auto bad = [](auto edit) {
    json j = small_config();
    edit(j);
    return parse_kind(j);
  };
  EXPECT_EQ(bad([](json& j) { j["bogus"] = 1; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["flow"]["stepsize"] = 1; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["dims"] = json::array(); }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["dims"] = {8, 6}; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["dims"] = "8"; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["seeds"]["count"] = 0; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["flow"]["dt"] = -1; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["model"] = "euclid"; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["rkhs"] = {{"mode", "other"}}; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j["target"] = {{"gallery", "timescale"}, {"ridge", {}}}; }), ErrorKind::ParseError);
  EXPECT_EQ(bad([](json& j) { j.erase("scenario"); }), ErrorKind::ParseError);
}

TEST(Config, LoadReportsMissingAndBrokenFiles) {
  const auto dir = temp_dir("load");
  EXPECT_THROW(load_config(dir / "missing.json"), Error);
  std::ofstream(dir / "broken.json") << "{\"scenario\": ";
  try {
    load_config(dir / "broken.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
}

TEST(Config, HashIsStableAndSensitive) {
  const json a = small_config();
  const std::string h = config_hash(a);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, config_hash(json::parse(a.dump())));
  json b = a;
  b["seeds"]["base"] = 6;
  EXPECT_NE(h, config_hash(b));
}

TEST(Gallery, ListAndLookup) {
  const auto& items = gallery_list();
  EXPECT_GE(items.size(), 7u);
  for (const auto& e : items) {
    EXPECT_EQ(gallery_entry(e.name).name, e.name);
    EXPECT_NO_THROW(gallery(e.name));
  }
  try {
    gallery("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownScenario);
  }
  EXPECT_EQ(gallery_entry("planted_radial").model, Model::Stiefel);
  EXPECT_EQ(gallery_entry("timescale").model, Model::Grassmann);
}

TEST(Gallery, PlantedFailureParams) {
  const Target t = gallery("planted_failure", {{"N", 5}});
  ASSERT_TRUE(t.ridge_part().has_value());
  EXPECT_EQ(t.ridge_part()->s, failure_degree(5));
  EXPECT_GT(t.weight(), 0);
  const Target u = gallery("planted_failure", {{"N", 5}, {"eps", 0.25}});
  EXPECT_DOUBLE_EQ(u.weight(), 0.25);
}

TEST(BuildTarget, CoefficientsRidgeAndShrink) {
  json j = small_config();
  j["target"] = {{"coefficients", {{"q", 2}, {"terms", {{{1, 0}, 1.0}, {{1, 2}, 0.5}}}}}};
  auto [t, m] = build_target(parse_config(j));
  EXPECT_EQ(m, Model::Grassmann);
  EXPECT_DOUBLE_EQ(t.coeff_part().coeff(MultiIndex({1, 2})), 0.5);

  j["rkhs"] = {{"mu", 0.05}, {"k_max", 16}};
  auto [ts, ms] = build_target(parse_config(j));
  const double c3 = KernelSpectrum::standard(2, 0.05, 16).c(3);
  EXPECT_NEAR(ts.coeff_part().coeff(MultiIndex({1, 2})), 0.5 * std::sqrt(c3 / (c3 + 0.05)), 1e-14);

  j.erase("rkhs");
  j["target"] = {{"ridge", {{"Z", {1.0, 0.5, 0.25}}, {"s", 4}}}};
  auto [tr, mr] = build_target(parse_config(j));
  EXPECT_EQ(mr, Model::Stiefel);
  ASSERT_TRUE(tr.ridge_part().has_value());
  EXPECT_EQ(tr.ridge_part()->s, 4);

  j["target"] = {{"coefficients", {{"q", 2}, {"terms", {{{1, 0, 1}, 1.0}}}}}};
  EXPECT_THROW(build_target(parse_config(j)), Error);
}

TEST(Run, WritesOutputsDeterministically) {
  const auto root = temp_dir("run");
  const auto cfg = parse_config(small_config());
  const auto a = run_experiment(cfg, 2, root / "a");
  const auto b = run_experiment(cfg, 1, root / "b");
  ASSERT_EQ(a.exit_code, 0) << a.message;
  ASSERT_EQ(b.exit_code, 0) << b.message;
  for (const char* f : {"escapes.json", "cascade.json", "fit.json", "traces/trace_d6_seed5.csv", "traces/trace_d10_seed6.csv"}) {
    ASSERT_TRUE(fs::exists(a.out_dir / f)) << f;
    EXPECT_EQ(slurp(a.out_dir / f), slurp(b.out_dir / f)) << f;
  }
  const json esc = json::parse(slurp(a.out_dir / "escapes.json"));
  EXPECT_EQ(esc.at("meta").at("config_hash"), config_hash(cfg.raw));
  EXPECT_EQ(esc.at("cells").size(), 6u);
  EXPECT_EQ(esc.at("meta").at("stages"), 2);
  const std::string csv = slurp(a.out_dir / "traces/trace_d6_seed5.csv");
  EXPECT_NE(csv.find(config_hash(cfg.raw)), std::string::npos);

  // refitting the written escapes gives the same fit
  EXPECT_EQ(fit_from_escapes(esc), a.fit);
  ASSERT_EQ(a.fit.at("stages").size(), 2u);
  EXPECT_FALSE(a.fit.at("stages").at(0).at("slope").is_null());
}

TEST(Run, RejectsBadDimensions) {
  const auto root = temp_dir("baddims");
  json j = small_config();
  j["dims"] = {1, 6};
  EXPECT_THROW(run_experiment(parse_config(j), 1, root), Error);
  j = small_config();
  j["scenario"] = "planted_radial";
  j["r"] = 3;
  EXPECT_THROW(run_experiment(parse_config(j), 1, root), Error);
}

TEST(Run, NumericalFailureGivesExitCode3) {
  const auto root = temp_dir("fail");
  json j = small_config();
  j["dims"] = {6};
  j["seeds"]["count"] = 1;
  j["flow"] = {{"t_max", 50}, {"adapt", false}, {"dt", 50}};
  const auto res = run_experiment(parse_config(j), 1, root);
  EXPECT_EQ(res.exit_code, 3) << res.message;
  EXPECT_NE(res.message.find("d=6 seed=5"), std::string::npos);
}

TEST(Fit, PlantedSectionAndInfiniteMedians) {
  json esc = {{"meta", {{"stages", 1}, {"trap_level", 1.0}}}, {"cells", json::array()}};
  auto cell = [](int d, json tau, json trec, double loss, bool conv) {
    json e = json::object();
    if (!tau.is_null()) e["1"] = tau;
    return json{{"d", d}, {"seed", 0}, {"escapes", e}, {"t_recover", trec}, {"final_loss", loss}, {"converged", conv}};
  };
  esc["cells"] = {cell(10, 1.0, 2.0, 0.5, true), cell(10, nullptr, nullptr, 1.5, true), cell(10, nullptr, nullptr, 0.9, false),
                  cell(20, 4.0, 3.0, 0.2, true)};
  const json f = fit_from_escapes(esc);
  EXPECT_TRUE(f.at("stages").at(0).at("median_tau").at("10").is_null());
  EXPECT_DOUBLE_EQ(f.at("stages").at(0).at("median_tau").at("20").get<double>(), 4.0);
  EXPECT_TRUE(f.at("stages").at(0).at("slope").is_null());
  const json& p10 = f.at("planted").at("10");
  EXPECT_EQ(p10.at("runs"), 3);
  EXPECT_NEAR(p10.at("recovered_fraction").get<double>(), 1.0 / 3, 1e-15);
  EXPECT_NEAR(p10.at("trapped_fraction").get<double>(), 1.0 / 3, 1e-15);
  EXPECT_DOUBLE_EQ(p10.at("median_final_loss").get<double>(), 0.9);
}

TEST(Fit, SlopeOfPowerLaw) {
  json esc = {{"meta", {{"stages", 1}}}, {"cells", json::array()}};
  for (int d : {8, 16, 32, 64})
    esc["cells"].push_back({{"d", d}, {"seed", 0}, {"escapes", {{"1", 3.0 * d * d}}}, {"t_recover", nullptr}, {"final_loss", 0.0}, {"converged", true}});
  const json f = fit_from_escapes(esc);
  EXPECT_NEAR(f.at("stages").at(0).at("slope").get<double>(), 2.0, 1e-12);
  EXPECT_FALSE(f.at("planted").at("8").contains("trapped_fraction"));
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(37);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_DOUBLE_EQ(median({3, 1, 2, 4}), 2.5);
}
