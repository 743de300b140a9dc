#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "swsteer/app.hpp"

using namespace swsteer;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("swsteer_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json small_doc(const fs::path& out_dir) {
  return json{
      {"sim",
       {{"Td", 50}, {"N", 200}, {"seed", 7}, {"record_every", 10}}},
      {"dirs", {{"count", 64}}},
      {"outputs", {{"dir", out_dir.string()}, {"prefix", "t"}}},
  };
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing is strict about keys and values", "[app]") {
  CHECK_THROWS_AS(parse_config(json{{"simulation", json::object()}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"sim", {{"Teddy", 3}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"sim", {{"Td", 0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"sim", {{"Td", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"problem", {{"T", -1.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"sim", {{"controller", "warp"}}}}),
                  ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/path.json"), ConfigError);

  try {
    parse_config(json{{"sim", {{"Teddy", 3}}}});
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("Teddy") != std::string::npos);
  }

  const AppConfig cfg = parse_config(json::object());
  CHECK(cfg.horizon == 1.0);
  CHECK(cfg.sim.particles == 5000);
  CHECK(cfg.m0[0] == -2.0);
  CHECK(cfg.sigmaf(1, 1) == 0.04);
}

TEST_CASE("steer writes the documented artifacts", "[app]") {
  const fs::path dir = temp_dir("steer");
  AppConfig cfg = parse_config(small_doc(dir));
  std::ostringstream log;
  REQUIRE(cmd_steer(cfg, log) == 0);

  const fs::path snapshots = dir / "t_snapshots.csv";
  const fs::path moments = dir / "t_moments.csv";
  const fs::path manifest_path = dir / "t_manifest.json";
  REQUIRE(fs::exists(snapshots));
  REQUIRE(fs::exists(moments));
  REQUIRE(fs::exists(dir / "t_energy.txt"));
  REQUIRE(fs::exists(manifest_path));

  const auto snap_rows = read_csv(snapshots);
  CHECK(snap_rows.front() ==
        std::vector<std::string>{"t", "particle_id", "x_1", "x_2"});
  // 50/10 snapshots plus the initial one, 200 particles each, plus header.
  CHECK(snap_rows.size() == 1 + 200 * 6);

  const auto moment_rows = read_csv(moments);
  REQUIRE(moment_rows.size() == 7);
  CHECK(moment_rows[0] ==
        std::vector<std::string>{"t", "m_1", "m_2", "Sigma_11", "Sigma_12",
                                 "Sigma_21", "Sigma_22"});
  // The t = 0 row reproduces the configured initial moments up to sampling.
  CHECK(std::stod(moment_rows[1][0]) == 0.0);
  CHECK(std::abs(std::stod(moment_rows[1][1]) - (-2.0)) <= 0.5);
  CHECK(std::abs(std::stod(moment_rows[1][2]) - 2.0) <= 0.5);
  CHECK(std::abs(std::stod(moment_rows[1][3]) - 1.0) <= 0.6);

  json manifest;
  std::ifstream(manifest_path) >> manifest;
  CHECK(manifest["command"] == "steer");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest.contains("energy"));
  for (const auto& item : manifest["outputs"].items()) {
    CHECK(fs::exists(fs::path(item.value().get<std::string>())));
  }
}

TEST_CASE("steer reports collinear min-energy paths", "[app]") {
  const fs::path dir = temp_dir("steer_me");
  json doc = small_doc(dir);
  doc["sim"]["controller"] = "min-energy";
  AppConfig cfg = parse_config(doc);
  std::ostringstream log;
  REQUIRE(cmd_steer(cfg, log) == 0);
  json manifest;
  std::ifstream(dir / "t_manifest.json") >> manifest;
  REQUIRE(manifest.contains("paths_collinear"));
  CHECK(manifest["paths_collinear"].get<bool>());
  CHECK(manifest["max_chord_deviation"].get<double>() <= 1e-9);
}

TEST_CASE("steer can emit the pure Gaussian flow", "[app]") {
  const fs::path dir = temp_dir("steer_flow");
  json doc = small_doc(dir);
  doc["sim"]["controller"] = "ideal-affine";
  doc["sim"]["particles"] = false;
  doc["sim"]["flow_steps"] = 400;
  AppConfig cfg = parse_config(doc);
  std::ostringstream log;
  REQUIRE(cmd_steer(cfg, log) == 0);
  const auto rows = read_csv(dir / "t_moments.csv");
  REQUIRE(rows.size() >= 3);
  // Terminal row is snapped to the target moments.
  const auto& last = rows.back();
  CHECK(std::stod(last[0]) == 1.0);
  CHECK(std::stod(last[1]) == -8.0);
  CHECK(std::stod(last[3]) == 0.1);
  CHECK(!fs::exists(dir / "t_snapshots.csv"));
}

TEST_CASE("steer output bytes are reproducible across thread counts",
          "[app]") {
  const fs::path dir1 = temp_dir("steer_r1");
  const fs::path dir2 = temp_dir("steer_r2");
  json doc1 = small_doc(dir1);
  doc1["sim"]["N"] = 4096;
  json doc2 = doc1;
  doc2["outputs"]["dir"] = dir2.string();
  doc2["sim"]["threads"] = 4;
  std::ostringstream log;
  REQUIRE(cmd_steer(parse_config(doc1), log) == 0);
  REQUIRE(cmd_steer(parse_config(doc2), log) == 0);
  CHECK(slurp(dir1 / "t_snapshots.csv") == slurp(dir2 / "t_snapshots.csv"));
  CHECK(slurp(dir1 / "t_moments.csv") == slurp(dir2 / "t_moments.csv"));
  CHECK(slurp(dir1 / "t_energy.txt") == slurp(dir2 / "t_energy.txt"));
}

TEST_CASE("compare emits per-controller series and ellipses", "[app]") {
  const fs::path dir = temp_dir("compare");
  json doc = small_doc(dir);
  doc["sim"]["compare_Td"] = 100;
  doc["sim"]["N"] = 500;
  AppConfig cfg = parse_config(doc);
  std::ostringstream log;
  REQUIRE(cmd_compare(cfg, log) == 0);

  const auto ellipse = read_csv(dir / "t_ellipse.csv");
  CHECK(ellipse.front() ==
        std::vector<std::string>{"controller", "t", "vertex_index", "x_1",
                                 "x_2"});
  CHECK(ellipse.size() == 1 + 3 * 11 * 64);

  // min-energy covariance at t = T is the exact affine pushforward of
  // Sigma0, which equals Sigmaf.
  const auto rows = read_csv(dir / "t_moments_min-energy.csv");
  const auto& last = rows.back();
  CHECK(std::stod(last[0]) == 1.0);
  CHECK(std::abs(std::stod(last[3]) - 0.1) <= 1e-6);
  CHECK(std::abs(std::stod(last[4]) - 0.0) <= 1e-6);
  CHECK(std::abs(std::stod(last[6]) - 0.04) <= 1e-6);

  REQUIRE(fs::exists(dir / "t_moments_iterative-sliced.csv"));
  REQUIRE(fs::exists(dir / "t_moments_ideal-affine.csv"));
  REQUIRE(fs::exists(dir / "t_manifest.json"));
}

TEST_CASE("compare rejects non-planar problems", "[app]") {
  const fs::path dir = temp_dir("compare3d");
  json doc = small_doc(dir);
  doc["problem"] = {{"m0", {0.0, 0.0, 0.0}},
                    {"mf", {1.0, 1.0, 1.0}},
                    {"Sigma0", {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}},
                    {"Sigmaf", {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}},
                    {"T", 1.0}};
  doc["dirs"] = {{"scheme", "monte-carlo"}, {"count", 64}, {"seed", 1}};
  AppConfig cfg = parse_config(doc);
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_compare(cfg, log), ConfigError);
}

TEST_CASE("check command writes the report and encodes the verdict", "[app]") {
  const fs::path dir = temp_dir("check");
  json doc = small_doc(dir);
  // Cheap but honest settings for everything except the known-red
  // convergence budget, which needs the deep cutoff to pass.
  doc["check"] = {{"flow_steps", 1000}, {"epsilon", 1e-10},
                  {"times", {0.3}},     {"property_pairs", 2},
                  {"oracle_grid", 20000}};
  AppConfig cfg = parse_config(doc);
  std::ostringstream log;
  const int code = cmd_check(cfg, log);
  INFO(log.str());
  CHECK(code == 0);

  json report;
  std::ifstream(dir / "t_report.json") >> report;
  REQUIRE(report.is_array());
  REQUIRE(report.size() == 5);
  for (const auto& r : report) {
    CHECK(r["status"] == "pass");
  }

  // At the documented cutoff eps = 1e-6 the covariance budget of 1e-3 is
  // not attainable (the flow's slow mode still carries ~1.43e-3); the
  // command must say so and exit 1.
  json doc_default = small_doc(temp_dir("check_default"));
  doc_default["check"] = {{"times", {0.3}},
                          {"property_pairs", 2},
                          {"oracle_grid", 20000}};
  std::ostringstream log2;
  const int code2 = cmd_check(parse_config(doc_default), log2);
  CHECK(code2 == 1);
  CHECK(log2.str().find("FAIL  gaussian-convergence") != std::string::npos);

  // Forcing a zero tolerance fails the energy identity.
  json doc_zero = small_doc(temp_dir("check_zero"));
  doc_zero["check"] = {{"flow_steps", 1000}, {"epsilon", 1e-10},
                       {"times", {0.3}},     {"property_pairs", 2},
                       {"oracle_grid", 20000}, {"energy_rtol", 0.0}};
  std::ostringstream log3;
  CHECK(cmd_check(parse_config(doc_zero), log3) == 1);
  CHECK(log3.str().find("FAIL  energy-identity") != std::string::npos);
}

#ifdef SWSTEER_CLI_PATH
TEST_CASE("command line maps errors to exit codes", "[app]") {
  const fs::path dir = temp_dir("cli");
  const std::string cli = SWSTEER_CLI_PATH;
  const auto run_cli = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };

  CHECK(run_cli("steer --config /nonexistent.json") == 2);

  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << R"({"sim": {"Td": 0}})";
  CHECK(run_cli("steer --config " + bad.string()) == 2);

  const fs::path good = dir / "good.json";
  std::ofstream(good) << small_doc(dir / "out").dump();
  CHECK(run_cli("steer --config " + good.string()) == 0);
  CHECK(fs::exists(dir / "out" / "t_manifest.json"));

  // --seed overrides the config seed and is echoed in the manifest.
  CHECK(run_cli("steer --config " + good.string() + " --seed 99 --out " +
                (dir / "out2").string()) == 0);
  json manifest;
  std::ifstream(dir / "out2" / "t_manifest.json") >> manifest;
  CHECK(manifest["seed"] == 99);
}
#endif
