#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "rotor_engine/io.hpp"
#include "rotor_engine/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rotor;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rotor_engine_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + ROTOR_ENGINE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_classical(const fs::path& out) {
  return {{"scenario", "classical-compare"},
          {"seed", 17},
          {"output_dir", out.string()},
          {"engine", {{"g", 10.0}, {"kappa", 1.0}, {"n_h", 1.0}, {"n_c", 0.1}}},
          {"rotor", {{"inertia", 10.0}, {"l_min", -10}, {"l_max", 10}}},
          {"classical", {{"n_traj", 1000}, {"t_end", 0.2}, {"output_dt", 0.1}}}};
}

bool dir_empty(const fs::path& p) { return !fs::exists(p) || fs::is_empty(p); }

}  // namespace

TEST(Cli, MalformedJsonIsConfigError) {
  const fs::path d = scratch("malformed");
  std::ofstream(d / "bad.json") << "{ \"scenario\": ";
  EXPECT_EQ(run_cli("run " + (d / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("validate " + (d / "bad.json").string()), 2);
}

TEST(Cli, UnknownKeyRejectedWithoutOutput) {
  const fs::path d = scratch("unknown");
  json j = small_classical(d / "out");
  j["classical"]["n_trajectories"] = 5;
  write_json(d / "c.json", j);
  EXPECT_EQ(run_cli("run " + (d / "c.json").string()), 2);
  EXPECT_TRUE(dir_empty(d / "out"));
}

TEST(Cli, NegativeKappaRejectedWithoutOutput) {
  const fs::path d = scratch("kappa");
  json j = small_classical(d / "out");
  j["engine"]["kappa"] = -1.0;
  write_json(d / "c.json", j);
  EXPECT_EQ(run_cli("run " + (d / "c.json").string()), 2);
  EXPECT_TRUE(dir_empty(d / "out"));
}

TEST(Cli, ParseConfigRejectsBadValues) {
  json j = small_classical("x");
  j["engine"]["n_h"] = "hot";
  EXPECT_THROW(runner::parse_config(j), runner::ConfigError);
  j = small_classical("x");
  j["scenario"] = "nope";
  EXPECT_THROW(runner::parse_config(j), runner::ConfigError);
  j = small_classical("x");
  j["classical"]["n_traj"] = 10;
  EXPECT_THROW(runner::parse_config(j), runner::ConfigError);
  j = small_classical("x");
  j["rotor"]["l_min"] = 3;
  EXPECT_THROW(runner::parse_config(j), runner::ConfigError);
}

TEST(Cli, MissingCommandLineArgumentsAreConfigErrors) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("run"), 2);
  EXPECT_EQ(run_cli("run /nonexistent/config.json"), 4);
}

TEST(Cli, ClassicalRerunIsByteIdentical) {
  const fs::path d = scratch("rerun");
  write_json(d / "c.json", small_classical(d / "a"));
  ASSERT_EQ(run_cli("run " + (d / "c.json").string()), 0);
  ASSERT_EQ(run_cli("run " + (d / "c.json").string() + " --output-dir " + (d / "b").string() + " --threads 2"), 0);
  const std::string a = slurp(d / "a" / "classical_compare.csv");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(d / "b" / "classical_compare.csv"));

  // A different seed changes the numbers and the hash.
  ASSERT_EQ(run_cli("run " + (d / "c.json").string() + " --output-dir " + (d / "s").string() + " --seed 18"), 0);
  EXPECT_NE(a, slurp(d / "s" / "classical_compare.csv"));
}

TEST(Cli, MetadataCarriesConfigHash) {
  const fs::path d = scratch("meta");
  const json j = small_classical(d / "out");
  write_json(d / "c.json", j);
  ASSERT_EQ(run_cli("run " + (d / "c.json").string()), 0);
  const json meta = json::parse(slurp(d / "out" / "classical_compare.meta.json"));
  EXPECT_EQ(meta.at("config_hash").get<std::string>(), runner::config_hash(runner::parse_config(j).effective));
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 17u);
  EXPECT_EQ(meta.at("scenario"), "classical-compare");
  EXPECT_EQ(meta.at("n_traj"), 1000);
  EXPECT_TRUE(meta.contains("code_version"));

  const io::CsvTable t = io::read_csv(d / "out" / "classical_compare.csv");
  EXPECT_EQ(t.header.front(), "t_kappa");
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0][0], 0.0);
}

TEST(Cli, ValidateDoesNotWrite) {
  const fs::path d = scratch("validate");
  write_json(d / "c.json", small_classical(d / "out"));
  EXPECT_EQ(run_cli("validate " + (d / "c.json").string()), 0);
  EXPECT_TRUE(dir_empty(d / "out"));
}

TEST(Cli, ShippedConfigsValidate) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(ROTOR_ENGINE_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    ++n;
    EXPECT_EQ(run_cli("validate " + e.path().string()), 0) << e.path();
  }
  EXPECT_EQ(n, 5);
}

TEST(Cli, AutonomousTransientRuns) {
  const fs::path d = scratch("transient");
  const json j = {{"scenario", "autonomous-transient"},
                  {"output_dir", (d / "out").string()},
                  {"rotor", {{"l_min", -40}, {"l_max", 60}, {"t_end", 1.0}, {"output_dt", 0.5}}}};
  write_json(d / "c.json", j);
  ASSERT_EQ(run_cli("run " + (d / "c.json").string()), 0);
  const io::CsvTable t = io::read_csv(d / "out" / "timeline.csv");
  EXPECT_EQ(t.header, io::timeline_columns());
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_NEAR(t.rows[2][0], 1.0, 1e-12);
}

TEST(Cli, DrivenSweepSlowRow) {
  const fs::path d = scratch("sweep");
  const json j = {{"scenario", "driven-sweep"},
                  {"output_dir", (d / "out").string()},
                  {"driven", {{"omega", {0.01, 1.0}}}}};
  write_json(d / "c.json", j);
  ASSERT_EQ(run_cli("run " + (d / "c.json").string()), 0);
  const io::CsvTable t = io::read_csv(d / "out" / "driven_sweep.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"omega_over_kappa", "W_cyc_over_hg", "Qh_cyc_over_hw0", "eta_normalized"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], 0.01);
  EXPECT_NEAR(t.rows[0][1], 0.31, 0.01);
  EXPECT_TRUE(fs::exists(d / "out" / "driven_sweep.meta.json"));
}

TEST(Timeline, EmptyTimelineWritesHeaderOnly) {
  const fs::path d = scratch("empty");
  io::emit_timeline(autonomous::ObservableTimeline{}, d / "t.csv");
  const io::CsvTable t = io::read_csv(d / "t.csv");
  EXPECT_EQ(t.header, io::timeline_columns());
  EXPECT_TRUE(t.rows.empty());
}

TEST(Timeline, SingleRowRoundTrips) {
  const fs::path d = scratch("row");
  autonomous::ObservableTimeline tl;
  autonomous::PowerReport r;
  r.t = 0.1;
  r.mean_L = 1.0 / 3.0;
  r.std_L = 2.5e-17;
  r.W_int = -0.125;
  r.W_erg_rate = 1e300;
  r.edge_pop = 3.3e-9;
  tl.rows.push_back(r);
  io::emit_timeline(tl, d / "t.csv");
  const io::CsvTable t = io::read_csv(d / "t.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0], io::timeline_row(r));
}
