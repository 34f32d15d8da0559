#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "mlq/common.hpp"
#include "mlq/io.hpp"
#include "mlq/runner.hpp"

using namespace mlq;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Cli {
  int code = -1;
  std::string out, err;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mlq_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Cli run_cli(const fs::path& work, const std::string& args) {
  const std::string o = (work / "stdout.txt").string(), e = (work / "stderr.txt").string();
  const std::string cmd = std::string(MLQ_CLI_PATH) + " " + args + " > " + o + " 2> " + e;
  const int status = std::system(cmd.c_str());
  Cli r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(o);
  r.err = read_file(e);
  while (!r.out.empty() && r.out.back() == '\n') r.out.pop_back();
  return r;
}

std::string config_file(const fs::path& work, const json& c) {
  const auto p = (work / "config.json").string();
  write_file(p, c.dump());
  return p;
}

json strip_timestamp(json j) {
  j.erase("timestamp");
  return j;
}

}  // namespace

TEST(Cli, VolumeLawReportsSusceptibilityAndKs) {
  const auto w = scratch("volume");
  const auto cfg = config_file(w, {{"gamma", 0.8}, {"beta", 0.0}, {"mu", 1.0}, {"genus", 2}, {"draws", 100000}});
  const auto r = run_cli(w, "volume-law --config " + cfg + " --seed 5 --out " + (w / "runs").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(read_file(r.out + "/report.json"));
  EXPECT_NEAR(rep["results"]["values"]["s"].get<double>(), 7.25, 1e-12);
  EXPECT_LT(rep["results"]["values"]["ks"].get<double>(), rep["results"]["values"]["ks_critical_1pct"].get<double>());
  EXPECT_TRUE(rep.contains("timestamp"));
  const auto rows = parse_csv(read_file(r.out + "/data.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][0], "moment");
}

TEST(Cli, FiniteMassBoundIsAConfigError) {
  const auto w = scratch("bound");
  const auto cfg = config_file(w, {{"gamma", 1.0}, {"beta", 5.0}, {"mu", 1.0}, {"genus", 2}, {"draws", 100000}});
  const auto r = run_cli(w, "volume-law --config " + cfg + " --out " + (w / "runs").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("beta < (h-1)/2 (4/gamma^2 - gamma^2/4) = 1.875"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(w / "runs"));
}

TEST(Cli, ModelConstantsHaveNoDefaults) {
  const auto w = scratch("nodefaults");
  for (const char* drop : {"gamma", "beta", "mu", "genus"}) {
    json c = {{"gamma", 0.8}, {"beta", 0.0}, {"mu", 1.0}, {"genus", 2}, {"draws", 10000}};
    c.erase(drop);
    const auto r = run_cli(w, "volume-law --config " + config_file(w, c));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(std::string("'") + drop + "'"), std::string::npos) << r.err;
  }
  const auto typo = run_cli(w, "volume-law --config " +
                                   config_file(w, {{"gamma", 0.8}, {"beta", 0.0}, {"mu", 1.0}, {"genus", 2},
                                                   {"draws", 10000}, {"drawz", 1}}));
  EXPECT_EQ(typo.code, 2);
  EXPECT_NE(typo.err.find("unknown key 'drawz'"), std::string::npos);
  // dgmc gamma range, then a cutoff finer than two cells
  const json steep = {{"N", 32}, {"area", 1.0}, {"genus", 2}, {"samples", 4}, {"cutoffs", {2.0}}, {"gamma", 1.5}};
  const json fine = {{"N", 32}, {"area", 1.0}, {"genus", 2}, {"samples", 4}, {"cutoffs", {4.0}}, {"gamma", 0.5}};
  EXPECT_THROW(validate_config("dgmc", steep), ConfigError);
  EXPECT_THROW(validate_config("gmc", fine), ConfigError);
}

TEST(Cli, NumericalFailureExitsWithThree) {
  const auto w = scratch("numerical");
  const auto cfg = config_file(w, {{"N", 16}, {"area", 1.0}, {"genus", 2}, {"samples", 10}, {"cutoff", 1.5},
                                   {"gamma", 0.5}, {"min_hits", 20}});
  const auto r = run_cli(w, "tails-dgmc --config " + cfg + " --out " + (w / "runs").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("numerical error"), std::string::npos);
}

TEST(Cli, LoopExpansionTable) {
  const auto w = scratch("loop");
  const auto cfg = config_file(w, {{"kappas", {10}}, {"beta", 0.0}, {"genus", 2}});
  const auto r = run_cli(w, "loop-expansion --config " + cfg + " --out " + (w / "runs").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(read_file(r.out + "/data.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(std::stod(rows[1][2]), 50.812418, 1e-6);
}

TEST(Cli, ReplayIdenticalThenTampered) {
  const auto w = scratch("replay");
  const auto cfg = config_file(w, {{"N", 32}, {"area", 1.0}, {"genus", 2}, {"samples", 16}, {"cutoffs", {2.0, 2.5}},
                                   {"gamma", 0.5}});
  const std::string out = (w / "runs").string();
  const auto first = run_cli(w, "dgmc --config " + cfg + " --seed 9 --out " + out);
  ASSERT_EQ(first.code, 0) << first.err;
  const std::string csv = read_file(first.out + "/data.csv");
  const json rep = json::parse(read_file(first.out + "/report.json"));
  // rerun into the same directory: byte-identical data, report equal up to the timestamp
  const auto again = run_cli(w, "dgmc --config " + cfg + " --seed 9 --out " + out);
  EXPECT_EQ(again.out, first.out);
  EXPECT_EQ(read_file(again.out + "/data.csv"), csv);
  EXPECT_EQ(strip_timestamp(json::parse(read_file(again.out + "/report.json"))), strip_timestamp(rep));

  auto r = run_cli(w, "replay " + first.out);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "identical");

  std::string bad = csv;
  bad[bad.find('\n') + 3] = bad[bad.find('\n') + 3] == '1' ? '2' : '1';
  write_file(first.out + "/data.csv", bad);
  r = run_cli(w, "replay " + first.out);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.out, "diverged: data.csv");

  fs::remove(first.out + "/data.csv");
  r = run_cli(w, "replay " + first.out);
  EXPECT_EQ(r.code, 2);

  const auto other = run_cli(w, "dgmc --config " + cfg + " --seed 10 --out " + out);
  EXPECT_NE(other.out, first.out);
  EXPECT_TRUE(fs::exists(first.out + "/report.json"));
}

TEST(Cli, JsonFormatAndThreadIndependence) {
  const auto w = scratch("format");
  const json c = {{"N", 32}, {"area", 1.0}, {"genus", 2}, {"samples", 12}, {"cutoffs", {2.0}}, {"gamma", 0.7}};
  const auto a = write_run((w / "a").string(), "gmc", c, 3, 1, "json");
  const auto b = write_run((w / "b").string(), "gmc", c, 3, 3, "json");
  EXPECT_EQ(fs::path(a).filename(), fs::path(b).filename());
  EXPECT_EQ(read_file(a + "/data.json"), read_file(b + "/data.json"));
  const json data = json::parse(read_file(a + "/data.json"));
  ASSERT_EQ(data.size(), 12u);
  EXPECT_TRUE(data[0].contains("g"));
  EXPECT_TRUE(replay_run(b, 2).identical);
}

TEST(Cli, EverySubcommandReplays) {
  const auto w = scratch("all");
  std::set<std::string> seen;
  for (const auto& c : smoke_configs()) {
    SCOPED_TRACE(c.subcommand);
    const auto dir = write_run(w.string(), c.subcommand, c.config, c.seed, 1, "csv");
    EXPECT_TRUE(replay_run(dir, 1).identical);
    seen.insert(c.subcommand);
  }
  EXPECT_EQ(seen.size(), subcommands().size());
}

TEST(Csv, Rfc4180Quoting) {
  DataTable t{{"name", "value"}, {{"a,b", 1.5}, {"say \"hi\"", 2}}};
  EXPECT_EQ(t.csv(), "name,value\n\"a,b\",1.5\n\"say \"\"hi\"\"\",2\n");
  const auto rows = parse_csv(t.csv());
  EXPECT_EQ(rows[2][0], "say \"hi\"");
}
