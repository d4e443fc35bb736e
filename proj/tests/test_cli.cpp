#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "burstscale/experiment.hpp"
#include "burstscale/sim.hpp"
#include "burstscale/trace.hpp"

using namespace burstscale;
namespace fs = std::filesystem;

namespace {

const std::string kQuick =
    " --set engine.rl_episodes=3 --set engine.perf_samples=200 --set forecaster.iterations=50"
    " --set rl.rollout_length=64 --set rl.hidden=8 --set rl.validation_episodes=1";

struct Result {
  int code = -1;
  std::string output;
};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("burstscale_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Result cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = "cd '" + dir.string() + "' && '" CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("ingest standardizes a CSV") {
  const auto dir = scratch("ingest");
  write_file(dir / "in.csv", "timestamp,value\n0,1\n3600,2\n7200,3\n");
  const auto r = cli("ingest --csv in.csv -o out.csv", dir);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("length 3") != std::string::npos);
  const auto tr = trace::load_trace(dir / "out.csv");
  REQUIRE(tr.size() == 3);
  CHECK(tr[0] == doctest::Approx(325));
  CHECK(tr[1] == doctest::Approx(500));
  CHECK(tr[2] == doctest::Approx(675));
  REQUIRE(cli("ingest --csv in.csv --no-standardize -o raw.csv", dir).code == 0);
  CHECK(trace::load_trace(dir / "raw.csv").values() == std::vector<double>{1, 2, 3});
}

TEST_CASE("ingest reports the malformed row with exit code 2") {
  const auto dir = scratch("badrow");
  std::string text = "timestamp,value\n";
  for (int i = 0; i < 16; ++i) text += std::to_string(3600 * i) + ",5\n";
  text += "57600,abc\n";  // data row 17
  write_file(dir / "bad.csv", text);
  const auto r = cli("ingest --csv bad.csv -o out.csv", dir);
  CHECK(r.code == 2);
  CHECK(r.output.find("row 17") != std::string::npos);
  CHECK(cli("ingest --csv missing.csv -o out.csv", dir).code != 0);
  CHECK(cli("ingest -o out.csv", dir).code == 2);
}

TEST_CASE("run with the hpa variant needs no trained models") {
  const auto dir = scratch("hpa");
  const auto r = cli("run --variant hpa --trace '" DATA_DIR "/periodic.csv' --seeds 1 --out r", dir);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("violation_rate") != std::string::npos);
  std::ifstream steps(dir / "r" / "periodic_hpa_1_steps.csv");
  const auto log = sim::read_step_log(steps);
  REQUIRE(!log.empty());
  for (const auto& s : log) CHECK(s.decision_path == "baseline");
  const auto report = nlohmann::json::parse(slurp(dir / "r" / "periodic_hpa_1_report.json"));
  const auto m = sim::compute_metrics(log, 16.0);
  CHECK(report.at("metrics").at("violation_rate").get<double>() == m.violation_rate);
  CHECK(report.at("metrics").at("cost").get<double>() == m.cost);
  CHECK(report.contains("run_config"));
}

TEST_CASE("train is deterministic and its models drive a bascaler run") {
  const auto dir = scratch("train");
  const std::string args = "train --trace '" DATA_DIR "/periodic.csv' --seeds 1 --variants bascaler" + kQuick;
  const auto again = scratch("train_again");
  REQUIRE(cli(args + " --out m1", dir).code == 0);
  REQUIRE(cli(args + " --out m1", again).code == 0);
  for (const char* f : {"forecaster.json", "perfmodel.json", "agent_bascaler.json"}) {
    CHECK(fs::exists(dir / "m1" / f));
    CHECK(slurp(dir / "m1" / f) == slurp(again / "m1" / f));
  }
  const auto r = cli("run --variant bascaler --trace '" DATA_DIR "/periodic.csv' --seeds 1 --models m1 --out r" + kQuick,
                     dir);
  REQUIRE(r.code == 0);
  std::ifstream steps(dir / "r" / "periodic_bascaler_1_steps.csv");
  const auto log = sim::read_step_log(steps);
  REQUIRE(!log.empty());
  for (const auto& s : log) CHECK(!s.decision_path.empty());
}

TEST_CASE("configuration errors exit with code 2") {
  const auto dir = scratch("config");
  write_file(dir / "bad.json", R"({"rl": {"nonsense": 1}})");
  CHECK(cli("compare --config bad.json", dir).code == 2);
  CHECK(cli("compare --set rl.beta=7 --trace '" DATA_DIR "/periodic.csv'", dir).code == 2);
  CHECK(cli("train --trace nowhere.csv", dir).code != 0);
}

TEST_CASE("compare writes one row per variant plus improvement rows") {
  const auto dir = scratch("compare");
  const auto r = cli("compare -q --trace '" DATA_DIR "/periodic.csv' --variants bascaler hpa --seeds 1 2 3 --out c" + kQuick,
                     dir);
  REQUIRE(r.code == 0);
  std::ifstream csv(dir / "c" / "comparison.csv");
  std::string line;
  std::vector<std::string> rows;
  std::getline(csv, line);
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("variant,bascaler,periodic,3,", 0) == 0);
  CHECK(rows[1].rfind("variant,hpa,periodic,3,", 0) == 0);
  CHECK(rows[2].rfind("improvement,bascaler_vs_hpa,periodic,3,", 0) == 0);
  for (const char* metric : {"violation_rate", "cost", "errors", "rt_variance"})
    CHECK(fs::exists(dir / "c" / "plots" / ("plot_" + std::string(metric) + ".csv")));

  // Rerunning from the embedded config reproduces the table exactly.
  REQUIRE(cli("compare -q --config c/comparison.json --out c2", dir).code == 0);
  CHECK(slurp(dir / "c2" / "comparison.csv") == slurp(dir / "c" / "comparison.csv"));
}
