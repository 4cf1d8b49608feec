#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nvdnp/cli.hpp"
#include "nvdnp/io.hpp"

namespace fs = std::filesystem;
using namespace nvdnp;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nvdnp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("nvdnp-cli-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::vector<std::vector<double>> read_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) r.push_back(std::stod(c));
    rows.push_back(r);
  }
  return rows;
}

nlohmann::json error_line(const std::string& err) {
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1) << err;
  return nlohmann::json::parse(err);
}

}  // namespace

TEST_F(CliTest, ListPresets) {
  const Result r = run_cli({"list-presets"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* s : {"table-a1-fit", "table-a1-n", "table-a1-bz", "table-a1-fig4", "686.5546 kHz", "215.3535 kHz",
                        "625 kHz", "25 kHz", "20 us", "300 ns", "8 MHz", "2.87 GHz", "2.8 MHz/G", "1.07 kHz/G", "swept"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;

  const Result j = run_cli({"list-presets", "--json"});
  ASSERT_EQ(j.code, 0);
  const auto all = nlohmann::json::parse(j.out);
  ASSERT_EQ(all.size(), 4u);
  for (const auto& p : all) EXPECT_EQ(p["rates"]["gamma_gl"].get<double>(), 8e6);
  for (const auto& p : all)
    if (p["name"] == "table-a1-n") {
      EXPECT_EQ(p["swept"], nlohmann::json::array({"n_cycles"}));
      EXPECT_DOUBLE_EQ(std::abs(p["params"]["a_zz"].get<double>()), 686.5546e3);
    }
}

TEST_F(CliTest, SweepDetuningWritesArtifacts) {
  const Result r = run_cli({"sweep-detuning", "--preset", "table-a1-fit", "--min", "-800000", "--max", "800000",
                            "--step", "20000", "--out", dir_.string(), "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_rows(dir_ / "sweep.csv");
  ASSERT_EQ(rows.size(), 81u);
  double best = 0.0;
  for (const auto& row : rows) best = std::max(best, std::abs(row[1]));
  EXPECT_GE(best, 0.80);
  EXPECT_TRUE(slurp(dir_ / "sweep.csv").starts_with("delta_hz,P\n"));
  EXPECT_TRUE(fs::exists(dir_ / "plot.gp"));

  const auto meta = nlohmann::json::parse(slurp(dir_ / "meta.json"));
  EXPECT_EQ(meta["schema"], 1);
  EXPECT_EQ(meta["subcommand"], "sweep-detuning");
  EXPECT_EQ(meta["files"]["sweep.csv"], git_blob_hash(slurp(dir_ / "sweep.csv")));
  EXPECT_EQ(meta["config"]["based_on_preset"], "table-a1-fit");
  EXPECT_EQ(meta["config"]["params"]["a_zz"].get<double>(), -686.5546e3);
}

TEST_F(CliTest, MetadataReproducesRun) {
  ASSERT_EQ(run_cli({"sweep-detuning", "--min", "0", "--max", "400000", "--step", "50000", "--out", out("a")}).code, 0);
  const auto meta = nlohmann::json::parse(slurp(dir_ / "a" / "meta.json"));
  nlohmann::json config = meta["config"];
  config.erase("based_on_preset");
  std::ofstream(dir_ / "replay.json") << config.dump();
  const Result r = run_cli({"sweep-detuning", "--config", out("replay.json"), "--out", out("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "a" / "sweep.csv"), slurp(dir_ / "b" / "sweep.csv"));
}

TEST_F(CliTest, MetadataRecordsAniListAndInnerGrid) {
  ASSERT_EQ(run_cli({"sweep-field-ani", "--min", "600", "--max", "640", "--step", "40", "--ani", "0,100000",
                     "--inner-half-width", "200000", "--inner-step", "100000", "--out", out("a")})
                .code,
            0);
  const auto meta = nlohmann::json::parse(slurp(dir_ / "a" / "meta.json"));
  EXPECT_EQ(meta["config"]["a_ani_values"], nlohmann::json({0.0, 100000.0}));
  EXPECT_EQ(meta["config"]["inner_delta_hz"]["step"], 100000.0);
  nlohmann::json config = meta["config"];
  config.erase("based_on_preset");
  std::ofstream(dir_ / "replay.json") << config.dump();
  ASSERT_EQ(run_cli({"sweep-field-ani", "--config", out("replay.json"), "--out", out("b")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "sweep.csv"), slurp(dir_ / "b" / "sweep.csv"));
}

TEST_F(CliTest, DeterministicAcrossWorkers) {
  for (const char* w : {"1", "3"})
    ASSERT_EQ(run_cli({"sweep-field", "--min", "500", "--max", "700", "--step", "100", "--inner-half-width", "300000",
                       "--inner-step", "50000", "--workers", w, "--out", out(std::string("f") + w)})
                  .code,
              0);
  EXPECT_EQ(slurp(dir_ / "f1" / "sweep.csv"), slurp(dir_ / "f3" / "sweep.csv"));
}

TEST_F(CliTest, SweepNZeroCycles) {
  const Result r = run_cli({"sweep-n", "--preset", "table-a1-fit", "--n", "0", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "sweep.csv"), "n_cycles,P\n0,0\n");
}

TEST_F(CliTest, FitCurveClosedLoop) {
  ASSERT_EQ(run_cli({"sweep-detuning", "--min", "-1000000", "--max", "1000000", "--step", "40000", "--out", out("sweep")}).code, 0);
  const Result r = run_cli({"fit-curve", "--data", out("sweep/sweep.csv"), "--out", out("fit"), "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto fit = nlohmann::json::parse(slurp(dir_ / "fit" / "fit.json"));
  EXPECT_NEAR(fit["params"]["a_zz_magnitude_hz"].get<double>(), 686.5546e3, 0.01 * 686.5546e3);
  EXPECT_NEAR(fit["params"]["a_ani_hz"].get<double>(), 215.3535e3, 0.01 * 215.3535e3);
  EXPECT_NEAR(fit["params"]["f_rel_hz"].get<double>(), 0.0, 1e3);
  EXPECT_TRUE(fit["converged"].get<bool>());
  EXPECT_TRUE(slurp(dir_ / "fit" / "fit.csv").starts_with("delta_hz,P,P_model\n"));
}

TEST_F(CliTest, FitCurveBudgetExhausted) {
  ASSERT_EQ(run_cli({"sweep-detuning", "--min", "-1000000", "--max", "1000000", "--step", "100000", "--out", out("sweep")}).code, 0);
  const Result r = run_cli({"fit-curve", "--data", out("sweep/sweep.csv"), "--max-evaluations", "3", "--out", out("fit")});
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(error_line(r.err)["error"], "fit");
  EXPECT_TRUE(fs::exists(dir_ / "fit" / "fit.json"));
}

TEST_F(CliTest, RamseyFromPopulations) {
  const Result r = run_cli({"ramsey", "--populations", "0.9,0.1", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto fit = nlohmann::json::parse(slurp(dir_ / "fit.json"));
  EXPECT_NEAR(fit["lorentzian"]["P"].get<double>(), 0.8, 0.02);
  EXPECT_NEAR(fit["time_domain"]["P"].get<double>(), 0.8, 0.02);
  EXPECT_TRUE(slurp(dir_ / "signal.csv").starts_with("t_ns,s\n"));
  EXPECT_TRUE(slurp(dir_ / "spectrum.csv").starts_with("f_hz,magnitude\n"));
}

TEST_F(CliTest, TrajectoryDump) {
  const Result r = run_cli({"trajectory", "--n", "1", "--delta", "300000", "--interval", "100", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_rows(dir_ / "trajectory.csv");
  EXPECT_EQ(rows.size(), 36u);
  EXPECT_EQ(rows.back()[0], 3430.0);
}

TEST_F(CliTest, ConfigFile) {
  const nlohmann::json cfg = {{"schema", 1},
                              {"preset", "table-a1-fit"},
                              {"sequence", {{"n_cycles", 2}}},
                              {"axes", {{"delta_hz", {{"min", 0}, {"max", 100000}, {"step", 50000}}}}}};
  std::ofstream(dir_ / "c.json") << cfg.dump();
  const Result r = run_cli({"sweep-detuning", "--config", out("c.json"), "--out", out("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_rows(dir_ / "o" / "sweep.csv").size(), 3u);
  const auto meta = nlohmann::json::parse(slurp(dir_ / "o" / "meta.json"));
  EXPECT_EQ(meta["config"]["sequence"]["n_cycles"], 2);
}

TEST_F(CliTest, ConfigErrors) {
  auto with_config = [&](const nlohmann::json& cfg) {
    std::ofstream(dir_ / "bad.json") << cfg.dump();
    return run_cli({"sweep-detuning", "--config", out("bad.json"), "--out", out("o")});
  };
  for (const nlohmann::json& cfg :
       {nlohmann::json{{"schema", 2}}, nlohmann::json{{"preset", "table-a1-fit"}},
        nlohmann::json{{"schema", 1}, {"preset", "table-a1-fit"}, {"params", {{"b_z", 500}}}},
        nlohmann::json{{"schema", 1}, {"bogus", 1}},
        nlohmann::json{{"schema", 1}, {"axes", {{"delta_hz", {{"min", 1}, {"max", 0}, {"step", 1}}}}}},
        nlohmann::json{{"schema", 1}, {"params", {{"a_ani", "big"}}}}}) {
    const Result r = with_config(cfg);
    EXPECT_EQ(r.code, 2) << cfg.dump();
    EXPECT_EQ(error_line(r.err)["exit"], 2);
  }
  std::ofstream(dir_ / "junk.json") << "{not json";
  EXPECT_EQ(run_cli({"sweep-detuning", "--config", out("junk.json")}).code, 2);
  EXPECT_EQ(run_cli({"sweep-detuning", "--config", out("missing.json")}).code, 2);
}

TEST_F(CliTest, UsageErrors) {
  Result r = run_cli({"sweep-detuning", "--preset", "nope", "--out", dir_.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_line(r.err)["error"], "config");
  r = run_cli({"sweep-detuning", "--step", "0", "--out", dir_.string()});
  EXPECT_EQ(r.code, 2);
  r = run_cli({"no-such-command"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_line(r.err)["error"], "usage");
  r = run_cli({"sweep-detuning", "--workers", "0"});
  EXPECT_EQ(r.code, 2);
  r = run_cli({"fit-curve"});
  EXPECT_EQ(r.code, 2);
  r = run_cli({"ramsey", "--manifold", "0", "--populations", "0.5,0.5", "--out", dir_.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, NumericalErrorExitCode) {
  // Parses fine; the simulation loses all m_s = 0 population.
  std::ofstream(dir_ / "huge.json") << R"({"schema":1,"params":{"a_ani":1e300}})";
  const Result r = run_cli({"sweep-detuning", "--config", out("huge.json"), "--min", "0", "--max", "0", "--step", "1",
                            "--out", out("o")});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(error_line(r.err)["error"], "numerical");

  std::ofstream(dir_ / "neg.json") << R"({"schema":1,"params":{"a_ani":-5}})";
  const Result neg = run_cli({"sweep-detuning", "--config", out("neg.json"), "--out", out("o")});
  EXPECT_EQ(neg.code, 2);
  EXPECT_EQ(error_line(neg.err)["error"], "config");
}

TEST_F(CliTest, OutputRootFromEnvironment) {
  ::setenv(cli::kOutRootEnv, dir_.c_str(), 1);
  const Result r = run_cli({"sweep-n", "--n", "1", "--delta", "300000"});
  ::unsetenv(cli::kOutRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "sweep-n" / "sweep.csv"));
}

TEST_F(CliTest, ToolBinaryExitCodes) {
  const std::string tool = NVDNP_TOOL;
  const std::string cmd = tool + " sweep-detuning --preset nope 2>" + out("err.txt") + " >/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_EQ(error_line(slurp(dir_ / "err.txt"))["error"], "config");
  EXPECT_EQ(std::system((tool + " list-presets >/dev/null").c_str()), 0);
}
