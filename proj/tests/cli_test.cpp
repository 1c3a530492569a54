// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "cli_support.hpp"
#include "json.hpp"
#include "topoflow/dataset.hpp"
#include "topoflow/errors.hpp"
#include "topoflow/io.hpp"
#include "topoflow/rng.hpp"

namespace topoflow::cli {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string output;
};

// Runs the CLI in `dir` with stdout and stderr captured together.
CliRun cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const std::string cmd =
      "cd '" + dir.string() + "' && " + env + " '" + TOPOFLOW_CLI_PATH + "' " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("topoflow_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string slurp(const std::string& name) const { return read_file((dir_ / name).string()); }
  void put(const std::string& name, const std::string& text) const {
    write_file_atomic((dir_ / name).string(), text);
  }

  fs::path dir_;
};

constexpr const char* kTinyModel =
    " --d-model 8 --d-ff 16 --heads 2 --layers 1 --epochs 2 --batch-size 4 --probe-size 4 --quiet";

// --- in-process pieces ------------------------------------------------------

TEST(ConfigTextTest, ParsesKeysCommentsAndUnderscores) {
  const auto kv = parse_config_text("# run\nbatch_size = 8\n\n  lr=0.001  # inline\ntask = stack-2,sort-3\n", "x");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv.at("batch-size"), "8");
  EXPECT_EQ(kv.at("lr"), "0.001");
  EXPECT_EQ(kv.at("task"), "stack-2,sort-3");
}

TEST(ConfigTextTest, RejectsMalformedAndDuplicateLines) {
  try {
    parse_config_text("lr = 1\nno equals sign\n", "cfg.txt");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.txt:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config_text("lr = 1\nlr = 2\n", "c"), UsageError);
  EXPECT_THROW(parse_config_text(" = 2\n", "c"), UsageError);
}

TEST(CsvTest, RoundTripsQuotedFields) {
  Csv csv;
  csv.comments = {"note"};
  csv.header = {"a", "b"};
  csv.rows = {{"x,y", "say \"hi\""}, {"1", ""}};
  const Csv back = parse_csv(csv.str());
  EXPECT_EQ(back.comments, csv.comments);
  EXPECT_EQ(back.header, csv.header);
  EXPECT_EQ(back.rows, csv.rows);
}

TEST(CsvTest, WrongFieldCountNamesTheRow) {
  try {
    parse_csv("# c\na,b,c\n1,2,3\n4,5\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_csv("a,b\n\"open,2\n"), ParseError);
}

TEST(CsvTest, EmptyInputHasNoHeader) {
  const Csv csv = parse_csv("");
  EXPECT_TRUE(csv.header.empty());
  EXPECT_TRUE(csv.rows.empty());
}

TEST(FormatTest, ShortestTextRoundTrips) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<double>(rng.below(30)) - 15.0);
    EXPECT_EQ(std::strtod(fmt(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(fmt(0.25), "0.25");
  EXPECT_EQ(fmt(3.0), "3");
}

TEST(RenderTest, HeaderOnlyAndVerbatimRows) {
  const std::string empty = render_table({"task", "atp_mean"}, {});
  EXPECT_EQ(empty, "task  atp_mean\n----  --------\n");
  const std::string one = render_table({"task", "atp_mean"}, {{"sort-3", "0.50000"}});
  EXPECT_NE(one.find("sort-3  0.50000"), std::string::npos) << one;
}

TEST(RenderTest, GridAveragesMatchHandComputedMeans) {
  const Csv csv = parse_csv(
      "task,model_variant,atp_mean\n"
      "stack-2,full,0.8\nstack-2,NT,0.4\n"
      "sort-3,full,0.6\nsort-3,NT,0.1\n"
      "clear-table,full,0.7\nclear-table,NT,0.25\n");
  const std::string grid = render_grid(csv, "atp_mean");
  // full: (0.8 + 0.6 + 0.7) / 3 = 0.7; NT: (0.4 + 0.1 + 0.25) / 3 = 0.25.
  EXPECT_NE(grid.find("full     0.8      0.6     0.7          0.7"), std::string::npos) << grid;
  EXPECT_NE(grid.find("NT       0.4      0.1     0.25         0.25"), std::string::npos) << grid;
  const auto means = variant_means(csv);
  EXPECT_NEAR(means.at("full").at("atp_mean"), 0.7, 1e-15);
  EXPECT_NEAR(means.at("NT").at("atp_mean"), 0.25, 1e-15);
  EXPECT_TRUE(render_grid(parse_csv("a,b\n1,2\n"), "atp_mean").empty());
}

TEST(SvgTest, PlotsAreCompleteDocuments) {
  const std::string line = svg_line_plot("loss", "epoch", {{"flow", {0, 1, 2}, {3, 2, NAN}}});
  EXPECT_EQ(line.rfind("<svg", 0), 0u);
  EXPECT_NE(line.find("</svg>"), std::string::npos);
  EXPECT_NE(line.find("<polyline"), std::string::npos);
  const std::string bars = svg_bar_plot("atp", {"a", "b"}, {{"full", {}, {0.5, 1.0}}, {"NT", {}, {0.2, 0.0}}});
  EXPECT_NE(bars.find("</svg>"), std::string::npos);
}

// --- end to end -------------------------------------------------------------

TEST_F(CliTest, NoSubcommandIsUsageError) { EXPECT_EQ(cli("", dir_).code, kExitUsage); }

TEST_F(CliTest, UnknownFlagIsUsageError) { EXPECT_EQ(cli("gen-data --bogus 1", dir_).code, kExitUsage); }

TEST_F(CliTest, GenDataIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(cli("gen-data --task stack-2 --n 1000 --seed 7 --out a.jsonl", dir_).code, 0);
  const std::string first = slurp("a.jsonl"), manifest = slurp("a.jsonl.manifest.json");
  ASSERT_EQ(cli("gen-data --task stack-2 --n 1000 --seed 7 --out a.jsonl", dir_).code, 0);
  EXPECT_EQ(slurp("a.jsonl"), first);
  EXPECT_EQ(slurp("a.jsonl.manifest.json"), manifest);
  EXPECT_EQ(read_dataset((dir_ / "a.jsonl").string()).size(), 1000u);
}

TEST_F(CliTest, ManifestRecordsSeedCountsAndMix) {
  ASSERT_EQ(cli("gen-data --task stack-2,sort-3 --n 9 --seed 4 --out d.jsonl", dir_).code, 0);
  const auto m = nlohmann::json::parse(slurp("d.jsonl.manifest.json"));
  EXPECT_EQ(m.at("seed"), 4);
  EXPECT_EQ(m.at("n"), 9);
  EXPECT_EQ(m.at("counts").at("stack-2"), 5);
  EXPECT_EQ(m.at("counts").at("sort-3"), 4);
  EXPECT_NEAR(m.at("task_mix").at("sort-3").get<double>(), 4.0 / 9.0, 1e-15);
  EXPECT_EQ(m.at("version").get<std::string>(), version_string());
  EXPECT_EQ(m.at("run_config").at("values").at("task"), "stack-2,sort-3");
}

TEST_F(CliTest, RunConfigRegeneratesTheArtifact) {
  ASSERT_EQ(cli("gen-data --task sort-3 --n 12 --seed 21 --jitter 0.02 --out d.jsonl", dir_).code, 0);
  const auto m = nlohmann::json::parse(slurp("d.jsonl.manifest.json"));
  std::string cfg;
  for (const auto& [k, v] : m.at("run_config").at("values").items()) cfg += k + " = " + v.get<std::string>() + "\n";
  const std::string original = slurp("d.jsonl");
  fs::remove(dir_ / "d.jsonl");
  put("regen.cfg", cfg);
  ASSERT_EQ(cli("gen-data --config regen.cfg", dir_).code, 0);
  EXPECT_EQ(slurp("d.jsonl"), original);
}

TEST_F(CliTest, ConfigFileAppliesAndFlagsWin) {
  put("c.cfg", "n = 6\nseed = 3\nout = from_config.jsonl\n");
  ASSERT_EQ(cli("gen-data --config c.cfg --n 4", dir_).code, 0);
  EXPECT_EQ(read_dataset((dir_ / "from_config.jsonl").string()).size(), 4u);
  ASSERT_EQ(cli("gen-data --n 4 --seed 3 --out direct.jsonl", dir_).code, 0);
  const std::string a = slurp("from_config.jsonl"), b = slurp("direct.jsonl");
  // Same episodes; only the recorded output path differs in the header.
  EXPECT_EQ(a.substr(a.find('\n')), b.substr(b.find('\n')));
}

TEST_F(CliTest, UnknownConfigKeyListsValidKeys) {
  put("c.cfg", "n = 6\nepochs = 3\n");
  const CliRun r = cli("gen-data --config c.cfg", dir_);
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.output.find("unknown config key 'epochs'"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("valid keys: cameras, horizon, jitter, n, out, seed, task"), std::string::npos)
      << r.output;
}

TEST_F(CliTest, BadConfigValueIsUsageError) {
  put("c.cfg", "n = many\n");
  EXPECT_EQ(cli("gen-data --config c.cfg", dir_).code, kExitUsage);
  EXPECT_EQ(cli("gen-data --config missing.cfg", dir_).code, kExitUsage);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  ASSERT_EQ(cli("gen-data --n 5 --seed 99 --out flag.jsonl", dir_).code, 0);
  ASSERT_EQ(cli("gen-data --n 5 --out env.jsonl", dir_, "OPAL_SEED=99").code, 0);
  const std::string a = slurp("flag.jsonl"), b = slurp("env.jsonl");
  EXPECT_EQ(a.substr(a.find('\n')), b.substr(b.find('\n')));
  ASSERT_EQ(cli("gen-data --n 5 --seed 1 --out wins.jsonl", dir_, "OPAL_SEED=99").code, 0);
  const std::string c = slurp("wins.jsonl");
  EXPECT_NE(a.substr(a.find('\n')), c.substr(c.find('\n')));
  EXPECT_EQ(cli("gen-data --n 5 --out bad.jsonl", dir_, "OPAL_SEED=abc").code, kExitUsage);
}

TEST_F(CliTest, FailedCommandLeavesNoOutput) {
  const CliRun r = cli("gen-data --task juggling --n 5 --out never.jsonl", dir_);
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.output.find("juggling"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir_ / "never.jsonl"));
  EXPECT_FALSE(fs::exists(dir_ / "never.jsonl.manifest.json"));
  EXPECT_FALSE(fs::exists(dir_ / "never.jsonl.tmp"));
}

TEST_F(CliTest, MissingInputsNameThePath) {
  CliRun r = cli("train --data nowhere/demos.jsonl", dir_);
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.output.find("nowhere/demos.jsonl"), std::string::npos) << r.output;
  r = cli("eval --checkpoint gone.oplc", dir_);
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.output.find("gone.oplc"), std::string::npos) << r.output;
  r = cli("check-fusion --spec absent.fusion", dir_);
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.output.find("absent.fusion"), std::string::npos) << r.output;
  r = cli("report --in absent.csv", dir_);
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.output.find("absent.csv"), std::string::npos) << r.output;
}

TEST_F(CliTest, TrainIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(cli("gen-data --n 16 --seed 2 --out d.jsonl", dir_).code, 0);
  const std::string args = std::string("train --data d.jsonl --out run --seed 5") + kTinyModel;
  ASSERT_EQ(cli(args, dir_).code, 0);
  const std::string ck = slurp("run/checkpoint.oplc"), rep = slurp("run/train_report.json"),
                    curve = slurp("run/loss_curve.csv");
  ASSERT_EQ(cli(args, dir_).code, 0);
  EXPECT_EQ(slurp("run/checkpoint.oplc"), ck);
  EXPECT_EQ(slurp("run/train_report.json"), rep);
  EXPECT_EQ(slurp("run/loss_curve.csv"), curve);

  const auto report = nlohmann::json::parse(rep);
  EXPECT_EQ(report.at("epochs").size(), 2u);
  EXPECT_EQ(report.at("run_config").at("values").at("seed"), "5");
  EXPECT_EQ(report.at("checkpoint"), "checkpoint.oplc");
  const Csv c = parse_csv(curve);
  EXPECT_EQ(c.rows.size(), 3u);
  EXPECT_EQ(c.comments.at(0), "version: " + version_string());
  EXPECT_TRUE(fs::exists(dir_ / "run" / "timing.json"));
}

TEST_F(CliTest, ScalePresetRestoresLearningRateAndBatch) {
  ASSERT_EQ(cli("gen-data --n 4 --seed 2 --out d.jsonl", dir_).code, 0);
  ASSERT_EQ(cli(std::string("train --data d.jsonl --out p --paper-scale") + kTinyModel, dir_).code, 0);
  const auto values = nlohmann::json::parse(slurp("p/train_report.json")).at("run_config").at("values");
  EXPECT_EQ(std::stod(values.at("lr").get<std::string>()), 3e-4);
  EXPECT_EQ(values.at("batch-size"), "4");  // given explicitly, so it wins
}

TEST_F(CliTest, EvalWritesMetricsColumns) {
  ASSERT_EQ(cli("gen-data --n 8 --seed 2 --out d.jsonl", dir_).code, 0);
  ASSERT_EQ(cli(std::string("train --data d.jsonl --out run") + kTinyModel, dir_).code, 0);
  ASSERT_EQ(cli("eval --checkpoint run/checkpoint.oplc --episodes 2 --out m.csv", dir_).code, 0);
  const Csv m = parse_csv(slurp("m.csv"));
  EXPECT_EQ(m.header, (std::vector<std::string>{"task", "model_variant", "atp_mean", "violation_rate",
                                                 "d_phys_mean", "fn_evals", "wall_ms"}));
  ASSERT_EQ(m.rows.size(), 2u);
  EXPECT_EQ(m.rows[0][0], "stack-2");
  EXPECT_EQ(m.rows[0][1], "full");
  EXPECT_EQ(m.rows[0][5], "16");
  ASSERT_EQ(cli("eval --checkpoint run/checkpoint.oplc --episodes 2 --integrator euler --label NR --out e.csv",
                dir_)
                .code,
            0);
  const Csv e = parse_csv(slurp("e.csv"));
  EXPECT_EQ(e.rows[0][1], "NR");
  EXPECT_EQ(e.rows[0][5], "10");

  ASSERT_EQ(cli("sample --checkpoint run/checkpoint.oplc --n 3 --out s.jsonl", dir_).code, 0);
  const std::string s = slurp("s.jsonl");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
  ASSERT_EQ(cli("sample --checkpoint run/checkpoint.oplc --data d.jsonl --n 2 --out t.jsonl", dir_).code, 0);
  const std::string first = slurp("t.jsonl");
  ASSERT_EQ(cli("sample --checkpoint run/checkpoint.oplc --data d.jsonl --n 2 --out t.jsonl", dir_).code, 0);
  EXPECT_EQ(slurp("t.jsonl"), first);
}

TEST_F(CliTest, AblateEmitsFourVariantsPerTask) {
  ASSERT_EQ(cli("gen-data --n 8 --seed 2 --out d.jsonl", dir_).code, 0);
  const CliRun r = cli(std::string("ablate --data d.jsonl --out ab --episodes 1") + kTinyModel, dir_);
  ASSERT_EQ(r.code, 0) << r.output;
  const Csv csv = parse_csv(slurp("ab/ablation.csv"));
  ASSERT_EQ(csv.rows.size(), 8u);
  const std::vector<std::string> order{"full", "NT", "NR", "NH"};
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    EXPECT_EQ(csv.rows[i][0], i < 4 ? "stack-2" : "sort-3");
    EXPECT_EQ(csv.rows[i][1], order[i % 4]);
    EXPECT_EQ(csv.rows[i][5], order[i % 4] == "NR" ? "10" : "16");
  }
  for (const char* v : {"full", "NT", "NH"}) EXPECT_TRUE(fs::exists(dir_ / "ab" / v / "checkpoint.oplc"));
}

TEST_F(CliTest, BenchIntegratorsAnalytic) {
  const CliRun r = cli("bench-integrators --analytic --repeats 10 --out b.csv", dir_);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("euler-10: endpoint 0.3486784401, error 1.920e-02"), std::string::npos) << r.output;
  const Csv b = parse_csv(slurp("b.csv"));
  ASSERT_EQ(b.rows.size(), 2u);
  EXPECT_EQ(b.rows[0][3], "10");
  EXPECT_EQ(b.rows[1][3], "16");
  EXPECT_NEAR(std::stod(b.rows[0][4]), std::pow(0.9, 10), 1e-15);
  EXPECT_LE(std::stod(b.rows[1][5]), 2e-5);
}

TEST_F(CliTest, CheckFusionExitCodes) {
  const std::string good = std::string(TOPOFLOW_DATA_DIR) + "/fusion/blockworld.fusion";
  CliRun r = cli("check-fusion --spec '" + good + "' --out rep.json", dir_);
  EXPECT_EQ(r.code, 0) << r.output;
  const auto rep = nlohmann::json::parse(slurp("rep.json"));
  EXPECT_EQ(rep.at("pass"), true);
  EXPECT_EQ(rep.at("forbidden_transitions"), 30);

  put("bad.fusion", "types 2\n[F]\n1 0 1 1\n0 1 0 1\n[N]\n0 0 0 1\n0 0 1 1\n0 1 0 1\n0 1 1 1\n");
  r = cli("check-fusion --spec bad.fusion", dir_);
  EXPECT_EQ(r.code, kExitThreshold) << r.output;
  EXPECT_NE(r.output.find("BREACH"), std::string::npos);
  r = cli("check-fusion --spec bad.fusion --tol 5", dir_);
  EXPECT_EQ(r.code, 0) << r.output;

  put("broken.fusion", "types 2\n[F]\n0 0 0 2\n");
  EXPECT_EQ(cli("check-fusion --spec broken.fusion", dir_).code, kExitRuntime);
}

TEST_F(CliTest, DumpMaskMatchesForbiddenCells) {
  ASSERT_EQ(cli("dump-mask --out m.csv", dir_).code, 0);
  ASSERT_EQ(cli("dump-mask --what hard-zero --out z.csv", dir_).code, 0);
  const Csv m = parse_csv(slurp("m.csv")), z = parse_csv(slurp("z.csv"));
  ASSERT_EQ(m.rows.size(), 8u);
  EXPECT_EQ(m.header.at(1), "approach");
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 1; j < 9; ++j) EXPECT_EQ(m.rows[i][j] == "0", z.rows[i][j] == "1") << i << "," << j;
  EXPECT_EQ(cli("dump-mask --what other", dir_).code, kExitUsage);
}

TEST_F(CliTest, ReportRendersTables) {
  put("empty.csv", "");
  CliRun r = cli("report --in empty.csv", dir_);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.output,
            "task  model_variant  atp_mean  violation_rate  d_phys_mean  fn_evals  wall_ms\n"
            "----  -------------  --------  --------------  -----------  --------  -------\n");

  put("one.csv", "task,model_variant,atp_mean,violation_rate,d_phys_mean,fn_evals,wall_ms\n"
                 "sort-3,full,0.730,0.0500,1.25,16,12.000\n");
  r = cli("report --in one.csv", dir_);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("sort-3  full           0.730     0.0500          1.25         16        12.000"),
            std::string::npos)
      << r.output;

  put("bad.csv", "task,model_variant,atp_mean\nstack-2,full,0.5\nsort-3,full\n");
  r = cli("report --in bad.csv", dir_);
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.output.find("row 3"), std::string::npos) << r.output;

  put("grid.csv", "task,model_variant,atp_mean\nstack-2,full,0.5\nstack-2,NT,0.25\nsort-3,full,1\nsort-3,NT,0.5\n");
  r = cli("report --in grid.csv --plot plots", dir_);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("full     0.5      1       0.75"), std::string::npos) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "plots" / "grid_atp_mean.svg"));
  EXPECT_EQ(cli("render --in grid.csv", dir_).code, 0);
}

TEST_F(CliTest, ReportPlotsLossCurve) {
  ASSERT_EQ(cli("gen-data --n 4 --seed 2 --out d.jsonl", dir_).code, 0);
  ASSERT_EQ(cli(std::string("train --data d.jsonl --out run") + kTinyModel, dir_).code, 0);
  ASSERT_EQ(cli("report --in run/loss_curve.csv --plot plots", dir_).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "plots" / "loss_curve_probe_flow.svg"));
  EXPECT_TRUE(fs::exists(dir_ / "plots" / "loss_curve_loss_flow.svg"));
}

}  // namespace
}  // namespace topoflow::cli
