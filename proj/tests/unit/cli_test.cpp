#include "cli_runs.hpp"
#include "test_support.hpp"

#include <charme/csv.hpp>
#include <charme/model_json.hpp>

#include <gtest/gtest.h>

#include <fstream>

using namespace charme;
using namespace charme::testing;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST(CliDeterminism, PipelineIsByteIdenticalAcrossThreadCounts) {
  TempDir a("cli_a"), b("cli_b");
  const auto first = pipeline_outputs(a.path(), "1");
  const auto second = pipeline_outputs(b.path(), "3");
  for (const auto& [key, value] : first) EXPECT_NE(key.rfind("exit:", 0), 0u) << key << ": " << value;
  ASSERT_EQ(first.size(), second.size());
  for (const auto& [key, value] : first) {
    ASSERT_TRUE(second.count(key)) << key;
    EXPECT_TRUE(value == second.at(key)) << key;
  }
  EXPECT_TRUE(first.count("ex3/eta.csv"));
  EXPECT_TRUE(first.count("stab/tau.csv"));
  EXPECT_TRUE(first.count("mc/asymptotics.json"));
  EXPECT_TRUE(first.count("mc/qq.csv"));
}

TEST(CliExitCodes, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"bogus"}).code, 1);
  EXPECT_EQ(run_cli({"simulate"}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "--model", "/nonexistent/model.json"}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "--help"}).code, 0);
  EXPECT_EQ(run_cli({"train", "--data", "x", "--model-init", "y", "--loss", "cubic"}).code, 1);
}

TEST(CliExitCodes, InvalidModelListsViolations) {
  TempDir dir("cli_invalid");
  auto doc = to_json(ar1_model(0.5));
  doc["pi"] = {0.7};
  write_text(dir / "bad.json", doc.dump());
  const CliRun r = run_cli({"check-stability", "--model", dir / "bad.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("PiNotNormalized"), std::string::npos);
}

TEST(CliExitCodes, NumericalFailures) {
  TempDir dir("cli_numeric");
  save_model(dir / "ar1.json", ar1_model(0.5));
  ASSERT_EQ(run_cli({"simulate", "--model", dir / "ar1.json", "--n", "200", "--out", dir / "sim.csv"}).code, 0);
  const CliRun r = run_cli({"train", "--data", dir / "sim.csv", "--model-init", dir / "ar1.json", "--lr0", "1e6",
                            "--batch", "1", "--epochs", "20", "--out-dir", dir / "train"});
  EXPECT_EQ(r.code, 2);
  save_model(dir / "explode.json", ar1_model(1e200));
  EXPECT_EQ(run_cli({"simulate", "--model", dir / "explode.json", "--n", "50", "--out", dir / "boom.csv"}).code, 2);
}

TEST(CliSimulate, StdoutCsvAndKeepEps) {
  TempDir dir("cli_sim");
  save_model(dir / "ar1.json", ar1_model(0.5));
  const CliRun r = run_cli({"simulate", "--model", dir / "ar1.json", "--n", "20", "--burn-in", "0", "--keep-eps"});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable t = parse_csv(r.out);
  EXPECT_EQ(t.header, (std::vector<std::string>{"t", "R_t", "X_t[1]", "eps_t[1]"}));
  EXPECT_EQ(t.rows.size(), 21u);
  EXPECT_EQ(t.rows.front()[0], "0");
}

TEST(CliTrain, WritesArtifacts) {
  TempDir dir("cli_train");
  save_model(dir / "ar1.json", ar1_model(0.5));
  ASSERT_EQ(run_cli({"simulate", "--model", dir / "ar1.json", "--n", "2000", "--out", dir / "sim.csv"}).code, 0);
  const CliRun r = run_cli({"train", "--data", dir / "sim.csv", "--model-init", dir / "ar1.json", "--init", "provided",
                            "--init-scale", "0", "--epochs", "5", "--lr0", "0.05", "--out-dir", dir / "fit"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto fit = nlohmann::json::parse(read_file(dir / "fit/fit.json"));
  EXPECT_NEAR(fit["residual_variance"].get<double>(), 1.0, 0.1);
  EXPECT_EQ(parse_csv(read_file(dir / "fit/trace.csv")).rows.size(), 5u);
  EXPECT_EQ(parse_csv(read_file(dir / "fit/residuals.csv")).rows.size(), 2000u);
  EXPECT_NO_THROW(load_model(dir / "fit/model.json"));
}

TEST(CliConfig, MergesWithCommandLine) {
  TempDir dir("cli_config");
  save_model(dir / "ar1.json", ar1_model(0.5));
  const nlohmann::json cfg = {{"schema_version", 1},
                              {"command", "simulate"},
                              {"options", {{"model", dir / "ar1.json"}, {"n", 30}, {"seed", 9}, {"burn-in", 0}}}};
  write_text(dir / "cfg.json", cfg.dump());
  const CliRun via_config = run_cli({"simulate", "--config", dir / "cfg.json"});
  const CliRun direct = run_cli({"simulate", "--model", dir / "ar1.json", "--n", "30", "--seed", "9", "--burn-in", "0"});
  ASSERT_EQ(via_config.code, 0) << via_config.err;
  EXPECT_EQ(via_config.out, direct.out);
  EXPECT_EQ(run_cli({"--config", dir / "cfg.json"}).out, direct.out);

  const CliRun overridden = run_cli({"simulate", "--config", dir / "cfg.json", "--n", "5"});
  EXPECT_EQ(parse_csv(overridden.out).rows.size(), 6u);

  nlohmann::json bad = cfg;
  bad["schema_version"] = 2;
  write_text(dir / "v2.json", bad.dump());
  EXPECT_EQ(run_cli({"simulate", "--config", dir / "v2.json"}).code, 1);
  bad = cfg;
  bad["command"] = "train";
  write_text(dir / "cmd.json", bad.dump());
  EXPECT_EQ(run_cli({"simulate", "--config", dir / "cmd.json"}).code, 1);
  write_text(dir / "broken.json", "{not json");
  EXPECT_EQ(run_cli({"simulate", "--config", dir / "broken.json"}).code, 1);
}

TEST(CliExperiment3, SummaryAndFiles) {
  TempDir dir("cli_ex3");
  const CliRun r = run_cli({"experiment3", "--N", "20", "--n", "400", "--out-dir", dir / "out"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["parameters"], 15);
  EXPECT_EQ(summary["replicates_kept"], 20);
  EXPECT_TRUE(summary["true_certified_stationary"].get<bool>());
  for (const auto& f : summary["files"]) EXPECT_TRUE(std::filesystem::exists(dir.path() / "out" / f.get<std::string>())) << f;
  EXPECT_EQ(summary["normality"]["subset"].size(), 15u);
}
