#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cli_util.hpp"
#include "json.hpp"

// End-to-end checks of the command-line binary: artifact determinism, seed
// precedence, the retrieval / training / evaluation round trip, and the
// error paths the interface promises (named missing files, rejected config
// keys, empty-query usage errors).

namespace {

using cliutil::run_cli;
using cliutil::RunResult;

std::string line_starting_with(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) return line;
  return {};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

double last_number(const std::string& line) {
  const auto pos = line.find_last_of(" \t");
  return std::stod(line.substr(pos + 1));
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new std::filesystem::path(cliutil::fresh_dir("expanet_cli"));
    cliutil::write_corpus(*dir_);
    const RunResult index = run_cli("build-index --docs docs.jsonl --out index.bin", *dir_);
    ASSERT_EQ(index.exit_code, 0) << index.err;
    base_train_ = new RunResult(run_cli("train --config config.json --out runA", *dir_));
    ASSERT_EQ(base_train_->exit_code, 0) << base_train_->err;
  }

  static void TearDownTestSuite() {
    std::filesystem::remove_all(*dir_);
    delete dir_;
    delete base_train_;
    dir_ = nullptr;
    base_train_ = nullptr;
  }

  static const std::filesystem::path& dir() { return *dir_; }
  static const RunResult& base_train() { return *base_train_; }
  static std::string artifact(const std::string& rel) { return cliutil::slurp(dir() / rel); }

 private:
  static std::filesystem::path* dir_;
  static RunResult* base_train_;
};

std::filesystem::path* CliTest::dir_ = nullptr;
RunResult* CliTest::base_train_ = nullptr;

TEST_F(CliTest, BuildIndexIsByteDeterministic) {
  const RunResult first = run_cli("build-index --docs docs.jsonl --out det_a.bin", dir());
  const RunResult second = run_cli("build-index --docs docs.jsonl --out det_b.bin", dir());
  ASSERT_EQ(first.exit_code, 0) << first.err;
  ASSERT_EQ(second.exit_code, 0) << second.err;
  EXPECT_NE(first.out.find("indexed 30 documents"), std::string::npos);
  const std::string a = artifact("det_a.bin");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, artifact("det_b.bin"));
}

TEST_F(CliTest, MissingInputsAreNamedBeforeAnyWork) {
  const RunResult retrieve = run_cli("retrieve --index nope.bin --query 'w0x0'", dir());
  EXPECT_EQ(retrieve.exit_code, 1);
  EXPECT_NE(retrieve.err.find("nope.bin"), std::string::npos);

  nlohmann::json config = nlohmann::json::parse(cliutil::slurp(dir() / "config.json"));
  config["test"] = (dir() / "missing_test.jsonl").string();
  cliutil::write_file(dir() / "config_missing.json", config.dump());
  const RunResult train = run_cli("train --config config_missing.json --out run_missing", dir());
  EXPECT_EQ(train.exit_code, 1);
  EXPECT_NE(train.err.find("missing_test.jsonl"), std::string::npos);
  // path validation must reject the run before it trains anything
  EXPECT_FALSE(std::filesystem::exists(dir() / "run_missing" / "model.ckpt"));
}

TEST_F(CliTest, RetrieveRanksTheQuerysTheme) {
  const RunResult result = run_cli("retrieve --index index.bin --query 'w1x0 w1x1 w1x2' --k 5", dir());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  const auto lines = lines_of(result.out);
  ASSERT_EQ(lines.size(), 5u);
  double previous = 0.0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string rank, doc_id, score;
    ASSERT_TRUE(std::getline(row, rank, '\t'));
    ASSERT_TRUE(std::getline(row, doc_id, '\t'));
    ASSERT_TRUE(std::getline(row, score, '\t'));
    EXPECT_EQ(rank, std::to_string(i + 1));
    // theme-1 documents are doc1, doc4, doc7, ...
    const int doc_number = std::stoi(doc_id.substr(3));
    EXPECT_EQ(doc_number % 3, 1) << doc_id;
    const double value = std::stod(score);
    if (i > 0) EXPECT_LE(value, previous);
    previous = value;
  }
}

TEST_F(CliTest, RetrieveWithNoOverlapSucceedsEmpty) {
  const RunResult result = run_cli("retrieve --index index.bin --query 'zonk blip'", dir());
  EXPECT_EQ(result.exit_code, 0) << result.err;
  EXPECT_TRUE(result.out.empty());
}

TEST_F(CliTest, RetrieveWithEmptyQueryFails) {
  const RunResult result = run_cli("retrieve --index index.bin --query '   '", dir());
  EXPECT_EQ(result.exit_code, 1);
  EXPECT_NE(result.err.find("no tokens"), std::string::npos);
}

TEST_F(CliTest, TrainingRunsAreByteIdentical) {
  const RunResult rerun = run_cli("train --config config.json --out runB", dir());
  ASSERT_EQ(rerun.exit_code, 0) << rerun.err;
  for (const char* name : {"model.ckpt", "history.csv", "history.json", "index.bin"}) {
    const std::string a = artifact(std::string("runA/") + name);
    ASSERT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, artifact(std::string("runB/") + name)) << name;
  }
  EXPECT_EQ(line_starting_with(artifact("runA/history.csv"), "epoch,"),
            "epoch,mean_loss,val_micro_f1,val_macro_f1");
  EXPECT_TRUE(std::filesystem::exists(dir() / "runA" / "manifest.json"));
}

TEST_F(CliTest, SeedPrecedenceIsFlagThenEnvironmentThenConfig) {
  const RunResult env_run =
      run_cli("train --config config.json --out runEnv", dir(), "EXPANET_SEED=99");
  ASSERT_EQ(env_run.exit_code, 0) << env_run.err;
  EXPECT_NE(artifact("runA/model.ckpt"), artifact("runEnv/model.ckpt"));

  const RunResult flag_run =
      run_cli("train --config config.json --out runFlag --seed 42", dir(), "EXPANET_SEED=99");
  ASSERT_EQ(flag_run.exit_code, 0) << flag_run.err;
  EXPECT_EQ(artifact("runA/model.ckpt"), artifact("runFlag/model.ckpt"));
}

TEST_F(CliTest, EvaluateReproducesTrainTimeTestMetrics) {
  const RunResult result = run_cli(
      "evaluate --checkpoint runA/model.ckpt --index runA/index.bin "
      "--docs docs.jsonl --test test.jsonl --labels labels.json",
      dir());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  const std::string micro = line_starting_with(result.out, "micro_f1 ");
  const std::string macro = line_starting_with(result.out, "macro_f1 ");
  ASSERT_FALSE(micro.empty());
  EXPECT_EQ(micro, line_starting_with(base_train().out, "micro_f1 "));
  EXPECT_EQ(macro, line_starting_with(base_train().out, "macro_f1 "));
}

TEST_F(CliTest, EvaluateRejectsAForeignVocabulary) {
  // one extra document changes the vocabulary, hence the stored hash
  cliutil::write_file(dir() / "docs_extra.jsonl",
                      cliutil::slurp(dir() / "docs.jsonl") +
                          "{\"id\": \"doc30\", \"text\": \"zonk zonk zonk\"}\n");
  const RunResult build =
      run_cli("build-index --docs docs_extra.jsonl --out index_extra.bin", dir());
  ASSERT_EQ(build.exit_code, 0) << build.err;
  const RunResult result = run_cli(
      "evaluate --checkpoint runA/model.ckpt --index index_extra.bin "
      "--docs docs_extra.jsonl --test test.jsonl --labels labels.json",
      dir());
  EXPECT_EQ(result.exit_code, 1);
  EXPECT_NE(result.err.find("vocabulary"), std::string::npos);
}

TEST_F(CliTest, EvaluateNeedsDocumentsWhenTheModelUsesMemory) {
  const RunResult result = run_cli(
      "evaluate --checkpoint runA/model.ckpt --index runA/index.bin "
      "--test test.jsonl --labels labels.json",
      dir());
  EXPECT_EQ(result.exit_code, 1);
  EXPECT_NE(result.err.find("--docs"), std::string::npos);
}

TEST_F(CliTest, ExpandPrintsMemoryAttentionAndADistribution) {
  const RunResult result = run_cli(
      "expand --checkpoint runA/model.ckpt --index runA/index.bin --docs docs.jsonl "
      "--labels labels.json --query 'w2x1 w2x2 w2x3'",
      dir());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  EXPECT_NE(result.out.find("memory (k = 4):"), std::string::npos);
  EXPECT_NE(result.out.find("hop 1 attention:"), std::string::npos);
  EXPECT_NE(result.out.find("prediction: "), std::string::npos);

  const auto lines = lines_of(result.out);
  double attention_sum = 0.0, prob_sum = 0.0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i] == "hop 1 attention:")
      for (std::size_t j = i + 1; j < i + 5; ++j) attention_sum += last_number(lines[j]);
    if (lines[i] == "probabilities:")
      for (std::size_t j = i + 1; j < i + 4; ++j) prob_sum += last_number(lines[j]);
  }
  EXPECT_NEAR(attention_sum, 1.0, 1e-6);
  EXPECT_NEAR(prob_sum, 1.0, 1e-6);
}

TEST_F(CliTest, SweepWritesTheAggregateTable) {
  const RunResult result = run_cli(
      "sweep --config config.json --kind hops --seeds 7,8 --values 0,1 --out sweep_out", dir());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  const std::string csv = artifact("sweep_out/sweep.csv");
  const auto rows = lines_of(csv);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "hops,micro_f1_mean,micro_f1_std,macro_f1_mean,macro_f1_std");
  EXPECT_EQ(rows[1].substr(0, 2), "0,");
  EXPECT_EQ(rows[2].substr(0, 2), "1,");
  const nlohmann::json table = nlohmann::json::parse(artifact("sweep_out/sweep.json"));
  ASSERT_EQ(table.size(), 2u);
  EXPECT_EQ(table[0]["hops"], 0);
  EXPECT_TRUE(table[0].contains("micro_f1_mean"));
  EXPECT_TRUE(std::filesystem::exists(dir() / "sweep_out" / "manifest.json"));
}

TEST_F(CliTest, BaselineEmitsMethodLambdaAndScores) {
  for (const std::string method : {"bow", "rocchio"}) {
    const RunResult result =
        run_cli("baseline --config config.json --method " + method + " --out bl_" + method, dir());
    ASSERT_EQ(result.exit_code, 0) << result.err;
    const auto lines = lines_of(result.out);
    ASSERT_GE(lines.size(), 2u);
    // the report is the last line before the artifact note
    const nlohmann::json report = nlohmann::json::parse(lines[lines.size() - 2]);
    EXPECT_EQ(report["method"], method);
    EXPECT_TRUE(report.contains("lambda"));
    EXPECT_TRUE(report.contains("micro_f1"));
    EXPECT_TRUE(report.contains("macro_f1"));
    const nlohmann::json saved =
        nlohmann::json::parse(artifact("bl_" + method + "/baseline.json"));
    EXPECT_EQ(saved, report);
  }
}

TEST_F(CliTest, UnknownConfigKeysAreRejected) {
  nlohmann::json config = nlohmann::json::parse(cliutil::slurp(dir() / "config.json"));
  config["bogus_knob"] = 3;
  cliutil::write_file(dir() / "config_bogus.json", config.dump());
  const RunResult result = run_cli("train --config config_bogus.json", dir());
  EXPECT_EQ(result.exit_code, 1);
  EXPECT_NE(result.err.find("bogus_knob"), std::string::npos);
}

TEST_F(CliTest, TrainAcceptsAPrebuiltIndex) {
  // the index must fold the training tokens into the vocabulary up front
  const RunResult build = run_cli(
      "build-index --docs docs.jsonl --train train.jsonl --out index_full.bin", dir());
  ASSERT_EQ(build.exit_code, 0) << build.err;
  nlohmann::json config = nlohmann::json::parse(cliutil::slurp(dir() / "config.json"));
  config["index"] = (dir() / "index_full.bin").string();
  cliutil::write_file(dir() / "config_prebuilt.json", config.dump());
  const RunResult train = run_cli("train --config config_prebuilt.json --out run_prebuilt", dir());
  ASSERT_EQ(train.exit_code, 0) << train.err;
  // the checkpoint binds to that index's vocabulary
  const RunResult evaluate = run_cli(
      "evaluate --checkpoint run_prebuilt/model.ckpt --index index_full.bin "
      "--docs docs.jsonl --test test.jsonl --labels labels.json",
      dir());
  EXPECT_EQ(evaluate.exit_code, 0) << evaluate.err;
  // no in-process index was built, so none is re-exported
  EXPECT_FALSE(std::filesystem::exists(dir() / "run_prebuilt" / "index.bin"));
}

}  // namespace
