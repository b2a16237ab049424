#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "cxr/data.hpp"
#include "cxr/eval.hpp"
#include "cxr/synthetic.hpp"
#include "test_util.hpp"

namespace cxr {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

nlohmann::json echoed_config(const std::string& out) {
  const auto start = out.find("config ");
  const auto end = out.find('\n', start);
  return nlohmann::json::parse(out.substr(start + 7, end - start - 7));
}

TEST(CliSplitTest, CorpusSizesAndRerun) {
  TempDir dir("cli_split");
  write_synthetic_corpus(dir / "data", {{175, 100, 100}, 10, 12, 1});
  const CliRun a = cli({"split", "--data", (dir / "data").string(), "--out", (dir / "a.json").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("all           375    301     37     37"), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("COVID         175    141     17     17"), std::string::npos) << a.out;

  const CliRun b = cli({"split", "--data", (dir / "data").string(), "--out", (dir / "b.json").string()});
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
}

TEST(CliSplitTest, InvalidRatiosAndMissingData) {
  TempDir dir("cli_split_bad");
  write_synthetic_corpus(dir / "data", {{4, 4, 4}, 8, 8, 1});
  const CliRun bad = cli({"split", "--data", (dir / "data").string(), "--ratios", "0.5,0.5,0.5", "--out",
                       (dir / "s.json").string()});
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.err.find("sum to 1"), std::string::npos) << bad.err;
  EXPECT_FALSE(fs::exists(dir / "s.json"));

  const CliRun missing = cli({"split", "--data", (dir / "nowhere").string(), "--out", (dir / "s.json").string()});
  EXPECT_EQ(missing.code, cli::kDataError);
}

TEST(CliSplitTest, ConfigFileFillsUnsetFlags) {
  TempDir dir("cli_config");
  write_synthetic_corpus(dir / "data", {{8, 8, 8}, 8, 8, 1});
  std::ofstream(dir / "cfg.json") << R"({"ratios": "0.5,0.25,0.25", "seed": 3})";
  const CliRun r = cli({"split", "--config", (dir / "cfg.json").string(), "--seed", "4", "--data",
                     (dir / "data").string(), "--out", (dir / "s.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const nlohmann::json config = echoed_config(r.out);
  EXPECT_EQ(config["seed"], 4);
  EXPECT_EQ(config["ratios"], nlohmann::json({0.5, 0.25, 0.25}));
  EXPECT_EQ(load_split(dir / "s.json").test.size(), 6u);

  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(cli({"split", "--config", (dir / "broken.json").string(), "--data", "x", "--out", "y"}).code, cli::kUsage);
}

TEST(CliTest, HelpAndUsageErrors) {
  const CliRun help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  for (const char* sub : {"split", "train", "eval", "explain", "init-backbone", "synth"}) {
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  }
  EXPECT_EQ(cli({}).code, cli::kUsage);
  EXPECT_EQ(cli({"train"}).code, cli::kUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, cli::kUsage);
}

TEST(CliEvalTest, InjectedPredictions) {
  TempDir dir("cli_eval");
  const CliRun r = cli({"eval", "--predictions", CXR_FIXTURE_DIR "/test_predictions.json", "--out", (dir / "r").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy 0.9733 (73/75)"), std::string::npos) << r.out;
  const EvalReport report = report_from_json(slurp(dir / "r/report.json"));
  EXPECT_NEAR(report.accuracy, 0.9733, 1e-4);
  EXPECT_NEAR(*report.recall[1], 0.882, 5e-4);
  EXPECT_EQ(report.misclassified, (std::vector<std::string>{"normal/t015.png", "normal/t016.png"}));
  EXPECT_EQ(slurp(dir / "r/misclassified.txt"), "normal/t015.png\nnormal/t016.png\n");
  EXPECT_TRUE(fs::exists(dir / "r/report.txt"));
  EXPECT_TRUE(fs::exists(dir / "r/config.json"));
}

/// One small end-to-end pipeline shared by the train/eval/explain tests.
class CliPipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new TempDir("cli_pipeline");
    write_synthetic_corpus(*root_ / "data", {{6, 6, 6}, 40, 60, 2});
    ASSERT_EQ(cli({"init-backbone", "--arch", "vgg16-small", "--seed", "1", "--out", path("backbone")}).code, 0);
    ASSERT_EQ(cli({"split", "--data", path("data"), "--ratios", "0.5,0.25,0.25", "--out", path("split.json")}).code, 0);
    train_run_ = new CliRun(cli({"train", "--data", path("data"), "--split", path("split.json"), "--backbone",
                              path("backbone"), "--out", path("run")}));
  }
  static void TearDownTestSuite() {
    delete train_run_;
    delete root_;
  }
  static std::string path(const std::string& name) { return (*root_ / name).string(); }

  static TempDir* root_;
  static CliRun* train_run_;
};

TempDir* CliPipelineTest::root_ = nullptr;
CliRun* CliPipelineTest::train_run_ = nullptr;

TEST_F(CliPipelineTest, TrainEchoesDefaultsAndWritesArtifacts) {
  ASSERT_EQ(train_run_->code, 0) << train_run_->err;
  const nlohmann::json config = echoed_config(train_run_->out);
  EXPECT_EQ(config["epochs"], 80);
  EXPECT_EQ(config["lr"], 0.001);
  EXPECT_EQ(config["batch"], 15);
  EXPECT_EQ(config["arch"], "vgg16-small");
  EXPECT_EQ(nlohmann::json::parse(slurp(path("run/config.json"))), config);

  std::istringstream history(slurp(path("run/history.csv")));
  std::string line;
  int rows = -1;
  while (std::getline(history, line)) ++rows;
  EXPECT_EQ(rows, 80);
  EXPECT_TRUE(fs::exists(path("run/head/manifest.json")));
}

TEST_F(CliPipelineTest, TrainMissingBackboneNamesPath) {
  const CliRun r = cli({"train", "--data", path("data"), "--split", path("split.json"), "--backbone", path("absent"),
                     "--out", path("run2")});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find(path("absent")), std::string::npos) << r.err;
}

TEST_F(CliPipelineTest, EvalOnTestSplit) {
  const CliRun r = cli({"eval", "--data", path("data"), "--split", path("split.json"), "--backbone", path("backbone"),
                     "--head", path("run/head"), "--out", path("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  const EvalReport report = report_from_json(slurp(path("eval/report.json")));
  EXPECT_EQ(report.sample_count, 3u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(report.matrix.row_sum(c), 1u);
}

TEST_F(CliPipelineTest, EvalEmptyTestSplitFails) {
  ASSERT_EQ(cli({"split", "--data", path("data"), "--ratios", "0.5,0.5,0", "--out", path("notest.json")}).code, 0);
  const CliRun r = cli({"eval", "--data", path("data"), "--split", path("notest.json"), "--backbone", path("backbone"),
                     "--head", path("run/head"), "--out", path("eval2")});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find("empty test set"), std::string::npos) << r.err;
}

TEST_F(CliPipelineTest, ExplainWritesThreeFilesPerImage) {
  const SplitAssignment s = load_split(path("split.json"));
  std::vector<std::string> args = {"explain", "--backbone", path("backbone"), "--head", path("run/head"),
                                   "--out", path("cams"), "--class", "normal"};
  for (const Sample& sample : s.test) {
    args.push_back("--image");
    args.push_back(path("data/" + sample.path));
  }
  const CliRun r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(path("cams"))) files += entry.path().filename() != "config.json";
  EXPECT_EQ(files, 9u);

  const std::string stem = fs::path(s.test[0].path).stem().string();
  const nlohmann::json summary = nlohmann::json::parse(slurp(path("cams/" + stem + ".json")));
  EXPECT_EQ(summary["class_name"], "NORMAL");
  EXPECT_EQ(summary["probs"].size(), 3u);
  std::istringstream csv(slurp(path("cams/" + stem + ".cam.csv")));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 14);
  const RgbImage overlay = decode_rgb(path("cams/" + stem + ".cam.png"));
  EXPECT_EQ(overlay.width, 237u);

  args[8] = "pneumonia";
  EXPECT_EQ(cli(args).code, cli::kUsage);
}

}  // namespace
}  // namespace cxr
