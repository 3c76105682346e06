#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.h"
#include "spanclean/corpus.h"

namespace spanclean::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Call(std::vector<std::string> args) {
  args.insert(args.begin(), "spanclean");
  std::ostringstream out, err;
  const int code = Run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("spanclean_cli_" + std::string(::testing::UnitTest::GetInstance()
                                               ->current_test_info()
                                               ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  void Write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  // A tiny model so commands that train finish quickly.
  std::string SmallConfig() const {
    const nlohmann::json j = {
        {"epochs", 2},
        {"final_epochs", 2},
        {"model", {{"embed_dim", 8}, {"hidden_dim", 8}, {"width_embed_dim", 4}, {"max_width", 3}}}};
    Write("small.json", j.dump());
    return Path("small.json");
  }

  void Synth(const std::string& out, int sentences = 40) const {
    const auto r = Call({"synth", "--sentences", std::to_string(sentences), "--test-sentences",
                         "20", "--seed", "5", "--out", out});
    ASSERT_EQ(r.code, kOk) << r.err;
  }

  fs::path dir_;
};

TEST_F(CliTest, MissingTrainIsConfigError) {
  const auto r = Call({"clean", "--out", Path("run")});
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_NE(r.err.find("train_path"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(Call({}).code, kUsage);
  EXPECT_EQ(Call({"frobnicate"}).code, kUsage);
  EXPECT_EQ(Call({"clean", "--k-pos"}).code, kUsage);
}

TEST_F(CliTest, MissingFileIsDataError) {
  const auto r = Call({"stats", "--input", Path("absent.jsonl")});
  EXPECT_EQ(r.code, kDataError);
}

TEST_F(CliTest, BadConfigValueIsConfigError) {
  Write("bad.json", R"({"k_pos": 150})");
  Synth(Path("s"));
  const auto r =
      Call({"clean", "--config", Path("bad.json"), "--train", Path("s/train.jsonl")});
  EXPECT_EQ(r.code, kConfigError);
}

TEST_F(CliTest, SynthIsReproducible) {
  Synth(Path("a"));
  Synth(Path("b"));
  for (const char* f : {"train.jsonl", "test.jsonl"}) {
    EXPECT_EQ(ReadTextFile(Path(std::string("a/") + f)), ReadTextFile(Path(std::string("b/") + f)));
  }
}

TEST_F(CliTest, InjectWithZeroRatesIsIdentity) {
  Synth(Path("s"));
  const auto r = Call({"inject", "--input", Path("s/train.jsonl"), "--fn-rate", "0",
                       "--fp-type-rate", "0", "--fp-spurious-rate", "0", "--out", Path("n")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(ReadTextFile(Path("n/noisy.jsonl")), ReadTextFile(Path("s/train.jsonl")));
  EXPECT_EQ(ReadTextFile(Path("n/ledger.jsonl")), "");
}

TEST_F(CliTest, AnnotateWithEmptyGazetteerLabelsNothing) {
  Synth(Path("s"));
  Write("gaz.tsv", "");
  const auto r = Call({"annotate", "--input", Path("s/train.jsonl"), "--gazetteer",
                       Path("gaz.tsv"), "--out", Path("a")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto d = ReadDataset(Path("a/annotated.jsonl"), CorpusFormat::kSpans);
  ASSERT_FALSE(d.sentences.empty());
  for (const auto& s : d.sentences) EXPECT_TRUE(s.distant_spans.empty());
}

TEST_F(CliTest, EvalOfGoldAgainstItselfIsPerfect) {
  Synth(Path("s"));
  const auto r =
      Call({"eval", "--pred", Path("s/test.jsonl"), "--test", Path("s/test.jsonl")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("F1 1.000"), std::string::npos) << r.out;
}

TEST_F(CliTest, TrainWithoutPositivesIsConfigError) {
  Write("empty.jsonl", R"({"tokens":["a","b"],"spans":[]})" "\n");
  const auto r = Call({"train", "--train", Path("empty.jsonl"), "--out", Path("t")});
  EXPECT_EQ(r.code, kConfigError) << r.err;
}

TEST_F(CliTest, CleanTrainDatamapRoundTrip) {
  Synth(Path("s"));
  const std::string config = SmallConfig();
  ASSERT_EQ(Call({"inject", "--input", Path("s/train.jsonl"), "--seed", "5", "--out",
                  Path("n")})
                .code,
            kOk);
  const auto clean = Call({"clean", "--config", config, "--train", Path("n/noisy.jsonl"),
                           "--gold", Path("s/train.jsonl"), "--out", Path("c")});
  ASSERT_EQ(clean.code, kOk) << clean.err;
  for (const char* f : {"cleaned.jsonl", "report.json", "thresholds.json",
                        "dynamics_threshold.jsonl", "dynamics_main.jsonl", "timings.json"}) {
    EXPECT_TRUE(fs::exists(Path(std::string("c/") + f))) << f;
  }
  const auto report = nlohmann::json::parse(ReadTextFile(Path("c/report.json")));
  EXPECT_TRUE(report.contains("thresholds"));

  const auto train = Call({"train", "--config", config, "--train", Path("c/cleaned.jsonl"),
                           "--test", Path("s/test.jsonl"), "--out", Path("m")});
  ASSERT_EQ(train.code, kOk) << train.err;
  EXPECT_TRUE(fs::exists(Path("m/model.ckpt")));
  EXPECT_TRUE(fs::exists(Path("m/metrics.json")));

  const auto eval = Call({"eval", "--checkpoint", Path("m/model.ckpt"), "--test",
                          Path("s/test.jsonl"), "--out", Path("e")});
  ASSERT_EQ(eval.code, kOk) << eval.err;
  EXPECT_TRUE(fs::exists(Path("e/eval.json")));

  const auto dm = Call({"datamap", "--dynamics", Path("c/dynamics_main.jsonl"), "--out",
                        Path("d")});
  ASSERT_EQ(dm.code, kOk) << dm.err;
  size_t dump_lines = 0, csv_lines = 0;
  std::string line;
  std::ifstream dump(Path("c/dynamics_main.jsonl"));
  while (std::getline(dump, line)) dump_lines += !line.empty();
  std::ifstream csv(Path("d/datamap.csv"));
  while (std::getline(csv, line)) csv_lines += !line.empty();
  EXPECT_EQ(csv_lines, dump_lines + 1);
  EXPECT_TRUE(fs::exists(Path("d/datamap.svg")));
}

}  // namespace
}  // namespace spanclean::cli
