#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "corpus.hpp"
#include "diqa/cli.hpp"
#include "diqa/synthetic.hpp"
#include "fixtures.hpp"

using namespace diqa;
using diqa::testing::read_bytes;
using diqa::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticOptions options;
    write_synthetic_corpus(corpus(), options);
  }
  std::filesystem::path corpus() const { return dir_ / "corpus"; }
  std::string manifest() const { return (corpus() / "manifest.csv").string(); }
  std::string descriptor() const { return (corpus() / "descriptor.txt").string(); }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  std::filesystem::path train_shallow_fr(const std::string& name) {
    const auto r = run({"train", "--manifest", manifest(), "--descriptor", descriptor(), "--task", "fr", "--pooling",
                        "weighted", "--fusion", "diff", "--depth", "shallow", "--epochs", "1", "--seed", "3",
                        "--out", out(name)});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir_ / name / "train-seed3" / "model.diqa";
  }

  TempDir dir_{"cli"};
};

}  // namespace

TEST_F(CliTest, MissingManifestIsUsageError) {
  const std::string missing = out("nope.csv");
  const auto r = run({"train", "--manifest", missing, "--descriptor", descriptor()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"bogus"}).code, 1);
  EXPECT_EQ(run({"info", "--task", "xr"}).code, 1);
  EXPECT_EQ(run({"info", "--task", "nr", "--fusion", "diff"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, InfoReportsParameterCount) {
  const auto r = run({"info", "--task", "fr", "--pooling", "weighted", "--fusion", "diff"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("WaDIQaM-FR"), std::string::npos);
  EXPECT_NE(r.out.find("params=5238562"), std::string::npos) << r.out;
}

TEST_F(CliTest, TrainWritesCheckpointAndHistoryDeterministically) {
  std::vector<std::string> args{"train", "--manifest", manifest(), "--descriptor", descriptor(), "--task", "nr",
                                "--pooling", "weighted", "--epochs", "2", "--seed", "7", "--out"};
  auto a_args = args;
  a_args.push_back(out("a"));
  auto b_args = args;
  b_args.push_back(out("b"));
  const auto a = run(a_args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("best_val_loss="), std::string::npos);
  ASSERT_EQ(run(b_args).code, 0);
  const auto da = dir_ / "a" / "train-seed7", db = dir_ / "b" / "train-seed7";
  EXPECT_EQ(line_count(da / "history.csv"), 3u);
  EXPECT_EQ(read_bytes(da / "history.csv"), read_bytes(db / "history.csv"));
  EXPECT_EQ(read_bytes(da / "model.diqa"), read_bytes(db / "model.diqa"));
  EXPECT_EQ(read_bytes(da / "last.diqa"), read_bytes(db / "last.diqa"));
}

TEST_F(CliTest, ResumeContinuesHistory) {
  std::vector<std::string> base{"train", "--manifest", manifest(), "--descriptor", descriptor(), "--task", "nr",
                                "--pooling", "average", "--depth", "shallow", "--seed", "5"};
  auto full = base;
  full.insert(full.end(), {"--epochs", "3", "--out", out("full")});
  ASSERT_EQ(run(full).code, 0);
  auto part = base;
  part.insert(part.end(), {"--epochs", "2", "--out", out("part")});
  ASSERT_EQ(run(part).code, 0);
  const auto part_dir = dir_ / "part" / "train-seed5";
  auto resume = base;
  resume.insert(resume.end(), {"--epochs", "3", "--out", out("part"), "--resume", (part_dir / "last.diqa").string()});
  const auto r = run(resume);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto full_dir = dir_ / "full" / "train-seed5";
  EXPECT_EQ(read_bytes(full_dir / "history.csv"), read_bytes(part_dir / "history.csv"));
  EXPECT_EQ(read_bytes(full_dir / "model.diqa"), read_bytes(part_dir / "model.diqa"));
}

TEST_F(CliTest, EvalPerfectPredictorAndGroups) {
  diqa::testing::write_gray_corpus(dir_ / "gray", 6);
  const auto ck = diqa::testing::monotone_checkpoint(ModelConfig::no_reference(PoolingMode::kAverage, Depth::kShallow));
  save_checkpoint(ck, dir_ / "perfect.diqa");
  const auto r = run({"eval", "--checkpoint", out("perfect.diqa"), "--manifest", (dir_ / "gray" / "manifest.csv").string(),
                      "--descriptor", (dir_ / "gray" / "descriptor.txt").string(), "--group-by", "distortion", "--out",
                      out("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("srocc=1,n=6"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("distortion=odd"), std::string::npos);
  const std::string report = read_bytes(dir_ / "eval" / "eval-seed1" / "report.csv");
  EXPECT_NE(report.find("distortion=even,3,"), std::string::npos) << report;
}

TEST_F(CliTest, EvalRejectsMismatchedModelFlags) {
  const auto model = train_shallow_fr("fr");
  const auto r = run({"eval", "--checkpoint", model.string(), "--manifest", manifest(), "--descriptor", descriptor(),
                      "--task", "nr", "--out", out("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("checkpoint holds"), std::string::npos) << r.err;
}

TEST_F(CliTest, SweepMapsAndPca) {
  const auto model = train_shallow_fr("fr");
  const std::vector<std::string> data{"--checkpoint", model.string(), "--manifest", manifest(), "--descriptor",
                                      descriptor()};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), data.begin(), data.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return run(head);
  };

  const auto sweep = with({"sweep"}, {"--np", "1,2,4,8,16,32", "--repeats", "2", "--out", out("s")});
  ASSERT_EQ(sweep.code, 0) << sweep.err;
  EXPECT_EQ(line_count(dir_ / "s" / "sweep-seed3" / "sweep.csv"), 7u);

  const auto bad_maps = with({"maps"}, {"--patch-mode", "random", "--out", out("m")});
  EXPECT_EQ(bad_maps.code, 1);
  EXPECT_NE(bad_maps.err.find("unsupported"), std::string::npos);
  const auto maps = with({"maps"}, {"--patch-mode", "dense", "--out", out("m")});
  ASSERT_EQ(maps.code, 0) << maps.err;
  EXPECT_TRUE(std::filesystem::exists(dir_ / "m" / "maps-seed3" / "img001_weight.png"));

  const auto pca = with({"pca"}, {"--pca-k", "0,256", "--pca-samples", "300", "--out", out("p")});
  ASSERT_EQ(pca.code, 0) << pca.err;
  EXPECT_EQ(line_count(dir_ / "p" / "pca-seed3" / "pca.csv"), 3u);
  EXPECT_EQ(with({"pca"}, {"--pca-k", "257", "--out", out("p")}).code, 1);
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndFlagsOverride) {
  {
    std::ofstream cfg(dir_ / "run.ini");
    cfg << "[info]\ntask=nr\npooling=average\n";
  }
  const auto a = run({"--config", out("run.ini"), "info"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("DIQaM-NR"), std::string::npos) << a.out;
  const auto b = run({"--config", out("run.ini"), "info", "--pooling", "weighted"});
  EXPECT_NE(b.out.find("WaDIQaM-NR"), std::string::npos) << b.out;
}
