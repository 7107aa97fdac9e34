#include "support.hpp"

#include "mulfa/cli.hpp"

#include <gtest/gtest.h>

#include <sstream>

using testing_support::read_file;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

struct Outcome {
  int code;
  std::string log;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mulfa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log, err;
  const int code = mulfa::cli::run(static_cast<int>(argv.size()), argv.data(), log, err);
  return {code, log.str(), err.str()};
}

int count_lines(const std::string& text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

/// Synthetic data plus a fast training config in one scratch directory.
struct Workspace {
  TempDir dir;
  std::string data, fp, ix, config;

  Workspace() {
    write_file(dir.file("synth.conf"), "m = 16\nl = 6\nv = 3\ndensity = 0.35\nseed = 2\n");
    data = dir.file("data");
    const auto r = invoke({"synth", "--config", dir.file("synth.conf"), "--out", data});
    EXPECT_EQ(r.code, 0) << r.err;
    fp = data + "/fingerprints.tsv";
    ix = data + "/interactions.tsv";
    config = write_file(dir.file("train.conf"),
                        "hidden = 8\nu = 2\nbatch_size = 8\nepochs = 2\nmask_fraction = 0.2\n");
  }

  std::vector<std::string> data_args() const { return {"--fingerprints", fp, "--interactions", ix}; }

  Outcome run(std::vector<std::string> args, bool with_data = true) const {
    if (with_data) {
      const auto d = data_args();
      args.insert(args.end(), d.begin(), d.end());
    }
    return invoke(std::move(args));
  }
};

}  // namespace

TEST(Cli, TrainEvalGenerateRoundTrip) {
  Workspace w;
  const auto out = w.dir.file("run");
  auto r = w.run({"train", "--config", w.config, "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"config.resolved", "masked_drugs.txt", "checkpoint.txt", "history.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(out + "/" + f)) << f;
  }
  EXPECT_EQ(count_lines(read_file(out + "/history.csv")), 3);

  r = w.run({"eval", "--config", w.config, "--checkpoint", out + "/checkpoint.txt", "--out", out,
             "--repetitions", "4", "--collections", "1-1,2-3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(read_file(out + "/eval_raw.csv")), 1 + 2 * 4);
  EXPECT_EQ(count_lines(read_file(out + "/eval_summary.csv")), 3);

  r = w.run({"generate", "--checkpoint", out + "/checkpoint.txt", "--out", out, "--neighbors", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto canonical = mulfa::load_canonical_vectors(out + "/canonical.csv");
  ASSERT_EQ(canonical.size(), 3u);
  EXPECT_EQ(canonical[0].values.size(), 12);
  EXPECT_EQ(count_lines(read_file(out + "/nearest.csv")), 1 + 3 * 2 * 2);

  r = w.run({"generate", "--checkpoint", out + "/checkpoint.txt", "--out", out, "--metric", "tanimoto",
             "--types", canonical[1].type_id, "--zbar-samples", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(mulfa::load_canonical_vectors(out + "/canonical.csv").size(), 1u);
}

TEST(Cli, SameSeedGivesIdenticalHistory) {
  Workspace w;
  ASSERT_EQ(w.run({"train", "--config", w.config, "--out", w.dir.file("a"), "--seed", "5"}).code, 0);
  ASSERT_EQ(w.run({"train", "--config", w.config, "--out", w.dir.file("b"), "--seed", "5"}).code, 0);
  ASSERT_EQ(w.run({"train", "--config", w.config, "--out", w.dir.file("c"), "--seed", "6"}).code, 0);
  EXPECT_EQ(read_file(w.dir.file("a/history.csv")), read_file(w.dir.file("b/history.csv")));
  EXPECT_NE(read_file(w.dir.file("a/history.csv")), read_file(w.dir.file("c/history.csv")));
  EXPECT_NE(read_file(w.dir.file("a/config.resolved")).find("seed = 5"), std::string::npos);
}

TEST(Cli, ZeroEpochCheckpointIsTheInitialization) {
  Workspace w;
  write_file(w.dir.file("zero.conf"), "hidden = 8\nu = 2\nbatch_size = 8\nepochs = 0\nseed = 3\n");
  ASSERT_EQ(w.run({"train", "--config", w.dir.file("zero.conf"), "--out", w.dir.file("z")}).code, 0);
  const auto loaded = mulfa::load_checkpoint(w.dir.file("z/checkpoint.txt"));
  const auto init = mulfa::init_params(mulfa::NetworkShape::symmetric(12, {8}, 3, 2), 3);
  ASSERT_EQ(loaded.layers.size(), init.layers.size());
  for (std::size_t h = 0; h < init.layers.size(); ++h) {
    EXPECT_EQ(loaded.layers[h].weight, init.layers[h].weight);
    EXPECT_EQ(loaded.layers[h].bias, init.layers[h].bias);
  }
}

TEST(Cli, InputsAreNotModified) {
  Workspace w;
  const auto fp = read_file(w.fp), ix = read_file(w.ix);
  ASSERT_EQ(w.run({"train", "--config", w.config, "--out", w.dir.file("r")}).code, 0);
  EXPECT_EQ(read_file(w.fp), fp);
  EXPECT_EQ(read_file(w.ix), ix);
}

TEST(Cli, MissingFingerprintFileIsAValidationError) {
  Workspace w;
  const auto missing = w.dir.file("nope.tsv");
  const auto r = invoke({"train", "--config", w.config, "--fingerprints", missing, "--interactions", w.ix,
                         "--out", w.dir.file("r")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos);
}

TEST(Cli, ReversedCollectionIsRejected) {
  Workspace w;
  ASSERT_EQ(w.run({"train", "--config", w.config, "--out", w.dir.file("r")}).code, 0);
  const auto r = w.run({"eval", "--config", w.config, "--checkpoint", w.dir.file("r/checkpoint.txt"),
                        "--out", w.dir.file("r"), "--collections", "50-1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("50-1"), std::string::npos);
}

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"bogus"}).code, 1);
  EXPECT_EQ(invoke({"train", "--epochs-typo", "3"}).code, 1);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(Cli, SweepWritesOneRowPerCell) {
  Workspace w;
  const auto out = w.dir.file("nested/sweep/dir");
  const auto r = w.run({"sweep", "--config", w.config, "--out", out, "--repetitions", "2",
                        "--alpha-grid", "0,0.3,0.6,0.9", "--lambda-grid", "1.5,2,4,8"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(read_file(out + "/sweep.csv")), 1 + 16);
}

TEST(Cli, CompareLossesGrid) {
  Workspace w;
  const auto out = w.dir.file("cmp");
  const auto r = w.run({"compare-losses", "--config", w.config, "--out", out, "--repetitions", "2",
                        "--task-counts", "2,3", "--batch-sizes", "4,8"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(read_file(out + "/compare_losses.csv")), 1 + 4);
}

TEST(Cli, SelfCheckPasses) {
  const auto r = invoke({"check"});
  EXPECT_EQ(r.code, 0) << r.log;
  EXPECT_EQ(r.log.find("FAIL"), std::string::npos);
}

TEST(Cli, DivergenceExitsWithTwoAndKeepsLastGoodState) {
  Workspace w;
  write_file(w.dir.file("bad.conf"), "hidden = 8\nu = 2\nbatch_size = 8\nepochs = 5\nlearning_rate = 1e300\n");
  const auto r = w.run({"train", "--config", w.dir.file("bad.conf"), "--out", w.dir.file("d")});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(std::filesystem::exists(w.dir.file("d/checkpoint.last_good.txt")));
  EXPECT_FALSE(std::filesystem::exists(w.dir.file("d/checkpoint.txt")));
}
