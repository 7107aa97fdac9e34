// Measured properties of the shipped synthetic setting (configs/).

#include "mulfa/cli.hpp"
#include "mulfa/mulfa.hpp"

#include <gtest/gtest.h>

#include <iostream>

using namespace mulfa;

namespace {

SynthConfig shipped_synth() {
  const std::string path = std::string(MULFA_CONFIG_DIR) + "/synth.conf";
  auto in = detail::open_input(path);
  return cli::parse_synth_config(in, path);
}

TrainConfig shipped_train() { return load_train_config(std::string(MULFA_CONFIG_DIR) + "/synthetic.conf"); }

}  // namespace

TEST(Synthetic, ShippedSettingMatchesTheDeskScaleDataset) {
  const auto s = shipped_synth();
  EXPECT_EQ(s.m, 60);
  EXPECT_EQ(s.l, 32);
  EXPECT_EQ(s.v, 8);
  EXPECT_EQ(s.u_true, 8);
  EXPECT_EQ(s.flip, 0.05);
  const auto c = shipped_train();
  EXPECT_EQ(c.alpha, 0.3);
  EXPECT_EQ(c.lambda, 4.0);
  EXPECT_EQ(c.variant, Variant::full);
}

TEST(Synthetic, TrainingLowersTheObjective) {
  const auto ds = synth_generate(shipped_synth());
  const auto c = shipped_train();
  const auto split = drug_disjoint_split(ds.catalog, ds.labels, c.mask_fraction, c.seed);
  const auto fitted = fit(ds.catalog, ds.labels, split, c);
  EXPECT_LT(fitted.history.back().objective, fitted.history.front().objective);
}

// Not met on the shipped setting: the two arms differ by noise-level margins
// whose sign follows initialization details. Run with
// --gtest_also_run_disabled_tests to reproduce the measurement.
TEST(Synthetic, DISABLED_CumulativeArmMatchesOrBeatsPerBatchArm) {
  auto synth = shipped_synth();
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    synth.seed = seed;
    const auto ds = synth_generate(synth);
    auto c = shipped_train();
    c.seed = seed;
    const auto split = drug_disjoint_split(ds.catalog, ds.labels, c.mask_fraction, seed);
    EvalOptions eo;
    eo.seed = seed;
    const auto rows = compare_cuxcov_xcov(ds.catalog, ds.labels, split, c, {ds.labels.num_types()},
                                          {c.batch_size}, eo);
    ASSERT_TRUE(rows[0].error.empty()) << rows[0].error;
    std::cout << "seed " << seed << ": cuxcov " << rows[0].mean_cuxcov << ", xcov " << rows[0].mean_xcov << '\n';
    wins += rows[0].mean_cuxcov >= rows[0].mean_xcov;
  }
  EXPECT_GE(wins, 4);
}
