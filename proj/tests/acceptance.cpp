// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "mulfa/cli.hpp"
#include "mulfa/mulfa.hpp"
#include "mulfa/selfcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <sstream>

using namespace mulfa;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int criterion, bool passed, const std::string& detail) {
  std::cout << (passed ? "PASS" : "FAIL") << " criterion " << criterion << ": " << detail << std::endl;
  if (!passed) ++failures;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

void gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto results = selfcheck::gradient_checks(20, 2024, 1e-4, 1e-5);
  const double secs = seconds_since(t0);
  bool ok = secs < 30.0;
  std::string detail;
  for (const auto& r : results) {
    ok = ok && r.passed;
    detail += r.name + " " + r.detail + "; ";
  }
  report(1, ok, detail + "runtime " + fmt(secs) + " s");
}

void degeneracy() {
  const double gap = selfcheck::degeneracy_gap(100, 11);
  report(2, gap <= 1e-12, "max |CuXCov(alpha=0) - XCov| = " + fmt(gap) + " over 100 batches");
}

/// i.i.d. Gaussian batches whose first v coordinates are the label block and
/// last u the nuisance block, mixed by a fixed matrix.
struct GaussianSource {
  Matrix mix;  // (v+u) x (v+u)
  int v, u;

  Matrix population_cross_cov() const {
    const Matrix cov = mix * mix.transpose();
    return cov.topRightCorner(v, u);
  }

  BatchRepresentation draw(int n, Rng& rng) const {
    Matrix g(v + u, n);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double r = std::sqrt(-2.0 * std::log(1.0 - rng.uniform()));
      g.data()[i] = r * std::cos(2.0 * std::numbers::pi * rng.uniform());
    }
    const Matrix x = mix * g;
    return {x.topRows(v), x.bottomRows(u)};
  }
};

void estimator_consistency() {
  const auto t0 = Clock::now();
  const double mean_gap = selfcheck::running_mean_gap(500, 13);

  GaussianSource src{Matrix(5, 5), 3, 2};
  src.mix << 1.0, 0.0, 0.0, 0.0, 0.0,
             0.3, 0.9, 0.0, 0.0, 0.0,
             0.0, -0.4, 0.8, 0.0, 0.0,
             0.5, 0.2, 0.0, 0.7, 0.0,
             0.0, 0.0, -0.6, 0.3, 0.6;
  const Matrix truth = src.population_cross_cov();
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(mix_seed(17, static_cast<std::uint64_t>(trial)));
    CuXCovState state(0.99, 3, 2);
    std::vector<double> single;
    Matrix sigma_a;
    for (int step = 0; step < 500; ++step) {
      const Matrix sigma_m = batch_cross_cov(src.draw(32, rng));
      single.push_back((sigma_m - truth).norm());
      sigma_a = state.update(sigma_m);
    }
    std::nth_element(single.begin(), single.begin() + 250, single.end());
    if ((sigma_a - truth).norm() < single[250]) ++wins;
  }
  const double secs = seconds_since(t0);
  report(3, mean_gap <= 1e-12 && wins >= 95 && secs < 60.0,
         "alpha=1 running-mean gap " + fmt(mean_gap) + "; alpha=0.99 beats median batch error in " +
             std::to_string(wins) + "/100 trials; runtime " + fmt(secs) + " s");
}

void aupr_oracle() {
  std::size_t count = 0;
  const double gap = selfcheck::aupr_bruteforce_gap(8, &count);
  report(4, gap == 0.0, "max gap " + fmt(gap) + " over " + std::to_string(count) + " instances");
}

struct Arm {
  double aupr = 0.0;
  double seconds = 0.0;
  double held_out_cov = 0.0;
};

Arm run_arm(const SyntheticDataset& ds, const SplitSpec& split, TrainConfig config, Variant variant) {
  config.variant = variant;
  const auto t0 = Clock::now();
  const auto fitted = fit(ds.catalog, ds.labels, split, config);
  Arm arm;
  arm.seconds = seconds_since(t0);
  EvalOptions eo;
  eo.seed = config.seed;
  arm.aupr = evaluate_protocol(fitted.params, ds.catalog, ds.labels, split,
                               {{1, ds.labels.num_types()}}, eo)
                 .collections[0]
                 .mean;
  if (config.effective_u() > 0) {
    const auto reps = encode_batch(fitted.params, pair_matrix(ds.catalog, split.test_pairs));
    arm.held_out_cov = batch_cross_cov(reps).cwiseAbs().maxCoeff();
  }
  return arm;
}

void synthetic_end_to_end(const std::string& config_dir) {
  auto synth_in = detail::open_input(config_dir + "/synth.conf");
  SynthConfig synth = cli::parse_synth_config(synth_in, config_dir + "/synth.conf");
  const TrainConfig base = load_train_config(config_dir + "/synthetic.conf");

  double sum = 0.0, worst_secs = 0.0, worst_cov = 0.0;
  int beats_x = 0, beats_r = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    synth.seed = seed;
    const auto ds = synth_generate(synth);
    const auto split = drug_disjoint_split(ds.catalog, ds.labels, base.mask_fraction, seed);
    TrainConfig config = base;
    config.seed = seed;
    const Arm full = run_arm(ds, split, config, Variant::full);
    const Arm no_x = run_arm(ds, split, config, Variant::no_xcov);
    const Arm no_r = run_arm(ds, split, config, Variant::no_reconstruction);
    sum += full.aupr;
    worst_secs = std::max(worst_secs, full.seconds);
    worst_cov = std::max(worst_cov, full.held_out_cov);
    beats_x += full.aupr >= no_x.aupr;
    beats_r += full.aupr >= no_r.aupr;
    per_seed += " " + fmt(full.aupr) + "/" + fmt(no_x.aupr) + "/" + fmt(no_r.aupr);
  }
  const double mean = sum / 5.0;
  report(5, mean >= 0.90 && worst_secs <= 300.0 && worst_cov <= 0.05,
         "mean pooled AUPR " + fmt(mean) + "; slowest seed " + fmt(worst_secs) +
             " s; held-out max |cross-cov| " + fmt(worst_cov));
  report(6, beats_x >= 4 && beats_r >= 4,
         "MuLFA >= MuLFA-X in " + std::to_string(beats_x) + "/5, >= MuLFA-R in " +
             std::to_string(beats_r) + "/5 (full/X/R:" + per_seed + ")");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism_and_persistence() {
  SynthConfig synth;
  synth.seed = 3;
  const auto ds = synth_generate(synth);
  const auto split = drug_disjoint_split(ds.catalog, ds.labels, 0.1, 3);
  TrainConfig config;
  config.hidden = {32};
  config.u = 4;
  config.batch_size = 16;
  config.epochs = 10;
  config.seed = 3;

  const auto dir = std::filesystem::temp_directory_path() / "mulfa_acceptance";
  std::filesystem::create_directories(dir);
  const auto a = fit(ds.catalog, ds.labels, split, config);
  const auto b = fit(ds.catalog, ds.labels, split, config);
  write_history_csv(a.history, (dir / "a.csv").string());
  write_history_csv(b.history, (dir / "b.csv").string());
  const bool same_bytes = slurp((dir / "a.csv").string()) == slurp((dir / "b.csv").string());

  save_checkpoint(a.params, (dir / "ckpt.txt").string());
  const auto loaded = load_checkpoint((dir / "ckpt.txt").string());
  Rng rng(99);
  Matrix inputs(100, a.params.shape.input_width());
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.uniform();
  const auto fa = forward_batch(a.params, inputs);
  const auto fb = forward_batch(loaded, inputs);
  const double gap = std::max({(fa.rep.y_tilde - fb.rep.y_tilde).cwiseAbs().maxCoeff(),
                               (fa.rep.z_tilde - fb.rep.z_tilde).cwiseAbs().maxCoeff(),
                               (fa.reconstruction - fb.reconstruction).cwiseAbs().maxCoeff()});
  std::filesystem::remove_all(dir);
  report(7, same_bytes && gap <= 1e-15,
         std::string("history CSV ") + (same_bytes ? "byte-identical" : "differs") +
             "; checkpoint round-trip max forward gap " + fmt(gap) + " on 100 inputs");
}

void canonical_identity() {
  const double gap = selfcheck::identity_decoder_gap();
  report(8, gap == 0.0, "identity decoder max gap " + fmt(gap));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config_dir = argc > 1 ? argv[1] : MULFA_CONFIG_DIR;
  try {
    gradient_fidelity();
    degeneracy();
    estimator_consistency();
    aupr_oracle();
    synthetic_end_to_end(config_dir);
    determinism_and_persistence();
    canonical_identity();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
