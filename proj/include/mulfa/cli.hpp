#ifndef MULFA_CLI_HPP
#define MULFA_CLI_HPP

// Command-line front end. Every subcommand writes CSV/TSV artifacts into an
// output directory and maps library errors onto exit codes
// (0 ok, 1 validation, 2 numerical, 3 I/O).

#include "mulfa/mulfa.hpp"
#include "mulfa/selfcheck.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace mulfa::cli {

inline std::vector<double> parse_double_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    out.push_back(detail::parse_double_value(flag, std::string(detail::trim(item))));
  }
  if (out.empty()) throw ValidationError(flag + ": empty list");
  return out;
}

inline std::vector<int> parse_int_list(const std::string& flag, const std::string& text) {
  auto out = detail::parse_int_list(flag, text);
  if (out.empty()) throw ValidationError(flag + ": empty list");
  return out;
}

inline SynthConfig parse_synth_config(std::istream& in, const std::string& origin) {
  SynthConfig c;
  for (const auto& [key, value] : detail::parse_key_values(in, origin)) {
    if (key == "m") c.m = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "l") c.l = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "v") c.v = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "u_true") c.u_true = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "arity") c.arity = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "density") c.density = detail::parse_double_value(key, value);
    else if (key == "flip") c.flip = detail::parse_double_value(key, value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::parse_int_value(key, value));
    else throw ValidationError(origin + ": unknown synth key '" + key + "'");
  }
  c.validate();
  return c;
}

inline std::filesystem::path prepare_output(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

/// Options shared by several subcommands; unset strings mean "not given".
struct Options {
  std::string config;
  std::string fingerprints;
  std::string interactions;
  std::string out = ".";
  std::string checkpoint;
  std::string collections;
  std::string alpha_grid = "0,0.3,0.6,0.9";
  std::string lambda_grid = "1.5,2,4,8";
  std::string batch_sizes = "16,32,64";
  std::string task_counts;
  std::string metric = "euclidean";
  std::string pooling = "pooled";
  std::string types;
  std::optional<std::uint64_t> seed;
  int repetitions = 50;
  double subsample = 0.5;
  double xcov_alpha = 0.0;
  int neighbors = 3;
  std::size_t zbar_samples = 0;
};

struct Dataset {
  DrugCatalog catalog;
  LabelStore labels;
};

inline Dataset load_dataset(const Options& o) {
  if (o.fingerprints.empty()) throw ValidationError("--fingerprints is required");
  if (o.interactions.empty()) throw ValidationError("--interactions is required");
  auto catalog = load_fingerprints(o.fingerprints);
  auto labels = load_interactions(o.interactions, catalog);
  return {std::move(catalog), std::move(labels)};
}

inline TrainConfig resolve_config(const Options& o) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : load_train_config(o.config);
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

inline EvalOptions eval_options(const Options& o, std::uint64_t seed) {
  EvalOptions e;
  e.repetitions = o.repetitions;
  e.subsample = o.subsample;
  e.seed = seed;
  if (o.pooling == "pooled") e.pooling = Pooling::pooled;
  else if (o.pooling == "macro") e.pooling = Pooling::macro;
  else throw ValidationError("--pooling must be pooled or macro");
  return e;
}

inline std::vector<Collection> resolve_collections(const Options& o, const LabelStore& labels) {
  if (o.collections.empty()) return {{1, labels.num_types()}};
  return parse_collections(o.collections);
}

inline void write_masked(const SplitSpec& split, const DrugCatalog& catalog,
                         const std::filesystem::path& path) {
  auto out = detail::open_output(path.string());
  out << "# held-out drugs, split seed " << split.seed << '\n';
  for (int d : split.masked_drugs) out << catalog.id(d) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline int cmd_train(const Options& o, std::ostream& log) {
  const auto config = resolve_config(o);
  const auto data = load_dataset(o);
  const auto dir = prepare_output(o.out);
  const auto split = drug_disjoint_split(data.catalog, data.labels, config.mask_fraction, config.seed);
  {
    auto snap = detail::open_output((dir / "config.resolved").string());
    snap << format_train_config(config);
  }
  write_masked(split, data.catalog, dir / "masked_drugs.txt");
  try {
    const auto result = fit(data.catalog, data.labels, split, config);
    save_checkpoint(result.params, (dir / "checkpoint.txt").string());
    write_history_csv(result.history, (dir / "history.csv").string());
    log << "trained " << result.history.size() << " epochs; final objective "
        << (result.history.empty() ? 0.0 : result.history.back().objective) << '\n';
  } catch (const DivergenceError& e) {
    save_checkpoint(e.last_good(), (dir / "checkpoint.last_good.txt").string());
    write_history_csv(e.history(), (dir / "history.csv").string());
    throw;
  }
  return 0;
}

inline int cmd_eval(const Options& o, std::ostream& log) {
  if (o.checkpoint.empty()) throw ValidationError("--checkpoint is required");
  const auto config = resolve_config(o);
  const auto params = load_checkpoint(o.checkpoint);
  const auto data = load_dataset(o);
  const auto collections = resolve_collections(o, data.labels);
  const auto dir = prepare_output(o.out);
  const auto split = drug_disjoint_split(data.catalog, data.labels, config.mask_fraction, config.seed);
  const auto report = evaluate_protocol(params, data.catalog, data.labels, split, collections,
                                        eval_options(o, config.seed));
  write_eval_raw_csv(report, (dir / "eval_raw.csv").string());
  write_eval_summary_csv(report, (dir / "eval_summary.csv").string());
  for (const auto& c : report.collections) {
    log << "types " << c.range.lo << '-' << c.range.hi << ": AUPR " << c.mean << " +/- " << c.std
        << '\n';
  }
  return 0;
}

inline int cmd_sweep(const Options& o, std::ostream& log) {
  const auto config = resolve_config(o);
  const auto data = load_dataset(o);
  const auto alphas = parse_double_list("--alpha-grid", o.alpha_grid);
  const auto lambdas = parse_double_list("--lambda-grid", o.lambda_grid);
  const auto collection = resolve_collections(o, data.labels).front();
  const auto dir = prepare_output(o.out);
  const auto split = drug_disjoint_split(data.catalog, data.labels, config.mask_fraction, config.seed);
  const auto cells = sensitivity_sweep(data.catalog, data.labels, split, config, alphas, lambdas,
                                       collection, eval_options(o, config.seed), worker_count());
  write_sweep_csv(cells, (dir / "sweep.csv").string());
  int failed = 0;
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      ++failed;
      log << "cell alpha=" << c.alpha << " lambda=" << c.lambda << " failed: " << c.error << '\n';
    }
  }
  log << cells.size() << " cells, " << failed << " failed\n";
  return 0;
}

inline int cmd_compare(const Options& o, std::ostream& log) {
  const auto config = resolve_config(o);
  const auto data = load_dataset(o);
  const auto tasks = o.task_counts.empty() ? std::vector<int>{data.labels.num_types()}
                                           : parse_int_list("--task-counts", o.task_counts);
  const auto batches = parse_int_list("--batch-sizes", o.batch_sizes);
  const auto dir = prepare_output(o.out);
  const auto split = drug_disjoint_split(data.catalog, data.labels, config.mask_fraction, config.seed);
  const auto rows = compare_cuxcov_xcov(data.catalog, data.labels, split, config, tasks, batches,
                                        eval_options(o, config.seed), o.xcov_alpha, worker_count());
  write_comparison_csv(rows, (dir / "compare_losses.csv").string());
  for (const auto& r : rows) {
    if (!r.error.empty()) log << "t=" << r.task_count << " N=" << r.batch_size << " failed: " << r.error << '\n';
  }
  log << rows.size() << " comparison rows\n";
  return 0;
}

inline int cmd_generate(const Options& o, std::ostream& log) {
  if (o.checkpoint.empty()) throw ValidationError("--checkpoint is required");
  const auto params = load_checkpoint(o.checkpoint);
  const auto data = load_dataset(o);
  const auto metric = parse_metric(o.metric);
  if (params.shape.v != data.labels.num_types() ||
      params.shape.input_width() != 2 * data.catalog.width()) {
    throw ValidationError("generate: checkpoint does not match the data dimensions");
  }
  std::vector<int> types;
  if (o.types.empty()) {
    for (int t = 0; t < data.labels.num_types(); ++t) types.push_back(t);
  } else {
    std::stringstream ss(o.types);
    for (std::string id; std::getline(ss, id, ',');) {
      const std::string key(detail::trim(id));
      int found = -1;
      for (int t = 0; t < data.labels.num_types(); ++t) {
        if (data.labels.type_id(t) == key) found = t;
      }
      if (found < 0) throw ValidationError("generate: unknown type id '" + key + "'");
      types.push_back(found);
    }
  }
  const auto dir = prepare_output(o.out);
  const auto pairs = o.zbar_samples == 0
                         ? all_pairs(data.catalog.size())
                         : sample_pairs(data.catalog.size(), o.zbar_samples, o.seed.value_or(1));
  const Vector zbar = estimate_zbar(params, data.catalog, pairs);
  const auto samples =
      export_canonical_vectors(params, data.labels, types, zbar, (dir / "canonical.csv").string());
  std::vector<std::pair<std::string, NearestReport>> reports;
  for (const auto& s : samples) {
    reports.emplace_back(data.labels.type_id(s.type_index),
                         nearest_reference(s, data.catalog, o.neighbors, metric));
  }
  write_nearest_csv(reports, metric, (dir / "nearest.csv").string());
  log << samples.size() << " canonical samples, zbar over " << pairs.size() << " pairs\n";
  return 0;
}

inline int cmd_synth(const Options& o, std::ostream& log) {
  SynthConfig c;
  if (!o.config.empty()) {
    auto in = detail::open_input(o.config);
    c = parse_synth_config(in, o.config);
  }
  if (o.seed) c.seed = *o.seed;
  const auto ds = synth_generate(c);
  const auto dir = prepare_output(o.out);
  write_fingerprints(ds.catalog, (dir / "fingerprints.tsv").string());
  write_interactions(ds.labels, ds.catalog, (dir / "interactions.tsv").string());
  write_truth(ds.truth, ds.labels, (dir / "truth.tsv").string());
  log << "synthetic dataset: " << ds.catalog.size() << " drugs, " << ds.labels.num_types()
      << " types, " << ds.labels.labeled().size() << " labeled pairs\n";
  return 0;
}

inline int cmd_check(const Options& o, std::ostream& log) {
  bool ok = true;
  for (const auto& r : selfcheck::run_all(o.seed.value_or(7))) {
    log << (r.passed ? "ok   " : "FAIL ") << r.name << "  " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : static_cast<int>(Error::Category::numerical);
}

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"MuLFA: multi-label factorization autoencoder for drug-drug interactions"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  const auto add_data = [&](CLI::App* sub) {
    sub->add_option("--fingerprints", o.fingerprints, "drug fingerprint TSV");
    sub->add_option("--interactions", o.interactions, "interaction TSV");
  };
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file");
    sub->add_option("--out", o.out, "output directory (created if absent)");
    sub->add_option("--seed", seed, "seed override");
  };
  const auto add_eval = [&](CLI::App* sub) {
    sub->add_option("--collections", o.collections, "rank ranges, e.g. 1-50,51-100");
    sub->add_option("--repetitions", o.repetitions, "subsampling repetitions");
    sub->add_option("--subsample", o.subsample, "test fraction per repetition");
    sub->add_option("--pooling", o.pooling, "pooled or macro");
  };

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train);
  add_data(train);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out drugs");
  add_common(eval);
  add_data(eval);
  add_eval(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  auto* sweep = app.add_subcommand("sweep", "alpha x lambda sensitivity grid");
  add_common(sweep);
  add_data(sweep);
  add_eval(sweep);
  sweep->add_option("--alpha-grid", o.alpha_grid, "comma-separated decay rates");
  sweep->add_option("--lambda-grid", o.lambda_grid, "comma-separated positive weights");
  auto* compare = app.add_subcommand("compare-losses", "CuXCov against XCov");
  add_common(compare);
  add_data(compare);
  add_eval(compare);
  compare->add_option("--task-counts", o.task_counts, "comma-separated numbers of types");
  compare->add_option("--batch-sizes", o.batch_sizes, "comma-separated batch sizes");
  compare->add_option("--xcov-alpha", o.xcov_alpha, "decay rate of the XCov arm");
  auto* generate = app.add_subcommand("generate", "canonical samples and nearest drugs");
  add_common(generate);
  add_data(generate);
  generate->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  generate->add_option("--metric", o.metric, "euclidean or tanimoto");
  generate->add_option("--types", o.types, "comma-separated type ids (default all)");
  generate->add_option("--neighbors", o.neighbors, "neighbors per half");
  generate->add_option("--zbar-samples", o.zbar_samples, "pairs sampled for mean z (0 = all)");
  auto* synth = app.add_subcommand("synth", "write a planted-factor synthetic dataset");
  add_common(synth);
  auto* check = app.add_subcommand("check", "gradient and estimator self-tests");
  check->add_option("--seed", seed, "seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? 0 : static_cast<int>(Error::Category::validation);
  }
  for (auto* sub : {train, eval, sweep, compare, generate, synth, check}) {
    for (const auto* opt : sub->get_options()) {
      if (opt->get_name() == "--seed" && opt->count() > 0) o.seed = seed;
    }
  }

  try {
    if (*train) return cmd_train(o, log);
    if (*eval) return cmd_eval(o, log);
    if (*sweep) return cmd_sweep(o, log);
    if (*compare) return cmd_compare(o, log);
    if (*generate) return cmd_generate(o, log);
    if (*synth) return cmd_synth(o, log);
    if (*check) return cmd_check(o, log);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(Error::Category::validation);
  }
  return static_cast<int>(Error::Category::validation);
}

}  // namespace mulfa::cli

#endif  // MULFA_CLI_HPP
