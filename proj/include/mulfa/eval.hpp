#ifndef MULFA_EVAL_HPP
#define MULFA_EVAL_HPP

// AUPR, the repeated-subsample evaluation protocol over frequency-ranked DDI
// collections, and the (alpha, lambda) and CuXCov-vs-XCov experiment grids.

#include "mulfa/train.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

namespace mulfa {

/// Average precision: the mean, over positives, of precision at the
/// positive's rank in descending score order. Tied scores form one group
/// and every positive in a group gets the precision at the group's end.
inline double aupr(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("aupr: length mismatch");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("aupr: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0) throw ValidationError("aupr: no positive instances");
  if (positives == labels.size()) throw ValidationError("aupr: no negative instances");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t seen = 0, hits = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    std::size_t group_hits = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      group_hits += static_cast<std::size_t>(labels[order[end]]);
      ++end;
    }
    seen += end - start;
    hits += group_hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(seen);
    for (std::size_t k = 0; k < group_hits; ++k) sum += precision;
    start = end;
  }
  return sum / static_cast<double>(positives);
}

/// y_hat for every pair, one row per pair (|pairs| x v).
inline Matrix score_pairs(const NetworkParams& params, const DrugCatalog& catalog,
                          std::span<const PairId> pairs) {
  Matrix out(static_cast<Eigen::Index>(pairs.size()), params.shape.v);
  constexpr std::size_t chunk = 1024;
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    const auto count = std::min(chunk, pairs.size() - start);
    const auto rep = encode_batch(params, pair_matrix(catalog, pairs.subspan(start, count)));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) =
        rep.y_tilde.transpose();
  }
  return out;
}

/// 1-based inclusive rank range of frequency-ranked types.
struct Collection {
  int lo = 1;
  int hi = 1;

  bool operator==(const Collection&) const = default;
};

/// Parses "1-50,51-100,101-150".
inline std::vector<Collection> parse_collections(const std::string& text) {
  std::vector<Collection> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const std::string range(detail::trim(item));
    const auto dash = range.find('-');
    if (dash == std::string::npos) throw ValidationError("collection '" + range + "' is not lo-hi");
    const auto lo = detail::parse_integer(std::string_view(range).substr(0, dash));
    const auto hi = detail::parse_integer(std::string_view(range).substr(dash + 1));
    if (!lo || !hi) throw ValidationError("collection '" + range + "' is not lo-hi");
    if (*lo < 1 || *hi < *lo) throw ValidationError("collection '" + range + "' is malformed");
    out.push_back({static_cast<int>(*lo), static_cast<int>(*hi)});
  }
  if (out.empty()) throw ValidationError("no collections given");
  return out;
}

enum class Pooling { pooled, macro };

struct EvalOptions {
  int repetitions = 50;
  double subsample = 0.5;
  std::uint64_t seed = 1;
  Pooling pooling = Pooling::pooled;
  int max_redraws = 100;
};

struct CollectionResult {
  Collection range;
  std::vector<int> types;
  std::vector<double> auprs;             // one per repetition
  std::vector<std::size_t> instances;    // pooled instance count per repetition
  int redraws = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct EvalReport {
  std::vector<CollectionResult> collections;
  int repetitions = 0;
  double subsample = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

inline std::vector<std::size_t> draw_subsample(std::size_t n, double fraction,
                                               std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// AUPR of one collection on the drawn test rows, or nullopt when the draw
// has no positive (or no negative) instance to rank.
inline std::optional<double> collection_aupr(const LabelStore& labels,
                                             std::span<const PairId> test_pairs,
                                             const Matrix& scores,
                                             std::span<const std::size_t> rows,
                                             std::span<const int> types, Pooling pooling,
                                             std::size_t* instances) {
  if (pooling == Pooling::pooled) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t r : rows) {
      for (int t : types) {
        s.push_back(scores(static_cast<Eigen::Index>(r), t));
        y.push_back(labels.is_positive(test_pairs[r], t) ? 1 : 0);
      }
    }
    if (instances) *instances = s.size();
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) return std::nullopt;
    return aupr(s, y);
  }
  double total = 0.0;
  int counted = 0;
  std::size_t n_inst = 0;
  for (int t : types) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t r : rows) {
      s.push_back(scores(static_cast<Eigen::Index>(r), t));
      y.push_back(labels.is_positive(test_pairs[r], t) ? 1 : 0);
    }
    n_inst += s.size();
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) continue;
    total += aupr(s, y);
    ++counted;
  }
  if (instances) *instances = n_inst;
  if (counted == 0) return std::nullopt;
  return total / counted;
}

}  // namespace detail

/// Runs the repeated-subsample protocol on precomputed scores whose rows
/// align with split.test_pairs. Negatives are G_i only: every test pair is
/// labeled, so a pair is negative for type i exactly when it is in D - E_i.
inline EvalReport evaluate_scores(const LabelStore& labels, const SplitSpec& split,
                                  const Matrix& test_scores,
                                  const std::vector<Collection>& collections,
                                  const EvalOptions& options) {
  if (split.test_pairs.empty()) throw ValidationError("evaluate: split has no test pairs");
  if (test_scores.rows() != static_cast<Eigen::Index>(split.test_pairs.size()) ||
      test_scores.cols() != labels.num_types()) {
    throw ValidationError("evaluate: score matrix does not match the test set");
  }
  if (options.repetitions < 1) throw ValidationError("evaluate: repetitions must be >= 1");
  if (!(options.subsample > 0.0 && options.subsample <= 1.0)) {
    throw ValidationError("evaluate: subsample fraction must lie in (0,1]");
  }
  EvalReport report;
  report.repetitions = options.repetitions;
  report.subsample = options.subsample;
  report.seed = options.seed;
  const std::size_t n = split.test_pairs.size();
  for (const auto& c : collections) {
    CollectionResult result;
    result.range = c;
    result.types = top_k_types(labels, c.lo, c.hi);
    for (int rep = 0; rep < options.repetitions; ++rep) {
      const auto rep_seed = mix_seed(options.seed, static_cast<std::uint64_t>(rep));
      std::optional<double> value;
      std::size_t instances = 0;
      for (int attempt = 0; attempt <= options.max_redraws && !value; ++attempt) {
        if (attempt > 0) ++result.redraws;
        const auto rows = detail::draw_subsample(
            n, options.subsample, mix_seed(rep_seed, static_cast<std::uint64_t>(attempt)));
        value = detail::collection_aupr(labels, split.test_pairs, test_scores, rows,
                                        result.types, options.pooling, &instances);
      }
      if (!value) {
        throw ValidationError("evaluate: collection " + std::to_string(c.lo) + "-" +
                              std::to_string(c.hi) +
                              " has no rankable positives in the test set");
      }
      result.auprs.push_back(*value);
      result.instances.push_back(instances);
    }
    std::tie(result.mean, result.std) = detail::mean_std(result.auprs);
    report.collections.push_back(std::move(result));
  }
  return report;
}

inline EvalReport evaluate_protocol(const NetworkParams& params, const DrugCatalog& catalog,
                                    const LabelStore& labels, const SplitSpec& split,
                                    const std::vector<Collection>& collections,
                                    const EvalOptions& options) {
  if (params.shape.v != labels.num_types()) {
    throw ValidationError("evaluate: model predicts " + std::to_string(params.shape.v) +
                          " types but the label store has " +
                          std::to_string(labels.num_types()));
  }
  if (params.shape.input_width() != 2 * catalog.width()) {
    throw ValidationError("evaluate: model input width does not match the fingerprints");
  }
  return evaluate_scores(labels, split, score_pairs(params, catalog, split.test_pairs),
                         collections, options);
}

inline void write_eval_raw_csv(const EvalReport& report, const std::string& path) {
  auto out = detail::open_output(path);
  out << "collection_lo,collection_hi,repetition,aupr\n" << std::setprecision(17);
  for (const auto& c : report.collections) {
    for (std::size_t r = 0; r < c.auprs.size(); ++r) {
      out << c.range.lo << ',' << c.range.hi << ',' << r + 1 << ',' << c.auprs[r] << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_eval_summary_csv(const EvalReport& report, const std::string& path) {
  auto out = detail::open_output(path);
  out << "collection_lo,collection_hi,mean,std,n\n" << std::setprecision(17);
  for (const auto& c : report.collections) {
    out << c.range.lo << ',' << c.range.hi << ',' << c.mean << ',' << c.std << ','
        << c.auprs.size() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Experiment grids

/// Worker count from MULFA_WORKERS (default 1).
inline int worker_count() {
  if (const char* env = std::getenv("MULFA_WORKERS")) {
    const auto n = detail::parse_integer(env);
    if (n && *n >= 1) return static_cast<int>(*n);
  }
  return 1;
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index is
/// independent, so results do not depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

/// Trains and evaluates one configuration; returns the first collection's
/// mean and std.
inline std::pair<double, double> fit_and_score(const DrugCatalog& catalog,
                                               const LabelStore& labels,
                                               const SplitSpec& split, const TrainConfig& config,
                                               const Collection& collection,
                                               const EvalOptions& options) {
  const auto model = fit(catalog, labels, split, config);
  const auto report = evaluate_protocol(model.params, catalog, labels, split, {collection}, options);
  return {report.collections.front().mean, report.collections.front().std};
}

struct SweepCell {
  double alpha = 0.0;
  double lambda = 0.0;
  double mean_aupr = std::numeric_limits<double>::quiet_NaN();
  double std_aupr = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty when the cell succeeded
};

/// One model per (alpha, lambda) cell, all other settings and seeds shared.
/// A failing cell is recorded and the sweep continues.
inline std::vector<SweepCell> sensitivity_sweep(const DrugCatalog& catalog,
                                                const LabelStore& labels, const SplitSpec& split,
                                                const TrainConfig& base,
                                                const std::vector<double>& alpha_grid,
                                                const std::vector<double>& lambda_grid,
                                                const Collection& collection,
                                                const EvalOptions& options, int workers = 1) {
  if (alpha_grid.empty() || lambda_grid.empty()) throw ValidationError("sweep: empty grid");
  std::vector<SweepCell> cells;
  for (double a : alpha_grid) {
    for (double l : lambda_grid) {
      SweepCell cell;
      cell.alpha = a;
      cell.lambda = l;
      cells.push_back(cell);
    }
  }
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    auto& cell = cells[i];
    try {
      auto config = base;
      config.alpha = cell.alpha;
      config.lambda = cell.lambda;
      std::tie(cell.mean_aupr, cell.std_aupr) =
          fit_and_score(catalog, labels, split, config, collection, options);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  return cells;
}

inline void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path) {
  auto out = detail::open_output(path);
  out << "alpha,lambda,mean_aupr,std_aupr\n" << std::setprecision(17);
  for (const auto& c : cells) {
    out << c.alpha << ',' << c.lambda << ',' << c.mean_aupr << ',' << c.std_aupr << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

struct ComparisonRow {
  int task_count = 0;
  int batch_size = 0;
  double alpha = 0.0;
  double xcov_alpha = 0.0;
  double mean_cuxcov = std::numeric_limits<double>::quiet_NaN();
  double std_cuxcov = std::numeric_limits<double>::quiet_NaN();
  double mean_xcov = std::numeric_limits<double>::quiet_NaN();
  double std_xcov = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

/// For every (task count, batch size) pair, trains twin models on the most
/// frequent `task_count` types that differ only in the decay rate
/// (config.alpha against xcov_alpha, 0 by default) and evaluates both on
/// all of those types.
inline std::vector<ComparisonRow> compare_cuxcov_xcov(
    const DrugCatalog& catalog, const LabelStore& labels, const SplitSpec& split,
    const TrainConfig& config, const std::vector<int>& task_counts,
    const std::vector<int>& batch_sizes, const EvalOptions& options, double xcov_alpha = 0.0,
    int workers = 1) {
  if (task_counts.empty() || batch_sizes.empty()) throw ValidationError("compare: empty grid");
  for (int t : task_counts) {
    if (t < 1 || t > labels.num_types()) {
      throw ValidationError("compare: task count " + std::to_string(t) + " outside 1-" +
                            std::to_string(labels.num_types()));
    }
  }
  for (int b : batch_sizes) {
    if (b < 2) throw ValidationError("compare: batch sizes must be at least 2");
  }
  std::vector<ComparisonRow> rows;
  for (int t : task_counts) {
    for (int b : batch_sizes) {
      ComparisonRow row;
      row.task_count = t;
      row.batch_size = b;
      row.alpha = config.alpha;
      row.xcov_alpha = xcov_alpha;
      rows.push_back(row);
    }
  }
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    auto& row = rows[i];
    try {
      const auto types = top_k_types(labels, 1, row.task_count);
      const auto subset = labels.restrict_to_types(types);
      const auto sub_split = split_by_mask(subset, split.masked_drugs, split.seed);
      const Collection all{1, row.task_count};
      auto arm = config;
      arm.batch_size = row.batch_size;
      std::tie(row.mean_cuxcov, row.std_cuxcov) =
          fit_and_score(catalog, subset, sub_split, arm, all, options);
      arm.alpha = row.xcov_alpha;
      std::tie(row.mean_xcov, row.std_xcov) =
          fit_and_score(catalog, subset, sub_split, arm, all, options);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

inline void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path) {
  auto out = detail::open_output(path);
  out << "task_count,batch_size,alpha,mean_aupr_cuxcov,std_aupr_cuxcov,xcov_alpha,"
         "mean_aupr_xcov,std_aupr_xcov\n"
      << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.task_count << ',' << r.batch_size << ',' << r.alpha << ',' << r.mean_cuxcov << ','
        << r.std_cuxcov << ',' << r.xcov_alpha << ',' << r.mean_xcov << ',' << r.std_xcov
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mulfa

#endif  // MULFA_EVAL_HPP
