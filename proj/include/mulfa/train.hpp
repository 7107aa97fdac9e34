#ifndef MULFA_TRAIN_HPP
#define MULFA_TRAIN_HPP

// Mini-batch assembly, Adam updates and the training loop.

#include "mulfa/data.hpp"
#include "mulfa/losses.hpp"
#include "mulfa/network.hpp"

#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mulfa {

/// Model variants used for ablations.
enum class Variant {
  full,               // all three losses
  no_reconstruction,  // reconstruction loss omitted, decoder untrained
  no_xcov,            // cross-covariance loss omitted
  no_z,               // no nuisance block at all
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_reconstruction: return "no_reconstruction";
    case Variant::no_xcov: return "no_xcov";
    case Variant::no_z: return "no_z";
  }
  return "?";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "full" || name == "mulfa") return Variant::full;
  if (name == "no_reconstruction" || name == "mulfa-r") return Variant::no_reconstruction;
  if (name == "no_xcov" || name == "mulfa-x") return Variant::no_xcov;
  if (name == "no_z" || name == "mulfa-x+") return Variant::no_z;
  throw ValidationError("unknown variant: " + name);
}

struct TrainConfig {
  double beta = 1.0;
  double gamma = 0.1;
  double lambda = 4.0;
  double alpha = 0.3;
  int batch_size = 64;
  double labeled_fraction = 0.5;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 50;
  std::uint64_t seed = 1;
  bool cuxcov_reset_per_epoch = false;
  std::vector<int> hidden = {512};  // encoder hidden widths; decoder mirrors them
  int u = 64;
  Variant variant = Variant::full;
  double mask_fraction = 0.1;
  bool symmetric_augmentation = false;

  void validate() const {
    if (!(beta > 0.0) || !(gamma > 0.0)) {
      throw ValidationError("beta and gamma must be positive");
    }
    if (!(lambda > 1.0)) throw ValidationError("lambda must exceed 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");
    if (batch_size < 2) throw ValidationError("batch_size must be at least 2");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
      throw ValidationError("labeled_fraction must lie in (0,1]");
    }
    if (labeled_per_batch() < 1) {
      throw ValidationError("batch_size * labeled_fraction rounds below one labeled sample");
    }
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw ValidationError("Adam moment decays must lie in [0,1)");
    }
    if (!(adam_epsilon > 0.0)) throw ValidationError("adam_epsilon must be positive");
    if (epochs < 0) throw ValidationError("epochs must be nonnegative");
    if (u < 0) throw ValidationError("u must be nonnegative");
    for (int h : hidden) {
      if (h < 1) throw ValidationError("hidden widths must be positive");
    }
    if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) {
      throw ValidationError("mask_fraction must lie in (0,1)");
    }
  }

  int labeled_per_batch() const {
    return static_cast<int>(std::lround(batch_size * labeled_fraction));
  }
  double effective_beta() const {
    return variant == Variant::no_xcov || variant == Variant::no_z ? 0.0 : beta;
  }
  double effective_gamma() const {
    return variant == Variant::no_reconstruction ? 0.0 : gamma;
  }
  int effective_u() const { return variant == Variant::no_z ? 0 : u; }

  NetworkShape network_shape(int input_width, int v) const {
    return NetworkShape::symmetric(input_width, hidden, v, effective_u());
  }
};

// ---------------------------------------------------------------------------
// Config files: `key = value` lines, `#` comments.

namespace detail {

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline double parse_double_value(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ValidationError("config: " + key + " expects a number, got '" + value + "'");
  }
  if (used != value.size()) {
    throw ValidationError("config: " + key + " expects a number, got '" + value + "'");
  }
  return x;
}

inline long long parse_int_value(const std::string& key, const std::string& value) {
  const auto x = parse_integer(value);
  if (!x) throw ValidationError("config: " + key + " expects an integer, got '" + value + "'");
  return *x;
}

inline bool parse_bool_value(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ValidationError("config: " + key + " expects true/false, got '" + value + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');) {
    out.push_back(static_cast<int>(parse_int_value(key, std::string(trim(item)))));
  }
  return out;
}

/// Parses `key = value` lines into an ordered map; rejects duplicates.
inline std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                           const std::string& origin) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(where(origin, line_no) + "expected key = value");
    }
    const std::string key(trim(std::string_view(line).substr(0, eq)));
    const std::string value(trim(std::string_view(line).substr(eq + 1)));
    if (key.empty()) throw ValidationError(where(origin, line_no) + "empty key");
    if (!out.emplace(key, value).second) {
      throw ValidationError(where(origin, line_no) + "duplicate key " + key);
    }
  }
  return out;
}

}  // namespace detail

inline TrainConfig parse_train_config(std::istream& in, const std::string& origin = "config") {
  TrainConfig c;
  for (const auto& [key, value] : detail::parse_key_values(in, origin)) {
    if (key == "beta") c.beta = detail::parse_double_value(key, value);
    else if (key == "gamma") c.gamma = detail::parse_double_value(key, value);
    else if (key == "lambda") c.lambda = detail::parse_double_value(key, value);
    else if (key == "alpha") c.alpha = detail::parse_double_value(key, value);
    else if (key == "batch_size") c.batch_size = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "labeled_fraction") c.labeled_fraction = detail::parse_double_value(key, value);
    else if (key == "learning_rate") c.learning_rate = detail::parse_double_value(key, value);
    else if (key == "adam_beta1") c.adam_beta1 = detail::parse_double_value(key, value);
    else if (key == "adam_beta2") c.adam_beta2 = detail::parse_double_value(key, value);
    else if (key == "adam_epsilon") c.adam_epsilon = detail::parse_double_value(key, value);
    else if (key == "epochs") c.epochs = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::parse_int_value(key, value));
    else if (key == "cuxcov_reset_per_epoch") c.cuxcov_reset_per_epoch = detail::parse_bool_value(key, value);
    else if (key == "hidden") c.hidden = detail::parse_int_list(key, value);
    else if (key == "u") c.u = static_cast<int>(detail::parse_int_value(key, value));
    else if (key == "variant") c.variant = parse_variant(value);
    else if (key == "mask_fraction") c.mask_fraction = detail::parse_double_value(key, value);
    else if (key == "symmetric_augmentation") c.symmetric_augmentation = detail::parse_bool_value(key, value);
    else throw ValidationError(origin + ": unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_train_config(in, path);
}

/// Resolved snapshot in the same `key = value` format.
inline std::string format_train_config(const TrainConfig& c) {
  std::ostringstream os;
  const auto d = detail::format_double;
  os << "beta = " << d(c.beta) << '\n'
     << "gamma = " << d(c.gamma) << '\n'
     << "lambda = " << d(c.lambda) << '\n'
     << "alpha = " << d(c.alpha) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "labeled_fraction = " << d(c.labeled_fraction) << '\n'
     << "learning_rate = " << d(c.learning_rate) << '\n'
     << "adam_beta1 = " << d(c.adam_beta1) << '\n'
     << "adam_beta2 = " << d(c.adam_beta2) << '\n'
     << "adam_epsilon = " << d(c.adam_epsilon) << '\n'
     << "epochs = " << c.epochs << '\n'
     << "seed = " << c.seed << '\n'
     << "cuxcov_reset_per_epoch = " << (c.cuxcov_reset_per_epoch ? "true" : "false") << '\n'
     << "hidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << '\n'
     << "u = " << c.u << '\n'
     << "variant = " << variant_name(c.variant) << '\n'
     << "mask_fraction = " << d(c.mask_fraction) << '\n'
     << "symmetric_augmentation = " << (c.symmetric_augmentation ? "true" : "false") << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Batching

/// Indices into the labeled and unlabeled sample lists for one step.
struct BatchPlan {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;

  bool operator==(const BatchPlan&) const = default;
};

/// One epoch of batches. Each labeled sample appears exactly once, in
/// chunks of round(N * labeled_fraction); the rest of each batch is filled
/// with unlabeled samples drawn without replacement from a shuffled pool,
/// reshuffled whenever it runs out.
inline std::vector<BatchPlan> make_batches(std::size_t num_labeled, std::size_t num_unlabeled,
                                           const TrainConfig& config, std::uint64_t epoch_seed) {
  if (num_labeled == 0) throw ValidationError("make_batches: labeled set is empty");
  const int per_batch = config.labeled_per_batch();
  if (per_batch < 1) {
    throw ValidationError("make_batches: batch_size * labeled_fraction rounds below one");
  }
  const auto labeled_per = static_cast<std::size_t>(per_batch);
  const auto unlabeled_per =
      num_unlabeled == 0 ? 0 : static_cast<std::size_t>(config.batch_size - per_batch);

  Rng rng(epoch_seed);
  std::vector<std::size_t> lab(num_labeled);
  for (std::size_t i = 0; i < num_labeled; ++i) lab[i] = i;
  rng.shuffle(lab);
  std::vector<std::size_t> pool(num_unlabeled);
  for (std::size_t i = 0; i < num_unlabeled; ++i) pool[i] = i;
  rng.shuffle(pool);
  std::size_t cursor = 0;

  std::vector<BatchPlan> batches;
  for (std::size_t start = 0; start < num_labeled; start += labeled_per) {
    BatchPlan plan;
    const std::size_t end = std::min(num_labeled, start + labeled_per);
    plan.labeled.assign(lab.begin() + static_cast<std::ptrdiff_t>(start),
                        lab.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t k = 0; k < unlabeled_per; ++k) {
      if (cursor == pool.size()) {
        rng.shuffle(pool);
        cursor = 0;
      }
      plan.unlabeled.push_back(pool[cursor++]);
    }
    batches.push_back(std::move(plan));
  }
  return batches;
}

/// A pair as fed to the network; `swapped` presents (q, p) instead of (p, q).
struct Sample {
  PairId pair;
  bool swapped = false;
};

/// Network inputs and the label mask for one step.
struct TrainingBatch {
  Matrix inputs;  // N x 2l
  LabelBatch labels;
};

inline Vector sample_vector(const DrugCatalog& catalog, const Sample& s) {
  const int l = catalog.width();
  Vector out(2 * l);
  const int first = s.swapped ? s.pair.q : s.pair.p;
  const int second = s.swapped ? s.pair.p : s.pair.q;
  out.head(l) = catalog.row(first).transpose();
  out.tail(l) = catalog.row(second).transpose();
  return out;
}

/// Labeled samples come first with a full mask; unlabeled samples follow
/// with a zero mask.
inline TrainingBatch assemble_batch(const DrugCatalog& catalog, const LabelStore& store,
                                    std::span<const Sample> labeled,
                                    std::span<const Sample> unlabeled) {
  const auto n = static_cast<Eigen::Index>(labeled.size() + unlabeled.size());
  const int v = store.num_types();
  TrainingBatch batch;
  batch.inputs.resize(n, 2 * catalog.width());
  batch.labels.labels = Matrix::Zero(v, n);
  batch.labels.mask = Matrix::Zero(v, n);
  Eigen::Index s = 0;
  for (const auto& sample : labeled) {
    batch.inputs.row(s) = sample_vector(catalog, sample).transpose();
    batch.labels.mask.col(s).setOnes();
    for (int t : store.types_of(sample.pair)) batch.labels.labels(t, s) = 1.0;
    ++s;
  }
  for (const auto& sample : unlabeled) {
    batch.inputs.row(s) = sample_vector(catalog, sample).transpose();
    ++s;
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Adam

struct OptimizerState {
  Gradients first;
  Gradients second;
  long step = 0;

  static OptimizerState zeros_like(const NetworkParams& params) {
    return {zero_gradients(params), zero_gradients(params), 0};
  }
};

/// Bias-corrected Adam step applied in place.
inline void adam_update(NetworkParams& params, const Gradients& grads, OptimizerState& opt,
                        const TrainConfig& config) {
  if (grads.size() != params.layers.size() || opt.first.size() != params.layers.size()) {
    throw ValidationError("adam_update: gradient layout does not match parameters");
  }
  for (std::size_t h = 0; h < grads.size(); ++h) {
    if (grads[h].weight.rows() != params.layers[h].weight.rows() ||
        grads[h].weight.cols() != params.layers[h].weight.cols() ||
        grads[h].bias.size() != params.layers[h].bias.size()) {
      throw ValidationError("adam_update: gradient shape mismatch at layer " +
                            std::to_string(h + 1));
    }
    if (!grads[h].weight.allFinite() || !grads[h].bias.allFinite()) {
      throw NumericalError("adam_update: non-finite gradient at layer " + std::to_string(h + 1));
    }
  }
  ++opt.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  const double lr = config.learning_rate, eps = config.adam_epsilon;
  const auto step = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t h = 0; h < grads.size(); ++h) {
    step(params.layers[h].weight, grads[h].weight, opt.first[h].weight, opt.second[h].weight);
    step(params.layers[h].bias, grads[h].bias, opt.first[h].bias, opt.second[h].bias);
  }
}

// ---------------------------------------------------------------------------
// Steps and the training loop

struct StepResult {
  LossTerms terms;
  double objective = 0.0;
};

/// Losses and parameter gradients for one batch. Advances the CuXCov state
/// once; does not touch the parameters.
struct StepGradients {
  StepResult losses;
  Gradients grads;
};

inline StepGradients compute_step(const NetworkParams& params, CuXCovState& cuxcov,
                                  const TrainingBatch& batch, const TrainConfig& config) {
  const BatchForward fwd = forward_batch(params, batch.inputs);
  const auto cls = cls_loss(fwd.rep.y_tilde, batch.labels, config.lambda);
  cuxcov.update(batch_cross_cov(fwd.rep));
  const auto cux = cuxcov_loss(cuxcov, fwd.rep);
  const auto rec = rcnst_loss(batch.inputs, fwd.reconstruction);
  const double beta = config.effective_beta();
  const double gamma = config.effective_gamma();
  const auto total = weighted_objective(cls, cux, rec, beta, gamma);
  StepGradients out;
  out.losses.terms = {cls.value, cux.value, rec.value};
  out.losses.objective = total.value;
  out.grads = backward_batch(params, fwd.trace, total.d_reconstruction, total.d_y, total.d_z);
  return out;
}

/// forward, losses, CuXCov update, backward, Adam.
inline StepResult train_step(NetworkParams& params, OptimizerState& opt, CuXCovState& cuxcov,
                             const TrainingBatch& batch, const TrainConfig& config) {
  auto step = compute_step(params, cuxcov, batch, config);
  if (!std::isfinite(step.losses.objective)) {
    throw NumericalError("training objective is not finite");
  }
  adam_update(params, step.grads, opt, config);
  return step.losses;
}

struct EpochRecord {
  int epoch = 0;
  LossTerms terms;  // summed over the epoch's steps
  double objective = 0.0;
  std::optional<double> validation_aupr;

  bool operator==(const EpochRecord& o) const {
    return epoch == o.epoch && terms.cls == o.terms.cls && terms.cuxcov == o.terms.cuxcov &&
           terms.rcnst == o.terms.rcnst && objective == o.objective &&
           validation_aupr == o.validation_aupr;
  }
};

using TrainHistory = std::vector<EpochRecord>;

struct FitResult {
  NetworkParams params;
  TrainHistory history;
};

/// Raised when the objective stops being finite; carries the parameters
/// from before the failing step.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, NetworkParams last_good, TrainHistory history)
      : NumericalError(what), last_good_(std::move(last_good)), history_(std::move(history)) {}

  const NetworkParams& last_good() const { return last_good_; }
  const TrainHistory& history() const { return history_; }

 private:
  NetworkParams last_good_;
  TrainHistory history_;
};

using ValidationHook = std::function<double(const NetworkParams&)>;

/// Labeled training samples (split.train_pairs) and unlabeled samples
/// (F minus pairs touching masked drugs), with swapped copies when
/// symmetric augmentation is on.
struct TrainingSets {
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
};

inline TrainingSets training_sets(const LabelStore& labels, const SplitSpec& split,
                                  const TrainConfig& config) {
  TrainingSets sets;
  const auto add = [&](std::vector<Sample>& out, const std::vector<PairId>& pairs) {
    for (const auto& pair : pairs) {
      out.push_back({pair, false});
      if (config.symmetric_augmentation) out.push_back({pair, true});
    }
  };
  add(sets.labeled, split.train_pairs);
  add(sets.unlabeled, unlabeled_training_pairs(labels, split));
  return sets;
}

/// Trains from a fresh initialization.
inline FitResult fit(const DrugCatalog& catalog, const LabelStore& labels, const SplitSpec& split,
                     const TrainConfig& config, const ValidationHook& validate = {}) {
  config.validate();
  if (catalog.size() != labels.num_drugs()) {
    throw ValidationError("catalog and label store disagree on drug count");
  }
  const auto shape = config.network_shape(2 * catalog.width(), labels.num_types());
  FitResult result{init_params(shape, config.seed), {}};
  if (config.epochs == 0) return result;

  const auto sets = training_sets(labels, split, config);
  if (sets.labeled.empty()) throw ValidationError("fit: no labeled training pairs");

  auto opt = OptimizerState::zeros_like(result.params);
  CuXCovState cuxcov(config.alpha, shape.v, shape.u);
  std::vector<Sample> lab, unl;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.cuxcov_reset_per_epoch) cuxcov.reset();
    const auto plans = make_batches(sets.labeled.size(), sets.unlabeled.size(), config,
                                    mix_seed(config.seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch)));
    EpochRecord record;
    record.epoch = epoch;
    for (const auto& plan : plans) {
      lab.clear();
      unl.clear();
      for (auto i : plan.labeled) lab.push_back(sets.labeled[i]);
      for (auto i : plan.unlabeled) unl.push_back(sets.unlabeled[i]);
      const auto batch = assemble_batch(catalog, labels, lab, unl);
      StepResult step;
      try {
        // train_step validates before mutating, so params stay the last good ones.
        step = train_step(result.params, opt, cuxcov, batch, config);
      } catch (const NumericalError& e) {
        throw DivergenceError(std::string("training diverged in epoch ") +
                                  std::to_string(epoch) + ": " + e.what(),
                              result.params, result.history);
      }
      record.terms.cls += step.terms.cls;
      record.terms.cuxcov += step.terms.cuxcov;
      record.terms.rcnst += step.terms.rcnst;
      record.objective += step.objective;
    }
    if (validate) record.validation_aupr = validate(result.params);
    result.history.push_back(record);
  }
  return result;
}

inline void write_history_csv(const TrainHistory& history, const std::string& path) {
  auto out = detail::open_output(path);
  out << "epoch,l_cls,l_cuxcov,l_rcnst,objective\n" << std::setprecision(17);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.terms.cls << ',' << r.terms.cuxcov << ',' << r.terms.rcnst << ','
        << r.objective << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mulfa

#endif  // MULFA_TRAIN_HPP
