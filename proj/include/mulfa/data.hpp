#ifndef MULFA_DATA_HPP
#define MULFA_DATA_HPP

// Drug catalogs, interaction label sets, drug-disjoint splits and the
// planted-factor synthetic dataset generator.

#include "mulfa/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mulfa {

/// Unordered drug pair stored in canonical order p < q.
struct PairId {
  int p = 0;
  int q = 1;

  static PairId make(int a, int b) {
    if (a == b) {
      throw ValidationError("self-pair (" + std::to_string(a) + ", " +
                            std::to_string(b) + ") is not a drug pair");
    }
    if (a < 0 || b < 0) throw ValidationError("negative drug index in pair");
    return a < b ? PairId{a, b} : PairId{b, a};
  }

  bool touches(int drug) const { return p == drug || q == drug; }

  auto operator<=>(const PairId&) const = default;
};

/// Number of unordered pairs over m drugs.
inline std::size_t universe_size(std::size_t m) { return m * (m - 1) / 2; }

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool is_skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

// A missing or unreadable input is a violated precondition (exit 1); IoError
// is reserved for failures while writing results.
inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  return out;
}

inline std::string where(const std::string& path, std::size_t line_no) {
  return path + ":" + std::to_string(line_no) + ": ";
}

inline std::optional<long long> parse_integer(std::string_view s) {
  long long value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

}  // namespace detail

/// Orders DDI type identifiers: integer ids numerically and before any
/// non-integer id; everything else lexicographically.
inline bool type_id_less(const std::string& a, const std::string& b) {
  const auto na = detail::parse_integer(a);
  const auto nb = detail::parse_integer(b);
  if (na && nb) return *na != *nb ? *na < *nb : a < b;
  if (na != nb) return na.has_value();
  return a < b;
}

/// Drug identifiers with their binary substructure fingerprints.
class DrugCatalog {
 public:
  DrugCatalog() = default;

  /// Validates and builds a catalog. `bits` is m x l with entries in {0,1}.
  static DrugCatalog create(std::vector<std::string> ids, Matrix bits) {
    if (ids.size() < 2) throw ValidationError("catalog needs at least two drugs");
    if (static_cast<Eigen::Index>(ids.size()) != bits.rows()) {
      throw ValidationError("catalog id count does not match fingerprint rows");
    }
    if (bits.cols() < 1) throw ValidationError("fingerprint width must be positive");
    if (!((bits.array() == 0.0) || (bits.array() == 1.0)).all()) {
      throw ValidationError("fingerprint entries must be 0 or 1");
    }
    DrugCatalog c;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!c.index_.emplace(ids[i], static_cast<int>(i)).second) {
        throw ValidationError("duplicate drug id: " + ids[i]);
      }
    }
    c.ids_ = std::move(ids);
    c.bits_ = std::move(bits);
    return c;
  }

  int size() const { return static_cast<int>(ids_.size()); }
  int width() const { return static_cast<int>(bits_.cols()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(int i) const { return ids_.at(static_cast<std::size_t>(i)); }
  const Matrix& bits() const { return bits_; }
  auto row(int i) const { return bits_.row(i); }

  std::optional<int> index_of(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> ids_;
  Matrix bits_;
  std::unordered_map<std::string, int> index_;
};

/// Per-type positive pair sets E_i with the derived labeled set D,
/// negatives G_i = D - E_i and unlabeled set F = B - D.
class LabelStore {
 public:
  LabelStore() = default;

  LabelStore(int num_drugs, std::vector<std::string> type_ids,
             std::vector<std::vector<PairId>> positives)
      : num_drugs_(num_drugs), type_ids_(std::move(type_ids)),
        positives_(std::move(positives)) {
    if (num_drugs_ < 2) throw ValidationError("label store needs at least two drugs");
    if (type_ids_.empty()) throw ValidationError("label store needs at least one type");
    if (type_ids_.size() != positives_.size()) {
      throw ValidationError("type id count does not match positive set count");
    }
    std::set<std::string> seen;
    for (const auto& t : type_ids_) {
      if (!seen.insert(t).second) throw ValidationError("duplicate type id: " + t);
    }
    std::map<PairId, std::vector<int>> by_pair;
    for (std::size_t t = 0; t < positives_.size(); ++t) {
      auto& set = positives_[t];
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
      for (const auto& pair : set) {
        if (pair.p < 0 || pair.q >= num_drugs_ || pair.p >= pair.q) {
          throw ValidationError("pair index out of range for type " + type_ids_[t]);
        }
        by_pair[pair].push_back(static_cast<int>(t));
      }
    }
    labeled_.reserve(by_pair.size());
    pair_types_.reserve(by_pair.size());
    for (auto& [pair, types] : by_pair) {
      labeled_.push_back(pair);
      pair_types_.push_back(std::move(types));
    }
  }

  int num_types() const { return static_cast<int>(type_ids_.size()); }
  int num_drugs() const { return num_drugs_; }
  const std::vector<std::string>& type_ids() const { return type_ids_; }
  const std::string& type_id(int t) const { return type_ids_.at(static_cast<std::size_t>(t)); }

  /// E_t, sorted.
  const std::vector<PairId>& positives(int t) const {
    return positives_.at(static_cast<std::size_t>(t));
  }

  /// D, sorted.
  const std::vector<PairId>& labeled() const { return labeled_; }

  bool is_labeled(const PairId& pair) const {
    return std::binary_search(labeled_.begin(), labeled_.end(), pair);
  }

  bool is_positive(const PairId& pair, int t) const {
    const auto& set = positives(t);
    return std::binary_search(set.begin(), set.end(), pair);
  }

  /// Types for which a labeled pair is positive; empty for unlabeled pairs.
  std::span<const int> types_of(const PairId& pair) const {
    const auto it = std::lower_bound(labeled_.begin(), labeled_.end(), pair);
    if (it == labeled_.end() || *it != pair) return {};
    return pair_types_[static_cast<std::size_t>(it - labeled_.begin())];
  }

  /// G_t = D - E_t, sorted.
  std::vector<PairId> negatives(int t) const {
    std::vector<PairId> out;
    const auto& pos = positives(t);
    std::set_difference(labeled_.begin(), labeled_.end(), pos.begin(), pos.end(),
                        std::back_inserter(out));
    return out;
  }

  /// F = B - D, sorted.
  std::vector<PairId> unlabeled() const {
    std::vector<PairId> out;
    out.reserve(universe_size(static_cast<std::size_t>(num_drugs_)) - labeled_.size());
    auto it = labeled_.begin();
    for (int p = 0; p < num_drugs_; ++p) {
      for (int q = p + 1; q < num_drugs_; ++q) {
        const PairId pair{p, q};
        while (it != labeled_.end() && *it < pair) ++it;
        if (it != labeled_.end() && *it == pair) continue;
        out.push_back(pair);
      }
    }
    return out;
  }

  /// Label store over a subset of types, in the given order.
  LabelStore restrict_to_types(std::span<const int> types) const {
    std::vector<std::string> ids;
    std::vector<std::vector<PairId>> pos;
    for (int t : types) {
      ids.push_back(type_id(t));
      pos.push_back(positives(t));
    }
    return LabelStore(num_drugs_, std::move(ids), std::move(pos));
  }

 private:
  int num_drugs_ = 0;
  std::vector<std::string> type_ids_;
  std::vector<std::vector<PairId>> positives_;
  std::vector<PairId> labeled_;
  std::vector<std::vector<int>> pair_types_;
};

// ---------------------------------------------------------------------------
// File formats

/// Reads `drug_id<TAB>bitstring` lines; `#` starts a comment line.
inline DrugCatalog load_fingerprints(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::string> ids;
  std::vector<std::string> rows;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_skippable(line)) continue;
    const auto fields = detail::split_tabs(detail::trim(line));
    if (fields.size() != 2) {
      throw ValidationError(detail::where(path, line_no) +
                            "expected drug_id<TAB>bitstring");
    }
    const std::string id(fields[0]);
    const std::string bitstring(fields[1]);
    if (id.empty()) throw ValidationError(detail::where(path, line_no) + "empty drug id");
    if (!seen.insert(id).second) {
      throw ValidationError(detail::where(path, line_no) + "duplicate drug id " + id);
    }
    if (bitstring.find_first_not_of("01") != std::string::npos) {
      throw ValidationError(detail::where(path, line_no) +
                            "fingerprint contains characters outside {0,1}");
    }
    if (!rows.empty() && bitstring.size() != rows.front().size()) {
      throw ValidationError(detail::where(path, line_no) + "ragged fingerprint length " +
                            std::to_string(bitstring.size()) + ", expected " +
                            std::to_string(rows.front().size()));
    }
    ids.push_back(id);
    rows.push_back(bitstring);
  }
  if (rows.empty()) throw ValidationError(path + ": no fingerprints");
  Matrix bits(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      bits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j] == '1' ? 1.0 : 0.0;
    }
  }
  return DrugCatalog::create(std::move(ids), std::move(bits));
}

inline void write_fingerprints(const DrugCatalog& catalog, const std::string& path) {
  auto out = detail::open_output(path);
  out << "# drug_id\tfingerprint (" << catalog.width() << " bits)\n";
  for (int i = 0; i < catalog.size(); ++i) {
    out << catalog.id(i) << '\t';
    for (int j = 0; j < catalog.width(); ++j) out << (catalog.bits()(i, j) != 0.0 ? '1' : '0');
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

/// Reads `drug_a<TAB>drug_b<TAB>type_id` lines. Pairs are canonicalized and
/// deduplicated; types are indexed in ascending type-id order.
inline LabelStore load_interactions(const std::string& path, const DrugCatalog& catalog) {
  auto in = detail::open_input(path);
  std::map<std::string, std::vector<PairId>, decltype(&type_id_less)> by_type(&type_id_less);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_skippable(line)) continue;
    const auto fields = detail::split_tabs(detail::trim(line));
    if (fields.size() != 3) {
      throw ValidationError(detail::where(path, line_no) +
                            "expected drug_a<TAB>drug_b<TAB>type_id");
    }
    const std::string a(fields[0]);
    const std::string b(fields[1]);
    const std::string type(fields[2]);
    if (type.empty()) throw ValidationError(detail::where(path, line_no) + "empty type id");
    const auto ia = catalog.index_of(a);
    const auto ib = catalog.index_of(b);
    if (!ia) throw ValidationError(detail::where(path, line_no) + "unknown drug id " + a);
    if (!ib) throw ValidationError(detail::where(path, line_no) + "unknown drug id " + b);
    if (*ia == *ib) throw ValidationError(detail::where(path, line_no) + "self-pair " + a);
    by_type[type].push_back(PairId::make(*ia, *ib));
  }
  if (by_type.empty()) throw ValidationError(path + ": no interactions");
  std::vector<std::string> ids;
  std::vector<std::vector<PairId>> positives;
  for (auto& [type, pairs] : by_type) {
    ids.push_back(type);
    positives.push_back(std::move(pairs));
  }
  return LabelStore(catalog.size(), std::move(ids), std::move(positives));
}

inline void write_interactions(const LabelStore& labels, const DrugCatalog& catalog,
                               const std::string& path) {
  auto out = detail::open_output(path);
  out << "# drug_a\tdrug_b\ttype_id\n";
  for (int t = 0; t < labels.num_types(); ++t) {
    for (const auto& pair : labels.positives(t)) {
      out << catalog.id(pair.p) << '\t' << catalog.id(pair.q) << '\t' << labels.type_id(t)
          << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Pair features

/// Concatenated fingerprint (row p, row q) of a canonical pair.
inline Vector pair_vector(const DrugCatalog& catalog, const PairId& pair) {
  const int l = catalog.width();
  if (pair.p < 0 || pair.q >= catalog.size() || pair.p >= pair.q) {
    throw ValidationError("pair index out of range");
  }
  Vector out(2 * l);
  out.head(l) = catalog.row(pair.p).transpose();
  out.tail(l) = catalog.row(pair.q).transpose();
  return out;
}

/// Either orientation maps to the canonical pair.
inline Vector pair_vector(const DrugCatalog& catalog, int a, int b) {
  return pair_vector(catalog, PairId::make(a, b));
}

/// N x 2l matrix of pair vectors, one row per pair.
inline Matrix pair_matrix(const DrugCatalog& catalog, std::span<const PairId> pairs) {
  const int l = catalog.width();
  Matrix out(static_cast<Eigen::Index>(pairs.size()), 2 * l);
  for (std::size_t s = 0; s < pairs.size(); ++s) {
    const auto& pair = pairs[s];
    if (pair.p < 0 || pair.q >= catalog.size() || pair.p >= pair.q) {
      throw ValidationError("pair index out of range");
    }
    out.row(static_cast<Eigen::Index>(s)).head(l) = catalog.row(pair.p);
    out.row(static_cast<Eigen::Index>(s)).tail(l) = catalog.row(pair.q);
  }
  return out;
}

/// Every pair of B in canonical order.
inline std::vector<PairId> all_pairs(int m) {
  std::vector<PairId> out;
  out.reserve(universe_size(static_cast<std::size_t>(m)));
  for (int p = 0; p < m; ++p) {
    for (int q = p + 1; q < m; ++q) out.push_back({p, q});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  std::vector<int> masked_drugs;  // sorted
  std::vector<PairId> train_pairs;  // labeled pairs avoiding masked drugs
  std::vector<PairId> test_pairs;   // labeled pairs touching a masked drug
  std::uint64_t seed = 0;

  bool is_masked(int drug) const {
    return std::binary_search(masked_drugs.begin(), masked_drugs.end(), drug);
  }
  bool touches_mask(const PairId& pair) const {
    return is_masked(pair.p) || is_masked(pair.q);
  }

  bool operator==(const SplitSpec&) const = default;
};

/// Splits the labeled set by an explicit set of masked drugs.
inline SplitSpec split_by_mask(const LabelStore& labels, std::vector<int> masked,
                               std::uint64_t seed = 0) {
  std::sort(masked.begin(), masked.end());
  masked.erase(std::unique(masked.begin(), masked.end()), masked.end());
  for (int d : masked) {
    if (d < 0 || d >= labels.num_drugs()) throw ValidationError("masked drug out of range");
  }
  SplitSpec split;
  split.masked_drugs = std::move(masked);
  split.seed = seed;
  for (const auto& pair : labels.labeled()) {
    (split.touches_mask(pair) ? split.test_pairs : split.train_pairs).push_back(pair);
  }
  if (split.train_pairs.empty()) {
    throw ValidationError("split leaves no labeled training pairs");
  }
  return split;
}

/// Masks round(fraction * m) drugs chosen uniformly from the seed; every
/// labeled pair touching a masked drug goes to the test side.
inline SplitSpec drug_disjoint_split(const DrugCatalog& catalog, const LabelStore& labels,
                                     double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("mask fraction must lie in (0,1)");
  }
  if (catalog.size() != labels.num_drugs()) {
    throw ValidationError("catalog and label store disagree on drug count");
  }
  const int m = catalog.size();
  const auto count = static_cast<int>(std::lround(fraction * m));
  if (count < 1) throw ValidationError("mask fraction selects no drugs");
  if (count >= m) throw ValidationError("mask fraction selects every drug");
  std::vector<int> drugs(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) drugs[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed(seed, 0x5e11));
  rng.shuffle(drugs);
  drugs.resize(static_cast<std::size_t>(count));
  return split_by_mask(labels, std::move(drugs), seed);
}

/// Unlabeled pairs (F) that avoid every masked drug.
inline std::vector<PairId> unlabeled_training_pairs(const LabelStore& labels,
                                                    const SplitSpec& split) {
  auto pairs = labels.unlabeled();
  std::erase_if(pairs, [&](const PairId& pair) { return split.touches_mask(pair); });
  return pairs;
}

/// Types ranked by |E_t| descending (ties by ascending type id); returns the
/// 1-based inclusive rank range [lo, hi].
inline std::vector<int> top_k_types(const LabelStore& labels, int lo, int hi) {
  const int v = labels.num_types();
  if (lo < 1 || hi < lo || hi > v) {
    throw ValidationError("rank range " + std::to_string(lo) + "-" + std::to_string(hi) +
                          " outside 1-" + std::to_string(v));
  }
  std::vector<int> order(static_cast<std::size_t>(v));
  for (int t = 0; t < v; ++t) order[static_cast<std::size_t>(t)] = t;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto na = labels.positives(a).size();
    const auto nb = labels.positives(b).size();
    if (na != nb) return na > nb;
    return type_id_less(labels.type_id(a), labels.type_id(b));
  });
  return {order.begin() + (lo - 1), order.begin() + hi};
}

// ---------------------------------------------------------------------------
// Planted-factor synthetic data

struct SynthConfig {
  int m = 60;
  int l = 32;
  int v = 8;
  int u_true = 8;     // designated nuisance bits
  int arity = 2;      // bits per AND rule
  double density = 0.2;  // target |E_i| / |D|
  double flip = 0.05;    // probability a firing rule goes unrecorded
  std::uint64_t seed = 1;

  void validate() const {
    if (m < 2) throw ValidationError("synth: m must be at least 2");
    if (l < 1) throw ValidationError("synth: l must be positive");
    if (v < 1) throw ValidationError("synth: v must be at least 1");
    if (u_true < 0) throw ValidationError("synth: u_true must be nonnegative");
    if (arity < 1 || arity > 2 * l) throw ValidationError("synth: arity out of range");
    if (!(density > 0.0 && density <= 1.0)) throw ValidationError("synth: density in (0,1]");
    if (!(flip >= 0.0 && flip < 0.5)) throw ValidationError("synth: flip in [0,0.5)");
  }
};

/// Ground truth of a synthetic dataset. Label bits index the concatenated
/// pair vector (0..2l-1); nuisance bits index a single fingerprint (0..l-1)
/// and are never used by any label rule.
struct SynthTruth {
  std::vector<std::vector<int>> label_bits;
  std::vector<int> nuisance_bits;
  double bit_probability = 0.5;

  bool operator==(const SynthTruth&) const = default;
};

struct SyntheticDataset {
  DrugCatalog catalog;
  LabelStore labels;
  SynthTruth truth;
};

namespace detail {

// Expected |E_i| / |D| for independent AND rules that each fire with rate r.
inline double expected_density(double r, int v) {
  const double union_rate = 1.0 - std::pow(1.0 - r, v);
  return union_rate > 0.0 ? r / union_rate : 1.0 / v;
}

inline double solve_bit_probability(const SynthConfig& cfg) {
  double lo = 0.02, hi = 0.98;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double d = expected_density(std::pow(mid, cfg.arity), cfg.v);
    (d < cfg.density ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline std::optional<SyntheticDataset> try_generate(const SynthConfig& cfg,
                                                    std::uint64_t stream) {
  Rng rng(stream);
  const double prob = cfg.v == 1 ? 0.5 : solve_bit_probability(cfg);

  Matrix bits(cfg.m, cfg.l);
  for (int i = 0; i < cfg.m; ++i) {
    for (int j = 0; j < cfg.l; ++j) bits(i, j) = rng.uniform() < prob ? 1.0 : 0.0;
  }

  SynthTruth truth;
  truth.bit_probability = prob;
  std::set<std::vector<int>> rules;
  for (int t = 0; t < cfg.v; ++t) {
    std::vector<int> rule;
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::set<int> chosen;
      for (int k = 0; static_cast<int>(chosen.size()) < cfg.arity; ++k) {
        const int half = k % 2;
        chosen.insert(half * cfg.l + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.l))));
      }
      rule.assign(chosen.begin(), chosen.end());
      if (!rules.contains(rule)) break;
    }
    rules.insert(rule);
    truth.label_bits.push_back(rule);
  }

  std::set<int> used;
  for (const auto& rule : truth.label_bits) {
    for (int b : rule) used.insert(b % cfg.l);
  }
  std::vector<int> free_bits;
  for (int j = 0; j < cfg.l; ++j) {
    if (!used.contains(j)) free_bits.push_back(j);
  }
  rng.shuffle(free_bits);
  free_bits.resize(std::min(free_bits.size(), static_cast<std::size_t>(cfg.u_true)));
  std::sort(free_bits.begin(), free_bits.end());
  truth.nuisance_bits = std::move(free_bits);

  std::vector<std::vector<PairId>> positives(static_cast<std::size_t>(cfg.v));
  for (int p = 0; p < cfg.m; ++p) {
    for (int q = p + 1; q < cfg.m; ++q) {
      for (int t = 0; t < cfg.v; ++t) {
        bool fires = true;
        for (int b : truth.label_bits[static_cast<std::size_t>(t)]) {
          const int drug = b < cfg.l ? p : q;
          fires = fires && bits(drug, b % cfg.l) != 0.0;
        }
        const bool dropped = rng.uniform() < cfg.flip;
        if (fires && !dropped) positives[static_cast<std::size_t>(t)].push_back({p, q});
      }
    }
  }
  // Shared drug bits make per-type rates vary a lot at small m; keep only
  // draws whose every type lands within [density/2, 3 density/2] of |D|.
  std::set<PairId> labeled;
  for (const auto& set : positives) labeled.insert(set.begin(), set.end());
  for (const auto& set : positives) {
    if (set.empty()) return std::nullopt;
    const double share = static_cast<double>(set.size()) / static_cast<double>(labeled.size());
    if (cfg.v > 1 && (share < 0.5 * cfg.density || share > 1.5 * cfg.density)) return std::nullopt;
  }

  std::vector<std::string> drug_ids;
  for (int i = 0; i < cfg.m; ++i) {
    std::ostringstream os;
    os << 'D' << std::setw(4) << std::setfill('0') << i;
    drug_ids.push_back(os.str());
  }
  std::vector<std::string> type_ids;
  for (int t = 0; t < cfg.v; ++t) type_ids.push_back(std::to_string(t));

  SyntheticDataset out;
  out.catalog = DrugCatalog::create(std::move(drug_ids), std::move(bits));
  out.labels = LabelStore(cfg.m, std::move(type_ids), std::move(positives));
  out.truth = std::move(truth);
  return out;
}

}  // namespace detail

/// Independent Bernoulli fingerprint bits; each type is an AND over a few
/// bits drawn alternately from the two halves of the pair vector. A firing
/// rule is left unrecorded with probability `flip`. The bit probability is
/// solved so that the expected |E_i| / |D| equals the density target.
/// Draws with an empty type, or a type whose share of D strays outside
/// [density/2, 3 density/2], are regenerated from a derived stream.
inline SyntheticDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    if (auto out = detail::try_generate(cfg, mix_seed(cfg.seed, attempt))) {
      return std::move(*out);
    }
  }
  throw ValidationError("synth: no draw met the per-type density band in 100 attempts");
}

inline void write_truth(const SynthTruth& truth, const LabelStore& labels,
                        const std::string& path) {
  auto out = detail::open_output(path);
  out << "# kind\tid\tbits\n";
  out << "# label bits index the concatenated pair vector; nuisance bits a single fingerprint\n";
  out << std::setprecision(17) << "bit_probability\t-\t" << truth.bit_probability << '\n';
  const auto join = [](const std::vector<int>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
  };
  for (std::size_t t = 0; t < truth.label_bits.size(); ++t) {
    out << "label\t" << labels.type_id(static_cast<int>(t)) << '\t' << join(truth.label_bits[t])
        << '\n';
  }
  out << "nuisance\t-\t" << join(truth.nuisance_bits) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline SynthTruth load_truth(const std::string& path) {
  auto in = detail::open_input(path);
  SynthTruth truth;
  std::string line;
  std::size_t line_no = 0;
  const auto parse_list = [&](std::string_view s) {
    std::vector<int> xs;
    std::size_t start = 0;
    while (start < s.size()) {
      auto pos = s.find(',', start);
      if (pos == std::string_view::npos) pos = s.size();
      const auto v = detail::parse_integer(s.substr(start, pos - start));
      if (!v) throw ValidationError(detail::where(path, line_no) + "bad bit index");
      xs.push_back(static_cast<int>(*v));
      start = pos + 1;
    }
    return xs;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_skippable(line)) continue;
    const auto fields = detail::split_tabs(detail::trim(line));
    if (fields.size() != 3) throw ValidationError(detail::where(path, line_no) + "bad truth line");
    if (fields[0] == "label") {
      truth.label_bits.push_back(parse_list(fields[2]));
    } else if (fields[0] == "nuisance") {
      truth.nuisance_bits = parse_list(fields[2]);
    } else if (fields[0] == "bit_probability") {
      truth.bit_probability = std::stod(std::string(fields[2]));
    } else {
      throw ValidationError(detail::where(path, line_no) + "unknown truth record");
    }
  }
  return truth;
}

}  // namespace mulfa

#endif  // MULFA_DATA_HPP
