#ifndef MULFA_GENERATOR_HPP
#define MULFA_GENERATOR_HPP

// Canonical samples: decoder outputs for a one-hot label code joined with the
// mean nuisance code, plus nearest-reference lookup for each half of the
// generated pair vector.

#include "mulfa/data.hpp"
#include "mulfa/network.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <vector>

namespace mulfa {

/// Mean of z over the given pairs (a multiset; duplicates count).
inline Vector estimate_zbar(const NetworkParams& params, const DrugCatalog& catalog,
                            std::span<const PairId> pairs) {
  if (pairs.empty()) throw ValidationError("estimate_zbar: empty pair set");
  Vector sum = Vector::Zero(params.shape.u);
  constexpr std::size_t chunk = 1024;
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    const auto count = std::min(chunk, pairs.size() - start);
    const auto rep = encode_batch(params, pair_matrix(catalog, pairs.subspan(start, count)));
    sum += rep.z_tilde.rowwise().sum();
  }
  return sum / static_cast<double>(pairs.size());
}

/// `count` pairs drawn uniformly without replacement from B (all of B if
/// count covers it), for universes too large to encode in full.
inline std::vector<PairId> sample_pairs(int m, std::size_t count, std::uint64_t seed) {
  auto pairs = all_pairs(m);
  if (count >= pairs.size()) return pairs;
  Rng rng(mix_seed(seed, 0x2ba7));
  rng.shuffle(pairs);
  pairs.resize(count);
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

inline constexpr double kBinarizeThreshold = 0.5;

struct CanonicalSample {
  int type_index = 0;
  Vector values;               // length 2l, decoder output
  std::vector<int> binarized;  // values >= 0.5
};

inline CanonicalSample canonical_sample(const NetworkParams& params, int type_index,
                                        const Vector& zbar) {
  if (type_index < 0 || type_index >= params.shape.v) {
    throw ValidationError("canonical_sample: type index " + std::to_string(type_index) +
                          " outside 0-" + std::to_string(params.shape.v - 1));
  }
  if (zbar.size() != params.shape.u) throw ValidationError("canonical_sample: zbar width mismatch");
  Representation code{Vector::Zero(params.shape.v), zbar};
  code.y_hat(type_index) = 1.0;
  CanonicalSample out;
  out.type_index = type_index;
  out.values = decode(params, code);
  if (!out.values.allFinite()) throw NumericalError("canonical_sample: non-finite output");
  out.binarized.resize(static_cast<std::size_t>(out.values.size()));
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    out.binarized[static_cast<std::size_t>(i)] = out.values(i) >= kBinarizeThreshold ? 1 : 0;
  }
  return out;
}

enum class Metric { euclidean, tanimoto };

inline Metric parse_metric(const std::string& name) {
  if (name == "euclidean") return Metric::euclidean;
  if (name == "tanimoto") return Metric::tanimoto;
  throw ValidationError("unknown metric: " + name);
}

inline const char* metric_name(Metric m) {
  return m == Metric::euclidean ? "euclidean" : "tanimoto";
}

/// 1 - |a & b| / |a | b|; two empty vectors are identical (distance 0).
inline double tanimoto_distance(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ValidationError("tanimoto: length mismatch");
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    both += static_cast<std::size_t>(a[i] && b[i]);
    either += static_cast<std::size_t>(a[i] || b[i]);
  }
  return either == 0 ? 0.0 : 1.0 - static_cast<double>(both) / static_cast<double>(either);
}

struct Neighbor {
  std::string drug_id;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Ranked neighbors for the first (index 0) and second (index 1) half.
using NearestReport = std::array<std::vector<Neighbor>, 2>;

/// Each half of the canonical pair vector is matched independently against
/// the reference fingerprints. Ascending distance, ties by drug id.
inline NearestReport nearest_reference(const CanonicalSample& sample,
                                       const DrugCatalog& reference, int k, Metric metric) {
  const int l = reference.width();
  if (sample.values.size() != 2 * l) {
    throw ValidationError("nearest_reference: sample length does not match reference width");
  }
  if (k < 1 || k > reference.size()) {
    throw ValidationError("nearest_reference: k=" + std::to_string(k) + " exceeds reference size " +
                          std::to_string(reference.size()));
  }
  NearestReport report;
  for (int half = 0; half < 2; ++half) {
    std::vector<Neighbor> all;
    for (int d = 0; d < reference.size(); ++d) {
      double dist = 0.0;
      if (metric == Metric::euclidean) {
        dist = (sample.values.segment(half * l, l) - reference.row(d).transpose()).norm();
      } else {
        std::vector<int> row(static_cast<std::size_t>(l));
        for (int j = 0; j < l; ++j) row[static_cast<std::size_t>(j)] = reference.bits()(d, j) != 0.0;
        dist = tanimoto_distance(
            std::span<const int>(sample.binarized).subspan(static_cast<std::size_t>(half * l),
                                                           static_cast<std::size_t>(l)),
            row);
      }
      all.push_back({reference.id(d), dist});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance != b.distance ? a.distance < b.distance : a.drug_id < b.drug_id;
    });
    all.resize(static_cast<std::size_t>(k));
    report[static_cast<std::size_t>(half)] = std::move(all);
  }
  return report;
}

/// Writes `type_id,c_1..c_2l` rows with 17 significant digits.
inline void export_canonical_vectors(const std::vector<CanonicalSample>& samples,
                                     const LabelStore& labels, const std::string& path) {
  auto out = detail::open_output(path);
  out << std::setprecision(17);
  out << "type_id";
  if (!samples.empty()) {
    for (Eigen::Index i = 0; i < samples.front().values.size(); ++i) out << ",c" << i + 1;
  }
  out << '\n';
  for (const auto& s : samples) {
    out << labels.type_id(s.type_index);
    for (Eigen::Index i = 0; i < s.values.size(); ++i) out << ',' << s.values(i);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

/// Generates and exports canonical vectors for a subset of types.
inline std::vector<CanonicalSample> export_canonical_vectors(const NetworkParams& params,
                                                             const LabelStore& labels,
                                                             std::span<const int> types,
                                                             const Vector& zbar,
                                                             const std::string& path) {
  std::vector<CanonicalSample> samples;
  for (int t : types) samples.push_back(canonical_sample(params, t, zbar));
  export_canonical_vectors(samples, labels, path);
  return samples;
}

struct CanonicalRow {
  std::string type_id;
  Vector values;
};

inline std::vector<CanonicalRow> load_canonical_vectors(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<CanonicalRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::stringstream ss(line);
    CanonicalRow row;
    std::getline(ss, row.type_id, ',');
    std::vector<double> values;
    for (std::string cell; std::getline(ss, cell, ',');) values.push_back(std::stod(cell));
    row.values = Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_nearest_csv(
    const std::vector<std::pair<std::string, NearestReport>>& reports, Metric metric,
    const std::string& path) {
  auto out = detail::open_output(path);
  out << "type_id,half,rank,drug_id,distance,metric\n" << std::setprecision(17);
  for (const auto& [type_id, report] : reports) {
    for (std::size_t half = 0; half < 2; ++half) {
      for (std::size_t r = 0; r < report[half].size(); ++r) {
        out << type_id << ',' << half + 1 << ',' << r + 1 << ',' << report[half][r].drug_id << ','
            << report[half][r].distance << ',' << metric_name(metric) << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mulfa

#endif  // MULFA_GENERATOR_HPP
