#ifndef MULFA_SELFCHECK_HPP
#define MULFA_SELFCHECK_HPP

// Numerical self-tests shared by `mulfa check` and the acceptance suite:
// finite-difference gradient checks (forward passes only, independent of
// backward_batch), CuXCov/XCov degeneracy and estimator identities.

#include "mulfa/eval.hpp"
#include "mulfa/generator.hpp"
#include "mulfa/losses.hpp"
#include "mulfa/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace mulfa::selfcheck {

enum class LossTerm { classification, reconstruction, cross_covariance, composite };

inline const char* term_name(LossTerm t) {
  switch (t) {
    case LossTerm::classification: return "classification";
    case LossTerm::reconstruction: return "reconstruction";
    case LossTerm::cross_covariance: return "cuxcov";
    case LossTerm::composite: return "composite";
  }
  return "?";
}

/// A network, a batch and the CuXCov history preceding it.
struct GradientCase {
  NetworkParams params;
  Matrix inputs;  // N x 2l
  LabelBatch labels;
  CuXCovState history;
  double lambda = 4.0;
  double beta = 0.7;
  double gamma = 0.3;
};

/// Random case with nonzero biases, continuous inputs, a partial label mask
/// and two prior CuXCov updates.
inline GradientCase random_case(const std::vector<int>& hidden, int input_width, int v, int u,
                                int n, double alpha, std::uint64_t seed) {
  GradientCase c;
  c.params = init_params(NetworkShape::symmetric(input_width, hidden, v, u), seed);
  Rng rng(mix_seed(seed, 0xca5e));
  for (auto& layer : c.params.layers) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.4 * (rng.uniform() - 0.5);
  }
  c.inputs.resize(n, input_width);
  for (Eigen::Index r = 0; r < c.inputs.rows(); ++r) {
    for (Eigen::Index k = 0; k < c.inputs.cols(); ++k) c.inputs(r, k) = rng.uniform();
  }
  c.labels.labels = Matrix::Zero(v, n);
  c.labels.mask = Matrix::Zero(v, n);
  for (int s = 0; s < n; ++s) {
    const bool labeled = s % 4 != 3;  // every fourth sample unlabeled
    for (int i = 0; i < v; ++i) {
      c.labels.mask(i, s) = labeled ? 1.0 : 0.0;
      c.labels.labels(i, s) = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
  }
  c.history = CuXCovState(alpha, v, u);
  for (int k = 0; k < 2; ++k) {
    Matrix prior(v, u);
    for (Eigen::Index i = 0; i < prior.size(); ++i) prior.data()[i] = 0.2 * (rng.uniform() - 0.5);
    c.history.update(prior);
  }
  return c;
}

/// Scalar loss from a forward pass alone, with the CuXCov history frozen.
inline double loss_value(const GradientCase& c, const NetworkParams& params, LossTerm term) {
  const auto fwd = forward_batch(params, c.inputs);
  const double cls = cls_loss(fwd.rep.y_tilde, c.labels, c.lambda).value;
  const double rec = rcnst_loss(c.inputs, fwd.reconstruction).value;
  CuXCovState state = c.history;
  state.update(batch_cross_cov(fwd.rep));
  const double cux = 0.5 * state.sigma_a().squaredNorm();
  switch (term) {
    case LossTerm::classification: return cls;
    case LossTerm::reconstruction: return rec;
    case LossTerm::cross_covariance: return cux;
    case LossTerm::composite: return cls + c.beta * cux + c.gamma * rec;
  }
  return 0.0;
}

/// Gradients from the loss partials and backward_batch.
inline Gradients analytic_gradients(const GradientCase& c, LossTerm term) {
  const auto fwd = forward_batch(c.params, c.inputs);
  const auto cls = cls_loss(fwd.rep.y_tilde, c.labels, c.lambda);
  const auto rec = rcnst_loss(c.inputs, fwd.reconstruction);
  CuXCovState state = c.history;
  state.update(batch_cross_cov(fwd.rep));
  const auto cux = cuxcov_loss(state, fwd.rep);
  const auto v = c.params.shape.v, u = c.params.shape.u;
  const auto n = c.inputs.rows();
  Matrix dy = Matrix::Zero(v, n), dz = Matrix::Zero(u, n);
  Matrix drec = Matrix::Zero(n, c.inputs.cols());
  switch (term) {
    case LossTerm::classification: dy = cls.d_y_hat; break;
    case LossTerm::reconstruction: drec = rec.d_reconstruction; break;
    case LossTerm::cross_covariance:
      dy = cux.d_y;
      dz = cux.d_z;
      break;
    case LossTerm::composite: {
      const auto total = objective(cls, cux, rec, c.beta, c.gamma);
      dy = total.d_y;
      dz = total.d_z;
      drec = total.d_reconstruction;
      break;
    }
  }
  return backward_batch(c.params, fwd.trace, drec, dy, dz);
}

/// Central differences over every parameter.
inline Gradients numeric_gradients(const GradientCase& c, LossTerm term, double step) {
  NetworkParams probe = c.params;
  Gradients out = zero_gradients(c.params);
  const auto sweep = [&](auto& param, auto& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + step;
      const double up = loss_value(c, probe, term);
      param.data()[i] = saved - step;
      const double down = loss_value(c, probe, term);
      param.data()[i] = saved;
      grad.data()[i] = (up - down) / (2.0 * step);
    }
  };
  for (std::size_t h = 0; h < probe.layers.size(); ++h) {
    sweep(probe.layers[h].weight, out[h].weight);
    sweep(probe.layers[h].bias, out[h].bias);
  }
  return out;
}

/// Denominator floor for relative errors: entries whose analytic and
/// numeric magnitudes are both below it are compared absolutely against it.
inline constexpr double kRelativeErrorFloor = 1e-6;

inline double relative_error(double a, double b, double floor = kRelativeErrorFloor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const Gradients& a, const Gradients& b,
                                 double floor = kRelativeErrorFloor) {
  double worst = 0.0;
  for (std::size_t h = 0; h < a.size(); ++h) {
    for (Eigen::Index i = 0; i < a[h].weight.size(); ++i) {
      worst = std::max(worst, relative_error(a[h].weight.data()[i], b[h].weight.data()[i], floor));
    }
    for (Eigen::Index i = 0; i < a[h].bias.size(); ++i) {
      worst = std::max(worst, relative_error(a[h].bias.data()[i], b[h].bias.data()[i], floor));
    }
  }
  return worst;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Worst per-parameter relative error over `nets` random 12-8-(3+2)-8-12
/// networks with N=4, per loss term.
inline std::vector<CheckResult> gradient_checks(int nets, std::uint64_t seed,
                                                double tolerance = 1e-4, double step = 1e-5) {
  std::vector<CheckResult> out;
  for (auto term : {LossTerm::classification, LossTerm::reconstruction,
                    LossTerm::cross_covariance, LossTerm::composite}) {
    double worst = 0.0;
    for (int k = 0; k < nets; ++k) {
      const auto c = random_case({8}, 12, 3, 2, 4, 0.3, mix_seed(seed, static_cast<std::uint64_t>(k)));
      worst = std::max(worst, max_relative_error(analytic_gradients(c, term),
                                                 numeric_gradients(c, term, step)));
    }
    out.push_back({std::string("gradient/") + term_name(term), worst < tolerance,
                   "max relative error " + detail::format_double(worst)});
  }
  return out;
}

inline BatchRepresentation random_representation(int v, int u, int n, Rng& rng) {
  BatchRepresentation r{Matrix(v, n), Matrix(u, n)};
  for (Eigen::Index i = 0; i < r.y_tilde.size(); ++i) r.y_tilde.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < r.z_tilde.size(); ++i) r.z_tilde.data()[i] = 4.0 * rng.uniform() - 2.0;
  return r;
}

/// max |CuXCov(alpha=0, fresh) - XCov| over random batches.
inline double degeneracy_gap(int batches, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xde9e));
  double worst = 0.0;
  for (int b = 0; b < batches; ++b) {
    const int n = std::array<int, 3>{2, 8, 64}[static_cast<std::size_t>(b % 3)];
    const auto reps = random_representation(5, 4, n, rng);
    CuXCovState state(0.0, 5, 4);
    state.update(batch_cross_cov(reps));
    worst = std::max(worst, std::abs(cuxcov_loss(state, reps).value - xcov_loss(reps).value));
  }
  return worst;
}

/// max over steps of |sigma_a - running mean of sigma_m| with alpha = 1.
inline double running_mean_gap(int steps, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x3ea9));
  CuXCovState state(1.0, 3, 2);
  Matrix sum = Matrix::Zero(3, 2);
  double worst = 0.0;
  for (int k = 1; k <= steps; ++k) {
    const Matrix sigma_m = batch_cross_cov(random_representation(3, 2, 16, rng));
    sum += sigma_m;
    const Matrix sigma_a = state.update(sigma_m);
    worst = std::max(worst, (sigma_a - sum / k).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Rank-walk average precision: walk positives from the highest score down;
/// each positive's precision counts every instance scoring at least as high.
inline double rank_walk_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  int pos = 0;
  for (std::size_t i : order) {
    if (!labels[i]) continue;
    int above = 0, hits = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] >= scores[i]) {
        ++above;
        hits += labels[j];
      }
    }
    sum += static_cast<double>(hits) / above;
    ++pos;
  }
  return sum / pos;
}

/// Largest |aupr - rank_walk_ap| over every label pattern and every score
/// permutation of lengths 2..max_len, with distinct scores and with scores
/// tied in pairs. Returns the number of instances checked via `count`.
inline double aupr_bruteforce_gap(int max_len, std::size_t* count = nullptr) {
  double worst = 0.0;
  std::size_t checked = 0;
  for (int n = 2; n <= max_len; ++n) {
    const auto un = static_cast<std::size_t>(n);
    std::vector<int> perm(un);
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::vector<double> distinct(un), tied(un);
    std::vector<int> labels(un);
    do {
      for (std::size_t i = 0; i < un; ++i) {
        distinct[i] = 0.1 * perm[i];
        tied[i] = 0.1 * (perm[i] / 2);
      }
      for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        for (std::size_t i = 0; i < un; ++i) labels[i] = static_cast<int>((mask >> i) & 1u);
        for (const auto* scores : {&distinct, &tied}) {
          worst = std::max(worst, std::abs(aupr(*scores, labels) - rank_walk_ap(*scores, labels)));
          ++checked;
        }
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  if (count) *count = checked;
  return worst;
}

/// Identity-configured decoder must reproduce (one-hot, zbar).
inline double identity_decoder_gap() {
  NetworkShape shape;
  shape.dims = {5, 5, 5};
  shape.v = 3;
  shape.u = 2;
  shape.activations = {Activation::split, Activation::linear};
  NetworkParams params{shape, {}};
  params.layers.push_back({Matrix::Identity(5, 5), Vector::Zero(5)});
  params.layers.push_back({Matrix::Identity(5, 5), Vector::Zero(5)});
  Vector zbar(2);
  zbar << 0.25, -1.5;
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    Vector expect = Vector::Zero(5);
    expect(i) = 1.0;
    expect.tail(2) = zbar;
    worst = std::max(worst, (canonical_sample(params, i, zbar).values - expect).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// The suite run by `mulfa check`.
inline std::vector<CheckResult> run_all(std::uint64_t seed = 7) {
  auto out = gradient_checks(5, seed);
  const double gap = degeneracy_gap(30, seed);
  out.push_back({"cuxcov/alpha0-equals-xcov", gap <= 1e-12, "max gap " + detail::format_double(gap)});
  const double mean_gap = running_mean_gap(50, seed);
  out.push_back({"cuxcov/alpha1-running-mean", mean_gap <= 1e-12,
                 "max gap " + detail::format_double(mean_gap)});
  const double ap_gap = aupr_bruteforce_gap(6);
  out.push_back({"aupr/bruteforce", ap_gap == 0.0, "max gap " + detail::format_double(ap_gap)});
  const double id_gap = identity_decoder_gap();
  out.push_back({"generator/identity-decoder", id_gap == 0.0,
                 "max gap " + detail::format_double(id_gap)});
  return out;
}

}  // namespace mulfa::selfcheck

#endif  // MULFA_SELFCHECK_HPP
