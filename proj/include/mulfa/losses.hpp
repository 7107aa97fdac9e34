#ifndef MULFA_LOSSES_HPP
#define MULFA_LOSSES_HPP

// Training losses: weighted multi-label cross entropy, squared-error
// reconstruction, the cumulative cross-covariance penalty (CuXCov) with its
// decayed running estimator, and the per-batch XCov penalty it generalizes.

#include "mulfa/core.hpp"

#include <algorithm>
#include <cmath>

namespace mulfa {

/// Sample cross-covariance between label and nuisance codes of one batch:
/// (1/N) * Y J Z^T with the centering matrix J = I - (1/N) e e^T.
inline Matrix batch_cross_cov(const BatchRepresentation& reps) {
  const Eigen::Index n = reps.samples();
  if (n < 1 || reps.z_tilde.cols() != n) {
    throw ValidationError("batch_cross_cov: need N >= 1 columns in both blocks");
  }
  const Matrix yc = reps.y_tilde.colwise() - reps.y_tilde.rowwise().mean();
  const Matrix zc = reps.z_tilde.colwise() - reps.z_tilde.rowwise().mean();
  return yc * zc.transpose() / static_cast<double>(n);
}

/// Decayed running cross-covariance. After k updates with batch statistics
/// S_1..S_k: sigma_c = sum_j alpha^(k-j) S_j and p = sum_j alpha^(k-j), so
/// sigma_a = sigma_c / p is their weighted mean. Not thread-safe.
class CuXCovState {
 public:
  CuXCovState() = default;
  CuXCovState(double alpha, int v, int u) : alpha_(alpha), sigma_c_(Matrix::Zero(v, u)) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ValidationError("CuXCov decay rate must lie in [0,1]");
    }
  }

  /// Folds in one batch statistic and returns the new sigma_a.
  Matrix update(const Matrix& sigma_m) {
    if (sigma_m.rows() != sigma_c_.rows() || sigma_m.cols() != sigma_c_.cols()) {
      throw ValidationError("cuxcov_update: batch covariance shape mismatch");
    }
    prev_sigma_c_ = sigma_c_;
    prev_p_ = p_;
    sigma_c_ = alpha_ * sigma_c_ + sigma_m;
    p_ = alpha_ * p_ + 1.0;
    ++k_;
    return sigma_a();
  }

  void reset() {
    sigma_c_.setZero();
    prev_sigma_c_ = Matrix();
    p_ = prev_p_ = 0.0;
    k_ = 0;
  }

  double alpha() const { return alpha_; }
  const Matrix& sigma_c() const { return sigma_c_; }
  double p() const { return p_; }
  long k() const { return k_; }

  /// Accumulator before the latest update (held constant by the gradient).
  const Matrix& previous_sigma_c() const { return prev_sigma_c_; }
  double previous_p() const { return prev_p_; }

  Matrix sigma_a() const {
    if (k_ == 0) throw ValidationError("CuXCov state has not been updated yet");
    return sigma_c_ / p_;
  }

 private:
  double alpha_ = 0.0;
  Matrix sigma_c_;
  Matrix prev_sigma_c_;
  double p_ = 0.0;
  double prev_p_ = 0.0;
  long k_ = 0;
};

/// Functional form of CuXCovState::update.
inline std::pair<CuXCovState, Matrix> cuxcov_update(CuXCovState state, const Matrix& sigma_m) {
  Matrix sigma_a = state.update(sigma_m);
  return {std::move(state), std::move(sigma_a)};
}

struct RepresentationLoss {
  double value = 0.0;
  Matrix d_y;  // v x N
  Matrix d_z;  // u x N
};

/// trace(sigma_a^T sigma_a) / 2 for a state that already absorbed this
/// batch. Only the current batch statistic depends on (Y, Z); the history
/// is a constant, giving dL/dY = (1/(N p)) sigma_a Zc and
/// dL/dZ = (1/(N p)) sigma_a^T Yc for centered Yc, Zc.
inline RepresentationLoss cuxcov_loss(const CuXCovState& state, const BatchRepresentation& reps) {
  if (state.k() == 0) throw ValidationError("cuxcov_loss called before any update");
  const Eigen::Index n = reps.samples();
  if (reps.y_tilde.rows() != state.sigma_c().rows() ||
      reps.z_tilde.rows() != state.sigma_c().cols() || reps.z_tilde.cols() != n || n < 1) {
    throw ValidationError("cuxcov_loss: representation shape mismatch");
  }
  const Matrix sigma_a = state.sigma_a();
  const Matrix yc = reps.y_tilde.colwise() - reps.y_tilde.rowwise().mean();
  const Matrix zc = reps.z_tilde.colwise() - reps.z_tilde.rowwise().mean();
  const double scale = 1.0 / (static_cast<double>(n) * state.p());
  return {0.5 * sigma_a.squaredNorm(), scale * sigma_a * zc, scale * sigma_a.transpose() * yc};
}

/// Per-batch penalty (1/2) sum_ij [ (1/N) sum_s (y_is - ybar_i)(z_js - zbar_j) ]^2,
/// evaluated directly from the sums.
inline RepresentationLoss xcov_loss(const BatchRepresentation& reps) {
  const Eigen::Index n = reps.samples();
  const Eigen::Index v = reps.y_tilde.rows();
  const Eigen::Index u = reps.z_tilde.rows();
  if (n < 1 || reps.z_tilde.cols() != n) {
    throw ValidationError("xcov_loss: need N >= 1 columns in both blocks");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Vector ybar = Vector::Zero(v), zbar = Vector::Zero(u);
  for (Eigen::Index s = 0; s < n; ++s) {
    ybar += reps.y_tilde.col(s);
    zbar += reps.z_tilde.col(s);
  }
  ybar *= inv_n;
  zbar *= inv_n;
  Matrix cov = Matrix::Zero(v, u);
  for (Eigen::Index i = 0; i < v; ++i) {
    for (Eigen::Index j = 0; j < u; ++j) {
      double acc = 0.0;
      for (Eigen::Index s = 0; s < n; ++s) {
        acc += (reps.y_tilde(i, s) - ybar(i)) * (reps.z_tilde(j, s) - zbar(j));
      }
      cov(i, j) = acc * inv_n;
    }
  }
  RepresentationLoss out;
  out.value = 0.5 * cov.squaredNorm();
  out.d_y = Matrix::Zero(v, n);
  out.d_z = Matrix::Zero(u, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (Eigen::Index i = 0; i < v; ++i) {
      for (Eigen::Index j = 0; j < u; ++j) {
        out.d_y(i, s) += cov(i, j) * (reps.z_tilde(j, s) - zbar(j)) * inv_n;
        out.d_z(j, s) += cov(i, j) * (reps.y_tilde(i, s) - ybar(i)) * inv_n;
      }
    }
  }
  return out;
}

/// Labels and a mask of which (type, sample) entries are labeled.
struct LabelBatch {
  Matrix labels;  // v x N, {0,1}
  Matrix mask;    // v x N, {0,1}
};

inline constexpr double kProbabilityClamp = 1e-12;

struct ClassificationLoss {
  double value = 0.0;
  Matrix d_y_hat;  // v x N
};

/// -sum over masked entries of [lambda y log(y_hat) + (1-y) log(1-y_hat)];
/// y_hat is clamped to [1e-12, 1 - 1e-12] before the logs.
inline ClassificationLoss cls_loss(const Matrix& y_hat, const LabelBatch& batch, double lambda) {
  if (!(lambda > 1.0)) throw ValidationError("positive-sample weight lambda must exceed 1");
  if (batch.labels.rows() != y_hat.rows() || batch.labels.cols() != y_hat.cols() ||
      batch.mask.rows() != y_hat.rows() || batch.mask.cols() != y_hat.cols()) {
    throw ValidationError("cls_loss: label batch shape mismatch");
  }
  ClassificationLoss out{0.0, Matrix::Zero(y_hat.rows(), y_hat.cols())};
  for (Eigen::Index s = 0; s < y_hat.cols(); ++s) {
    for (Eigen::Index i = 0; i < y_hat.rows(); ++i) {
      if (batch.mask(i, s) == 0.0) continue;
      const double raw = y_hat(i, s);
      if (!(raw >= 0.0 && raw <= 1.0)) {
        throw NumericalError("cls_loss: prediction outside [0,1]");
      }
      const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
      const double y = batch.labels(i, s);
      out.value -= lambda * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
      out.d_y_hat(i, s) = -lambda * y / p + (1.0 - y) / (1.0 - p);
    }
  }
  return out;
}

struct ReconstructionLoss {
  double value = 0.0;
  Matrix d_reconstruction;  // N x 2l
};

/// sum_s ||d_s - g_s||^2 over N x 2l inputs and reconstructions.
inline ReconstructionLoss rcnst_loss(const Matrix& inputs, const Matrix& reconstructions) {
  if (inputs.rows() != reconstructions.rows() || inputs.cols() != reconstructions.cols()) {
    throw ValidationError("rcnst_loss: shape mismatch");
  }
  const Matrix residual = reconstructions - inputs;
  return {residual.squaredNorm(), 2.0 * residual};
}

struct LossTerms {
  double cls = 0.0;
  double cuxcov = 0.0;
  double rcnst = 0.0;
};

/// Partials of a combined objective with respect to network outputs.
struct ObjectivePartials {
  double value = 0.0;
  Matrix d_y;               // v x N
  Matrix d_z;               // u x N
  Matrix d_reconstruction;  // N x 2l
};

/// L_cls + beta L_cuxcov + gamma L_rcnst with the partials combined the same
/// way. Zero weights are permitted here; `objective` enforces positivity.
inline ObjectivePartials weighted_objective(const ClassificationLoss& cls,
                                            const RepresentationLoss& cux,
                                            const ReconstructionLoss& rec, double beta,
                                            double gamma) {
  ObjectivePartials out;
  out.value = cls.value + beta * cux.value + gamma * rec.value;
  out.d_y = cls.d_y_hat + beta * cux.d_y;
  out.d_z = beta * cux.d_z;
  out.d_reconstruction = gamma * rec.d_reconstruction;
  return out;
}

inline ObjectivePartials objective(const ClassificationLoss& cls, const RepresentationLoss& cux,
                                   const ReconstructionLoss& rec, double beta, double gamma) {
  if (!(beta > 0.0) || !(gamma > 0.0)) {
    throw ValidationError("objective weights beta and gamma must be positive");
  }
  return weighted_objective(cls, cux, rec, beta, gamma);
}

inline double objective_value(const LossTerms& terms, double beta, double gamma) {
  if (!(beta > 0.0) || !(gamma > 0.0)) {
    throw ValidationError("objective weights beta and gamma must be positive");
  }
  return terms.cls + beta * terms.cuxcov + gamma * terms.rcnst;
}

}  // namespace mulfa

#endif  // MULFA_LOSSES_HPP
