#ifndef MULFA_NETWORK_HPP
#define MULFA_NETWORK_HPP

// Fully connected encoder-decoder whose middle layer is split into a sigmoid
// label block (y_hat, width v) and an affine nuisance block (z, width u).
//
// Layer h maps L^(h-1) (length d_{h-1}) to t_h(W_h^T L^(h-1) + b_h), with W_h
// stored as a d_{h-1} x d_h matrix. Batches are held column-wise inside the
// network (one column per sample); public batch inputs and reconstructions
// are N x 2l with one row per sample.

#include "mulfa/core.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace mulfa {

enum class Activation { relu, linear, split };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
    case Activation::split: return "split";
  }
  return "?";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "linear") return Activation::linear;
  if (name == "split") return Activation::split;
  throw ValidationError("unknown activation tag: " + name);
}

struct NetworkShape {
  std::vector<int> dims;  // d_0 .. d_H
  int v = 0;
  int u = 0;
  std::vector<Activation> activations;  // one per layer 1..H

  int depth() const { return static_cast<int>(dims.size()) - 1; }
  int code_layer() const { return depth() / 2; }
  int input_width() const { return dims.front(); }

  /// Mirrored stack: input -> hidden... -> (v+u) -> reversed hidden... -> input,
  /// ReLU hidden layers and a linear output.
  static NetworkShape symmetric(int input_width, const std::vector<int>& hidden, int v, int u) {
    NetworkShape s;
    s.v = v;
    s.u = u;
    s.dims.push_back(input_width);
    for (int d : hidden) s.dims.push_back(d);
    s.dims.push_back(v + u);
    for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) s.dims.push_back(*it);
    s.dims.push_back(input_width);
    const int depth = s.depth();
    for (int h = 1; h <= depth; ++h) {
      if (h == depth / 2) {
        s.activations.push_back(Activation::split);
      } else if (h == depth) {
        s.activations.push_back(Activation::linear);
      } else {
        s.activations.push_back(Activation::relu);
      }
    }
    s.validate();
    return s;
  }

  void validate() const {
    const int depth = this->depth();
    if (depth < 2 || depth % 2 != 0) {
      throw ValidationError("layer count H must be even and at least 2");
    }
    for (std::size_t h = 0; h < dims.size(); ++h) {
      if (dims[h] < 1) {
        throw ValidationError("layer " + std::to_string(h) + " has non-positive width");
      }
    }
    if (v < 1 || u < 0) throw ValidationError("label width v >= 1 and nuisance width u >= 0");
    if (dims[static_cast<std::size_t>(code_layer())] != v + u) {
      throw ValidationError("code layer width must equal v + u");
    }
    if (dims.front() != dims.back()) {
      throw ValidationError("output width must equal input width");
    }
    if (static_cast<int>(activations.size()) != depth) {
      throw ValidationError("need one activation tag per layer");
    }
    for (int h = 1; h <= depth; ++h) {
      const bool is_split = activations[static_cast<std::size_t>(h - 1)] == Activation::split;
      if (is_split != (h == code_layer())) {
        throw ValidationError("the split activation belongs to the code layer only");
      }
    }
  }

  bool operator==(const NetworkShape&) const = default;
};

struct Layer {
  Matrix weight;  // d_{h-1} x d_h
  Vector bias;    // d_h
};

struct NetworkParams {
  NetworkShape shape;
  std::vector<Layer> layers;  // layers[h-1] is layer h
};

/// Parameter gradients, laid out like NetworkParams::layers.
using Gradients = std::vector<Layer>;

inline Gradients zero_gradients(const NetworkParams& params) {
  Gradients g;
  for (const auto& layer : params.layers) {
    g.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                 Vector::Zero(layer.bias.size())});
  }
  return g;
}

/// Glorot-uniform weights, zero biases.
inline NetworkParams init_params(const NetworkShape& shape, std::uint64_t seed) {
  shape.validate();
  NetworkParams params{shape, {}};
  Rng rng(mix_seed(seed, 0x1417));
  for (int h = 1; h <= shape.depth(); ++h) {
    const int fan_in = shape.dims[static_cast<std::size_t>(h - 1)];
    const int fan_out = shape.dims[static_cast<std::size_t>(h)];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Layer layer{Matrix(fan_in, fan_out), Vector::Zero(fan_out)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        layer.weight(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

/// Cached pre-activations and activations of one batch forward pass.
/// act[0] is the input; pre[0] is unused. Columns are samples.
struct ForwardTrace {
  std::vector<Matrix> pre;
  std::vector<Matrix> act;
};

struct Representation {
  Vector y_hat;
  Vector z;
};

struct BatchForward {
  BatchRepresentation rep;
  Matrix reconstruction;  // N x 2l
  ForwardTrace trace;
};

namespace detail {

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Matrix activate(const Matrix& pre, Activation a, int v) {
  switch (a) {
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::linear: return pre;
    case Activation::split: {
      Matrix out = pre;
      out.topRows(v) = pre.topRows(v).unaryExpr([](double x) { return sigmoid(x); });
      return out;
    }
  }
  return pre;
}

// Elementwise derivative of the activation, given pre-activation and output.
inline Matrix activation_slope(const Matrix& pre, const Matrix& act, Activation a, int v) {
  switch (a) {
    case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::linear: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::split: {
      Matrix out = Matrix::Ones(pre.rows(), pre.cols());
      out.topRows(v) = (act.topRows(v).array() * (1.0 - act.topRows(v).array())).matrix();
      return out;
    }
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

inline void check_layer_input(const NetworkParams& params, int h, Eigen::Index rows) {
  if (rows != params.layers[static_cast<std::size_t>(h - 1)].weight.rows()) {
    throw ValidationError("input to layer " + std::to_string(h) + " has width " +
                          std::to_string(rows) + ", expected " +
                          std::to_string(params.layers[static_cast<std::size_t>(h - 1)].weight.rows()));
  }
}

// Runs layers first..last on column-sample activations, optionally recording.
inline Matrix run_layers(const NetworkParams& params, Matrix x, int first, int last,
                         ForwardTrace* trace) {
  for (int h = first; h <= last; ++h) {
    check_layer_input(params, h, x.rows());
    const auto& layer = params.layers[static_cast<std::size_t>(h - 1)];
    Matrix pre = layer.weight.transpose() * x;
    pre.colwise() += layer.bias;
    Matrix act = activate(pre, params.shape.activations[static_cast<std::size_t>(h - 1)],
                          params.shape.v);
    if (!act.allFinite()) {
      throw NumericalError("non-finite activation at layer " + std::to_string(h));
    }
    if (trace) {
      trace->pre.push_back(std::move(pre));
      trace->act.push_back(act);
    }
    x = std::move(act);
  }
  return x;
}

}  // namespace detail

/// Encoder f: input (length 2l) -> (y_hat, z).
inline Representation encode(const NetworkParams& params, const Vector& input) {
  if (input.size() != params.shape.input_width()) {
    throw ValidationError("encode: input length " + std::to_string(input.size()) +
                          ", expected " + std::to_string(params.shape.input_width()));
  }
  const Matrix code = detail::run_layers(params, input, 1, params.shape.code_layer(), nullptr);
  return {code.col(0).head(params.shape.v), code.col(0).tail(params.shape.u)};
}

/// Decoder g: (y_hat, z) -> reconstruction of length 2l.
inline Vector decode(const NetworkParams& params, const Representation& rep) {
  if (rep.y_hat.size() != params.shape.v || rep.z.size() != params.shape.u) {
    throw ValidationError("decode: representation widths do not match the network");
  }
  Vector code(params.shape.v + params.shape.u);
  code << rep.y_hat, rep.z;
  const Matrix out = detail::run_layers(params, code, params.shape.code_layer() + 1,
                                        params.shape.depth(), nullptr);
  return out.col(0);
}

/// Encoder only, over N x 2l inputs.
inline BatchRepresentation encode_batch(const NetworkParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.shape.input_width()) {
    throw ValidationError("encode_batch: input width mismatch");
  }
  const Matrix code =
      detail::run_layers(params, inputs.transpose(), 1, params.shape.code_layer(), nullptr);
  return {code.topRows(params.shape.v), code.bottomRows(params.shape.u)};
}

/// Full pass over N x 2l inputs with every layer cached for backpropagation.
inline BatchForward forward_batch(const NetworkParams& params, const Matrix& inputs) {
  if (inputs.rows() < 1) throw ValidationError("forward_batch: empty batch");
  if (inputs.cols() != params.shape.input_width()) {
    throw ValidationError("forward_batch: input width " + std::to_string(inputs.cols()) +
                          ", expected " + std::to_string(params.shape.input_width()));
  }
  BatchForward out;
  out.trace.pre.emplace_back();
  out.trace.act.push_back(inputs.transpose());
  const Matrix recon =
      detail::run_layers(params, out.trace.act[0], 1, params.shape.depth(), &out.trace);
  const Matrix& code = out.trace.act[static_cast<std::size_t>(params.shape.code_layer())];
  out.rep.y_tilde = code.topRows(params.shape.v);
  out.rep.z_tilde = code.bottomRows(params.shape.u);
  out.reconstruction = recon.transpose();
  return out;
}

/// Exact gradients of a scalar whose partials with respect to the
/// reconstruction (N x 2l), y_hat (v x N) and z (u x N) are supplied. The
/// code-layer partials are added to whatever flows back from the decoder.
inline Gradients backward_batch(const NetworkParams& params, const ForwardTrace& trace,
                                const Matrix& d_reconstruction, const Matrix& d_y_hat,
                                const Matrix& d_z) {
  const auto& shape = params.shape;
  const int depth = shape.depth();
  if (static_cast<int>(trace.act.size()) != depth + 1 ||
      static_cast<int>(trace.pre.size()) != depth + 1) {
    throw ValidationError("backward_batch: trace does not match the network depth");
  }
  const Eigen::Index n = trace.act[0].cols();
  if (d_reconstruction.rows() != n || d_reconstruction.cols() != shape.dims.back()) {
    throw ValidationError("backward_batch: reconstruction gradient shape mismatch");
  }
  if (d_y_hat.rows() != shape.v || d_y_hat.cols() != n || d_z.rows() != shape.u ||
      d_z.cols() != n) {
    throw ValidationError("backward_batch: representation gradient shape mismatch");
  }
  for (int h = 0; h <= depth; ++h) {
    if (trace.act[static_cast<std::size_t>(h)].rows() != shape.dims[static_cast<std::size_t>(h)]) {
      throw ValidationError("backward_batch: trace does not match the network shape");
    }
  }

  Gradients grads(static_cast<std::size_t>(depth));
  Matrix d_act = d_reconstruction.transpose();  // dL/dL^(H), d_H x N
  for (int h = depth; h >= 1; --h) {
    const auto hi = static_cast<std::size_t>(h);
    if (h == shape.code_layer()) {
      d_act.topRows(shape.v) += d_y_hat;
      d_act.bottomRows(shape.u) += d_z;
    }
    const Matrix delta = d_act.cwiseProduct(detail::activation_slope(
        trace.pre[hi], trace.act[hi], shape.activations[hi - 1], shape.v));
    grads[hi - 1].weight = trace.act[hi - 1] * delta.transpose();
    grads[hi - 1].bias = delta.rowwise().sum();
    if (h > 1) d_act = params.layers[hi - 1].weight * delta;
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointFormat = "mulfa-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const NetworkParams& params, const std::string& path) {
  const auto& shape = params.shape;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << kCheckpointFormat << '\n';
  out << "version " << kCheckpointVersion << '\n';
  out << "H " << shape.depth() << '\n';
  out << "layer_dims";
  for (int d : shape.dims) out << ' ' << d;
  out << "\nv " << shape.v << "\nu " << shape.u << "\nactivations";
  for (auto a : shape.activations) out << ' ' << activation_name(a);
  out << '\n' << std::setprecision(17);
  for (int h = 1; h <= shape.depth(); ++h) {
    const auto& layer = params.layers[static_cast<std::size_t>(h - 1)];
    out << "weight " << h << ' ' << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        out << (c ? " " : "") << layer.weight(r, c);
      }
      out << '\n';
    }
    out << "bias " << h << ' ' << layer.bias.size() << '\n';
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) out << (i ? " " : "") << layer.bias(i);
    out << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("write failed: " + path);
}

inline NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  const auto fail = [&](const std::string& why) -> ValidationError {
    return ValidationError("checkpoint " + path + ": " + why);
  };
  std::string line;
  const auto next_line = [&]() {
    if (!std::getline(in, line)) throw fail("unexpected end of file");
    return std::istringstream(line);
  };
  const auto expect_key = [&](std::istringstream& is, const std::string& key) {
    std::string word;
    if (!(is >> word) || word != key) throw fail("expected '" + key + "'");
  };

  auto header = next_line();
  std::string format;
  header >> format;
  if (format != kCheckpointFormat) throw fail("not a checkpoint file");

  auto version_line = next_line();
  expect_key(version_line, "version");
  int version = 0;
  if (!(version_line >> version) || version != kCheckpointVersion) {
    throw fail("unsupported version (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  NetworkShape shape;
  auto h_line = next_line();
  expect_key(h_line, "H");
  int depth = 0;
  if (!(h_line >> depth) || depth < 2) throw fail("bad layer count");

  auto dims_line = next_line();
  expect_key(dims_line, "layer_dims");
  for (int d; dims_line >> d;) shape.dims.push_back(d);
  if (static_cast<int>(shape.dims.size()) != depth + 1) {
    throw fail("layer_dims length inconsistent with H");
  }
  auto v_line = next_line();
  expect_key(v_line, "v");
  if (!(v_line >> shape.v)) throw fail("bad v");
  auto u_line = next_line();
  expect_key(u_line, "u");
  if (!(u_line >> shape.u)) throw fail("bad u");
  auto act_line = next_line();
  expect_key(act_line, "activations");
  for (std::string tag; act_line >> tag;) shape.activations.push_back(parse_activation(tag));
  try {
    shape.validate();
  } catch (const ValidationError& e) {
    throw fail(e.what());
  }

  NetworkParams params{shape, {}};
  const auto read_values = [&](Eigen::Index count) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(count));
    while (static_cast<Eigen::Index>(values.size()) < count) {
      auto is = next_line();
      for (std::string tok; is >> tok;) {
        std::size_t used = 0;
        double x = 0.0;
        try {
          x = std::stod(tok, &used);
        } catch (const std::exception&) {
          throw fail("malformed number '" + tok + "'");
        }
        if (used != tok.size()) throw fail("malformed number '" + tok + "'");
        values.push_back(x);
      }
    }
    if (static_cast<Eigen::Index>(values.size()) != count) {
      throw fail("payload length inconsistent with dimension header");
    }
    return values;
  };
  for (int h = 1; h <= depth; ++h) {
    const Eigen::Index rows = shape.dims[static_cast<std::size_t>(h - 1)];
    const Eigen::Index cols = shape.dims[static_cast<std::size_t>(h)];
    auto w_head = next_line();
    expect_key(w_head, "weight");
    Eigen::Index idx = 0, r = 0, c = 0;
    if (!(w_head >> idx >> r >> c) || idx != h || r != rows || c != cols) {
      throw fail("weight header for layer " + std::to_string(h) + " inconsistent with layer_dims");
    }
    const auto w = read_values(rows * cols);
    Layer layer{Matrix(rows, cols), Vector(cols)};
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        layer.weight(i, j) = w[static_cast<std::size_t>(i * cols + j)];
      }
    }
    auto b_head = next_line();
    expect_key(b_head, "bias");
    Eigen::Index len = 0;
    if (!(b_head >> idx >> len) || idx != h || len != cols) {
      throw fail("bias header for layer " + std::to_string(h) + " inconsistent with layer_dims");
    }
    const auto b = read_values(cols);
    for (Eigen::Index j = 0; j < cols; ++j) layer.bias(j) = b[static_cast<std::size_t>(j)];
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw fail("non-finite parameter in layer " + std::to_string(h));
    }
    params.layers.push_back(std::move(layer));
  }
  auto end_line = next_line();
  expect_key(end_line, "end");
  return params;
}

}  // namespace mulfa

#endif  // MULFA_NETWORK_HPP
