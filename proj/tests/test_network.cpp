#include "support.hpp"

#include "mulfa/selfcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mulfa;
using testing_support::random_matrix;
using testing_support::TempDir;

namespace {

// Straight-line evaluation of the layer recursion with explicit loops.
std::vector<double> reference_forward(const NetworkParams& net, const std::vector<double>& input,
                                      int stop_layer) {
  std::vector<double> x = input;
  for (int h = 1; h <= stop_layer; ++h) {
    const auto& layer = net.layers[static_cast<std::size_t>(h - 1)];
    std::vector<double> next(static_cast<std::size_t>(layer.weight.cols()));
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      double a = layer.bias(j);
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) a += layer.weight(i, j) * x[static_cast<std::size_t>(i)];
      switch (net.shape.activations[static_cast<std::size_t>(h - 1)]) {
        case Activation::relu: a = a > 0.0 ? a : 0.0; break;
        case Activation::linear: break;
        case Activation::split: a = j < net.shape.v ? 1.0 / (1.0 + std::exp(-a)) : a; break;
      }
      next[static_cast<std::size_t>(j)] = a;
    }
    x = std::move(next);
  }
  return x;
}

NetworkParams random_net(std::uint64_t seed, std::vector<int> hidden = {8}, int width = 12, int v = 3,
                         int u = 2) {
  auto net = init_params(NetworkShape::symmetric(width, hidden, v, u), seed);
  Rng rng(seed + 100);
  for (auto& layer : net.layers) layer.bias = random_matrix(rng, layer.bias.size(), 1, -0.3, 0.3);
  return net;
}

}  // namespace

TEST(Shape, SymmetricStackLayout) {
  const auto s = NetworkShape::symmetric(64, {512}, 8, 64);
  EXPECT_EQ(s.dims, (std::vector<int>{64, 512, 72, 512, 64}));
  EXPECT_EQ(s.code_layer(), 2);
  EXPECT_EQ(s.activations[1], Activation::split);
  EXPECT_EQ(s.activations[3], Activation::linear);
}

TEST(Shape, RejectsInvalidShapes) {
  EXPECT_THROW(NetworkShape::symmetric(12, {0}, 3, 2), ValidationError);
  NetworkShape odd;
  odd.dims = {4, 3, 4};
  odd.v = 2;
  odd.u = 1;
  odd.activations = {Activation::split, Activation::linear};
  EXPECT_NO_THROW(odd.validate());
  odd.dims = {4, 3, 3, 4};
  odd.activations = {Activation::relu, Activation::split, Activation::linear};
  EXPECT_THROW(odd.validate(), ValidationError);
  NetworkShape bad_code = NetworkShape::symmetric(4, {}, 2, 1);
  bad_code.u = 2;
  EXPECT_THROW(bad_code.validate(), ValidationError);
}

TEST(Init, DeterministicAndBounded) {
  const auto shape = NetworkShape::symmetric(20, {10, 6}, 3, 2);
  const auto a = init_params(shape, 42);
  const auto b = init_params(shape, 42);
  for (int h = 1; h <= shape.depth(); ++h) {
    const auto& la = a.layers[static_cast<std::size_t>(h - 1)];
    EXPECT_EQ(la.weight, b.layers[static_cast<std::size_t>(h - 1)].weight);
    EXPECT_TRUE(la.bias.isZero());
    const double bound = std::sqrt(6.0 / (shape.dims[static_cast<std::size_t>(h - 1)] +
                                          shape.dims[static_cast<std::size_t>(h)]));
    EXPECT_LE(la.weight.cwiseAbs().maxCoeff(), bound);
  }
  EXPECT_NE(init_params(shape, 43).layers[0].weight, a.layers[0].weight);
}

TEST(Encode, ZeroNetworkGivesHalfAndZero) {
  auto net = init_params(NetworkShape::symmetric(6, {4}, 2, 3), 1);
  for (auto& layer : net.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  const auto rep = encode(net, Vector::Ones(6));
  EXPECT_TRUE(rep.y_hat.isApproxToConstant(0.5));
  EXPECT_TRUE(rep.z.isZero());
}

TEST(Encode, ForcedZeroPreActivation) {
  auto net = init_params(NetworkShape::symmetric(2, {}, 1, 1), 1);
  net.layers[0].weight << 1.0, 2.0, -1.0, 0.5;  // column 0 feeds y_hat
  const auto rep = encode(net, Eigen::Vector2d(1.0, 1.0));
  EXPECT_EQ(rep.y_hat(0), 0.5);
  EXPECT_DOUBLE_EQ(rep.z(0), 2.5);
}

TEST(Encode, MatchesReferenceRecursion) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = random_net(seed, {8, 6});
    Rng rng(seed);
    const Vector x = random_matrix(rng, 12, 1);
    const auto rep = encode(net, x);
    const auto ref = reference_forward(net, {x.data(), x.data() + x.size()}, net.shape.code_layer());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(rep.y_hat(i), ref[static_cast<std::size_t>(i)], 1e-12);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(rep.z(j), ref[static_cast<std::size_t>(3 + j)], 1e-12);
    const auto out = reference_forward(net, {x.data(), x.data() + x.size()}, net.shape.depth());
    const Vector g = decode(net, rep);
    for (int k = 0; k < 12; ++k) EXPECT_NEAR(g(k), out[static_cast<std::size_t>(k)], 1e-12);
  }
}

TEST(Encode, YHatInOpenUnitInterval) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto net = random_net(seed);
    Rng rng(seed);
    const auto rep = encode(net, random_matrix(rng, 12, 1, -5.0, 5.0));
    EXPECT_TRUE((rep.y_hat.array() > 0.0).all() && (rep.y_hat.array() < 1.0).all());
  }
}

TEST(Encode, RejectsWrongWidthAndNonFinite) {
  const auto net = random_net(1);
  EXPECT_THROW(encode(net, Vector::Zero(5)), ValidationError);
  Vector x = Vector::Zero(12);
  x(0) = std::numeric_limits<double>::infinity();
  try {
    encode(net, x);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos);
  }
}

TEST(Decode, IdentityDecoderPassesCodeThrough) {
  NetworkShape shape;
  shape.dims = {5, 5, 5, 5, 5};
  shape.v = 2;
  shape.u = 3;
  shape.activations = {Activation::linear, Activation::split, Activation::linear, Activation::linear};
  NetworkParams net{shape, {}};
  for (int h = 0; h < 4; ++h) net.layers.push_back({Matrix::Identity(5, 5), Vector::Zero(5)});
  Representation code{Eigen::Vector2d(0.25, 0.75), Eigen::Vector3d(-1.0, 0.0, 3.5)};
  Vector expect(5);
  expect << 0.25, 0.75, -1.0, 0.0, 3.5;
  EXPECT_EQ(decode(net, code), expect);
}

TEST(Decode, ZeroWeightsGiveOutputBias) {
  auto net = random_net(3);
  for (std::size_t h = 2; h < net.layers.size(); ++h) net.layers[h].weight.setZero();
  Representation code{Vector::Constant(3, 0.4), Vector::Constant(2, -1.0)};
  EXPECT_EQ(decode(net, code), net.layers.back().bias);
}

TEST(ForwardBatch, ColumnsMatchSingleSampleForward) {
  const auto net = random_net(7);
  Rng rng(7);
  const Matrix inputs = random_matrix(rng, 5, 12);
  const auto fwd = forward_batch(net, inputs);
  for (Eigen::Index s = 0; s < 5; ++s) {
    const auto rep = encode(net, inputs.row(s).transpose());
    EXPECT_LE((fwd.rep.y_tilde.col(s) - rep.y_hat).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((fwd.rep.z_tilde.col(s) - rep.z).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((fwd.reconstruction.row(s).transpose() - decode(net, rep)).cwiseAbs().maxCoeff(), 1e-12);
  }
  const auto one = forward_batch(net, inputs.topRows(1));
  EXPECT_LE((one.reconstruction.row(0) - fwd.reconstruction.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForwardBatch, PermutingRowsPermutesOutputs) {
  const auto net = random_net(8);
  Rng rng(8);
  const Matrix inputs = random_matrix(rng, 6, 12);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  const auto a = forward_batch(net, inputs);
  const auto b = forward_batch(net, perm * inputs);
  EXPECT_LE(((perm * a.reconstruction) - b.reconstruction).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(((a.rep.y_tilde * perm.transpose()) - b.rep.y_tilde).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, ZeroInjectedGradientsGiveZero) {
  const auto net = random_net(2);
  Rng rng(2);
  const Matrix inputs = random_matrix(rng, 4, 12);
  const auto fwd = forward_batch(net, inputs);
  const auto g = backward_batch(net, fwd.trace, Matrix::Zero(4, 12), Matrix::Zero(3, 4), Matrix::Zero(2, 4));
  for (const auto& layer : g) {
    EXPECT_TRUE(layer.weight.isZero());
    EXPECT_TRUE(layer.bias.isZero());
  }
}

TEST(Backward, DeadReluUnitHasZeroIncomingGradient) {
  auto net = random_net(4);
  net.layers[0].bias(0) = -1e6;  // hidden unit 0 never fires
  Rng rng(4);
  const Matrix inputs = random_matrix(rng, 4, 12, 0.0, 1.0);
  const auto fwd = forward_batch(net, inputs);
  const auto g = backward_batch(net, fwd.trace, random_matrix(rng, 4, 12), random_matrix(rng, 3, 4),
                                random_matrix(rng, 2, 4));
  EXPECT_TRUE(g[0].weight.col(0).isZero());
  EXPECT_EQ(g[0].bias(0), 0.0);
}

TEST(Backward, MatchesFiniteDifferencesPerTerm) {
  for (auto term : {selfcheck::LossTerm::classification, selfcheck::LossTerm::reconstruction,
                    selfcheck::LossTerm::cross_covariance, selfcheck::LossTerm::composite}) {
    const auto c = selfcheck::random_case({8}, 12, 3, 2, 4, 0.3, 11);
    const double err = selfcheck::max_relative_error(selfcheck::analytic_gradients(c, term),
                                                     selfcheck::numeric_gradients(c, term, 1e-5));
    EXPECT_LT(err, 1e-4) << selfcheck::term_name(term);
  }
}

TEST(Backward, DeeperNetworkMatchesFiniteDifferences) {
  const auto c = selfcheck::random_case({9, 7}, 10, 2, 3, 5, 0.5, 21);
  const double err = selfcheck::max_relative_error(
      selfcheck::analytic_gradients(c, selfcheck::LossTerm::composite),
      selfcheck::numeric_gradients(c, selfcheck::LossTerm::composite, 1e-5));
  EXPECT_LT(err, 1e-4);
}

TEST(Backward, RejectsShapeMismatch) {
  const auto net = random_net(5);
  Rng rng(5);
  const auto fwd = forward_batch(net, random_matrix(rng, 4, 12));
  EXPECT_THROW(backward_batch(net, fwd.trace, Matrix::Zero(3, 12), Matrix::Zero(3, 4), Matrix::Zero(2, 4)),
               ValidationError);
  EXPECT_THROW(backward_batch(net, fwd.trace, Matrix::Zero(4, 12), Matrix::Zero(2, 4), Matrix::Zero(2, 4)),
               ValidationError);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  TempDir dir;
  const auto net = random_net(9, {10, 7});
  save_checkpoint(net, dir.file("ck.txt"));
  const auto back = load_checkpoint(dir.file("ck.txt"));
  EXPECT_EQ(back.shape, net.shape);
  Rng rng(9);
  const Matrix inputs = random_matrix(rng, 100, 12);
  EXPECT_LE((forward_batch(net, inputs).reconstruction - forward_batch(back, inputs).reconstruction)
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  TempDir dir;
  save_checkpoint(random_net(1), dir.file("ck.txt"));
  const auto text = testing_support::read_file(dir.file("ck.txt"));
  for (std::size_t keep : {text.size() - 4, text.size() / 2, std::size_t{20}}) {
    testing_support::write_file(dir.file("cut.txt"), text.substr(0, keep));
    EXPECT_THROW(load_checkpoint(dir.file("cut.txt")), Error) << keep;
  }
}

TEST(Checkpoint, VersionAndHeaderChecks) {
  TempDir dir;
  save_checkpoint(random_net(1), dir.file("ck.txt"));
  auto text = testing_support::read_file(dir.file("ck.txt"));
  auto bumped = text;
  bumped.replace(bumped.find("version 1"), 9, "version 2");
  testing_support::write_file(dir.file("v2.txt"), bumped);
  EXPECT_THROW(load_checkpoint(dir.file("v2.txt")), ValidationError);
  auto wrong_dims = text;
  wrong_dims.replace(wrong_dims.find("layer_dims 12"), 13, "layer_dims 13");
  testing_support::write_file(dir.file("dims.txt"), wrong_dims);
  EXPECT_THROW(load_checkpoint(dir.file("dims.txt")), ValidationError);
}

TEST(Checkpoint, HandWrittenAffineMap) {
  TempDir dir;
  testing_support::write_file(dir.file("ck.txt"),
                              "mulfa-checkpoint\nversion 1\nH 2\nlayer_dims 2 2 2\nv 1\nu 1\n"
                              "activations split linear\n"
                              "weight 1 2 2\n1 0\n0 1\nbias 1 2\n0 0\n"
                              "weight 2 2 2\n2 0\n1 -1\nbias 2 2\n0.5 0.25\nend\n");
  const auto net = load_checkpoint(dir.file("ck.txt"));
  const Eigen::Vector2d x(0.0, 3.0);
  const auto fwd = forward_batch(net, x.transpose());
  // code = (sigmoid(0), 3) = (0.5, 3); out_j = sum_i W(i,j) code_i + b_j
  EXPECT_DOUBLE_EQ(fwd.reconstruction(0, 0), 2 * 0.5 + 1 * 3 + 0.5);
  EXPECT_DOUBLE_EQ(fwd.reconstruction(0, 1), -3 + 0.25);
}
