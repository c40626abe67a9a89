#include "gcds/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace gcds::nn {
namespace {

// Independent layer-by-layer evaluation with explicit loops.
Matrix loop_forward(const DenseNet& net, const Matrix& batch) {
  Matrix a = batch;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix& W = net.weight(l);
    const Vector& b = net.bias(l);
    Matrix z(a.rows(), W.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index r = 0; r < W.rows(); ++r) {
        double s = b[r];
        for (Eigen::Index c = 0; c < W.cols(); ++c) s += W(r, c) * a(i, c);
        z(i, r) = (l + 1 < net.num_layers() && s < 0.0) ? 0.0 : s;
      }
    a = z;
  }
  return a;
}

// Scalar objective sum_i <u_i, net(x_i)> used by the finite-difference oracle.
double contraction(const DenseNet& net, const Matrix& batch, const Matrix& upstream) {
  return (loop_forward(net, batch).array() * upstream.array()).sum();
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-6, std::max(std::abs(a), std::abs(b)));
}

// Max relative error between backward() and central differences (h = 1e-5)
// over every parameter and every input coordinate.
double max_fd_error(const DenseNet& net, const Matrix& batch, const Matrix& upstream) {
  const auto fwd = forward(net, batch);
  const auto g = backward(net, fwd.cache, upstream);
  const Vector analytic = g.flatten();
  const Vector theta = net.flatten();
  const double h = 1e-5;
  double worst = 0.0;
  DenseNet probe = net;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Vector tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    probe.assign(tp);
    const double fp = contraction(probe, batch, upstream);
    probe.assign(tm);
    const double fm = contraction(probe, batch, upstream);
    worst = std::max(worst, rel_err((fp - fm) / (2 * h), analytic[k]));
  }
  for (Eigen::Index i = 0; i < batch.rows(); ++i)
    for (Eigen::Index j = 0; j < batch.cols(); ++j) {
      Matrix bp = batch, bm = batch;
      bp(i, j) += h;
      bm(i, j) -= h;
      const double fd = (contraction(net, bp, upstream) - contraction(net, bm, upstream)) / (2 * h);
      worst = std::max(worst, rel_err(fd, g.d_input(i, j)));
    }
  return worst;
}

TEST(NetworkSpec, ParameterCountClosedForm) {
  NetworkSpec s(8, {50}, 1);
  EXPECT_EQ(s.parameter_count(), 9u * 50u + 51u * 1u);
  EXPECT_EQ(DenseNet(s).parameter_count(), s.parameter_count());
  NetworkSpec linear(2, {}, 3);
  EXPECT_EQ(linear.parameter_count(), 9u);
  EXPECT_THROW(NetworkSpec(0, {}, 1), Error);
  EXPECT_THROW(NetworkSpec(2, {0}, 1), Error);
}

TEST(Init, ZeroBiasesAndDeterminism) {
  const NetworkSpec spec(2, {}, 1);
  const auto a = init_network(spec, 3);
  EXPECT_EQ(a.bias(0)[0], 0.0);
  EXPECT_TRUE(init_network(NetworkSpec(4, {7, 5}, 2), 11) == init_network(NetworkSpec(4, {7, 5}, 2), 11));
  EXPECT_FALSE(init_network(NetworkSpec(4, {7, 5}, 2), 11) == init_network(NetworkSpec(4, {7, 5}, 2), 12));
}

TEST(Init, HeVarianceFirstLayer) {
  const auto net = init_network(NetworkSpec(3, {50}, 1), 5);
  const Matrix& W = net.weight(0);
  const double mean = W.mean();
  const double var = (W.array() - mean).square().sum() / static_cast<double>(W.size() - 1);
  EXPECT_NEAR(var, 2.0 / 3.0, 0.2 * 2.0 / 3.0);
}

TEST(Forward, ReluClipsNegatives) {
  DenseNet net(NetworkSpec(2, {2}, 2));
  net.weight(0) = Matrix::Identity(2, 2);
  net.weight(1) = Matrix::Identity(2, 2);
  Matrix in(1, 2);
  in << 1.0, -1.0;
  const auto r = forward(net, in);
  EXPECT_EQ(r.cache.activations[1](0, 0), 1.0);
  EXPECT_EQ(r.cache.activations[1](0, 1), 0.0);
  EXPECT_EQ(r.output(0, 1), 0.0);
}

TEST(Forward, ZeroNetIsZero) {
  DenseNet net(NetworkSpec(3, {4, 2}, 2));
  EXPECT_TRUE(forward(net, Matrix::Random(5, 3)).output.isZero(0.0));
}

TEST(Forward, MatchesLoopOracle) {
  const auto net = init_network(NetworkSpec(2, {3}, 1), 7);
  Matrix in(1, 2);
  in << 0.5, 0.5;
  EXPECT_NEAR(forward(net, in).output(0, 0), loop_forward(net, in)(0, 0), 1e-12);
}

TEST(Forward, RejectsWrongWidth) {
  const auto net = init_network(NetworkSpec(2, {3}, 1), 7);
  EXPECT_THROW(forward(net, Matrix::Zero(1, 3)), Error);
}

TEST(Forward, Deterministic) {
  const auto net = init_network(NetworkSpec(5, {9, 4}, 2), 1);
  Rng rng(2);
  const Matrix in = standard_normal(17, 5, rng);
  const Matrix a = forward(net, in).output;
  const Matrix b = forward(net, in).output;
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(predict(net, in) == a);
}

TEST(Backward, ZeroUpstreamGivesZeroBundle) {
  const auto net = init_network(NetworkSpec(3, {4}, 2), 1);
  const Matrix in = Matrix::Random(6, 3);
  const auto g = backward(net, forward(net, in).cache, Matrix::Zero(6, 2));
  EXPECT_TRUE(g.flatten().isZero(0.0));
  EXPECT_TRUE(g.d_input.isZero(0.0));
}

TEST(Backward, LinearNetClosedForm) {
  const auto net = init_network(NetworkSpec(3, {}, 2), 9);
  Rng rng(4);
  const Matrix in = standard_normal(5, 3, rng);
  const Matrix u = standard_normal(5, 2, rng);
  const auto g = backward(net, forward(net, in).cache, u);
  EXPECT_TRUE(g.d_weights[0].isApprox(u.transpose() * in, 1e-14));
  EXPECT_TRUE(g.d_biases[0].isApprox(u.colwise().sum().transpose(), 1e-14));
  EXPECT_TRUE(g.d_input.isApprox(u * net.weight(0), 1e-14));
}

TEST(Backward, RejectsMismatchedCache) {
  const auto a = init_network(NetworkSpec(3, {4}, 1), 1);
  const auto b = init_network(NetworkSpec(3, {4, 4}, 1), 1);
  const auto cache = forward(a, Matrix::Random(2, 3)).cache;
  EXPECT_THROW(backward(b, cache, Matrix::Ones(2, 1)), Error);
}

TEST(Backward, FiniteDifferenceSmallNet) {
  const auto net = init_network(NetworkSpec(3, {5, 4}, 2), 21);
  Rng rng(22);
  EXPECT_LT(max_fd_error(net, standard_normal(4, 3, rng), standard_normal(4, 2, rng)), 1e-4);
}

// Property: 100 random (spec, seed, batch) triples with dims <= 8.
TEST(Backward, FiniteDifferenceProperty) {
  Rng meta(2024);
  std::uniform_int_distribution<int> dim(1, 8), depth(0, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> hidden(static_cast<std::size_t>(depth(meta)));
    for (int& w : hidden) w = dim(meta);
    const NetworkSpec spec(dim(meta), hidden, dim(meta));
    auto net = init_network(spec, meta());
    for (std::size_t l = 0; l < net.num_layers(); ++l)
      net.bias(l) = 0.5 * standard_normal(net.bias(l).size(), 1, meta);
    // Central differences are meaningless across a ReLU kink, so redraw the
    // batch until every hidden pre-activation is at least 1e-3 from zero.
    Matrix batch;
    for (bool near_kink = true; near_kink;) {
      batch = standard_normal(dim(meta), spec.input_dim, meta);
      const auto cache = forward(net, batch).cache;
      near_kink = false;
      for (std::size_t l = 0; l + 1 < net.num_layers(); ++l)
        near_kink = near_kink || cache.pre_activations[l].cwiseAbs().minCoeff() < 1e-3;
    }
    const Matrix up = standard_normal(batch.rows(), spec.output_dim, meta);
    worst = std::max(worst, max_fd_error(net, batch, up));
  }
  EXPECT_LT(worst, 1e-4);
}

GradientBundle scalar_grad(double g) {
  GradientBundle b;
  b.d_weights = {Matrix::Constant(1, 1, g)};
  b.d_biases = {Vector::Zero(1)};
  return b;
}

TEST(Adam, FirstStepIsSignStep) {
  DenseNet net(NetworkSpec(1, {}, 1));
  AdamState st(net.parameter_count(), {1e-3, 0.9, 0.999, 1e-8});
  adam_step(st, net, scalar_grad(1.0));
  EXPECT_NEAR(net.weight(0)(0, 0), -1e-3, 1e-10);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto net = init_network(NetworkSpec(1, {}, 1), 3);
  const Vector before = net.flatten();
  AdamState st(net.parameter_count(), {});
  adam_step(st, net, scalar_grad(0.0));
  EXPECT_TRUE(net.flatten() == before);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, TwoStepsMatchRecurrence) {
  const AdamConfig c{1e-2, 0.5, 0.999, 1e-8};
  DenseNet net(NetworkSpec(1, {}, 1));
  net.weight(0)(0, 0) = 0.3;
  AdamState st(net.parameter_count(), c);
  adam_step(st, net, scalar_grad(0.7));
  adam_step(st, net, scalar_grad(0.7));

  double theta = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    m = c.beta1 * m + (1 - c.beta1) * 0.7;
    v = c.beta2 * v + (1 - c.beta2) * 0.49;
    const double mh = m / (1 - std::pow(c.beta1, t));
    const double vh = v / (1 - std::pow(c.beta2, t));
    theta -= c.lr * mh / (std::sqrt(vh) + c.eps);
  }
  EXPECT_NEAR(net.weight(0)(0, 0), theta, 1e-12);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  auto net = init_network(NetworkSpec(3, {4}, 2), 8);
  const Vector before = net.flatten();
  AdamState st(net.parameter_count(), {0.0, 0.5, 0.999, 1e-8});
  const auto g = backward(net, forward(net, Matrix::Random(3, 3)).cache, Matrix::Ones(3, 2));
  for (int i = 0; i < 5; ++i) adam_step(st, net, g);
  EXPECT_TRUE(net.flatten() == before);
}

TEST(Adam, NonFiniteGradientReportsStep) {
  DenseNet net(NetworkSpec(1, {}, 1));
  AdamState st(net.parameter_count(), {});
  adam_step(st, net, scalar_grad(1.0));
  try {
    adam_step(st, net, scalar_grad(std::nan("")));
    FAIL() << "expected OptimizerError";
  } catch (const OptimizerError& e) {
    EXPECT_EQ(e.step(), 2u);
  }
}

TEST(Checkpoint, RoundTripsBitExactly) {
  const auto net = init_network(NetworkSpec(4, {6, 3}, 2), 99);
  const auto j = checkpoint_to_json(net, 99, 1234);
  const auto back = checkpoint_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_TRUE(back.net == net);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.step, 1234u);
}

}  // namespace
}  // namespace gcds::nn
