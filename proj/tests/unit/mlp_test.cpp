#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "voltreg/error.hpp"
#include "voltreg/mlp.hpp"

using namespace voltreg;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

std::vector<double> flatten_grads(const GradientSet& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.dw.size(); ++l) {
    for (Eigen::Index i = 0; i < g.dw[l].rows(); ++i)
      for (Eigen::Index j = 0; j < g.dw[l].cols(); ++j) out.push_back(g.dw[l](i, j));
    for (Eigen::Index i = 0; i < g.db[l].size(); ++i) out.push_back(g.db[l][i]);
  }
  return out;
}

bool close(double a, double b) {
  const double err = std::abs(a - b);
  return err <= 1e-7 || err <= 1e-4 * std::max(std::abs(a), std::abs(b));
}

// Scalar probe L = sum(g_out .* net(x)); its gradients are exactly what
// backward() returns for grad_out = g_out.
double probe(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g_out) {
  return (net.forward_batch(x).array() * g_out.array()).sum();
}

void check_gradients(const Mlp& net, std::mt19937_64& rng, int batch) {
  const Eigen::MatrixXd x = random_matrix(net.in_dim(), batch, rng);
  const Eigen::MatrixXd g_out = random_matrix(net.out_dim(), batch, rng);
  const BackwardResult br = net.backward(net.forward_cached(x), g_out);
  const double h = 1e-5;

  const std::vector<double> theta = net.flatten();
  const std::vector<double> analytic = flatten_grads(br.grads);
  ASSERT_EQ(theta.size(), analytic.size());
  Mlp work = net;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    std::vector<double> t = theta;
    t[k] = theta[k] + h;
    work.assign(t);
    const double up = probe(work, x, g_out);
    t[k] = theta[k] - h;
    work.assign(t);
    const double down = probe(work, x, g_out);
    const double fd = (up - down) / (2.0 * h);
    EXPECT_TRUE(close(fd, analytic[k])) << "param " << k << " fd " << fd << " analytic " << analytic[k];
  }

  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double fd = (probe(net, xp, g_out) - probe(net, xm, g_out)) / (2.0 * h);
      EXPECT_TRUE(close(fd, br.grad_in(i, j))) << "input " << i << "," << j;
    }
}

}  // namespace

TEST(Mlp, IdentityLayerPassesThrough) {
  Mlp net({Layer{Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4), Activation::kIdentity}});
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  EXPECT_TRUE((net.forward(x).array() == x.array()).all());
}

TEST(Mlp, ZeroWeightsGiveTanhOfBias) {
  Eigen::VectorXd c(3);
  c << 0.3, -1.2, 2.0;
  Mlp net({Layer{Eigen::MatrixXd::Zero(3, 5), c, Activation::kTanh}});
  std::mt19937_64 rng(1);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd y = net.forward(random_matrix(5, 1, rng).col(0));
    for (int i = 0; i < 3; ++i) EXPECT_EQ(y[i], std::tanh(c[i]));
  }
}

TEST(Mlp, ForwardMatchesStraightLineCode) {
  std::mt19937_64 rng(3);
  const Mlp net(6, {{9, Activation::kTanh}, {4, Activation::kIdentity}}, 17);
  const auto& L = net.layers();
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd x = random_matrix(6, 1, rng).col(0);
    std::vector<double> h(9), y(4);
    for (int i = 0; i < 9; ++i) {
      double z = L[0].b[i];
      for (int j = 0; j < 6; ++j) z += L[0].w(i, j) * x[j];
      h[i] = std::tanh(z);
    }
    for (int i = 0; i < 4; ++i) {
      double z = L[1].b[i];
      for (int j = 0; j < 9; ++j) z += L[1].w(i, j) * h[j];
      y[i] = z;
    }
    const Eigen::VectorXd out = net.forward(x);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[i], y[i], 1e-12);
  }
}

TEST(Mlp, BatchForwardMatchesColumnwise) {
  std::mt19937_64 rng(4);
  const Mlp net(3, {{5, Activation::kTanh}, {2, Activation::kScaledTanh, 1.5}}, 2);
  const Eigen::MatrixXd x = random_matrix(3, 7, rng);
  const Eigen::MatrixXd y = net.forward_batch(x);
  for (int j = 0; j < 7; ++j) EXPECT_LT((y.col(j) - net.forward(x.col(j))).norm(), 1e-14);
  EXPECT_LE(y.cwiseAbs().maxCoeff(), 1.5);
}

TEST(Mlp, InitializationRange) {
  const Mlp net(16, {{8, Activation::kTanh}}, 9);
  EXPECT_LE(net.layers()[0].w.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_LE(net.layers()[0].b.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_EQ(net.parameter_count(), 16u * 8u + 8u);
}

TEST(Mlp, GradientCheckTanhNetOver20Seeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SCOPED_TRACE(seed);
    std::mt19937_64 rng(seed * 101);
    const Mlp net(5, {{8, Activation::kTanh}, {3, Activation::kTanh}}, seed);
    check_gradients(net, rng, 3);
  }
}

TEST(Mlp, GradientCheckMixedActivations) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Mlp net(4, {{6, Activation::kTanh}, {5, Activation::kIdentity}, {2, Activation::kScaledTanh, 2.0}}, seed);
    check_gradients(net, rng, 2);
  }
}

TEST(Mlp, ZeroGradOutGivesZeroGradients) {
  std::mt19937_64 rng(8);
  const Mlp net(5, {{8, Activation::kTanh}, {3, Activation::kIdentity}}, 8);
  const Eigen::MatrixXd x = random_matrix(5, 4, rng);
  const BackwardResult br = net.backward(net.forward_cached(x), Eigen::MatrixXd::Zero(3, 4));
  EXPECT_EQ(br.grads.norm(), 0.0);
  EXPECT_EQ(br.grad_in.norm(), 0.0);
}

TEST(Mlp, LinearLayerGradientIsOuterProduct) {
  std::mt19937_64 rng(2);
  Mlp net({Layer{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::kIdentity}});
  const Eigen::MatrixXd x = random_matrix(3, 1, rng);
  const Eigen::MatrixXd g = random_matrix(3, 1, rng);
  const BackwardResult br = net.backward(net.forward_cached(x), g);
  EXPECT_LT((br.grads.dw[0] - g * x.transpose()).norm(), 1e-15);
  EXPECT_LT((br.grads.db[0] - g.col(0)).norm(), 1e-15);
}

TEST(Mlp, StaleCacheRejected) {
  Mlp net(2, {{2, Activation::kTanh}}, 1);
  const ForwardCache cache = net.forward_cached(Eigen::MatrixXd::Ones(2, 1));
  net.sgd_step(net.zero_gradients(), 0.1);
  EXPECT_THROW(net.backward(cache, Eigen::MatrixXd::Ones(2, 1)), Error);
}

TEST(Sgd, ZeroLearningRateLeavesParameters) {
  Mlp net(3, {{4, Activation::kTanh}}, 5);
  const auto before = net.flatten();
  GradientSet g = net.zero_gradients();
  g.dw[0].setConstant(3.0);
  net.sgd_step(g, 0.0);
  EXPECT_EQ(net.flatten(), before);
}

TEST(Sgd, ScalarArithmetic) {
  Mlp net({Layer{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1), Activation::kIdentity}});
  GradientSet g = net.zero_gradients();
  g.dw[0](0, 0) = 2.0;
  net.sgd_step(g, 0.1);
  EXPECT_DOUBLE_EQ(net.layers()[0].w(0, 0), 0.8);
}

TEST(Sgd, StepReducesConvexLoss) {
  // L(theta) = (theta * x - 2)^2 with x = 1.5
  Mlp net({Layer{Eigen::MatrixXd::Constant(1, 1, 0.2), Eigen::VectorXd::Zero(1), Activation::kIdentity}});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 1.5);
  auto loss = [&] { return std::pow(net.forward_batch(x)(0, 0) - 2.0, 2); };
  const double before = loss();
  const ForwardCache c = net.forward_cached(x);
  const BackwardResult br = net.backward(c, 2.0 * (c.output.back().array() - 2.0).matrix());
  net.sgd_step(br.grads, 0.05);
  EXPECT_LT(loss(), before);
}

TEST(Sgd, NonFiniteGradientRejectedWithoutChange) {
  Mlp net(2, {{2, Activation::kTanh}}, 3);
  const auto before = net.flatten();
  GradientSet g = net.zero_gradients();
  g.db[0][1] = std::nan("");
  EXPECT_THROW(net.sgd_step(g, 0.1), Error);
  EXPECT_EQ(net.flatten(), before);
}

TEST(Optimizer, SgdKindEqualsSgdStep) {
  std::mt19937_64 rng(6);
  Mlp a(3, {{4, Activation::kTanh}, {2, Activation::kIdentity}}, 6);
  Mlp b = a;
  const Eigen::MatrixXd x = random_matrix(3, 5, rng);
  const GradientSet g = a.backward(a.forward_cached(x), random_matrix(2, 5, rng)).grads;
  Optimizer opt({OptimizerConfig::Kind::kSgd, 0.03});
  opt.step(a, g);
  b.sgd_step(g, 0.03);
  EXPECT_EQ(a.flatten(), b.flatten());
}

TEST(Optimizer, SetLearningRate) {
  Optimizer opt({OptimizerConfig::Kind::kSgd, 0.1});
  opt.set_lr(0.05);
  EXPECT_EQ(opt.config().lr, 0.05);
  EXPECT_THROW(opt.set_lr(-1.0), Error);
}

TEST(Optimizer, AdaptiveModesDescend) {
  for (auto kind : {OptimizerConfig::Kind::kMomentum, OptimizerConfig::Kind::kAdam}) {
    Mlp net({Layer{Eigen::MatrixXd::Constant(1, 1, 0.2), Eigen::VectorXd::Zero(1), Activation::kIdentity}});
    const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 1.0);
    Optimizer opt({kind, 0.01});
    for (int k = 0; k < 2000; ++k) {
      const ForwardCache c = net.forward_cached(x);
      opt.step(net, net.backward(c, 2.0 * (c.output.back().array() - 2.0).matrix()).grads);
    }
    EXPECT_NEAR(net.forward(x.col(0))[0], 2.0, 1e-2) << optimizer_kind_name(kind);
  }
}

TEST(SoftUpdate, TauOneCopies) {
  Mlp target(3, {{4, Activation::kTanh}}, 1);
  const Mlp online(3, {{4, Activation::kTanh}}, 2);
  soft_update(target, online, 1.0);
  EXPECT_EQ(target.flatten(), online.flatten());
}

TEST(SoftUpdate, HalfwayAverage) {
  Mlp target({Layer{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), Activation::kIdentity}});
  const Mlp online({Layer{Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Constant(1, 2.0),
                          Activation::kIdentity}});
  soft_update(target, online, 0.5);
  EXPECT_EQ(target.layers()[0].w(0, 0), 1.0);
  EXPECT_EQ(target.layers()[0].b[0], 1.0);
}

TEST(SoftUpdate, GeometricContraction) {
  Mlp target(4, {{6, Activation::kTanh}, {2, Activation::kIdentity}}, 1);
  const Mlp online(4, {{6, Activation::kTanh}, {2, Activation::kIdentity}}, 2);
  const double tau = 0.01;
  const double d0 = parameter_distance(target, online);
  double prev = d0;
  for (int k = 1; k <= 300; ++k) {
    soft_update(target, online, tau);
    const double d = parameter_distance(target, online);
    EXPECT_NEAR(d / prev, 1.0 - tau, 1e-9);
    prev = d;
  }
  EXPECT_NEAR(prev, d0 * std::pow(1.0 - tau, 300), 1e-9 * d0);
}

TEST(SoftUpdate, RejectsBadTau) {
  Mlp target(2, {{2, Activation::kTanh}}, 1);
  const Mlp online = target;
  EXPECT_THROW(soft_update(target, online, 0.0), Error);
  EXPECT_THROW(soft_update(target, online, 1.5), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = voltreg::testing::scratch_dir("mlp_ckpt");
  const Mlp net(5, {{7, Activation::kTanh}, {3, Activation::kScaledTanh, 1.0}}, 42);
  save_mlp(net, dir / "net.json");
  const Mlp back = load_mlp(dir / "net.json");
  EXPECT_EQ(back.flatten(), net.flatten());
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = random_matrix(5, 1, rng).col(0);
    EXPECT_TRUE((back.forward(x).array() == net.forward(x).array()).all());
  }
}

TEST(Checkpoint, TruncatedFileFails) {
  const auto dir = voltreg::testing::scratch_dir("mlp_trunc");
  const Mlp net(5, {{7, Activation::kTanh}}, 42);
  save_mlp(net, dir / "net.json");
  std::ifstream in(dir / "net.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir / "cut.json") << text.substr(0, text.size() / 2);
  EXPECT_THROW(load_mlp(dir / "cut.json"), Error);
  EXPECT_THROW(load_mlp(dir / "missing.json"), Error);
}
