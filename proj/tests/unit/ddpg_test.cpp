#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "voltreg/ddpg.hpp"
#include "voltreg/error.hpp"

using namespace voltreg;
using voltreg::testing::bundled_feeder;
using voltreg::testing::scratch_dir;

namespace {

Mlp linear(std::initializer_list<double> w, double b) {
  Eigen::MatrixXd W(1, static_cast<Eigen::Index>(w.size()));
  Eigen::Index k = 0;
  for (double x : w) W(0, k++) = x;
  return Mlp({Layer{W, Eigen::VectorXd::Constant(1, b), Activation::kIdentity}});
}

Batch random_batch(int n, int sdim, int adim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Batch b;
  b.s = Eigen::MatrixXd::NullaryExpr(sdim, n, [&] { return u(rng); });
  b.a = Eigen::MatrixXd::NullaryExpr(adim, n, [&] { return u(rng); });
  b.r = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
  b.s_next = Eigen::MatrixXd::NullaryExpr(sdim, n, [&] { return u(rng); });
  b.terminal = Eigen::VectorXd::Zero(n);
  return b;
}

double critic_loss(const Mlp& critic, const Batch& b, const Eigen::VectorXd& y) {
  const Eigen::RowVectorXd q = critic.forward_batch(critic_input(b.s, b.a)).row(0);
  return (q - y.transpose()).squaredNorm() / static_cast<double>(b.size());
}

double mean_q(const Mlp& actor, const Mlp& critic, const Eigen::MatrixXd& s) {
  return critic.forward_batch(critic_input(s, actor.forward_batch(s))).mean();
}

AgentConfig small_agent() {
  AgentConfig c;
  c.actor_hidden = {16, 16};
  c.critic_hidden = {16, 16};
  c.batch = 16;
  c.buffer_capacity = 400;
  c.lr_actor = 1e-2;
  c.lr_critic = 1e-2;
  c.episodes = 6;
  return c;
}

}  // namespace

TEST(SelectAction, ZeroSigmaIsTheNetworkOutput) {
  const Mlp actor(3, {{8, Activation::kTanh}, {2, Activation::kScaledTanh, 1.0}}, 4);
  std::mt19937_64 rng(1), untouched(1);
  const Eigen::Vector3d s(0.2, -0.7, 1.1);
  const Eigen::VectorXd a = select_action(actor, s, 0.0, rng);
  EXPECT_TRUE((a.array() == actor.forward(s).array()).all());
  EXPECT_EQ(rng(), untouched());  // no random numbers were consumed
}

TEST(SelectAction, LargeSigmaSaturatesWithinBounds) {
  const Mlp actor(3, {{8, Activation::kTanh}, {2, Activation::kScaledTanh, 1.0}}, 4);
  std::mt19937_64 rng(2);
  int saturated = 0;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::VectorXd a = select_action(actor, Eigen::Vector3d(0.1, 0.2, 0.3), 10.0, rng);
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
    for (Eigen::Index i = 0; i < a.size(); ++i) saturated += std::abs(a[i]) == 1.0;
  }
  EXPECT_GT(saturated, 1700);
}

TEST(SelectAction, NoiseStandardDeviation) {
  // Zero weights put the mean action at 0, so clipping at +-1 is a 5 sigma event.
  Mlp actor({Layer{Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1), Activation::kScaledTanh, 1.0}});
  std::mt19937_64 rng(3);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double d = select_action(actor, Eigen::Vector2d(0.4, -0.1), 0.2, rng)[0];
    sum += d;
    sq += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 0.2, 0.01);
}

TEST(CriticTarget, GammaZeroIsReward) {
  std::mt19937_64 rng(4);
  const Batch b = random_batch(7, 3, 2, rng);
  const Mlp ta(3, {{2, Activation::kTanh}}, 1), tc(5, {{1, Activation::kIdentity}}, 2);
  const Eigen::VectorXd y = critic_target(b, ta, tc, 0.0);
  EXPECT_TRUE((y.array() == b.r.array()).all());
}

TEST(CriticTarget, HandEvaluatedDiscountedTarget) {
  // mu'(s') = 2 s' + 0.1, Q'(s', a') = 0.5 s' - a' + 0.2
  const Mlp ta = linear({2.0}, 0.1);
  const Mlp tc = linear({0.5, -1.0}, 0.2);
  Batch b;
  b.s = Eigen::MatrixXd::Zero(1, 2);
  b.a = Eigen::MatrixXd::Zero(1, 2);
  b.s_next.resize(1, 2);
  b.s_next << 0.3, -0.4;
  b.r = Eigen::Vector2d(1.0, -0.5);
  b.terminal = Eigen::Vector2d(0.0, 1.0);
  const Eigen::VectorXd y = critic_target(b, ta, tc, 0.9);
  // 1 + 0.9 (0.15 - 0.7 + 0.2) = 0.685; the terminal row keeps r
  EXPECT_NEAR(y[0], 0.685, 1e-15);
  EXPECT_EQ(y[1], -0.5);
}

TEST(UpdateCritic, FixedPointLeavesParameters) {
  std::mt19937_64 rng(5);
  const Batch b = random_batch(6, 3, 2, rng);
  Mlp critic(5, {{4, Activation::kTanh}, {1, Activation::kIdentity}}, 3);
  const Eigen::VectorXd y = critic.forward_batch(critic_input(b.s, b.a)).row(0).transpose();
  const auto before = critic.flatten();
  Optimizer opt({OptimizerConfig::Kind::kSgd, 0.1});
  EXPECT_EQ(update_critic(critic, opt, b, y), 0.0);
  EXPECT_EQ(critic.flatten(), before);
}

TEST(UpdateCritic, MonotoneDescentOnFrozenBatch) {
  std::mt19937_64 rng(6);
  const Batch b = random_batch(32, 3, 2, rng);
  Mlp critic(5, {{16, Activation::kTanh}, {1, Activation::kIdentity}}, 3);
  Optimizer opt({OptimizerConfig::Kind::kSgd, 1e-2});
  double prev = update_critic(critic, opt, b, b.r);
  for (int k = 0; k < 200; ++k) {
    const double loss = update_critic(critic, opt, b, b.r);
    EXPECT_LT(loss, prev) << k;
    prev = loss;
  }
}

TEST(UpdateCritic, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const Batch b = random_batch(5, 3, 2, rng);
  const Eigen::VectorXd y = b.r;
  const Mlp start(5, {{6, Activation::kTanh}, {1, Activation::kIdentity}}, 9);
  Mlp stepped = start;
  Optimizer opt({OptimizerConfig::Kind::kSgd, 1.0});
  update_critic(stepped, opt, b, y);
  const auto t0 = start.flatten();
  const auto t1 = stepped.flatten();
  Mlp work = start;
  const double h = 1e-5;
  for (std::size_t k = 0; k < t0.size(); ++k) {
    auto t = t0;
    t[k] += h;
    work.assign(t);
    const double up = critic_loss(work, b, y);
    t[k] -= 2 * h;
    work.assign(t);
    const double fd = (up - critic_loss(work, b, y)) / (2 * h);
    const double g = t0[k] - t1[k];  // lr = 1
    EXPECT_LE(std::abs(fd - g), std::max(1e-7, 1e-4 * std::max(std::abs(fd), std::abs(g)))) << k;
  }
}

TEST(UpdateActor, ActionBlindCriticLeavesActor) {
  Mlp critic(3, {{6, Activation::kTanh}, {1, Activation::kIdentity}}, 2);
  std::vector<Layer> layers = critic.layers();
  layers[0].w.col(2).setZero();  // no dependence on the action input
  critic = Mlp(layers);
  Mlp actor(2, {{5, Activation::kTanh}, {1, Activation::kScaledTanh, 1.0}}, 3);
  const auto before = actor.flatten();
  Optimizer opt({OptimizerConfig::Kind::kSgd, 0.5});
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd s = random_batch(10, 2, 1, rng).s;
  EXPECT_EQ(update_actor(actor, critic, opt, s), 0.0);
  EXPECT_EQ(actor.flatten(), before);
}

TEST(UpdateActor, OneDimensionalToyReachesOptimum) {
  // Q(s, a) = -(a - 0.3)^2, so dQ/da = -2 (a - 0.3) for every state.
  Mlp actor(1, {{8, Activation::kTanh}, {1, Activation::kScaledTanh, 1.0}}, 5);
  Optimizer opt({OptimizerConfig::Kind::kSgd, 0.05});
  const ActionGradient dq = [](const Eigen::MatrixXd&, const Eigen::MatrixXd& a) {
    return Eigen::MatrixXd(-2.0 * (a.array() - 0.3));
  };
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 20000; ++k) {
    const Eigen::MatrixXd s = Eigen::MatrixXd::NullaryExpr(1, 32, [&] { return u(rng); });
    update_actor(actor, opt, s, dq);
  }
  for (double s : {-1.0, -0.5, 0.0, 0.5, 1.0}) EXPECT_NEAR(actor.forward(Eigen::VectorXd::Constant(1, s))[0], 0.3, 0.01);
}

TEST(UpdateActor, SmallStepDoesNotDecreaseMeanQ) {
  std::mt19937_64 rng(10);
  const Mlp critic(5, {{16, Activation::kTanh}, {1, Activation::kIdentity}}, 11);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Mlp actor(3, {{8, Activation::kTanh}, {2, Activation::kScaledTanh, 1.0}}, seed);
    const Eigen::MatrixXd s = random_batch(64, 3, 2, rng).s;
    const double before = mean_q(actor, critic, s);
    Optimizer opt({OptimizerConfig::Kind::kSgd, 1e-4});
    update_actor(actor, critic, opt, s);
    EXPECT_GE(mean_q(actor, critic, s), before) << seed;
  }
}

TEST(GammaZeroCritic, MatchesDirectRegression) {
  // r = -(a - 0.5 s0)^2 + 0.3 s1 + noise; the noise variance 0.0025 is the floor.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const int n = 2000;
  ReplayBuffer buf(n, 2, 1);
  Eigen::MatrixXd x(3, n);
  Eigen::VectorXd r(n);
  for (int k = 0; k < n; ++k) {
    Transition t;
    t.s = Eigen::Vector2d(u(rng), u(rng));
    t.a = Eigen::VectorXd::Constant(1, u(rng));
    t.r = -std::pow(t.a[0] - 0.5 * t.s[0], 2) + 0.3 * t.s[1] + noise(rng);
    t.s_next = t.s;
    buf.push(t);
    x.col(k) << t.s, t.a;
    r[k] = t.r;
  }
  const int steps = 6000;
  const std::size_t batch = 64;
  const Mlp init(3, {{16, Activation::kTanh}, {1, Activation::kIdentity}}, 21);

  Mlp critic = init;
  Optimizer opt({OptimizerConfig::Kind::kSgd, 0.05});
  std::mt19937_64 srng(1);
  for (int k = 0; k < steps; ++k) {
    const Batch b = buf.sample(batch, srng);
    update_critic(critic, opt, b, critic_target(b, critic, critic, 0.0));
  }

  // Oracle: shuffled epochs over the raw arrays with a hand-written MSE gradient.
  Mlp reg = init;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 orng(2);
  int done = 0;
  while (done < steps) {
    std::shuffle(order.begin(), order.end(), orng);
    for (int start = 0; start + static_cast<int>(batch) <= n && done < steps; start += static_cast<int>(batch), ++done) {
      Eigen::MatrixXd xb(3, batch);
      Eigen::RowVectorXd yb(batch);
      for (std::size_t j = 0; j < batch; ++j) {
        xb.col(static_cast<Eigen::Index>(j)) = x.col(order[static_cast<std::size_t>(start) + j]);
        yb[static_cast<Eigen::Index>(j)] = r[order[static_cast<std::size_t>(start) + j]];
      }
      const ForwardCache c = reg.forward_cached(xb);
      const Eigen::MatrixXd g = (2.0 / batch) * (c.output.back() - yb);
      reg.sgd_step(reg.backward(c, g).grads, 0.05);
    }
  }
  auto mse = [&](const Mlp& net) { return (net.forward_batch(x).row(0) - r.transpose()).squaredNorm() / n; };
  const double mc = mse(critic), mr = mse(reg);
  EXPECT_LE(std::abs(mc - mr), 0.1 * mr) << "critic " << mc << " regression " << mr;
  EXPECT_LT(mr, 0.01);
}

TEST(MovingAverage, Trailing) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  const auto m = moving_average(v, 2);
  EXPECT_EQ(m, (std::vector<double>{1.0, 1.5, 2.5, 3.5, 4.5}));
  EXPECT_THROW(moving_average(v, 0), Error);
}

TEST(AgentConfig, Validation) {
  AgentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch = c.buffer_capacity + 1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

class AgentTraining : public ::testing::Test {
 protected:
  Feeder f = bundled_feeder();
  ProfileSet p = synthesize_profiles(f, SyntheticProfileConfig{.days = 10}, 2);
  std::vector<std::size_t> days{0, 1, 2, 3, 4, 5, 6};
  PowerFlowBackend backend{f};
  VoltageEnv env{f, backend};
};

TEST_F(AgentTraining, SameSeedIsBitIdentical) {
  const TrainingResult a = train_agent(env, p, days, small_agent(), 42);
  const TrainingResult b = train_agent(env, p, days, small_agent(), 42);
  EXPECT_EQ(a.episode_returns, b.episode_returns);
  EXPECT_EQ(a.episode_days, b.episode_days);
  EXPECT_EQ(a.actor.net.flatten(), b.actor.net.flatten());
  EXPECT_EQ(a.critic.flatten(), b.critic.flatten());
  EXPECT_GT(a.updates, 0u);
  const TrainingResult c = train_agent(env, p, days, small_agent(), 43);
  EXPECT_NE(a.episode_returns, c.episode_returns);
}

TEST_F(AgentTraining, ZeroLearningRatesKeepInitialActor) {
  AgentConfig cfg = small_agent();
  cfg.lr_actor = 0.0;
  cfg.lr_critic = 0.0;
  cfg.episodes = 2;
  const TrainingResult a = train_agent(env, p, days, cfg, 5);
  cfg.episodes = 8;
  const TrainingResult b = train_agent(env, p, days, cfg, 5);
  EXPECT_GT(b.updates, 0u);
  EXPECT_EQ(a.actor.net.flatten(), b.actor.net.flatten());
  const auto ea = run_episode(env, p, 8, a.actor.policy(f));
  const auto eb = run_episode(env, p, 8, b.actor.policy(f));
  EXPECT_EQ(ea.total_reward, eb.total_reward);
}

TEST_F(AgentTraining, RewardCurveImproves) {
  AgentConfig cfg = small_agent();
  cfg.actor_hidden = {32, 32};
  cfg.critic_hidden = {32, 32};
  cfg.batch = 32;
  cfg.buffer_capacity = 2000;
  cfg.episodes = 300;
  const TrainingResult res = train_agent(env, p, days, cfg, 7);
  ASSERT_EQ(res.episode_returns.size(), 300u);
  const auto ma = moving_average(res.episode_returns, 100);
  EXPECT_GT(ma.back(), ma[99]);
  EXPECT_LT(res.final_sigma, cfg.sigma0);
}

TEST_F(AgentTraining, CheckpointRoundTrip) {
  const TrainingResult res = train_agent(env, p, days, small_agent(), 1);
  EXPECT_EQ(res.actor.backend, "truemodel");
  const auto dir = scratch_dir("actor_ckpt");
  res.actor.save(dir / "actor.json");
  const ActorModel back = ActorModel::load(dir / "actor.json");
  EXPECT_EQ(back.backend, "truemodel");
  const Eigen::VectorXd s = make_state(f, p.at(3, 12), 12).flatten(f);
  EXPECT_TRUE((back.act(s).array() == res.actor.act(s).array()).all());
  EXPECT_THROW(ActorModel::load(dir / "nope.json"), Error);
}

TEST_F(AgentTraining, StateScalerCentersTrainingStates) {
  const Standardizer sc = fit_state_scaler(f, p, days);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(sc.mean.size());
  for (std::size_t d : days)
    for (std::size_t t = 0; t < 24; ++t) acc += sc.normalize(make_state(f, p.at(d, t), static_cast<int>(t)).flatten(f));
  EXPECT_LT(acc.cwiseAbs().maxCoeff() / (days.size() * 24.0), 1e-10);
}
