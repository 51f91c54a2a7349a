#include <benchmark/benchmark.h>

#include <random>

#include "voltreg/ddpg.hpp"
#include "voltreg/operating_point.hpp"
#include "voltreg/power_flow.hpp"
#include "voltreg/profiles.hpp"

namespace {

using namespace voltreg;

const Feeder& feeder() {
  static const Feeder f = load_feeder(VOLTREG_BENCH_DATA "/feeder10.json");
  return f;
}

Injection noon_injection() {
  const Feeder& f = feeder();
  const ProfileSet p = synthesize_profiles(f, {.days = 1}, 3);
  const State s = make_state(f, p.at(0, 12), 12);
  return net_injection(f, s, denormalize_action(f, s, zero_reactive_action(f)));
}

void BM_PowerFlowSolve(benchmark::State& st) {
  const PowerFlow pf(feeder());
  const Injection inj = noon_injection();
  for (auto _ : st) benchmark::DoNotOptimize(pf.solve(inj));
}
BENCHMARK(BM_PowerFlowSolve);

void BM_PowerFlowSetup(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(PowerFlow(feeder()));
}
BENCHMARK(BM_PowerFlowSetup);

Mlp tanh_net(int in, std::vector<int> hidden, int out, Activation last) {
  std::vector<LayerSpec> specs;
  for (int h : hidden) specs.push_back({h, Activation::kTanh});
  specs.push_back({out, last});
  return Mlp(in, specs, 5);
}

void BM_SurrogateForward(benchmark::State& st) {
  const int n = static_cast<int>(feeder().non_slack_nodes().size());
  const Mlp net = tanh_net(2 * n, {400, 400}, n, Activation::kIdentity);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(2 * n);
  for (auto _ : st) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_SurrogateForward);

void BM_SurrogateTrainBatch(benchmark::State& st) {
  const int n = static_cast<int>(feeder().non_slack_nodes().size());
  Mlp net = tanh_net(2 * n, {400, 400}, n, Activation::kIdentity);
  const auto b = st.range(0);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2 * n, b);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(n, b);
  for (auto _ : st) {
    const ForwardCache c = net.forward_cached(x);
    const BackwardResult g = net.backward(c, (2.0 / static_cast<double>(b)) * (c.output.back() - y));
    net.sgd_step(g.grads, 1e-6);
  }
  st.SetItemsProcessed(st.iterations() * b);
}
BENCHMARK(BM_SurrogateTrainBatch)->Arg(32)->Arg(64);

// Greedy decision: state assembly plus actor forward pass.
void BM_DecisionLatency(benchmark::State& st) {
  const Feeder& f = feeder();
  const ProfileSet p = synthesize_profiles(f, {.days = 1}, 3);
  const State s = make_state(f, p.at(0, 12), 12);
  ActorModel actor;
  actor.net = tanh_net(static_cast<int>(state_dim(f)), {400, 200}, static_cast<int>(action_dim(f)), Activation::kTanh);
  actor.state_scaler = fit_state_scaler(f, p, std::vector<std::size_t>{0});
  for (auto _ : st) benchmark::DoNotOptimize(actor.act(s.flatten(f)));
}
BENCHMARK(BM_DecisionLatency);

void BM_DdpgUpdate(benchmark::State& st) {
  const Feeder& f = feeder();
  const auto sd = static_cast<int>(state_dim(f));
  const auto ad = static_cast<int>(action_dim(f));
  Mlp actor = tanh_net(sd, {400, 200}, ad, Activation::kTanh);
  Mlp critic = tanh_net(sd + ad, {400, 200}, 1, Activation::kIdentity);
  Optimizer oa({OptimizerConfig::Kind::kAdam, 1e-4});
  Optimizer oc({OptimizerConfig::Kind::kAdam, 1e-4});
  const auto b = st.range(0);
  Batch batch{Eigen::MatrixXd::Random(sd, b), Eigen::MatrixXd::Random(ad, b), Eigen::VectorXd::Random(b),
              Eigen::MatrixXd::Random(sd, b), Eigen::VectorXd::Zero(b), {}};
  for (auto _ : st) {
    update_critic(critic, oc, batch, batch.r);
    update_actor(actor, critic, oa, batch.s);
  }
}
BENCHMARK(BM_DdpgUpdate)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
