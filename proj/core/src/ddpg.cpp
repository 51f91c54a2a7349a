#include "voltreg/ddpg.hpp"

#include <cmath>

#include "mlp_json.hpp"
#include "voltreg/error.hpp"

namespace voltreg {

void AgentConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCategory::kConfig, std::string("agent config: ") + what);
  };
  need(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0, 1]");
  need(lr_actor >= 0.0 && lr_critic >= 0.0, "learning rates must be >= 0");
  need(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
  need(batch > 0, "batch must be positive");
  need(batch <= buffer_capacity, "batch must not exceed buffer_capacity");
  need(sigma0 >= 0.0, "sigma0 must be >= 0");
  need(xi > 0.0 && xi <= 1.0, "xi must be in (0, 1]");
  need(episodes >= 0, "episodes must be >= 0");
  for (int h : actor_hidden) need(h > 0, "actor hidden widths must be positive");
  for (int h : critic_hidden) need(h > 0, "critic hidden widths must be positive");
}

Eigen::VectorXd select_action(const Mlp& actor, const Eigen::VectorXd& s, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) fail(ErrorCategory::kConfig, "exploration sigma must be >= 0");
  Eigen::VectorXd a = actor.forward(s);
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(rng);
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::MatrixXd critic_input(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
  if (s.cols() != a.cols()) fail(ErrorCategory::kValidation, "state and action batches differ in size");
  Eigen::MatrixXd x(s.rows() + a.rows(), s.cols());
  x.topRows(s.rows()) = s;
  x.bottomRows(a.rows()) = a;
  return x;
}

Eigen::VectorXd critic_target(const Batch& batch, const Mlp& target_actor, const Mlp& target_critic, double gamma) {
  if (batch.size() == 0) fail(ErrorCategory::kState, "critic_target on an empty batch");
  if (gamma == 0.0) return batch.r;
  const Eigen::MatrixXd a_next = target_actor.forward_batch(batch.s_next);
  const Eigen::VectorXd q_next = target_critic.forward_batch(critic_input(batch.s_next, a_next)).row(0).transpose();
  return batch.r.array() + gamma * (1.0 - batch.terminal.array()) * q_next.array();
}

double update_critic(Mlp& critic, Optimizer& opt, const Batch& batch, const Eigen::VectorXd& y) {
  const Eigen::Index n = batch.size();
  if (n == 0 || y.size() != n) fail(ErrorCategory::kValidation, "critic update: batch and targets misaligned");
  const ForwardCache cache = critic.forward_cached(critic_input(batch.s, batch.a));
  const Eigen::RowVectorXd err = cache.output.back().row(0) - y.transpose();
  const double loss = err.squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(loss)) fail(ErrorCategory::kNumerical, "critic loss is not finite");
  const BackwardResult g = critic.backward(cache, (2.0 / static_cast<double>(n)) * err);
  opt.step(critic, g.grads);
  return loss;
}

double update_actor(Mlp& actor, Optimizer& opt, const Eigen::MatrixXd& states, const ActionGradient& dq_da) {
  const Eigen::Index n = states.cols();
  if (n == 0) fail(ErrorCategory::kState, "actor update on an empty batch");
  const ForwardCache cache = actor.forward_cached(states);
  const Eigen::MatrixXd grad_a = dq_da(states, cache.output.back());
  if (grad_a.rows() != cache.output.back().rows() || grad_a.cols() != n)
    fail(ErrorCategory::kValidation, "action gradient has the wrong shape");
  // Descend on -mean Q.
  BackwardResult g = actor.backward(cache, (-1.0 / static_cast<double>(n)) * grad_a);
  const double norm = g.grads.norm();
  if (!std::isfinite(norm)) fail(ErrorCategory::kNumerical, "actor policy gradient is not finite");
  opt.step(actor, g.grads);
  return norm;
}

double update_actor(Mlp& actor, const Mlp& critic, Optimizer& opt, const Eigen::MatrixXd& states) {
  const auto sdim = states.rows();
  return update_actor(actor, opt, states, [&critic, sdim](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    const ForwardCache c = critic.forward_cached(critic_input(s, a));
    const BackwardResult g = critic.backward(c, Eigen::MatrixXd::Ones(1, s.cols()), false);
    return Eigen::MatrixXd(g.grad_in.bottomRows(g.grad_in.rows() - sdim));
  });
}

// ---------------------------------------------------------------------------

Eigen::VectorXd ActorModel::act(const Eigen::VectorXd& flat_state) const {
  return net.forward(state_scaler.normalize(flat_state)).cwiseMax(-1.0).cwiseMin(1.0);
}

Policy ActorModel::policy(const Feeder& feeder) const {
  if (static_cast<std::size_t>(net.in_dim()) != state_dim(feeder) || static_cast<std::size_t>(net.out_dim()) != action_dim(feeder))
    fail(ErrorCategory::kValidation, "actor shape does not match the feeder");
  return [model = *this, &feeder](const State& s) { return model.act(s.flatten(feeder)); };
}

void ActorModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "voltreg.actor";
  j["version"] = 1;
  j["backend"] = backend;
  j["state_mean"] = detail::vector_to_json(state_scaler.mean);
  j["state_scale"] = detail::vector_to_json(state_scaler.scale);
  j["net"] = detail::mlp_to_json(net);
  detail::write_json_file(path, j);
}

ActorModel ActorModel::load(const std::filesystem::path& path) {
  const nlohmann::json j = detail::read_json_file(path);
  ActorModel m;
  try {
    if (j.at("format").get<std::string>() != "voltreg.actor") fail(ErrorCategory::kParse, path.string() + ": not an actor checkpoint");
    if (j.at("version").get<int>() != 1) fail(ErrorCategory::kParse, path.string() + ": unsupported actor version");
    m.backend = j.at("backend").get<std::string>();
    m.state_scaler = {detail::vector_from_json(j.at("state_mean")), detail::vector_from_json(j.at("state_scale"))};
    m.net = detail::mlp_from_json(j.at("net"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, path.string() + ": " + e.what());
  }
  if (m.state_scaler.mean.size() != m.net.in_dim() || m.state_scaler.scale.size() != m.net.in_dim())
    fail(ErrorCategory::kParse, path.string() + ": state scaler does not match the actor input");
  return m;
}

Standardizer fit_state_scaler(const Feeder& feeder, const ProfileSet& profiles, std::span<const std::size_t> days) {
  if (days.empty()) fail(ErrorCategory::kConfig, "no training days");
  const std::size_t steps = profiles.steps_per_day();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(state_dim(feeder)), static_cast<Eigen::Index>(days.size() * steps));
  Eigen::Index c = 0;
  for (std::size_t d : days)
    for (std::size_t t = 0; t < steps; ++t) x.col(c++) = make_state(feeder, profiles.at(d, t), static_cast<int>(t)).flatten(feeder);
  return Standardizer::fit(x);
}

// ---------------------------------------------------------------------------

namespace {

Mlp make_net(int in, const std::vector<int>& hidden, int out, Activation out_act, std::uint64_t seed) {
  std::vector<LayerSpec> specs;
  for (int h : hidden) specs.push_back({h, Activation::kTanh});
  specs.push_back({out, out_act});
  return Mlp(in, specs, seed);
}

void check_finite(const Mlp& net, const char* role, int episode, std::size_t step) {
  if (!net.all_finite())
    fail(ErrorCategory::kNumerical, std::string(role) + " parameters became non-finite at episode " + std::to_string(episode) +
                                        ", step " + std::to_string(step));
}

}  // namespace

TrainingResult train_agent(const VoltageEnv& env, const ProfileSet& profiles, std::span<const std::size_t> train_days,
                           const AgentConfig& cfg, std::uint64_t seed, const EpisodeCallback& on_episode) {
  cfg.validate();
  const Feeder& f = env.feeder();
  for (std::size_t d : train_days)
    if (d >= profiles.day_count()) fail(ErrorCategory::kConfig, "training day " + std::to_string(d) + " out of range");
  const auto sdim = static_cast<int>(state_dim(f));
  const auto adim = static_cast<int>(action_dim(f));

  TrainingResult res;
  res.actor.backend = env.backend().name();
  res.actor.state_scaler = fit_state_scaler(f, profiles, train_days);
  const Standardizer& scaler = res.actor.state_scaler;

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xdd9cU};
  std::mt19937_64 rng(seq);
  Mlp actor = make_net(sdim, cfg.actor_hidden, adim, Activation::kScaledTanh, rng());
  Mlp critic = make_net(sdim + adim, cfg.critic_hidden, 1, Activation::kIdentity, rng());
  Mlp target_actor = actor;
  Mlp target_critic = critic;
  Optimizer opt_actor({cfg.optimizer, cfg.lr_actor});
  Optimizer opt_critic({cfg.optimizer, cfg.lr_critic});
  ReplayBuffer buffer(cfg.buffer_capacity, static_cast<std::size_t>(sdim), static_cast<std::size_t>(adim));
  double sigma = cfg.sigma0;

  std::uniform_int_distribution<std::size_t> pick_day(0, train_days.size() - 1);
  const std::size_t steps = profiles.steps_per_day();
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const std::size_t day = train_days[pick_day(rng)];
    double ret = 0.0;
    State s = make_state(f, profiles.at(day, 0), 0);
    Eigen::VectorXd sn = scaler.normalize(s.flatten(f));
    const Eigen::VectorXd first = sn;
    for (std::size_t t = 0; t < steps; ++t) {
      const Eigen::VectorXd a = select_action(actor, sn, sigma, rng);
      const StepResult r = env.step(s, a);
      if (!r.converged) ++res.nonconverged_steps;
      ret += r.reward;
      const bool last = t + 1 == steps;
      State next = last ? s : make_state(f, profiles.at(day, t + 1), static_cast<int>(t + 1));
      Eigen::VectorXd next_n = last ? first : Eigen::VectorXd(scaler.normalize(next.flatten(f)));
      buffer.push({sn, a, r.reward, next_n, last});

      if (buffer.size() >= cfg.batch) {
        const Batch b = buffer.sample(cfg.batch, rng);
        const Eigen::VectorXd y = critic_target(b, target_actor, target_critic, cfg.gamma);
        update_critic(critic, opt_critic, b, y);
        update_actor(actor, critic, opt_actor, b.s);
        check_finite(critic, "critic", ep, t);
        check_finite(actor, "actor", ep, t);
        soft_update(target_critic, critic, cfg.tau);
        soft_update(target_actor, actor, cfg.tau);
        ++res.updates;
        if (buffer.full()) sigma *= cfg.xi;
      }
      s = std::move(next);
      sn = std::move(next_n);
    }
    res.episode_returns.push_back(ret);
    res.episode_days.push_back(day);
    if (on_episode) on_episode(ep + 1, ret);
  }
  res.actor.net = std::move(actor);
  res.critic = std::move(critic);
  res.final_sigma = sigma;
  return res;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) fail(ErrorCategory::kConfig, "moving average window must be positive");
  std::vector<double> out;
  out.reserve(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

}  // namespace voltreg
