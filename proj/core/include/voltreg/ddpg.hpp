#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "voltreg/mlp.hpp"
#include "voltreg/replay_buffer.hpp"
#include "voltreg/surrogate.hpp"
#include "voltreg/vr_env.hpp"

namespace voltreg {

struct AgentConfig {
  double gamma = 0.0;
  double lr_actor = 1e-3;
  double lr_critic = 2e-3;
  double tau = 0.005;
  std::size_t batch = 256;
  std::size_t buffer_capacity = 100000;
  double sigma0 = 0.2;
  double xi = 0.9995;  // sigma <- sigma * xi per update once the buffer is full
  int episodes = 5000;
  std::vector<int> actor_hidden{400, 200};
  std::vector<int> critic_hidden{400, 200};
  OptimizerConfig::Kind optimizer = OptimizerConfig::Kind::kSgd;

  void validate() const;
};

/// a = clip(actor(s) + N(0, sigma^2), -1, 1). With sigma = 0 no random
/// numbers are drawn and the result is the network output.
Eigen::VectorXd select_action(const Mlp& actor, const Eigen::VectorXd& s, double sigma, std::mt19937_64& rng);

/// y = r + gamma * (1 - terminal) * Q'(s', mu'(s')). gamma = 0 returns r as is.
Eigen::VectorXd critic_target(const Batch& batch, const Mlp& target_actor, const Mlp& target_critic, double gamma);

/// Critic input rows: state first, then action.
Eigen::MatrixXd critic_input(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a);

/// One optimizer step on (1/N) sum (Q(s, a) - y)^2. Returns the loss before the step.
double update_critic(Mlp& critic, Optimizer& opt, const Batch& batch, const Eigen::VectorXd& y);

/// dQ/da for each column of (s, a); returns action_dim x N.
using ActionGradient = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a)>;

/// Deterministic policy gradient ascent on (1/N) sum Q(s_i, mu(s_i)). Returns
/// the norm of the actor parameter gradient.
double update_actor(Mlp& actor, Optimizer& opt, const Eigen::MatrixXd& states, const ActionGradient& dq_da);
double update_actor(Mlp& actor, const Mlp& critic, Optimizer& opt, const Eigen::MatrixXd& states);

/// Deployable policy: actor network plus the fixed state scaling it was
/// trained with.
struct ActorModel {
  Mlp net;
  Standardizer state_scaler;
  std::string backend;  // training backend, recorded in checkpoints

  Eigen::VectorXd act(const Eigen::VectorXd& flat_state) const;
  Policy policy(const Feeder& feeder) const;

  void save(const std::filesystem::path& path) const;
  static ActorModel load(const std::filesystem::path& path);
};

/// Mean and spread of the flattened states over the given profile days.
Standardizer fit_state_scaler(const Feeder& feeder, const ProfileSet& profiles, std::span<const std::size_t> days);

struct TrainingResult {
  ActorModel actor;
  Mlp critic;
  std::vector<double> episode_returns;
  std::vector<std::size_t> episode_days;
  std::size_t nonconverged_steps = 0;
  std::size_t updates = 0;
  double final_sigma = 0.0;
};

using EpisodeCallback = std::function<void(int episode, double episode_return)>;

/// Episodes draw a day uniformly from `train_days`. Updates start once the
/// buffer holds a full batch. Single-threaded and deterministic for a seed.
TrainingResult train_agent(const VoltageEnv& env, const ProfileSet& profiles, std::span<const std::size_t> train_days,
                           const AgentConfig& cfg, std::uint64_t seed, const EpisodeCallback& on_episode = {});

/// Trailing mean over up to `window` points ending at each index.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

}  // namespace voltreg
