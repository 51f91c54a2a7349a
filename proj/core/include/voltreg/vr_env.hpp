#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voltreg/grid_model.hpp"
#include "voltreg/operating_point.hpp"
#include "voltreg/power_flow.hpp"
#include "voltreg/profiles.hpp"
#include "voltreg/surrogate.hpp"

namespace voltreg {

struct RewardConfig {
  double v0 = 1.0;
  double v_min = 0.95;
  double v_max = 1.05;
  double penalty_per_violation = 0.5;
  /// Reward assigned when the true model fails to converge.
  double nonconvergence_penalty = 50.0;

  void validate() const;
};

/// Source of voltage magnitudes for a given net injection.
class VoltageBackend {
 public:
  virtual ~VoltageBackend() = default;
  /// Full-length magnitudes, or nullopt if no physical solution was found.
  virtual std::optional<NodePhaseVector> magnitudes(const Injection& inj) const = 0;
  virtual std::string name() const = 0;
};

class SurrogateBackend final : public VoltageBackend {
 public:
  explicit SurrogateBackend(const SurrogateModel& model) : model_(&model) {}
  std::optional<NodePhaseVector> magnitudes(const Injection& inj) const override;
  std::string name() const override { return "surrogate"; }

 private:
  const SurrogateModel* model_;
};

class PowerFlowBackend final : public VoltageBackend {
 public:
  explicit PowerFlowBackend(const Feeder& feeder, SolveOptions opts = {}) : pf_(feeder), opts_(opts) {}
  /// Non-convergence and voltage collapse both map to nullopt.
  std::optional<NodePhaseVector> magnitudes(const Injection& inj) const override;
  std::string name() const override { return "truemodel"; }

 private:
  PowerFlow pf_;
  SolveOptions opts_;
};

struct RewardTerms {
  double reward = 0.0;
  double deviation = 0.0;      // sum of | |V| - v0 | over non-slack node-phases
  std::size_t violations = 0;  // non-slack node-phases outside [v_min, v_max]
};

/// r = -deviation - penalty_per_violation * violations.
RewardTerms compute_reward(const Feeder& feeder, const NodePhaseVector& vmag, const RewardConfig& cfg);

struct StepResult {
  double reward = 0.0;
  double deviation = 0.0;
  std::size_t violations = 0;
  bool converged = true;
  NodePhaseVector v_mag;  // empty when !converged
  Setpoints setpoints;
};

class VoltageEnv {
 public:
  VoltageEnv(const Feeder& feeder, const VoltageBackend& backend, RewardConfig cfg = {});

  StepResult step(const State& s, std::span<const double> u) const;
  StepResult step(const State& s, const Eigen::VectorXd& u) const { return step(s, std::span<const double>(u.data(), u.size())); }

  const Feeder& feeder() const { return *feeder_; }
  const VoltageBackend& backend() const { return *backend_; }
  const RewardConfig& reward_config() const { return cfg_; }

 private:
  const Feeder* feeder_;
  const VoltageBackend* backend_;
  RewardConfig cfg_;
};

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  bool terminal = false;
};

using Policy = std::function<Eigen::VectorXd(const State&)>;

struct EpisodeRecord {
  std::vector<Transition> transitions;
  std::vector<StepResult> steps;
  double total_reward = 0.0;
  std::size_t nonconverged = 0;
};

/// Rolls `policy` over every step of profile day `day`. The last transition
/// is terminal and its successor wraps to the day's first state.
EpisodeRecord run_episode(const VoltageEnv& env, const ProfileSet& profiles, std::size_t day, const Policy& policy);

/// Zero reactive output on every device.
Policy no_control_policy(const Feeder& feeder);

}  // namespace voltreg
