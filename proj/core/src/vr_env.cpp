#include "voltreg/vr_env.hpp"

#include <cmath>

#include "voltreg/error.hpp"

namespace voltreg {

void RewardConfig::validate() const {
  if (!(v_min < v0 && v0 < v_max)) fail(ErrorCategory::kConfig, "reward config needs v_min < v0 < v_max");
  if (!(penalty_per_violation >= 0.0)) fail(ErrorCategory::kConfig, "penalty_per_violation must be >= 0");
  if (!(nonconvergence_penalty >= 0.0)) fail(ErrorCategory::kConfig, "nonconvergence_penalty must be >= 0");
}

std::optional<NodePhaseVector> SurrogateBackend::magnitudes(const Injection& inj) const {
  return model_->predict(inj.p, inj.q);
}

std::optional<NodePhaseVector> PowerFlowBackend::magnitudes(const Injection& inj) const {
  try {
    VoltageSolution sol = pf_.solve(inj, opts_);
    if (!sol.converged) return std::nullopt;
    return sol.magnitudes();
  } catch (const Error& e) {
    if (e.category() != ErrorCategory::kNumerical) throw;
    return std::nullopt;
  }
}

RewardTerms compute_reward(const Feeder& feeder, const NodePhaseVector& vmag, const RewardConfig& cfg) {
  RewardTerms t;
  t.deviation = deviation_objective(feeder, vmag, cfg.v0);
  t.violations = bound_violations(feeder, vmag, cfg.v_min, cfg.v_max).size();
  t.reward = -t.deviation - cfg.penalty_per_violation * static_cast<double>(t.violations);
  return t;
}

VoltageEnv::VoltageEnv(const Feeder& feeder, const VoltageBackend& backend, RewardConfig cfg)
    : feeder_(&feeder), backend_(&backend), cfg_(cfg) {
  cfg_.validate();
}

StepResult VoltageEnv::step(const State& s, std::span<const double> u) const {
  StepResult out;
  out.setpoints = denormalize_action(*feeder_, s, u);
  std::optional<NodePhaseVector> v = backend_->magnitudes(net_injection(*feeder_, s, out.setpoints));
  if (!v || !v->allFinite()) {
    out.converged = false;
    out.reward = -cfg_.nonconvergence_penalty;
    return out;
  }
  const RewardTerms t = compute_reward(*feeder_, *v, cfg_);
  out.reward = t.reward;
  out.deviation = t.deviation;
  out.violations = t.violations;
  out.v_mag = std::move(*v);
  return out;
}

EpisodeRecord run_episode(const VoltageEnv& env, const ProfileSet& profiles, std::size_t day, const Policy& policy) {
  if (day >= profiles.day_count()) fail(ErrorCategory::kConfig, "episode day " + std::to_string(day) + " out of range");
  const Feeder& f = env.feeder();
  const std::size_t steps = profiles.steps_per_day();
  EpisodeRecord rec;
  rec.transitions.reserve(steps);
  rec.steps.reserve(steps);

  State s = make_state(f, profiles.at(day, 0), 0);
  const Eigen::VectorXd first = s.flatten(f);
  Eigen::VectorXd flat = first;
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::VectorXd a = policy(s);
    StepResult r = env.step(s, a);
    const bool last = t + 1 == steps;
    State next = last ? s : make_state(f, profiles.at(day, t + 1), static_cast<int>(t + 1));
    Eigen::VectorXd next_flat = last ? first : next.flatten(f);
    rec.total_reward += r.reward;
    if (!r.converged) ++rec.nonconverged;
    rec.transitions.push_back({flat, a, r.reward, next_flat, last});
    rec.steps.push_back(std::move(r));
    s = std::move(next);
    flat = std::move(next_flat);
  }
  return rec;
}

Policy no_control_policy(const Feeder& feeder) {
  const std::vector<double> u = zero_reactive_action(feeder);
  const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
  return [a](const State&) { return a; };
}

}  // namespace voltreg
