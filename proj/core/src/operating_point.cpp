#include "voltreg/operating_point.hpp"

#include <algorithm>
#include <cmath>

#include "voltreg/error.hpp"

namespace voltreg {

std::size_t state_dim(const Feeder& feeder) { return 3 * feeder.non_slack_nodes().size(); }

std::size_t action_dim(const Feeder& feeder) { return feeder.pvs().size() + feeder.svcs().size(); }

Eigen::VectorXd State::flatten(const Feeder& feeder) const {
  const auto ns = feeder.non_slack_nodes();
  const auto m = static_cast<Eigen::Index>(ns.size());
  Eigen::VectorXd x(3 * m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)]);
    x[r] = p_load[i];
    x[m + r] = p_pv[i];
    x[2 * m + r] = q_load[i];
  }
  return x;
}

State make_state(const Feeder& feeder, const ProfileStep& step, int step_index) {
  const auto& loads = feeder.loads();
  const auto& pvs = feeder.pvs();
  if (step.load_p_mw.size() != loads.size() || step.load_q_mvar.size() != loads.size() || step.pv_p_mw.size() != pvs.size())
    fail(ErrorCategory::kValidation, "profile step does not cover the feeder's loads and PVs");
  const auto n = static_cast<Eigen::Index>(feeder.node_phase_count());
  const PerUnitBase& base = feeder.base();
  State s;
  s.p_load = NodePhaseVector::Zero(n);
  s.p_pv = NodePhaseVector::Zero(n);
  s.q_load = NodePhaseVector::Zero(n);
  s.step = step_index;
  for (std::size_t k = 0; k < loads.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(loads[k].node);
    s.p_load[i] += base.power_to_pu(step.load_p_mw[k]);
    s.q_load[i] += base.power_to_pu(step.load_q_mvar[k]);
  }
  for (std::size_t k = 0; k < pvs.size(); ++k) {
    // Active output is exogenous; anything above the rating is clipped to it.
    const double p = std::clamp(base.power_to_pu(step.pv_p_mw[k]), 0.0, pvs[k].p_rated);
    s.pv_output.push_back(p);
    s.p_pv[static_cast<Eigen::Index>(pvs[k].node)] += p;
  }
  return s;
}

double pv_reactive_limit(const Feeder& feeder, const State& state, std::size_t k) {
  const PvUnit& pv = feeder.pvs().at(k);
  const double p = state.pv_output.at(k);
  return std::sqrt(std::max(0.0, pv.s_rated * pv.s_rated - p * p));
}

Setpoints denormalize_action(const Feeder& feeder, const State& state, std::span<const double> u) {
  const auto& pvs = feeder.pvs();
  const auto& svcs = feeder.svcs();
  if (u.size() != pvs.size() + svcs.size())
    fail(ErrorCategory::kValidation, "action has " + std::to_string(u.size()) + " components, expected " +
                                         std::to_string(pvs.size() + svcs.size()));
  Setpoints sp;
  for (std::size_t k = 0; k < pvs.size(); ++k) {
    const double a = std::clamp(u[k], -1.0, 1.0);
    sp.q_pv.push_back(a * pv_reactive_limit(feeder, state, k));
  }
  for (std::size_t k = 0; k < svcs.size(); ++k) {
    const double a = std::clamp(u[pvs.size() + k], -1.0, 1.0);
    const SvcUnit& s = svcs[k];
    sp.q_svc.push_back(std::clamp(s.q_min + 0.5 * (a + 1.0) * (s.q_max - s.q_min), s.q_min, s.q_max));
  }
  return sp;
}

std::vector<double> zero_reactive_action(const Feeder& feeder) {
  std::vector<double> u(feeder.pvs().size(), 0.0);
  for (const SvcUnit& s : feeder.svcs()) u.push_back(-(s.q_max + s.q_min) / (s.q_max - s.q_min));
  return u;
}

Injection net_injection(const Feeder& feeder, const State& state, const Setpoints& sp) {
  Injection inj;
  inj.p = state.p_pv - state.p_load;
  inj.q = -state.q_load;
  for (std::size_t k = 0; k < sp.q_pv.size(); ++k) inj.q[static_cast<Eigen::Index>(feeder.pvs()[k].node)] += sp.q_pv[k];
  for (std::size_t k = 0; k < sp.q_svc.size(); ++k) inj.q[static_cast<Eigen::Index>(feeder.svcs()[k].node)] += sp.q_svc[k];
  return inj;
}

}  // namespace voltreg
