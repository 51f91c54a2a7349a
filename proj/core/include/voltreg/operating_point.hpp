#pragma once

#include <span>
#include <vector>

#include "voltreg/grid_model.hpp"
#include "voltreg/power_flow.hpp"
#include "voltreg/profiles.hpp"

namespace voltreg {

/// Exogenous state of one decision step (per-unit). Built only from profile
/// data; never depends on past actions.
struct State {
  NodePhaseVector p_load;
  NodePhaseVector p_pv;
  NodePhaseVector q_load;
  std::vector<double> pv_output;  // per PV device, per-unit active power
  int step = 0;                   // hour of day, or second for fast profiles

  /// Agent input: [p_load, p_pv, q_load] restricted to non-slack node-phases.
  Eigen::VectorXd flatten(const Feeder& feeder) const;
};

std::size_t state_dim(const Feeder& feeder);
std::size_t action_dim(const Feeder& feeder);

State make_state(const Feeder& feeder, const ProfileStep& step, int step_index);

/// Physical reactive setpoints (per-unit) in device order.
struct Setpoints {
  std::vector<double> q_pv;
  std::vector<double> q_svc;
};

/// Maps u in [-1, 1]^m (PVs first, then SVCs) to feasible setpoints:
///   SVC: q = q_min + (u + 1) / 2 * (q_max - q_min)
///   PV:  q = u * sqrt(s_rated^2 - p^2) at the state's PV output p.
/// Components outside [-1, 1] saturate.
Setpoints denormalize_action(const Feeder& feeder, const State& state, std::span<const double> u);

/// Action that yields zero reactive output on every device.
std::vector<double> zero_reactive_action(const Feeder& feeder);

/// Inverter reactive headroom sqrt(s^2 - p^2) for PV device k at the state.
double pv_reactive_limit(const Feeder& feeder, const State& state, std::size_t k);

/// p = P_pv - P_load, q = Q_pv + Q_svc - Q_load at every node-phase.
Injection net_injection(const Feeder& feeder, const State& state, const Setpoints& sp);

}  // namespace voltreg
