#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "voltreg/grid_model.hpp"

namespace voltreg {

/// Net per-unit injections at every node-phase: p = P_pv - P_load,
/// q = Q_pv + Q_svc - Q_load. Slack entries are ignored.
struct Injection {
  NodePhaseVector p;
  NodePhaseVector q;

  static Injection zeros(std::size_t n) {
    return {NodePhaseVector::Zero(static_cast<Eigen::Index>(n)), NodePhaseVector::Zero(static_cast<Eigen::Index>(n))};
  }
};

struct VoltageSolution {
  ComplexVector v;  // rectangular phasors, per-unit
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // max |S_spec - V conj(YV)| over non-slack node-phases

  NodePhaseVector magnitudes() const { return v.cwiseAbs(); }
};

struct SolveOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
  double collapse_threshold = 0.1;  // |V| below this aborts
};

/// Z-bus fixed-point solver with cached network matrices.
///
/// V_n <- w + Z conj(S_n / V_n), where w = -Z Y_ns V_s is the no-load voltage
/// the slack imposes on the non-slack node-phases. Starts from the slack
/// phasor pattern. Immutable after construction; solve() is safe to call
/// concurrently.
class PowerFlow {
 public:
  explicit PowerFlow(const Feeder& feeder);

  /// Returns converged=false with the last iterate on non-convergence.
  /// Throws Error(kNumerical) when a voltage collapses below the threshold.
  VoltageSolution solve(const Injection& inj, const SolveOptions& opts = {}) const;

  const Feeder& feeder() const { return *feeder_; }
  const Eigen::MatrixXcd& ybus() const { return ybus_; }
  const Eigen::MatrixXcd& zbus() const { return zbus_; }
  const ComplexVector& no_load_voltage() const { return w_; }

 private:
  const Feeder* feeder_;
  Eigen::MatrixXcd ybus_;
  Eigen::MatrixXcd zbus_;
  ComplexVector w_;
  ComplexVector slack_v_;
};

/// Convenience wrapper that builds the matrices on every call.
VoltageSolution solve(const Feeder& feeder, const Injection& inj, double tol = 1e-8, int max_iter = 100);

/// Number of power-flow solves performed by this process (all threads).
std::uint64_t solve_call_count() noexcept;

struct Mismatch {
  NodePhaseVector dp;
  NodePhaseVector dq;

  double max_abs() const;
};

/// Residuals of the active/reactive balance equations evaluated term by term in
/// rectangular coordinates (G, B, e, f). Slack entries are zero.
Mismatch mismatch(const Feeder& feeder, const Eigen::MatrixXcd& ybus, const ComplexVector& v, const Injection& inj);
Mismatch mismatch(const Feeder& feeder, const ComplexVector& v, const Injection& inj);

/// Sum over non-slack node-phases of ||V| - v0|.
double deviation_objective(const Feeder& feeder, const NodePhaseVector& vmag, double v0);
double deviation_objective(const Feeder& feeder, const ComplexVector& v, double v0);

struct BoundViolation {
  std::size_t node = 0;
  double magnitude = 0.0;
};

/// Non-slack node-phases with |V| outside the closed band [v_min, v_max].
std::vector<BoundViolation> bound_violations(const Feeder& feeder, const NodePhaseVector& vmag, double v_min = 0.95,
                                             double v_max = 1.05);
std::vector<BoundViolation> bound_violations(const Feeder& feeder, const ComplexVector& v, double v_min = 0.95,
                                             double v_max = 1.05);

}  // namespace voltreg
