#include "voltreg/power_flow.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "voltreg/error.hpp"

namespace voltreg {

namespace {

std::atomic<std::uint64_t> g_solve_calls{0};

void check_dims(const Feeder& f, const Injection& inj) {
  const auto n = static_cast<Eigen::Index>(f.node_phase_count());
  if (inj.p.size() != n || inj.q.size() != n)
    fail(ErrorCategory::kValidation, "injection length " + std::to_string(inj.p.size()) + "/" +
                                         std::to_string(inj.q.size()) + " does not match " + std::to_string(n) +
                                         " node-phases");
}

}  // namespace

std::uint64_t solve_call_count() noexcept { return g_solve_calls.load(std::memory_order_relaxed); }

PowerFlow::PowerFlow(const Feeder& feeder) : feeder_(&feeder) {
  ybus_ = build_ybus(feeder);
  zbus_ = build_zbus(feeder, ybus_);
  const auto ns = feeder.non_slack_nodes();
  const auto ss = feeder.slack_nodes();
  const auto m = static_cast<Eigen::Index>(ns.size());
  const auto k = static_cast<Eigen::Index>(ss.size());
  Eigen::MatrixXcd yns(m, k);
  slack_v_.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto sc = static_cast<Eigen::Index>(ss[static_cast<std::size_t>(c)]);
    slack_v_[c] = feeder.slack_phasor(feeder.node(static_cast<std::size_t>(sc)).phase);
    for (Eigen::Index r = 0; r < m; ++r) yns(r, c) = ybus_(static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)]), sc);
  }
  w_ = -(zbus_ * (yns * slack_v_));
}

VoltageSolution PowerFlow::solve(const Injection& inj, const SolveOptions& opts) const {
  g_solve_calls.fetch_add(1, std::memory_order_relaxed);
  const Feeder& f = *feeder_;
  check_dims(f, inj);
  if (!(opts.tolerance > 0.0)) fail(ErrorCategory::kConfig, "power-flow tolerance must be positive");

  const auto ns = f.non_slack_nodes();
  const auto m = static_cast<Eigen::Index>(ns.size());
  ComplexVector s(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)]);
    s[r] = Complex(inj.p[i], inj.q[i]);
  }

  VoltageSolution sol;
  sol.v = f.flat_start();
  ComplexVector vn(m);
  for (Eigen::Index r = 0; r < m; ++r) vn[r] = sol.v[static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)])];

  ComplexVector current(m);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    for (Eigen::Index r = 0; r < m; ++r) {
      if (std::abs(vn[r]) < opts.collapse_threshold) {
        std::ostringstream msg;
        msg << "voltage collapse at node-phase " << f.label(ns[static_cast<std::size_t>(r)]) << " (|V| = "
            << std::abs(vn[r]) << " p.u., iteration " << it << ")";
        fail(ErrorCategory::kNumerical, msg.str());
      }
      current[r] = std::conj(s[r] / vn[r]);
    }
    vn.noalias() = w_ + zbus_ * current;
    for (Eigen::Index r = 0; r < m; ++r) sol.v[static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)])] = vn[r];

    // Power mismatch at the new iterate.
    const ComplexVector inet = ybus_ * sol.v;
    double worst = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto i = static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)]);
      worst = std::max(worst, std::abs(s[r] - sol.v[i] * std::conj(inet[i])));
    }
    sol.iterations = it;
    sol.residual = worst;
    if (!std::isfinite(worst)) fail(ErrorCategory::kNumerical, "power-flow iterate became non-finite");
    if (worst < opts.tolerance) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

VoltageSolution solve(const Feeder& feeder, const Injection& inj, double tol, int max_iter) {
  PowerFlow pf(feeder);
  SolveOptions opts;
  opts.tolerance = tol;
  opts.max_iterations = max_iter;
  return pf.solve(inj, opts);
}

// ---------------------------------------------------------------------------

double Mismatch::max_abs() const {
  double a = dp.size() ? dp.cwiseAbs().maxCoeff() : 0.0;
  double b = dq.size() ? dq.cwiseAbs().maxCoeff() : 0.0;
  return std::max(a, b);
}

Mismatch mismatch(const Feeder& feeder, const Eigen::MatrixXcd& ybus, const ComplexVector& v, const Injection& inj) {
  check_dims(feeder, inj);
  const auto n = static_cast<Eigen::Index>(feeder.node_phase_count());
  if (v.size() != n || ybus.rows() != n) fail(ErrorCategory::kValidation, "mismatch: voltage/admittance size mismatch");
  Mismatch out{NodePhaseVector::Zero(n), NodePhaseVector::Zero(n)};
  for (std::size_t idx : feeder.non_slack_nodes()) {
    const auto i = static_cast<Eigen::Index>(idx);
    const double ei = v[i].real();
    const double fi = v[i].imag();
    // Extended accumulators: near a flat profile the row sums cancel almost
    // exactly and double rounding alone is on the order of 1e-14.
    long double sum_re = 0.0L;  // sum_j (G e - B f)
    long double sum_im = 0.0L;  // sum_j (G f + B e)
    for (Eigen::Index j = 0; j < n; ++j) {
      const long double g = ybus(i, j).real();
      const long double b = ybus(i, j).imag();
      const long double ej = v[j].real();
      const long double fj = v[j].imag();
      sum_re += g * ej - b * fj;
      sum_im += g * fj + b * ej;
    }
    out.dp[i] = static_cast<double>(inj.p[i] - ei * sum_re - fi * sum_im);
    out.dq[i] = static_cast<double>(inj.q[i] - fi * sum_re + ei * sum_im);
  }
  return out;
}

Mismatch mismatch(const Feeder& feeder, const ComplexVector& v, const Injection& inj) {
  return mismatch(feeder, build_ybus(feeder), v, inj);
}

double deviation_objective(const Feeder& feeder, const NodePhaseVector& vmag, double v0) {
  double total = 0.0;
  for (std::size_t i : feeder.non_slack_nodes()) total += std::abs(vmag[static_cast<Eigen::Index>(i)] - v0);
  return total;
}

double deviation_objective(const Feeder& feeder, const ComplexVector& v, double v0) {
  double total = 0.0;
  for (std::size_t i : feeder.non_slack_nodes()) {
    const Complex x = v[static_cast<Eigen::Index>(i)];
    total += std::abs(std::sqrt(x.real() * x.real() + x.imag() * x.imag()) - v0);
  }
  return total;
}

std::vector<BoundViolation> bound_violations(const Feeder& feeder, const NodePhaseVector& vmag, double v_min,
                                             double v_max) {
  if (!(v_min < v_max)) fail(ErrorCategory::kConfig, "bound_violations: v_min must be below v_max");
  std::vector<BoundViolation> out;
  for (std::size_t i : feeder.non_slack_nodes()) {
    const double m = vmag[static_cast<Eigen::Index>(i)];
    if (m < v_min || m > v_max) out.push_back({i, m});
  }
  return out;
}

std::vector<BoundViolation> bound_violations(const Feeder& feeder, const ComplexVector& v, double v_min, double v_max) {
  return bound_violations(feeder, NodePhaseVector(v.cwiseAbs()), v_min, v_max);
}

}  // namespace voltreg
