#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "voltreg/vr_env.hpp"

namespace voltreg {

/// Magnitudes observed at one decision step.
struct VoltageRecord {
  std::size_t day = 0;
  int step = 0;
  NodePhaseVector v_mag;
};

/// Percentages are relative to v0 and averaged over non-slack node-phases
/// and converged steps.
struct EvalReport {
  std::string label;
  double avg_deviation_pct = 0.0;
  std::array<double, 3> phase_avg_pct{};  // a, b, c; NaN if the phase is absent
  double max_drop_pct = 0.0;              // max (v0 - |V|) / v0, floored at 0
  double max_rise_pct = 0.0;              // max (|V| - v0) / v0, floored at 0
  std::size_t violations = 0;
  std::size_t nonconverged = 0;
  std::vector<std::size_t> days;
  std::vector<std::size_t> day_violations;
  std::vector<double> day_deviation_pct;
};

/// Aggregates records (grouped by day in the order of `days`).
EvalReport report_from_records(const Feeder& feeder, const std::string& label, std::span<const std::size_t> days,
                               std::span<const VoltageRecord> records, std::size_t nonconverged, const RewardConfig& cfg);

/// Rolls `policy` over each day on the true power-flow model. Steps without
/// a converged solution are counted and left out of the statistics.
EvalReport evaluate_policy(const Feeder& feeder, const ProfileSet& profiles, std::span<const std::size_t> days,
                           const Policy& policy, const std::string& label, const RewardConfig& cfg = {},
                           std::vector<VoltageRecord>* records = nullptr);

/// Columns day, step, then one column per node-phase label ("7.b").
void write_voltage_csv(const std::filesystem::path& path, const Feeder& feeder, std::span<const VoltageRecord> records);
std::vector<VoltageRecord> read_voltage_csv(const std::filesystem::path& path, const Feeder& feeder);

/// method, avg_dev_pct, dev_a_pct, dev_b_pct, dev_c_pct, max_drop_pct, max_rise_pct, violations
void write_eval_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);
void write_eval_table(std::ostream& os, std::span<const EvalReport> reports);

}  // namespace voltreg
