#include "voltreg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "voltreg/csv.hpp"
#include "voltreg/error.hpp"

namespace voltreg {

EvalReport report_from_records(const Feeder& feeder, const std::string& label, std::span<const std::size_t> days,
                               std::span<const VoltageRecord> records, std::size_t nonconverged, const RewardConfig& cfg) {
  EvalReport rep;
  rep.label = label;
  rep.nonconverged = nonconverged;
  rep.days.assign(days.begin(), days.end());
  rep.day_violations.assign(days.size(), 0);
  rep.day_deviation_pct.assign(days.size(), 0.0);
  std::map<std::size_t, std::size_t> day_pos;
  for (std::size_t k = 0; k < days.size(); ++k) day_pos.emplace(days[k], k);

  const auto ns = feeder.non_slack_nodes();
  std::array<double, 3> phase_sum{};
  std::array<std::size_t, 3> phase_count{};
  std::vector<std::size_t> day_count(days.size(), 0);
  double total = 0.0;
  std::size_t count = 0;
  double max_drop = 0.0;
  double max_rise = 0.0;
  for (const VoltageRecord& r : records) {
    const auto it = day_pos.find(r.day);
    if (it == day_pos.end()) fail(ErrorCategory::kValidation, "voltage record for a day outside the evaluation set");
    const std::size_t k = it->second;
    for (std::size_t i : ns) {
      const double v = r.v_mag[static_cast<Eigen::Index>(i)];
      const double dev = std::abs(v - cfg.v0) / cfg.v0;
      const auto ph = static_cast<std::size_t>(feeder.node(i).phase);
      total += dev;
      ++count;
      phase_sum[ph] += dev;
      ++phase_count[ph];
      rep.day_deviation_pct[k] += dev;
      ++day_count[k];
      max_drop = std::max(max_drop, (cfg.v0 - v) / cfg.v0);
      max_rise = std::max(max_rise, (v - cfg.v0) / cfg.v0);
      if (v < cfg.v_min || v > cfg.v_max) {
        ++rep.violations;
        ++rep.day_violations[k];
      }
    }
  }
  rep.avg_deviation_pct = count ? 100.0 * total / static_cast<double>(count) : 0.0;
  for (std::size_t p = 0; p < 3; ++p)
    rep.phase_avg_pct[p] = phase_count[p] ? 100.0 * phase_sum[p] / static_cast<double>(phase_count[p])
                                          : std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < days.size(); ++k)
    if (day_count[k]) rep.day_deviation_pct[k] *= 100.0 / static_cast<double>(day_count[k]);
  rep.max_drop_pct = 100.0 * max_drop;
  rep.max_rise_pct = 100.0 * max_rise;
  return rep;
}

EvalReport evaluate_policy(const Feeder& feeder, const ProfileSet& profiles, std::span<const std::size_t> days,
                           const Policy& policy, const std::string& label, const RewardConfig& cfg,
                           std::vector<VoltageRecord>* records) {
  PowerFlowBackend backend(feeder);
  VoltageEnv env(feeder, backend, cfg);
  std::vector<VoltageRecord> local;
  std::size_t nonconverged = 0;
  for (std::size_t d : days) {
    EpisodeRecord ep = run_episode(env, profiles, d, policy);
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      if (!ep.steps[t].converged) {
        ++nonconverged;
        continue;
      }
      local.push_back({d, static_cast<int>(t), std::move(ep.steps[t].v_mag)});
    }
  }
  EvalReport rep = report_from_records(feeder, label, days, local, nonconverged, cfg);
  if (records) *records = std::move(local);
  return rep;
}

void write_voltage_csv(const std::filesystem::path& path, const Feeder& feeder, std::span<const VoltageRecord> records) {
  std::vector<std::string> header{"day", "step"};
  for (std::size_t i = 0; i < feeder.node_phase_count(); ++i) header.push_back(feeder.label(i));
  CsvWriter w(path, header);
  std::vector<double> row(header.size());
  for (const VoltageRecord& r : records) {
    row[0] = static_cast<double>(r.day);
    row[1] = r.step;
    for (std::size_t i = 0; i < feeder.node_phase_count(); ++i) row[2 + i] = r.v_mag[static_cast<Eigen::Index>(i)];
    w.row(row);
  }
}

std::vector<VoltageRecord> read_voltage_csv(const std::filesystem::path& path, const Feeder& feeder) {
  const NumericTable t = read_numeric_csv(path);
  const std::size_t cd = t.column("day");
  const std::size_t cs = t.column("step");
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < feeder.node_phase_count(); ++i) cols.push_back(t.column(feeder.label(i)));
  std::vector<VoltageRecord> out;
  for (const auto& row : t.rows) {
    VoltageRecord r;
    r.day = static_cast<std::size_t>(row[cd]);
    r.step = static_cast<int>(row[cs]);
    r.v_mag.resize(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) r.v_mag[static_cast<Eigen::Index>(i)] = row[cols[i]];
    out.push_back(std::move(r));
  }
  return out;
}

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  CsvWriter w(path, {"method", "avg_dev_pct", "dev_a_pct", "dev_b_pct", "dev_c_pct", "max_drop_pct", "max_rise_pct",
                     "violations"});
  for (const EvalReport& r : reports)
    w.row(r.label, {r.avg_deviation_pct, r.phase_avg_pct[0], r.phase_avg_pct[1], r.phase_avg_pct[2], r.max_drop_pct,
                    r.max_rise_pct, static_cast<double>(r.violations)});
}

void write_eval_table(std::ostream& os, std::span<const EvalReport> reports) {
  std::size_t w0 = 6;
  for (const EvalReport& r : reports) w0 = std::max(w0, r.label.size());
  auto pct = [](double x) {
    if (std::isnan(x)) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << x;
    return s.str();
  };
  os << std::left << std::setw(static_cast<int>(w0)) << "method" << std::right;
  for (const char* h : {"avg.dev%", "a%", "b%", "c%", "max.drop%", "max.rise%", "violations"}) os << std::setw(11) << h;
  os << '\n';
  for (const EvalReport& r : reports) {
    os << std::left << std::setw(static_cast<int>(w0)) << r.label << std::right;
    for (double x : {r.avg_deviation_pct, r.phase_avg_pct[0], r.phase_avg_pct[1], r.phase_avg_pct[2], r.max_drop_pct,
                     r.max_rise_pct})
      os << std::setw(11) << pct(x);
    os << std::setw(11) << r.violations << '\n';
  }
}

}  // namespace voltreg
