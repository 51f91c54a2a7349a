#include "voltreg/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "voltreg/csv.hpp"
#include "voltreg/error.hpp"

namespace voltreg {

double load_shape(double hour) {
  // Night trough, morning shoulder, evening peak near 19:30.
  auto bump = [](double h, double centre, double width) {
    double d = std::remainder(h - centre, 24.0);
    return std::exp(-0.5 * d * d / (width * width));
  };
  double v = 0.35 + 0.30 * bump(hour, 8.0, 1.8) + 0.20 * bump(hour, 13.0, 3.0) + 0.65 * bump(hour, 19.5, 2.0);
  return std::clamp(v, 0.0, 1.0);
}

double pv_shape(double hour) {
  constexpr double kSunrise = 6.0;
  constexpr double kSunset = 18.5;
  if (hour <= kSunrise || hour >= kSunset) return 0.0;
  double x = (hour - kSunrise) / (kSunset - kSunrise);
  return std::pow(std::sin(std::numbers::pi * x), 1.5);
}

ProfileSet synthesize_profiles(const Feeder& feeder, const SyntheticProfileConfig& cfg, std::uint64_t seed) {
  if (cfg.days <= 0) fail(ErrorCategory::kConfig, "synthetic profile needs at least one day");
  if (!(cfg.power_factor > 0.0 && cfg.power_factor <= 1.0)) fail(ErrorCategory::kConfig, "power_factor must be in (0, 1]");
  const double q_ratio = std::tan(std::acos(cfg.power_factor));
  const PerUnitBase& base = feeder.base();
  const auto& loads = feeder.loads();
  const auto& pvs = feeder.pvs();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  ProfileSet set;
  set.step_column = "hour";
  for (int d = 0; d < cfg.days; ++d) {
    const double day_scale = cfg.day_scale_min + (cfg.day_scale_max - cfg.day_scale_min) * unit(rng);
    const bool cloudy = unit(rng) < cfg.cloudy_fraction;
    const double clearness = cloudy ? 0.25 + 0.45 * unit(rng) : 0.85 + 0.15 * unit(rng);
    // Seasonal swing of the PV peak.
    const double season = 0.9 + 0.1 * std::cos(2.0 * std::numbers::pi * (d % 365 - 172) / 365.0);
    std::vector<ProfileStep> day(24);
    for (int h = 0; h < 24; ++h) {
      ProfileStep& st = day[static_cast<std::size_t>(h)];
      const double shape = load_shape(h);
      for (const LoadPoint& l : loads) {
        double mult = std::max(0.05, shape * day_scale * (1.0 + cfg.load_noise * normal(rng)));
        double p = base.power_from_pu(l.p_nominal) * mult;
        st.load_p_mw.push_back(p);
        st.load_q_mvar.push_back(p * q_ratio);
      }
      const double sun = pv_shape(h) * clearness * season;
      for (const PvUnit& pv : pvs) {
        double noise = cloudy ? 0.35 : cfg.cloud_noise;
        double frac = std::clamp(sun * (1.0 + noise * normal(rng)), 0.0, 1.0);
        if (pv_shape(h) == 0.0) frac = 0.0;
        st.pv_p_mw.push_back(base.power_from_pu(pv.p_rated) * frac);
      }
    }
    set.day_ids.push_back(d);
    set.days.push_back(std::move(day));
  }
  return set;
}

ProfileSet make_fast_ramp_profile(const Feeder& feeder, const FastRampConfig& cfg) {
  if (cfg.seconds < 2) fail(ErrorCategory::kConfig, "fast ramp needs at least two seconds");
  const double q_ratio = std::tan(std::acos(cfg.power_factor));
  const PerUnitBase& base = feeder.base();
  ProfileSet set;
  set.step_column = "second";
  set.day_ids.push_back(0);
  std::vector<ProfileStep> day(static_cast<std::size_t>(cfg.seconds));
  const double half = cfg.seconds / 2.0;
  for (int t = 0; t < cfg.seconds; ++t) {
    ProfileStep& st = day[static_cast<std::size_t>(t)];
    // Triangle: high at t=0, low at t=half, back to high at the end.
    double frac = t <= half ? t / half : (cfg.seconds - 1 - t) / (cfg.seconds - 1 - half);
    frac = std::clamp(frac, 0.0, 1.0);
    const double pv_mw = cfg.pv_high_mw + (cfg.pv_low_mw - cfg.pv_high_mw) * frac;
    for (const LoadPoint& l : feeder.loads()) {
      double p = base.power_from_pu(l.p_nominal) * cfg.load_multiplier;
      st.load_p_mw.push_back(p);
      st.load_q_mvar.push_back(p * q_ratio);
    }
    for (const PvUnit& pv : feeder.pvs()) st.pv_p_mw.push_back(std::min(pv_mw, base.power_from_pu(pv.p_rated)));
  }
  set.days.push_back(std::move(day));
  return set;
}

void write_profile_csv(const std::filesystem::path& path, const Feeder& feeder, const ProfileSet& profiles) {
  std::vector<std::string> header{"day", profiles.step_column};
  for (std::size_t k = 0; k < feeder.loads().size(); ++k) {
    header.push_back("load" + std::to_string(k) + "_p_mw");
    header.push_back("load" + std::to_string(k) + "_q_mvar");
  }
  for (std::size_t k = 0; k < feeder.pvs().size(); ++k) header.push_back("pv" + std::to_string(k) + "_p_mw");
  CsvWriter w(path, header);
  for (std::size_t d = 0; d < profiles.day_count(); ++d)
    for (std::size_t t = 0; t < profiles.days[d].size(); ++t) {
      const ProfileStep& st = profiles.days[d][t];
      std::vector<double> row{static_cast<double>(profiles.day_ids[d]), static_cast<double>(t)};
      for (std::size_t k = 0; k < st.load_p_mw.size(); ++k) {
        row.push_back(st.load_p_mw[k]);
        row.push_back(st.load_q_mvar[k]);
      }
      for (double p : st.pv_p_mw) row.push_back(p);
      w.row(row);
    }
}

ProfileSet read_profile_csv(const std::filesystem::path& path, const Feeder& feeder) {
  NumericTable t = read_numeric_csv(path);
  if (t.header.size() < 2 || t.header[0] != "day")
    fail(ErrorCategory::kParse, path.string() + ": first column must be 'day'");
  ProfileSet set;
  set.step_column = t.header[1];
  if (set.step_column != "hour" && set.step_column != "second")
    fail(ErrorCategory::kParse, path.string() + ": second column must be 'hour' or 'second'");

  std::vector<std::size_t> lp, lq, pp;
  for (std::size_t k = 0; k < feeder.loads().size(); ++k) {
    lp.push_back(t.column("load" + std::to_string(k) + "_p_mw"));
    lq.push_back(t.column("load" + std::to_string(k) + "_q_mvar"));
  }
  for (std::size_t k = 0; k < feeder.pvs().size(); ++k) pp.push_back(t.column("pv" + std::to_string(k) + "_p_mw"));

  std::map<int, std::map<int, ProfileStep>> by_day;
  for (const auto& row : t.rows) {
    const int day = static_cast<int>(row[0]);
    const int step = static_cast<int>(row[1]);
    ProfileStep st;
    for (std::size_t k = 0; k < lp.size(); ++k) {
      st.load_p_mw.push_back(row[lp[k]]);
      st.load_q_mvar.push_back(row[lq[k]]);
    }
    for (std::size_t k = 0; k < pp.size(); ++k) {
      if (row[pp[k]] < 0.0) fail(ErrorCategory::kValidation, path.string() + ": negative PV output on day " + std::to_string(day));
      st.pv_p_mw.push_back(row[pp[k]]);
    }
    if (!by_day[day].emplace(step, std::move(st)).second)
      fail(ErrorCategory::kParse, path.string() + ": duplicate row for day " + std::to_string(day) + " step " + std::to_string(step));
  }
  std::size_t expected = 0;
  for (auto& [day, steps] : by_day) {
    if (expected == 0) expected = steps.size();
    if (steps.size() != expected)
      fail(ErrorCategory::kValidation, path.string() + ": day " + std::to_string(day) + " has " + std::to_string(steps.size()) +
                                           " steps, expected " + std::to_string(expected));
    std::vector<ProfileStep> seq;
    int next = 0;
    for (auto& [step, st] : steps) {
      if (step != next) fail(ErrorCategory::kValidation, path.string() + ": day " + std::to_string(day) + " steps not contiguous from 0");
      seq.push_back(std::move(st));
      ++next;
    }
    set.day_ids.push_back(day);
    set.days.push_back(std::move(seq));
  }
  if (set.days.empty()) fail(ErrorCategory::kValidation, path.string() + ": no profile rows");
  return set;
}

}  // namespace voltreg
