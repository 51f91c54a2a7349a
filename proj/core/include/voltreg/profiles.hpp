#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voltreg/grid_model.hpp"

namespace voltreg {

/// Exogenous operating point for one decision step, in physical units and in
/// feeder device order (loads, then PVs).
struct ProfileStep {
  std::vector<double> load_p_mw;
  std::vector<double> load_q_mvar;
  std::vector<double> pv_p_mw;
};

/// A sequence of days, each a fixed number of steps. Hourly sets have 24 steps
/// per day; the fast-fluctuation variant has one step per second.
struct ProfileSet {
  std::string step_column = "hour";
  std::vector<int> day_ids;
  std::vector<std::vector<ProfileStep>> days;

  std::size_t day_count() const { return days.size(); }
  std::size_t steps_per_day() const { return days.empty() ? 0 : days.front().size(); }
  const ProfileStep& at(std::size_t day, std::size_t step) const { return days.at(day).at(step); }
};

struct SyntheticProfileConfig {
  int days = 365;
  double power_factor = 0.95;   // lagging, used to derive load Q from P
  double day_scale_min = 0.85;  // per-day load scale range
  double day_scale_max = 1.15;
  double load_noise = 0.05;     // relative per-step noise
  double cloudy_fraction = 0.3; // share of days drawn as overcast
  double cloud_noise = 0.15;    // relative per-step PV noise on clear days
};

/// Smooth diurnal load with evening peak, bell-shaped PV with cloud noise.
/// Load values scale the feeder's nominal loads; PV values scale p_rated.
ProfileSet synthesize_profiles(const Feeder& feeder, const SyntheticProfileConfig& cfg, std::uint64_t seed);

/// Diurnal load multiplier in [0, 1] at a fractional hour.
double load_shape(double hour);
/// Clear-sky PV output in [0, 1] at a fractional hour.
double pv_shape(double hour);

struct FastRampConfig {
  int seconds = 60;
  double pv_high_mw = 0.6;
  double pv_low_mw = 0.3;
  double load_multiplier = 0.45;  // midday load level as a fraction of nominal
  double power_factor = 0.95;
};

/// One 1-second-resolution day: PV falls linearly from high to low over the
/// first half, then recovers over the second half. Loads are constant.
ProfileSet make_fast_ramp_profile(const Feeder& feeder, const FastRampConfig& cfg);

/// CSV columns: day, <step_column>, load<k>_p_mw, load<k>_q_mvar ..., pv<k>_p_mw ...
void write_profile_csv(const std::filesystem::path& path, const Feeder& feeder, const ProfileSet& profiles);
ProfileSet read_profile_csv(const std::filesystem::path& path, const Feeder& feeder);

}  // namespace voltreg
