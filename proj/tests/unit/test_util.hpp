#pragma once

#include <complex>
#include <filesystem>
#include <random>
#include <string>

#include "voltreg/grid_model.hpp"

namespace voltreg::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(VOLTREG_TEST_DATA) / name;
}

inline Feeder bundled_feeder() { return load_feeder(data_path("feeder10.json")); }

/// Slack bus 0 (abc) feeding a single-phase bus 1 on phase a. With unit
/// voltage and power bases the ohm values are already per-unit.
inline FeederDesc two_bus_desc(std::complex<double> z_pu) {
  FeederDesc d;
  d.name = "two-bus";
  d.buses.push_back({0, PhaseSet::all(), true, 1.0});
  d.buses.push_back({1, PhaseSet::parse("a"), false, 1.0});
  LineDesc l;
  l.from = 0;
  l.to = 1;
  l.phases = PhaseSet::parse("a");
  l.z_ohm(0, 0) = z_pu;
  d.lines.push_back(l);
  return d;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("voltreg_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace voltreg::testing
