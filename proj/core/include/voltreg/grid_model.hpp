#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace voltreg {

using Complex = std::complex<double>;
using Matrix3c = Eigen::Matrix3cd;

/// Real vector over the feeder's node-phases (per-unit). Layout is bus-major
/// in feeder order, then phase a < b < c, skipping absent phases.
using NodePhaseVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

enum class Phase : std::uint8_t { kA = 0, kB = 1, kC = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::kA, Phase::kB, Phase::kC};

char phase_letter(Phase p) noexcept;
std::optional<Phase> parse_phase(char c) noexcept;

/// Subset of {a, b, c}.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  static constexpr PhaseSet all() { return PhaseSet(0b111); }
  /// Parses strings such as "abc", "ac", "b". Throws on bad letters or repeats.
  static PhaseSet parse(std::string_view letters);

  constexpr bool has(Phase p) const noexcept {
    return (bits_ >> static_cast<unsigned>(p)) & 1U;
  }
  constexpr void insert(Phase p) noexcept {
    bits_ = static_cast<std::uint8_t>(bits_ | (1U << static_cast<unsigned>(p)));
  }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr int count() const noexcept {
    return ((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1);
  }
  constexpr bool subset_of(PhaseSet other) const noexcept {
    return (bits_ & ~other.bits_) == 0;
  }
  std::string str() const;

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

 private:
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

/// Per-unit system. `s_base_mva` is the per-phase power base; impedance bases
/// follow from each bus's line-to-neutral voltage base.
struct PerUnitBase {
  double s_base_mva = 1.0;

  double power_to_pu(double mw_or_mvar) const { return mw_or_mvar / s_base_mva; }
  double power_from_pu(double pu) const { return pu * s_base_mva; }
  /// Ohms per per-unit for a line-to-neutral base voltage in kV.
  double impedance_base_ohm(double v_base_kv_ln) const {
    return v_base_kv_ln * v_base_kv_ln / s_base_mva;
  }
};

// ---------------------------------------------------------------------------
// Physical-unit description, as read from a feeder file.

struct BusDesc {
  int id = 0;
  PhaseSet phases = PhaseSet::all();
  bool slack = false;
  double v_base_kv = 1.0;  // line-to-neutral
};

struct LineDesc {
  int from = 0;
  int to = 0;
  PhaseSet phases = PhaseSet::all();
  Matrix3c z_ohm = Matrix3c::Zero();        // R + jX
  Matrix3c y_shunt_siemens = Matrix3c::Zero();  // total G + jB, split evenly between ends
};

struct PvDesc {
  int bus = 0;
  Phase phase = Phase::kA;
  double p_rated_mw = 0.0;
  double s_rated_mva = 0.0;
};

struct SvcDesc {
  int bus = 0;
  Phase phase = Phase::kA;
  double q_min_mvar = 0.0;
  double q_max_mvar = 0.0;
};

struct LoadDesc {
  int bus = 0;
  Phase phase = Phase::kA;
  double p_mw = 0.0;
  double q_mvar = 0.0;
};

struct FeederDesc {
  std::string name;
  double s_base_mva = 1.0;
  double v0_pu = 1.0;
  std::vector<BusDesc> buses;
  std::vector<LineDesc> lines;
  std::vector<PvDesc> pvs;
  std::vector<SvcDesc> svcs;
  std::vector<LoadDesc> loads;
};

// ---------------------------------------------------------------------------
// Validated, per-unit feeder.

struct Bus {
  int id = 0;
  PhaseSet phases;
  bool is_slack = false;
  double v_base_kv = 1.0;
};

struct Line {
  std::size_t from = 0;  // bus positions, not ids
  std::size_t to = 0;
  PhaseSet phases;
  Matrix3c y_series = Matrix3c::Zero();  // per-unit, zero outside `phases`
  Matrix3c y_shunt = Matrix3c::Zero();   // per-unit total
};

struct PvUnit {
  std::size_t node = 0;  // node-phase index
  double p_rated = 0.0;  // per-unit
  double s_rated = 0.0;
};

struct SvcUnit {
  std::size_t node = 0;
  double q_min = 0.0;
  double q_max = 0.0;
};

struct LoadPoint {
  std::size_t node = 0;
  double p_nominal = 0.0;
  double q_nominal = 0.0;
};

struct NodePhase {
  std::size_t bus = 0;  // bus position
  Phase phase = Phase::kA;
};

class Feeder {
 public:
  /// Validates the description and converts it to per-unit. Throws
  /// Error(kValidation) naming the offending bus, line or device.
  static Feeder build(const FeederDesc& desc);

  const std::string& name() const { return name_; }
  const PerUnitBase& base() const { return base_; }
  double v0() const { return v0_; }

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<PvUnit>& pvs() const { return pvs_; }
  const std::vector<SvcUnit>& svcs() const { return svcs_; }
  const std::vector<LoadPoint>& loads() const { return loads_; }
  const FeederDesc& description() const { return desc_; }

  std::size_t node_phase_count() const { return nodes_.size(); }
  const NodePhase& node(std::size_t index) const { return nodes_.at(index); }
  std::optional<std::size_t> index_of(int bus_id, Phase phase) const;
  std::optional<std::size_t> bus_position(int bus_id) const;

  std::size_t slack_bus() const { return slack_bus_; }
  bool is_slack(std::size_t node_index) const { return nodes_.at(node_index).bus == slack_bus_; }
  std::span<const std::size_t> slack_nodes() const { return slack_nodes_; }
  std::span<const std::size_t> non_slack_nodes() const { return non_slack_nodes_; }

  /// Fixed slack phasors: magnitude v0 at 0, -120 and +120 degrees.
  Complex slack_phasor(Phase phase) const;
  /// Every node-phase set to the slack phasor of its phase.
  ComplexVector flat_start() const;

  /// "busid.phase", e.g. "7.b".
  std::string label(std::size_t node_index) const;

 private:
  std::string name_;
  PerUnitBase base_;
  double v0_ = 1.0;
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<PvUnit> pvs_;
  std::vector<SvcUnit> svcs_;
  std::vector<LoadPoint> loads_;
  std::vector<NodePhase> nodes_;
  std::vector<std::array<std::optional<std::size_t>, 3>> bus_nodes_;
  std::size_t slack_bus_ = 0;
  std::vector<std::size_t> slack_nodes_;
  std::vector<std::size_t> non_slack_nodes_;
  FeederDesc desc_;
};

/// Parses the JSON feeder format (see data/feeder_format.md).
FeederDesc parse_feeder_json(std::string_view text, std::string_view source = "<string>");
Feeder load_feeder(const std::filesystem::path& path);

/// Bus admittance matrix over node-phases (per-unit). Symmetric bit-for-bit.
Eigen::MatrixXcd build_ybus(const Feeder& feeder);

/// Inverse of the non-slack partition of Y, ordered as `non_slack_nodes()`.
/// Throws Error(kNumerical) naming the node-phase when the partition is singular.
Eigen::MatrixXcd build_zbus(const Feeder& feeder);

/// Same as above for a precomputed Y.
Eigen::MatrixXcd build_zbus(const Feeder& feeder, const Eigen::MatrixXcd& ybus);

}  // namespace voltreg
