#include <complex>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "voltreg/error.hpp"
#include "voltreg/grid_model.hpp"

using namespace voltreg;
using voltreg::testing::bundled_feeder;
using voltreg::testing::two_bus_desc;

namespace {

ErrorCategory category_of(const FeederDesc& d) {
  try {
    Feeder::build(d);
  } catch (const Error& e) {
    return e.category();
  }
  ADD_FAILURE() << "feeder was accepted";
  return ErrorCategory::kState;
}

std::string message_of(const FeederDesc& d) {
  try {
    Feeder::build(d);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(PhaseSet, ParseAndPrint) {
  EXPECT_EQ(PhaseSet::parse("ca").str(), "ac");
  EXPECT_EQ(PhaseSet::parse("abc"), PhaseSet::all());
  EXPECT_EQ(PhaseSet::parse("b").count(), 1);
  EXPECT_THROW(PhaseSet::parse("ad"), Error);
  EXPECT_THROW(PhaseSet::parse("aa"), Error);
  EXPECT_THROW(PhaseSet::parse(""), Error);
}

TEST(GridModel, BundledFeederCounts) {
  const Feeder f = bundled_feeder();
  EXPECT_EQ(f.buses().size(), 10u);
  EXPECT_EQ(f.node_phase_count(), 27u);
  EXPECT_EQ(f.pvs().size(), 3u);
  EXPECT_EQ(f.svcs().size(), 1u);
  EXPECT_EQ(f.slack_nodes().size(), 3u);
  EXPECT_EQ(f.non_slack_nodes().size(), 24u);
}

TEST(GridModel, IndexingIsABijection) {
  const Feeder f = bundled_feeder();
  std::size_t seen = 0;
  for (const Bus& b : f.buses())
    for (Phase p : kAllPhases) {
      auto idx = f.index_of(b.id, p);
      ASSERT_EQ(idx.has_value(), b.phases.has(p));
      if (!idx) continue;
      const NodePhase& np = f.node(*idx);
      EXPECT_EQ(f.buses()[np.bus].id, b.id);
      EXPECT_EQ(np.phase, p);
      ++seen;
    }
  EXPECT_EQ(seen, f.node_phase_count());
  EXPECT_EQ(f.label(*f.index_of(9, Phase::kB)), "9.b");
}

TEST(GridModel, DuplicateSlackRejected) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.buses[1].phases = PhaseSet::all();
  d.buses[1].slack = true;
  EXPECT_EQ(category_of(d), ErrorCategory::kValidation);
  EXPECT_NE(message_of(d).find("duplicate slack"), std::string::npos);
}

TEST(GridModel, DeviceOnAbsentPhaseRejected) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.buses[1].phases = PhaseSet::parse("ac");
  d.lines[0].phases = PhaseSet::parse("ac");
  d.lines[0].z_ohm(2, 2) = {0.01, 0.02};
  d.pvs.push_back({1, Phase::kB, 0.5, 0.55});
  EXPECT_EQ(category_of(d), ErrorCategory::kValidation);
  EXPECT_NE(message_of(d).find("device on absent phase"), std::string::npos);
}

TEST(GridModel, DisconnectedBusRejected) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.buses.push_back({2, PhaseSet::parse("a"), false, 1.0});
  EXPECT_EQ(category_of(d), ErrorCategory::kValidation);
}

TEST(GridModel, TruncatedJsonIsAParseError) {
  try {
    parse_feeder_json("{\"buses\": [", "trunc.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kParse);
    EXPECT_NE(std::string(e.what()).find("trunc.json"), std::string::npos);
  }
}

TEST(Ybus, TwoNodeNetwork) {
  const Complex z(0.01, 0.02);
  const Complex y = 1.0 / z;
  const Feeder f = Feeder::build(two_bus_desc(z));
  const Eigen::MatrixXcd Y = build_ybus(f);
  ASSERT_EQ(Y.rows(), 4);
  const std::size_t s = *f.index_of(0, Phase::kA);
  const std::size_t n = *f.index_of(1, Phase::kA);
  EXPECT_NEAR(std::abs(Y(s, s) - y), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(Y(n, n) - y), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(Y(s, n) + y), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(Y(n, s) + y), 0.0, 1e-12);
  // slack phases b and c carry nothing
  EXPECT_EQ(Y.row(*f.index_of(0, Phase::kB)).norm(), 0.0);
}

TEST(Ybus, ShuntsSplitBetweenEnds) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.lines[0].y_shunt_siemens(0, 0) = {0.0, 0.04};
  const Feeder f = Feeder::build(d);
  const Eigen::MatrixXcd Y = build_ybus(f);
  const std::size_t n = *f.index_of(1, Phase::kA);
  EXPECT_NEAR(std::abs(Y.row(n).sum() - Complex(0.0, 0.02)), 0.0, 1e-12);
}

TEST(Ybus, BundledIsExactlySymmetric) {
  const Feeder f = bundled_feeder();
  const Eigen::MatrixXcd Y = build_ybus(f);
  EXPECT_TRUE((Y.array() == Y.transpose().array()).all());
}

TEST(Ybus, BundledRowSumsEqualShuntTotals) {
  const Feeder f = bundled_feeder();
  const Eigen::MatrixXcd Y = build_ybus(f);
  // independent accumulation of the half shunts each line places at its ends
  Eigen::VectorXcd expected = Eigen::VectorXcd::Zero(Y.rows());
  for (const Line& l : f.lines())
    for (std::size_t end : {l.from, l.to})
      for (Phase r : kAllPhases) {
        if (!l.phases.has(r)) continue;
        const std::size_t i = *f.index_of(f.buses()[end].id, r);
        for (Phase c : kAllPhases)
          if (l.phases.has(c)) expected[i] += 0.5 * l.y_shunt(static_cast<int>(r), static_cast<int>(c));
      }
  const double scale = Y.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < Y.rows(); ++i) EXPECT_LT(std::abs(Y.row(i).sum() - expected[i]), 1e-12 * scale) << i;
}

TEST(Zbus, TwoNodeIsScalarInverse) {
  const Complex z(0.01, 0.02);
  const Feeder f = Feeder::build(two_bus_desc(z));
  const Eigen::MatrixXcd Z = build_zbus(f);
  ASSERT_EQ(Z.rows(), 1);
  EXPECT_NEAR(std::abs(Z(0, 0) - z), 0.0, 1e-14);
}

TEST(Zbus, BundledMultipliesBackToIdentity) {
  const Feeder f = bundled_feeder();
  const Eigen::MatrixXcd Y = build_ybus(f);
  const Eigen::MatrixXcd Z = build_zbus(f, Y);
  const auto ns = f.non_slack_nodes();
  const auto n = static_cast<Eigen::Index>(ns.size());
  Eigen::MatrixXcd Ynn(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) Ynn(i, j) = Y(ns[i], ns[j]);
  const double r = (Z * Ynn - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
  EXPECT_LT(r, 1e-10);
}

TEST(Zbus, IsolatedNodePhaseIsSingular) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.buses[1].phases = PhaseSet::parse("ab");  // phase b has no line
  try {
    build_zbus(Feeder::build(d));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kNumerical);
    EXPECT_NE(std::string(e.what()).find("1.b"), std::string::npos) << e.what();
  }
}

TEST(PerUnit, ImpedanceBase) {
  PerUnitBase b{0.5};
  EXPECT_DOUBLE_EQ(b.impedance_base_ohm(2.0), 8.0);
  EXPECT_DOUBLE_EQ(b.power_to_pu(0.25), 0.5);
  EXPECT_DOUBLE_EQ(b.power_from_pu(0.5), 0.25);
}
