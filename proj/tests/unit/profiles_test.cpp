#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "voltreg/error.hpp"
#include "voltreg/operating_point.hpp"
#include "voltreg/profiles.hpp"

using namespace voltreg;
using voltreg::testing::bundled_feeder;
using voltreg::testing::scratch_dir;
using voltreg::testing::two_bus_desc;

namespace {

SyntheticProfileConfig few_days() {
  SyntheticProfileConfig c;
  c.days = 8;
  return c;
}

bool same_step(const ProfileStep& a, const ProfileStep& b) {
  return a.load_p_mw == b.load_p_mw && a.load_q_mvar == b.load_q_mvar && a.pv_p_mw == b.pv_p_mw;
}

}  // namespace

TEST(Shapes, Ranges) {
  for (double h = 0.0; h < 24.0; h += 0.25) {
    EXPECT_GE(load_shape(h), 0.0);
    EXPECT_LE(load_shape(h), 1.0);
    EXPECT_GE(pv_shape(h), 0.0);
    EXPECT_LE(pv_shape(h), 1.0);
  }
  EXPECT_EQ(pv_shape(2.0), 0.0);
  EXPECT_EQ(pv_shape(23.0), 0.0);
  EXPECT_GT(pv_shape(12.5), 0.9);
}

TEST(Synthetic, ShapeAndDeterminism) {
  const Feeder f = bundled_feeder();
  const ProfileSet a = synthesize_profiles(f, few_days(), 5);
  const ProfileSet b = synthesize_profiles(f, few_days(), 5);
  const ProfileSet c = synthesize_profiles(f, few_days(), 6);
  ASSERT_EQ(a.day_count(), 8u);
  EXPECT_EQ(a.steps_per_day(), 24u);
  bool differs = false;
  for (std::size_t d = 0; d < 8; ++d)
    for (std::size_t t = 0; t < 24; ++t) {
      EXPECT_TRUE(same_step(a.at(d, t), b.at(d, t)));
      differs = differs || !same_step(a.at(d, t), c.at(d, t));
      const ProfileStep& s = a.at(d, t);
      ASSERT_EQ(s.load_p_mw.size(), f.loads().size());
      ASSERT_EQ(s.pv_p_mw.size(), f.pvs().size());
      for (std::size_t k = 0; k < f.pvs().size(); ++k) {
        EXPECT_GE(s.pv_p_mw[k], 0.0);
        EXPECT_LE(s.pv_p_mw[k], f.base().power_from_pu(f.pvs()[k].p_rated) + 1e-12);
      }
      for (double p : s.load_p_mw) EXPECT_GE(p, 0.0);
    }
  EXPECT_TRUE(differs);
}

TEST(Synthetic, LoadReactiveFollowsPowerFactor) {
  const Feeder f = bundled_feeder();
  const ProfileSet a = synthesize_profiles(f, few_days(), 5);
  const double ratio = std::tan(std::acos(0.95));
  const ProfileStep& s = a.at(2, 18);
  for (std::size_t k = 0; k < s.load_p_mw.size(); ++k) EXPECT_NEAR(s.load_q_mvar[k], s.load_p_mw[k] * ratio, 1e-12);
}

TEST(ProfileCsv, RoundTrip) {
  const Feeder f = bundled_feeder();
  const ProfileSet a = synthesize_profiles(f, few_days(), 5);
  const auto dir = scratch_dir("profiles_csv");
  write_profile_csv(dir / "p.csv", f, a);
  const ProfileSet b = read_profile_csv(dir / "p.csv", f);
  ASSERT_EQ(b.day_count(), a.day_count());
  EXPECT_EQ(b.day_ids, a.day_ids);
  for (std::size_t d = 0; d < a.day_count(); ++d)
    for (std::size_t t = 0; t < 24; ++t) EXPECT_TRUE(same_step(a.at(d, t), b.at(d, t)));
}

TEST(FastRamp, Triangle) {
  const Feeder f = bundled_feeder();
  const ProfileSet r = make_fast_ramp_profile(f, {});
  ASSERT_EQ(r.day_count(), 1u);
  ASSERT_EQ(r.steps_per_day(), 60u);
  EXPECT_EQ(r.step_column, "second");
  EXPECT_DOUBLE_EQ(r.at(0, 0).pv_p_mw[0], 0.6);
  EXPECT_DOUBLE_EQ(r.at(0, 30).pv_p_mw[0], 0.3);
  EXPECT_DOUBLE_EQ(r.at(0, 59).pv_p_mw[0], 0.6);
  for (std::size_t t = 1; t <= 30; ++t) EXPECT_LT(r.at(0, t).pv_p_mw[0], r.at(0, t - 1).pv_p_mw[0]);
  EXPECT_EQ(r.at(0, 0).load_p_mw, r.at(0, 45).load_p_mw);
}

TEST(OperatingPoint, PvHeadroomExample) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.pvs.push_back({1, Phase::kA, 0.6, 0.66});
  d.svcs.push_back({1, Phase::kA, -0.3, 0.3});
  const Feeder f = Feeder::build(d);
  const State s = make_state(f, ProfileStep{{}, {}, {0.6}}, 12);
  const std::vector<double> full{1.0, 0.0};
  const Setpoints sp = denormalize_action(f, s, full);
  EXPECT_NEAR(sp.q_pv[0], std::sqrt(0.66 * 0.66 - 0.6 * 0.6), 1e-15);
  EXPECT_NEAR(sp.q_pv[0], 0.27495, 5e-6);
  EXPECT_EQ(sp.q_svc[0], 0.0);  // midpoint of a symmetric box

  const State night = make_state(f, ProfileStep{{}, {}, {0.0}}, 2);
  EXPECT_DOUBLE_EQ(denormalize_action(f, night, full).q_pv[0], 0.66);
}

TEST(OperatingPoint, ActionsSaturate) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.svcs.push_back({1, Phase::kA, -0.2, 0.4});
  const Feeder f = Feeder::build(d);
  const State s = make_state(f, ProfileStep{}, 0);
  EXPECT_DOUBLE_EQ(denormalize_action(f, s, std::vector<double>{5.0}).q_svc[0], 0.4);
  EXPECT_DOUBLE_EQ(denormalize_action(f, s, std::vector<double>{-5.0}).q_svc[0], -0.2);
  EXPECT_NEAR(denormalize_action(f, s, zero_reactive_action(f)).q_svc[0], 0.0, 1e-15);
  EXPECT_THROW(denormalize_action(f, s, std::vector<double>{0.0, 0.0}), Error);
}

TEST(OperatingPoint, NetInjectionSigns) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.pvs.push_back({1, Phase::kA, 0.6, 0.66});
  d.loads.push_back({1, Phase::kA, 0.4, 0.1});
  const Feeder f = Feeder::build(d);
  const State s = make_state(f, ProfileStep{{0.5}, {0.2}, {0.3}}, 9);
  Setpoints sp;
  sp.q_pv = {0.05};
  const Injection inj = net_injection(f, s, sp);
  const auto n = static_cast<Eigen::Index>(*f.index_of(1, Phase::kA));
  EXPECT_DOUBLE_EQ(inj.p[n], 0.3 - 0.5);
  EXPECT_DOUBLE_EQ(inj.q[n], 0.05 - 0.2);
  EXPECT_EQ(s.flatten(f).size(), static_cast<Eigen::Index>(state_dim(f)));
}

TEST(OperatingPoint, PvOutputClippedToRating) {
  FeederDesc d = two_bus_desc({0.01, 0.02});
  d.pvs.push_back({1, Phase::kA, 0.6, 0.66});
  const Feeder f = Feeder::build(d);
  EXPECT_DOUBLE_EQ(make_state(f, ProfileStep{{}, {}, {0.9}}, 0).pv_output[0], 0.6);
}
