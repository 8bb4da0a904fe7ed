#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gamp/errors.hpp"
#include "gamp/sim.hpp"

using namespace gamp;
using namespace gamp::sim;

namespace {

constexpr double kPi = 3.14159265358979323846;

SimState standing_state(const BipedModel& m) {
  SimState s;
  s.q = m.default_pose();
  return s;
}

}  // namespace

TEST(Kinematics, DefaultPoseFeetOnGround) {
  BipedModel m;
  const BodyPoints b = fk(m, m.default_pose());
  for (int leg = 0; leg < 2; ++leg) {
    EXPECT_NEAR(b.heel[leg].y(), 0.0, 1e-9);
    EXPECT_NEAR(b.toe[leg].y(), 0.0, 1e-9);
  }
  const auto h = foot_heights(m, m.default_pose());
  EXPECT_NEAR(h[0], 0.0, 1e-9);
  EXPECT_NEAR(h[1], 0.0, 1e-9);
  // Independent check: hip height is the sum of the vertical leg projections.
  const double z = m.thigh_length * std::cos(m.stand_hip) + m.shank_length * std::cos(m.stand_hip - m.stand_knee);
  EXPECT_NEAR(m.default_pose()[kRootZ], z, 1e-12);
}

TEST(Kinematics, RootTranslationMovesEveryPoint) {
  BipedModel m;
  Vec9 q = m.default_pose();
  const ContactPoints a = contact_points(fk(m, q));
  q[kRootX] += 1.0;
  const ContactPoints b = contact_points(fk(m, q));
  for (int i = 0; i < kNumContactPoints; ++i) {
    EXPECT_NEAR(b[i].x() - a[i].x(), 1.0, 1e-12);
    EXPECT_NEAR(b[i].y(), a[i].y(), 1e-12);
  }
}

TEST(Kinematics, InvertedTorsoPointsDown) {
  BipedModel m;
  Vec9 q = m.default_pose();
  q[kPitch] = kPi;
  const BodyPoints b = fk(m, q);
  EXPECT_LT(b.torso_top.y(), b.hip.y());
}

TEST(Kinematics, JacobianMatchesDifferencedPositions) {
  BipedModel m;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec9 q = m.default_pose();
    Vec9 qd;
    for (int i = 0; i < kNumCoords; ++i) {
      q[i] += 0.3 * u(rng);
      qd[i] = u(rng);
    }
    const auto jac = contact_jacobians(m, q);
    const double dt = m.dt_phys;
    const ContactPoints a = contact_points(fk(m, q + dt * qd));
    const ContactPoints b = contact_points(fk(m, q - dt * qd));
    for (int c = 0; c < kNumContactPoints; ++c) {
      const Eigen::Vector2d fd = (a[c] - b[c]) / (2 * dt);
      const Eigen::Vector2d jv = jac[c] * qd;
      EXPECT_LT((fd - jv).norm() / std::max(1.0, jv.norm()), 1e-4);
    }
  }
}

TEST(Gravity, ProjectedGravityAnchors) {
  EXPECT_NEAR(projected_gravity(0.0)[0], 0.0, 1e-15);
  EXPECT_NEAR(projected_gravity(0.0)[1], -1.0, 1e-15);
  EXPECT_NEAR(projected_gravity(kPi / 2)[0], 1.0, 1e-15);
  EXPECT_NEAR(projected_gravity(kPi / 2)[1], 0.0, 1e-15);
  EXPECT_NEAR(projected_gravity(kPi)[1], 1.0, 1e-15);
  EXPECT_NEAR(projected_gravity(0.7).norm(), 1.0, 1e-15);
}

TEST(Gravity, RootForceIsWeight) {
  BipedModel m;
  const Vec9 f = gravity_force(m, m.default_pose());
  EXPECT_NEAR(f[kRootZ], -m.total_mass() * m.gravity, 1e-6);
  EXPECT_NEAR(f[kRootX], 0.0, 1e-6);
}

TEST(Pd, FormulaAndSaturation) {
  BipedModel m;
  const Vec6 q = Vec6::Constant(0.2);
  EXPECT_EQ(pd_torque(m, q, q, Vec6::Zero()), Vec6::Zero());
  m.kp.setConstant(50.0);
  const Vec6 tau = pd_torque(m, q + Vec6::Constant(0.1), q, Vec6::Zero());
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(tau[j], 5.0, 1e-12);
  const Vec6 sat = pd_torque(m, q + Vec6::Constant(100.0), q, Vec6::Zero());
  for (int j = 0; j < 6; ++j) EXPECT_EQ(sat[j], m.torque_limit);
}

TEST(Contact, StaticPenetrationForce) {
  BipedModel m;
  const ContactForce f = contact_force(0.01, 0.0, 0.0, 0.0, m.contact_damping, m.friction_damping, m);
  EXPECT_NEAR(f.normal, 200.0, 1e-9);
  EXPECT_EQ(f.tangential, 0.0);
  EXPECT_EQ(contact_force(-0.01, 0.0, 0.0, 0.0, 500, 200, m).normal, 0.0);
  // Fast separation never pulls.
  EXPECT_EQ(contact_force(0.001, 10.0, 0.0, 0.0, 500, 200, m).normal, 0.0);
  // Friction is capped at mu * N.
  const ContactForce slip = contact_force(0.01, 0.0, 1.0, 0.0, 500, 200, m);
  EXPECT_NEAR(std::abs(slip.tangential), m.friction_coefficient * slip.normal, 1e-9);
  EXPECT_TRUE(slip.slipping);
}

// Semi-implicit Euler under constant acceleration has the closed form
// z_k = z_0 + v_0 k dt - g dt^2 k (k + 1) / 2 after k substeps.
TEST(Step, FreeFallMatchesClosedForm) {
  BipedModel m;
  m.contacts_enabled = false;
  SimState s = standing_state(m);
  s.q[kRootZ] += 1.0;
  s.qd[kRootX] = 0.7;
  const double z0 = s.q[kRootZ], x0 = s.q[kRootX];
  const double dt = m.dt_phys;
  for (int n = 1; n <= 20; ++n) {
    s = step(m, s, Vec6::Zero());
    const double k = n * m.substeps;
    const double drop = m.gravity * dt * dt * k * (k + 1) / 2;
    EXPECT_LT(std::abs((z0 - s.q[kRootZ]) - drop) / drop, 1e-6) << "step " << n;
    EXPECT_LT(std::abs(s.q[kRootX] - (x0 + 0.7 * k * dt)), 1e-9);
    EXPECT_NEAR(s.qd[kRootX], 0.7, 1e-12);
  }
}

TEST(Step, StandingHold) {
  BipedModel m;
  SimState s = standing_state(m);
  const double h = m.standing_height();
  for (int n = 0; n < 100; ++n) {
    s = step(m, s, Vec6::Zero());
    ASSERT_LT(std::abs(s.q[kRootZ] - h), 0.05) << "step " << n;
  }
  std::mt19937_64 rng(0);
  for (int seed = 0; seed < 5; ++seed) {
    SimState r = reset(m, ResetMode::kUpright, 0.0, rng);
    for (int n = 0; n < 100; ++n) r = step(m, r, Vec6::Zero());
    EXPECT_LT(std::abs(r.q[kRootZ] - h), 0.05);
  }
}

TEST(Step, DeterministicAndChainsActions) {
  BipedModel m;
  std::mt19937_64 rng(3);
  const SimState s = reset(m, ResetMode::kUpright, 0.5, rng);
  const Vec6 a = Vec6::Constant(0.4);
  const SimState x = step(m, s, a), y = step(m, s, a);
  EXPECT_EQ(x.q, y.q);
  EXPECT_EQ(x.qd, y.qd);
  EXPECT_EQ(x.prev_action, m.action_scale * a);
  const SimState z = step(m, x, Vec6::Constant(2.0));
  EXPECT_EQ(z.prev_prev_action, x.prev_action);
  EXPECT_EQ(z.prev_action, Vec6::Constant(m.action_scale));  // clipped to 1
  EXPECT_NEAR(z.time, 2 * m.dt_ctrl(), 1e-12);
}

TEST(Step, JointsStayWithinLimits) {
  BipedModel m;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SimState s = reset(m, ResetMode::kProne, 0.0, rng);
  for (int n = 0; n < 200; ++n) {
    Vec6 a;
    for (int j = 0; j < 6; ++j) a[j] = u(rng);
    s = step(m, s, a);
    for (int j = 0; j < 6; ++j) {
      EXPECT_GE(s.q[kLeftHip + j], m.joint_lower[j]);
      EXPECT_LE(s.q[kLeftHip + j], m.joint_upper[j]);
    }
  }
}

TEST(Step, NonFiniteActionReportsCoordinate) {
  BipedModel m;
  SimState s = standing_state(m);
  Vec6 a = Vec6::Zero();
  a[2] = std::nan("");
  try {
    step(m, s, a);
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.coordinate(), kLeftHip + 2);
  }
}

TEST(Step, BlowUpNamesCoordinate) {
  BipedModel m;
  m.contacts_enabled = false;
  SimState s = standing_state(m);
  s.qd[kRootX] = std::numeric_limits<double>::infinity();
  try {
    step(m, s, Vec6::Zero());
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.coordinate(), kRootX);
  }
}

TEST(Reset, Modes) {
  BipedModel m;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const SimState up = reset(m, ResetMode::kUpright, 0.3, rng);
    EXPECT_LE(std::abs(up.q[kPitch]), 0.1);
    EXPECT_EQ(up.command, 0.3);
    EXPECT_EQ(up.qd, Vec9::Zero());
    for (int j = 0; j < 6; ++j) EXPECT_LE(std::abs(up.q[kLeftHip + j] - m.default_pose()[kLeftHip + j]), 0.05 + 1e-12);
    const SimState pr = reset(m, ResetMode::kProne, 0.0, rng);
    EXPECT_NEAR(pr.q[kPitch], 1.45, 0.1 + 1e-12);
    EXPECT_DOUBLE_EQ(pr.q[kRootZ], 0.15);
    const SimState su = reset(m, ResetMode::kSupine, 0.0, rng);
    EXPECT_NEAR(su.q[kPitch], -1.45, 0.1 + 1e-12);
    EXPECT_LT(su.q[kPitch], 0.0);
  }
  EXPECT_EQ(reset_mode_from_name(reset_mode_name(ResetMode::kSupine)), ResetMode::kSupine);
  EXPECT_THROW(reset_mode_from_name("sideways"), ConfigError);
}

TEST(Observation, FrameLayout) {
  BipedModel m;
  SimState s = standing_state(m);
  ObsFrame f = make_obs_frame(m, s);
  ObsFrame expect = ObsFrame::Zero();
  expect[2] = -1.0;
  EXPECT_LT((f - expect).cwiseAbs().maxCoeff(), 1e-15);
  s.command = 1.0;
  s.qd[kPitch] = 2.0;
  f = make_obs_frame(m, s);
  EXPECT_EQ(f[3], 1.0);
  EXPECT_EQ(f[0], 2.0);
}

TEST(Observation, AssembleAndShift) {
  BipedModel m;
  std::deque<ObsFrame> h(4, ObsFrame::Constant(1.5));
  const Observation o = assemble_observation(h);
  EXPECT_EQ(o.size(), 88);
  EXPECT_EQ(o, Observation::Constant(1.5));
  h.pop_back();
  EXPECT_THROW(assemble_observation(h), DimensionError);

  BipedEnv env(m);
  std::mt19937_64 rng(6);
  Observation prev = env.reset(ResetMode::kUpright, 0.2, rng);
  for (int k = 0; k < 3; ++k)
    EXPECT_EQ(prev.segment<kObsFrameDim>(k * kObsFrameDim), prev.tail<kObsFrameDim>());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = 0; n < 50; ++n) {
    Vec6 a;
    for (int j = 0; j < 6; ++j) a[j] = u(rng);
    const Observation next = env.step(a);
    EXPECT_EQ(next.segment<66>(0), prev.segment<66>(22));
    EXPECT_EQ(next.tail<kObsFrameDim>(), make_obs_frame(m, env.state()));
    prev = next;
  }
}
