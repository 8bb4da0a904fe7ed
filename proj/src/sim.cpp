#include "gamp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gamp/errors.hpp"

namespace gamp::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Unit vector at absolute angle `a` from the downward vertical, positive
// rotating toward +x.
Eigen::Vector2d down_dir(double a) { return {std::sin(a), -std::cos(a)}; }

struct LegPoints {
  Eigen::Vector2d knee, ankle, heel, toe;
};

LegPoints leg_points(const BipedModel& m, const Eigen::Vector2d& hip, double pitch,
                     double hip_angle, double knee_angle, double ankle_angle) {
  const double thigh = hip_angle - pitch;
  const double shank = thigh - knee_angle;
  LegPoints p;
  p.knee = hip + m.thigh_length * down_dir(thigh);
  p.ankle = p.knee + m.shank_length * down_dir(shank);
  const double foot = shank + ankle_angle;
  const Eigen::Vector2d sole(std::cos(foot), std::sin(foot));
  p.toe = p.ankle + m.foot_length * sole;
  p.heel = p.ankle - m.heel_length * sole;
  return p;
}

}  // namespace

Vec9 BipedModel::default_pose() const {
  Vec9 q = Vec9::Zero();
  q[kRootZ] = standing_height();
  for (int leg = 0; leg < 2; ++leg) {
    q[kLeftHip + 3 * leg] = stand_hip;
    q[kLeftKnee + 3 * leg] = stand_knee;
    // Foot flat: shank angle plus ankle angle is zero.
    q[kLeftAnkle + 3 * leg] = stand_knee - stand_hip;
  }
  return q;
}

double BipedModel::standing_height() const {
  return thigh_length * std::cos(stand_hip) + shank_length * std::cos(stand_hip - stand_knee);
}

void BipedModel::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(std::string("model constant '") + name + "' must be positive");
  };
  positive(torso_length, "torso_length");
  positive(thigh_length, "thigh_length");
  positive(shank_length, "shank_length");
  positive(foot_length, "foot_length");
  positive(heel_length, "heel_length");
  positive(torso_mass, "torso_mass");
  positive(thigh_mass, "thigh_mass");
  positive(shank_mass, "shank_mass");
  positive(foot_mass, "foot_mass");
  positive(gravity, "gravity");
  positive(contact_stiffness, "contact_stiffness");
  positive(contact_damping, "contact_damping");
  positive(friction_coefficient, "friction_coefficient");
  positive(friction_damping, "friction_damping");
  positive(friction_stiffness, "friction_stiffness");
  positive(torque_limit, "torque_limit");
  if (!(hip_reaction >= 0.0) || !std::isfinite(hip_reaction))
    throw ConfigError("model constant 'hip_reaction' must be non-negative");
  positive(dt_phys, "dt_phys");
  positive(action_scale, "action_scale");
  if (substeps <= 0) throw ConfigError("model constant 'substeps' must be positive");
  for (int i = 0; i < kNumCoords; ++i) positive(inertia[i], "inertia");
  for (int j = 0; j < kNumJoints; ++j) {
    positive(kp[j], "kp");
    positive(kd[j], "kd");
    if (!(joint_lower[j] < joint_upper[j]))
      throw ConfigError("joint limits must satisfy lower < upper");
  }
}

BodyPoints fk(const BipedModel& m, const Vec9& q) {
  BodyPoints b;
  const Eigen::Vector2d root(q[kRootX], q[kRootZ]);
  const double pitch = q[kPitch];
  b.hip = root;
  b.torso_bottom = root;
  b.torso_top = root + m.torso_length * Eigen::Vector2d(std::sin(pitch), std::cos(pitch));
  for (int leg = 0; leg < 2; ++leg) {
    const int o = 3 * leg;
    const LegPoints p = leg_points(m, root, pitch, q[kLeftHip + o], q[kLeftKnee + o],
                                   q[kLeftAnkle + o]);
    b.knee[leg] = p.knee;
    b.ankle[leg] = p.ankle;
    b.heel[leg] = p.heel;
    b.toe[leg] = p.toe;
  }
  return b;
}

ContactPoints contact_points(const BodyPoints& b) {
  return {b.torso_top, b.hip, b.knee[0], b.knee[1], b.heel[0], b.heel[1], b.toe[0], b.toe[1]};
}

std::array<double, 2> foot_heights(const BipedModel& model, const Vec9& q) {
  const BodyPoints b = fk(model, q);
  return {std::min(b.heel[0].y(), b.toe[0].y()), std::min(b.heel[1].y(), b.toe[1].y())};
}

double potential_energy(const BipedModel& m, const Vec9& q) {
  const BodyPoints b = fk(m, q);
  double height_mass = m.torso_mass * 0.5 * (b.torso_top.y() + b.torso_bottom.y());
  for (int leg = 0; leg < 2; ++leg) {
    height_mass += m.thigh_mass * 0.5 * (b.hip.y() + b.knee[leg].y());
    height_mass += m.shank_mass * 0.5 * (b.knee[leg].y() + b.ankle[leg].y());
    height_mass += m.foot_mass * 0.5 * (b.heel[leg].y() + b.toe[leg].y());
  }
  return m.gravity * height_mass;
}

Vec9 gravity_force(const BipedModel& m, const Vec9& q) {
  Vec9 f;
  const double h = m.gravity_fd_step;
  for (int i = 0; i < kNumCoords; ++i) {
    Vec9 qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    f[i] = -(potential_energy(m, qp) - potential_energy(m, qm)) / (2.0 * h);
  }
  return f;
}

std::array<Eigen::Matrix<double, 2, kNumCoords>, kNumContactPoints> contact_jacobians(
    const BipedModel& m, const Vec9& q) {
  std::array<Eigen::Matrix<double, 2, kNumCoords>, kNumContactPoints> jac;
  const double h = m.jacobian_fd_step;
  for (int i = 0; i < kNumCoords; ++i) {
    Vec9 qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    const ContactPoints pp = contact_points(fk(m, qp));
    const ContactPoints pm = contact_points(fk(m, qm));
    for (int c = 0; c < kNumContactPoints; ++c) jac[c].col(i) = (pp[c] - pm[c]) / (2.0 * h);
  }
  return jac;
}

Eigen::Vector2d projected_gravity(double pitch) { return {std::sin(pitch), -std::cos(pitch)}; }

Vec6 pd_torque(const BipedModel& m, const Vec6& target, const Vec6& q, const Vec6& qd) {
  Vec6 tau = m.kp.cwiseProduct(target - q) - m.kd.cwiseProduct(qd);
  return tau.cwiseMax(-m.torque_limit).cwiseMin(m.torque_limit);
}

ContactForce contact_force(double penetration, double normal_velocity, double slip,
                           double tangential_velocity, double normal_damping,
                           double tangential_damping, const BipedModel& m) {
  ContactForce f;
  if (penetration <= 0.0) return f;
  f.normal = std::max(0.0, m.contact_stiffness * penetration - normal_damping * normal_velocity);
  const double cap = m.friction_coefficient * f.normal;
  const double stick = -m.friction_stiffness * slip - tangential_damping * tangential_velocity;
  f.tangential = std::clamp(stick, -cap, cap);
  f.slipping = std::abs(stick) > cap;
  return f;
}

SimState step(const BipedModel& m, const SimState& s, const Vec6& action, StepInfo* info) {
  for (int j = 0; j < kNumJoints; ++j)
    if (!std::isfinite(action[j]))
      throw IntegrationError("non-finite action component " + std::to_string(j), kLeftHip + j);

  const Vec6 offsets = m.action_scale * action.cwiseMax(-1.0).cwiseMin(1.0);
  const Vec6 target = m.default_pose().tail<kNumJoints>() + offsets;
  const double dt = m.dt_phys;

  SimState next = s;
  Vec9& q = next.q;
  Vec9& qd = next.qd;
  Vec6 tau = Vec6::Zero();
  std::array<bool, kNumContactPoints> touching{};
  double max_normal = 0.0;

  for (int sub = 0; sub < m.substeps; ++sub) {
    tau = pd_torque(m, target, q.tail<kNumJoints>(), qd.tail<kNumJoints>());
    Vec9 force = gravity_force(m, q);
    force.tail<kNumJoints>() += tau;
    force[kPitch] += m.hip_reaction * (tau[0] + tau[3]);

    touching.fill(false);
    if (m.contacts_enabled) {
      const ContactPoints pts = contact_points(fk(m, q));
      bool any = false;
      for (const auto& p : pts) any = any || p.y() < 0.0;
      if (!any) next.anchored.fill(false);
      if (any) {
        const auto jac = contact_jacobians(m, q);
        for (int c = 0; c < kNumContactPoints; ++c) {
          if (pts[c].y() >= 0.0) {
            next.anchored[c] = false;
            continue;
          }
          if (!next.anchored[c]) {
            next.anchored[c] = true;
            next.anchor_x[c] = pts[c].x();
          }
          const Eigen::Vector2d v = jac[c] * qd;
          // Scale damping by the point's effective mobility so one substep
          // cannot reverse the velocity it is damping.
          const double w_t = jac[c].row(0).cwiseAbs2().dot(m.inertia.cwiseInverse());
          const double w_n = jac[c].row(1).cwiseAbs2().dot(m.inertia.cwiseInverse());
          const double c_n = m.contact_damping / (1.0 + m.contact_damping * dt * w_n);
          const double c_t = m.friction_damping / (1.0 + m.friction_damping * dt * w_t);
          const double slip = pts[c].x() - next.anchor_x[c];
          const ContactForce cf = contact_force(-pts[c].y(), v.y(), slip, v.x(), c_n, c_t, m);
          // Slipping drags the anchor so the spring sits exactly at the cap.
          if (cf.slipping) next.anchor_x[c] = pts[c].x() + cf.tangential / m.friction_stiffness;
          force += jac[c].transpose() * Eigen::Vector2d(cf.tangential, cf.normal);
          touching[c] = true;
          max_normal = std::max(max_normal, cf.normal);
        }
      }
    }

    qd += dt * force.cwiseQuotient(m.inertia);
    q += dt * qd;
    for (int j = 0; j < kNumJoints; ++j) {
      const int i = kLeftHip + j;
      if (q[i] < m.joint_lower[j]) {
        q[i] = m.joint_lower[j];
        qd[i] = std::max(qd[i], 0.0);
      } else if (q[i] > m.joint_upper[j]) {
        q[i] = m.joint_upper[j];
        qd[i] = std::min(qd[i], 0.0);
      }
    }
  }

  for (int i = 0; i < kNumCoords; ++i) {
    if (!std::isfinite(q[i]) || !std::isfinite(qd[i])) {
      std::ostringstream msg;
      msg << "integration blow-up at t=" << s.time << " in coordinate " << i;
      throw IntegrationError(msg.str(), i);
    }
  }
  q[kPitch] = std::remainder(q[kPitch], 2.0 * kPi);

  next.prev_prev_action = s.prev_action;
  next.prev_action = offsets;
  next.time = s.time + m.dt_ctrl();
  for (int leg = 0; leg < 2; ++leg)
    next.foot_contact[leg] = touching[heel_index(leg)] || touching[toe_index(leg)];
  if (info) {
    info->torques = tau;
    info->foot_contact = next.foot_contact;
    info->point_contact = touching;
    info->max_normal_force = max_normal;
  }
  return next;
}

const char* reset_mode_name(ResetMode m) {
  switch (m) {
    case ResetMode::kUpright: return "upright";
    case ResetMode::kProne: return "prone";
    case ResetMode::kSupine: return "supine";
  }
  return "unknown";
}

ResetMode reset_mode_from_name(const std::string& name) {
  for (auto m : {ResetMode::kUpright, ResetMode::kProne, ResetMode::kSupine})
    if (name == reset_mode_name(m)) return m;
  throw ConfigError("unknown reset mode '" + name + "'");
}

SimState reset(const BipedModel& m, ResetMode mode, double command, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> joint_noise(-0.05, 0.05);
  std::uniform_real_distribution<double> pitch_noise(-0.1, 0.1);
  SimState s;
  s.command = command;
  s.q = m.default_pose();
  if (mode == ResetMode::kUpright) {
    for (int j = 0; j < kNumJoints; ++j) s.q[kLeftHip + j] += joint_noise(rng);
    s.q[kPitch] = pitch_noise(rng);
    // Rest the lowest point on the ground.
    double lowest = 1e9;
    for (const auto& p : contact_points(fk(m, s.q))) lowest = std::min(lowest, p.y());
    s.q[kRootZ] -= lowest;
  } else {
    // Lying with legs roughly in line with the torso.
    const double sign = mode == ResetMode::kProne ? 1.0 : -1.0;
    s.q[kPitch] = sign * 1.45 + pitch_noise(rng);
    s.q[kRootZ] = 0.15;
    for (int leg = 0; leg < 2; ++leg) {
      s.q[kLeftHip + 3 * leg] = 0.0 + joint_noise(rng);
      s.q[kLeftKnee + 3 * leg] = 0.1 + joint_noise(rng);
      s.q[kLeftAnkle + 3 * leg] = 0.0 + joint_noise(rng);
    }
  }
  for (int j = 0; j < kNumJoints; ++j)
    s.q[kLeftHip + j] = std::clamp(s.q[kLeftHip + j], m.joint_lower[j], m.joint_upper[j]);
  return s;
}

ObsFrame make_obs_frame(const BipedModel& m, const SimState& s) {
  ObsFrame f;
  const Eigen::Vector2d g = projected_gravity(s.q[kPitch]);
  f[0] = s.qd[kPitch];
  f[1] = g.x();
  f[2] = g.y();
  f[3] = s.command;
  f.segment<kNumJoints>(4) = s.q.tail<kNumJoints>() - m.default_pose().tail<kNumJoints>();
  f.segment<kNumJoints>(10) = s.qd.tail<kNumJoints>();
  f.segment<kNumJoints>(16) = s.prev_action;
  return f;
}

Observation assemble_observation(const std::deque<ObsFrame>& history) {
  if (history.size() != static_cast<std::size_t>(kHistory)) {
    throw DimensionError("observation history needs " + std::to_string(kHistory) +
                         " frames, got " + std::to_string(history.size()));
  }
  Observation o;
  for (int k = 0; k < kHistory; ++k) o.segment<kObsFrameDim>(k * kObsFrameDim) = history[k];
  return o;
}

const Observation& BipedEnv::reset(ResetMode mode, double command, std::mt19937_64& rng) {
  state_ = sim::reset(model_, mode, command, rng);
  steps_ = 0;
  history_.assign(kHistory, make_obs_frame(model_, state_));
  obs_ = assemble_observation(history_);
  return obs_;
}

const Observation& BipedEnv::step(const Vec6& action, StepInfo* info) {
  state_ = sim::step(model_, state_, action, info);
  ++steps_;
  push_frame();
  return obs_;
}

void BipedEnv::push_frame() {
  history_.pop_front();
  history_.push_back(make_obs_frame(model_, state_));
  obs_ = assemble_observation(history_);
}

}  // namespace gamp::sim
