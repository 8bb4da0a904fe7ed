#pragma once

#include <array>
#include <deque>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace gamp::sim {

inline constexpr int kNumCoords = 9;
inline constexpr int kNumJoints = 6;
inline constexpr int kObsFrameDim = 22;
inline constexpr int kHistory = 4;
inline constexpr int kObsDim = kObsFrameDim * kHistory;

// Generalized coordinate layout.
enum Coord : int {
  kRootX = 0,
  kRootZ = 1,
  kPitch = 2,
  kLeftHip = 3,
  kLeftKnee = 4,
  kLeftAnkle = 5,
  kRightHip = 6,
  kRightKnee = 7,
  kRightAnkle = 8,
};

using Vec9 = Eigen::Matrix<double, kNumCoords, 1>;
using Vec6 = Eigen::Matrix<double, kNumJoints, 1>;
using ObsFrame = Eigen::Matrix<double, kObsFrameDim, 1>;
using Observation = Eigen::Matrix<double, kObsDim, 1>;

// Sagittal-plane biped with a diagonal effective inertia per coordinate.
// Angles: pitch 0 is upright, positive leans the torso forward (+x). Hip
// flexion swings the thigh forward, knee flexion folds the shank back and
// ankle flexion lifts the toe.
struct BipedModel {
  double torso_length = 0.5;
  double thigh_length = 0.4;
  double shank_length = 0.4;
  double foot_length = 0.12;  // ankle to toe lever
  double heel_length = 0.05;  // ankle to heel lever

  // Lumped link masses. They sum to the root translational inertia so that
  // the root falls at exactly g when nothing else acts.
  double torso_mass = 6.0;
  double thigh_mass = 1.5;
  double shank_mass = 1.0;
  double foot_mass = 0.5;

  Vec9 inertia = (Vec9() << 12.0, 12.0, 1.5, 0.3, 0.2, 0.1, 0.3, 0.2, 0.1).finished();
  Vec6 joint_lower = (Vec6() << -0.8, 0.0, -0.8, -0.8, 0.0, -0.8).finished();
  Vec6 joint_upper = (Vec6() << 2.2, 2.4, 0.8, 2.2, 2.4, 0.8).finished();
  Vec6 kp = (Vec6() << 120.0, 300.0, 120.0, 120.0, 300.0, 120.0).finished();
  Vec6 kd = (Vec6() << 4.0, 4.0, 4.0, 4.0, 4.0, 4.0).finished();
  double torque_limit = 80.0;
  // Fraction of the hip motor torques fed back onto the torso pitch. The
  // diagonal inertia drops the coupling that would carry it otherwise.
  double hip_reaction = 1.0;

  // Standing pose; root height is derived so both soles rest on the ground.
  double stand_hip = 0.3;
  double stand_knee = 0.6;

  double gravity = 9.81;
  double contact_stiffness = 2e4;
  double contact_damping = 500.0;
  double friction_coefficient = 1.0;
  // Tangential spring to the point where the contact stuck, plus damping,
  // capped at friction_coefficient * normal force (slip moves the anchor).
  double friction_stiffness = 1e4;
  double friction_damping = 200.0;
  bool contacts_enabled = true;

  double dt_phys = 0.002;
  int substeps = 10;
  double action_scale = 0.5;
  double gravity_fd_step = 1e-6;
  double jacobian_fd_step = 1e-6;

  double dt_ctrl() const { return dt_phys * substeps; }
  double total_mass() const { return torso_mass + 2.0 * (thigh_mass + shank_mass + foot_mass); }
  Vec9 default_pose() const;
  double standing_height() const;
  // Throws ConfigError when a constant is non-physical.
  void validate() const;
};

// World-frame body points from forward kinematics. Index 0 is the left leg.
struct BodyPoints {
  Eigen::Vector2d torso_top;
  Eigen::Vector2d torso_bottom;
  Eigen::Vector2d hip;
  std::array<Eigen::Vector2d, 2> knee;
  std::array<Eigen::Vector2d, 2> ankle;
  std::array<Eigen::Vector2d, 2> heel;
  std::array<Eigen::Vector2d, 2> toe;
};

BodyPoints fk(const BipedModel& model, const Vec9& q);

// Points that can touch the ground: torso top, hip, knees, heels, toes.
inline constexpr int kNumContactPoints = 8;
using ContactPoints = std::array<Eigen::Vector2d, kNumContactPoints>;
ContactPoints contact_points(const BodyPoints& body);
// Index of the heel/toe contact points of leg `leg` within ContactPoints.
inline constexpr int heel_index(int leg) { return 4 + leg; }
inline constexpr int toe_index(int leg) { return 6 + leg; }

// Height of the lowest sole point (heel or toe) of each leg.
std::array<double, 2> foot_heights(const BipedModel& model, const Vec9& q);

double potential_energy(const BipedModel& model, const Vec9& q);
// -dU/dq by central differences.
Vec9 gravity_force(const BipedModel& model, const Vec9& q);
// 2x9 position Jacobians of every contact point by central differences.
std::array<Eigen::Matrix<double, 2, kNumCoords>, kNumContactPoints> contact_jacobians(
    const BipedModel& model, const Vec9& q);

struct SimState {
  Vec9 q = Vec9::Zero();
  Vec9 qd = Vec9::Zero();
  double time = 0.0;
  Vec6 prev_action = Vec6::Zero();       // last joint-target offsets, rad
  Vec6 prev_prev_action = Vec6::Zero();
  double command = 0.0;                  // commanded forward velocity, m/s
  std::array<bool, 2> foot_contact{false, false};
  // Stick anchors of the contact points currently touching the ground.
  std::array<double, kNumContactPoints> anchor_x{};
  std::array<bool, kNumContactPoints> anchored{};
};

// (sin pitch, -cos pitch): gravity direction in the body frame.
Eigen::Vector2d projected_gravity(double pitch);
inline Eigen::Vector2d projected_gravity(const SimState& s) { return projected_gravity(s.q[kPitch]); }

Vec6 pd_torque(const BipedModel& model, const Vec6& target, const Vec6& q, const Vec6& qd);

// Force at one contact point. penetration > 0 when below ground; slip is the
// horizontal offset from the stick anchor. Damping gains are passed in
// already scaled by the caller. The tangential force is capped at mu * normal.
struct ContactForce {
  double normal = 0.0;
  double tangential = 0.0;
  bool slipping = false;
};
ContactForce contact_force(double penetration, double normal_velocity, double slip,
                           double tangential_velocity, double normal_damping,
                           double tangential_damping, const BipedModel& model);

struct StepInfo {
  Vec6 torques = Vec6::Zero();  // applied at the last substep
  std::array<bool, 2> foot_contact{false, false};
  std::array<bool, kNumContactPoints> point_contact{};
  double max_normal_force = 0.0;
};

// Advances one control period. action is in policy units and is clipped to
// [-1, 1], then mapped to joint targets q_default + action_scale * action.
// Throws IntegrationError on a non-finite result.
SimState step(const BipedModel& model, const SimState& state, const Vec6& action,
              StepInfo* info = nullptr);

enum class ResetMode { kUpright, kProne, kSupine };
const char* reset_mode_name(ResetMode m);
ResetMode reset_mode_from_name(const std::string& name);

SimState reset(const BipedModel& model, ResetMode mode, double command, std::mt19937_64& rng);

ObsFrame make_obs_frame(const BipedModel& model, const SimState& state);

// history must hold exactly kHistory frames, oldest first.
Observation assemble_observation(const std::deque<ObsFrame>& history);

// Owns one environment: state plus its observation history.
class BipedEnv {
 public:
  explicit BipedEnv(const BipedModel& model) : model_(model) {}

  const Observation& reset(ResetMode mode, double command, std::mt19937_64& rng);
  const Observation& step(const Vec6& action, StepInfo* info = nullptr);
  // Takes effect from the next observation frame.
  void set_command(double command) { state_.command = command; }

  const SimState& state() const { return state_; }
  const Observation& observation() const { return obs_; }
  const BipedModel& model() const { return model_; }
  int steps_in_episode() const { return steps_; }

 private:
  void push_frame();

  BipedModel model_;
  SimState state_;
  std::deque<ObsFrame> history_;
  Observation obs_ = Observation::Zero();
  int steps_ = 0;
};

}  // namespace gamp::sim
