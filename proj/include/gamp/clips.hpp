#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamp/sim.hpp"

namespace gamp::clips {

inline constexpr int kFeatureDim = 20;
using FeatureVec = Eigen::Matrix<double, kFeatureDim, 1>;

// Max joint displacement between consecutive clip frames, rad.
inline constexpr double kContinuityBound = 0.5;

enum class BehaviorTag { kWalk, kRun, kGetupProne, kGetupSupine };
const char* behavior_tag_name(BehaviorTag tag);
BehaviorTag behavior_tag_from_name(const std::string& name);

struct ClipFrame {
  double root_x = 0.0;
  double root_z = 0.0;
  double pitch = 0.0;
  // left hip, left knee, left ankle, right hip, right knee, right ankle
  std::array<double, sim::kNumJoints> joint_pos{};

  sim::Vec9 as_coords() const;
  static ClipFrame from_coords(const sim::Vec9& q);
  bool operator==(const ClipFrame&) const = default;
};

struct MotionClip {
  std::string name;
  double fps = 50.0;
  std::vector<ClipFrame> frames;
  BehaviorTag behavior_tag = BehaviorTag::kWalk;

  int size() const { return static_cast<int>(frames.size()); }
  double duration() const { return frames.size() / fps; }
  // Mean forward root speed over the clip, m/s.
  double nominal_speed() const;
  bool operator==(const MotionClip&) const = default;
};

// Throws ValidationError naming the clip and the first offending frame.
void validate_clip(const MotionClip& clip, const sim::BipedModel& model);

struct GaitConfig {
  double frequency = 1.4;        // Hz; snapped so one cycle spans whole frames
  double hip_amplitude = 0.22;   // rad
  double knee_base = 0.4;        // rad
  double knee_swing = 0.7;       // rad of extra flexion during swing
  double stride_scale = 1.0;     // >1 models a flight phase lengthening the stride
  double height_offset = 0.0;    // m relative to standing height
  double bob_amplitude = 0.01;   // m, twice per cycle
  double lean = 0.02;            // rad forward pitch
  double fps = 50.0;
  double duration = 4.0;         // s
};

GaitConfig default_walk_config();
GaitConfig default_run_config();

struct GetupConfig {
  double fps = 50.0;
  double duration = 4.0;  // s; the final keyframe is held until the end
};

// Frames per gait cycle after snapping the configured frequency.
int frames_per_cycle(const GaitConfig& cfg);

MotionClip generate_walk_clip(const GaitConfig& cfg, const sim::BipedModel& model);
MotionClip generate_run_clip(const GaitConfig& cfg, const sim::BipedModel& model);
MotionClip generate_getup_clip(BehaviorTag start, const GetupConfig& cfg,
                               const sim::BipedModel& model);

// Clip file: JSON object {name, fps, behavior_tag, frames: [[9 numbers]...]}.
// Numbers are written with round-trip precision so load(save(c)) == c.
std::string clip_to_text(const MotionClip& clip);
MotionClip clip_from_text(const std::string& text, const std::string& source = "<text>");
void save_clip(const MotionClip& clip, const std::string& path);
// Parses and validates against the model's limits.
MotionClip load_clip(const std::string& path, const sim::BipedModel& model);

// AMP feature of a pose with known velocities. Layout: projected gravity (2),
// root height, root velocity x/z, pitch rate, joint positions (6), joint
// velocities (6), foot heights (2).
FeatureVec feature_from_state(const sim::BipedModel& model, const sim::Vec9& q,
                              const sim::Vec9& qd);

// Feature at frame i with velocities by forward differences to frame i+1.
FeatureVec clip_feature(const sim::BipedModel& model, const MotionClip& clip, int frame_index);

struct Transition {
  FeatureVec feat_t;
  FeatureVec feat_t1;
  std::optional<double> condition;
};

// Uniform over start indices [0, len-2).
Transition sample_transition(const sim::BipedModel& model, const MotionClip& clip,
                             std::mt19937_64& rng);

// Walk with probability 1 - v_hat, run with probability v_hat; the
// returned transition carries v_hat as its condition. used_run, when given,
// reports which clip was drawn.
Transition sample_reference_loco(const sim::BipedModel& model, const MotionClip& walk,
                                 const MotionClip& run, double v_hat, std::mt19937_64& rng,
                                 bool* used_run = nullptr);

// Picks a clip with probability proportional to its transition count, then
// samples from it.
Transition sample_from_pool(const sim::BipedModel& model, const std::vector<MotionClip>& pool,
                            std::mt19937_64& rng);

}  // namespace gamp::clips
