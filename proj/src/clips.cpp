#include "gamp/clips.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gamp/errors.hpp"

namespace gamp::clips {

namespace {

constexpr double kPi = 3.14159265358979323846;
using sim::kNumJoints;

void check_timing(double fps, double duration) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ConfigError("clip fps must be positive");
  if (!(duration > 0.0) || !std::isfinite(duration))
    throw ConfigError("clip duration must be positive");
}

int frame_count(double fps, double duration) {
  return std::max(2, static_cast<int>(std::lround(fps * duration)));
}

MotionClip generate_gait(const GaitConfig& cfg, const sim::BipedModel& model,
                         BehaviorTag tag, const std::string& name) {
  check_timing(cfg.fps, cfg.duration);
  if (!(cfg.frequency > 0.0)) throw ConfigError("gait frequency must be positive");
  const int per_cycle = frames_per_cycle(cfg);
  const double freq = cfg.fps / per_cycle;
  const double leg = model.thigh_length + model.shank_length;
  const double speed = 4.0 * leg * std::sin(cfg.hip_amplitude) * freq * cfg.stride_scale;
  const double stand_z = model.standing_height();

  MotionClip clip;
  clip.name = name;
  clip.fps = cfg.fps;
  clip.behavior_tag = tag;
  const int n = frame_count(cfg.fps, cfg.duration);
  clip.frames.reserve(n);
  for (int i = 0; i < n; ++i) {
    // Phase in whole frames so the gait repeats exactly every per_cycle frames.
    const double phase = 2.0 * kPi * static_cast<double>(i % per_cycle) / per_cycle;
    ClipFrame f;
    f.root_x = speed * i / cfg.fps;
    f.root_z = stand_z + cfg.height_offset - cfg.bob_amplitude * std::cos(2.0 * phase);
    f.pitch = cfg.lean;
    for (int side = 0; side < 2; ++side) {
      const double psi = phase + side * kPi;
      const double hip = model.stand_hip + cfg.hip_amplitude * std::sin(psi);
      // Knee folds while the hip swings forward (cos psi > 0).
      const double swing = std::max(0.0, std::cos(psi));
      const double knee = cfg.knee_base + cfg.knee_swing * swing * swing;
      // Keep the sole parallel to the ground.
      const double ankle = knee - hip + f.pitch;
      const int o = 3 * side;
      f.joint_pos[o + 0] = std::clamp(hip, model.joint_lower[o + 0], model.joint_upper[o + 0]);
      f.joint_pos[o + 1] = std::clamp(knee, model.joint_lower[o + 1], model.joint_upper[o + 1]);
      f.joint_pos[o + 2] = std::clamp(ankle, model.joint_lower[o + 2], model.joint_upper[o + 2]);
    }
    clip.frames.push_back(f);
  }
  return clip;
}

struct Keyframe {
  double time;
  double root_z;
  double pitch;
  double hip;
  double knee;
  double ankle;
};

// Cubic Hermite with zero end tangents: monotone between keyframes.
double ease(double a, double b, double s) { return a + (b - a) * s * s * (3.0 - 2.0 * s); }

std::string frame_context(const MotionClip& clip, int i) {
  return "clip '" + clip.name + "' frame " + std::to_string(i);
}

}  // namespace

const char* behavior_tag_name(BehaviorTag tag) {
  switch (tag) {
    case BehaviorTag::kWalk: return "walk";
    case BehaviorTag::kRun: return "run";
    case BehaviorTag::kGetupProne: return "getup_prone";
    case BehaviorTag::kGetupSupine: return "getup_supine";
  }
  return "unknown";
}

BehaviorTag behavior_tag_from_name(const std::string& name) {
  for (auto t : {BehaviorTag::kWalk, BehaviorTag::kRun, BehaviorTag::kGetupProne,
                 BehaviorTag::kGetupSupine})
    if (name == behavior_tag_name(t)) return t;
  throw ParseError("unknown behavior_tag '" + name + "'");
}

sim::Vec9 ClipFrame::as_coords() const {
  sim::Vec9 q;
  q << root_x, root_z, pitch, joint_pos[0], joint_pos[1], joint_pos[2], joint_pos[3],
      joint_pos[4], joint_pos[5];
  return q;
}

ClipFrame ClipFrame::from_coords(const sim::Vec9& q) {
  ClipFrame f;
  f.root_x = q[sim::kRootX];
  f.root_z = q[sim::kRootZ];
  f.pitch = q[sim::kPitch];
  for (int j = 0; j < kNumJoints; ++j) f.joint_pos[j] = q[sim::kLeftHip + j];
  return f;
}

double MotionClip::nominal_speed() const {
  if (frames.size() < 2) return 0.0;
  return (frames.back().root_x - frames.front().root_x) * fps /
         static_cast<double>(frames.size() - 1);
}

void validate_clip(const MotionClip& clip, const sim::BipedModel& model) {
  constexpr double kTol = 1e-9;
  if (!(clip.fps > 0.0) || !std::isfinite(clip.fps))
    throw ValidationError("clip '" + clip.name + "': fps must be positive");
  if (clip.frames.size() < 2)
    throw ValidationError("clip '" + clip.name + "': needs at least 2 frames, has " +
                          std::to_string(clip.frames.size()));
  for (int i = 0; i < clip.size(); ++i) {
    const ClipFrame& f = clip.frames[i];
    if (!f.as_coords().allFinite())
      throw ValidationError(frame_context(clip, i) + ": non-finite value");
    if (f.root_z < 0.0)
      throw ValidationError(frame_context(clip, i) + ": root_z below ground");
    for (int j = 0; j < kNumJoints; ++j) {
      if (f.joint_pos[j] < model.joint_lower[j] - kTol ||
          f.joint_pos[j] > model.joint_upper[j] + kTol)
        throw ValidationError(frame_context(clip, i) + ": joint " + std::to_string(j) +
                              " outside limits");
    }
    if (i > 0) {
      for (int j = 0; j < kNumJoints; ++j) {
        if (std::abs(f.joint_pos[j] - clip.frames[i - 1].joint_pos[j]) > kContinuityBound)
          throw ValidationError(frame_context(clip, i) + ": joint " + std::to_string(j) +
                                " jumps more than the continuity bound");
      }
    }
  }
}

GaitConfig default_walk_config() { return GaitConfig{}; }

GaitConfig default_run_config() {
  GaitConfig c;
  c.frequency = 2.6;
  c.hip_amplitude = 0.3;
  c.knee_base = 0.5;
  c.knee_swing = 1.3;
  c.stride_scale = 1.2;
  c.height_offset = -0.06;
  c.bob_amplitude = 0.03;
  c.lean = 0.12;
  return c;
}

int frames_per_cycle(const GaitConfig& cfg) {
  return std::max(2, static_cast<int>(std::lround(cfg.fps / cfg.frequency)));
}

MotionClip generate_walk_clip(const GaitConfig& cfg, const sim::BipedModel& model) {
  return generate_gait(cfg, model, BehaviorTag::kWalk, "walk");
}

MotionClip generate_run_clip(const GaitConfig& cfg, const sim::BipedModel& model) {
  return generate_gait(cfg, model, BehaviorTag::kRun, "run");
}

MotionClip generate_getup_clip(BehaviorTag start, const GetupConfig& cfg,
                               const sim::BipedModel& model) {
  check_timing(cfg.fps, cfg.duration);
  const double stand_z = model.standing_height();
  const double stand_ankle = model.stand_knee - model.stand_hip;
  std::vector<Keyframe> keys;
  if (start == BehaviorTag::kGetupProne) {
    // Face down: tuck the knees under, push back onto the feet, rise.
    keys = {{0.0, 0.15, 1.45, 0.0, 0.1, 0.0},
            {0.8, 0.25, 1.20, 1.4, 2.2, 0.3},
            {1.6, 0.35, 0.70, 1.9, 2.3, 0.6},
            {2.4, 0.55, 0.30, 1.0, 1.4, 0.6},
            {3.2, stand_z, 0.0, model.stand_hip, model.stand_knee, stand_ankle}};
  } else if (start == BehaviorTag::kGetupSupine) {
    // Face up: sit up with the legs as counterweight, fold the feet under, rise.
    keys = {{0.0, 0.15, -1.45, 0.0, 0.1, 0.0},
            {0.8, 0.20, -0.60, 1.3, 0.6, 0.0},
            {1.6, 0.25, 0.20, 1.9, 2.3, 0.5},
            {2.4, 0.50, 0.40, 1.3, 1.6, 0.6},
            {3.2, stand_z, 0.0, model.stand_hip, model.stand_knee, stand_ankle}};
  } else {
    throw ConfigError(std::string("get-up clip needs a prone or supine start, got '") +
                      behavior_tag_name(start) + "'");
  }

  MotionClip clip;
  clip.name = start == BehaviorTag::kGetupProne ? "getup_prone" : "getup_supine";
  clip.fps = cfg.fps;
  clip.behavior_tag = start;
  const int n = frame_count(cfg.fps, cfg.duration);
  for (int i = 0; i < n; ++i) {
    const double t = i / cfg.fps;
    std::size_t k = 0;
    while (k + 1 < keys.size() && keys[k + 1].time <= t) ++k;
    const Keyframe& a = keys[k];
    const Keyframe& b = k + 1 < keys.size() ? keys[k + 1] : keys[k];
    const double s = k + 1 < keys.size() ? (t - a.time) / (b.time - a.time) : 0.0;
    ClipFrame f;
    f.root_x = 0.0;
    f.root_z = ease(a.root_z, b.root_z, s);
    f.pitch = ease(a.pitch, b.pitch, s);
    const std::array<double, 3> joint{ease(a.hip, b.hip, s), ease(a.knee, b.knee, s),
                                      ease(a.ankle, b.ankle, s)};
    for (int j = 0; j < kNumJoints; ++j)
      f.joint_pos[j] = std::clamp(joint[j % 3], model.joint_lower[j], model.joint_upper[j]);
    clip.frames.push_back(f);
  }
  return clip;
}

std::string clip_to_text(const MotionClip& clip) {
  nlohmann::ordered_json doc;
  doc["name"] = clip.name;
  doc["fps"] = clip.fps;
  doc["behavior_tag"] = behavior_tag_name(clip.behavior_tag);
  nlohmann::json frames = nlohmann::json::array();
  for (const ClipFrame& f : clip.frames) {
    nlohmann::json row = nlohmann::json::array({f.root_x, f.root_z, f.pitch});
    for (double v : f.joint_pos) row.push_back(v);
    frames.push_back(std::move(row));
  }
  doc["frames"] = std::move(frames);
  // One frame per line keeps diffs readable.
  std::ostringstream out;
  out << "{\n";
  out << "  \"name\": " << doc["name"].dump() << ",\n";
  out << "  \"fps\": " << doc["fps"].dump() << ",\n";
  out << "  \"behavior_tag\": " << doc["behavior_tag"].dump() << ",\n";
  out << "  \"frames\": [\n";
  for (std::size_t i = 0; i < doc["frames"].size(); ++i) {
    out << "    " << doc["frames"][i].dump() << (i + 1 < doc["frames"].size() ? ",\n" : "\n");
  }
  out << "  ]\n}\n";
  return out.str();
}

MotionClip clip_from_text(const std::string& text, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!doc.is_object() || !doc.contains(key))
      throw ParseError(source + ": missing field '" + key + "'");
    return doc.at(key);
  };
  MotionClip clip;
  const auto& name = field("name");
  const auto& fps = field("fps");
  const auto& tag = field("behavior_tag");
  const auto& frames = field("frames");
  if (!name.is_string()) throw ParseError(source + ": field 'name' must be a string");
  if (!fps.is_number()) throw ParseError(source + ": field 'fps' must be a number");
  if (!tag.is_string()) throw ParseError(source + ": field 'behavior_tag' must be a string");
  if (!frames.is_array()) throw ParseError(source + ": field 'frames' must be an array");
  for (const auto& [key, value] : doc.items()) {
    if (key != "name" && key != "fps" && key != "behavior_tag" && key != "frames")
      throw ParseError(source + ": unknown field '" + key + "'");
  }
  clip.name = name.get<std::string>();
  clip.fps = fps.get<double>();
  try {
    clip.behavior_tag = behavior_tag_from_name(tag.get<std::string>());
  } catch (const ParseError& e) {
    throw ParseError(source + ": field 'behavior_tag': " + e.what());
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& row = frames[i];
    if (!row.is_array() || row.size() != 3 + kNumJoints) {
      throw ParseError(source + ": frames[" + std::to_string(i) + "]: expected " +
                       std::to_string(3 + kNumJoints) + " numbers, got " +
                       (row.is_array() ? std::to_string(row.size()) : std::string("non-array")));
    }
    std::array<double, 3 + kNumJoints> v{};
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!row[k].is_number())
        throw ParseError(source + ": frames[" + std::to_string(i) + "][" + std::to_string(k) +
                         "] is not a number");
      v[k] = row[k].get<double>();
    }
    ClipFrame f;
    f.root_x = v[0];
    f.root_z = v[1];
    f.pitch = v[2];
    std::copy(v.begin() + 3, v.end(), f.joint_pos.begin());
    clip.frames.push_back(f);
  }
  return clip;
}

void save_clip(const MotionClip& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open clip file for writing: " + path);
  out << clip_to_text(clip);
  if (!out) throw Error("failed writing clip file: " + path);
}

MotionClip load_clip(const std::string& path, const sim::BipedModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open clip file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  MotionClip clip = clip_from_text(buf.str(), path);
  validate_clip(clip, model);
  return clip;
}

FeatureVec feature_from_state(const sim::BipedModel& model, const sim::Vec9& q,
                              const sim::Vec9& qd) {
  FeatureVec f;
  const Eigen::Vector2d g = sim::projected_gravity(q[sim::kPitch]);
  const auto feet = sim::foot_heights(model, q);
  f[0] = g.x();
  f[1] = g.y();
  f[2] = q[sim::kRootZ];
  f[3] = qd[sim::kRootX];
  f[4] = qd[sim::kRootZ];
  f[5] = qd[sim::kPitch];
  f.segment<kNumJoints>(6) = q.tail<kNumJoints>();
  f.segment<kNumJoints>(12) = qd.tail<kNumJoints>();
  f[18] = feet[0];
  f[19] = feet[1];
  return f;
}

FeatureVec clip_feature(const sim::BipedModel& model, const MotionClip& clip, int frame_index) {
  if (frame_index < 0 || frame_index + 1 >= clip.size()) {
    throw DimensionError("clip '" + clip.name + "': feature index " +
                         std::to_string(frame_index) + " outside [0, " +
                         std::to_string(clip.size() - 1) + ")");
  }
  const sim::Vec9 q = clip.frames[frame_index].as_coords();
  const sim::Vec9 qd = (clip.frames[frame_index + 1].as_coords() - q) * clip.fps;
  return feature_from_state(model, q, qd);
}

Transition sample_transition(const sim::BipedModel& model, const MotionClip& clip,
                             std::mt19937_64& rng) {
  if (clip.size() < 3)
    throw ValidationError("clip '" + clip.name + "' needs at least 3 frames to sample from");
  std::uniform_int_distribution<int> pick(0, clip.size() - 3);
  const int i = pick(rng);
  return {clip_feature(model, clip, i), clip_feature(model, clip, i + 1), std::nullopt};
}

Transition sample_reference_loco(const sim::BipedModel& model, const MotionClip& walk,
                                 const MotionClip& run, double v_hat, std::mt19937_64& rng,
                                 bool* used_run) {
  if (!(v_hat >= 0.0 && v_hat <= 1.0))
    throw ValidationError("locomotion condition must lie in [0, 1], got " + std::to_string(v_hat));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool use_run = coin(rng) < v_hat;
  if (used_run) *used_run = use_run;
  Transition t = sample_transition(model, use_run ? run : walk, rng);
  t.condition = v_hat;
  return t;
}

Transition sample_from_pool(const sim::BipedModel& model, const std::vector<MotionClip>& pool,
                            std::mt19937_64& rng) {
  if (pool.empty()) throw ValidationError("reference clip pool is empty");
  long total = 0;
  for (const auto& c : pool) total += std::max(0, c.size() - 2);
  if (total <= 0) throw ValidationError("reference clip pool has no sampleable transitions");
  std::uniform_int_distribution<long> pick(0, total - 1);
  long r = pick(rng);
  for (const auto& c : pool) {
    const long n = std::max(0, c.size() - 2);
    if (r < n) return sample_transition(model, c, rng);
    r -= n;
  }
  return sample_transition(model, pool.back(), rng);
}

}  // namespace gamp::clips
