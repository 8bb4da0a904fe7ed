#include "gamp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "gamp/errors.hpp"

namespace gamp::harness {

namespace {

using nlohmann::json;

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(child(key) + ": " + e.what());
    }
  }

  template <int N>
  void get_vec(const char* key, Eigen::Matrix<double, N, 1>& out) {
    std::vector<double> v(out.data(), out.data() + N);
    get(key, v);
    if (static_cast<int>(v.size()) != N)
      throw ConfigError(child(key) + ": expected " + std::to_string(N) + " numbers");
    for (int i = 0; i < N; ++i) out[i] = v[i];
  }

  void skip(const char* key) { seen_.insert(key); }

  Section sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty() : *it, child(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + child(it.key()) + "'");
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <int N>
std::vector<double> to_vec(const Eigen::Matrix<double, N, 1>& v) {
  return std::vector<double>(v.data(), v.data() + N);
}

void read_rewards(Section s, rewards::RewardWeights& w) {
  s.get("w_v", w.w_v);
  s.get("w_s", w.w_s);
  s.get("w_p", w.w_p);
  s.get("w_e", w.w_e);
  s.get("w_f", w.w_f);
  s.get("sigma_v", w.sigma_v);
  s.get("sigma_p", w.sigma_p);
  s.get("energy_scale", w.energy_scale);
  s.get("fall_height", w.fall_height);
  s.finish();
}

json rewards_json(const rewards::RewardWeights& w) {
  return {{"w_v", w.w_v},         {"w_s", w.w_s},
          {"w_p", w.w_p},         {"w_e", w.w_e},
          {"w_f", w.w_f},         {"sigma_v", w.sigma_v},
          {"sigma_p", w.sigma_p}, {"energy_scale", w.energy_scale},
          {"fall_height", w.fall_height}};
}

void read_gait(Section s, clips::GaitConfig& g) {
  s.get("frequency", g.frequency);
  s.get("hip_amplitude", g.hip_amplitude);
  s.get("knee_base", g.knee_base);
  s.get("knee_swing", g.knee_swing);
  s.get("stride_scale", g.stride_scale);
  s.get("height_offset", g.height_offset);
  s.get("bob_amplitude", g.bob_amplitude);
  s.get("lean", g.lean);
  s.get("fps", g.fps);
  s.get("duration", g.duration);
  s.finish();
}

json write_gait(const clips::GaitConfig& g) {
  return {{"frequency", g.frequency},         {"hip_amplitude", g.hip_amplitude},
          {"knee_base", g.knee_base},         {"knee_swing", g.knee_swing},
          {"stride_scale", g.stride_scale},   {"height_offset", g.height_offset},
          {"bob_amplitude", g.bob_amplitude}, {"lean", g.lean},
          {"fps", g.fps},                     {"duration", g.duration}};
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  model.validate();
  rewards.validate();
  if (rewards_rec) rewards_rec->validate();
  amp.validate();
  gate.validate();
  discriminator.validate();
  ppo.validate();
  commands.validate();
  init.validate();
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("iterations", c.iterations);
  root.get("output_dir", c.output_dir);
  root.get("single_thread", c.single_thread);
  root.get("threads", c.threads);
  root.get("checkpoint_every", c.checkpoint_every);

  {
    Section s = root.sub("model");
    sim::BipedModel& m = c.model;
    s.get("torso_length", m.torso_length);
    s.get("thigh_length", m.thigh_length);
    s.get("shank_length", m.shank_length);
    s.get("foot_length", m.foot_length);
    s.get("heel_length", m.heel_length);
    s.get("torso_mass", m.torso_mass);
    s.get("thigh_mass", m.thigh_mass);
    s.get("shank_mass", m.shank_mass);
    s.get("foot_mass", m.foot_mass);
    s.get_vec("inertia", m.inertia);
    s.get_vec("joint_lower", m.joint_lower);
    s.get_vec("joint_upper", m.joint_upper);
    s.get_vec("kp", m.kp);
    s.get_vec("kd", m.kd);
    s.get("torque_limit", m.torque_limit);
    s.get("hip_reaction", m.hip_reaction);
    s.get("stand_hip", m.stand_hip);
    s.get("stand_knee", m.stand_knee);
    s.get("gravity", m.gravity);
    s.get("contact_stiffness", m.contact_stiffness);
    s.get("contact_damping", m.contact_damping);
    s.get("friction_coefficient", m.friction_coefficient);
    s.get("friction_stiffness", m.friction_stiffness);
    s.get("friction_damping", m.friction_damping);
    s.get("dt_phys", m.dt_phys);
    s.get("substeps", m.substeps);
    s.get("action_scale", m.action_scale);
    s.finish();
  }
  read_rewards(root.sub("rewards"), c.rewards);
  if (auto it = j.find("rewards_rec"); it != j.end() && !it->is_null()) {
    // Unset keys fall back to the shared weights.
    rewards::RewardWeights w = c.rewards;
    read_rewards(root.sub("rewards_rec"), w);
    c.rewards_rec = w;
  } else {
    root.skip("rewards_rec");
  }
  {
    Section s = root.sub("amp");
    s.get("lambda_amp", c.amp.lambda_amp);
    s.get("v_max", c.amp.v_max);
    s.finish();
  }
  {
    Section s = root.sub("gate");
    s.get("threshold", c.gate.threshold);
    s.finish();
  }
  {
    Section s = root.sub("discriminator");
    std::string act = nets::activation_name(c.discriminator.activation);
    s.get("hidden", c.discriminator.hidden);
    s.get("activation", act);
    s.get("learning_rate", c.discriminator.learning_rate);
    s.get("lambda_gp", c.discriminator.lambda_gp);
    s.get("reward_epsilon", c.discriminator.reward_epsilon);
    s.finish();
    try {
      c.discriminator.activation = nets::activation_from_name(act);
    } catch (const Error& e) {
      throw ConfigError(std::string("discriminator.activation: ") + e.what());
    }
  }
  {
    Section s = root.sub("ppo");
    ppo::PpoConfig& p = c.ppo;
    s.get("gamma", p.gamma);
    s.get("lambda_gae", p.lambda_gae);
    s.get("clip_ratio", p.clip_ratio);
    s.get("epochs", p.epochs);
    s.get("minibatches", p.minibatches);
    s.get("value_coef", p.value_coef);
    s.get("entropy_coef", p.entropy_coef);
    s.get("learning_rate", p.learning_rate);
    s.get("max_grad_norm", p.max_grad_norm);
    s.get("horizon", p.horizon);
    s.get("num_envs", p.num_envs);
    s.get("hidden", p.hidden);
    s.get("init_log_std", p.init_log_std);
    s.get("log_std_min", p.log_std_min);
    s.get("log_std_max", p.log_std_max);
    s.get("policy_output_gain", p.policy_output_gain);
    s.finish();
  }
  {
    Section s = root.sub("commands");
    s.get("normal_min", c.commands.normal_min);
    s.get("normal_max", c.commands.normal_max);
    s.get("fast_min", c.commands.fast_min);
    s.get("fast_max", c.commands.fast_max);
    s.get("fast_probability", c.commands.fast_probability);
    s.finish();
  }
  {
    Section s = root.sub("init");
    s.get("upright", c.init.upright);
    s.get("prone", c.init.prone);
    s.get("supine", c.init.supine);
    s.get("episode_length", c.init.episode_length);
    s.finish();
  }
  {
    Section s = root.sub("clips");
    read_gait(s.sub("walk"), c.clips.walk);
    read_gait(s.sub("run"), c.clips.run);
    Section g = s.sub("getup");
    g.get("fps", c.clips.getup.fps);
    g.get("duration", c.clips.getup.duration);
    g.finish();
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  const sim::BipedModel& m = c.model;
  const rewards::RewardWeights& w = c.rewards;
  const ppo::PpoConfig& p = c.ppo;
  json j;
  j["seed"] = c.seed;
  j["iterations"] = c.iterations;
  j["output_dir"] = c.output_dir;
  j["single_thread"] = c.single_thread;
  j["threads"] = c.threads;
  j["checkpoint_every"] = c.checkpoint_every;
  j["model"] = {{"torso_length", m.torso_length},
                {"thigh_length", m.thigh_length},
                {"shank_length", m.shank_length},
                {"foot_length", m.foot_length},
                {"heel_length", m.heel_length},
                {"torso_mass", m.torso_mass},
                {"thigh_mass", m.thigh_mass},
                {"shank_mass", m.shank_mass},
                {"foot_mass", m.foot_mass},
                {"inertia", to_vec(m.inertia)},
                {"joint_lower", to_vec(m.joint_lower)},
                {"joint_upper", to_vec(m.joint_upper)},
                {"kp", to_vec(m.kp)},
                {"kd", to_vec(m.kd)},
                {"torque_limit", m.torque_limit},
                {"hip_reaction", m.hip_reaction},
                {"stand_hip", m.stand_hip},
                {"stand_knee", m.stand_knee},
                {"gravity", m.gravity},
                {"contact_stiffness", m.contact_stiffness},
                {"contact_damping", m.contact_damping},
                {"friction_coefficient", m.friction_coefficient},
                {"friction_stiffness", m.friction_stiffness},
                {"friction_damping", m.friction_damping},
                {"dt_phys", m.dt_phys},
                {"substeps", m.substeps},
                {"action_scale", m.action_scale}};
  j["rewards"] = rewards_json(w);
  j["rewards_rec"] = c.rewards_rec ? rewards_json(*c.rewards_rec) : json(nullptr);
  j["amp"] = {{"lambda_amp", c.amp.lambda_amp}, {"v_max", c.amp.v_max}};
  j["gate"] = {{"threshold", c.gate.threshold}};
  j["discriminator"] = {{"hidden", c.discriminator.hidden},
                        {"activation", nets::activation_name(c.discriminator.activation)},
                        {"learning_rate", c.discriminator.learning_rate},
                        {"lambda_gp", c.discriminator.lambda_gp},
                        {"reward_epsilon", c.discriminator.reward_epsilon}};
  j["ppo"] = {{"gamma", p.gamma},
              {"lambda_gae", p.lambda_gae},
              {"clip_ratio", p.clip_ratio},
              {"epochs", p.epochs},
              {"minibatches", p.minibatches},
              {"value_coef", p.value_coef},
              {"entropy_coef", p.entropy_coef},
              {"learning_rate", p.learning_rate},
              {"max_grad_norm", p.max_grad_norm},
              {"horizon", p.horizon},
              {"num_envs", p.num_envs},
              {"hidden", p.hidden},
              {"init_log_std", p.init_log_std},
              {"log_std_min", p.log_std_min},
              {"log_std_max", p.log_std_max},
              {"policy_output_gain", p.policy_output_gain}};
  j["commands"] = {{"normal_min", c.commands.normal_min},
                   {"normal_max", c.commands.normal_max},
                   {"fast_min", c.commands.fast_min},
                   {"fast_max", c.commands.fast_max},
                   {"fast_probability", c.commands.fast_probability}};
  j["init"] = {{"upright", c.init.upright},
               {"prone", c.init.prone},
               {"supine", c.init.supine},
               {"episode_length", c.init.episode_length}};
  j["clips"] = {{"walk", write_gait(c.clips.walk)},
                {"run", write_gait(c.clips.run)},
                {"getup", {{"fps", c.clips.getup.fps}, {"duration", c.clips.getup.duration}}}};
  return j;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace gamp::harness
