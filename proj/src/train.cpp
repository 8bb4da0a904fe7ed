#include "gamp/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gamp/errors.hpp"

namespace gamp::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json mlp_to_json(const nets::MlpParams& p) {
  json j;
  j["layer_dims"] = p.layer_dims;
  j["hidden_activation"] = nets::activation_name(p.hidden_activation);
  j["output_activation"] = nets::activation_name(p.output_activation);
  j["weights"] = json::array();
  j["biases"] = json::array();
  for (int l = 0; l < p.num_layers(); ++l) {
    std::vector<double> w;
    w.reserve(p.weights[l].size());
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) w.push_back(p.weights[l](r, c));
    j["weights"].push_back(w);
    j["biases"].push_back(std::vector<double>(p.biases[l].data(), p.biases[l].data() + p.biases[l].size()));
  }
  return j;
}

nets::MlpParams mlp_from_json(const json& j) {
  nets::MlpParams p;
  p.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  p.hidden_activation = nets::activation_from_name(j.at("hidden_activation").get<std::string>());
  p.output_activation = nets::activation_from_name(j.at("output_activation").get<std::string>());
  const auto& ws = j.at("weights");
  const auto& bs = j.at("biases");
  if (p.layer_dims.size() < 2 || ws.size() + 1 != p.layer_dims.size() || bs.size() != ws.size())
    throw ParseError("checkpoint network: layer count mismatch");
  for (std::size_t l = 0; l < ws.size(); ++l) {
    const auto w = ws[l].get<std::vector<double>>();
    const auto b = bs[l].get<std::vector<double>>();
    const int out = p.layer_dims[l + 1], in = p.layer_dims[l];
    if (static_cast<int>(w.size()) != out * in || static_cast<int>(b.size()) != out)
      throw ParseError("checkpoint network: layer " + std::to_string(l) + " size mismatch");
    Eigen::MatrixXd W(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) W(r, c) = w[static_cast<std::size_t>(r) * in + c];
    p.weights.push_back(W);
    p.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), out));
  }
  p.validate();
  return p;
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json norm_to_json(const nets::RunningNormalizer& n) {
  return {{"count", n.count()},
          {"mean", vec_json(n.mean())},
          {"variance", vec_json(n.variance())},
          {"epsilon", n.epsilon()},
          {"clip", n.clip()}};
}

nets::RunningNormalizer norm_from_json(const json& j) {
  const Eigen::VectorXd mean = vec_from(j.at("mean"));
  nets::RunningNormalizer n(static_cast<int>(mean.size()), j.at("epsilon").get<double>(),
                            j.at("clip").get<double>());
  n.set_state(j.at("count").get<double>(), mean, vec_from(j.at("variance")));
  return n;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

double mean_where(const Eigen::VectorXd& v, const std::vector<bool>& mask) {
  double s = 0.0;
  long n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (mask[i]) {
      s += v[i];
      ++n;
    }
  return n > 0 ? s / n : 0.0;
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "iteration",      "mean_task_reward", "mean_style_reward_rec", "mean_style_reward_loco",
      "frac_rec_gated", "disc_loss_rec",    "disc_loss_loco",        "policy_loss",
      "value_loss",     "entropy",          "approx_kl",             "clip_frac",
      "mean_tracking_error", "episodes_completed"};
  return cols;
}

std::string metrics_header() {
  std::string h = "# metrics_schema=" + std::to_string(kMetricsSchemaVersion) + "\n";
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) h += (i ? "," : "") + cols[i];
  return h + "\n";
}

std::string metrics_line(const MetricsRow& r) {
  std::string s = std::to_string(r.iteration);
  for (double v : {r.mean_task_reward, r.mean_style_reward_rec, r.mean_style_reward_loco, r.frac_rec_gated,
                   r.disc_loss_rec, r.disc_loss_loco, r.policy_loss, r.value_loss, r.entropy, r.approx_kl,
                   r.clip_frac, r.mean_tracking_error})
    s += "," + fmt(v);
  return s + "," + std::to_string(r.episodes_completed) + "\n";
}

amp::ReferenceClips make_reference_clips(const TrainConfig& cfg) {
  amp::ReferenceClips refs;
  refs.walk = clips::generate_walk_clip(cfg.clips.walk, cfg.model);
  refs.run = clips::generate_run_clip(cfg.clips.run, cfg.model);
  refs.recovery.push_back(clips::generate_getup_clip(clips::BehaviorTag::kGetupProne, cfg.clips.getup, cfg.model));
  refs.recovery.push_back(clips::generate_getup_clip(clips::BehaviorTag::kGetupSupine, cfg.clips.getup, cfg.model));
  clips::validate_clip(refs.walk, cfg.model);
  clips::validate_clip(refs.run, cfg.model);
  for (const auto& c : refs.recovery) clips::validate_clip(c, cfg.model);
  return refs;
}

std::vector<std::string> gen_clips(const TrainConfig& cfg, const std::string& out_dir) {
  const amp::ReferenceClips refs = make_reference_clips(cfg);
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  auto put = [&](const clips::MotionClip& c) {
    const fs::path p = fs::path(out_dir) / (c.name + ".json");
    clips::save_clip(c, p.string());
    paths.push_back(p.string());
  };
  put(refs.walk);
  put(refs.run);
  for (const auto& c : refs.recovery) put(c);
  return paths;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  json j;
  j["format"] = "gamp-checkpoint";
  j["version"] = 1;
  j["iteration"] = c.iteration;
  j["action_scale"] = c.action_scale;
  j["policy_mean"] = mlp_to_json(c.agent.policy.mean);
  j["log_std"] = vec_json(c.agent.policy.log_std);
  j["value"] = mlp_to_json(c.agent.value);
  j["obs_norm"] = norm_to_json(c.agent.obs_norm);
  j["disc_rec"] = mlp_to_json(c.discriminators.rec);
  j["disc_loco"] = mlp_to_json(c.discriminators.loco);
  j["disc_features"] = norm_to_json(c.discriminators.features);
  write_text(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "gamp-checkpoint") throw ParseError("not a checkpoint file");
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
    Checkpoint c;
    c.iteration = j.at("iteration").get<int>();
    c.action_scale = j.at("action_scale").get<double>();
    c.agent.policy.mean = mlp_from_json(j.at("policy_mean"));
    c.agent.policy.log_std = vec_from(j.at("log_std"));
    c.agent.value = mlp_from_json(j.at("value"));
    c.agent.obs_norm = norm_from_json(j.at("obs_norm"));
    c.discriminators.rec = mlp_from_json(j.at("disc_rec"));
    c.discriminators.loco = mlp_from_json(j.at("disc_loco"));
    c.discriminators.features = norm_from_json(j.at("disc_features"));
    return c;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
}

FrozenPolicy freeze_agent(const ppo::Agent& agent, double action_scale) {
  return freeze(agent.policy.mean, agent.obs_norm, action_scale);
}

TrainResult train(const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const fs::path out(cfg.output_dir);
  fs::create_directories(out / "checkpoints");
  write_text(out / "config.json", config_to_json(cfg).dump(2) + "\n");
  gen_clips(cfg, (out / "clips").string());
  const amp::ReferenceClips refs = make_reference_clips(cfg);

  std::mt19937_64 rng(cfg.seed);
  ppo::Agent agent = ppo::Agent::create(cfg.ppo, rng);
  amp::DiscriminatorPair disc = amp::DiscriminatorPair::create(cfg.discriminator, rng);
  ppo::EnvPool pool(cfg.model, cfg.ppo.num_envs, cfg.seed);
  pool.reset_all(cfg.commands, cfg.init, true);

  ppo::RolloutSettings settings;
  settings.ppo = cfg.ppo;
  settings.reward_weights = cfg.rewards;
  settings.rec_reward_weights = cfg.rewards_rec;
  settings.amp = cfg.amp;
  settings.gate = cfg.gate;
  settings.commands = cfg.commands;
  settings.init = cfg.init;
  settings.threads = cfg.single_thread ? 1 : cfg.threads;

  TrainResult result;
  std::ofstream metrics(out / "metrics.csv", std::ios::trunc | std::ios::binary);
  if (!metrics) throw Error("cannot write metrics under '" + cfg.output_dir + "'");
  metrics << metrics_header();
  metrics.flush();

  auto checkpoint = [&](int iteration, const fs::path& path) {
    Checkpoint c{iteration, agent, disc, cfg.model.action_scale};
    save_checkpoint(c, path.string());
    result.checkpoints.push_back(path.string());
  };

  ppo::RolloutBuffer buffer;
  for (int it = 1; it <= cfg.iterations; ++it) {
    try {
      const ppo::RolloutStats rs = ppo::collect_rollout(pool, agent, disc, settings, buffer);
      const amp::RoutedBatch routed = amp::route_batch(buffer.gated_transitions(), cfg.gate);
      const amp::DiscUpdateStats ds = amp::update_discriminators(disc, routed, refs, cfg.model, rng);
      const ppo::PpoStats ps = ppo::ppo_update(agent, buffer, cfg.ppo, rng);
      agent.obs_norm.update(buffer.raw_obs);

      std::vector<bool> valid = buffer.valid, rec(buffer.size()), loco(buffer.size());
      long n_valid = 0, n_rec = 0;
      for (int i = 0; i < buffer.size(); ++i) {
        rec[i] = valid[i] && buffer.modes[i] == amp::Mode::kRec;
        loco[i] = valid[i] && buffer.modes[i] == amp::Mode::kLoco;
        n_valid += valid[i];
        n_rec += rec[i];
      }
      MetricsRow row;
      row.iteration = it;
      row.mean_task_reward = mean_where(buffer.task_rewards, valid);
      row.mean_style_reward_rec = mean_where(buffer.style_rewards, rec);
      row.mean_style_reward_loco = mean_where(buffer.style_rewards, loco);
      row.frac_rec_gated = n_valid > 0 ? static_cast<double>(n_rec) / n_valid : 0.0;
      row.disc_loss_rec = ds.rec ? ds.rec->loss : 0.0;
      row.disc_loss_loco = ds.loco ? ds.loco->loss : 0.0;
      row.policy_loss = ps.policy_loss;
      row.value_loss = ps.value_loss;
      row.entropy = ps.entropy;
      row.approx_kl = ps.approx_kl;
      row.clip_frac = ps.clip_frac;
      row.mean_tracking_error = mean_where(buffer.tracking_error, loco);
      row.episodes_completed = rs.episodes_completed;
      metrics << metrics_line(row);
      metrics.flush();
      result.metrics.push_back(row);
      if (progress) progress(row);

      if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "iter_%05d.json", it);
        checkpoint(it, out / "checkpoints" / name);
      }
    } catch (const Error& e) {
      throw TrainingError("training aborted at iteration " + std::to_string(it) + ": " + e.what(), it);
    }
  }

  checkpoint(cfg.iterations, out / "checkpoint_final.json");
  result.policy_path = (out / "policy.gamp").string();
  export_frozen(freeze_agent(agent, cfg.model.action_scale), result.policy_path);
  return result;
}

}  // namespace gamp::harness
