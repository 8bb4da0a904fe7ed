#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gamp/amp.hpp"
#include "gamp/config.hpp"
#include "gamp/deploy.hpp"
#include "gamp/errors.hpp"
#include "gamp/frozen.hpp"
#include "gamp/train.hpp"

using namespace gamp;
using namespace gamp::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gamp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FrozenPolicy random_frozen(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ppo::PpoConfig cfg;
  cfg.hidden = {32, 16};
  ppo::Agent a = ppo::Agent::create(cfg, rng);
  for (auto& b : a.policy.mean.biases) b.setRandom();
  std::normal_distribution<double> n01;
  Eigen::MatrixXd obs(sim::kObsDim, 50);
  for (int i = 0; i < obs.size(); ++i) obs.data()[i] = 2.0 * n01(rng) + 0.5;
  a.obs_norm.update(obs);
  return freeze_agent(a, 0.5);
}

TrainConfig tiny_config(const fs::path& out) {
  TrainConfig c;
  c.output_dir = out.string();
  c.iterations = 2;
  c.single_thread = true;
  c.checkpoint_every = 1;
  c.ppo.horizon = 8;
  c.ppo.num_envs = 4;
  c.ppo.hidden = {16};
  c.discriminator.hidden = {16};
  return c;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const TrainConfig d;
  EXPECT_NO_THROW(d.validate());
  const json j = config_to_json(d);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(config_to_json(config_from_json(json::object())), j);
  EXPECT_TRUE(j.at("rewards_rec").is_null());
}

TEST(Config, UnknownKeysNameTheirPath) {
  try {
    config_from_json(json::parse(R"({"ppo": {"gama": 0.9}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ppo.gama"), std::string::npos) << e.what();
  }
  EXPECT_THROW(config_from_json(json::parse(R"({"iteration": 3})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"gate": {"threshhold": 0.5}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"rewards_rec": {"w_q": 1}})")), ConfigError);
}

TEST(Config, BadValues) {
  EXPECT_THROW(config_from_json(json::parse(R"({"ppo": {"gamma": "high"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"ppo": {"gamma": 2.0}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"model": {"kp": [1, 2]}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"discriminator": {"activation": "swish"}})")),
               ConfigError);
  EXPECT_THROW(config_from_json(json::parse("[1, 2]")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/gamp.json"), ConfigError);
}

TEST(Config, OverridesAndRecRewards) {
  const TrainConfig c = config_from_json(json::parse(
      R"({"seed": 12, "gate": {"threshold": 0.5}, "rewards_rec": {"w_v": 0.0, "sigma_p": 1.0}})"));
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.gate.threshold, 0.5);
  ASSERT_TRUE(c.rewards_rec.has_value());
  EXPECT_EQ(c.rewards_rec->w_v, 0.0);
  EXPECT_EQ(c.rewards_rec->sigma_p, 1.0);
  EXPECT_EQ(c.rewards_rec->w_p, c.rewards.w_p);
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
}

TEST(Metrics, HeaderAndLine) {
  EXPECT_EQ(metrics_columns().size(), 14u);
  const std::string h = metrics_header();
  EXPECT_EQ(h.rfind("# metrics_schema=1\n", 0), 0u);
  EXPECT_NE(h.find("iteration,mean_task_reward"), std::string::npos);
  EXPECT_NE(h.find("frac_rec_gated"), std::string::npos);
  MetricsRow r;
  r.iteration = 3;
  r.mean_task_reward = 0.125;
  r.episodes_completed = 7;
  const std::string line = metrics_line(r);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 13);
  EXPECT_EQ(line.rfind("3,0.125,", 0), 0u);
  EXPECT_EQ(line.substr(line.size() - 3), ",7\n");
}

TEST(Frozen, BytesRoundTripIsExact) {
  const FrozenPolicy p = random_frozen(1);
  const std::string bytes = frozen_to_bytes(p);
  const FrozenPolicy q = frozen_from_bytes(bytes);
  EXPECT_EQ(frozen_to_bytes(q), bytes);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n01;
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXf obs(sim::kObsDim);
    for (auto& x : obs) x = 3.0f * n01(rng);
    const Eigen::VectorXf a = frozen_forward(p, obs), b = frozen_forward(q, obs);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()), 0);
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0f);
  }
}

TEST(Frozen, MatchesDoublePrecisionNetwork) {
  std::mt19937_64 rng(4);
  ppo::PpoConfig cfg;
  cfg.hidden = {32};
  cfg.policy_output_gain = 0.5;
  ppo::Agent a = ppo::Agent::create(cfg, rng);
  const FrozenPolicy p = freeze_agent(a, 0.5);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd obs(sim::kObsDim);
    for (auto& x : obs) x = n01(rng);
    const Eigen::VectorXd want =
        nets::mlp_forward(a.policy.mean, a.obs_norm.normalize(obs)).cwiseMax(-1.0).cwiseMin(1.0);
    const Eigen::VectorXf got = frozen_forward(p, obs.cast<float>());
    EXPECT_LT((got.cast<double>() - want).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Frozen, CorruptionRaisesNamedErrors) {
  const std::string good = frozen_to_bytes(random_frozen(3));
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(frozen_from_bytes(bad), FrozenMagicError);
  bad = good;
  bad[4] = 9;
  EXPECT_THROW(frozen_from_bytes(bad), FrozenVersionError);
  EXPECT_THROW(frozen_from_bytes(good.substr(0, good.size() - 3)), FrozenTruncatedError);
  EXPECT_THROW(frozen_from_bytes(good.substr(0, 10)), FrozenTruncatedError);
  EXPECT_THROW(frozen_from_bytes(""), FrozenTruncatedError);
  EXPECT_THROW(frozen_from_bytes(good + "x"), FrozenFormatError);
  bad = good;
  bad[12] = 0x7f;  // first layer width no longer matches the payload
  EXPECT_THROW(frozen_from_bytes(bad), FrozenFormatError);
  EXPECT_THROW(load_frozen("/nonexistent/policy.gamp"), Error);
}

TEST(Frozen, FileRoundTrip) {
  const fs::path dir = temp_dir("frozen");
  const FrozenPolicy p = random_frozen(5);
  export_frozen(p, (dir / "p.gamp").string());
  EXPECT_EQ(frozen_to_bytes(load_frozen((dir / "p.gamp").string())), frozen_to_bytes(p));
  fs::remove_all(dir);
}

TEST(Deploy, ScenarioPresets) {
  for (const std::string& name : scenario_preset_names()) EXPECT_EQ(scenario_preset(name).name, name);
  EXPECT_THROW(scenario_preset("cartwheel"), ConfigError);
  EXPECT_EQ(scenario_preset("prone").initial, sim::ResetMode::kProne);
  Scenario s;
  s.schedule = {{0.0, 0.2}, {4.0, 1.5}};
  EXPECT_EQ(s.command_at(0.0), 0.2);
  EXPECT_EQ(s.command_at(3.99), 0.2);
  EXPECT_EQ(s.command_at(4.0), 1.5);
}

TEST(Deploy, RolloutNeverConsultsTheGate) {
  const FrozenPolicy p = random_frozen(6);
  const std::uint64_t before = amp::gate_evaluations();
  RolloutOptions opt;
  opt.record_trace = true;
  const RolloutResult r = rollout_frozen(p, sim::BipedModel{}, scenario_preset("supine"), opt);
  EXPECT_EQ(amp::gate_evaluations(), before);
  EXPECT_EQ(static_cast<int>(r.trace.size()), r.summary.steps_completed);
  amp::gate(0.0, amp::GateConfig{});
  EXPECT_EQ(amp::gate_evaluations(), before + 1);
}

TEST(Deploy, RecoveryProxy) {
  // A zero network holds the stand pose, so an upright start counts as
  // recovered and a supine start does not.
  FrozenPolicy p = random_frozen(7);
  for (auto& w : p.weights) w.setZero();
  for (auto& b : p.biases) b.setZero();
  const RolloutResult up = rollout_frozen(p, sim::BipedModel{}, scenario_preset("stand"));
  EXPECT_TRUE(up.summary.recovered);
  EXPECT_NEAR(up.summary.time_to_recover, 0.0, 0.1);
  EXPECT_LT(up.summary.tracking_error, 0.1);
  const RolloutResult down = rollout_frozen(p, sim::BipedModel{}, scenario_preset("supine"));
  EXPECT_FALSE(down.summary.recovered);
  EXPECT_LT(down.summary.time_to_recover, 0.0);
}

TEST(Train, WritesArtifactsAndCheckpoints) {
  const fs::path dir = temp_dir("train");
  std::vector<int> seen;
  const TrainResult r = train(tiny_config(dir), [&](const MetricsRow& m) { seen.push_back(m.iteration); });
  EXPECT_EQ(seen, (std::vector<int>{1, 2}));
  EXPECT_EQ(r.metrics.size(), 2u);
  for (const char* f : {"config.json", "metrics.csv", "policy.gamp", "checkpoint_final.json",
                        "clips/walk.json", "clips/run.json", "clips/getup_prone.json",
                        "clips/getup_supine.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  const std::string csv = read_file(dir / "metrics.csv");
  EXPECT_EQ(csv.rfind(metrics_header(), 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  const Checkpoint ck = load_checkpoint((dir / "checkpoint_final.json").string());
  EXPECT_EQ(ck.iteration, 2);
  const FrozenPolicy from_ckpt = freeze_agent(ck.agent, ck.action_scale);
  EXPECT_EQ(frozen_to_bytes(from_ckpt), read_file(dir / "policy.gamp"));

  const TrainConfig saved = load_config((dir / "config.json").string());
  EXPECT_EQ(config_to_json(saved), config_to_json(tiny_config(dir)));
  fs::remove_all(dir);
}

TEST(Train, SameSeedSameMetrics) {
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  train(tiny_config(a));
  train(tiny_config(b));
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a / "policy.gamp"), read_file(b / "policy.gamp"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, ClipGeneration) {
  const fs::path dir = temp_dir("clips");
  const auto paths = gen_clips(TrainConfig{}, dir.string());
  EXPECT_EQ(paths.size(), 4u);
  for (const auto& p : paths) EXPECT_GT(fs::file_size(p), 100u);
  const amp::ReferenceClips ref = make_reference_clips(TrainConfig{});
  EXPECT_EQ(ref.recovery.size(), 2u);
  fs::remove_all(dir);
}
