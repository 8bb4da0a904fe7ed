#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "gamp/amp.hpp"
#include "gamp/clips.hpp"
#include "gamp/ppo.hpp"
#include "gamp/rewards.hpp"
#include "gamp/sim.hpp"

namespace gamp::harness {

struct ClipGenConfig {
  clips::GaitConfig walk = clips::default_walk_config();
  clips::GaitConfig run = clips::default_run_config();
  clips::GetupConfig getup;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  int iterations = 2000;
  std::string output_dir = "run";
  bool single_thread = false;
  int threads = 1;             // rollout workers when single_thread is off
  int checkpoint_every = 100;  // iterations; 0 disables intermediate checkpoints

  sim::BipedModel model;
  rewards::RewardWeights rewards;
  // Task weights for steps the gate assigns to recovery; null means shared.
  std::optional<rewards::RewardWeights> rewards_rec;
  amp::AmpConfig amp;
  amp::GateConfig gate;
  amp::DiscriminatorConfig discriminator;
  ppo::PpoConfig ppo;
  ppo::CommandConfig commands;
  ppo::InitConfig init;
  ClipGenConfig clips;

  // Throws ConfigError on any invalid field.
  void validate() const;
};

// Every key is optional; unknown keys anywhere raise ConfigError naming the
// dotted path.
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::string& path);

}  // namespace gamp::harness
