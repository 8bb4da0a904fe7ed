#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gamp/amp.hpp"
#include "gamp/config.hpp"
#include "gamp/frozen.hpp"
#include "gamp/ppo.hpp"

namespace gamp::harness {

inline constexpr int kMetricsSchemaVersion = 1;

// Column order of metrics.csv.
const std::vector<std::string>& metrics_columns();

struct MetricsRow {
  int iteration = 0;
  double mean_task_reward = 0.0;
  double mean_style_reward_rec = 0.0;
  double mean_style_reward_loco = 0.0;
  double frac_rec_gated = 0.0;
  double disc_loss_rec = 0.0;
  double disc_loss_loco = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
  double mean_tracking_error = 0.0;
  long episodes_completed = 0;
};

std::string metrics_header();
std::string metrics_line(const MetricsRow& row);

// Thrown when training aborts; the metrics file holds every completed row.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int iteration) : Error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

// Writes walk.json, run.json, getup_prone.json, getup_supine.json; every clip
// is validated before it is written. Returns the paths.
std::vector<std::string> gen_clips(const TrainConfig& cfg, const std::string& out_dir);

amp::ReferenceClips make_reference_clips(const TrainConfig& cfg);

struct Checkpoint {
  int iteration = 0;
  ppo::Agent agent;
  amp::DiscriminatorPair discriminators;
  double action_scale = 0.5;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

FrozenPolicy freeze_agent(const ppo::Agent& agent, double action_scale);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<std::string> checkpoints;
  std::string policy_path;
};

// Called after each iteration with the row just written.
using ProgressFn = std::function<void(const MetricsRow&)>;

// Writes under cfg.output_dir: config.json, clips/, metrics.csv,
// checkpoints/iter_NNNNN.json, checkpoint_final.json, policy.gamp.
TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {});

}  // namespace gamp::harness
