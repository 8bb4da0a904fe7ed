#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gamp/frozen.hpp"
#include "gamp/sim.hpp"

// Inference-side code. Nothing here may depend on the training-time gate.
namespace gamp::harness {

struct CommandPhase {
  double start_time = 0.0;  // s
  double command = 0.0;     // m/s
};

struct Scenario {
  std::string name;
  sim::ResetMode initial = sim::ResetMode::kUpright;
  std::vector<CommandPhase> schedule{{0.0, 0.0}};  // sorted by start_time
  std::uint64_t seed = 0;
  int steps = 500;

  double command_at(double time) const;
};

// Named presets: stand, walk, run, prone, supine, supine_walk_run,
// prone_walk_run. Unknown names throw ConfigError.
Scenario scenario_preset(const std::string& name);
std::vector<std::string> scenario_preset_names();

struct RecoveryCriterion {
  double max_abs_pitch = 0.3;     // rad
  double min_height_frac = 0.8;   // of standing height
  double hold_time = 3.0;         // s, consecutive
  double window = 10.0;           // s from the start
};

struct TracePoint {
  double time = 0.0;
  sim::Vec9 q;
  sim::Vec9 qd;
  sim::Vec6 action;
  double g_z = 0.0;
  double command = 0.0;
  double r_cmd = 0.0;
  double r_smooth = 0.0;
  double r_posture = 0.0;
  double c_energy = 0.0;
  double c_fall = 0.0;
  double task_reward = 0.0;
};

struct RolloutSummary {
  int steps_completed = 0;
  bool blew_up = false;
  // Mean |1 s moving-average forward velocity - command| over steps at
  // least settle_time into each command phase. NaN when no step qualifies.
  double tracking_error = 0.0;
  bool recovered = false;
  double time_to_recover = -1.0;  // s, start of the first qualifying hold
  double final_height = 0.0;
  double final_pitch = 0.0;
};

struct RolloutOptions {
  RecoveryCriterion recovery;
  double settle_time = 2.0;   // s after each command change before tracking counts
  double velocity_window = 1.0;  // s
  bool record_trace = false;
};

struct RolloutResult {
  RolloutSummary summary;
  std::vector<TracePoint> trace;
};

// Runs the frozen network alone at the control rate. model.action_scale is
// replaced by the policy's stored value.
RolloutResult rollout_frozen(const FrozenPolicy& policy, sim::BipedModel model,
                             const Scenario& scenario, const RolloutOptions& options = {});

void write_trace_csv(const std::vector<TracePoint>& trace, const std::string& path);

struct EvalSuite {
  std::string name = "full";
  std::vector<double> sweep_commands{-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0};
  double sweep_duration = 10.0;  // s
  int recovery_trials = 20;      // per initial mode
  std::vector<std::string> continuity{"supine_walk_run", "prone_walk_run"};
};

// "full" (default) or "quick" (fewer trials, shorter sweep).
EvalSuite eval_suite(const std::string& name);

struct EvalRow {
  std::string kind;      // sweep, recovery, continuity
  std::string scenario;
  double command = 0.0;
  std::uint64_t seed = 0;
  RolloutSummary summary;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_tracking_error = 0.0;  // over the sweep rows
  double prone_success_rate = 0.0;
  double supine_success_rate = 0.0;
};

EvalReport evaluate(const FrozenPolicy& policy, const sim::BipedModel& model, const EvalSuite& suite,
                    const RolloutOptions& options = {});

// report.json and eval.csv under out_dir.
void write_eval_report(const EvalReport& report, const std::string& out_dir);

}  // namespace gamp::harness
