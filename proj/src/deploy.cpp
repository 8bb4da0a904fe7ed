#include "gamp/deploy.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "gamp/errors.hpp"
#include "gamp/rewards.hpp"

namespace gamp::harness {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct PresetDef {
  const char* name;
  sim::ResetMode initial;
  std::vector<CommandPhase> schedule;
  int steps;
};

const std::vector<PresetDef>& presets() {
  static const std::vector<PresetDef> defs = {
      {"stand", sim::ResetMode::kUpright, {{0.0, 0.0}}, 500},
      {"walk", sim::ResetMode::kUpright, {{0.0, 0.8}}, 500},
      {"run", sim::ResetMode::kUpright, {{0.0, 2.5}}, 500},
      {"prone", sim::ResetMode::kProne, {{0.0, 0.0}}, 500},
      {"supine", sim::ResetMode::kSupine, {{0.0, 0.0}}, 500},
      {"supine_walk_run", sim::ResetMode::kSupine, {{0.0, 0.0}, {5.0, 0.8}, {10.0, 2.5}}, 750},
      {"prone_walk_run", sim::ResetMode::kProne, {{0.0, 0.0}, {5.0, 0.8}, {10.0, 2.5}}, 750},
  };
  return defs;
}

}  // namespace

double Scenario::command_at(double time) const {
  double cmd = schedule.empty() ? 0.0 : schedule.front().command;
  for (const CommandPhase& p : schedule)
    if (time + 1e-12 >= p.start_time) cmd = p.command;
  return cmd;
}

Scenario scenario_preset(const std::string& name) {
  for (const PresetDef& d : presets()) {
    if (name == d.name) {
      Scenario s;
      s.name = d.name;
      s.initial = d.initial;
      s.schedule = d.schedule;
      s.steps = d.steps;
      return s;
    }
  }
  std::string known;
  for (const PresetDef& d : presets()) known += std::string(known.empty() ? "" : ", ") + d.name;
  throw ConfigError("unknown scenario '" + name + "' (known: " + known + ")");
}

std::vector<std::string> scenario_preset_names() {
  std::vector<std::string> out;
  for (const PresetDef& d : presets()) out.emplace_back(d.name);
  return out;
}

RolloutResult rollout_frozen(const FrozenPolicy& policy, sim::BipedModel model,
                             const Scenario& scenario, const RolloutOptions& options) {
  if (policy.input_dim() != sim::kObsDim || policy.output_dim() != sim::kNumJoints)
    throw DimensionError("frozen policy shape does not match the biped");
  model.action_scale = policy.action_scale;
  const double dt = model.dt_ctrl();
  const int window_steps = std::max(1, static_cast<int>(std::lround(options.velocity_window / dt)));
  const int hold_steps = std::max(1, static_cast<int>(std::lround(options.recovery.hold_time / dt)));
  const int recovery_limit = static_cast<int>(std::lround(options.recovery.window / dt));
  const double standing = model.standing_height();
  const rewards::RewardWeights weights;

  std::mt19937_64 rng(scenario.seed);
  sim::BipedEnv env(model);
  env.reset(scenario.initial, scenario.command_at(0.0), rng);

  RolloutResult result;
  RolloutSummary& s = result.summary;
  std::vector<double> xs{env.state().q[sim::kRootX]};
  double err_sum = 0.0;
  long err_count = 0;
  int hold = 0;
  double phase_start = 0.0;
  double last_cmd = scenario.command_at(0.0);

  for (int k = 0; k < scenario.steps; ++k) {
    const double t = env.state().time;
    const double cmd = scenario.command_at(t);
    if (cmd != last_cmd) {
      phase_start = t;
      last_cmd = cmd;
    }
    env.set_command(cmd);
    const Eigen::VectorXf obs = env.observation().cast<float>();
    const Eigen::VectorXf act = frozen_forward(policy, obs);
    const sim::Vec6 action = act.cast<double>();
    const sim::SimState before = env.state();
    sim::StepInfo info;
    try {
      env.step(action, &info);
    } catch (const IntegrationError&) {
      s.blew_up = true;
      break;
    }
    const sim::SimState& st = env.state();
    ++s.steps_completed;
    xs.push_back(st.q[sim::kRootX]);

    if (static_cast<int>(xs.size()) > window_steps && st.time - phase_start >= options.settle_time - 1e-9) {
      const double v_avg = (xs.back() - xs[xs.size() - 1 - window_steps]) / (window_steps * dt);
      err_sum += std::abs(v_avg - cmd);
      ++err_count;
    }

    if (!s.recovered && k < recovery_limit) {
      const bool upright = std::abs(st.q[sim::kPitch]) < options.recovery.max_abs_pitch &&
                           st.q[sim::kRootZ] > options.recovery.min_height_frac * standing;
      hold = upright ? hold + 1 : 0;
      if (hold >= hold_steps) {
        s.recovered = true;
        s.time_to_recover = (k + 1 - hold_steps) * dt;
      }
    }

    if (options.record_trace) {
      TracePoint p;
      p.time = st.time;
      p.q = st.q;
      p.qd = st.qd;
      p.action = action;
      p.g_z = sim::projected_gravity(before)[1];
      p.command = cmd;
      const rewards::TaskRewardTerms r = rewards::compute_task_reward(st, info.torques, weights);
      p.r_cmd = r.r_cmd;
      p.r_smooth = r.r_smooth;
      p.r_posture = r.r_posture;
      p.c_energy = r.c_energy;
      p.c_fall = r.c_fall;
      p.task_reward = r.total;
      result.trace.push_back(p);
    }
  }
  s.tracking_error = err_count > 0 ? err_sum / err_count : std::numeric_limits<double>::quiet_NaN();
  s.final_height = env.state().q[sim::kRootZ];
  s.final_pitch = env.state().q[sim::kPitch];
  return result;
}

void write_trace_csv(const std::vector<TracePoint>& trace, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write trace to '" + path + "'");
  static const char* coords[] = {"x", "z", "pitch", "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle"};
  out << "time";
  for (const char* c : coords) out << ",q_" << c;
  for (const char* c : coords) out << ",qd_" << c;
  for (int j = 3; j < 9; ++j) out << ",a_" << coords[j];
  out << ",g_z,command,r_cmd,r_smooth,r_posture,c_energy,c_fall,task_reward\n";
  for (const TracePoint& p : trace) {
    out << fmt(p.time);
    for (int i = 0; i < 9; ++i) out << ',' << fmt(p.q[i]);
    for (int i = 0; i < 9; ++i) out << ',' << fmt(p.qd[i]);
    for (int i = 0; i < 6; ++i) out << ',' << fmt(p.action[i]);
    out << ',' << fmt(p.g_z) << ',' << fmt(p.command) << ',' << fmt(p.r_cmd) << ',' << fmt(p.r_smooth)
        << ',' << fmt(p.r_posture) << ',' << fmt(p.c_energy) << ',' << fmt(p.c_fall) << ','
        << fmt(p.task_reward) << '\n';
  }
}

EvalSuite eval_suite(const std::string& name) {
  EvalSuite s;
  if (name == "full") return s;
  if (name == "quick") {
    s.name = "quick";
    s.sweep_commands = {-0.5, 0.25, 1.0};
    s.sweep_duration = 6.0;
    s.recovery_trials = 4;
    s.continuity = {"supine_walk_run"};
    return s;
  }
  throw ConfigError("unknown eval suite '" + name + "' (known: full, quick)");
}

EvalReport evaluate(const FrozenPolicy& policy, const sim::BipedModel& model, const EvalSuite& suite,
                    const RolloutOptions& options) {
  EvalReport report;
  RolloutOptions opts = options;
  opts.record_trace = false;
  const double dt = model.dt_ctrl();

  double err_sum = 0.0;
  int err_n = 0;
  for (std::size_t i = 0; i < suite.sweep_commands.size(); ++i) {
    Scenario sc;
    sc.name = "sweep";
    sc.initial = sim::ResetMode::kUpright;
    sc.schedule = {{0.0, suite.sweep_commands[i]}};
    sc.seed = i;
    sc.steps = static_cast<int>(std::lround(suite.sweep_duration / dt));
    EvalRow row{"sweep", sc.name, sc.schedule.front().command, sc.seed, rollout_frozen(policy, model, sc, opts).summary};
    // A blown-up or never-settled rollout counts as tracking nothing at all.
    double e = row.summary.tracking_error;
    if (row.summary.blew_up || !std::isfinite(e)) e = std::abs(row.command);
    err_sum += e;
    ++err_n;
    report.rows.push_back(row);
  }
  report.mean_tracking_error = err_n > 0 ? err_sum / err_n : 0.0;

  for (const char* preset : {"prone", "supine"}) {
    int ok = 0;
    for (int trial = 0; trial < suite.recovery_trials; ++trial) {
      Scenario sc = scenario_preset(preset);
      sc.seed = static_cast<std::uint64_t>(trial);
      EvalRow row{"recovery", sc.name, 0.0, sc.seed, rollout_frozen(policy, model, sc, opts).summary};
      ok += row.summary.recovered;
      report.rows.push_back(row);
    }
    const double rate = suite.recovery_trials > 0 ? static_cast<double>(ok) / suite.recovery_trials : 0.0;
    (std::string(preset) == "prone" ? report.prone_success_rate : report.supine_success_rate) = rate;
  }

  for (const std::string& name : suite.continuity) {
    Scenario sc = scenario_preset(name);
    EvalRow row{"continuity", sc.name, sc.schedule.back().command, sc.seed, rollout_frozen(policy, model, sc, opts).summary};
    report.rows.push_back(row);
  }
  return report;
}

void write_eval_report(const EvalReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  {
    std::ofstream csv(dir / "eval.csv", std::ios::trunc);
    if (!csv) throw Error("cannot write eval.csv under '" + out_dir + "'");
    csv << "kind,scenario,command,seed,steps,blew_up,tracking_error,recovered,time_to_recover,final_height,"
           "final_pitch\n";
    for (const EvalRow& r : report.rows) {
      const RolloutSummary& s = r.summary;
      csv << r.kind << ',' << r.scenario << ',' << fmt(r.command) << ',' << r.seed << ',' << s.steps_completed
          << ',' << (s.blew_up ? 1 : 0) << ',' << fmt(s.tracking_error) << ',' << (s.recovered ? 1 : 0) << ','
          << fmt(s.time_to_recover) << ',' << fmt(s.final_height) << ',' << fmt(s.final_pitch) << '\n';
    }
  }
  nlohmann::json j;
  j["mean_tracking_error"] = report.mean_tracking_error;
  j["prone_success_rate"] = report.prone_success_rate;
  j["supine_success_rate"] = report.supine_success_rate;
  j["rows"] = nlohmann::json::array();
  for (const EvalRow& r : report.rows) {
    const RolloutSummary& s = r.summary;
    nlohmann::json row = {{"kind", r.kind},
                          {"scenario", r.scenario},
                          {"command", r.command},
                          {"seed", r.seed},
                          {"steps", s.steps_completed},
                          {"blew_up", s.blew_up},
                          {"recovered", s.recovered},
                          {"time_to_recover", s.time_to_recover},
                          {"final_height", s.final_height},
                          {"final_pitch", s.final_pitch}};
    row["tracking_error"] = std::isfinite(s.tracking_error) ? nlohmann::json(s.tracking_error) : nlohmann::json();
    j["rows"].push_back(row);
  }
  std::ofstream out(dir / "report.json", std::ios::trunc);
  if (!out) throw Error("cannot write report.json under '" + out_dir + "'");
  out << j.dump(2) << '\n';
}

}  // namespace gamp::harness
