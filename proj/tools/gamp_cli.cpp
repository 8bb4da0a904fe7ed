#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gamp/config.hpp"
#include "gamp/deploy.hpp"
#include "gamp/errors.hpp"
#include "gamp/frozen.hpp"
#include "gamp/train.hpp"

namespace gh = gamp::harness;

namespace {

gh::TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? gh::TrainConfig{} : gh::load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated adversarial motion prior training for a planar biped"};
  app.require_subcommand(1);

  std::string config_path, out_dir, policy_path, checkpoint_path, scenario_name, trace_path, suite_name = "full";
  std::uint64_t seed = 0;
  int iters = -1, steps = -1;
  bool single_thread = false, quiet = false;

  auto* gen = app.add_subcommand("gen-clips", "Write the reference clips");
  gen->add_option("--config", config_path, "Config file (JSON)");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a policy");
  tr->add_option("--config", config_path, "Config file (JSON)");
  tr->add_option("--out", out_dir, "Output directory")->required();
  auto* seed_opt = tr->add_option("--seed", seed, "Random seed");
  tr->add_option("--iters", iters, "Iteration count");
  tr->add_flag("--single-thread", single_thread, "Collect rollouts on one thread");
  tr->add_flag("--quiet", quiet, "No per-iteration progress");

  auto* ev = app.add_subcommand("eval", "Run the evaluation suite on a frozen policy");
  ev->add_option("--policy", policy_path, "Frozen policy file")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--suite", suite_name, "Suite name (full, quick)");
  ev->add_option("--config", config_path, "Config file for the model constants");

  auto* ex = app.add_subcommand("export", "Freeze a checkpoint");
  ex->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  ex->add_option("--out", policy_path, "Frozen policy path")->required();

  auto* ro = app.add_subcommand("rollout", "Roll out a frozen policy in one scenario");
  ro->add_option("--policy", policy_path, "Frozen policy file")->required();
  ro->add_option("--scenario", scenario_name, "Scenario preset")->required();
  ro->add_option("--steps", steps, "Control steps (default: preset length)");
  ro->add_option("--trace", trace_path, "Trace CSV path");
  ro->add_option("--seed", seed, "Reset seed");
  ro->add_option("--config", config_path, "Config file for the model constants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      for (const auto& p : gh::gen_clips(config_or_default(config_path), out_dir)) std::cout << p << '\n';
    } else if (*tr) {
      gh::TrainConfig cfg = config_or_default(config_path);
      cfg.output_dir = out_dir;
      if (*seed_opt) cfg.seed = seed;
      if (iters >= 0) cfg.iterations = iters;
      if (single_thread) cfg.single_thread = true;
      const auto result = gh::train(cfg, [&](const gh::MetricsRow& r) {
        if (quiet) return;
        std::fprintf(stderr, "iter %5d  task %.4f  style rec %.3f loco %.3f  rec %.3f  track %.3f  kl %.4f\n",
                     r.iteration, r.mean_task_reward, r.mean_style_reward_rec, r.mean_style_reward_loco,
                     r.frac_rec_gated, r.mean_tracking_error, r.approx_kl);
      });
      std::cout << result.policy_path << '\n';
    } else if (*ev) {
      const gh::FrozenPolicy policy = gh::load_frozen(policy_path);
      const gh::EvalReport report =
          gh::evaluate(policy, config_or_default(config_path).model, gh::eval_suite(suite_name));
      gh::write_eval_report(report, out_dir);
      std::printf("tracking_error %.4f  prone_success %.2f  supine_success %.2f\n", report.mean_tracking_error,
                  report.prone_success_rate, report.supine_success_rate);
    } else if (*ex) {
      const gh::Checkpoint ckpt = gh::load_checkpoint(checkpoint_path);
      gh::export_frozen(gh::freeze_agent(ckpt.agent, ckpt.action_scale), policy_path);
    } else if (*ro) {
      const gh::FrozenPolicy policy = gh::load_frozen(policy_path);
      gh::Scenario sc = gh::scenario_preset(scenario_name);
      sc.seed = seed;
      if (steps >= 0) sc.steps = steps;
      gh::RolloutOptions opts;
      opts.record_trace = !trace_path.empty();
      const gh::RolloutResult r = gh::rollout_frozen(policy, config_or_default(config_path).model, sc, opts);
      if (!trace_path.empty()) gh::write_trace_csv(r.trace, trace_path);
      const auto& s = r.summary;
      std::printf("steps %d  blew_up %d  tracking_error %.4f  recovered %d  time_to_recover %.2f\n",
                  s.steps_completed, s.blew_up ? 1 : 0, s.tracking_error, s.recovered ? 1 : 0,
                  s.time_to_recover);
    }
  } catch (const std::exception& e) {
    std::cerr << "gamp: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
