#include <random>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "gamp/amp.hpp"
#include "gamp/config.hpp"
#include "gamp/deploy.hpp"
#include "gamp/errors.hpp"
#include "gamp/frozen.hpp"
#include "gamp/ppo.hpp"
#include "gamp/sim.hpp"
#include "gamp/train.hpp"

namespace py = pybind11;
namespace gh = gamp::harness;
using namespace gamp;

namespace {

class PyEnv {
 public:
  PyEnv() : env_(sim::BipedModel{}) {}

  Eigen::VectorXd reset(const std::string& mode, double command, std::uint64_t seed) {
    rng_.seed(seed);
    return env_.reset(sim::reset_mode_from_name(mode), command, rng_);
  }

  py::tuple step(const Eigen::VectorXd& action) {
    if (action.size() != sim::kNumJoints)
      throw DimensionError("action has " + std::to_string(action.size()) + " entries, expected 6");
    sim::StepInfo info;
    const Eigen::VectorXd obs = env_.step(action, &info);
    return py::make_tuple(obs, Eigen::VectorXd(info.torques));
  }

  Eigen::VectorXd q() const { return env_.state().q; }
  Eigen::VectorXd qd() const { return env_.state().qd; }
  double g_z() const { return sim::projected_gravity(env_.state())[1]; }
  int steps() const { return env_.steps_in_episode(); }

 private:
  sim::BipedEnv env_;
  std::mt19937_64 rng_;
};

py::dict summary_dict(const gh::RolloutSummary& s) {
  py::dict d;
  d["steps_completed"] = s.steps_completed;
  d["blew_up"] = s.blew_up;
  d["tracking_error"] = s.tracking_error;
  d["recovered"] = s.recovered;
  d["time_to_recover"] = s.time_to_recover;
  d["final_height"] = s.final_height;
  d["final_pitch"] = s.final_pitch;
  return d;
}

}  // namespace

PYBIND11_MODULE(_gamp, m) {
  m.doc() = "Gated adversarial motion prior training for a planar biped";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  auto parse = py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());
  py::register_exception<IntegrationError>(m, "IntegrationError", error.ptr());
  py::register_exception<gh::FrozenFormatError>(m, "FrozenFormatError", parse.ptr());

  m.def(
      "gate",
      [](double g_z, double threshold) {
        return std::string(amp::mode_name(amp::gate(g_z, amp::GateConfig{threshold})));
      },
      py::arg("g_z"), py::arg("threshold") = 0.6, "Discriminator chosen for projected gravity g_z");
  m.def("gate_evaluations", &amp::gate_evaluations);
  m.def("normalize_command", &amp::normalize_command, py::arg("v_cmd"), py::arg("v_max") = 3.0);
  m.def("style_reward", &amp::style_reward_from_output, py::arg("d"), py::arg("epsilon") = 1e-4);
  m.def("total_reward", &amp::total_reward, py::arg("task"), py::arg("style"), py::arg("lambda_amp") = 0.5);
  m.def(
      "compute_gae",
      [](const Eigen::VectorXd& r, const Eigen::VectorXd& v, const std::vector<bool>& dones, double boot,
         double gamma, double lambda) {
        const ppo::GaeResult g = ppo::compute_gae(r, v, dones, boot, gamma, lambda);
        return py::make_tuple(g.advantages, g.returns);
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap_value"),
      py::arg("gamma") = 0.99, py::arg("lam") = 0.95);

  py::class_<PyEnv>(m, "Env")
      .def(py::init<>())
      .def("reset", &PyEnv::reset, py::arg("mode") = "upright", py::arg("command") = 0.0, py::arg("seed") = 0)
      .def("step", &PyEnv::step, py::arg("action"), "Returns (observation, joint torques)")
      .def_property_readonly("q", &PyEnv::q)
      .def_property_readonly("qd", &PyEnv::qd)
      .def_property_readonly("g_z", &PyEnv::g_z)
      .def_property_readonly("steps", &PyEnv::steps);

  py::class_<gh::FrozenPolicy>(m, "FrozenPolicy")
      .def_property_readonly("dims", [](const gh::FrozenPolicy& p) { return p.dims; })
      .def_readonly("action_scale", &gh::FrozenPolicy::action_scale)
      .def("forward", [](const gh::FrozenPolicy& p, const Eigen::VectorXf& obs) { return gh::frozen_forward(p, obs); })
      .def("to_bytes", [](const gh::FrozenPolicy& p) { return py::bytes(gh::frozen_to_bytes(p)); })
      .def_static("from_bytes", [](const py::bytes& b) { return gh::frozen_from_bytes(std::string(b)); });
  m.def("load_frozen", &gh::load_frozen, py::arg("path"));
  m.def("scenario_names", &gh::scenario_preset_names);

  m.def("_default_config_json", [] { return gh::config_to_json(gh::TrainConfig{}).dump(); });
  m.def("_train", [](const std::string& cfg_json) {
    const gh::TrainConfig cfg = gh::config_from_json(nlohmann::json::parse(cfg_json));
    gh::TrainResult r;
    {
      py::gil_scoped_release release;
      r = gh::train(cfg);
    }
    py::list rows;
    for (const auto& row : r.metrics) {
      py::dict d;
      d["iteration"] = row.iteration;
      d["mean_task_reward"] = row.mean_task_reward;
      d["frac_rec_gated"] = row.frac_rec_gated;
      d["policy_loss"] = row.policy_loss;
      d["mean_tracking_error"] = row.mean_tracking_error;
      rows.append(d);
    }
    return rows;
  });
  m.def("_rollout", [](const gh::FrozenPolicy& p, const std::string& name, std::uint64_t seed, int steps,
                       bool trace) {
    gh::Scenario s = gh::scenario_preset(name);
    s.seed = seed;
    if (steps > 0) s.steps = steps;
    gh::RolloutOptions opt;
    opt.record_trace = trace;
    const gh::RolloutResult r = gh::rollout_frozen(p, sim::BipedModel{}, s, opt);
    py::dict d = summary_dict(r.summary);
    if (trace) {
      py::list pts;
      for (const auto& t : r.trace) {
        py::dict row;
        row["time"] = t.time;
        row["q"] = Eigen::VectorXd(t.q);
        row["action"] = Eigen::VectorXd(t.action);
        row["task_reward"] = t.task_reward;
        pts.append(row);
      }
      d["trace"] = pts;
    }
    return d;
  });
  m.def("_evaluate", [](const gh::FrozenPolicy& p, const std::string& suite, const std::string& out_dir) {
    const gh::EvalReport r = gh::evaluate(p, sim::BipedModel{}, gh::eval_suite(suite));
    if (!out_dir.empty()) gh::write_eval_report(r, out_dir);
    py::dict d;
    d["mean_tracking_error"] = r.mean_tracking_error;
    d["prone_success_rate"] = r.prone_success_rate;
    d["supine_success_rate"] = r.supine_success_rate;
    d["rows"] = r.rows.size();
    return d;
  });
}
