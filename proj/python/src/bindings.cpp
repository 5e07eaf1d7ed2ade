// Python extension. Structured values cross the boundary as JSON text; the
// aselab package turns them back into dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ase/assistant.hpp"
#include "ase/bridge.hpp"
#include "ase/harness.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

ase::ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  return ase::ExperimentConfig::from_json(json::parse(text), base_dir);
}

std::string run_experiment(const std::string& config_text, const std::string& base_dir) {
  const auto config = parse_config(config_text, base_dir);
  ase::ExperimentResult result;
  {
    py::gil_scoped_release release;
    result = ase::run_experiment(config);
  }
  json metrics = json::array();
  for (const auto& m : result.metrics) metrics.push_back(m.to_json());
  json demos = json::array();
  for (const auto& d : result.demonstrations) demos.push_back(d.to_json());
  json out = {{"metrics", metrics},
              {"demonstrations", demos},
              {"assistant_theta", result.assistant_theta},
              {"summary", ase::summarize(result.metrics)},
              {"checks", json::array()}};
  out["training"] = result.training ? result.training->to_json() : json();
  for (const auto& c : ase::check_experiment(config, result))
    out["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return out.dump();
}

std::string delay_sweep(const std::string& config_text, const std::vector<int>& d_values,
                        const std::string& base_dir) {
  const auto config = parse_config(config_text, base_dir);
  std::vector<ase::DelaySweepCell> cells;
  {
    py::gil_scoped_release release;
    cells = ase::run_delay_sweep(config, d_values);
  }
  json out = json::array();
  for (const auto& c : cells) {
    out.push_back({{"d_max", c.d_max},
                   {"condition", ase::to_string(c.condition)},
                   {"mean_return", c.mean_return},
                   {"mean_belief", c.mean_belief},
                   {"returns", c.returns}});
  }
  return out.dump();
}

std::string fit(const std::string& config_text, const std::string& demos_text, std::vector<double> init,
                const std::string& base_dir) {
  const auto config = parse_config(config_text, base_dir);
  std::vector<ase::Demonstration> demos;
  for (const auto& d : json::parse(demos_text)) demos.push_back(ase::Demonstration::from_json(d));
  const auto models = ase::ExperimentModels::create(config);
  const auto family = ase::user_model_family(config, models);
  if (init.empty()) init = ase::ExperimentModels::initial_theta(config, models);
  const auto optimizer = config.learner ? config.learner->optimizer : ase::OptimizerConfig{};
  py::gil_scoped_release release;
  return ase::fit_user_model(demos, *family, init, optimizer).to_json().dump();
}

std::vector<double> bayes_filter(const std::vector<double>& init,
                                 const std::vector<std::vector<std::vector<double>>>& dynamics,
                                 const std::vector<std::vector<double>>& observation_model,
                                 const std::vector<std::size_t>& actions,
                                 const std::vector<std::size_t>& observations) {
  if (observations.empty() || actions.size() + 1 != observations.size())
    throw ase::ConfigError("need one more observation than actions");
  const std::size_t S = init.size();
  const std::size_t A = dynamics.empty() ? 0 : dynamics.front().size();
  const std::size_t O = observation_model.empty() ? 0 : observation_model.front().size();
  std::vector<std::string> names;
  for (std::size_t o = 0; o < O; ++o) names.push_back("o" + std::to_string(o));
  const auto spec = ase::PomdpSpec::from_dense(S, A, names, init, dynamics, observation_model,
                                               static_cast<int>(observations.size()));
  auto lik = [&](std::size_t o) {
    if (o >= O) throw ase::ConfigError("observation out of range");
    std::vector<double> l(S);
    for (std::size_t s = 0; s < S; ++s) l[s] = observation_model[s][o];
    return l;
  };
  auto b = ase::bayes_update(spec.initial_belief(), std::nullopt, lik(observations[0]), spec);
  for (std::size_t k = 1; k < observations.size() && b; ++k) b = ase::bayes_update(*b, actions[k - 1], lik(observations[k]), spec);
  if (!b) throw ase::ConfigError("observation sequence has zero probability");
  std::vector<double> out(S);
  for (std::size_t s = 0; s < S; ++s) out[s] = (*b)[s];
  return out;
}

py::dict soft_q(const std::string& map_path, std::size_t goal) {
  const ase::GridNavEnv env(ase::GridMap::load(map_path));
  const auto& mdp = *env.mdp();
  const auto table = ase::soft_q_iteration(mdp, goal);
  const auto bfs = ase::bfs_distance_to_goal(mdp, goal);
  std::vector<int> greedy(env.num_states(), -1);
  for (std::size_t s : env.free_states())
    greedy[s] = ase::greedy_path_length(mdp, table, s, static_cast<int>(env.num_states()));
  py::dict out;
  out["residual"] = ase::bellman_residual(mdp, table);
  out["sweeps"] = table.sweeps();
  out["bfs"] = bfs;
  out["greedy"] = greedy;
  out["free_states"] = env.free_states();
  return out;
}

ase::BridgeService::Clock::time_point at(double seconds) {
  return ase::BridgeService::Clock::time_point(
      std::chrono::duration_cast<ase::BridgeService::Clock::duration>(std::chrono::duration<double>(seconds)));
}

std::string dump_all(const std::vector<json>& replies) { return json(replies).dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Assistive state estimation core";

  py::register_exception<ase::Error>(m, "AseError", PyExc_RuntimeError);
  py::register_exception<ase::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("load_config", [](const std::string& path) { return ase::ExperimentConfig::load(path).to_json().dump(); });
  m.def("normalize_config", [](const std::string& text, const std::string& base_dir) {
    return parse_config(text, base_dir).to_json().dump();
  });
  m.def("run_experiment", &run_experiment);
  m.def("delay_sweep", &delay_sweep);
  m.def("fit", &fit);
  m.def("bayes_filter", &bayes_filter);
  m.def("soft_q", &soft_q);
  m.def("percept", [](double o, double t0, double t1) { return ase::DistortedPerceptUserModel{t0, t1}.percept(o); });
  m.def("logistic_invert", [](double angle, double t0, double t1) {
    return std::get<double>(ase::logistic_invert(angle, t0, t1).payload);
  });

  py::class_<ase::BridgeService>(m, "BridgeService")
      .def(py::init([](const std::string& text, const std::string& base_dir) {
        return std::make_unique<ase::BridgeService>(ase::BridgeConfig::from_json(json::parse(text), base_dir));
      }))
      .def("handle", [](ase::BridgeService& s, const std::string& text, double now) {
        return dump_all(s.handle_text(text, at(now)));
      })
      .def("tick", [](ase::BridgeService& s, double now) { return dump_all(s.tick(at(now))); })
      .def("health", [](const ase::BridgeService& s) { return s.health().dump(); })
      .def("sessions", [](const ase::BridgeService& s) { return s.sessions().dump(); })
      .def("session_count", &ase::BridgeService::session_count)
      .def("flush_log", &ase::BridgeService::flush_log);
}
