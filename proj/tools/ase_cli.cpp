#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ase/harness.hpp"

namespace {

using nlohmann::json;

int report_checks(const std::vector<ase::Check>& checks) {
  int failed = 0;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
    std::cout << '\n';
    failed += c.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

void write_json(const std::string& path, const json& doc) {
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ase::ConfigError("cannot write " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Assistive state estimation lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<unsigned> threads;
  std::string metrics_out;
  bool check = false;

  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the root seed");
  run->add_option("--episodes", episodes, "Override the episode count");
  run->add_option("--threads", threads, "Worker threads (0: all cores)");
  run->add_option("--metrics-csv", metrics_out, "Override the metrics CSV path");
  run->add_flag("--check", check, "Exit nonzero if an ordering or invariant fails");

  std::string kind = "delay";
  std::vector<int> values;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Sweep d_max (delay-track) or dataset size (learner)");
  sweep->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--kind", kind, "delay or dataset")->check(CLI::IsMember({"delay", "dataset"}));
  sweep->add_option("--values", values, "d_max values or dataset sizes")->delimiter(',')->required();
  sweep->add_option("--out", sweep_out, "Output file (CSV for delay, JSON for dataset)");
  sweep->add_option("--seed", seed, "Override the root seed");
  sweep->add_option("--episodes", episodes, "Override the episode count");
  sweep->add_flag("--check", check, "Exit nonzero if an ordering fails");

  std::string demos_path;
  std::string fit_out;
  std::vector<double> init;
  auto* fit = app.add_subcommand("fit", "Fit a user model to a demonstration log");
  fit->add_option("config", config_path, "Experiment config naming the environment")->required()->check(CLI::ExistingFile);
  fit->add_option("--demos", demos_path, "Demonstrations (JSON lines)")->required()->check(CLI::ExistingFile);
  fit->add_option("--init", init, "Initial parameters")->delimiter(',');
  fit->add_option("--out", fit_out, "FitResult JSON (default stdout)");

  std::string profile = "paper";
  std::uint64_t map_seed = 1;
  std::string map_out;
  auto* gen = app.add_subcommand("gen-map", "Generate a random grid map");
  gen->add_option("--profile", profile, "paper or habitat")->check(CLI::IsMember({"paper", "habitat"}));
  gen->add_option("--seed", map_seed, "Generator seed");
  gen->add_option("--out", map_out, "Map file")->required();

  std::vector<std::string> metrics_in;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate metrics CSVs");
  report->add_option("metrics", metrics_in, "Metrics CSV files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "Summary JSON (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    auto load = [&] {
      auto config = ase::ExperimentConfig::load(config_path);
      if (seed) config.seed = *seed;
      if (episodes) config.episodes = *episodes;
      if (threads) config.threads = *threads;
      if (!metrics_out.empty()) config.output.metrics_csv = metrics_out;
      config.validate();
      return config;
    };

    if (*run) {
      const auto config = load();
      const auto result = ase::run_experiment(config);
      ase::write_outputs(config, result);
      if (config.output.metrics_csv.empty()) ase::write_metrics_csv(std::cout, result.metrics);
      else std::cerr << ase::summarize(result.metrics).dump(2) << '\n';
      if (check) return report_checks(ase::check_experiment(config, result));
      return 0;
    }
    if (*sweep) {
      const auto config = load();
      if (kind == "delay") {
        const auto cells = ase::run_delay_sweep(config, values);
        if (!sweep_out.empty()) {
          ase::write_delay_sweep_csv(sweep_out, cells);
        } else {
          std::cout << "d_max,condition,episodes,mean_return,mean_belief\n";
          for (const auto& c : cells) {
            std::cout << c.d_max << ',' << ase::to_string(c.condition) << ',' << c.returns.size() << ','
                      << ase::format_double(c.mean_return) << ',' << ase::format_double(c.mean_belief) << '\n';
          }
        }
        if (check) return report_checks(ase::check_delay_sweep(cells));
        return 0;
      }
      const auto points = ase::run_dataset_sweep(config, values);
      json doc = json::array();
      for (const auto& p : points) doc.push_back({{"size", p.size}, {"fit", p.fit.to_json()}});
      write_json(sweep_out, doc);
      return 0;
    }
    if (*fit) {
      const auto config = load();
      const auto models = ase::ExperimentModels::create(config);
      const auto family = ase::user_model_family(config, models);
      const auto demos = ase::read_demonstrations(demos_path);
      if (init.empty()) init = ase::ExperimentModels::initial_theta(config, models);
      auto opt = config.learner.value_or(ase::LearnerSettings{}).optimizer;
      if (opt.threads == 0) opt.threads = config.threads;
      const auto result = ase::fit_user_model(demos, *family, family->project(init), opt);
      write_json(fit_out, result.to_json());
      return 0;
    }
    if (*gen) {
      const auto p = profile == "habitat" ? ase::MapProfile::habitat() : ase::MapProfile::paper();
      ase::generate_map(p, map_seed).save(map_out);
      return 0;
    }
    if (*report) {
      std::vector<ase::EpisodeMetrics> rows;
      for (const auto& path : metrics_in) {
        auto part = ase::read_metrics_csv(path);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      write_json(report_out, ase::summarize(rows));
      return 0;
    }
  } catch (const ase::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
