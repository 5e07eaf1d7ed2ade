#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ase/episodes.hpp"
#include "ase/experiment.hpp"
#include "ase/learner.hpp"

namespace ase {

/// Root seed of the episodes that train the user model, kept apart from the
/// evaluation episodes of the same root.
std::uint64_t training_seed(std::uint64_t root);

/// The family fitted for `config.env` (grid-nav or tilt-lander).
std::shared_ptr<const UserModelFamily> user_model_family(const ExperimentConfig& config,
                                                         const ExperimentModels& models);

struct OnlineLoopEntry {
  int index = 0;
  Condition condition = Condition::kUnassisted;
  /// θ̂ in effect while the episode ran, and after the refit that followed.
  std::vector<double> theta_before;
  std::vector<double> theta_after;
  double log_likelihood = 0.0;
  bool converged = false;
  EpisodeMetrics metrics;
};

struct OnlineLoopReport {
  std::vector<OnlineLoopEntry> entries;
  std::vector<Demonstration> dataset;
  FitResult final_fit;

  nlohmann::json to_json() const;
};

/// Alternates episodes and refits: `warmup` episodes of the learner's
/// warm-up condition, then `assisted` ase episodes with the current θ̂,
/// starting from the initial model.
OnlineLoopReport run_online_loop(const ExperimentConfig& config, const ExperimentModels& models,
                                 int warmup, int assisted, std::uint64_t root_seed);

struct ExperimentResult {
  /// Conditions in config order, episodes ascending within each.
  std::vector<EpisodeMetrics> metrics;
  std::vector<Demonstration> demonstrations;
  std::vector<nlohmann::json> synthesis_log;
  std::vector<double> assistant_theta;
  std::optional<OnlineLoopReport> training;
};

/// Runs every requested condition over the same seeds. The ase model comes
/// from `assistant_theta` or, failing that, from an online loop run on the
/// training seed.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, ExperimentModels models);

/// Writes whichever outputs the config names.
void write_outputs(const ExperimentConfig& config, const ExperimentResult& result);

struct DelaySweepCell {
  int d_max = 0;
  Condition condition = Condition::kUnassisted;
  double mean_return = 0.0;
  double mean_belief = 0.0;
  std::vector<double> returns;
};

std::vector<DelaySweepCell> run_delay_sweep(const ExperimentConfig& config,
                                            const std::vector<int>& d_max_values);
void write_delay_sweep_csv(const std::filesystem::path& path, const std::vector<DelaySweepCell>& cells);

struct DatasetSweepPoint {
  int size = 0;
  FitResult fit;
};

/// Fits the user model on growing prefixes of one set of warm-up episodes.
std::vector<DatasetSweepPoint> run_dataset_sweep(const ExperimentConfig& config,
                                                 const std::vector<int>& sizes);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Orderings and metric invariants that must hold for a finished run.
std::vector<Check> check_experiment(const ExperimentConfig& config, const ExperimentResult& result);
std::vector<Check> check_delay_sweep(const std::vector<DelaySweepCell>& cells);

/// Per (env, condition) means and standard errors of every metric column.
nlohmann::json summarize(const std::vector<EpisodeMetrics>& metrics);
std::vector<EpisodeMetrics> read_metrics_csv(const std::filesystem::path& path);

/// Mean of `field` over the episodes of `condition` (NaN if none carry it).
double mean_metric(const std::vector<EpisodeMetrics>& metrics, Condition condition,
                   const std::string& field);

}  // namespace ase
