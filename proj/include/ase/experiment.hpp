#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ase/delay_track.hpp"
#include "ase/grid_nav.hpp"
#include "ase/learner.hpp"
#include "ase/soft_q.hpp"
#include "ase/tilt_lander.hpp"

namespace ase {

enum class Condition { kUnassisted, kRandom, kNaiveAse, kAse, kOracle };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& name);
bool is_assisted(Condition c);

/// Environment ids.
inline constexpr const char* kGridNav = "grid-nav";
inline constexpr const char* kRowReveal = "row-reveal";
inline constexpr const char* kDelayTrack = "delay-track";
inline constexpr const char* kTiltLander = "tilt-lander";

struct NavSettings {
  /// Map file; when empty the map is generated from `profile` and `map_seed`.
  std::string map_path;
  std::string profile = "paper";
  std::uint64_t map_seed = 1;
  GridNavConfig nav;
  SoftQConfig q;
  /// Boltzmann inverse temperature of the simulated user (and of the
  /// learner's hindsight policy).
  double beta = 1.0;
  /// "category": one θ for all category-(a) objects; "object": one per object.
  std::string layout = "category";
  /// Hidden trust weights of the simulated user.
  std::vector<double> user_theta{0.0};
  std::size_t bandwidth = 1;
  /// ASE candidate set: "visible" objects or "all" singletons.
  std::string candidates = "visible";
  /// Random-baseline candidate set.
  std::string random_candidates = "all";
  /// Directory for persisted Q tables (empty: memory only).
  std::string q_cache_dir;

  static NavSettings from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct RowSettings {
  int num_classes = 10;
  int rows = 28;
  int cols = 28;
  double ink = 0.9;
  double background = 0.05;
  /// Optional flat binary dataset to estimate the class model from.
  std::string images_path;
  std::string labels_path;

  static RowSettings from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct TrackSettings {
  DelayTrackConfig track;
  double beta = 20.0;

  static TrackSettings from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct LanderSettings {
  TiltLanderConfig lander;
  /// Policy gain of the simulated user and the learner's model.
  double kappa = 12.0;
  /// Hidden percept distortion of the simulated user.
  double user_theta0 = 0.0;
  double user_theta1 = 0.07;

  static LanderSettings from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct LearnerSettings {
  OptimizerConfig optimizer;
  /// Initial model; defaults to θ = 1 (nav) or the identity-like percept
  /// (lander).
  std::vector<double> init;
  /// Online loop used to prepare the ASE model before evaluation episodes.
  int unassisted_episodes = 10;
  int assisted_episodes = 5;
  /// Condition used for the warm-up episodes ("unassisted" or "naive-ase").
  std::string warmup_condition = "unassisted";

  static LearnerSettings from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct OutputSettings {
  std::string metrics_csv;
  std::string episodes_jsonl;
  std::string fit_trace;
  std::string synthesis_log;
};

struct ExperimentConfig {
  std::string env = kGridNav;
  /// Conditions run with paired seeds.
  std::vector<Condition> conditions{Condition::kUnassisted};
  int episodes = 10;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  NavSettings nav;
  RowSettings row;
  TrackSettings track;
  LanderSettings lander;
  /// Required for ase unless `assistant_theta` is given.
  std::optional<LearnerSettings> learner;
  /// Fixed user model for ase (skips learning).
  std::vector<double> assistant_theta;
  OutputSettings output;

  static ExperimentConfig from_json(const nlohmann::json& doc,
                                    const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Throws ConfigError on condition/env mismatches.
  void validate() const;
};

/// Per-episode outcome. Fields not defined for an environment stay empty.
struct EpisodeMetrics {
  std::string env;
  Condition condition = Condition::kUnassisted;
  std::uint64_t episode = 0;
  int steps = 0;
  double episode_return = 0.0;
  std::optional<bool> success;
  std::optional<double> distance_to_goal_normalized;
  std::optional<int> time_to_goal;
  std::optional<double> belief_in_true_state;
  std::optional<double> mean_abs_tilt;
  std::optional<double> final_third_abs_tilt;
  std::optional<double> final_accuracy;
  /// Normalized distance at t = 0..T (nav).
  std::vector<double> distance_trace;
  /// Accuracy after each revealed row (row-reveal).
  std::vector<double> per_step_accuracy;

  nlohmann::json to_json() const;
};

/// Frozen CSV layout of the metrics file.
const std::vector<std::string>& metrics_csv_columns();
void write_metrics_csv(std::ostream& out, const std::vector<EpisodeMetrics>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpisodeMetrics>& rows);

/// Floor applied to b_H(s_true) before taking logs.
inline constexpr double kBeliefFloor = 1e-9;

}  // namespace ase
