#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ase/assistant.hpp"
#include "ase/experiment.hpp"
#include "ase/grid_nav.hpp"
#include "ase/learner.hpp"
#include "ase/row_reveal.hpp"
#include "ase/tilt_lander.hpp"
#include "ase/user_models.hpp"

namespace ase {

/// Everything shared by the grid episodes of one experiment.
struct NavContext {
  std::shared_ptr<const GridNavEnv> env;
  std::shared_ptr<QTableCache> q_cache;
  std::shared_ptr<const NavFamily> family;
  NavSettings settings;

  static std::shared_ptr<const NavContext> create(const NavSettings& settings);
  const WeightLayout& layout() const { return family->layout(); }
  NavUserModel user_model(const std::vector<double>& theta) const;
};

/// Environment + condition pipeline for one grid episode. The user (human
/// or simulated) reads shown() and answers with act().
class NavEpisode {
 public:
  NavEpisode(std::shared_ptr<const NavContext> ctx, Condition condition,
             std::vector<double> assistant_theta, std::uint64_t root_seed, std::uint64_t episode,
             std::optional<std::pair<std::size_t, std::size_t>> start_goal = std::nullopt);

  const NavContext& context() const { return *ctx_; }
  Condition condition() const { return condition_; }
  std::uint64_t episode() const { return episode_; }
  std::size_t start() const { return start_; }
  std::size_t goal() const { return goal_; }
  std::size_t state() const { return state_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  bool success() const { return state_ == goal_; }
  double episode_return() const { return return_; }

  /// Observation shown at the current step (empty = nothing visible).
  const std::vector<int>& shown() const { return shown_; }
  const std::vector<int>& ambient() const { return ambient_; }
  const std::optional<nlohmann::json>& last_synthesis() const { return synthesis_; }
  const std::vector<std::size_t>& state_trace() const { return states_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::vector<std::vector<int>>& shown_history() const { return shown_history_; }

  void act(std::size_t action);
  Demonstration demonstration() const;

 private:
  void emit();

  std::shared_ptr<const NavContext> ctx_;
  Condition condition_;
  std::uint64_t episode_;
  std::optional<NavUserModel> assistant_user_model_;
  Rng ambient_rng_;
  Rng assistant_rng_;
  std::size_t start_ = 0;
  std::size_t goal_ = 0;
  std::size_t state_ = 0;
  int t_ = 0;
  bool done_ = false;
  double return_ = 0.0;
  std::optional<DiscreteBelief> assistant_belief_;
  std::optional<DiscreteBelief> predicted_user_;
  std::vector<int> ambient_;
  std::vector<int> shown_;
  std::optional<nlohmann::json> synthesis_;
  std::vector<std::size_t> states_;
  std::vector<int> actions_;
  std::vector<std::vector<int>> shown_history_;
};

/// Protocol view of the current step: observation plus render hints (goal
/// and the mentioned object's placements in the user's mental map).
nlohmann::json nav_frame(const NavEpisode& episode);

/// Environment + condition pipeline for one lander episode.
class LanderEpisode {
 public:
  LanderEpisode(const TiltLanderEnv& env, Condition condition, DistortedPerceptUserModel assistant_model,
                std::uint64_t root_seed, std::uint64_t episode);

  Condition condition() const { return condition_; }
  std::uint64_t episode() const { return episode_; }
  const LanderState& state() const { return state_; }
  int t() const { return state_.t; }
  bool done() const { return done_; }
  double shown() const { return shown_; }
  double episode_return() const { return return_; }
  const std::vector<double>& angle_trace() const { return angles_; }
  const std::vector<double>& shown_history() const { return shown_history_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::optional<nlohmann::json>& last_synthesis() const { return synthesis_; }

  void act(int action);
  Demonstration demonstration() const;

 private:
  void emit();

  const TiltLanderEnv* env_;
  Condition condition_;
  std::uint64_t episode_;
  DistortedPerceptUserModel assistant_model_;
  Rng env_rng_;
  Rng assistant_rng_;
  LanderState state_;
  bool done_ = false;
  double return_ = 0.0;
  double shown_ = 0.0;
  std::optional<nlohmann::json> synthesis_;
  std::vector<double> angles_;
  std::vector<double> shown_history_;
  std::vector<int> actions_;
};

nlohmann::json lander_frame(const LanderEpisode& episode, bool debug = false);

/// Outcome fields that need no user belief (belief_in_true_state stays
/// empty).
EpisodeMetrics episode_metrics(const NavEpisode& episode);
EpisodeMetrics episode_metrics(const LanderEpisode& episode);

struct EpisodeResult {
  Demonstration demonstration;
  EpisodeMetrics metrics;
  std::vector<nlohmann::json> synthesis_log;
};

/// Built once per experiment and shared by all of its episodes.
struct ExperimentModels {
  std::shared_ptr<const NavContext> nav;
  std::shared_ptr<const ClassPixelModel> pixels;
  std::shared_ptr<const TiltLanderEnv> lander;
  /// θ̂ used by the ase condition (nav weights or lander (θ0, θ1)).
  std::vector<double> assistant_theta;

  static ExperimentModels create(const ExperimentConfig& config);
  /// User model assumed by naive ASE (θ = 1 / identity-like percept).
  static std::vector<double> initial_theta(const ExperimentConfig& config, const ExperimentModels& models);
};

/// One seed-paired episode of `condition` with a simulated user. Episode
/// `episode` of every condition shares the environment realization.
EpisodeResult run_episode(const ExperimentConfig& config, Condition condition,
                          const ExperimentModels& models, std::uint64_t episode);

EpisodeResult run_nav_episode(const std::shared_ptr<const NavContext>& ctx, Condition condition,
                              const std::vector<double>& assistant_theta, std::uint64_t root_seed,
                              std::uint64_t episode);
EpisodeResult run_row_episode(const ClassPixelModel& model, Condition condition,
                              std::uint64_t root_seed, std::uint64_t episode);
EpisodeResult run_track_episode(const TrackSettings& settings, Condition condition,
                                std::uint64_t root_seed, std::uint64_t episode);
EpisodeResult run_lander_episode(const TiltLanderEnv& env, const LanderSettings& settings,
                                 Condition condition, const std::vector<double>& assistant_theta,
                                 std::uint64_t root_seed, std::uint64_t episode);

}  // namespace ase
