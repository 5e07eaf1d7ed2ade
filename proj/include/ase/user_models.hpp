#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ase/belief.hpp"
#include "ase/common.hpp"
#include "ase/delay_track.hpp"
#include "ase/grid_nav.hpp"
#include "ase/soft_q.hpp"
#include "ase/tilt_lander.hpp"

namespace ase {

/// Maps each observation symbol to the θ entry weighting it (-1: weight 1).
struct WeightLayout {
  std::vector<int> param_of_symbol;
  std::size_t num_params = 0;

  /// One shared scalar for every object of `category`.
  static WeightLayout per_category(const GridNavEnv& env,
                                   ObjectCategory category = ObjectCategory::kUniqueUnknown);
  /// One entry per object.
  static WeightLayout per_object(const GridNavEnv& env);
};

/// Biased singleton-observation model
/// p_θ(o | s) = w(o) p(o | s) / Σ_o' w(o') p(o' | s).
class WeightedObsUserModel {
 public:
  WeightedObsUserModel(const GridNavEnv& env, WeightLayout layout, std::vector<double> theta);
  /// θ = 1 everywhere: the true singleton model.
  static WeightedObsUserModel unbiased(const GridNavEnv& env);

  const GridNavEnv& env() const { return *env_; }
  const WeightLayout& layout() const { return layout_; }
  const std::vector<double>& theta() const { return theta_; }
  double weight(int symbol) const;
  /// Σ_o w(o) p(o | s) for every state.
  const std::vector<double>& normalizer() const { return normalizer_; }

  /// p_θ(symbol | s) for every state (0 where Z(s) = 0).
  std::vector<double> likelihood(int symbol) const;
  /// Filter step with the biased likelihood; impossible observations are
  /// ignored (the belief is only predicted).
  DiscreteBelief update(const DiscreteBelief& belief, std::optional<std::size_t> action,
                        int symbol) const;

 private:
  const GridNavEnv* env_;
  WeightLayout layout_;
  std::vector<double> theta_;
  std::vector<double> normalizer_;
};

/// Ignores observations with more than `max_items` components.
struct BandwidthUserModel {
  std::size_t max_items = 1;
  bool accepts(std::size_t components) const { return components <= max_items; }
};

/// Grid user: weighted singleton model behind a bandwidth limit. An empty
/// observation set means "nothing visible".
class NavUserModel {
 public:
  NavUserModel(WeightedObsUserModel weights, BandwidthUserModel bandwidth = {})
      : weights_(std::move(weights)), bandwidth_(bandwidth) {}

  const WeightedObsUserModel& weights() const { return weights_; }
  const BandwidthUserModel& bandwidth() const { return bandwidth_; }

  DiscreteBelief initial_belief() const;
  DiscreteBelief update(const DiscreteBelief& belief, std::optional<std::size_t> action,
                        std::span<const int> objects) const;
  DiscreteBelief update_symbol(const DiscreteBelief& belief, std::optional<std::size_t> action,
                               int symbol) const {
    return weights_.update(belief, action, symbol);
  }

 private:
  WeightedObsUserModel weights_;
  BandwidthUserModel bandwidth_;
};

/// Treats every lane frame as current; the point belief is the frame itself.
struct DelayBlindUserModel {
  std::vector<double> update(const TrackObservation& shown) const { return shown.state_vector(); }
};

/// Logistic percept ŝ = -π + 2π σ(θ0 + θ1 o).
struct DistortedPerceptUserModel {
  double theta0 = 0.0;
  double theta1 = 0.0;

  /// θ0 = 0, θ1 = 2/π: slope one at the origin.
  static DistortedPerceptUserModel identity_like();
  double percept(double o) const;
  /// dŝ/dθ0 (dŝ/dθ1 = o · dŝ/dθ0).
  double percept_grad_theta0(double o) const;
};

/// Boltzmann-rational goal-conditioned policy π(a | s) ∝ exp(β Q(s, a)).
class BoltzmannPolicy {
 public:
  BoltzmannPolicy(std::shared_ptr<const SoftQTable> q, double beta);

  double beta() const { return beta_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t goal() const { return goal_; }
  std::span<const double> action_probs(std::size_t state) const {
    return std::span<const double>(table_).subspan(state * num_actions_, num_actions_);
  }
  /// Σ_s π(a | s) b(s).
  std::vector<double> marginal(const DiscreteBelief& belief) const;

 private:
  std::size_t num_actions_;
  std::size_t goal_;
  double beta_;
  std::vector<double> table_;
};

/// Normalized exp(β · score).
std::vector<double> boltzmann(std::span<const double> scores, double beta);
std::size_t sample_index(std::span<const double> probs, Rng& rng);

/// Samples a ~ Σ_s π(a | s) b(s).
std::size_t user_act(const BoltzmannPolicy& policy, const DiscreteBelief& belief, Rng& rng);

/// {p(fire-left), p(fire-right)} with p(fire-right) = σ(κ ŝ).
std::array<double, 2> lander_action_probs(double inferred_angle, double kappa);
int lander_user_policy(double inferred_angle, double kappa, Rng& rng);

/// Steering preferences of a lane-keeping user acting on a (possibly stale)
/// view: score(a) = -Σ_k (view[k] - k h')² over the window, h' being the
/// heading after action a.
std::vector<double> steering_scores(std::span<const double> believed_state,
                                    const DelayTrackConfig& config);
int track_user_policy(std::span<const double> believed_state, const DelayTrackConfig& config,
                      double beta, Rng& rng);

}  // namespace ase
