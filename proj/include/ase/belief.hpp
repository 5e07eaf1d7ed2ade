#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ase/common.hpp"

namespace ase {

/// Tolerance within which every stored probability vector sums to one.
inline constexpr double kProbTolerance = 1e-9;
/// Inputs farther than this from summing to one are rejected rather than
/// renormalized.
inline constexpr double kRenormTolerance = 1e-6;

/// Probability vector over a finite state space.
class DiscreteBelief {
 public:
  /// Renormalizes `probs` if its sum lies within kRenormTolerance of one;
  /// throws ConfigError otherwise or on negative / non-finite entries.
  explicit DiscreteBelief(std::vector<double> probs);

  static DiscreteBelief uniform(std::size_t num_states);
  static DiscreteBelief delta(std::size_t num_states, std::size_t state);
  /// Uniform over `support`, zero elsewhere.
  static DiscreteBelief uniform_over(std::size_t num_states,
                                     std::span<const std::size_t> support);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t s) const { return probs_[s]; }
  std::span<const double> probs() const { return probs_; }

  /// Lowest-index state of maximal probability.
  std::size_t argmax() const;
  /// Shannon entropy in nats.
  double entropy() const;

 private:
  struct Trusted {};
  DiscreteBelief(std::vector<double> probs, Trusted) : probs_(std::move(probs)) {}
  friend class BeliefKernel;

  std::vector<double> probs_;
};

/// One sparse entry of p_dyn(. | s, a).
struct Transition {
  std::uint32_t next;
  double prob;
};

/// Finite POMDP tables. Dynamics are stored sparsely so that large
/// deterministic grids stay cheap; the JSON form is dense.
class PomdpSpec {
 public:
  /// `dynamics[s * num_actions + a]` lists the successors of (s, a).
  /// `p_obs[s]` is a distribution over the observation alphabet.
  PomdpSpec(std::size_t num_states, std::size_t num_actions,
            std::vector<std::string> observations, std::vector<double> p_init,
            std::vector<std::vector<Transition>> dynamics,
            std::vector<std::vector<double>> p_obs, int horizon);

  /// Builds from a dense [s][a][s'] table.
  static PomdpSpec from_dense(std::size_t num_states, std::size_t num_actions,
                              std::vector<std::string> observations,
                              std::vector<double> p_init,
                              const std::vector<std::vector<std::vector<double>>>& p_dyn,
                              std::vector<std::vector<double>> p_obs, int horizon);

  static PomdpSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_observations() const { return observations_.size(); }
  const std::vector<std::string>& observations() const { return observations_; }
  std::span<const double> p_init() const { return p_init_; }
  std::span<const Transition> transitions(std::size_t state, std::size_t action) const;
  std::span<const double> p_obs(std::size_t state) const { return p_obs_[state]; }
  int horizon() const { return horizon_; }

  /// p_obs(o | s) for every s: the likelihood vector of observation `o`.
  std::vector<double> observation_likelihood(std::size_t observation) const;
  DiscreteBelief initial_belief() const;

 private:
  void validate() const;

  std::size_t num_states_;
  std::size_t num_actions_;
  std::vector<std::string> observations_;
  std::vector<double> p_init_;
  std::vector<std::vector<Transition>> dynamics_;
  std::vector<std::vector<double>> p_obs_;
  int horizon_;
};

/// What a caller wants when an observation has zero likelihood on the whole
/// predicted support.
enum class ImpossiblePolicy {
  /// Keep the predicted belief; the observation is ignored.
  kSkip,
  /// Restart from a uniform prior and apply the observation to it; if the
  /// observation is impossible everywhere the result is uniform.
  kResetUniform,
};

/// Pushes `belief` through p_dyn(. | s, action).
DiscreteBelief predict(const DiscreteBelief& belief, std::size_t action,
                       const PomdpSpec& spec);

/// Recursive Bayes filter step: optional prediction through the dynamics,
/// then pointwise multiplication by `likelihood` and renormalization.
/// Returns nullopt when the observation is impossible under the prediction.
std::optional<DiscreteBelief> bayes_update(const DiscreteBelief& belief,
                                           std::optional<std::size_t> action,
                                           std::span<const double> likelihood,
                                           const PomdpSpec& spec);

/// bayes_update with the impossible-observation case resolved by `policy`.
DiscreteBelief bayes_update(const DiscreteBelief& belief, std::optional<std::size_t> action,
                            std::span<const double> likelihood, const PomdpSpec& spec,
                            ImpossiblePolicy policy);

/// Conditions `prior` on `likelihood` without any dynamics. Returns nullopt
/// when the likelihood vanishes on the support of `prior`.
std::optional<DiscreteBelief> condition(const DiscreteBelief& prior,
                                        std::span<const double> likelihood);

/// KL(p || q) in nats, +infinity when q(s) = 0 < p(s).
double kl_divergence(const DiscreteBelief& p, const DiscreteBelief& q);
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Isotropic Gaussian belief N(mean, variance_scale * I) produced by a state
/// encoder.
struct GaussianBelief {
  std::vector<double> mean;
  double variance_scale = 0.0;

  GaussianBelief() = default;
  explicit GaussianBelief(std::vector<double> m, double variance = 0.0);
};

/// Euclidean distance between the means: the KL objective in the limit of
/// vanishing variance.
double gaussian_kl_limit_distance(const GaussianBelief& a, const GaussianBelief& b);

/// Deterministic map from an (observation, action) history to a state vector.
class HistoryEncoder {
 public:
  virtual ~HistoryEncoder() = default;
  virtual std::vector<double> encode(std::span<const std::vector<double>> observations,
                                     std::span<const int> actions) const = 0;

  GaussianBelief belief(std::span<const std::vector<double>> observations,
                        std::span<const int> actions, double variance_scale = 0.0) const {
    return GaussianBelief(encode(observations, actions), variance_scale);
  }
};

/// Low-level helpers shared by filters that work on raw vectors for speed.
class BeliefKernel {
 public:
  /// Wraps a vector already known to be normalized (sum within 1e-9).
  static DiscreteBelief adopt(std::vector<double> probs) {
    return DiscreteBelief(std::move(probs), DiscreteBelief::Trusted{});
  }
};

}  // namespace ase
