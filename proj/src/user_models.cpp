#include "ase/user_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ase {

WeightLayout WeightLayout::per_category(const GridNavEnv& env, ObjectCategory category) {
  WeightLayout layout;
  layout.num_params = 1;
  layout.param_of_symbol.assign(env.num_symbols(), -1);
  for (std::size_t i = 0; i < env.num_objects(); ++i) {
    if (env.map().objects[i].category == category) layout.param_of_symbol[i] = 0;
  }
  return layout;
}

WeightLayout WeightLayout::per_object(const GridNavEnv& env) {
  WeightLayout layout;
  layout.num_params = env.num_objects();
  layout.param_of_symbol.assign(env.num_symbols(), -1);
  for (std::size_t i = 0; i < env.num_objects(); ++i) layout.param_of_symbol[i] = static_cast<int>(i);
  return layout;
}

// ---------------------------------------------------------------------------

WeightedObsUserModel::WeightedObsUserModel(const GridNavEnv& env, WeightLayout layout,
                                           std::vector<double> theta)
    : env_(&env), layout_(std::move(layout)), theta_(std::move(theta)) {
  if (layout_.param_of_symbol.size() != env.num_symbols()) {
    throw ConfigError("weight layout does not match the observation alphabet");
  }
  if (theta_.size() != layout_.num_params) throw ConfigError("theta has wrong dimension");
  for (double w : theta_) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("theta entries must lie in [0, 1]");
  }
  normalizer_.assign(env.num_states(), 0.0);
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    const auto vis = env.visible(s);
    if (vis.empty()) {
      normalizer_[s] = weight(env.nothing_symbol());
      continue;
    }
    double z = 0.0;
    for (int o : vis) z += weight(o);
    normalizer_[s] = z / static_cast<double>(vis.size());
  }
}

WeightedObsUserModel WeightedObsUserModel::unbiased(const GridNavEnv& env) {
  auto layout = WeightLayout::per_category(env);
  std::vector<double> ones(layout.num_params, 1.0);
  return WeightedObsUserModel(env, std::move(layout), std::move(ones));
}

double WeightedObsUserModel::weight(int symbol) const {
  if (symbol < 0 || static_cast<std::size_t>(symbol) >= layout_.param_of_symbol.size()) {
    throw ConfigError("observation symbol out of range");
  }
  const int p = layout_.param_of_symbol[static_cast<std::size_t>(symbol)];
  return p < 0 ? 1.0 : theta_[static_cast<std::size_t>(p)];
}

std::vector<double> WeightedObsUserModel::likelihood(int symbol) const {
  const double w = weight(symbol);
  std::vector<double> out(env_->num_states(), 0.0);
  if (w == 0.0) return out;
  const bool nothing = symbol == env_->nothing_symbol();
  for (std::size_t s = 0; s < out.size(); ++s) {
    const auto vis = env_->visible(s);
    double p = 0.0;
    if (nothing) {
      p = vis.empty() ? 1.0 : 0.0;
    } else if (std::binary_search(vis.begin(), vis.end(), symbol)) {
      p = 1.0 / static_cast<double>(vis.size());
    }
    if (p > 0.0 && normalizer_[s] > 0.0) out[s] = w * p / normalizer_[s];
  }
  return out;
}

DiscreteBelief WeightedObsUserModel::update(const DiscreteBelief& belief,
                                            std::optional<std::size_t> action, int symbol) const {
  return bayes_update(belief, action, likelihood(symbol), env_->singleton_pomdp(),
                      ImpossiblePolicy::kSkip);
}

DiscreteBelief NavUserModel::initial_belief() const {
  return weights_.env().singleton_pomdp().initial_belief();
}

DiscreteBelief NavUserModel::update(const DiscreteBelief& belief, std::optional<std::size_t> action,
                                    std::span<const int> objects) const {
  if (!bandwidth_.accepts(objects.size())) {
    return action ? predict(belief, *action, weights_.env().singleton_pomdp()) : belief;
  }
  if (objects.size() > 1) {
    throw ConfigError("the weighted user model only interprets singleton observations");
  }
  const int symbol = objects.empty() ? weights_.env().nothing_symbol() : objects.front();
  return weights_.update(belief, action, symbol);
}

// ---------------------------------------------------------------------------

DistortedPerceptUserModel DistortedPerceptUserModel::identity_like() {
  return {0.0, 2.0 / std::numbers::pi};
}

double DistortedPerceptUserModel::percept(double o) const {
  return -std::numbers::pi + 2.0 * std::numbers::pi * sigmoid(theta0 + theta1 * o);
}

double DistortedPerceptUserModel::percept_grad_theta0(double o) const {
  const double s = sigmoid(theta0 + theta1 * o);
  return 2.0 * std::numbers::pi * s * (1.0 - s);
}

// ---------------------------------------------------------------------------

std::vector<double> boltzmann(std::span<const double> scores, double beta) {
  if (scores.empty()) throw ConfigError("boltzmann: no scores");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : scores) m = std::max(m, beta * v);
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(beta * scores[i] - m);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (x < probs[i]) return i;
    x -= probs[i];
  }
  // Rounding slack: last index with positive mass.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  throw Error("sample_index: empty distribution");
}

BoltzmannPolicy::BoltzmannPolicy(std::shared_ptr<const SoftQTable> q, double beta)
    : num_actions_(q->num_actions()), goal_(q->goal()), beta_(beta) {
  if (!(beta > 0.0)) throw ConfigError("Boltzmann temperature beta must be > 0");
  table_.resize(q->num_states() * num_actions_);
  for (std::size_t s = 0; s < q->num_states(); ++s) {
    const auto probs = boltzmann(std::span<const double>(q->row(s), num_actions_), beta);
    std::copy(probs.begin(), probs.end(), table_.begin() + static_cast<std::ptrdiff_t>(s * num_actions_));
  }
}

std::vector<double> BoltzmannPolicy::marginal(const DiscreteBelief& belief) const {
  if (belief.size() * num_actions_ != table_.size()) {
    throw ConfigError("belief and policy disagree on the state space");
  }
  std::vector<double> out(num_actions_, 0.0);
  for (std::size_t s = 0; s < belief.size(); ++s) {
    const double b = belief[s];
    if (b == 0.0) continue;
    const double* row = table_.data() + s * num_actions_;
    for (std::size_t a = 0; a < num_actions_; ++a) out[a] += b * row[a];
  }
  return out;
}

std::size_t user_act(const BoltzmannPolicy& policy, const DiscreteBelief& belief, Rng& rng) {
  return sample_index(policy.marginal(belief), rng);
}

std::array<double, 2> lander_action_probs(double inferred_angle, double kappa) {
  if (!(kappa > 0.0)) throw ConfigError("lander policy gain must be > 0");
  const double right = sigmoid(kappa * inferred_angle);
  return {1.0 - right, right};
}

int lander_user_policy(double inferred_angle, double kappa, Rng& rng) {
  const auto p = lander_action_probs(inferred_angle, kappa);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p[1] ? static_cast<int>(LanderAction::kFireRight)
                       : static_cast<int>(LanderAction::kFireLeft);
}

std::vector<double> steering_scores(std::span<const double> believed_state,
                                    const DelayTrackConfig& config) {
  const auto n = static_cast<std::size_t>(config.lookahead);
  if (believed_state.size() != n + 1) throw ConfigError("track belief has wrong dimension");
  const double heading = believed_state[n];
  std::vector<double> scores(3);
  for (int a = 0; a < 3; ++a) {
    const double steer = a == 0 ? -1.0 : (a == 1 ? 1.0 : 0.0);
    const double h = std::clamp(heading + steer * config.steer_rate, -config.max_heading,
                                config.max_heading);
    double score = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
      const double err = believed_state[k] - static_cast<double>(k) * h;
      score -= err * err;
    }
    scores[static_cast<std::size_t>(a)] = score;
  }
  return scores;
}

int track_user_policy(std::span<const double> believed_state, const DelayTrackConfig& config,
                      double beta, Rng& rng) {
  const auto probs = boltzmann(steering_scores(believed_state, config), beta);
  return static_cast<int>(sample_index(probs, rng));
}

}  // namespace ase
