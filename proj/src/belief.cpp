#include "ase/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ase {

namespace {

void check_distribution(std::span<const double> probs, const char* what) {
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw ConfigError(std::string(what) + ": entries must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kProbTolerance) {
    throw ConfigError(std::string(what) + ": probabilities sum to " + format_double(total));
  }
}

std::vector<double> renormalized(std::vector<double> probs, const char* what) {
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw ConfigError(std::string(what) + ": entries must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kRenormTolerance) {
    throw ConfigError(std::string(what) + ": probabilities sum to " + format_double(total));
  }
  for (double& p : probs) p /= total;
  return probs;
}

}  // namespace

DiscreteBelief::DiscreteBelief(std::vector<double> probs)
    : probs_(renormalized(std::move(probs), "DiscreteBelief")) {
  if (probs_.empty()) throw ConfigError("DiscreteBelief: empty state space");
}

DiscreteBelief DiscreteBelief::uniform(std::size_t num_states) {
  if (num_states == 0) throw ConfigError("DiscreteBelief: empty state space");
  return DiscreteBelief(std::vector<double>(num_states, 1.0 / static_cast<double>(num_states)),
                        Trusted{});
}

DiscreteBelief DiscreteBelief::delta(std::size_t num_states, std::size_t state) {
  if (state >= num_states) throw ConfigError("DiscreteBelief::delta: state out of range");
  std::vector<double> probs(num_states, 0.0);
  probs[state] = 1.0;
  return DiscreteBelief(std::move(probs), Trusted{});
}

DiscreteBelief DiscreteBelief::uniform_over(std::size_t num_states,
                                            std::span<const std::size_t> support) {
  if (support.empty()) throw ConfigError("DiscreteBelief::uniform_over: empty support");
  std::vector<double> probs(num_states, 0.0);
  const double mass = 1.0 / static_cast<double>(support.size());
  for (std::size_t s : support) {
    if (s >= num_states) throw ConfigError("DiscreteBelief::uniform_over: state out of range");
    probs[s] = mass;
  }
  return DiscreteBelief(std::move(probs));
}

std::size_t DiscreteBelief::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) -
                                  probs_.begin());
}

double DiscreteBelief::entropy() const {
  double h = 0.0;
  for (double p : probs_) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// ---------------------------------------------------------------------------

PomdpSpec::PomdpSpec(std::size_t num_states, std::size_t num_actions,
                     std::vector<std::string> observations, std::vector<double> p_init,
                     std::vector<std::vector<Transition>> dynamics,
                     std::vector<std::vector<double>> p_obs, int horizon)
    : num_states_(num_states),
      num_actions_(num_actions),
      observations_(std::move(observations)),
      p_init_(std::move(p_init)),
      dynamics_(std::move(dynamics)),
      p_obs_(std::move(p_obs)),
      horizon_(horizon) {
  validate();
}

PomdpSpec PomdpSpec::from_dense(std::size_t num_states, std::size_t num_actions,
                                std::vector<std::string> observations,
                                std::vector<double> p_init,
                                const std::vector<std::vector<std::vector<double>>>& p_dyn,
                                std::vector<std::vector<double>> p_obs, int horizon) {
  if (p_dyn.size() != num_states) throw ConfigError("p_dyn: wrong number of states");
  std::vector<std::vector<Transition>> dynamics(num_states * num_actions);
  for (std::size_t s = 0; s < num_states; ++s) {
    if (p_dyn[s].size() != num_actions) throw ConfigError("p_dyn: wrong number of actions");
    for (std::size_t a = 0; a < num_actions; ++a) {
      const auto& row = p_dyn[s][a];
      if (row.size() != num_states) throw ConfigError("p_dyn: wrong successor count");
      check_distribution(row, "p_dyn");
      auto& out = dynamics[s * num_actions + a];
      for (std::size_t next = 0; next < num_states; ++next) {
        if (row[next] > 0.0) out.push_back({static_cast<std::uint32_t>(next), row[next]});
      }
    }
  }
  return PomdpSpec(num_states, num_actions, std::move(observations), std::move(p_init),
                   std::move(dynamics), std::move(p_obs), horizon);
}

void PomdpSpec::validate() const {
  if (num_states_ == 0) throw ConfigError("PomdpSpec: num_states must be positive");
  if (num_actions_ == 0) throw ConfigError("PomdpSpec: num_actions must be positive");
  if (horizon_ <= 0) throw ConfigError("PomdpSpec: horizon must be positive");
  if (observations_.empty()) throw ConfigError("PomdpSpec: empty observation alphabet");
  if (p_init_.size() != num_states_) throw ConfigError("PomdpSpec: p_init has wrong size");
  check_distribution(p_init_, "p_init");
  if (dynamics_.size() != num_states_ * num_actions_) {
    throw ConfigError("PomdpSpec: dynamics table not fully populated");
  }
  for (const auto& row : dynamics_) {
    double total = 0.0;
    for (const auto& t : row) {
      if (t.next >= num_states_) throw ConfigError("PomdpSpec: successor out of range");
      if (!std::isfinite(t.prob) || t.prob < 0.0) {
        throw ConfigError("PomdpSpec: negative transition probability");
      }
      total += t.prob;
    }
    if (std::abs(total - 1.0) > kProbTolerance) {
      throw ConfigError("PomdpSpec: transition row sums to " + format_double(total));
    }
  }
  if (p_obs_.size() != num_states_) throw ConfigError("PomdpSpec: p_obs has wrong size");
  for (const auto& row : p_obs_) {
    if (row.size() != observations_.size()) {
      throw ConfigError("PomdpSpec: p_obs row has wrong size");
    }
    check_distribution(row, "p_obs");
  }
}

std::span<const Transition> PomdpSpec::transitions(std::size_t state, std::size_t action) const {
  return dynamics_[state * num_actions_ + action];
}

std::vector<double> PomdpSpec::observation_likelihood(std::size_t observation) const {
  if (observation >= observations_.size()) {
    throw ConfigError("observation_likelihood: observation out of range");
  }
  std::vector<double> out(num_states_);
  for (std::size_t s = 0; s < num_states_; ++s) out[s] = p_obs_[s][observation];
  return out;
}

DiscreteBelief PomdpSpec::initial_belief() const { return DiscreteBelief(p_init_); }

PomdpSpec PomdpSpec::from_json(const nlohmann::json& doc) {
  try {
    const auto num_states = doc.at("num_states").get<std::size_t>();
    const auto num_actions = doc.at("num_actions").get<std::size_t>();
    auto observations = doc.at("observations").get<std::vector<std::string>>();
    auto p_init = doc.at("p_init").get<std::vector<double>>();
    auto p_dyn = doc.at("p_dyn").get<std::vector<std::vector<std::vector<double>>>>();
    auto p_obs = doc.at("p_obs").get<std::vector<std::vector<double>>>();
    const int horizon = doc.at("horizon").get<int>();
    return from_dense(num_states, num_actions, std::move(observations), std::move(p_init), p_dyn,
                      std::move(p_obs), horizon);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("PomdpSpec JSON: ") + e.what());
  }
}

nlohmann::json PomdpSpec::to_json() const {
  std::vector<std::vector<std::vector<double>>> p_dyn(
      num_states_, std::vector<std::vector<double>>(num_actions_,
                                                    std::vector<double>(num_states_, 0.0)));
  for (std::size_t s = 0; s < num_states_; ++s) {
    for (std::size_t a = 0; a < num_actions_; ++a) {
      for (const auto& t : transitions(s, a)) p_dyn[s][a][t.next] += t.prob;
    }
  }
  return {{"num_states", num_states_}, {"num_actions", num_actions_},
          {"observations", observations_}, {"p_init", p_init_},
          {"p_dyn", p_dyn},               {"p_obs", p_obs_},
          {"horizon", horizon_}};
}

// ---------------------------------------------------------------------------

DiscreteBelief predict(const DiscreteBelief& belief, std::size_t action, const PomdpSpec& spec) {
  if (belief.size() != spec.num_states()) throw ConfigError("predict: belief size mismatch");
  if (action >= spec.num_actions()) throw ConfigError("predict: action out of range");
  std::vector<double> out(spec.num_states(), 0.0);
  for (std::size_t s = 0; s < spec.num_states(); ++s) {
    const double mass = belief[s];
    if (mass == 0.0) continue;
    for (const auto& t : spec.transitions(s, action)) out[t.next] += mass * t.prob;
  }
  double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& p : out) p /= total;
  return BeliefKernel::adopt(std::move(out));
}

std::optional<DiscreteBelief> condition(const DiscreteBelief& prior,
                                        std::span<const double> likelihood) {
  if (likelihood.size() != prior.size()) {
    throw ConfigError("condition: likelihood size mismatch");
  }
  std::vector<double> out(prior.size());
  double total = 0.0;
  for (std::size_t s = 0; s < prior.size(); ++s) {
    if (likelihood[s] < 0.0) throw ConfigError("condition: negative likelihood");
    out[s] = prior[s] * likelihood[s];
    total += out[s];
  }
  if (!(total > 0.0)) return std::nullopt;
  for (double& p : out) p /= total;
  return BeliefKernel::adopt(std::move(out));
}

std::optional<DiscreteBelief> bayes_update(const DiscreteBelief& belief,
                                           std::optional<std::size_t> action,
                                           std::span<const double> likelihood,
                                           const PomdpSpec& spec) {
  if (belief.size() != spec.num_states()) {
    throw ConfigError("bayes_update: belief size mismatch");
  }
  if (action) return condition(predict(belief, *action, spec), likelihood);
  return condition(belief, likelihood);
}

DiscreteBelief bayes_update(const DiscreteBelief& belief, std::optional<std::size_t> action,
                            std::span<const double> likelihood, const PomdpSpec& spec,
                            ImpossiblePolicy policy) {
  DiscreteBelief predicted = action ? predict(belief, *action, spec) : belief;
  if (auto posterior = condition(predicted, likelihood)) return *std::move(posterior);
  if (policy == ImpossiblePolicy::kSkip) return predicted;
  auto fresh = DiscreteBelief::uniform(spec.num_states());
  if (auto posterior = condition(fresh, likelihood)) return *std::move(posterior);
  return fresh;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("kl_divergence: state-space size mismatch");
  double total = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    if (p[s] == 0.0) continue;
    if (q[s] == 0.0) return std::numeric_limits<double>::infinity();
    total += p[s] * std::log(p[s] / q[s]);
  }
  // Rounding can leave a tiny negative value for p ~= q.
  return std::max(total, 0.0);
}

double kl_divergence(const DiscreteBelief& p, const DiscreteBelief& q) {
  return kl_divergence(p.probs(), q.probs());
}

GaussianBelief::GaussianBelief(std::vector<double> m, double variance)
    : mean(std::move(m)), variance_scale(variance) {
  if (variance_scale < 0.0 || !std::isfinite(variance_scale)) {
    throw ConfigError("GaussianBelief: variance must be finite and non-negative");
  }
  for (double v : mean) {
    if (!std::isfinite(v)) throw ConfigError("GaussianBelief: mean must be finite");
  }
}

double gaussian_kl_limit_distance(const GaussianBelief& a, const GaussianBelief& b) {
  if (a.mean.size() != b.mean.size()) {
    throw ConfigError("gaussian_kl_limit_distance: dimension mismatch");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    const double d = a.mean[i] - b.mean[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace ase
