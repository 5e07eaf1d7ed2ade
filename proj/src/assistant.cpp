#include "ase/assistant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ase {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> softmax(std::vector<double> log_weights) {
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (double& v : log_weights) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : log_weights) v /= total;
  return log_weights;
}

nlohmann::json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

}  // namespace

SyntheticObservation synthesize_enumerative(const DiscreteBelief& assistant,
                                            std::span<const int> candidates,
                                            const UserPrediction& predict,
                                            const StateEmbedding& embed, int nothing_symbol) {
  if (candidates.empty()) throw ConfigError("synthesize_enumerative: no candidates");
  std::vector<int> order(candidates.begin(), candidates.end());
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  int best = -1;
  double best_kl = kInf;
  int fallback = -1;
  double fallback_distance = kInf;
  std::vector<double> assistant_point;
  if (embed) assistant_point = embed(assistant.argmax());

  for (int c : order) {
    const DiscreteBelief user = predict(c);
    const double kl = kl_divergence(assistant, user);
    if (kl < best_kl) {
      best_kl = kl;
      best = c;
    }
    if (!std::isfinite(kl) && best < 0) {
      // Ranking among infinite candidates only matters if no finite one appears.
      double d = 0.0;
      if (embed) {
        d = gaussian_kl_limit_distance(GaussianBelief(assistant_point),
                                       GaussianBelief(embed(user.argmax())));
      }
      if (fallback < 0 || d < fallback_distance) {
        fallback = c;
        fallback_distance = d;
      }
    }
  }
  SyntheticObservation out;
  out.chosen = best >= 0 ? best : fallback;
  out.objective = best_kl;
  out.candidate_count = order.size();
  if (out.chosen == nothing_symbol && nothing_symbol >= 0) {
    out.payload = std::vector<int>{};
  } else {
    out.payload = std::vector<int>{out.chosen};
  }
  return out;
}

SyntheticObservation synthesize_enumerative(const DiscreteBelief& assistant,
                                            const NavUserModel& user,
                                            const DiscreteBelief& user_belief,
                                            std::optional<std::size_t> action,
                                            std::span<const int> candidates,
                                            const StateEmbedding& embed) {
  const auto& env = user.weights().env();
  const DiscreteBelief prior = action ? predict(user_belief, *action, env.singleton_pomdp())
                                      : user_belief;
  const int nothing = env.nothing_symbol();
  return synthesize_enumerative(
      assistant, candidates,
      [&](int c) {
        const std::vector<int> objects = c == nothing ? std::vector<int>{} : std::vector<int>{c};
        return user.update(prior, std::nullopt, objects);
      },
      embed, nothing);
}

StateEmbedding nav_state_embedding(const GridNavEnv& env) {
  return [&env](std::size_t state) {
    const auto pose = env.pose(state);
    const double angle = static_cast<double>(pose.heading) * std::numbers::pi / 2.0;
    return std::vector<double>{static_cast<double>(pose.x), static_cast<double>(pose.y),
                               std::cos(angle), std::sin(angle)};
  };
}

SyntheticObservation synthesize_row(const DiscreteBelief& assistant_posterior,
                                    std::span<const int> revealed,
                                    std::span<const int> unrevealed, const RowRevealEnv& env) {
  if (unrevealed.empty()) throw ConfigError("synthesize_row: no unrevealed rows");
  const int k = env.model().num_classes();
  if (assistant_posterior.size() != static_cast<std::size_t>(k)) {
    throw ConfigError("synthesize_row: posterior has wrong size");
  }
  std::vector<double> base(static_cast<std::size_t>(k), 0.0);
  for (int r : revealed) {
    for (int c = 0; c < k; ++c) base[static_cast<std::size_t>(c)] += env.row_log_likelihood(r, c);
  }
  std::vector<int> order(unrevealed.begin(), unrevealed.end());
  std::sort(order.begin(), order.end());

  SyntheticObservation out;
  out.objective = kInf;
  out.candidate_count = order.size();
  for (int r : order) {
    std::vector<double> logp = base;
    for (int c = 0; c < k; ++c) logp[static_cast<std::size_t>(c)] += env.row_log_likelihood(r, c);
    const double kl = kl_divergence(assistant_posterior.probs(), softmax(std::move(logp)));
    if (out.chosen < 0 || kl < out.objective) {
      out.objective = kl;
      out.chosen = r;
    }
  }
  out.payload = env.reveal(out.chosen);
  return out;
}

SyntheticObservation forward_predict(const TrackObservation& ambient, int delay,
                                     std::span<const int> actions, const DelayTrackEnv& model) {
  if (delay < 0) throw ConfigError("forward_predict: negative delay");
  SyntheticObservation out;
  out.candidate_count = 1;
  if (delay == 0) {
    out.payload = ambient;
    return out;
  }
  if (actions.size() < static_cast<std::size_t>(delay)) {
    throw ConfigError("forward_predict: action log shorter than the delay span");
  }
  const auto& centers = model.centers();
  if (ambient.source_step < 0 || static_cast<std::size_t>(ambient.source_step) >= centers.size() ||
      ambient.view.empty()) {
    throw ConfigError("forward_predict: frame does not belong to this track");
  }
  TrackState state{ambient.source_step,
                   centers[static_cast<std::size_t>(ambient.source_step)] - ambient.view[0],
                   ambient.heading};
  for (std::size_t i = actions.size() - static_cast<std::size_t>(delay); i < actions.size(); ++i) {
    state = model.advance(state, actions[i]);
  }
  out.payload = model.render(state);
  return out;
}

SyntheticObservation logistic_invert(double angle, double theta0, double theta1) {
  if (theta1 == 0.0) throw NonInvertibleError("logistic distortion with theta1 = 0 is not invertible");
  if (!(angle >= -std::numbers::pi && angle <= std::numbers::pi)) {
    throw ConfigError("logistic_invert: angle outside [-pi, pi]");
  }
  const double p = (angle + std::numbers::pi) / (2.0 * std::numbers::pi);
  double shown;
  if (p <= 0.0) {
    shown = theta1 > 0.0 ? -std::numbers::pi : std::numbers::pi;
  } else if (p >= 1.0) {
    shown = theta1 > 0.0 ? std::numbers::pi : -std::numbers::pi;
  } else {
    shown = (logit(p) - theta0) / theta1;
  }
  shown = std::clamp(shown, -std::numbers::pi, std::numbers::pi);
  SyntheticObservation out;
  out.payload = shown;
  out.candidate_count = 1;
  const DistortedPerceptUserModel user{theta0, theta1};
  out.objective = std::abs(user.percept(shown) - angle);
  return out;
}

nlohmann::json synthesis_log_entry(int t, const SyntheticObservation& obs,
                                   double assistant_entropy, double user_entropy) {
  nlohmann::json chosen;
  if (obs.chosen >= 0) {
    chosen = obs.chosen;
  } else {
    chosen = payload_to_json(obs.payload);
  }
  return {{"t", t},
          {"candidates_scored", obs.candidate_count},
          {"chosen", chosen},
          {"objective", number_or_string(obs.objective)},
          {"assistant_entropy", number_or_string(assistant_entropy)},
          {"user_entropy", number_or_string(user_entropy)}};
}

}  // namespace ase
