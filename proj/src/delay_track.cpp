#include "ase/delay_track.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ase {

std::vector<double> TrackObservation::state_vector() const {
  std::vector<double> v = view;
  v.push_back(heading);
  return v;
}

DelayTrackEnv::DelayTrackEnv(DelayTrackConfig config, std::vector<double> centers)
    : config_(config), centers_(std::move(centers)) {
  if (config_.horizon <= 0 || config_.lookahead <= 0) {
    throw ConfigError("delay-track: horizon and lookahead must be positive");
  }
  if (config_.d_max < 0) throw ConfigError("delay-track: d_max must be >= 0");
  if (!(config_.lane_half_width > 0.0) || !(config_.steer_rate > 0.0) ||
      !(config_.max_heading > 0.0) || config_.lateral_noise < 0.0) {
    throw ConfigError("delay-track: invalid physical constants");
  }
  if (centers_.size() < static_cast<std::size_t>(config_.horizon + config_.lookahead + 1)) {
    throw ConfigError("delay-track: track shorter than horizon + lookahead");
  }
}

DelayTrackEnv DelayTrackEnv::generate(const DelayTrackConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double p1 = phase(rng), p2 = phase(rng);
  const std::size_t n = static_cast<std::size_t>(config.horizon + config.lookahead + 1);
  std::vector<double> centers(n);
  const double w = 2.0 * std::numbers::pi / config.curve_period;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    centers[i] = config.curve_amplitude *
                 (0.7 * (std::sin(w * x + p1) - std::sin(p1)) +
                  0.3 * (std::sin(1.7 * w * x + p2) - std::sin(p2)));
  }
  return DelayTrackEnv(config, std::move(centers));
}

TrackState DelayTrackEnv::initial_state() const {
  // On the center line, aligned with the road direction.
  const double slope = centers_[1] - centers_[0];
  return {0, centers_[0], std::clamp(slope, -config_.max_heading, config_.max_heading)};
}

TrackState DelayTrackEnv::advance(const TrackState& state, int action, double disturbance) const {
  double steer = 0.0;
  switch (action) {
    case static_cast<int>(SteerAction::kLeft): steer = -1.0; break;
    case static_cast<int>(SteerAction::kRight): steer = 1.0; break;
    case static_cast<int>(SteerAction::kStraight): break;
    default: throw ConfigError("delay-track: invalid action id");
  }
  TrackState next;
  next.index = state.index + 1;
  next.heading =
      std::clamp(state.heading + steer * config_.steer_rate, -config_.max_heading, config_.max_heading);
  next.lateral = state.lateral + next.heading + disturbance;
  return next;
}

bool DelayTrackEnv::on_road(const TrackState& state) const {
  return std::abs(state.lateral - centers_[static_cast<std::size_t>(state.index)]) <=
         config_.lane_half_width;
}

double DelayTrackEnv::reward(const TrackState& state) const {
  return on_road(state) ? config_.on_road_bonus : config_.off_road_penalty;
}

TrackStep DelayTrackEnv::step(const TrackState& state, int action, Rng& rng) const {
  double noise = 0.0;
  if (config_.lateral_noise > 0.0) {
    std::normal_distribution<double> n(0.0, config_.lateral_noise);
    noise = n(rng);
  }
  TrackStep out{advance(state, action, noise), 0.0, false};
  out.reward = reward(out.next);
  out.terminal = out.next.index >= config_.horizon;
  return out;
}

TrackObservation DelayTrackEnv::render(const TrackState& state) const {
  TrackObservation obs;
  obs.view.resize(static_cast<std::size_t>(config_.lookahead));
  for (int k = 0; k < config_.lookahead; ++k) {
    const auto i = std::min(static_cast<std::size_t>(state.index + k), centers_.size() - 1);
    obs.view[static_cast<std::size_t>(k)] = centers_[i] - state.lateral;
  }
  obs.heading = state.heading;
  obs.delayed = false;
  obs.source_step = state.index;
  return obs;
}

int DelayTrackEnv::delay_at(int t) const {
  if (config_.d_max == 0) return 0;
  const int pos = t % (2 * config_.d_max);
  return pos < config_.d_max ? 0 : pos - config_.d_max + 1;
}

TrackObservation DelayedFeed::emit(int t, const TrackState& state) {
  if (env_->delay_at(t) == 0) {
    last_fresh_ = env_->render(state);
    return last_fresh_;
  }
  TrackObservation stale = last_fresh_;
  stale.delayed = true;
  return stale;
}

}  // namespace ase
