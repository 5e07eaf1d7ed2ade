#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ase/common.hpp"

namespace ase {

enum class SteerAction : int { kLeft = 0, kRight = 1, kStraight = 2 };

struct DelayTrackConfig {
  int horizon = 100;
  /// Road segments visible ahead of the car, including the current one.
  int lookahead = 5;
  double lane_half_width = 1.0;
  /// Heading change per steering action.
  double steer_rate = 0.05;
  double max_heading = 0.5;
  /// Std of the per-step lateral disturbance.
  double lateral_noise = 0.0;
  double on_road_bonus = 1.0;
  double off_road_penalty = -1.0;
  /// Length of each no-delay and delay phase; 0 disables delays.
  int d_max = 5;
  /// Track shape: sum of sinusoids with random phase.
  double curve_amplitude = 2.0;
  double curve_period = 40.0;
};

/// (longitudinal index, lateral position, heading). The car advances one
/// segment per step.
struct TrackState {
  int index = 0;
  double lateral = 0.0;
  double heading = 0.0;
  friend bool operator==(const TrackState&, const TrackState&) = default;
};

/// Lane view: offsets from the car to the road center over the lookahead
/// window, the car heading, and whether the frame is stale.
struct TrackObservation {
  std::vector<double> view;
  double heading = 0.0;
  bool delayed = false;
  /// Timestep at which the frame was rendered.
  int source_step = 0;

  /// (view..., heading) as one vector.
  std::vector<double> state_vector() const;
  friend bool operator==(const TrackObservation&, const TrackObservation&) = default;
};

struct TrackStep {
  TrackState next;
  double reward;
  bool terminal;
};

class DelayTrackEnv {
 public:
  DelayTrackEnv(DelayTrackConfig config, std::vector<double> centers);
  /// Random curvy track long enough for the horizon plus lookahead.
  static DelayTrackEnv generate(const DelayTrackConfig& config, Rng& rng);

  const DelayTrackConfig& config() const { return config_; }
  const std::vector<double>& centers() const { return centers_; }
  int horizon() const { return config_.horizon; }

  TrackState initial_state() const;
  /// Noise-free dynamics plus an explicit lateral disturbance.
  TrackState advance(const TrackState& state, int action, double disturbance = 0.0) const;
  TrackStep step(const TrackState& state, int action, Rng& rng) const;
  double reward(const TrackState& state) const;
  bool on_road(const TrackState& state) const;

  /// Current view of `state` (flag 0).
  TrackObservation render(const TrackState& state) const;

  /// Frames emitted since the last fresh one at timestep t (0 = fresh).
  int delay_at(int t) const;

 private:
  DelayTrackConfig config_;
  std::vector<double> centers_;
};

/// Replays the ambient emission rule: fresh frames pass through, a delay
/// phase repeats the final fresh frame with the flag raised.
class DelayedFeed {
 public:
  explicit DelayedFeed(const DelayTrackEnv& env) : env_(&env) {}
  TrackObservation emit(int t, const TrackState& state);

 private:
  const DelayTrackEnv* env_;
  TrackObservation last_fresh_;
};

}  // namespace ase
