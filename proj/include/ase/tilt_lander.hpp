#pragma once

#include "ase/common.hpp"

namespace ase {

enum class LanderAction : int { kFireLeft = 0, kFireRight = 1, kNoop = 2 };

/// Planar attitude dynamics. Firing the left thruster rotates toward
/// positive angles, the right one toward negative angles.
struct TiltLanderConfig {
  int horizon = 150;
  double dt = 1.0 / 15.0;
  double torque = 5.0;
  /// Per-step multiplicative decay of the angular velocity.
  double damping = 0.8;
  /// Std of the zero-mean random torque added each step.
  double disturbance_std = 1.0;
  /// Initial angle drawn uniformly from [-initial_angle, initial_angle].
  double initial_angle = 0.5;
};

struct LanderState {
  double angle = 0.0;
  double rate = 0.0;
  int t = 0;
  friend bool operator==(const LanderState&, const LanderState&) = default;
};

struct LanderStep {
  LanderState next;
  double reward;
  bool terminal;
};

class TiltLanderEnv {
 public:
  explicit TiltLanderEnv(TiltLanderConfig config = {});

  const TiltLanderConfig& config() const { return config_; }
  int horizon() const { return config_.horizon; }

  LanderState reset(Rng& rng) const;
  /// Deterministic given the disturbance torque.
  LanderState advance(const LanderState& state, int action, double disturbance) const;
  LanderStep step(const LanderState& state, int action, Rng& rng) const;
  /// The tilt indicator shows the true angle.
  double observe(const LanderState& state) const { return state.angle; }

 private:
  TiltLanderConfig config_;
};

}  // namespace ase
