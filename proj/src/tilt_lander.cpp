#include "ase/tilt_lander.hpp"

#include <cmath>
#include <numbers>

namespace ase {

TiltLanderEnv::TiltLanderEnv(TiltLanderConfig config) : config_(config) {
  if (config_.horizon <= 0 || !(config_.dt > 0.0) || config_.torque < 0.0 ||
      config_.disturbance_std < 0.0 || !(config_.damping >= 0.0 && config_.damping <= 1.0) ||
      !(config_.initial_angle >= 0.0 && config_.initial_angle <= std::numbers::pi)) {
    throw ConfigError("tilt-lander: invalid configuration");
  }
}

LanderState TiltLanderEnv::reset(Rng& rng) const {
  std::uniform_real_distribution<double> angle(-config_.initial_angle, config_.initial_angle);
  return {angle(rng), 0.0, 0};
}

LanderState TiltLanderEnv::advance(const LanderState& state, int action, double disturbance) const {
  double torque = 0.0;
  switch (action) {
    case static_cast<int>(LanderAction::kFireLeft): torque = config_.torque; break;
    case static_cast<int>(LanderAction::kFireRight): torque = -config_.torque; break;
    case static_cast<int>(LanderAction::kNoop): break;
    default: throw ConfigError("tilt-lander: invalid action id");
  }
  LanderState next;
  next.rate = config_.damping * state.rate + config_.dt * (torque + disturbance);
  next.angle = wrap_angle(state.angle + config_.dt * next.rate);
  next.t = state.t + 1;
  return next;
}

LanderStep TiltLanderEnv::step(const LanderState& state, int action, Rng& rng) const {
  double disturbance = 0.0;
  if (config_.disturbance_std > 0.0) {
    std::normal_distribution<double> n(0.0, config_.disturbance_std);
    disturbance = n(rng);
  }
  LanderStep out{advance(state, action, disturbance), 0.0, false};
  out.reward = -std::abs(out.next.angle);
  out.terminal = out.next.t >= config_.horizon;
  return out;
}

}  // namespace ase
