#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "ase/belief.hpp"
#include "ase/delay_track.hpp"
#include "ase/observation.hpp"
#include "ase/row_reveal.hpp"
#include "ase/user_models.hpp"

namespace ase {

/// The observation shown to the user instead of the ambient one.
struct SyntheticObservation {
  ObservationPayload payload;
  /// Achieved divergence or distance (+inf when every candidate leaves the
  /// user with zero mass somewhere the assistant has mass).
  double objective = 0.0;
  std::size_t candidate_count = 0;
  /// Candidate id chosen by enumerative synthesis (-1 otherwise).
  int chosen = -1;
};

/// Predicted user belief after the user additionally sees candidate `c`.
using UserPrediction = std::function<DiscreteBelief(int candidate)>;
/// Point in a metric space for each state; used to rank candidates when
/// every KL value is infinite.
using StateEmbedding = std::function<std::vector<double>(std::size_t state)>;

/// argmin over `candidates` of KL(assistant || predict(c)). Finite scores
/// beat infinite ones; ties go to the lowest candidate id; when all scores
/// are infinite, the candidate whose predicted MAP state lies nearest the
/// assistant's MAP state (under `embed`, or the lowest id without one)
/// wins. The payload is the singleton set {chosen}, or the empty set when
/// the chosen candidate is `nothing_symbol`.
SyntheticObservation synthesize_enumerative(const DiscreteBelief& assistant,
                                            std::span<const int> candidates,
                                            const UserPrediction& predict,
                                            const StateEmbedding& embed = {},
                                            int nothing_symbol = -1);

/// Grid-nav form: the user model sees the candidate singleton after acting
/// with `action` from `user_belief`.
SyntheticObservation synthesize_enumerative(const DiscreteBelief& assistant,
                                            const NavUserModel& user,
                                            const DiscreteBelief& user_belief,
                                            std::optional<std::size_t> action,
                                            std::span<const int> candidates,
                                            const StateEmbedding& embed = {});

/// Grid pose as (x, y, cos heading, sin heading).
StateEmbedding nav_state_embedding(const GridNavEnv& env);

/// Picks the unrevealed row whose reveal brings the user's class posterior
/// closest to the assistant's in KL.
SyntheticObservation synthesize_row(const DiscreteBelief& assistant_posterior,
                                    std::span<const int> revealed,
                                    std::span<const int> unrevealed, const RowRevealEnv& env);

/// Rolls the last fresh frame `delay` steps forward through the noise-free
/// dynamics with the final `delay` entries of `actions` and renders the
/// current view (flag 0). delay = 0 passes `ambient` through unchanged.
SyntheticObservation forward_predict(const TrackObservation& ambient, int delay,
                                     std::span<const int> actions, const DelayTrackEnv& model);

class NonInvertibleError : public Error {
 public:
  using Error::Error;
};

/// õ = (logit((o + π) / 2π) - θ0) / θ1 clamped to [-π, π], so that the
/// user's percept of õ equals o wherever no clamping occurs.
SyntheticObservation logistic_invert(double angle, double theta0, double theta1);

/// One synthesis log line.
nlohmann::json synthesis_log_entry(int t, const SyntheticObservation& obs,
                                   double assistant_entropy, double user_entropy);

}  // namespace ase
