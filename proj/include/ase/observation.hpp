#pragma once

#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ase/delay_track.hpp"
#include "ase/row_reveal.hpp"

namespace ase {

/// Object set (empty = nothing visible) | revealed row | lane frame |
/// indicator angle.
using ObservationPayload = std::variant<std::vector<int>, RevealedRow, TrackObservation, double>;

struct AmbientObservation {
  ObservationPayload payload;
  int t = 0;
};

/// Flat numeric form stored in demonstrations:
/// objects -> ids, row -> (row, pixels...), frame -> (view..., heading,
/// flag), angle -> (angle).
std::vector<double> encode_payload(const ObservationPayload& payload);
nlohmann::json payload_to_json(const ObservationPayload& payload);
std::string payload_kind(const ObservationPayload& payload);

}  // namespace ase
