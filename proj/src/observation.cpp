#include "ase/observation.hpp"

namespace ase {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

std::vector<double> encode_payload(const ObservationPayload& payload) {
  return std::visit(
      Overloaded{
          [](const std::vector<int>& objects) {
            return std::vector<double>(objects.begin(), objects.end());
          },
          [](const RevealedRow& row) {
            std::vector<double> out{static_cast<double>(row.row)};
            out.insert(out.end(), row.pixels.begin(), row.pixels.end());
            return out;
          },
          [](const TrackObservation& frame) {
            auto out = frame.state_vector();
            out.push_back(frame.delayed ? 1.0 : 0.0);
            return out;
          },
          [](double angle) { return std::vector<double>{angle}; },
      },
      payload);
}

nlohmann::json payload_to_json(const ObservationPayload& payload) {
  return std::visit(
      Overloaded{
          [](const std::vector<int>& objects) { return nlohmann::json{{"objects", objects}}; },
          [](const RevealedRow& row) {
            return nlohmann::json{{"row", row.row}, {"pixels", row.pixels}};
          },
          [](const TrackObservation& frame) {
            return nlohmann::json{{"view", frame.view},
                                  {"heading", frame.heading},
                                  {"delayed", frame.delayed ? 1 : 0},
                                  {"source_step", frame.source_step}};
          },
          [](double angle) { return nlohmann::json{{"angle", angle}}; },
      },
      payload);
}

std::string payload_kind(const ObservationPayload& payload) {
  static const char* kNames[] = {"objects", "row", "frame", "angle"};
  return kNames[payload.index()];
}

}  // namespace ase
