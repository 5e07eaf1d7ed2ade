#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ase/belief.hpp"
#include "ase/common.hpp"
#include "ase/soft_q.hpp"

namespace ase {

enum class Heading : std::uint8_t { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

/// Action ids. kWait exists only when GridNavConfig::allow_wait is set.
enum class NavAction : std::uint8_t { kTurnLeft = 0, kTurnRight = 1, kForward = 2, kWait = 3 };

/// (a) unique but unknown to the user, (b) duplicated and known,
/// (c) unique and known.
enum class ObjectCategory : std::uint8_t { kUniqueUnknown = 0, kDuplicatedKnown = 1, kUniqueKnown = 2 };

char category_letter(ObjectCategory c);
ObjectCategory category_from_letter(const std::string& letter);
const char* heading_name(Heading h);
const char* nav_action_name(NavAction a);

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct GridObject {
  int id = 0;
  std::string name;
  ObjectCategory category = ObjectCategory::kUniqueKnown;
  std::vector<Cell> cells;
};

/// Map file contents. Objects sit in free cells and are seen from poses
/// whose forward ray reaches their cell within `view_range` cells.
struct GridMap {
  int width = 0;
  int height = 0;
  int view_range = 1;
  std::vector<GridObject> objects;
  std::vector<Cell> walls;

  static GridMap from_json(const nlohmann::json& doc);
  static GridMap load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
  /// Hash of the canonical JSON form.
  std::uint64_t hash() const;
  /// Throws ConfigError unless placements are in range, on free cells, and
  /// satisfy the per-category placement counts.
  void validate() const;
};

struct GridNavConfig {
  bool allow_wait = false;
  int horizon = 25;
};

struct NavPose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::kNorth;
  friend bool operator==(const NavPose&, const NavPose&) = default;
};

struct NavStep {
  std::size_t next_state;
  double reward;
  bool terminal;
};

/// Egocentric grid navigation: |S| = width * height * 4, deterministic
/// turn / move actions, walls block motion and sight.
class GridNavEnv {
 public:
  GridNavEnv(GridMap map, GridNavConfig config = {});

  const GridMap& map() const { return map_; }
  const GridNavConfig& config() const { return config_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return config_.allow_wait ? 4 : 3; }
  std::size_t num_objects() const { return map_.objects.size(); }
  /// Observation symbol emitted when no object is visible.
  int nothing_symbol() const { return static_cast<int>(num_objects()); }
  std::size_t num_symbols() const { return num_objects() + 1; }
  int horizon() const { return config_.horizon; }

  std::size_t state_index(const NavPose& pose) const;
  NavPose pose(std::size_t state) const;
  bool is_free_cell(int x, int y) const;
  bool is_free_state(std::size_t state) const;
  const std::vector<std::size_t>& free_states() const { return free_states_; }

  /// Sorted object indices visible from `state`.
  std::span<const int> visible(std::size_t state) const { return visible_[state]; }
  std::size_t next_state(std::size_t state, std::size_t action) const;

  /// One object sampled uniformly from the visible set, or nothing_symbol().
  int observe(std::size_t state, Rng& rng) const;
  /// Everything visible at once (the assistant's sensor).
  std::vector<int> full_observe(std::size_t state) const;
  /// 1[visible(s) == objects] for every s.
  std::vector<double> full_observation_likelihood(std::span<const int> objects) const;

  /// Deterministic step; reaching `goal` is terminal. Every step costs -1.
  NavStep step(std::size_t state, std::size_t action, std::size_t goal) const;

  /// Free-space planning view used by soft Q-iteration.
  std::shared_ptr<const DeterministicMdp> mdp() const { return mdp_; }
  /// True singleton observation model p(o | s) = 1[o in vis(s)] / |vis(s)|
  /// with a uniform prior over free states.
  const PomdpSpec& singleton_pomdp() const { return *pomdp_; }

  /// Euclidean distance between the cells of two states.
  double cell_distance(std::size_t a, std::size_t b) const;

 private:
  GridMap map_;
  GridNavConfig config_;
  std::size_t num_states_;
  std::vector<std::uint8_t> free_cell_;
  std::vector<std::size_t> free_states_;
  std::vector<std::vector<int>> visible_;
  std::shared_ptr<DeterministicMdp> mdp_;
  std::shared_ptr<const PomdpSpec> pomdp_;
};

/// Parameters of the random map generator.
struct MapProfile {
  int width = 5;
  int height = 5;
  int view_range = 1;
  int count_unique_unknown = 26;
  int count_duplicated = 26;
  int count_unique_known = 26;
  int duplicated_min_cells = 2;
  int duplicated_max_cells = 4;
  /// Leading duplicated objects placed in this fraction of free cells
  /// ("floor", "wall"-like clutter). Zero disables.
  int common_objects = 0;
  double common_fraction = 0.0;
  /// Interior walls split the floor into rooms of about this width and
  /// height, joined by doorways. Zero means an open floor.
  int room_width = 0;
  int room_height = 0;

  /// 5x5, 78 objects, 26 per category.
  static MapProfile paper();
  /// 41x10 floor plan: 1640 states, 34 objects, all known to the user.
  static MapProfile habitat();
};

GridMap generate_map(const MapProfile& profile, std::uint64_t seed);

}  // namespace ase
