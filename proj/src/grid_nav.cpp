#include "ase/grid_nav.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>

namespace ase {

namespace {

constexpr int kDx[4] = {0, 1, 0, -1};
constexpr int kDy[4] = {-1, 0, 1, 0};

const char* const kObjectNames[] = {
    "chair",     "window",   "bathtub",   "painting",  "plant",      "lamp",
    "sofa",      "table",    "computer",  "bookshelf", "clock",      "mirror",
    "piano",     "fridge",   "sink",      "oven",      "bed",        "desk",
    "rug",       "vase",     "television", "fireplace", "stool",     "curtain",
    "cabinet",   "towel",    "shower",    "toilet",    "dresser",    "fan",
    "guitar",    "printer",  "treadmill", "aquarium",  "statue",     "radiator",
    "umbrella",  "trophy",   "globe",     "hammock",   "easel",      "bench",
    "drum",      "kettle",   "microwave", "speaker",   "telescope",  "sculpture",
    "wardrobe",  "candle",   "basket",    "crib",      "tapestry",   "jukebox",
    "pillar",    "doorbell", "poster",    "ladder",    "barbell",    "chessboard",
    "birdcage",  "lantern",  "coatrack",  "typewriter", "projector", "dartboard",
    "harp",      "loom",     "anvil",     "compass",   "hourglass",  "banner",
    "bust",      "chandelier", "gong",    "kiln",      "mannequin",  "organ",
};

}  // namespace

char category_letter(ObjectCategory c) {
  switch (c) {
    case ObjectCategory::kUniqueUnknown: return 'a';
    case ObjectCategory::kDuplicatedKnown: return 'b';
    case ObjectCategory::kUniqueKnown: return 'c';
  }
  return '?';
}

ObjectCategory category_from_letter(const std::string& letter) {
  if (letter == "a") return ObjectCategory::kUniqueUnknown;
  if (letter == "b") return ObjectCategory::kDuplicatedKnown;
  if (letter == "c") return ObjectCategory::kUniqueKnown;
  throw ConfigError("unknown object category '" + letter + "'");
}

const char* heading_name(Heading h) {
  static const char* const names[] = {"N", "E", "S", "W"};
  return names[static_cast<int>(h)];
}

const char* nav_action_name(NavAction a) {
  static const char* const names[] = {"turn_left", "turn_right", "forward", "wait"};
  return names[static_cast<int>(a)];
}

// ---------------------------------------------------------------------------

GridMap GridMap::from_json(const nlohmann::json& doc) {
  GridMap map;
  try {
    map.width = doc.at("width").get<int>();
    map.height = doc.at("height").get<int>();
    map.view_range = doc.value("view_range", 1);
    for (const auto& o : doc.at("objects")) {
      GridObject obj;
      obj.id = o.at("id").get<int>();
      obj.name = o.value("name", "object" + std::to_string(obj.id));
      obj.category = category_from_letter(o.at("category").get<std::string>());
      for (const auto& c : o.at("cells")) obj.cells.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
      map.objects.push_back(std::move(obj));
    }
    if (doc.contains("walls")) {
      for (const auto& c : doc.at("walls")) map.walls.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid map JSON: ") + e.what());
  }
  map.validate();
  return map;
}

GridMap GridMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open map file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("map file " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

nlohmann::json GridMap::to_json() const {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : objects) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : o.cells) cells.push_back({c.x, c.y});
    objs.push_back({{"id", o.id},
                    {"name", o.name},
                    {"category", std::string(1, category_letter(o.category))},
                    {"cells", cells}});
  }
  nlohmann::json walls_json = nlohmann::json::array();
  for (const auto& c : walls) walls_json.push_back({c.x, c.y});
  return {{"width", width}, {"height", height}, {"view_range", view_range},
          {"objects", objs}, {"walls", walls_json}};
}

void GridMap::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write map file " + path.string());
  // One object per line keeps diffs of hand-edited maps readable.
  const auto doc = to_json();
  out << "{\n";
  bool first = true;
  for (const auto& [key, value] : doc.items()) {
    out << (first ? "" : ",\n") << " " << nlohmann::json(key).dump() << ": ";
    first = false;
    if (value.is_array() && !value.empty() && value.front().is_object()) {
      out << "[\n";
      for (std::size_t i = 0; i < value.size(); ++i) out << "  " << value[i].dump() << (i + 1 < value.size() ? ",\n" : "\n");
      out << " ]";
    } else {
      out << value.dump();
    }
  }
  out << "\n}\n";
}

std::uint64_t GridMap::hash() const { return fnv1a(to_json().dump()); }

void GridMap::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("grid map: width and height must be positive");
  if (view_range <= 0) throw ConfigError("grid map: view_range must be positive");
  std::set<std::pair<int, int>> wall_set;
  for (const auto& w : walls) {
    if (w.x < 0 || w.y < 0 || w.x >= width || w.y >= height) {
      throw ConfigError("grid map: wall outside the grid");
    }
    wall_set.insert({w.x, w.y});
  }
  if (static_cast<int>(wall_set.size()) >= width * height) {
    throw ConfigError("grid map: no free cells");
  }
  std::set<int> ids;
  for (const auto& o : objects) {
    if (!ids.insert(o.id).second) throw ConfigError("grid map: duplicate object id");
    if (o.cells.empty()) throw ConfigError("grid map: object " + o.name + " has no placement");
    std::set<std::pair<int, int>> distinct;
    for (const auto& c : o.cells) {
      if (c.x < 0 || c.y < 0 || c.x >= width || c.y >= height) {
        throw ConfigError("grid map: object " + o.name + " placed outside the grid");
      }
      if (wall_set.count({c.x, c.y})) {
        throw ConfigError("grid map: object " + o.name + " placed on a wall");
      }
      distinct.insert({c.x, c.y});
    }
    if (distinct.size() != o.cells.size()) {
      throw ConfigError("grid map: object " + o.name + " repeats a placement");
    }
    if (o.category == ObjectCategory::kDuplicatedKnown && o.cells.size() < 2) {
      throw ConfigError("grid map: duplicated object " + o.name + " needs >= 2 placements");
    }
    if (o.category != ObjectCategory::kDuplicatedKnown && o.cells.size() != 1) {
      throw ConfigError("grid map: unique object " + o.name + " needs exactly one placement");
    }
  }
}

// ---------------------------------------------------------------------------

GridNavEnv::GridNavEnv(GridMap map, GridNavConfig config)
    : map_(std::move(map)), config_(config) {
  map_.validate();
  if (config_.horizon <= 0) throw ConfigError("grid nav: horizon must be positive");
  const int w = map_.width;
  const int h = map_.height;
  num_states_ = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 4;

  free_cell_.assign(static_cast<std::size_t>(w * h), 1);
  for (const auto& c : map_.walls) free_cell_[static_cast<std::size_t>(c.y * w + c.x)] = 0;

  std::vector<std::vector<int>> cell_objects(static_cast<std::size_t>(w * h));
  for (std::size_t i = 0; i < map_.objects.size(); ++i) {
    for (const auto& c : map_.objects[i].cells) {
      cell_objects[static_cast<std::size_t>(c.y * w + c.x)].push_back(static_cast<int>(i));
    }
  }

  visible_.resize(num_states_);
  auto mdp = std::make_shared<DeterministicMdp>();
  mdp->num_states = num_states_;
  mdp->num_actions = num_actions();
  mdp->next.resize(num_states_ * mdp->num_actions);
  mdp->valid.assign(num_states_, 0);

  for (std::size_t s = 0; s < num_states_; ++s) {
    const NavPose p = pose(s);
    if (!is_free_cell(p.x, p.y)) {
      for (std::size_t a = 0; a < mdp->num_actions; ++a) {
        mdp->next[s * mdp->num_actions + a] = static_cast<std::uint32_t>(s);
      }
      continue;
    }
    free_states_.push_back(s);
    mdp->valid[s] = 1;
    const int hd = static_cast<int>(p.heading);
    std::set<int> seen;
    for (int k = 1; k <= map_.view_range; ++k) {
      const int x = p.x + kDx[hd] * k;
      const int y = p.y + kDy[hd] * k;
      if (!is_free_cell(x, y)) break;
      for (int obj : cell_objects[static_cast<std::size_t>(y * w + x)]) seen.insert(obj);
    }
    visible_[s].assign(seen.begin(), seen.end());

    for (std::size_t a = 0; a < mdp->num_actions; ++a) {
      NavPose n = p;
      switch (static_cast<NavAction>(a)) {
        case NavAction::kTurnLeft: n.heading = static_cast<Heading>((hd + 3) % 4); break;
        case NavAction::kTurnRight: n.heading = static_cast<Heading>((hd + 1) % 4); break;
        case NavAction::kForward:
          if (is_free_cell(p.x + kDx[hd], p.y + kDy[hd])) {
            n.x += kDx[hd];
            n.y += kDy[hd];
          }
          break;
        case NavAction::kWait: break;
      }
      mdp->next[s * mdp->num_actions + a] = static_cast<std::uint32_t>(state_index(n));
    }
  }
  mdp_ = mdp;

  // Singleton observation model over objects + nothing.
  std::vector<std::string> symbols;
  for (const auto& o : map_.objects) symbols.push_back(o.name);
  symbols.push_back("nothing");
  std::vector<double> p_init(num_states_, 0.0);
  for (auto s : free_states_) p_init[s] = 1.0 / static_cast<double>(free_states_.size());
  std::vector<std::vector<Transition>> dynamics(num_states_ * mdp->num_actions);
  for (std::size_t i = 0; i < dynamics.size(); ++i) dynamics[i].push_back({mdp->next[i], 1.0});
  std::vector<std::vector<double>> p_obs(num_states_, std::vector<double>(num_symbols(), 0.0));
  for (std::size_t s = 0; s < num_states_; ++s) {
    if (visible_[s].empty()) {
      p_obs[s][static_cast<std::size_t>(nothing_symbol())] = 1.0;
    } else {
      const double mass = 1.0 / static_cast<double>(visible_[s].size());
      for (int o : visible_[s]) p_obs[s][static_cast<std::size_t>(o)] = mass;
    }
  }
  pomdp_ = std::make_shared<const PomdpSpec>(num_states_, mdp->num_actions, std::move(symbols),
                                             std::move(p_init), std::move(dynamics),
                                             std::move(p_obs), config_.horizon);
}

std::size_t GridNavEnv::state_index(const NavPose& p) const {
  if (p.x < 0 || p.y < 0 || p.x >= map_.width || p.y >= map_.height) {
    throw ConfigError("grid nav: pose outside the grid");
  }
  return (static_cast<std::size_t>(p.y) * static_cast<std::size_t>(map_.width) +
          static_cast<std::size_t>(p.x)) * 4 +
         static_cast<std::size_t>(p.heading);
}

NavPose GridNavEnv::pose(std::size_t state) const {
  if (state >= num_states_) throw ConfigError("grid nav: state out of range");
  const std::size_t cell = state / 4;
  return {static_cast<int>(cell % static_cast<std::size_t>(map_.width)),
          static_cast<int>(cell / static_cast<std::size_t>(map_.width)),
          static_cast<Heading>(state % 4)};
}

bool GridNavEnv::is_free_cell(int x, int y) const {
  if (x < 0 || y < 0 || x >= map_.width || y >= map_.height) return false;
  return free_cell_[static_cast<std::size_t>(y * map_.width + x)] != 0;
}

bool GridNavEnv::is_free_state(std::size_t state) const { return mdp_->is_valid(state); }

std::size_t GridNavEnv::next_state(std::size_t state, std::size_t action) const {
  if (state >= num_states_) throw ConfigError("grid nav: state out of range");
  if (action >= num_actions()) throw ConfigError("grid nav: invalid action id");
  return mdp_->step(state, action);
}

int GridNavEnv::observe(std::size_t state, Rng& rng) const {
  const auto& vis = visible_.at(state);
  if (vis.empty()) return nothing_symbol();
  std::uniform_int_distribution<std::size_t> pick(0, vis.size() - 1);
  return vis[pick(rng)];
}

std::vector<int> GridNavEnv::full_observe(std::size_t state) const { return visible_.at(state); }

std::vector<double> GridNavEnv::full_observation_likelihood(std::span<const int> objects) const {
  std::vector<double> out(num_states_, 0.0);
  for (std::size_t s = 0; s < num_states_; ++s) {
    if (!is_free_state(s)) continue;
    const auto& vis = visible_[s];
    out[s] = std::equal(vis.begin(), vis.end(), objects.begin(), objects.end()) ? 1.0 : 0.0;
  }
  return out;
}

NavStep GridNavEnv::step(std::size_t state, std::size_t action, std::size_t goal) const {
  const std::size_t next = next_state(state, action);
  return {next, -1.0, next == goal};
}

double GridNavEnv::cell_distance(std::size_t a, std::size_t b) const {
  const NavPose pa = pose(a);
  const NavPose pb = pose(b);
  return std::hypot(static_cast<double>(pa.x - pb.x), static_cast<double>(pa.y - pb.y));
}

// ---------------------------------------------------------------------------

MapProfile MapProfile::paper() { return MapProfile{}; }

MapProfile MapProfile::habitat() {
  MapProfile p;
  p.width = 41;
  p.height = 10;
  p.view_range = 2;
  p.count_unique_unknown = 0;
  p.count_duplicated = 24;
  p.count_unique_known = 10;
  p.duplicated_min_cells = 3;
  p.duplicated_max_cells = 8;
  // Floor, wall and ceiling-like clutter seen from almost everywhere.
  p.common_objects = 22;
  p.common_fraction = 0.95;
  p.room_width = 9;
  p.room_height = 4;
  return p;
}

GridMap generate_map(const MapProfile& profile, std::uint64_t seed) {
  if (profile.width <= 0 || profile.height <= 0) {
    throw ConfigError("map profile: width and height must be positive");
  }
  if (profile.duplicated_min_cells < 2 || profile.duplicated_max_cells < profile.duplicated_min_cells) {
    throw ConfigError("map profile: duplicated objects need a placement range starting at >= 2");
  }
  Rng rng(seed);
  GridMap map;
  map.width = profile.width;
  map.height = profile.height;
  map.view_range = profile.view_range;

  // Room partition: wall columns / rows with one doorway per room boundary.
  std::vector<int> wall_cols, wall_rows;
  if (profile.room_width > 0) {
    for (int x = profile.room_width; x < profile.width - 1; x += profile.room_width + 1) wall_cols.push_back(x);
  }
  if (profile.room_height > 0) {
    for (int y = profile.room_height; y < profile.height - 1; y += profile.room_height + 1) wall_rows.push_back(y);
  }
  std::set<std::pair<int, int>> walls;
  for (int x : wall_cols) {
    for (int y = 0; y < profile.height; ++y) walls.insert({x, y});
  }
  for (int y : wall_rows) {
    for (int x = 0; x < profile.width; ++x) walls.insert({x, y});
  }
  auto segments = [](const std::vector<int>& cuts, int extent) {
    std::vector<std::pair<int, int>> out;
    int start = 0;
    for (int c : cuts) {
      out.push_back({start, c - 1});
      start = c + 1;
    }
    out.push_back({start, extent - 1});
    return out;
  };
  const auto row_segments = segments(wall_rows, profile.height);
  const auto col_segments = segments(wall_cols, profile.width);
  for (int x : wall_cols) {
    for (auto [lo, hi] : row_segments) {
      std::uniform_int_distribution<int> pick(lo, hi);
      walls.erase({x, pick(rng)});
    }
  }
  for (int y : wall_rows) {
    for (auto [lo, hi] : col_segments) {
      std::uniform_int_distribution<int> pick(lo, hi);
      walls.erase({pick(rng), y});
    }
  }
  for (auto [x, y] : walls) map.walls.push_back({x, y});

  std::vector<Cell> free_cells;
  for (int y = 0; y < profile.height; ++y) {
    for (int x = 0; x < profile.width; ++x) {
      if (!walls.count({x, y})) free_cells.push_back({x, y});
    }
  }
  auto sample_cells = [&](int count) {
    count = std::min<int>(count, static_cast<int>(free_cells.size()));
    std::vector<Cell> pool = free_cells;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(count));
    std::sort(pool.begin(), pool.end(), [](const Cell& a, const Cell& b) {
      return std::tie(a.y, a.x) < std::tie(b.y, b.x);
    });
    return pool;
  };

  int next_id = 0;
  auto add_object = [&](ObjectCategory category, std::vector<Cell> cells) {
    GridObject obj;
    obj.id = next_id;
    constexpr int kNames = static_cast<int>(std::size(kObjectNames));
    obj.name = kObjectNames[next_id % kNames];
    if (next_id >= kNames) obj.name += "-" + std::to_string(next_id / kNames + 1);
    obj.category = category;
    obj.cells = std::move(cells);
    map.objects.push_back(std::move(obj));
    ++next_id;
  };
  for (int i = 0; i < profile.count_unique_unknown; ++i) {
    add_object(ObjectCategory::kUniqueUnknown, sample_cells(1));
  }
  for (int i = 0; i < profile.count_duplicated; ++i) {
    int count;
    if (i < profile.common_objects) {
      count = std::max(2, static_cast<int>(std::lround(profile.common_fraction *
                                                       static_cast<double>(free_cells.size()))));
    } else {
      std::uniform_int_distribution<int> pick(profile.duplicated_min_cells, profile.duplicated_max_cells);
      count = pick(rng);
    }
    add_object(ObjectCategory::kDuplicatedKnown, sample_cells(count));
  }
  for (int i = 0; i < profile.count_unique_known; ++i) {
    add_object(ObjectCategory::kUniqueKnown, sample_cells(1));
  }
  map.validate();
  return map;
}

}  // namespace ase
