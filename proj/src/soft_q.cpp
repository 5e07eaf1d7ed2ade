#include "ase/soft_q.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

namespace ase {

namespace {

constexpr std::uint32_t kCacheMagic = 0x51544231;  // "QTB1"

std::vector<std::vector<std::uint32_t>> predecessors(const DeterministicMdp& mdp) {
  std::vector<std::vector<std::uint32_t>> pred(mdp.num_states);
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    if (!mdp.is_valid(s)) continue;
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const auto n = mdp.step(s, a);
      if (n != s) pred[n].push_back(static_cast<std::uint32_t>(s));
    }
  }
  return pred;
}

}  // namespace

double log_sum_exp(const double* values, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, values[i]);
  if (!std::isfinite(m)) return m;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(values[i] - m);
  return m + std::log(total);
}

SoftQTable::SoftQTable(std::size_t num_states, std::size_t num_actions, std::size_t goal,
                       SoftQConfig config, std::vector<double> q, double residual, int sweeps)
    : num_states_(num_states),
      num_actions_(num_actions),
      goal_(goal),
      config_(config),
      q_(std::move(q)),
      residual_(residual),
      sweeps_(sweeps) {}

double SoftQTable::value(std::size_t s) const {
  if (s == goal_) return 0.0;
  return log_sum_exp(row(s), num_actions_);
}

std::size_t SoftQTable::greedy_action(std::size_t s) const {
  const double* r = row(s);
  return static_cast<std::size_t>(std::max_element(r, r + num_actions_) - r);
}

NonConvergenceError::NonConvergenceError(double residual, int sweeps)
    : Error("soft Q-iteration did not converge after " + std::to_string(sweeps) +
            " sweeps (residual " + format_double(residual) + ")"),
      residual_(residual) {}

std::vector<int> bfs_distance_to_goal(const DeterministicMdp& mdp, std::size_t goal) {
  std::vector<int> dist(mdp.num_states, -1);
  if (goal >= mdp.num_states) throw ConfigError("bfs_distance_to_goal: goal out of range");
  const auto pred = predecessors(mdp);
  std::deque<std::uint32_t> queue{static_cast<std::uint32_t>(goal)};
  dist[goal] = 0;
  while (!queue.empty()) {
    const auto s = queue.front();
    queue.pop_front();
    for (auto p : pred[s]) {
      if (dist[p] < 0) {
        dist[p] = dist[s] + 1;
        queue.push_back(p);
      }
    }
  }
  return dist;
}

SoftQTable soft_q_iteration(const DeterministicMdp& mdp, std::size_t goal,
                            const SoftQConfig& config) {
  if (goal >= mdp.num_states || !mdp.is_valid(goal)) {
    throw ConfigError("soft_q_iteration: goal is not a valid state");
  }
  if (!(config.tolerance > 0.0)) throw ConfigError("soft_q_iteration: tolerance must be > 0");
  if (!(config.discount > 0.0 && config.discount <= 1.0)) {
    throw ConfigError("soft_q_iteration: discount must lie in (0, 1]");
  }
  const std::size_t num_actions = mdp.num_actions;
  const auto dist = bfs_distance_to_goal(mdp, goal);

  // Sweep order: nearest to the goal first, unreachable states last.
  std::vector<std::uint32_t> order;
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    if (mdp.is_valid(s) && s != goal) order.push_back(static_cast<std::uint32_t>(s));
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    const int da = dist[a] < 0 ? std::numeric_limits<int>::max() : dist[a];
    const int db = dist[b] < 0 ? std::numeric_limits<int>::max() : dist[b];
    return da < db;
  });

  std::vector<double> q(mdp.num_states * num_actions, 0.0);
  std::vector<double> value(mdp.num_states, 0.0);
  // Start from the hard shortest-path values; the soft fixed point is close.
  for (auto s : order) {
    const double d = dist[s] < 0 ? 0.0 : static_cast<double>(dist[s]);
    value[s] = config.step_penalty * d;
  }

  int sweeps = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (sweeps < config.max_sweeps) {
    ++sweeps;
    for (auto s : order) {
      double* row = q.data() + s * num_actions;
      for (std::size_t a = 0; a < num_actions; ++a) {
        row[a] = config.step_penalty + config.discount * value[mdp.step(s, a)];
      }
      value[s] = log_sum_exp(row, num_actions);
    }
    // Jacobi residual of the current table.
    residual = 0.0;
    for (auto s : order) {
      const double* row = q.data() + s * num_actions;
      for (std::size_t a = 0; a < num_actions; ++a) {
        const double target = config.step_penalty + config.discount * value[mdp.step(s, a)];
        residual = std::max(residual, std::abs(target - row[a]));
      }
    }
    if (!std::isfinite(residual)) break;
    if (residual <= config.tolerance) break;
  }
  if (!(residual <= config.tolerance)) throw NonConvergenceError(residual, sweeps);
  return SoftQTable(mdp.num_states, num_actions, goal, config, std::move(q), residual, sweeps);
}

double bellman_residual(const DeterministicMdp& mdp, const SoftQTable& table) {
  const auto& config = table.config();
  double residual = 0.0;
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    if (!mdp.is_valid(s) || s == table.goal()) continue;
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const double target =
          config.step_penalty + config.discount * table.value(mdp.step(s, a));
      residual = std::max(residual, std::abs(target - table.q(s, a)));
    }
  }
  return residual;
}

int greedy_path_length(const DeterministicMdp& mdp, const SoftQTable& table, std::size_t start,
                       int max_steps) {
  std::size_t s = start;
  for (int steps = 0; steps <= max_steps; ++steps) {
    if (s == table.goal()) return steps;
    s = mdp.step(s, table.greedy_action(s));
  }
  return -1;
}

// ---------------------------------------------------------------------------

QTableCache::QTableCache(std::shared_ptr<const DeterministicMdp> mdp, std::uint64_t map_hash,
                         SoftQConfig config, std::filesystem::path directory)
    : mdp_(std::move(mdp)),
      map_hash_(map_hash),
      config_(config),
      directory_(std::move(directory)) {}

std::filesystem::path QTableCache::file_for(std::size_t goal) const {
  std::ostringstream key;
  key << std::hex << map_hash_ << '-' << std::dec << goal << '-'
      << format_double(config_.discount) << '-' << format_double(config_.step_penalty);
  return directory_ / ("q-" + key.str() + ".bin");
}

std::shared_ptr<const SoftQTable> QTableCache::get(std::size_t goal) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = tables_.find(goal); it != tables_.end()) return it->second;
  }
  std::shared_ptr<const SoftQTable> table = load(goal);
  if (!table) {
    table = std::make_shared<const SoftQTable>(soft_q_iteration(*mdp_, goal, config_));
    store(*table);
  }
  std::lock_guard lock(mutex_);
  return tables_.emplace(goal, std::move(table)).first->second;
}

std::shared_ptr<const SoftQTable> QTableCache::load(std::size_t goal) const {
  if (directory_.empty()) return nullptr;
  std::ifstream in(file_for(goal), std::ios::binary);
  if (!in) return nullptr;
  std::uint32_t magic = 0;
  std::uint64_t hash = 0, stored_goal = 0, states = 0, actions = 0;
  double discount = 0, penalty = 0, tolerance = 0, residual = 0;
  std::int32_t sweeps = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof magic);
  in.read(reinterpret_cast<char*>(&hash), sizeof hash);
  in.read(reinterpret_cast<char*>(&stored_goal), sizeof stored_goal);
  in.read(reinterpret_cast<char*>(&states), sizeof states);
  in.read(reinterpret_cast<char*>(&actions), sizeof actions);
  in.read(reinterpret_cast<char*>(&discount), sizeof discount);
  in.read(reinterpret_cast<char*>(&penalty), sizeof penalty);
  in.read(reinterpret_cast<char*>(&tolerance), sizeof tolerance);
  in.read(reinterpret_cast<char*>(&residual), sizeof residual);
  in.read(reinterpret_cast<char*>(&sweeps), sizeof sweeps);
  if (!in || magic != kCacheMagic || hash != map_hash_ || stored_goal != goal ||
      states != mdp_->num_states || actions != mdp_->num_actions ||
      discount != config_.discount || penalty != config_.step_penalty ||
      tolerance > config_.tolerance) {
    return nullptr;
  }
  std::vector<double> q(states * actions);
  in.read(reinterpret_cast<char*>(q.data()), static_cast<std::streamsize>(q.size() * sizeof(double)));
  if (!in) return nullptr;
  SoftQConfig stored = config_;
  stored.tolerance = tolerance;
  return std::make_shared<const SoftQTable>(states, actions, goal, stored, std::move(q), residual,
                                            sweeps);
}

void QTableCache::store(const SoftQTable& table) const {
  if (directory_.empty()) return;
  std::filesystem::create_directories(directory_);
  const auto path = file_for(table.goal());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const std::uint32_t magic = kCacheMagic;
    const std::uint64_t hash = map_hash_, goal = table.goal(), states = table.num_states(),
                        actions = table.num_actions();
    const double discount = config_.discount, penalty = config_.step_penalty,
                 tolerance = config_.tolerance, residual = table.residual();
    const std::int32_t sweeps = table.sweeps();
    out.write(reinterpret_cast<const char*>(&magic), sizeof magic);
    out.write(reinterpret_cast<const char*>(&hash), sizeof hash);
    out.write(reinterpret_cast<const char*>(&goal), sizeof goal);
    out.write(reinterpret_cast<const char*>(&states), sizeof states);
    out.write(reinterpret_cast<const char*>(&actions), sizeof actions);
    out.write(reinterpret_cast<const char*>(&discount), sizeof discount);
    out.write(reinterpret_cast<const char*>(&penalty), sizeof penalty);
    out.write(reinterpret_cast<const char*>(&tolerance), sizeof tolerance);
    out.write(reinterpret_cast<const char*>(&residual), sizeof residual);
    out.write(reinterpret_cast<const char*>(&sweeps), sizeof sweeps);
    out.write(reinterpret_cast<const char*>(table.values().data()),
              static_cast<std::streamsize>(table.values().size() * sizeof(double)));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ase
