#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "ase/common.hpp"

namespace ase {

/// Deterministic MDP over an enumerated state space. States with
/// `valid[s] == 0` (e.g. wall cells) take no part in planning.
struct DeterministicMdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<std::uint32_t> next;  // next[s * num_actions + a]
  std::vector<std::uint8_t> valid;

  std::uint32_t step(std::size_t s, std::size_t a) const { return next[s * num_actions + a]; }
  bool is_valid(std::size_t s) const { return valid[s] != 0; }
};

struct SoftQConfig {
  double discount = 0.99;
  double step_penalty = -6.0;
  double tolerance = 1e-6;
  int max_sweeps = 200000;
};

/// Goal-conditioned soft Q table: Q(s, a) = r + discount * V(next(s, a)),
/// V(s) = ln sum_a exp Q(s, a), goal absorbing with V(goal) = 0.
class SoftQTable {
 public:
  SoftQTable(std::size_t num_states, std::size_t num_actions, std::size_t goal,
             SoftQConfig config, std::vector<double> q, double residual, int sweeps);

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t goal() const { return goal_; }
  const SoftQConfig& config() const { return config_; }
  double residual() const { return residual_; }
  int sweeps() const { return sweeps_; }

  double q(std::size_t s, std::size_t a) const { return q_[s * num_actions_ + a]; }
  const double* row(std::size_t s) const { return q_.data() + s * num_actions_; }
  const std::vector<double>& values() const { return q_; }
  /// Soft value ln sum_a exp Q(s, a).
  double value(std::size_t s) const;
  /// argmax_a Q(s, a); ties go to the lowest action id.
  std::size_t greedy_action(std::size_t s) const;

 private:
  std::size_t num_states_;
  std::size_t num_actions_;
  std::size_t goal_;
  SoftQConfig config_;
  std::vector<double> q_;
  double residual_;
  int sweeps_;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(double residual, int sweeps);
  double residual() const { return residual_; }

 private:
  double residual_;
};

double log_sum_exp(const double* values, std::size_t n);

/// Solves the soft Bellman fixed point by Gauss-Seidel sweeps ordered by
/// distance to the goal. Throws NonConvergenceError past `max_sweeps`.
SoftQTable soft_q_iteration(const DeterministicMdp& mdp, std::size_t goal,
                            const SoftQConfig& config = {});

/// Max-norm soft Bellman residual of `table` over valid non-goal states.
double bellman_residual(const DeterministicMdp& mdp, const SoftQTable& table);

/// Shortest action count from each state to `goal` (-1 if unreachable).
std::vector<int> bfs_distance_to_goal(const DeterministicMdp& mdp, std::size_t goal);

/// Number of greedy steps from `start` to the goal, or -1 if the greedy
/// rollout exceeds `max_steps`.
int greedy_path_length(const DeterministicMdp& mdp, const SoftQTable& table, std::size_t start,
                       int max_steps);

/// Memoizes soft Q tables per goal for one MDP, optionally persisting them
/// to a directory as binary files keyed by (map hash, goal, discount,
/// penalty). Thread-safe.
class QTableCache {
 public:
  QTableCache(std::shared_ptr<const DeterministicMdp> mdp, std::uint64_t map_hash,
              SoftQConfig config, std::filesystem::path directory = {});

  std::shared_ptr<const SoftQTable> get(std::size_t goal);
  const DeterministicMdp& mdp() const { return *mdp_; }
  const SoftQConfig& config() const { return config_; }
  std::uint64_t map_hash() const { return map_hash_; }

  std::filesystem::path file_for(std::size_t goal) const;

 private:
  std::shared_ptr<const SoftQTable> load(std::size_t goal) const;
  void store(const SoftQTable& table) const;

  std::shared_ptr<const DeterministicMdp> mdp_;
  std::uint64_t map_hash_;
  SoftQConfig config_;
  std::filesystem::path directory_;
  std::mutex mutex_;
  std::map<std::size_t, std::shared_ptr<const SoftQTable>> tables_;
};

}  // namespace ase
