#include <doctest.h>

#include <cmath>
#include <random>

#include "ase/grid_nav.hpp"
#include "ase/soft_q.hpp"
#include "support.hpp"

using namespace ase;

namespace {

// State 0 may stay or advance to the absorbing goal 1.
DeterministicMdp two_state_chain() {
  DeterministicMdp m;
  m.num_states = 2;
  m.num_actions = 2;
  m.next = {0, 1, 1, 1};
  m.valid = {1, 1};
  return m;
}

bool is_shortest_action(const DeterministicMdp& mdp, const std::vector<int>& dist, std::size_t s, std::size_t a) {
  return dist[mdp.step(s, a)] == dist[s] - 1;
}

}  // namespace

TEST_CASE("two-state chain matches an independent fixed point") {
  SoftQConfig cfg;
  cfg.discount = 1.0;
  cfg.step_penalty = -1.0;
  cfg.tolerance = 1e-12;
  const auto table = soft_q_iteration(two_state_chain(), 1, cfg);

  // Damped fixed-point iteration on V(0) alone.
  double v = 0.0;
  for (int i = 0; i < 100000; ++i) v = 0.5 * v + 0.5 * std::log(std::exp(-1.0 + v) + std::exp(-1.0));
  CHECK(v == doctest::Approx(-std::log(std::exp(1.0) - 1.0)).epsilon(1e-12));

  CHECK(table.q(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(table.q(0, 0) == doctest::Approx(-1.0 + v).epsilon(1e-10));
  CHECK(table.value(0) == doctest::Approx(v).epsilon(1e-10));
  CHECK(table.q(1, 0) == 0.0);
  CHECK(table.q(1, 1) == 0.0);
  CHECK(table.greedy_action(0) == 1);
}

TEST_CASE("goal is absorbing with zero value") {
  const auto map = generate_map(MapProfile::paper(), 3);
  const GridNavEnv env(map);
  const std::size_t goal = env.free_states()[17];
  const auto table = soft_q_iteration(*env.mdp(), goal);
  for (std::size_t a = 0; a < env.num_actions(); ++a) CHECK(table.q(goal, a) == 0.0);
  CHECK(bellman_residual(*env.mdp(), table) <= 1e-6);
}

TEST_CASE("non-convergence carries the residual") {
  SoftQConfig cfg;
  cfg.max_sweeps = 1;
  cfg.tolerance = 1e-15;
  const GridNavEnv env(generate_map(MapProfile::paper(), 1));
  try {
    soft_q_iteration(*env.mdp(), env.free_states().front(), cfg);
    FAIL("expected NonConvergenceError");
  } catch (const NonConvergenceError& e) {
    CHECK(e.residual() > 1e-15);
  }
}

TEST_CASE("greedy paths are shortest paths on the shipped grids") {
  for (const char* name : {"maps/paper_5x5.json", "maps/habitat.json"}) {
    CAPTURE(name);
    const GridNavEnv env(GridMap::load(testing::source_dir() / name));
    const auto& mdp = *env.mdp();
    const auto& free = env.free_states();
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    for (int g = 0; g < 6; ++g) {
      const std::size_t goal = free[pick(rng)];
      const auto table = soft_q_iteration(mdp, goal);
      CHECK(table.residual() <= 1e-6);
      CHECK(bellman_residual(mdp, table) <= 1e-6);
      const auto dist = bfs_distance_to_goal(mdp, goal);
      for (std::size_t s : free) {
        REQUIRE(dist[s] >= 0);
        CHECK(greedy_path_length(mdp, table, s, 10000) == dist[s]);
      }
    }
  }
}

TEST_CASE("soft values respect goal distance at discount one") {
  SoftQConfig cfg;
  cfg.discount = 1.0;
  const GridNavEnv env(GridMap::load(testing::source_dir() / "maps/paper_5x5.json"));
  const auto& mdp = *env.mdp();
  const std::size_t goal = env.free_states()[40];
  const auto table = soft_q_iteration(mdp, goal, cfg);
  const auto dist = bfs_distance_to_goal(mdp, goal);
  for (std::size_t s : env.free_states()) {
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const std::size_t n = mdp.step(s, a);
      if (dist[n] == dist[s] - 1) CHECK(table.value(s) <= table.value(n) + std::abs(cfg.step_penalty) + 1e-9);
    }
  }
}

TEST_CASE("shifting the step penalty keeps greedy actions shortest") {
  const GridNavEnv env(generate_map(MapProfile::paper(), 9));
  const auto& mdp = *env.mdp();
  const std::size_t goal = env.free_states()[5];
  const auto dist = bfs_distance_to_goal(mdp, goal);
  for (double r : {-2.0, -3.0, -5.0}) {
    SoftQConfig cfg;
    cfg.step_penalty = r;
    const auto table = soft_q_iteration(mdp, goal, cfg);
    for (std::size_t s : env.free_states()) {
      if (s == goal) continue;
      CHECK(is_shortest_action(mdp, dist, s, table.greedy_action(s)));
    }
  }
}

TEST_CASE("q tables persist to disk and reload identically") {
  const auto dir = testing::scratch_dir("qcache");
  const GridNavEnv env(generate_map(MapProfile::paper(), 2));
  const std::uint64_t hash = env.map().hash();
  const std::size_t goal = env.free_states()[3];
  std::vector<double> first;
  {
    QTableCache cache(env.mdp(), hash, SoftQConfig{}, dir);
    first = cache.get(goal)->values();
    CHECK(std::filesystem::exists(cache.file_for(goal)));
  }
  QTableCache again(env.mdp(), hash, SoftQConfig{}, dir);
  CHECK(again.get(goal)->values() == first);

  SoftQConfig other;
  other.discount = 0.95;
  QTableCache different(env.mdp(), hash, other, dir);
  CHECK(different.file_for(goal) != again.file_for(goal));
  std::filesystem::remove_all(dir);
}
