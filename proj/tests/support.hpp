#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "ase/belief.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return ASE_SOURCE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ase_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng, double zero_prob = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = u(rng) < zero_prob ? 0.0 : u(rng) + 1e-3;
    total += x;
  }
  if (total == 0.0) {
    p[0] = 1.0;
    total = 1.0;
  }
  for (auto& x : p) x /= total;
  return p;
}

/// Dense random POMDP with some structural zeros.
struct RandomPomdp {
  std::size_t S, A, O;
  std::vector<double> init;
  std::vector<std::vector<std::vector<double>>> dyn;
  std::vector<std::vector<double>> obs;

  RandomPomdp(std::mt19937_64& rng, std::size_t max_states = 6) {
    std::uniform_int_distribution<std::size_t> ns(1, max_states), na(1, 3), no(1, 4);
    S = ns(rng);
    A = na(rng);
    O = no(rng);
    init = random_simplex(S, rng, 0.2);
    dyn.assign(S, std::vector<std::vector<double>>(A));
    for (auto& row : dyn)
      for (auto& d : row) d = random_simplex(S, rng, 0.3);
    for (std::size_t s = 0; s < S; ++s) obs.push_back(random_simplex(O, rng, 0.3));
  }

  ase::PomdpSpec spec(int horizon) const {
    std::vector<std::string> names;
    for (std::size_t o = 0; o < O; ++o) names.push_back("o" + std::to_string(o));
    return ase::PomdpSpec::from_dense(S, A, names, init, dyn, obs, horizon);
  }
};

inline std::size_t draw(const std::vector<double>& p, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> d(p.begin(), p.end());
  return d(rng);
}

}  // namespace testing
