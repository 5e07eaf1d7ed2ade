#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ase/user_models.hpp"
#include "support.hpp"

using namespace ase;
using nlohmann::json;

namespace {

// 3x3 open floor, view range 1. "u" (unknown) at (1,0), "d" (duplicated) at
// (1,0) and (2,2), "k" (known) at (0,2).
GridNavEnv toy_env() {
  return GridNavEnv(GridMap::from_json(json::parse(R"({
    "width": 3, "height": 3, "view_range": 1,
    "objects": [
      {"id": 0, "name": "u", "category": "a", "cells": [[1, 0]]},
      {"id": 1, "name": "d", "category": "b", "cells": [[1, 0], [2, 2]]},
      {"id": 2, "name": "k", "category": "c", "cells": [[0, 2]]}
    ],
    "walls": []
  })")));
}

std::shared_ptr<const SoftQTable> table(std::size_t states, std::size_t actions, std::vector<double> q) {
  return std::make_shared<SoftQTable>(states, actions, 0, SoftQConfig{}, std::move(q), 0.0, 0);
}

}  // namespace

TEST_CASE("zero trust ignores an object, full trust is the exact filter") {
  const auto env = toy_env();
  const auto& spec = env.singleton_pomdp();
  const auto layout = WeightLayout::per_category(env);
  const WeightedObsUserModel blind(env, layout, {0.0});
  const WeightedObsUserModel full(env, layout, {1.0});

  const auto prior = spec.initial_belief();
  const auto after = blind.update(prior, std::nullopt, 0);
  for (std::size_t s = 0; s < prior.size(); ++s) CHECK(after[s] == prior[s]);
  // With an action the belief is only pushed through the dynamics.
  const auto moved = blind.update(prior, 2, 0);
  const auto predicted = predict(prior, 2, spec);
  for (std::size_t s = 0; s < prior.size(); ++s) CHECK(moved[s] == doctest::Approx(predicted[s]).epsilon(1e-12));

  // Random episodes: θ = 1 matches the unbiased filter step by step.
  Rng rng(3);
  for (int episode = 0; episode < 20; ++episode) {
    auto state = env.free_states()[rng() % env.free_states().size()];
    auto user = prior;
    auto exact = prior;
    for (int t = 0; t < 12; ++t) {
      const std::optional<std::size_t> action =
          t == 0 ? std::nullopt : std::optional<std::size_t>(rng() % env.num_actions());
      if (action) state = env.next_state(state, *action);
      const int symbol = env.observe(state, rng);
      user = full.update(user, action, symbol);
      exact = *bayes_update(exact, action, spec.observation_likelihood(static_cast<std::size_t>(symbol)), spec);
      for (std::size_t s = 0; s < user.size(); ++s) REQUIRE(std::abs(user[s] - exact[s]) <= 1e-9);
    }
  }
}

TEST_CASE("weighted observation model is a distribution and monotone in its weights") {
  const auto env = toy_env();
  const auto layout = WeightLayout::per_object(env);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> theta(layout.num_params);
    for (auto& w : theta) w = u(rng);
    const WeightedObsUserModel model(env, layout, theta);

    std::vector<std::vector<double>> lik;
    for (std::size_t o = 0; o < env.num_symbols(); ++o) lik.push_back(model.likelihood(static_cast<int>(o)));
    for (std::size_t s : env.free_states()) {
      double total = 0.0;
      for (const auto& l : lik) {
        CHECK(l[s] >= 0.0);
        total += l[s];
      }
      if (model.normalizer()[s] > 0.0) CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }

    // Raise one weight and compare pointwise.
    const std::size_t k = rng() % theta.size();
    auto raised = theta;
    raised[k] = std::min(1.0, raised[k] + 0.3 * u(rng));
    const auto before = model.likelihood(static_cast<int>(k));
    const auto after = WeightedObsUserModel(env, layout, raised).likelihood(static_cast<int>(k));
    for (std::size_t s = 0; s < before.size(); ++s) CHECK(after[s] >= before[s] - 1e-15);
  }
  CHECK_THROWS_AS(WeightedObsUserModel(env, layout, std::vector<double>(layout.num_params, 1.5)), ConfigError);
  CHECK_THROWS_AS(WeightedObsUserModel(env, layout, {1.0}), ConfigError);
}

TEST_CASE("bandwidth limit ignores oversize observations") {
  const auto env = toy_env();
  const NavUserModel user(WeightedObsUserModel::unbiased(env));
  const auto prior = user.initial_belief();
  const std::vector<int> pair{0, 1};
  const auto kept = user.update(prior, std::nullopt, pair);
  for (std::size_t s = 0; s < prior.size(); ++s) CHECK(kept[s] == prior[s]);
  CHECK(BandwidthUserModel{}.accepts(1));
  CHECK_FALSE(BandwidthUserModel{}.accepts(2));
  CHECK(BandwidthUserModel{3}.accepts(3));

  // An empty set reads as "nothing visible".
  const auto nothing = user.update(prior, std::nullopt, std::vector<int>{});
  for (std::size_t s : env.free_states()) {
    if (!env.visible(s).empty()) CHECK(nothing[s] == 0.0);
  }
}

TEST_CASE("logistic percept") {
  const auto identity = DistortedPerceptUserModel::identity_like();
  CHECK(identity.percept(0.0) == 0.0);
  // Slope one at the origin.
  const double h = 1e-6;
  CHECK((identity.percept(h) - identity.percept(-h)) / (2 * h) == doctest::Approx(1.0).epsilon(1e-8));

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0), pos(0.01, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const DistortedPerceptUserModel m{u(rng), pos(rng)};
    double prev = -std::numbers::pi;
    for (double o = -std::numbers::pi; o <= std::numbers::pi; o += 0.05) {
      const double s = m.percept(o);
      CHECK(s > prev);
      CHECK(s < std::numbers::pi);
      prev = s;
    }
    const double o = u(rng);
    const double fd = (DistortedPerceptUserModel{m.theta0 + h, m.theta1}.percept(o) -
                       DistortedPerceptUserModel{m.theta0 - h, m.theta1}.percept(o)) / (2 * h);
    CHECK(m.percept_grad_theta0(o) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("Boltzmann user actions") {
  SUBCASE("greedy limit on a delta belief") {
    const GridNavEnv env(generate_map(MapProfile::paper(), 1));
    const auto goal = env.free_states()[17];
    const auto q = std::make_shared<SoftQTable>(soft_q_iteration(*env.mdp(), goal));
    const BoltzmannPolicy policy(q, 1e5);
    for (std::size_t s : env.free_states()) {
      if (s == goal) continue;
      const auto m = policy.marginal(DiscreteBelief::delta(env.num_states(), s));
      // Mass on the (near-)argmax set; turning left or right can tie.
      const double best = q->q(s, q->greedy_action(s));
      double mass = 0.0;
      for (std::size_t a = 0; a < m.size(); ++a) {
        if (q->q(s, a) >= best - 1e-3) mass += m[a];
      }
      CHECK(mass >= 0.999);
    }
  }
  SUBCASE("uniform Q gives uniform actions") {
    const BoltzmannPolicy policy(table(2, 3, std::vector<double>(6, -4.0)), 3.0);
    const auto m = policy.marginal(DiscreteBelief({0.3, 0.7}));
    for (double p : m) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("opposing greedy actions under an even belief") {
    const BoltzmannPolicy policy(table(2, 2, {0.0, -10.0, -10.0, 0.0}), 10.0);
    const DiscreteBelief belief({0.5, 0.5});
    const auto exact = policy.marginal(belief);
    CHECK(exact[0] == doctest::Approx(0.5).epsilon(1e-12));
    Rng rng(11);
    const int n = 10000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += user_act(policy, belief, rng) == 0;
    // Four standard errors.
    CHECK(std::abs(zeros / double(n) - 0.5) <= 4 * 0.005);
  }
  CHECK_THROWS_AS(BoltzmannPolicy(table(1, 2, {0.0, 0.0}), 0.0), ConfigError);
}

TEST_CASE("lander user policy") {
  const auto even = lander_action_probs(0.0, 12.0);
  CHECK(even[0] == 0.5);
  CHECK(even[1] == 0.5);
  CHECK(lander_action_probs(std::numbers::pi, 5.0)[1] >= 0.999);
  const auto flat = lander_action_probs(1.0, 1e-9);
  CHECK(flat[1] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK_THROWS_AS(lander_action_probs(0.1, 0.0), ConfigError);

  Rng rng(2);
  int right = 0;
  for (int i = 0; i < 2000; ++i) {
    const int a = lander_user_policy(0.5, 12.0, rng);
    CHECK(a != static_cast<int>(LanderAction::kNoop));
    right += a == static_cast<int>(LanderAction::kFireRight);
  }
  CHECK(right / 2000.0 == doctest::Approx(sigmoid(6.0)).epsilon(0.02));
}

TEST_CASE("lane-keeping user prefers to steer back toward the road") {
  DelayTrackConfig cfg;
  // Road bends to the right of the car: offsets grow with distance.
  std::vector<double> view{0.0, 0.1, 0.2, 0.3, 0.4, 0.0};
  const auto scores = steering_scores(view, cfg);
  CHECK(scores[static_cast<int>(SteerAction::kRight)] > scores[static_cast<int>(SteerAction::kStraight)]);
  CHECK(scores[static_cast<int>(SteerAction::kStraight)] > scores[static_cast<int>(SteerAction::kLeft)]);
  CHECK_THROWS_AS(steering_scores(std::vector<double>{0.0, 1.0}, cfg), ConfigError);
}
