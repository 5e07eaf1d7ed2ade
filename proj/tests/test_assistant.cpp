#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ase/assistant.hpp"
#include "support.hpp"

using namespace ase;
using nlohmann::json;

namespace {

int chosen_object(const SyntheticObservation& obs) {
  const auto& objects = std::get<std::vector<int>>(obs.payload);
  return objects.empty() ? -1 : objects.front();
}

// Three cells in a row; "p" only at the left end, "q" at the middle and right.
GridNavEnv three_cell_env() {
  return GridNavEnv(GridMap::from_json(json::parse(R"({
    "width": 3, "height": 1, "view_range": 1,
    "objects": [
      {"id": 0, "name": "p", "category": "c", "cells": [[0, 0]]},
      {"id": 1, "name": "q", "category": "b", "cells": [[1, 0], [2, 0]]}
    ],
    "walls": []
  })")));
}

}  // namespace

TEST_CASE("enumerative synthesis on hand-built beliefs") {
  SUBCASE("perfect landmark") {
    // Object 1 is visible only from state 2 under the user's model.
    const DiscreteBelief assistant = DiscreteBelief::delta(3, 2);
    const std::vector<std::vector<double>> lik{{0.5, 0.5, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}};
    const DiscreteBelief user = DiscreteBelief::uniform(3);
    const std::vector<int> candidates{0, 1, 2};
    const auto out = synthesize_enumerative(assistant, candidates, [&](int c) {
      return condition(user, lik[static_cast<std::size_t>(c)]).value_or(user);
    });
    CHECK(out.chosen == 1);
    CHECK(out.objective == 0.0);
    CHECK(out.candidate_count == 3);
  }
  SUBCASE("uninformative candidates tie and the lowest id wins") {
    const DiscreteBelief assistant({0.7, 0.2, 0.1});
    const DiscreteBelief user({0.2, 0.5, 0.3});
    const std::vector<int> candidates{4, 2, 7};
    const auto out = synthesize_enumerative(assistant, candidates, [&](int) { return user; });
    CHECK(out.chosen == 2);
    CHECK(out.objective == doctest::Approx(kl_divergence(assistant, user)).epsilon(1e-15));
  }
  SUBCASE("three-state toy world against hand enumeration") {
    const auto env = three_cell_env();
    const NavUserModel user(WeightedObsUserModel::unbiased(env));
    // Facing east from x = 0 sees "q" at x = 1; facing west sees nothing.
    const auto east = [&](int x) { return env.state_index({x, 0, Heading::kEast}); };
    const auto west = [&](int x) { return env.state_index({x, 0, Heading::kWest}); };
    std::vector<double> a(env.num_states(), 0.0), u(env.num_states(), 0.0);
    a[east(0)] = 0.6;
    a[west(1)] = 0.3;
    a[west(2)] = 0.1;
    for (auto s : {east(0), west(1), west(2)}) u[s] = 1.0 / 3.0;
    const DiscreteBelief assistant(a), prior(u);

    const std::vector<int> candidates{0, 1};
    const auto out = synthesize_enumerative(assistant, user, prior, std::nullopt, candidates);

    // By hand: west(1) sees p; west(2) sees q; east(0) sees q.
    // p -> delta on west(1): KL = inf. q -> {east(0): 1/2, west(2): 1/2}: KL = inf too
    // because west(1) keeps mass 0.3. Both infinite, so lowest id.
    CHECK(env.full_observe(west(1)) == std::vector<int>{0});
    CHECK(env.full_observe(west(2)) == std::vector<int>{1});
    CHECK(env.full_observe(east(0)) == std::vector<int>{1});
    CHECK(std::isinf(out.objective));

    // Drop the mass on west(1): q now gives a finite value and p stays infinite.
    a[west(1)] = 0.0;
    a[east(0)] = 0.8;
    a[west(2)] = 0.2;
    const DiscreteBelief narrowed(a);
    const double kl_q = 0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5);
    const auto out2 = synthesize_enumerative(narrowed, user, prior, std::nullopt, candidates);
    CHECK(out2.chosen == 1);
    CHECK(out2.objective == doctest::Approx(kl_q).epsilon(1e-12));
  }
  CHECK_THROWS_AS(synthesize_enumerative(DiscreteBelief::uniform(2), std::vector<int>{},
                                         [](int) { return DiscreteBelief::uniform(2); }),
                  ConfigError);
}

TEST_CASE("enumerative synthesis is optimal and never worse than the ambient observation") {
  const GridNavEnv env(generate_map(MapProfile::paper(), 1));
  const NavUserModel exact(WeightedObsUserModel::unbiased(env));
  const auto layout = WeightLayout::per_category(env);
  const NavUserModel biased(WeightedObsUserModel(env, layout, {0.3}));
  const auto& spec = env.singleton_pomdp();
  Rng rng(4);
  for (int episode = 0; episode < 30; ++episode) {
    auto state = env.free_states()[rng() % env.free_states().size()];
    auto assistant = spec.initial_belief();
    auto user_exact = spec.initial_belief();
    auto user_biased = spec.initial_belief();
    for (int t = 0; t < 8; ++t) {
      const std::optional<std::size_t> action =
          t == 0 ? std::nullopt : std::optional<std::size_t>(rng() % env.num_actions());
      if (action) state = env.next_state(state, *action);
      const auto visible = env.full_observe(state);
      assistant = bayes_update(assistant, action, env.full_observation_likelihood(visible), spec,
                               ImpossiblePolicy::kResetUniform);
      std::vector<int> candidates = visible;
      if (candidates.empty()) candidates.push_back(env.nothing_symbol());

      for (auto* pair : {&user_exact, &user_biased}) {
        const NavUserModel& model = pair == &user_exact ? exact : biased;
        const auto out = synthesize_enumerative(assistant, model, *pair, action, candidates);
        const auto prior = action ? predict(*pair, *action, spec) : *pair;
        for (int c : candidates) {
          const auto objects = c == env.nothing_symbol() ? std::vector<int>{} : std::vector<int>{c};
          CHECK(out.objective <= kl_divergence(assistant, model.update(prior, std::nullopt, objects)));
        }
        if (pair == &user_exact) {
          // The ambient draw is one of the candidates.
          const int ambient = env.observe(state, rng);
          const auto objects = ambient == env.nothing_symbol() ? std::vector<int>{} : std::vector<int>{ambient};
          CHECK(out.objective <= kl_divergence(assistant, exact.update(prior, std::nullopt, objects)));
        }
        const int chosen = chosen_object(out);
        *pair = model.update(prior, std::nullopt,
                             chosen < 0 ? std::vector<int>{} : std::vector<int>{chosen});
      }
    }
  }
}

TEST_CASE("row synthesis") {
  // Two classes, three rows of two pixels; the classes differ only in row 1.
  const std::vector<double> ink{0.5, 0.5, 0.9, 0.9, 0.5, 0.5,   // class 0
                                0.5, 0.5, 0.1, 0.1, 0.5, 0.5};  // class 1
  const ClassPixelModel model(2, 3, 2, ink);
  const RowRevealEnv env(model, 0, {1, 0, 1, 1, 0, 1});
  const auto posterior = row_reveal_class_posterior(env, std::vector<int>{0, 1, 2});

  const auto first = synthesize_row(posterior, std::vector<int>{}, std::vector<int>{0, 1, 2}, env);
  CHECK(first.chosen == 1);
  CHECK(std::get<RevealedRow>(first.payload).row == 1);
  CHECK(std::get<RevealedRow>(first.payload).pixels == std::vector<std::uint8_t>{1, 1});
  CHECK(first.objective == doctest::Approx(0.0).epsilon(1e-12));

  const auto last = synthesize_row(posterior, std::vector<int>{0, 1}, std::vector<int>{2}, env);
  CHECK(last.chosen == 2);
  CHECK_THROWS_AS(synthesize_row(posterior, std::vector<int>{}, std::vector<int>{}, env), ConfigError);

  // Ten glyph classes: uninformative rows lose to discriminating ones.
  const auto glyphs = ClassPixelModel::glyphs();
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sample = RowRevealEnv::sample(glyphs, rng);
    std::vector<int> all(static_cast<std::size_t>(glyphs.rows()));
    for (int r = 0; r < glyphs.rows(); ++r) all[static_cast<std::size_t>(r)] = r;
    const auto target = row_reveal_class_posterior(sample, all);
    const auto out = synthesize_row(target, std::vector<int>{}, all, sample);
    bool constant = true;
    for (int c = 1; c < glyphs.num_classes(); ++c) {
      for (int x = 0; x < glyphs.cols(); ++x) constant = constant && glyphs.ink(c, out.chosen, x) == glyphs.ink(0, out.chosen, x);
    }
    CHECK_FALSE(constant);
  }
}

TEST_CASE("forward prediction through the track dynamics") {
  DelayTrackConfig cfg;
  cfg.horizon = 40;
  SUBCASE("zero delay is a passthrough") {
    Rng rng(1);
    const auto env = DelayTrackEnv::generate(cfg, rng);
    auto frame = env.render(env.initial_state());
    frame.delayed = true;
    const auto out = forward_predict(frame, 0, std::vector<int>{}, env);
    CHECK(std::get<TrackObservation>(out.payload) == frame);
  }
  SUBCASE("straight track, three straight steps") {
    const DelayTrackEnv env(cfg, std::vector<double>(static_cast<std::size_t>(cfg.horizon + cfg.lookahead + 1), 0.0));
    TrackState s{0, 0.3, 0.0};
    auto stale = env.render(s);
    stale.delayed = true;
    const std::vector<int> actions(3, static_cast<int>(SteerAction::kStraight));
    for (int a : actions) s = env.advance(s, a);
    const auto out = forward_predict(stale, 3, actions, env);
    CHECK(std::get<TrackObservation>(out.payload) == env.render(s));
  }
  SUBCASE("curvy track, five steps") {
    Rng rng(6);
    const auto env = DelayTrackEnv::generate(cfg, rng);
    for (int trial = 0; trial < 20; ++trial) {
      TrackState s = env.initial_state();
      std::vector<int> actions;
      for (int i = 0; i < 10; ++i) {
        actions.push_back(static_cast<int>(rng() % 3));
        s = env.advance(s, actions.back());
      }
      const auto stale = env.render(s);
      for (int i = 0; i < 5; ++i) {
        actions.push_back(static_cast<int>(rng() % 3));
        s = env.advance(s, actions.back());
      }
      const auto predicted = std::get<TrackObservation>(forward_predict(stale, 5, actions, env).payload);
      const auto truth = env.render(s);
      CHECK_FALSE(predicted.delayed);
      CHECK(predicted.source_step == truth.source_step);
      for (std::size_t k = 0; k < truth.view.size(); ++k) CHECK(std::abs(predicted.view[k] - truth.view[k]) <= 1e-9);
      CHECK(std::abs(predicted.heading - truth.heading) <= 1e-9);
    }
    CHECK_THROWS_AS(forward_predict(env.render(env.initial_state()), 3, std::vector<int>{2}, env), ConfigError);
  }
  SUBCASE("prediction error grows with the delay under disturbance") {
    cfg.lateral_noise = 0.1;
    std::vector<double> mean_error;
    for (int d = 1; d <= 6; ++d) {
      double total = 0.0;
      for (int seed = 0; seed < 100; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        const auto env = DelayTrackEnv::generate(cfg, rng);
        TrackState s = env.initial_state();
        const auto stale = env.render(s);
        std::vector<int> actions;
        for (int i = 0; i < d; ++i) {
          actions.push_back(static_cast<int>(rng() % 3));
          s = env.step(s, actions.back(), rng).next;
        }
        const auto predicted = std::get<TrackObservation>(forward_predict(stale, d, actions, env).payload);
        total += std::abs(predicted.view[0] - env.render(s).view[0]);
      }
      mean_error.push_back(total / 100.0);
    }
    for (std::size_t i = 1; i < mean_error.size(); ++i) CHECK(mean_error[i] > mean_error[i - 1]);
  }
}

TEST_CASE("logistic inversion") {
  const double pi = std::numbers::pi;
  CHECK(std::get<double>(logistic_invert(0.0, 0.0, 2.0 / pi).payload) == 0.0);
  CHECK_THROWS_AS(logistic_invert(0.3, 0.1, 0.0), NonInvertibleError);
  CHECK_THROWS_AS(logistic_invert(4.0, 0.0, 1.0), ConfigError);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> angle(-pi + 0.1, pi - 0.1), t0(-0.5, 0.5), t1(0.3, 3.0);
  int unclamped = 0;
  for (int i = 0; i < 100; ++i) {
    const DistortedPerceptUserModel user{t0(rng), t1(rng)};
    const double o = angle(rng);
    const double shown = std::get<double>(logistic_invert(o, user.theta0, user.theta1).payload);
    if (std::abs(shown) >= pi) continue;
    ++unclamped;
    CHECK(std::abs(user.percept(shown) - o) <= 1e-9);
  }
  CHECK(unclamped >= 50);

  // An underestimating user gets an exaggerated indicator.
  const DistortedPerceptUserModel under{0.0, 0.07};
  for (double o : {-0.3, -0.05, 0.02, 0.2}) {
    const double shown = std::get<double>(logistic_invert(o, under.theta0, under.theta1).payload);
    CHECK(std::abs(shown) > std::abs(o));
  }
}

TEST_CASE("synthesis log line") {
  SyntheticObservation obs;
  obs.payload = std::vector<int>{3};
  obs.chosen = 3;
  obs.objective = std::numeric_limits<double>::infinity();
  obs.candidate_count = 2;
  const auto line = synthesis_log_entry(4, obs, 1.5, 2.0);
  CHECK(line.at("t") == 4);
  CHECK(line.at("chosen") == 3);
  CHECK(line.at("candidates_scored") == 2);
  CHECK(line.at("objective") == "inf");
}
