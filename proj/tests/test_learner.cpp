#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "ase/episodes.hpp"
#include "ase/learner.hpp"
#include "support.hpp"

using namespace ase;

namespace {

std::shared_ptr<const NavContext> paper_context(std::vector<double> user_theta, std::string layout = "category",
                                                double beta = 0.167) {
  NavSettings s;
  s.beta = beta;
  s.user_theta = std::move(user_theta);
  s.layout = std::move(layout);
  return NavContext::create(s);
}

std::vector<Demonstration> nav_dataset(const std::shared_ptr<const NavContext>& ctx, int n, std::uint64_t seed) {
  std::vector<Demonstration> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(run_nav_episode(ctx, Condition::kUnassisted, {}, seed, static_cast<std::uint64_t>(i)).demonstration);
  }
  return out;
}

std::vector<Demonstration> lander_dataset(int n, std::uint64_t seed) {
  const LanderSettings settings;
  const TiltLanderEnv env(settings.lander);
  std::vector<Demonstration> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(run_lander_episode(env, settings, Condition::kUnassisted, {}, seed, static_cast<std::uint64_t>(i))
                      .demonstration);
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ||g - fd|| / max(||g||, ||fd||) with central differences of step h.
double gradient_error(const UserModelFamily& family, const std::vector<double>& theta,
                      const std::vector<Demonstration>& data) {
  const auto g = dataset_log_likelihood(family, theta, data, true, 1).gradient;
  const double h = 1e-5;
  std::vector<double> fd(theta.size()), diff(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    auto up = theta, down = theta;
    up[j] += h;
    down[j] -= h;
    fd[j] = (dataset_log_likelihood(family, up, data, false, 1).log_likelihood -
             dataset_log_likelihood(family, down, data, false, 1).log_likelihood) / (2 * h);
    diff[j] = g[j] - fd[j];
  }
  const double scale = std::max({norm(g), norm(fd), 1e-8});
  return norm(diff) / scale;
}

class NothingFits : public UserModelFamily {
 public:
  std::string name() const override { return "nothing"; }
  std::size_t num_params() const override { return 1; }
  std::vector<double> lower_bounds() const override { return {0.0}; }
  std::vector<double> upper_bounds() const override { return {1.0}; }
  LikelihoodResult log_likelihood(const std::vector<double>&, const Demonstration&, bool) const override {
    LikelihoodResult r;
    r.log_likelihood = -std::numeric_limits<double>::infinity();
    r.gradient = {0.0};
    return r;
  }
};

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unit(0.05, 0.95);

  SUBCASE("grid-nav, shared weight") {
    const auto ctx = paper_context({0.0});
    const auto data = nav_dataset(ctx, 4, 3);
    for (int i = 0; i < 20; ++i) CHECK(gradient_error(*ctx->family, {unit(rng)}, data) <= 1e-4);
  }
  SUBCASE("grid-nav, one weight per object") {
    const auto ctx = paper_context({0.0}, "object");
    const auto data = nav_dataset(ctx, 2, 4);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> theta(ctx->family->num_params());
      for (auto& w : theta) w = unit(rng);
      CHECK(gradient_error(*ctx->family, theta, data) <= 1e-4);
    }
  }
  SUBCASE("tilt-lander") {
    const LanderFamily family(12.0);
    const auto data = lander_dataset(3, 5);
    std::uniform_real_distribution<double> t0(-1.0, 1.0), t1(0.02, 1.5);
    for (int i = 0; i < 20; ++i) CHECK(gradient_error(family, {t0(rng), t1(rng)}, data) <= 1e-4);
  }
}

TEST_CASE("likelihood limits and hand enumeration") {
  SUBCASE("near-uniform policy") {
    const auto ctx = paper_context({0.0}, "category", 1e-12);
    const auto data = nav_dataset(paper_context({0.0}), 3, 6);
    for (double w : {0.0, 0.4, 1.0}) {
      for (const auto& d : data) {
        const auto r = ctx->family->log_likelihood({w}, d, false);
        const double expected = -static_cast<double>(d.actions.size()) * std::log(3.0);
        CHECK(r.log_likelihood == doctest::Approx(expected).epsilon(1e-9));
      }
    }
  }
  SUBCASE("two-step demonstration") {
    const auto ctx = paper_context({0.0});
    const auto& env = *ctx->env;
    const auto& family = *ctx->family;
    Demonstration d;
    d.env = "grid-nav";
    d.task = static_cast<std::int64_t>(env.free_states()[12]);
    std::size_t start = 0;
    for (std::size_t s : env.free_states()) {
      if (!env.full_observe(s).empty() && !env.full_observe(env.next_state(s, 2)).empty() && s != 0) {
        start = s;
        break;
      }
    }
    d.observations = {{static_cast<double>(env.full_observe(start).front())},
                      {static_cast<double>(env.full_observe(env.next_state(start, 2)).front())}};
    d.actions = {2, 1};
    const auto policy = family.policy(static_cast<std::size_t>(d.task));
    for (double w : {0.0, 0.3, 1.0}) {
      const WeightedObsUserModel user(env, family.layout(), {w});
      auto b = user.update(env.singleton_pomdp().initial_belief(), std::nullopt, static_cast<int>(d.observations[0][0]));
      double expected = 0.0;
      double p0 = 0.0;
      for (std::size_t s = 0; s < env.num_states(); ++s) p0 += policy->action_probs(s)[2] * b[s];
      b = user.update(b, 2, static_cast<int>(d.observations[1][0]));
      double p1 = 0.0;
      for (std::size_t s = 0; s < env.num_states(); ++s) p1 += policy->action_probs(s)[1] * b[s];
      expected = std::log(p0) + std::log(p1);
      const auto r = family.log_likelihood({w}, d, false);
      CHECK(r.log_likelihood == doctest::Approx(expected).epsilon(1e-12));
      REQUIRE(r.step_probs.size() == 2);
      CHECK(r.step_probs[0] == doctest::Approx(p0).epsilon(1e-12));
    }
  }
  SUBCASE("lander no-ops carry no information") {
    const LanderFamily family(12.0);
    Demonstration d;
    d.env = "tilt-lander";
    d.task = 0;
    d.observations = {{0.2}, {0.1}, {-0.3}};
    d.actions = {static_cast<int>(LanderAction::kNoop), static_cast<int>(LanderAction::kFireRight),
                 static_cast<int>(LanderAction::kNoop)};
    const std::vector<double> theta{0.1, 0.5};
    const auto r = family.log_likelihood(theta, d, false);
    const double s = DistortedPerceptUserModel{theta[0], theta[1]}.percept(0.1);
    CHECK(r.steps == 1);
    CHECK(r.log_likelihood == doctest::Approx(std::log(sigmoid(12.0 * s))).epsilon(1e-12));
  }
}

TEST_CASE("projection onto the parameter box") {
  const auto ctx = paper_context({0.0}, "object");
  std::vector<double> theta(ctx->family->num_params(), 0.5);
  theta[0] = -0.2;
  theta[1] = 1.7;
  const auto p = ctx->family->project(theta);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 1.0);
  CHECK(p[2] == 0.5);
  const LanderFamily lander(12.0);
  CHECK(lander.project({-40.0, 40.0}) == std::vector<double>{-40.0, 40.0});
}

TEST_CASE("data-generating parameters beat random ones") {
  std::mt19937_64 rng(31);
  SUBCASE("grid-nav") {
    const auto ctx = paper_context({0.0});
    const auto data = nav_dataset(ctx, 50, 8);
    const double truth = dataset_log_likelihood(*ctx->family, {0.0}, data, false).log_likelihood;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
      CHECK(truth >= dataset_log_likelihood(*ctx->family, {u(rng)}, data, false).log_likelihood);
    }
  }
  SUBCASE("tilt-lander") {
    const LanderFamily family(12.0);
    const auto data = lander_dataset(50, 9);
    const LanderSettings defaults;
    const double truth =
        dataset_log_likelihood(family, {defaults.user_theta0, defaults.user_theta1}, data, false).log_likelihood;
    std::uniform_real_distribution<double> t0(-1.0, 1.0), t1(0.0, 2.0);
    for (int i = 0; i < 50; ++i) {
      CHECK(truth >= dataset_log_likelihood(family, {t0(rng), t1(rng)}, data, false).log_likelihood);
    }
  }
}

TEST_CASE("fitting recovers the hidden model") {
  SUBCASE("lander percept curve from 20 episodes") {
    const LanderFamily family(12.0);
    const auto data = lander_dataset(20, 12);
    const auto init = DistortedPerceptUserModel::identity_like();
    const auto fit = fit_user_model(data, family, {init.theta0, init.theta1});
    const LanderSettings defaults;
    const DistortedPerceptUserModel truth{defaults.user_theta0, defaults.user_theta1};
    const DistortedPerceptUserModel fitted{fit.theta[0], fit.theta[1]};
    double err = 0.0;
    const int n = 200;
    for (int i = 0; i <= n; ++i) {
      const double o = -std::numbers::pi / 2 + std::numbers::pi * i / n;
      err += std::abs(fitted.percept(o) - truth.percept(o));
    }
    CHECK(err / (n + 1) <= 0.05);
    for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i].log_likelihood >= fit.trace[i - 1].log_likelihood);
  }
  SUBCASE("nav weight stays in the box and refits are fixed points") {
    const auto ctx = paper_context({0.0});
    const auto data = nav_dataset(ctx, 20, 13);
    const auto fit = fit_user_model(data, *ctx->family, {1.0});
    CHECK(fit.theta[0] >= 0.0);
    CHECK(fit.theta[0] <= 1.0);
    CHECK(fit.theta[0] <= 0.1);
    const auto again = fit_user_model(data, *ctx->family, fit.theta);
    CHECK(again.theta[0] == doctest::Approx(fit.theta[0]).epsilon(1e-6));
    CHECK(again.log_likelihood >= fit.log_likelihood - 1e-9);

    // Warm-started refit on a superset.
    const auto extra = nav_dataset(ctx, 25, 14);
    const auto update = run_online_update(fit.theta, extra.back(), data, *ctx->family);
    CHECK(update.dataset.size() == data.size() + 1);
    const double before = dataset_log_likelihood(*ctx->family, fit.theta, update.dataset, false).log_likelihood;
    CHECK(update.fit.log_likelihood >= before - 1e-9);
  }
  SUBCASE("a single episode is enough to run") {
    const auto ctx = paper_context({0.0});
    const auto one = nav_dataset(ctx, 1, 15);
    const auto update = run_online_update({1.0}, one.front(), {}, *ctx->family);
    CHECK(update.dataset.size() == 1);
    CHECK(update.fit.num_demonstrations == 1);
  }
}

TEST_CASE("fit errors") {
  Demonstration d;
  d.env = "x";
  d.task = 0;
  d.observations = {{0.0}};
  d.actions = {0};
  CHECK_THROWS_AS(fit_user_model({d}, NothingFits{}, {0.5}), UnfittableError);
  CHECK_THROWS_AS(fit_user_model({}, NothingFits{}, {0.5}), ConfigError);
  CHECK_THROWS_AS(fit_user_model({d}, NothingFits{}, {0.5, 0.5}), ConfigError);
  d.task = -1;
  CHECK_THROWS_AS(run_online_update({0.5}, d, {}, NothingFits{}), ConfigError);
}

TEST_CASE("demonstration logs round-trip") {
  Demonstration d;
  d.episode_id = "e1";
  d.env = "grid-nav";
  d.condition = "ase";
  d.task = 17;
  d.observations = {{3.0}, {}, {0.25}};
  d.actions = {2, 0, 1};
  d.meta = {{"seed", 4}};
  const auto back = Demonstration::from_json(nlohmann::json::parse(d.to_json().dump()));
  CHECK(back.to_json() == d.to_json());

  const auto dir = testing::scratch_dir("demos");
  write_demonstrations(dir / "d.jsonl", {d, d});
  const auto read = read_demonstrations(dir / "d.jsonl");
  REQUIRE(read.size() == 2);
  CHECK(read[1].actions == d.actions);

  // Bridge log: wrapped records, label lines set the task afterwards.
  {
    std::ofstream log(dir / "bridge.jsonl");
    log << nlohmann::json{{"v", 1}, {"kind", "demonstration"}, {"demonstration", d.to_json()}}.dump() << '\n';
    log << nlohmann::json{{"v", 1}, {"kind", "label"}, {"demonstration", "e1"}, {"task", 3}}.dump() << '\n';
  }
  const auto logged = read_demonstrations(dir / "bridge.jsonl");
  REQUIRE(logged.size() == 1);
  CHECK(logged[0].task == 3);
  CHECK(logged[0].observations == d.observations);

  auto bad = d.to_json();
  bad["actions"] = {1};
  CHECK_THROWS_AS(Demonstration::from_json(bad), ConfigError);
  bad = d.to_json();
  bad["task"] = -1;
  CHECK_THROWS_AS(Demonstration::from_json(bad), ConfigError);
  CHECK_THROWS_AS(Demonstration::from_json(nlohmann::json::object()), ConfigError);
  std::filesystem::remove_all(dir);
}
