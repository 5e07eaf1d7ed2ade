// Acceptance run: one PASS/FAIL line per property, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "ase/assistant.hpp"
#include "ase/harness.hpp"

namespace fs = std::filesystem;
using namespace ase;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream out;
  out.precision(4);
  out << x;
  return out.str();
}

// Bayes filter vs. brute force ------------------------------------------------

std::vector<double> simplex(std::size_t n, std::mt19937_64& rng, double zero_prob) {
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

std::size_t draw(const std::vector<double>& p, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> d(p.begin(), p.end());
  return d(rng);
}

Outcome bayes_filter() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> ns(1, 6), na(1, 3), no(1, 4), nt(0, 4);
  double worst = 0.0;
  int models = 0;
  while (models < 200) {
    const std::size_t S = ns(rng), A = na(rng), O = no(rng);
    const auto init = simplex(S, rng, 0.2);
    std::vector<std::vector<std::vector<double>>> dyn(S, std::vector<std::vector<double>>(A));
    for (auto& row : dyn)
      for (auto& d : row) d = simplex(S, rng, 0.3);
    std::vector<std::vector<double>> obs;
    for (std::size_t s = 0; s < S; ++s) obs.push_back(simplex(O, rng, 0.3));
    std::vector<std::string> names;
    for (std::size_t o = 0; o < O; ++o) names.push_back("o" + std::to_string(o));
    const std::size_t T = nt(rng);
    const auto spec = PomdpSpec::from_dense(S, A, names, init, dyn, obs, static_cast<int>(T) + 1);

    // Sample a trajectory so every observation has nonzero probability.
    std::vector<std::size_t> acts, seen;
    std::size_t s = draw(init, rng);
    seen.push_back(draw(obs[s], rng));
    for (std::size_t k = 0; k < T; ++k) {
      acts.push_back(rng() % A);
      s = draw(dyn[s][acts.back()], rng);
      seen.push_back(draw(obs[s], rng));
    }
    auto lik = [&](std::size_t o) {
      std::vector<double> l(S);
      for (std::size_t x = 0; x < S; ++x) l[x] = obs[x][o];
      return l;
    };

    // Sum over every state sequence.
    std::vector<double> joint(S, 0.0);
    std::vector<std::size_t> seq(T + 1, 0);
    for (;;) {
      double w = init[seq[0]] * obs[seq[0]][seen[0]];
      for (std::size_t k = 1; k <= T && w > 0.0; ++k) w *= dyn[seq[k - 1]][acts[k - 1]][seq[k]] * obs[seq[k]][seen[k]];
      joint[seq[T]] += w;
      std::size_t i = 0;
      while (i <= T && ++seq[i] == S) seq[i++] = 0;
      if (i > T) break;
    }
    double z = 0.0;
    for (double x : joint) z += x;

    auto b = bayes_update(spec.initial_belief(), std::nullopt, lik(seen[0]), spec);
    for (std::size_t k = 1; k <= T && b; ++k) b = bayes_update(*b, acts[k - 1], lik(seen[k]), spec);
    if (!b) return {false, "filter rejected a possible observation sequence"};
    for (std::size_t x = 0; x < S; ++x) worst = std::max(worst, std::abs((*b)[x] - joint[x] / z));
    ++models;
  }
  return {worst <= 1e-9, "200 models, max abs error " + fmt(worst)};
}

// Experiments -----------------------------------------------------------------

Outcome habitat(const ExperimentConfig& config) {
  const auto result = run_experiment(config);
  const auto& m = result.metrics;
  const double su = mean_metric(m, Condition::kUnassisted, "success");
  const double sr = mean_metric(m, Condition::kRandom, "success");
  const double sa = mean_metric(m, Condition::kAse, "success");
  const double bu = mean_metric(m, Condition::kUnassisted, "belief_in_true_state");
  const double br = mean_metric(m, Condition::kRandom, "belief_in_true_state");
  const double ba = mean_metric(m, Condition::kAse, "belief_in_true_state");
  const bool ok = config.episodes >= 100 && config.nav.bandwidth == 1 && sa >= su + 0.15 &&
                  su + 0.15 >= sr + 0.5 && ba - bu >= 0.3 && bu - br >= 0.3;
  return {ok, std::to_string(config.episodes) + " episodes, success ase/unassisted/random " + fmt(sa) + "/" +
                  fmt(su) + "/" + fmt(sr) + ", belief " + fmt(ba) + "/" + fmt(bu) + "/" + fmt(br)};
}

std::vector<double> mean_trace(const std::vector<EpisodeMetrics>& metrics, Condition c,
                               std::vector<double> EpisodeMetrics::*field) {
  std::vector<double> sum;
  int n = 0;
  for (const auto& m : metrics) {
    if (m.condition != c) continue;
    const auto& v = m.*field;
    if (sum.empty()) sum.assign(v.size(), 0.0);
    if (v.size() != sum.size()) throw Error("ragged per-step trace");
    for (std::size_t t = 0; t < v.size(); ++t) sum[t] += v[t];
    ++n;
  }
  for (auto& x : sum) x /= n;
  return sum;
}

Outcome theta_recovery(ExperimentConfig config) {
  // θ* = 0: the shipped run learns from its unassisted warm-up episodes.
  if (config.nav.user_theta != std::vector<double>{0.0}) return {false, "config user is not θ* = 0"};
  if (!config.learner || config.learner->unassisted_episodes < 50) return {false, "fewer than 50 episodes"};
  config.learner->init = {1.0};
  const auto result = run_experiment(config);
  const double low = result.assistant_theta.at(0);

  const auto naive = mean_trace(result.metrics, Condition::kNaiveAse, &EpisodeMetrics::distance_trace);
  const auto fitted = mean_trace(result.metrics, Condition::kAse, &EpisodeMetrics::distance_trace);
  int worst_t = -1;
  for (std::size_t t = 10; t < fitted.size(); ++t) {
    if (!(fitted[t] < naive[t])) {
      worst_t = static_cast<int>(t);
      break;
    }
  }

  // θ* = 1 on the same map and episode budget.
  auto trusting = config;
  trusting.nav.user_theta = {1.0};
  const auto models = ExperimentModels::create(trusting);
  const auto report = run_online_loop(trusting, models, trusting.learner->unassisted_episodes, 0,
                                      training_seed(trusting.seed));
  const double high = report.final_fit.theta.at(0);

  std::string detail = "θ*=0 -> " + fmt(low) + ", θ*=1 -> " + fmt(high) + ", ";
  detail += worst_t < 0 ? "ase < naive-ase at t=10.." + std::to_string(fitted.size() - 1)
                        : "ase not below naive-ase at t=" + std::to_string(worst_t) + " (" +
                              fmt(fitted[static_cast<std::size_t>(worst_t)]) + " vs " +
                              fmt(naive[static_cast<std::size_t>(worst_t)]) + ")";
  return {low <= 0.05 && high >= 0.9 && worst_t < 0, detail};
}

Outcome delay_sweep(ExperimentConfig config) {
  config.episodes = 20;
  config.conditions = {Condition::kUnassisted, Condition::kRandom, Condition::kAse, Condition::kOracle};
  const std::vector<int> ds{0, 2, 5, 10, 20};
  const auto cells = run_delay_sweep(config, ds);
  auto cell = [&](int d, Condition c) -> const DelaySweepCell& {
    for (const auto& x : cells)
      if (x.d_max == d && x.condition == c) return x;
    throw Error("missing sweep cell");
  };

  std::vector<std::string> problems;
  if (cell(0, Condition::kAse).returns != cell(0, Condition::kUnassisted).returns)
    problems.push_back("d=0 returns differ");
  std::string gaps;
  double prev_gap = -std::numeric_limits<double>::infinity();
  for (int d : ds) {
    if (d < 2) continue;
    const double u = cell(d, Condition::kUnassisted).mean_return, r = cell(d, Condition::kRandom).mean_return;
    const double a = cell(d, Condition::kAse).mean_return, o = cell(d, Condition::kOracle).mean_return;
    if (!(a >= u && u >= r && o >= a)) problems.push_back("ordering at d=" + std::to_string(d));
    const double gap = a - u;
    if (d <= 10) {
      if (gap < prev_gap) problems.push_back("gap shrinks at d=" + std::to_string(d));
      prev_gap = gap;
    }
    gaps += (gaps.empty() ? "" : " ") + std::to_string(d) + ":" + fmt(gap);
  }
  std::string detail = "ase-unassisted gaps " + gaps;
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

Outcome row_reveal(ExperimentConfig config) {
  config.episodes = std::max(config.episodes, 1000);
  config.conditions = {Condition::kUnassisted, Condition::kRandom, Condition::kAse};
  const auto result = run_experiment(config);
  const auto u = mean_trace(result.metrics, Condition::kUnassisted, &EpisodeMetrics::per_step_accuracy);
  const auto r = mean_trace(result.metrics, Condition::kRandom, &EpisodeMetrics::per_step_accuracy);
  const auto a = mean_trace(result.metrics, Condition::kAse, &EpisodeMetrics::per_step_accuracy);

  bool dominates = true;
  for (std::size_t t = 0; t < a.size(); ++t) dominates = dominates && a[t] >= u[t];
  const auto hit = std::find_if(a.begin(), a.end(), [](double x) { return x >= 0.8; });
  if (hit == a.end()) return {false, "ase never reaches 80% accuracy"};
  const auto t80 = static_cast<std::size_t>(hit - a.begin());
  const double margin = a[t80] - u[t80];

  bool between = true, below = true;
  for (std::size_t t = 0; t < a.size(); ++t) {
    below = below && r[t] <= a[t];
    if (t < t80) between = between && u[t] <= r[t] && r[t] <= a[t];
  }
  const bool ok = dominates && margin >= 0.05 && (between || below);
  return {ok, std::to_string(config.episodes) + " episodes, ase reaches 80% at step " + std::to_string(t80 + 1) +
                  " with margin " + fmt(margin) + (dominates ? "" : ", not dominant") +
                  (between ? ", random between early" : "") + (below ? ", random below ase" : "")};
}

Outcome lander(ExperimentConfig config) {
  if (!(config.lander.user_theta1 < 2.0 / std::numbers::pi)) return {false, "config user does not underestimate"};
  config.episodes = std::max(config.episodes, 120);
  config.conditions = {Condition::kUnassisted, Condition::kAse};
  config.assistant_theta.clear();
  if (!config.learner) return {false, "config has no learner"};
  config.learner->unassisted_episodes = 10;
  config.learner->assisted_episodes = 5;
  const auto result = run_experiment(config);
  const double u = mean_metric(result.metrics, Condition::kUnassisted, "final_third_abs_tilt");
  const double a = mean_metric(result.metrics, Condition::kAse, "final_third_abs_tilt");

  const double t0 = result.assistant_theta.at(0), t1 = result.assistant_theta.at(1);
  const DistortedPerceptUserModel fitted{t0, t1};
  double worst = 0.0;
  int unclamped = 0;
  for (double o = -std::numbers::pi + 0.005; o < std::numbers::pi; o += 0.01) {
    double shown = 0.0;
    try {
      shown = std::get<double>(logistic_invert(o, t0, t1).payload);
    } catch (const NonInvertibleError&) {
      continue;
    }
    if (std::abs(shown) >= std::numbers::pi) continue;
    ++unclamped;
    worst = std::max(worst, std::abs(fitted.percept(shown) - o));
  }
  const bool ok = a <= 0.8 * u && unclamped > 0 && worst <= 1e-9;
  return {ok, "final-third |tilt| ase " + fmt(a) + " vs unassisted " + fmt(u) + " (ratio " + fmt(a / u) +
                  "), theta (" + fmt(t0) + ", " + fmt(t1) + "), round-trip " + fmt(worst) + " over " +
                  std::to_string(unclamped) + " angles"};
}

// Learner numerics -------------------------------------------------------------

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double gradient_error(const UserModelFamily& family, const std::vector<double>& theta,
                      const std::vector<Demonstration>& data) {
  const auto g = dataset_log_likelihood(family, theta, data, true).gradient;
  const double h = 1e-5;
  std::vector<double> fd(theta.size()), diff(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    auto up = theta, down = theta;
    up[j] += h;
    down[j] -= h;
    fd[j] = (dataset_log_likelihood(family, up, data, false).log_likelihood -
             dataset_log_likelihood(family, down, data, false).log_likelihood) / (2 * h);
    diff[j] = g[j] - fd[j];
  }
  return norm(diff) / std::max({norm(g), norm(fd), 1e-8});
}

Outcome learner_numerics(const ExperimentConfig& nav_config, const ExperimentConfig& lander_config,
                         const fs::path& maps_dir) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(0.05, 0.95), a0(-1.0, 1.0), a1(0.02, 1.5);
  double worst_grad = 0.0;

  for (const std::string layout : {"category", "object"}) {
    auto settings = nav_config.nav;
    settings.layout = layout;
    const auto ctx = NavContext::create(settings);
    std::vector<Demonstration> data;
    for (std::uint64_t e = 0; e < 4; ++e)
      data.push_back(run_nav_episode(ctx, Condition::kUnassisted, {}, 91, e).demonstration);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> theta(ctx->family->num_params());
      for (auto& w : theta) w = unit(rng);
      worst_grad = std::max(worst_grad, gradient_error(*ctx->family, theta, data));
    }
  }
  {
    const auto& s = lander_config.lander;
    const TiltLanderEnv env(s.lander);
    const LanderFamily family(s.kappa);
    std::vector<Demonstration> data;
    for (std::uint64_t e = 0; e < 3; ++e)
      data.push_back(run_lander_episode(env, s, Condition::kUnassisted, {}, 92, e).demonstration);
    for (int i = 0; i < 20; ++i) worst_grad = std::max(worst_grad, gradient_error(family, {a0(rng), a1(rng)}, data));
  }

  double worst_residual = 0.0;
  int grids = 0, mismatches = 0;
  std::size_t pairs = 0;
  for (const auto& entry : fs::directory_iterator(maps_dir)) {
    if (entry.path().extension() != ".json") continue;
    const GridNavEnv env(GridMap::load(entry.path()));
    const auto& mdp = *env.mdp();
    ++grids;
    for (std::size_t goal : env.free_states()) {
      const auto table = soft_q_iteration(mdp, goal, nav_config.nav.q);
      worst_residual = std::max(worst_residual, bellman_residual(mdp, table));
      const auto bfs = bfs_distance_to_goal(mdp, goal);
      for (std::size_t s : env.free_states()) {
        const int greedy = greedy_path_length(mdp, table, s, static_cast<int>(env.num_states()));
        mismatches += greedy != bfs[s];
        ++pairs;
      }
    }
  }
  const bool ok = worst_grad <= 1e-4 && worst_residual <= 1e-6 && mismatches == 0 && grids > 0;
  return {ok, "gradient rel error " + fmt(worst_grad) + ", residual " + fmt(worst_residual) + ", greedy/BFS " +
                  std::to_string(mismatches) + " mismatches over " + std::to_string(pairs) + " pairs on " +
                  std::to_string(grids) + " grids"};
}

// Determinism --------------------------------------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Outcome determinism(const fs::path& cli, const fs::path& configs, const fs::path& work) {
  fs::create_directories(work);
  std::vector<std::string> differ;
  int runs = 0;
  for (const auto& entry : fs::directory_iterator(configs)) {
    const auto name = entry.path().stem().string();
    if (name == "bridge") continue;
    std::string first;
    for (int pass = 0; pass < 2; ++pass) {
      const auto csv = work / (name + "_" + std::to_string(pass) + ".csv");
      const std::string cmd = "cd \"" + work.string() + "\" && \"" + cli.string() + "\" run \"" +
                              entry.path().string() + "\" --metrics-csv \"" + csv.string() + "\" > /dev/null 2> \"" +
                              (work / (name + ".log")).string() + "\"";
      if (std::system(cmd.c_str()) != 0) throw Error("run failed: " + cmd);
      if (pass == 0) first = slurp(csv);
      else if (slurp(csv) != first) differ.push_back(name);
    }
    ++runs;
  }
  std::string detail = std::to_string(runs) + " configs run twice";
  for (const auto& d : differ) detail += "; " + d + " differs";
  return {differ.empty() && runs > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance properties"};
  std::string root, cli, work = (fs::temp_directory_path() / "ase_acceptance").string();
  app.add_option("--root", root, "Source tree holding configs/ and maps/")->required();
  app.add_option("--cli", cli, "ase_cli binary for the determinism check")->required();
  app.add_option("--work-dir", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  root = fs::absolute(root).string();
  cli = fs::absolute(cli).string();

  const fs::path configs = fs::path(root) / "configs";
  int failures = 0;
  auto report = [&](const std::string& name, double limit_s, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit_s > 0 && secs >= limit_s) {
      out.passed = false;
      out.detail += ", over the " + fmt(limit_s) + " s budget";
    }
    std::cout << (out.passed ? "PASS " : "FAIL ") << name << ": " << out.detail << " [" << fmt(secs) << " s]"
              << std::endl;
    failures += out.passed ? 0 : 1;
  };

  const auto nav_paper = ExperimentConfig::load(configs / "nav_paper.json");
  const auto lander_cfg = ExperimentConfig::load(configs / "lander.json");

  report("bayes filter matches enumeration", 10, bayes_filter);
  report("grid-nav condition ordering", 300, [&] { return habitat(ExperimentConfig::load(configs / "nav_habitat.json")); });
  report("theta recovery", 0, [&] { return theta_recovery(nav_paper); });
  report("delay sweep", 300, [&] { return delay_sweep(ExperimentConfig::load(configs / "delay_track.json")); });
  report("row-reveal dominance", 0, [&] { return row_reveal(ExperimentConfig::load(configs / "row_reveal.json")); });
  report("lander assistance", 0, [&] { return lander(lander_cfg); });
  report("learner numerics", 0, [&] { return learner_numerics(nav_paper, lander_cfg, fs::path(root) / "maps"); });
  report("determinism", 0, [&] { return determinism(cli, configs, work); });
  return failures == 0 ? 0 : 1;
}
