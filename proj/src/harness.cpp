#include "ase/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ase {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<double> field_value(const EpisodeMetrics& m, const std::string& field) {
  if (field == "return") return m.episode_return;
  if (field == "steps") return m.steps;
  if (field == "success") return m.success ? std::optional<double>(*m.success ? 1.0 : 0.0) : std::nullopt;
  if (field == "distance_to_goal_normalized") return m.distance_to_goal_normalized;
  if (field == "time_to_goal") {
    return m.time_to_goal ? std::optional<double>(*m.time_to_goal) : std::nullopt;
  }
  if (field == "belief_in_true_state") return m.belief_in_true_state;
  if (field == "mean_abs_tilt") return m.mean_abs_tilt;
  if (field == "final_third_abs_tilt") return m.final_third_abs_tilt;
  if (field == "final_accuracy") return m.final_accuracy;
  throw ConfigError("unknown metric '" + field + "'");
}

const std::vector<std::string>& numeric_fields() {
  static const std::vector<std::string> kFields{
      "steps", "return", "success", "distance_to_goal_normalized", "time_to_goal",
      "belief_in_true_state", "mean_abs_tilt", "final_third_abs_tilt", "final_accuracy"};
  return kFields;
}

bool has(const ExperimentConfig& config, Condition c) {
  return std::find(config.conditions.begin(), config.conditions.end(), c) != config.conditions.end();
}

std::string fmt(double v) { return format_double(v); }

Check ordering(const std::string& name, double hi, double lo, const std::string& hi_name,
               const std::string& lo_name) {
  Check c{name, hi >= lo, hi_name + "=" + fmt(hi) + " " + lo_name + "=" + fmt(lo)};
  return c;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& l : lines) out << l.dump() << '\n';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::uint64_t training_seed(std::uint64_t root) { return derive_seed(root, 0, Stream::kLearner); }

std::shared_ptr<const UserModelFamily> user_model_family(const ExperimentConfig& config,
                                                         const ExperimentModels& models) {
  if (config.env == kGridNav) return models.nav->family;
  if (config.env == kTiltLander) return std::make_shared<const LanderFamily>(config.lander.kappa);
  throw ConfigError("no learnable user model for " + config.env);
}

json OnlineLoopReport::to_json() const {
  json rows = json::array();
  for (const auto& e : entries) {
    rows.push_back({{"index", e.index},
                    {"condition", to_string(e.condition)},
                    {"theta_before", e.theta_before},
                    {"theta_after", e.theta_after},
                    {"log_likelihood", e.log_likelihood},
                    {"converged", e.converged},
                    {"metrics", e.metrics.to_json()}});
  }
  return {{"episodes", rows}, {"final_fit", final_fit.to_json()}};
}

OnlineLoopReport run_online_loop(const ExperimentConfig& config, const ExperimentModels& models,
                                 int warmup, int assisted, std::uint64_t root_seed) {
  const LearnerSettings learner = config.learner.value_or(LearnerSettings{});
  const auto family = user_model_family(config, models);
  const Condition warm = condition_from_string(learner.warmup_condition);
  OptimizerConfig opt = learner.optimizer;
  if (opt.threads == 0) opt.threads = config.threads;

  OnlineLoopReport report;
  std::vector<double> theta = family->project(ExperimentModels::initial_theta(config, models));
  ExperimentModels live = models;
  for (int i = 0; i < warmup + assisted; ++i) {
    const Condition c = i < warmup ? warm : Condition::kAse;
    live.assistant_theta = theta;
    ExperimentConfig episode_config = config;
    episode_config.seed = root_seed;
    EpisodeResult r = run_episode(episode_config, c, live, static_cast<std::uint64_t>(i));
    OnlineUpdate update = run_online_update(theta, r.demonstration, std::move(report.dataset), *family, opt);
    report.dataset = std::move(update.dataset);
    OnlineLoopEntry entry;
    entry.index = i;
    entry.condition = c;
    entry.theta_before = theta;
    theta = update.fit.theta;
    entry.theta_after = theta;
    entry.log_likelihood = update.fit.log_likelihood;
    entry.converged = update.fit.converged;
    entry.metrics = std::move(r.metrics);
    report.entries.push_back(std::move(entry));
    report.final_fit = std::move(update.fit);
  }
  return report;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  return run_experiment(config, ExperimentModels::create(config));
}

ExperimentResult run_experiment(const ExperimentConfig& config, ExperimentModels models) {
  ExperimentResult result;
  const bool learns = config.env == kGridNav || config.env == kTiltLander;
  if (learns && has(config, Condition::kAse) && models.assistant_theta.empty()) {
    if (!config.learner) throw ConfigError("the ase condition needs a learner config or assistant_theta");
    result.training = run_online_loop(config, models, config.learner->unassisted_episodes,
                                      config.learner->assisted_episodes, training_seed(config.seed));
    models.assistant_theta = result.training->final_fit.theta;
  }
  result.assistant_theta = models.assistant_theta;

  const auto n = static_cast<std::size_t>(config.episodes);
  for (Condition c : config.conditions) {
    std::vector<EpisodeResult> runs(n);
    parallel_for(n, config.threads, [&](std::size_t i) {
      runs[i] = run_episode(config, c, models, static_cast<std::uint64_t>(i));
    });
    for (auto& r : runs) {
      for (auto& line : r.synthesis_log) {
        line["env"] = config.env;
        line["condition"] = to_string(c);
        line["episode"] = r.metrics.episode;
        result.synthesis_log.push_back(std::move(line));
      }
      result.metrics.push_back(std::move(r.metrics));
      result.demonstrations.push_back(std::move(r.demonstration));
    }
  }
  return result;
}

void write_outputs(const ExperimentConfig& config, const ExperimentResult& result) {
  const auto& out = config.output;
  if (!out.metrics_csv.empty()) write_metrics_csv(out.metrics_csv, result.metrics);
  if (!out.episodes_jsonl.empty()) {
    const std::filesystem::path p(out.episodes_jsonl);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    write_demonstrations(p, result.demonstrations);
  }
  if (!out.synthesis_log.empty()) write_jsonl(out.synthesis_log, result.synthesis_log);
  if (!out.fit_trace.empty()) {
    json doc = {{"assistant_theta", result.assistant_theta}};
    if (result.training) doc["online_loop"] = result.training->to_json();
    write_jsonl(out.fit_trace, {doc});
  }
}

// ---------------------------------------------------------------------------

std::vector<DelaySweepCell> run_delay_sweep(const ExperimentConfig& config,
                                            const std::vector<int>& d_max_values) {
  if (config.env != kDelayTrack) throw ConfigError("the delay sweep runs on delay-track");
  std::vector<DelaySweepCell> cells;
  for (int d : d_max_values) {
    if (d < 0) throw ConfigError("d_max must be >= 0");
    ExperimentConfig c = config;
    c.track.track.d_max = d;
    const ExperimentResult r = run_experiment(c, ExperimentModels::create(c));
    for (Condition cond : c.conditions) {
      DelaySweepCell cell;
      cell.d_max = d;
      cell.condition = cond;
      double belief = 0.0;
      for (const auto& m : r.metrics) {
        if (m.condition != cond) continue;
        cell.returns.push_back(m.episode_return);
        belief += m.belief_in_true_state.value_or(0.0);
      }
      const double k = static_cast<double>(cell.returns.size());
      for (double v : cell.returns) cell.mean_return += v / k;
      cell.mean_belief = belief / k;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void write_delay_sweep_csv(const std::filesystem::path& path, const std::vector<DelaySweepCell>& cells) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "d_max,condition,episodes,mean_return,mean_belief\n";
  for (const auto& c : cells) {
    out << c.d_max << ',' << to_string(c.condition) << ',' << c.returns.size() << ','
        << fmt(c.mean_return) << ',' << fmt(c.mean_belief) << '\n';
  }
}

std::vector<DatasetSweepPoint> run_dataset_sweep(const ExperimentConfig& config,
                                                 const std::vector<int>& sizes) {
  if (sizes.empty()) throw ConfigError("dataset sweep needs at least one size");
  const int largest = *std::max_element(sizes.begin(), sizes.end());
  if (*std::min_element(sizes.begin(), sizes.end()) < 1) throw ConfigError("dataset sizes must be >= 1");
  const ExperimentModels models = ExperimentModels::create(config);
  const auto family = user_model_family(config, models);
  const LearnerSettings learner = config.learner.value_or(LearnerSettings{});
  OptimizerConfig opt = learner.optimizer;
  if (opt.threads == 0) opt.threads = config.threads;
  const Condition warm = condition_from_string(learner.warmup_condition);

  ExperimentConfig gen = config;
  gen.seed = training_seed(config.seed);
  std::vector<Demonstration> demos(static_cast<std::size_t>(largest));
  parallel_for(demos.size(), config.threads, [&](std::size_t i) {
    demos[i] = run_episode(gen, warm, models, i).demonstration;
  });
  const auto init = family->project(ExperimentModels::initial_theta(config, models));
  std::vector<DatasetSweepPoint> out;
  for (int n : sizes) {
    const std::vector<Demonstration> prefix(demos.begin(), demos.begin() + n);
    out.push_back({n, fit_user_model(prefix, *family, init, opt)});
  }
  return out;
}

// ---------------------------------------------------------------------------

double mean_metric(const std::vector<EpisodeMetrics>& metrics, Condition condition,
                   const std::string& field) {
  double total = 0.0;
  int n = 0;
  for (const auto& m : metrics) {
    if (m.condition != condition) continue;
    if (auto v = field_value(m, field)) {
      total += *v;
      ++n;
    }
  }
  return n > 0 ? total / n : kNaN;
}

std::vector<Check> check_experiment(const ExperimentConfig& config, const ExperimentResult& result) {
  std::vector<Check> checks;
  const auto& ms = result.metrics;
  {
    bool ok = true;
    std::string detail = "all metrics well formed";
    for (const auto& m : ms) {
      const bool bad = (m.distance_to_goal_normalized && !(*m.distance_to_goal_normalized >= 0.0)) ||
                       (m.belief_in_true_state && !(*m.belief_in_true_state <= 0.0)) ||
                       (m.final_accuracy && (*m.final_accuracy < 0.0 || *m.final_accuracy > 1.0)) ||
                       (m.mean_abs_tilt && !(*m.mean_abs_tilt >= 0.0));
      if (bad) {
        ok = false;
        detail = "episode " + std::to_string(m.episode) + " of " + to_string(m.condition) + " out of range";
        break;
      }
    }
    checks.push_back({"metric invariants", ok, detail});
  }
  const bool u = has(config, Condition::kUnassisted);
  const bool r = has(config, Condition::kRandom);
  const bool a = has(config, Condition::kAse);
  auto order = [&](const std::string& field, Condition hi, Condition lo, bool lower_is_better = false) {
    double h = mean_metric(ms, hi, field);
    double l = mean_metric(ms, lo, field);
    if (lower_is_better) std::swap(h, l);
    checks.push_back(ordering(field + ": " + to_string(lower_is_better ? lo : hi) + " >= " +
                                  to_string(lower_is_better ? hi : lo),
                              h, l, "mean", "mean"));
  };
  if (config.env == kGridNav) {
    if (a && u) {
      order("success", Condition::kAse, Condition::kUnassisted);
      order("belief_in_true_state", Condition::kAse, Condition::kUnassisted);
    }
    if (u && r) {
      order("success", Condition::kUnassisted, Condition::kRandom);
      order("belief_in_true_state", Condition::kUnassisted, Condition::kRandom);
    }
  } else if (config.env == kRowReveal) {
    if (a && u) {
      std::vector<double> acc_a, acc_u;
      for (Condition c : {Condition::kAse, Condition::kUnassisted}) {
        auto& acc = c == Condition::kAse ? acc_a : acc_u;
        int n = 0;
        for (const auto& m : ms) {
          if (m.condition != c) continue;
          if (acc.empty()) acc.assign(m.per_step_accuracy.size(), 0.0);
          for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += m.per_step_accuracy[t];
          ++n;
        }
        for (double& v : acc) v /= n;
      }
      bool ok = true;
      std::string detail = "ase accuracy >= unassisted at every step";
      for (std::size_t t = 0; t < acc_a.size(); ++t) {
        if (acc_a[t] < acc_u[t]) {
          ok = false;
          detail = "t=" + std::to_string(t) + " ase=" + fmt(acc_a[t]) + " unassisted=" + fmt(acc_u[t]);
          break;
        }
      }
      checks.push_back({"per-step accuracy: ase >= unassisted", ok, detail});
    }
  } else if (config.env == kDelayTrack) {
    if (a && u) order("return", Condition::kAse, Condition::kUnassisted);
    if (u && r) order("return", Condition::kUnassisted, Condition::kRandom);
    if (a && has(config, Condition::kOracle)) order("return", Condition::kOracle, Condition::kAse);
  } else if (config.env == kTiltLander) {
    if (a && u) order("final_third_abs_tilt", Condition::kAse, Condition::kUnassisted, true);
  }
  return checks;
}

std::vector<Check> check_delay_sweep(const std::vector<DelaySweepCell>& cells) {
  std::vector<Check> checks;
  auto find = [&](int d, Condition c) -> const DelaySweepCell* {
    for (const auto& cell : cells) {
      if (cell.d_max == d && cell.condition == c) return &cell;
    }
    return nullptr;
  };
  std::vector<int> ds;
  for (const auto& c : cells) {
    if (std::find(ds.begin(), ds.end(), c.d_max) == ds.end()) ds.push_back(c.d_max);
  }
  std::sort(ds.begin(), ds.end());
  for (int d : ds) {
    const auto* u = find(d, Condition::kUnassisted);
    const auto* a = find(d, Condition::kAse);
    const auto* r = find(d, Condition::kRandom);
    const auto* o = find(d, Condition::kOracle);
    const std::string tag = "d_max=" + std::to_string(d) + " ";
    if (d == 0) {
      if (u && a) checks.push_back({tag + "ase equals unassisted per seed", a->returns == u->returns, ""});
      continue;
    }
    if (a && u) checks.push_back(ordering(tag + "ase >= unassisted", a->mean_return, u->mean_return, "ase", "unassisted"));
    if (u && r) checks.push_back(ordering(tag + "unassisted >= random", u->mean_return, r->mean_return, "unassisted", "random"));
    if (o && a) checks.push_back(ordering(tag + "oracle >= ase", o->mean_return, a->mean_return, "oracle", "ase"));
  }
  // The assistance gap should widen as delays lengthen, up to d_max = 10.
  double prev = -std::numeric_limits<double>::infinity();
  int prev_d = -1;
  for (int d : ds) {
    if (d < 2 || d > 10) continue;
    const auto* u = find(d, Condition::kUnassisted);
    const auto* a = find(d, Condition::kAse);
    if (!u || !a) continue;
    const double gap = a->mean_return - u->mean_return;
    if (prev_d >= 0) {
      checks.push_back({"gap non-decreasing d_max " + std::to_string(prev_d) + " -> " + std::to_string(d),
                        gap >= prev, fmt(prev) + " -> " + fmt(gap)});
    }
    prev = gap;
    prev_d = d;
  }
  return checks;
}

// ---------------------------------------------------------------------------

json summarize(const std::vector<EpisodeMetrics>& metrics) {
  std::map<std::pair<std::string, std::string>, std::vector<const EpisodeMetrics*>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& m : metrics) {
    auto key = std::make_pair(m.env, to_string(m.condition));
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&m);
  }
  json out = json::array();
  for (const auto& key : order) {
    const auto& rows = groups[key];
    json entry = {{"env", key.first}, {"condition", key.second}, {"episodes", rows.size()}};
    for (const auto& f : numeric_fields()) {
      std::vector<double> vals;
      for (const auto* m : rows) {
        if (auto v = field_value(*m, f)) vals.push_back(*v);
      }
      if (vals.empty()) continue;
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      const double se = vals.size() > 1
                            ? std::sqrt(var / static_cast<double>(vals.size() - 1) / static_cast<double>(vals.size()))
                            : 0.0;
      entry[f] = {{"mean", mean}, {"stderr", se}};
    }
    out.push_back(entry);
  }
  return out;
}

std::vector<EpisodeMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + " is empty");
  const auto header = split_csv_line(line);
  if (header != metrics_csv_columns()) throw ConfigError(path.string() + " does not have the metrics layout");
  std::vector<EpisodeMetrics> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": wrong number of cells");
    }
    try {
      auto num = [&](std::size_t i) -> std::optional<double> {
        if (cells[i].empty()) return std::nullopt;
        return std::stod(cells[i]);
      };
      EpisodeMetrics m;
      m.env = cells[0];
      m.condition = condition_from_string(cells[1]);
      m.episode = std::stoull(cells[2]);
      m.steps = std::stoi(cells[3]);
      m.episode_return = std::stod(cells[4]);
      if (auto v = num(5)) m.success = *v != 0.0;
      m.distance_to_goal_normalized = num(6);
      if (auto v = num(7)) m.time_to_goal = static_cast<int>(*v);
      m.belief_in_true_state = num(8);
      m.mean_abs_tilt = num(9);
      m.final_third_abs_tilt = num(10);
      m.final_accuracy = num(11);
      rows.push_back(std::move(m));
    } catch (const std::logic_error& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace ase
