#include "ase/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace ase {

namespace {

using nlohmann::json;

void check_keys(const json& doc, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!doc.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : doc.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& doc, const char* key, T& into) {
  if (doc.contains(key)) into = doc.at(key).get<T>();
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty() || base.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (base / p).string();
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

std::string to_string(Condition c) {
  switch (c) {
    case Condition::kUnassisted: return "unassisted";
    case Condition::kRandom: return "random";
    case Condition::kNaiveAse: return "naive-ase";
    case Condition::kAse: return "ase";
    case Condition::kOracle: return "oracle";
  }
  return "unknown";
}

Condition condition_from_string(const std::string& name) {
  for (Condition c : {Condition::kUnassisted, Condition::kRandom, Condition::kNaiveAse,
                      Condition::kAse, Condition::kOracle}) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown condition '" + name + "'");
}

bool is_assisted(Condition c) { return c == Condition::kNaiveAse || c == Condition::kAse; }

// ---------------------------------------------------------------------------

NavSettings NavSettings::from_json(const json& doc) {
  check_keys(doc, "nav", {"map", "profile", "map_seed", "horizon", "allow_wait", "discount",
                          "step_penalty", "tolerance", "beta", "layout", "user_theta", "bandwidth",
                          "candidates", "random_candidates", "q_cache_dir"});
  NavSettings s;
  read(doc, "map", s.map_path);
  read(doc, "profile", s.profile);
  read(doc, "map_seed", s.map_seed);
  read(doc, "horizon", s.nav.horizon);
  read(doc, "allow_wait", s.nav.allow_wait);
  read(doc, "discount", s.q.discount);
  read(doc, "step_penalty", s.q.step_penalty);
  read(doc, "tolerance", s.q.tolerance);
  read(doc, "beta", s.beta);
  read(doc, "layout", s.layout);
  read(doc, "user_theta", s.user_theta);
  read(doc, "bandwidth", s.bandwidth);
  read(doc, "candidates", s.candidates);
  read(doc, "random_candidates", s.random_candidates);
  read(doc, "q_cache_dir", s.q_cache_dir);
  if (s.profile != "paper" && s.profile != "habitat") throw ConfigError("nav.profile must be paper or habitat");
  if (s.layout != "category" && s.layout != "object") throw ConfigError("nav.layout must be category or object");
  for (const auto* c : {&s.candidates, &s.random_candidates}) {
    if (*c != "visible" && *c != "all") throw ConfigError("nav candidate sets must be visible or all");
  }
  if (!(s.beta > 0.0)) throw ConfigError("nav.beta must be > 0");
  if (s.bandwidth == 0) throw ConfigError("nav.bandwidth must be >= 1");
  return s;
}

json NavSettings::to_json() const {
  return {{"map", map_path},         {"profile", profile},
          {"map_seed", map_seed},    {"horizon", nav.horizon},
          {"allow_wait", nav.allow_wait}, {"discount", q.discount},
          {"step_penalty", q.step_penalty}, {"tolerance", q.tolerance},
          {"beta", beta},            {"layout", layout},
          {"user_theta", user_theta}, {"bandwidth", bandwidth},
          {"candidates", candidates}, {"random_candidates", random_candidates},
          {"q_cache_dir", q_cache_dir}};
}

RowSettings RowSettings::from_json(const json& doc) {
  check_keys(doc, "row", {"num_classes", "rows", "cols", "ink", "background", "images", "labels"});
  RowSettings s;
  read(doc, "num_classes", s.num_classes);
  read(doc, "rows", s.rows);
  read(doc, "cols", s.cols);
  read(doc, "ink", s.ink);
  read(doc, "background", s.background);
  read(doc, "images", s.images_path);
  read(doc, "labels", s.labels_path);
  if (s.images_path.empty() != s.labels_path.empty()) {
    throw ConfigError("row.images and row.labels must be given together");
  }
  return s;
}

json RowSettings::to_json() const {
  return {{"num_classes", num_classes}, {"rows", rows},     {"cols", cols},
          {"ink", ink},                 {"background", background},
          {"images", images_path},      {"labels", labels_path}};
}

TrackSettings TrackSettings::from_json(const json& doc) {
  check_keys(doc, "track", {"horizon", "lookahead", "lane_half_width", "steer_rate", "max_heading",
                            "lateral_noise", "on_road_bonus", "off_road_penalty", "d_max",
                            "curve_amplitude", "curve_period", "beta"});
  TrackSettings s;
  auto& t = s.track;
  read(doc, "horizon", t.horizon);
  read(doc, "lookahead", t.lookahead);
  read(doc, "lane_half_width", t.lane_half_width);
  read(doc, "steer_rate", t.steer_rate);
  read(doc, "max_heading", t.max_heading);
  read(doc, "lateral_noise", t.lateral_noise);
  read(doc, "on_road_bonus", t.on_road_bonus);
  read(doc, "off_road_penalty", t.off_road_penalty);
  read(doc, "d_max", t.d_max);
  read(doc, "curve_amplitude", t.curve_amplitude);
  read(doc, "curve_period", t.curve_period);
  read(doc, "beta", s.beta);
  if (!(s.beta > 0.0)) throw ConfigError("track.beta must be > 0");
  return s;
}

json TrackSettings::to_json() const {
  const auto& t = track;
  return {{"horizon", t.horizon},
          {"lookahead", t.lookahead},
          {"lane_half_width", t.lane_half_width},
          {"steer_rate", t.steer_rate},
          {"max_heading", t.max_heading},
          {"lateral_noise", t.lateral_noise},
          {"on_road_bonus", t.on_road_bonus},
          {"off_road_penalty", t.off_road_penalty},
          {"d_max", t.d_max},
          {"curve_amplitude", t.curve_amplitude},
          {"curve_period", t.curve_period},
          {"beta", beta}};
}

LanderSettings LanderSettings::from_json(const json& doc) {
  check_keys(doc, "lander", {"horizon", "dt", "torque", "damping", "disturbance_std",
                             "initial_angle", "kappa", "user_theta0", "user_theta1"});
  LanderSettings s;
  auto& l = s.lander;
  read(doc, "horizon", l.horizon);
  read(doc, "dt", l.dt);
  read(doc, "torque", l.torque);
  read(doc, "damping", l.damping);
  read(doc, "disturbance_std", l.disturbance_std);
  read(doc, "initial_angle", l.initial_angle);
  read(doc, "kappa", s.kappa);
  read(doc, "user_theta0", s.user_theta0);
  read(doc, "user_theta1", s.user_theta1);
  if (!(s.kappa > 0.0)) throw ConfigError("lander.kappa must be > 0");
  return s;
}

json LanderSettings::to_json() const {
  const auto& l = lander;
  return {{"horizon", l.horizon},
          {"dt", l.dt},
          {"torque", l.torque},
          {"damping", l.damping},
          {"disturbance_std", l.disturbance_std},
          {"initial_angle", l.initial_angle},
          {"kappa", kappa},
          {"user_theta0", user_theta0},
          {"user_theta1", user_theta1}};
}

LearnerSettings LearnerSettings::from_json(const json& doc) {
  check_keys(doc, "learner", {"optimizer", "init", "unassisted_episodes", "assisted_episodes",
                              "warmup_condition"});
  LearnerSettings s;
  if (doc.contains("optimizer")) s.optimizer = OptimizerConfig::from_json(doc.at("optimizer"));
  read(doc, "init", s.init);
  read(doc, "unassisted_episodes", s.unassisted_episodes);
  read(doc, "assisted_episodes", s.assisted_episodes);
  read(doc, "warmup_condition", s.warmup_condition);
  if (s.unassisted_episodes < 0 || s.assisted_episodes < 0 ||
      s.unassisted_episodes + s.assisted_episodes == 0) {
    throw ConfigError("learner needs at least one training episode");
  }
  if (s.warmup_condition != "unassisted" && s.warmup_condition != "naive-ase") {
    throw ConfigError("learner.warmup_condition must be unassisted or naive-ase");
  }
  return s;
}

json LearnerSettings::to_json() const {
  return {{"optimizer", optimizer.to_json()},
          {"init", init},
          {"unassisted_episodes", unassisted_episodes},
          {"assisted_episodes", assisted_episodes},
          {"warmup_condition", warmup_condition}};
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
  try {
    check_keys(doc, "experiment config",
               {"env", "condition", "conditions", "episodes", "seed", "threads", "nav", "row",
                "track", "lander", "learner", "assistant_theta", "output"});
    ExperimentConfig c;
    read(doc, "env", c.env);
    if (doc.contains("condition") && doc.contains("conditions")) {
      throw ConfigError("give either condition or conditions, not both");
    }
    if (doc.contains("condition")) {
      c.conditions = {condition_from_string(doc.at("condition").get<std::string>())};
    }
    if (doc.contains("conditions")) {
      c.conditions.clear();
      for (const auto& n : doc.at("conditions")) c.conditions.push_back(condition_from_string(n.get<std::string>()));
    }
    read(doc, "episodes", c.episodes);
    read(doc, "seed", c.seed);
    read(doc, "threads", c.threads);
    if (doc.contains("nav")) c.nav = NavSettings::from_json(doc.at("nav"));
    if (doc.contains("row")) c.row = RowSettings::from_json(doc.at("row"));
    if (doc.contains("track")) c.track = TrackSettings::from_json(doc.at("track"));
    if (doc.contains("lander")) c.lander = LanderSettings::from_json(doc.at("lander"));
    if (doc.contains("learner")) c.learner = LearnerSettings::from_json(doc.at("learner"));
    read(doc, "assistant_theta", c.assistant_theta);
    if (doc.contains("output")) {
      const auto& o = doc.at("output");
      check_keys(o, "output", {"metrics_csv", "episodes_jsonl", "fit_trace", "synthesis_log"});
      read(o, "metrics_csv", c.output.metrics_csv);
      read(o, "episodes_jsonl", c.output.episodes_jsonl);
      read(o, "fit_trace", c.output.fit_trace);
      read(o, "synthesis_log", c.output.synthesis_log);
    }
    c.nav.map_path = resolve(c.nav.map_path, base_dir);
    c.row.images_path = resolve(c.row.images_path, base_dir);
    c.row.labels_path = resolve(c.row.labels_path, base_dir);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc, path.parent_path());
}

json ExperimentConfig::to_json() const {
  json conds = json::array();
  for (auto c : conditions) conds.push_back(to_string(c));
  json doc = {{"env", env},   {"conditions", conds}, {"episodes", episodes}, {"seed", seed},
              {"threads", threads}, {"nav", nav.to_json()}, {"row", row.to_json()},
              {"track", track.to_json()}, {"lander", lander.to_json()},
              {"assistant_theta", assistant_theta}};
  if (learner) doc["learner"] = learner->to_json();
  return doc;
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> kEnvs{kGridNav, kRowReveal, kDelayTrack, kTiltLander};
  if (!kEnvs.count(env)) throw ConfigError("unknown environment '" + env + "'");
  if (episodes <= 0) throw ConfigError("episodes must be positive");
  if (conditions.empty()) throw ConfigError("no conditions requested");
  for (Condition c : conditions) {
    if (c == Condition::kOracle && env != kDelayTrack) {
      throw ConfigError("the oracle condition is only defined for delay-track");
    }
    const bool learns = env == kGridNav || env == kTiltLander;
    if (c == Condition::kAse && learns && !learner && assistant_theta.empty()) {
      throw ConfigError("the ase condition needs a learner config or a fixed assistant_theta");
    }
  }
  if (!assistant_theta.empty()) {
    if (env == kTiltLander && assistant_theta.size() != 2) {
      throw ConfigError("lander assistant_theta must hold (theta0, theta1)");
    }
  }
}

// ---------------------------------------------------------------------------

json EpisodeMetrics::to_json() const {
  json doc = {{"env", env},
              {"condition", to_string(condition)},
              {"episode", episode},
              {"steps", steps},
              {"return", episode_return}};
  if (success) doc["success"] = *success;
  if (distance_to_goal_normalized) doc["distance_to_goal_normalized"] = *distance_to_goal_normalized;
  if (time_to_goal) doc["time_to_goal"] = *time_to_goal;
  if (belief_in_true_state) doc["belief_in_true_state"] = *belief_in_true_state;
  if (mean_abs_tilt) doc["mean_abs_tilt"] = *mean_abs_tilt;
  if (final_third_abs_tilt) doc["final_third_abs_tilt"] = *final_third_abs_tilt;
  if (final_accuracy) doc["final_accuracy"] = *final_accuracy;
  if (!distance_trace.empty()) doc["distance_trace"] = distance_trace;
  if (!per_step_accuracy.empty()) doc["per_step_accuracy"] = per_step_accuracy;
  return doc;
}

const std::vector<std::string>& metrics_csv_columns() {
  static const std::vector<std::string> kColumns{
      "env",          "condition",     "episode",
      "steps",        "return",        "success",
      "distance_to_goal_normalized",   "time_to_goal",
      "belief_in_true_state",          "mean_abs_tilt",
      "final_third_abs_tilt",          "final_accuracy"};
  return kColumns;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpisodeMetrics>& rows) {
  const auto& cols = metrics_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& m : rows) {
    out << m.env << ',' << to_string(m.condition) << ',' << m.episode << ',' << m.steps << ','
        << format_double(m.episode_return) << ',' << (m.success ? (*m.success ? "1" : "0") : "") << ','
        << optional_cell(m.distance_to_goal_normalized) << ','
        << (m.time_to_goal ? std::to_string(*m.time_to_goal) : "") << ','
        << optional_cell(m.belief_in_true_state) << ',' << optional_cell(m.mean_abs_tilt) << ','
        << optional_cell(m.final_third_abs_tilt) << ',' << optional_cell(m.final_accuracy) << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpisodeMetrics>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_metrics_csv(out, rows);
}

}  // namespace ase
