#include "ase/bridge.hpp"

#include <cstdio>

namespace ase {

namespace {

using nlohmann::json;

constexpr const char* kLabelPrompt = "Which task were you trying to perform?";
constexpr const char* kLanderActions[] = {"fire-left", "fire-right", "noop"};

json error_frame(const char* code, const std::string& message, const std::string& session = {}) {
  json e = {{"v", kProtocolVersion}, {"type", "error"}, {"code", code}, {"message", message}};
  if (!session.empty()) e["session"] = session;
  return e;
}

// Protocol-level failure carrying its error code.
struct ProtocolError {
  const char* code;
  std::string message;
};

std::vector<double> theta_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProtocolError{BridgeService::kBadRequest, "cannot open theta file " + path};
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ProtocolError{BridgeService::kBadRequest, "theta file is not JSON: " + std::string(e.what())};
  }
  // Accept a bare array, a fit result, or an online-loop report.
  if (doc.is_object() && doc.contains("final_fit")) doc = doc.at("final_fit");
  if (doc.is_object() && doc.contains("theta")) doc = doc.at("theta");
  if (!doc.is_array()) throw ProtocolError{BridgeService::kBadRequest, "theta file has no theta"};
  try {
    return doc.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ProtocolError{BridgeService::kBadRequest, "theta must be numeric"};
  }
}

std::string session_id(std::uint64_t seed, std::uint64_t counter) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%llu-%08llx", static_cast<unsigned long long>(counter),
                static_cast<unsigned long long>(derive_seed(seed, counter, Stream::kAssistant) & 0xffffffffULL));
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

BridgeConfig BridgeConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
  static const std::set<std::string> kKeys{"seed",  "log_dir",   "session_timeout_s", "tick_hz", "debug",
                                           "nav",   "lander",    "nav_theta",         "lander_theta"};
  if (!doc.is_object()) throw ConfigError("bridge config must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (!kKeys.count(key)) throw ConfigError("bridge config: unknown key '" + key + "'");
  }
  BridgeConfig c;
  try {
    c.seed = doc.value("seed", c.seed);
    c.log_dir = doc.value("log_dir", c.log_dir);
    if (doc.contains("session_timeout_s")) {
      const double s = doc.at("session_timeout_s").get<double>();
      if (!(s > 0.0)) throw ConfigError("bridge config: session_timeout_s must be positive");
      c.session_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(s * 1000.0));
    }
    c.tick_hz = doc.value("tick_hz", c.tick_hz);
    c.debug = doc.value("debug", c.debug);
    if (doc.contains("nav")) c.nav = NavSettings::from_json(doc.at("nav"));
    if (doc.contains("lander")) c.lander = LanderSettings::from_json(doc.at("lander"));
    c.nav_theta = doc.value("nav_theta", c.nav_theta);
    c.lander_theta = doc.value("lander_theta", c.lander_theta);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed bridge config: ") + e.what());
  }
  if (!(c.tick_hz > 0.0)) throw ConfigError("bridge config: tick_hz must be positive");
  if (!c.lander_theta.empty() && c.lander_theta.size() != 2) {
    throw ConfigError("bridge config: lander_theta needs (theta0, theta1)");
  }
  if (!c.nav.map_path.empty() && std::filesystem::path(c.nav.map_path).is_relative()) {
    c.nav.map_path = (base_dir / c.nav.map_path).string();
  }
  return c;
}

BridgeConfig BridgeConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open bridge config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("bridge config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc, path.parent_path());
}

// ---------------------------------------------------------------------------

DemonstrationLog::DemonstrationLog(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw ConfigError("cannot open demonstration log " + path.string());
  writer_ = std::thread([this] { run(); });
}

DemonstrationLog::~DemonstrationLog() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  writer_.join();
}

void DemonstrationLog::append(json record) {
  std::string line = record.dump();
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(line));
    ++pushed_;
  }
  cv_.notify_one();
}

void DemonstrationLog::flush() {
  std::unique_lock lock(mutex_);
  const std::uint64_t target = pushed_;
  drained_.wait(lock, [&] { return written_ >= target; });
}

void DemonstrationLog::run() {
  std::unique_lock lock(mutex_);
  for (;;) {
    cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
    if (queue_.empty() && stop_) return;
    std::deque<std::string> batch;
    batch.swap(queue_);
    lock.unlock();
    for (const auto& line : batch) out_ << line << '\n';
    out_.flush();
    lock.lock();
    written_ += batch.size();
    drained_.notify_all();
  }
}

// ---------------------------------------------------------------------------

struct BridgeService::Session {
  std::mutex mutex;
  std::string id;
  std::string env;
  Condition condition = Condition::kUnassisted;
  std::uint64_t root_seed = 0;
  std::uint64_t episode = 0;
  std::optional<NavEpisode> nav;
  std::optional<LanderEpisode> lander;
  bool realtime = false;
  bool debug = false;
  std::optional<int> pending;
  Clock::time_point last_active;
  Clock::time_point next_tick;
  bool finished = false;
  bool closed = false;
  std::string demonstration_id;

  bool done() const { return nav ? nav->done() : lander->done(); }
};

BridgeService::BridgeService(BridgeConfig config)
    : config_(std::move(config)),
      lander_env_(config_.lander.lander),
      tick_interval_(std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::duration<double>(1.0 / config_.tick_hz))) {
  if (!(config_.tick_hz > 0.0)) throw ConfigError("tick_hz must be positive");
  nav_ = NavContext::create(config_.nav);
  if (!config_.log_dir.empty()) {
    log_ = std::make_unique<DemonstrationLog>(std::filesystem::path(config_.log_dir) / "demonstrations.jsonl");
  }
}

BridgeService::~BridgeService() = default;

std::vector<json> BridgeService::handle_text(const std::string& text, Clock::time_point now) {
  json message;
  try {
    message = json::parse(text);
  } catch (const json::parse_error& e) {
    return {error_frame(kBadRequest, std::string("message is not JSON: ") + e.what())};
  }
  return handle(message, now);
}

std::vector<json> BridgeService::handle(const json& message, Clock::time_point now) {
  const std::string session =
      message.is_object() && message.contains("session") && message.at("session").is_string()
          ? message.at("session").get<std::string>()
          : std::string();
  try {
    if (!message.is_object()) throw ProtocolError{kBadRequest, "message must be a JSON object"};
    if (!message.contains("v") || message.at("v") != kProtocolVersion) {
      throw ProtocolError{kUnsupportedVersion, "expected \"v\": " + std::to_string(kProtocolVersion)};
    }
    const std::string type = message.value("type", "");
    if (type == "start") return start(message, now);
    if (type == "action") return action(message, now);
    if (type == "label") return {label(message, now)};
    throw ProtocolError{kBadRequest, "unknown message type '" + type + "'"};
  } catch (const ProtocolError& e) {
    return {error_frame(e.code, e.message, session)};
  } catch (const json::exception& e) {
    return {error_frame(kBadRequest, e.what(), session)};
  } catch (const Error& e) {
    return {error_frame(kBadRequest, e.what(), session)};
  }
}

std::vector<json> BridgeService::start(const json& message, Clock::time_point now) {
  auto s = std::make_shared<Session>();
  s->env = message.value("env", "");
  if (s->env != kGridNav && s->env != kTiltLander) {
    throw ProtocolError{kUnknownEnv, "served environments are grid-nav and tilt-lander, not '" + s->env + "'"};
  }
  const std::string cond = message.value("condition", "");
  try {
    s->condition = condition_from_string(cond);
  } catch (const ConfigError&) {
    throw ProtocolError{kUnknownCondition, "unknown condition '" + cond + "'"};
  }
  if (s->condition == Condition::kOracle) {
    throw ProtocolError{kUnknownCondition, "the oracle condition is not served"};
  }

  std::vector<double> theta;
  if (message.contains("theta")) {
    theta = message.at("theta").get<std::vector<double>>();
  } else if (message.contains("theta_file")) {
    theta = theta_from_file(message.at("theta_file").get<std::string>());
  } else {
    theta = s->env == kGridNav ? config_.nav_theta : config_.lander_theta;
  }
  if (s->condition == Condition::kAse && theta.empty()) {
    throw ProtocolError{kMissingModel, "ase needs a fitted user model (theta or theta_file)"};
  }

  std::uint64_t counter = 0;
  {
    std::unique_lock lock(sessions_mutex_);
    counter = next_session_++;
  }
  s->id = session_id(config_.seed, counter);
  s->root_seed = message.value("seed", config_.seed);
  s->episode = message.value("episode", counter);
  s->debug = message.value("debug", config_.debug);
  s->last_active = now;
  s->next_tick = now + tick_interval_;

  if (s->env == kGridNav) {
    s->nav.emplace(nav_, s->condition, s->condition == Condition::kAse ? theta : std::vector<double>{},
                   s->root_seed, s->episode);
  } else {
    DistortedPerceptUserModel model = DistortedPerceptUserModel::identity_like();
    if (s->condition == Condition::kAse) {
      if (theta.size() != 2) throw ProtocolError{kMissingModel, "lander theta needs (theta0, theta1)"};
      model = {theta[0], theta[1]};
    }
    s->lander.emplace(lander_env_, s->condition, model, s->root_seed, s->episode);
    s->realtime = message.value("realtime", true);
  }

  std::vector<json> replies{frame(*s)};
  // A nav start on the goal cell finishes immediately.
  if (s->done()) {
    replies.push_back(finish(*s));
  } else {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(s->id, s);
  }
  return replies;
}

std::shared_ptr<BridgeService::Session> BridgeService::find(const std::string& id, json& error) {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it != sessions_.end()) return it->second;
  error = expired_.count(id) ? error_frame(kExpiredSession, "session " + id + " expired", id)
                             : error_frame(kUnknownSession, "no session " + id, id);
  return nullptr;
}

std::vector<json> BridgeService::action(const json& message, Clock::time_point now) {
  const std::string id = message.at("session").get<std::string>();
  json error;
  const auto s = find(id, error);
  if (!s) return {error};
  std::lock_guard lock(s->mutex);
  if (s->closed) return {error_frame(kUnknownSession, "no session " + id, id)};
  if (s->finished) return {error_frame(kEpisodeFinished, "episode is over; send a label", id)};

  const json& a = message.at("action");
  const std::size_t num_actions = s->nav ? nav_->env->num_actions() : 3;
  int index = -1;
  if (a.is_number_integer()) {
    index = a.get<int>();
  } else if (a.is_string()) {
    const std::string name = a.get<std::string>();
    for (std::size_t i = 0; i < num_actions; ++i) {
      const char* n = s->nav ? nav_action_name(static_cast<NavAction>(i)) : kLanderActions[i];
      if (name == n) index = static_cast<int>(i);
    }
  }
  if (index < 0 || static_cast<std::size_t>(index) >= num_actions) {
    return {error_frame(kIllegalAction, "illegal action " + a.dump(), id)};
  }
  s->last_active = now;
  if (s->realtime) {
    // Latest action in the tick window wins.
    s->pending = index;
    return {};
  }
  json reply = step(*s, index, now);
  if (s->finished) return {reply, finish(*s)};
  return {reply};
}

json BridgeService::step(Session& s, int action, Clock::time_point) {
  if (s.nav) {
    s.nav->act(static_cast<std::size_t>(action));
  } else {
    s.lander->act(action);
  }
  s.finished = s.done();
  return frame(s);
}

json BridgeService::frame(const Session& s) const {
  json f = s.nav ? nav_frame(*s.nav) : lander_frame(*s.lander, s.debug);
  f["v"] = kProtocolVersion;
  f["type"] = "frame";
  f["session"] = s.id;
  return f;
}

json BridgeService::finish(Session& s) {
  s.finished = true;
  EpisodeMetrics metrics = s.nav ? episode_metrics(*s.nav) : episode_metrics(*s.lander);
  Demonstration demo = s.nav ? s.nav->demonstration() : s.lander->demonstration();
  demo.episode_id = "bridge/" + s.id;
  demo.meta["session"] = s.id;
  demo.meta["seed"] = s.root_seed;
  demo.meta["episode"] = s.episode;
  json summary = {{"v", kProtocolVersion},
                  {"type", "summary"},
                  {"session", s.id},
                  {"demonstration", demo.episode_id},
                  {"metrics", metrics.to_json()}};
  if (s.nav) {
    // The goal is server-assigned, so nav episodes label themselves.
    demo.meta["task_label"] = "auto";
    summary["task"] = demo.task;
    s.closed = true;
    retire(s.id, false);
  } else {
    demo.task = -1;
    demo.meta["label_prompt"] = kLabelPrompt;
    summary["label_prompt"] = kLabelPrompt;
  }
  s.demonstration_id = demo.episode_id;
  if (log_) {
    log_->append({{"v", kProtocolVersion},
                  {"kind", "demonstration"},
                  {"demonstration", demo.to_json()},
                  {"metrics", metrics.to_json()}});
  }
  return summary;
}

json BridgeService::label(const json& message, Clock::time_point now) {
  const std::string id = message.at("session").get<std::string>();
  json error;
  const auto s = find(id, error);
  if (!s) return error;
  std::lock_guard lock(s->mutex);
  if (s->closed) return error_frame(kUnknownSession, "no session " + id, id);
  if (!s->finished) return error_frame(kBadRequest, "label sent before the episode ended", id);
  if (!message.contains("task")) throw ProtocolError{kBadRequest, "label needs a task"};
  s->last_active = now;
  if (log_) {
    log_->append({{"v", kProtocolVersion},
                  {"kind", "label"},
                  {"demonstration", s->demonstration_id},
                  {"task", message.at("task")}});
  }
  s->closed = true;
  retire(id, false);
  return {{"v", kProtocolVersion}, {"type", "label"}, {"session", id}, {"task", message.at("task")}};
}

void BridgeService::retire(const std::string& id, bool expired) {
  std::unique_lock lock(sessions_mutex_);
  sessions_.erase(id);
  if (expired) expired_.insert(id);
}

std::vector<json> BridgeService::tick(Clock::time_point now) {
  std::vector<std::shared_ptr<Session>> live;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, s] : sessions_) live.push_back(s);
  }
  std::vector<json> out;
  for (const auto& s : live) {
    std::lock_guard lock(s->mutex);
    if (s->closed) continue;
    if (now - s->last_active > config_.session_timeout) {
      s->closed = true;
      retire(s->id, true);
      out.push_back(error_frame(kExpiredSession, "session " + s->id + " timed out", s->id));
      continue;
    }
    while (s->realtime && !s->finished && now >= s->next_tick) {
      const int a = s->pending.value_or(static_cast<int>(LanderAction::kNoop));
      s->pending.reset();
      s->next_tick += tick_interval_;
      out.push_back(step(*s, a, now));
      if (s->finished) out.push_back(finish(*s));
    }
  }
  return out;
}

std::size_t BridgeService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

json BridgeService::health() const { return {{"v", kProtocolVersion}, {"status", "ok"}}; }

json BridgeService::sessions() const { return {{"v", kProtocolVersion}, {"count", session_count()}}; }

void BridgeService::flush_log() {
  if (log_) log_->flush();
}

// ---------------------------------------------------------------------------

std::vector<json> replay_nav_frames(const std::shared_ptr<const NavContext>& ctx, Condition condition,
                                    const std::vector<double>& theta, std::uint64_t root_seed,
                                    std::uint64_t episode, const std::vector<int>& actions) {
  NavEpisode ep(ctx, condition, condition == Condition::kAse ? theta : std::vector<double>{}, root_seed,
                episode);
  std::vector<json> frames{nav_frame(ep)};
  for (int a : actions) {
    ep.act(static_cast<std::size_t>(a));
    frames.push_back(nav_frame(ep));
  }
  return frames;
}

}  // namespace ase
