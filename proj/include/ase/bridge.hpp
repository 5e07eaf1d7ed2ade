#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ase/episodes.hpp"

namespace ase {

/// Protocol version carried in every message as "v".
inline constexpr int kProtocolVersion = 1;

struct BridgeConfig {
  NavSettings nav;
  LanderSettings lander;
  /// θ̂ used by ase sessions that do not bring their own.
  std::vector<double> nav_theta;
  std::vector<double> lander_theta;
  std::uint64_t seed = 0;
  /// Demonstrations land in `log_dir`/demonstrations.jsonl (empty: no log).
  std::string log_dir;
  std::chrono::milliseconds session_timeout{std::chrono::minutes(5)};
  double tick_hz = 15.0;
  /// Adds the true lander angle to frames.
  bool debug = false;

  static BridgeConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static BridgeConfig load(const std::filesystem::path& path);
};

/// Append-only JSON-lines file fed through a queue drained by one writer
/// thread, so protocol handlers never block on disk.
class DemonstrationLog {
 public:
  explicit DemonstrationLog(const std::filesystem::path& path);
  ~DemonstrationLog();
  DemonstrationLog(const DemonstrationLog&) = delete;
  DemonstrationLog& operator=(const DemonstrationLog&) = delete;

  void append(nlohmann::json record);
  /// Blocks until everything appended so far is on disk.
  void flush();
  const std::filesystem::path& path() const { return path_; }

 private:
  void run();

  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable drained_;
  std::deque<std::string> queue_;
  std::uint64_t pushed_ = 0;
  std::uint64_t written_ = 0;
  bool stop_ = false;
  std::thread writer_;
};

/// Session-oriented episode server, independent of any transport. Every
/// call takes the current time so timeouts and ticks are testable.
class BridgeService {
 public:
  using Clock = std::chrono::steady_clock;

  explicit BridgeService(BridgeConfig config);
  ~BridgeService();

  /// Answers one client message. Replies are frames, summaries or errors;
  /// a real-time lander action is buffered and answered by tick().
  std::vector<nlohmann::json> handle(const nlohmann::json& message, Clock::time_point now);
  std::vector<nlohmann::json> handle_text(const std::string& text, Clock::time_point now);

  /// Steps real-time sessions whose tick is due (a no-op when no action
  /// arrived) and expires idle sessions. Every reply names its session.
  std::vector<nlohmann::json> tick(Clock::time_point now);

  std::size_t session_count() const;
  nlohmann::json health() const;
  nlohmann::json sessions() const;
  std::chrono::nanoseconds tick_interval() const { return tick_interval_; }
  const BridgeConfig& config() const { return config_; }
  void flush_log();

  /// Error codes sent in {"type":"error"} frames.
  static constexpr const char* kBadRequest = "bad_request";
  static constexpr const char* kUnsupportedVersion = "unsupported_version";
  static constexpr const char* kUnknownEnv = "unknown_env";
  static constexpr const char* kUnknownCondition = "unknown_condition";
  static constexpr const char* kMissingModel = "missing_model";
  static constexpr const char* kUnknownSession = "unknown_session";
  static constexpr const char* kExpiredSession = "expired_session";
  static constexpr const char* kIllegalAction = "illegal_action";
  static constexpr const char* kEpisodeFinished = "episode_finished";

 private:
  struct Session;

  std::vector<nlohmann::json> start(const nlohmann::json& message, Clock::time_point now);
  std::vector<nlohmann::json> action(const nlohmann::json& message, Clock::time_point now);
  nlohmann::json label(const nlohmann::json& message, Clock::time_point now);
  std::shared_ptr<Session> find(const std::string& id, nlohmann::json& error);
  nlohmann::json step(Session& session, int action, Clock::time_point now);
  nlohmann::json frame(const Session& session) const;
  nlohmann::json finish(Session& session);
  void retire(const std::string& id, bool expired);

  BridgeConfig config_;
  std::shared_ptr<const NavContext> nav_;
  TiltLanderEnv lander_env_;
  std::chrono::nanoseconds tick_interval_;
  std::unique_ptr<DemonstrationLog> log_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::set<std::string> expired_;
  std::uint64_t next_session_ = 0;
};

/// Frames a client would see when replaying `actions` in a fresh episode
/// with the same seed (one frame per step, terminal frame included).
std::vector<nlohmann::json> replay_nav_frames(const std::shared_ptr<const NavContext>& ctx,
                                              Condition condition, const std::vector<double>& theta,
                                              std::uint64_t root_seed, std::uint64_t episode,
                                              const std::vector<int>& actions);

}  // namespace ase
