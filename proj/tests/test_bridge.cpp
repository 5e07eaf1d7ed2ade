#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "ase/bridge.hpp"
#include "support.hpp"

using namespace ase;
using nlohmann::json;
using Clock = BridgeService::Clock;

namespace {

BridgeConfig base_config(const std::filesystem::path& log_dir = {}) {
  BridgeConfig c;
  c.nav.beta = 0.167;
  c.nav_theta = {1.0};
  c.lander_theta = {0.0, 0.07};
  c.seed = 4;
  c.log_dir = log_dir.string();
  c.session_timeout = std::chrono::seconds(60);
  return c;
}

json start_msg(const std::string& env, const std::string& condition) {
  return {{"v", 1}, {"type", "start"}, {"env", env}, {"condition", condition}};
}

json action_msg(const std::string& session, json action) {
  return {{"v", 1}, {"type", "action"}, {"session", session}, {"action", std::move(action)}};
}

json strip(json frame) {
  frame.erase("v");
  frame.erase("type");
  frame.erase("session");
  return frame;
}

std::vector<json> read_log(const std::filesystem::path& dir) {
  std::vector<json> out;
  std::ifstream in(dir / "demonstrations.jsonl");
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

// Plays a nav session greedily toward its goal, mirroring the server's
// episode locally to know the true state. Returns every frame received.
std::vector<json> play_nav(BridgeService& service, const json& first, const std::shared_ptr<const NavContext>& ctx,
                           std::uint64_t seed, std::uint64_t episode, std::vector<int>& actions) {
  NavEpisode mirror(ctx, condition_from_string(first.at("condition")), {1.0}, seed, episode);
  const auto q = ctx->q_cache->get(mirror.goal());
  const std::string id = first.at("session");
  std::vector<json> frames{first};
  auto now = Clock::now();
  while (!mirror.done()) {
    const auto a = q->greedy_action(mirror.state());
    mirror.act(a);
    actions.push_back(static_cast<int>(a));
    const auto replies = service.handle(action_msg(id, nav_action_name(static_cast<NavAction>(a))), now);
    REQUIRE(!replies.empty());
    for (const auto& r : replies) frames.push_back(r);
  }
  return frames;
}

}  // namespace

TEST_CASE("starting sessions") {
  BridgeService service(base_config());
  const auto now = Clock::now();

  const auto replies = service.handle(start_msg("grid-nav", "unassisted"), now);
  REQUIRE(replies.size() == 1);
  const auto& f = replies[0];
  CHECK(f.at("v") == 1);
  CHECK(f.at("type") == "frame");
  CHECK(f.at("condition") == "unassisted");
  CHECK(f.at("t") == 0);
  CHECK(f.at("observation").at("objects").size() <= 1);
  CHECK(f.at("render_hints").contains("goal"));
  CHECK(service.session_count() == 1);
  CHECK(service.sessions() == json{{"v", 1}, {"count", 1}});
  CHECK(service.health().at("status") == "ok");

  auto bad = service.handle(start_msg("pong", "unassisted"), now);
  REQUIRE(bad.size() == 1);
  CHECK(bad[0].at("type") == "error");
  CHECK(bad[0].at("code") == BridgeService::kUnknownEnv);
  CHECK(service.session_count() == 1);

  CHECK(service.handle(start_msg("grid-nav", "sometimes"), now)[0].at("code") == BridgeService::kUnknownCondition);
  CHECK(service.handle(start_msg("grid-nav", "oracle"), now)[0].at("code") == BridgeService::kUnknownCondition);
  CHECK(service.session_count() == 1);

  BridgeConfig no_model = base_config();
  no_model.nav_theta.clear();
  BridgeService bare(no_model);
  CHECK(bare.handle(start_msg("grid-nav", "ase"), now)[0].at("code") == BridgeService::kMissingModel);
  CHECK(bare.session_count() == 0);
}

TEST_CASE("an unassisted start mentions the ambient object") {
  BridgeService service(base_config());
  const auto ctx = NavContext::create(base_config().nav);
  auto msg = start_msg("grid-nav", "unassisted");
  for (std::uint64_t e = 0; e < 20; ++e) {
    msg["seed"] = 11;
    msg["episode"] = e;
    const auto f = service.handle(msg, Clock::now()).front();
    const NavEpisode mirror(ctx, Condition::kUnassisted, {}, 11, e);
    const auto& objects = f.at("observation").at("objects");
    CHECK(objects.size() == mirror.ambient().size());
    if (!objects.empty()) {
      CHECK(objects[0].at("id") == mirror.ambient()[0]);
      const auto& obj = ctx->env->map().objects[static_cast<std::size_t>(mirror.ambient()[0])];
      const std::size_t placements = obj.category == ObjectCategory::kUniqueUnknown ? 0 : obj.cells.size();
      CHECK(objects[0].at("placements").size() == placements);
    }
  }
}

TEST_CASE("protocol errors") {
  BridgeService service(base_config());
  const auto now = Clock::now();
  auto no_v = start_msg("grid-nav", "unassisted");
  no_v.erase("v");
  CHECK(service.handle(no_v, now)[0].at("code") == BridgeService::kUnsupportedVersion);
  no_v["v"] = 2;
  CHECK(service.handle(no_v, now)[0].at("code") == BridgeService::kUnsupportedVersion);
  CHECK(service.handle_text("{not json", now)[0].at("code") == BridgeService::kBadRequest);
  CHECK(service.handle(json::array(), now)[0].at("code") == BridgeService::kBadRequest);
  CHECK(service.handle({{"v", 1}, {"type", "dance"}}, now)[0].at("code") == BridgeService::kBadRequest);
  CHECK(service.handle(action_msg("s99-00000000", 0), now)[0].at("code") == BridgeService::kUnknownSession);

  const std::string id = service.handle(start_msg("grid-nav", "unassisted"), now)[0].at("session");
  const auto illegal = service.handle(action_msg(id, "jump"), now);
  CHECK(illegal[0].at("code") == BridgeService::kIllegalAction);
  CHECK(illegal[0].at("session") == id);
  CHECK(service.handle(action_msg(id, 3), now)[0].at("code") == BridgeService::kIllegalAction);
  CHECK(service.handle({{"v", 1}, {"type", "label"}, {"session", id}, {"task", 1}}, now)[0].at("code") ==
        BridgeService::kBadRequest);
  CHECK(service.session_count() == 1);
}

TEST_CASE("walking into a wall costs a step") {
  BridgeService service(base_config());
  const auto ctx = NavContext::create(base_config().nav);
  auto msg = start_msg("grid-nav", "unassisted");
  msg["seed"] = 2;
  msg["episode"] = 0;
  const std::string id = service.handle(msg, Clock::now())[0].at("session");
  NavEpisode mirror(ctx, Condition::kUnassisted, {}, 2, 0);

  // Turn until facing north, then walk until the edge blocks the move.
  auto send = [&](std::size_t a) {
    mirror.act(a);
    return service.handle(action_msg(id, static_cast<int>(a)), Clock::now());
  };
  while (ctx->env->pose(mirror.state()).heading != Heading::kNorth && !mirror.done()) send(1);
  while (ctx->env->pose(mirror.state()).y > 0 && !mirror.done()) send(2);
  if (mirror.done()) return;  // reached the goal on the way; nothing to bump
  const auto before = mirror.state();
  const int t = mirror.t();
  const auto replies = send(2);
  CHECK(mirror.state() == before);
  CHECK(replies[0].at("t") == t + 1);
  const auto visible = ctx->env->full_observe(before);
  for (const auto& o : replies[0].at("observation").at("objects")) {
    CHECK(std::find(visible.begin(), visible.end(), o.at("id").get<int>()) != visible.end());
  }
}

TEST_CASE("a finished nav episode summarizes, logs and replays") {
  const auto dir = testing::scratch_dir("bridge_nav");
  const auto config = base_config(dir);
  const auto ctx = NavContext::create(config.nav);
  std::vector<int> actions;
  std::vector<json> frames;
  std::string id;
  {
    BridgeService service(config);
    for (const char* condition : {"unassisted", "ase", "random"}) {
      auto msg = start_msg("grid-nav", condition);
      msg["seed"] = 8;
      msg["episode"] = 3;
      const auto first = service.handle(msg, Clock::now());
      if (std::string(condition) != "ase") continue;
      id = first[0].at("session");
      frames = play_nav(service, first[0], ctx, 8, 3, actions);
    }
    REQUIRE(frames.back().at("type") == "summary");
    const auto& summary = frames.back();
    CHECK(summary.at("metrics").at("success") == true);
    CHECK(summary.at("metrics").at("time_to_goal") == actions.size());
    CHECK(summary.at("session") == id);
    CHECK(summary.at("demonstration") == "bridge/" + id);
    CHECK(service.handle(action_msg(id, 0), Clock::now())[0].at("code") == BridgeService::kUnknownSession);
    service.flush_log();
  }

  const auto log = read_log(dir);
  json demo;
  for (const auto& rec : log) {
    if (rec.at("kind") == "demonstration" && rec.at("demonstration").at("episode_id") == "bridge/" + id) {
      demo = rec.at("demonstration");
    }
  }
  REQUIRE(demo.is_object());
  const auto parsed = Demonstration::from_json(demo);
  CHECK(parsed.meta.at("task_label") == "auto");
  CHECK(parsed.actions == actions);
  CHECK(parsed.actions.size() == frames.back().at("metrics").at("time_to_goal").get<std::size_t>());

  // Same seed, same actions: the same frames.
  const auto replayed = replay_nav_frames(ctx, Condition::kAse, {1.0}, parsed.meta.at("seed"),
                                          parsed.meta.at("episode"), parsed.actions);
  REQUIRE(replayed.size() + 1 == frames.size());
  for (std::size_t i = 0; i < replayed.size(); ++i) CHECK(replayed[i] == strip(frames[i]));
  std::filesystem::remove_all(dir);
}

TEST_CASE("simulated episodes replay through the served pipeline") {
  const auto config = base_config();
  const auto ctx = NavContext::create(config.nav);
  for (Condition c : {Condition::kUnassisted, Condition::kRandom, Condition::kAse}) {
    for (std::uint64_t e = 0; e < 5; ++e) {
      const auto result = run_nav_episode(ctx, c, {0.0}, 6, e);
      const auto frames = replay_nav_frames(ctx, c, {0.0}, 6, e, result.demonstration.actions);
      for (std::size_t t = 0; t < result.demonstration.actions.size(); ++t) {
        std::vector<double> shown;
        for (const auto& o : frames[t].at("observation").at("objects")) shown.push_back(o.at("id"));
        CHECK(shown == result.demonstration.observations[t]);
      }
      CHECK(frames.back().at("done") == true);
    }
  }
}

TEST_CASE("lander sessions") {
  const auto dir = testing::scratch_dir("bridge_lander");
  const auto theta_path = dir / "fit.json";
  std::ofstream(theta_path) << json{{"final_fit", {{"theta", {0.05, 0.3}}}}}.dump();

  BridgeConfig config = base_config(dir);
  BridgeService service(config);
  const auto t0 = Clock::now();

  SUBCASE("assisted indicator inverts the fitted distortion") {
    auto msg = start_msg("tilt-lander", "ase");
    msg["theta_file"] = theta_path.string();
    msg["debug"] = true;
    const auto f = service.handle(msg, t0).front();
    const double truth = f.at("render_hints").at("true_angle");
    const double expected = std::get<double>(logistic_invert(truth, 0.05, 0.3).payload);
    CHECK(f.at("observation").at("angle").get<double>() == expected);

    auto plain = start_msg("tilt-lander", "unassisted");
    CHECK_FALSE(service.handle(plain, t0).front().at("render_hints").contains("true_angle"));
    msg["theta_file"] = (dir / "missing.json").string();
    CHECK(service.handle(msg, t0).front().at("code") == BridgeService::kBadRequest);
  }

  SUBCASE("silent ticks inject no-ops and labels close the session") {
    const std::string id = service.handle(start_msg("tilt-lander", "unassisted"), t0)[0].at("session");
    CHECK(service.handle(action_msg(id, "fire-left"), t0).empty());
    CHECK(service.handle(action_msg(id, "fire-right"), t0).empty());
    // Nothing is due before the first tick.
    CHECK(service.tick(t0).empty());
    const auto one = service.tick(t0 + service.tick_interval());
    REQUIRE(one.size() == 1);
    CHECK(one[0].at("t") == 1);
    const auto rest = service.tick(t0 + service.tick_interval() * 150);
    REQUIRE(rest.size() == 150);
    CHECK(rest.back().at("type") == "summary");
    CHECK(rest.back().at("label_prompt").is_string());
    CHECK(service.handle(action_msg(id, "noop"), t0)[0].at("code") == BridgeService::kEpisodeFinished);

    const auto ack = service.handle({{"v", 1}, {"type", "label"}, {"session", id}, {"task", 0}}, t0);
    CHECK(ack[0].at("type") == "label");
    CHECK(service.session_count() == 0);
    service.flush_log();

    const auto log = read_log(dir);
    REQUIRE(log.size() == 2);
    const auto demo = log[0].at("demonstration");
    const auto actions = demo.at("actions").get<std::vector<int>>();
    REQUIRE(actions.size() == 150);
    // The latest action in the first window wins; the rest are injected no-ops.
    CHECK(actions[0] == static_cast<int>(LanderAction::kFireRight));
    for (std::size_t i = 1; i < actions.size(); ++i) CHECK(actions[i] == static_cast<int>(LanderAction::kNoop));
    CHECK(demo.at("meta").at("label_prompt").is_string());
    CHECK(log[1].at("kind") == "label");
    CHECK(log[1].at("demonstration") == demo.at("episode_id"));
  }

  SUBCASE("turn-based lander") {
    auto msg = start_msg("tilt-lander", "unassisted");
    msg["realtime"] = false;
    const std::string id = service.handle(msg, t0)[0].at("session");
    const auto r = service.handle(action_msg(id, 0), t0);
    REQUIRE(r.size() == 1);
    CHECK(r[0].at("t") == 1);
    CHECK(service.tick(t0 + std::chrono::seconds(1)).empty());
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("idle sessions expire") {
  BridgeConfig config = base_config();
  config.session_timeout = std::chrono::seconds(2);
  BridgeService service(config);
  const auto t0 = Clock::now();
  const std::string id = service.handle(start_msg("grid-nav", "unassisted"), t0)[0].at("session");
  service.handle(action_msg(id, 0), t0 + std::chrono::seconds(1));
  CHECK(service.tick(t0 + std::chrono::seconds(3)).empty());
  const auto out = service.tick(t0 + std::chrono::seconds(4));
  REQUIRE(out.size() == 1);
  CHECK(out[0].at("code") == BridgeService::kExpiredSession);
  CHECK(out[0].at("session") == id);
  CHECK(service.session_count() == 0);
  CHECK(service.handle(action_msg(id, 0), t0)[0].at("code") == BridgeService::kExpiredSession);
}

TEST_CASE("concurrent sessions stay isolated") {
  BridgeConfig config = base_config();
  BridgeService service(config);
  const auto ctx = NavContext::create(config.nav);
  constexpr int kThreads = 6;
  constexpr int kSessions = 4;

  struct Played {
    std::uint64_t episode;
    std::vector<int> actions;
    std::vector<json> frames;
    std::string id;
  };
  std::vector<std::vector<Played>> results(kThreads);
  std::atomic<bool> stop{false};
  std::thread ticker([&] {
    while (!stop) service.tick(Clock::now());
  });

  std::vector<std::thread> workers;
  for (int w = 0; w < kThreads; ++w) {
    workers.emplace_back([&, w] {
      std::mt19937_64 rng(static_cast<std::uint64_t>(w) + 100);
      std::vector<Played> mine(kSessions);
      for (int k = 0; k < kSessions; ++k) {
        auto& p = mine[static_cast<std::size_t>(k)];
        p.episode = static_cast<std::uint64_t>(w * kSessions + k);
        auto msg = start_msg("grid-nav", k % 2 ? "ase" : "unassisted");
        msg["seed"] = 21;
        msg["episode"] = p.episode;
        const auto first = service.handle(msg, Clock::now());
        p.frames.push_back(first[0]);
        p.id = first[0].at("session");
      }
      // Interleave actions across this worker's sessions at random.
      for (int step = 0; step < 200; ++step) {
        auto& p = mine[rng() % kSessions];
        if (p.frames.back().at("type") == "summary") continue;
        const int a = static_cast<int>(rng() % 3);
        const auto replies = service.handle(action_msg(p.id, a), Clock::now());
        p.actions.push_back(a);
        for (const auto& r : replies) p.frames.push_back(r);
      }
      results[static_cast<std::size_t>(w)] = std::move(mine);
    });
  }
  for (auto& t : workers) t.join();
  stop = true;
  ticker.join();

  std::set<std::string> ids;
  for (int w = 0; w < kThreads; ++w) {
    for (int k = 0; k < kSessions; ++k) {
      const auto& p = results[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)];
      ids.insert(p.id);
      const Condition c = k % 2 ? Condition::kAse : Condition::kUnassisted;
      const auto replayed = replay_nav_frames(ctx, c, {1.0}, 21, p.episode, p.actions);
      std::size_t i = 0;
      for (const auto& f : p.frames) {
        CHECK(f.at("session") == p.id);
        if (f.at("type") != "frame") continue;
        REQUIRE(i < replayed.size());
        CHECK(strip(f) == replayed[i++]);
      }
      CHECK(i == replayed.size());
    }
  }
  CHECK(ids.size() == kThreads * kSessions);
}

TEST_CASE("bridge config files") {
  const auto cfg = BridgeConfig::load(testing::source_dir() / "configs" / "bridge.json");
  CHECK(cfg.tick_hz == 15.0);
  CHECK(std::filesystem::exists(cfg.nav.map_path));
  CHECK(cfg.session_timeout == std::chrono::seconds(300));
  CHECK_THROWS_AS(BridgeConfig::from_json({{"port", 1}}), ConfigError);
  CHECK_THROWS_AS(BridgeConfig::from_json({{"tick_hz", 0}}), ConfigError);
  CHECK_THROWS_AS(BridgeConfig::from_json({{"lander_theta", {1.0}}}), ConfigError);
}
