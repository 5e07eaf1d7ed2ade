#include "ase/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ase/observation.hpp"

namespace ase {

namespace {

using nlohmann::json;

std::vector<double> expand_theta(const std::vector<double>& theta, std::size_t k, const char* what) {
  if (theta.size() == k) return theta;
  if (theta.size() == 1) return std::vector<double>(k, theta.front());
  throw ConfigError(std::string(what) + " has " + std::to_string(theta.size()) +
                    " entries, the weight layout needs " + std::to_string(k));
}

double log_floor(double p) { return std::log(std::max(p, kBeliefFloor)); }

std::string episode_id(const std::string& env, Condition c, std::uint64_t root, std::uint64_t ep) {
  return env + "/" + to_string(c) + "/" + std::to_string(root) + "/" + std::to_string(ep);
}

json cell_json(const Cell& c) { return json::array({c.x, c.y}); }

}  // namespace

// ---------------------------------------------------------------------------

std::shared_ptr<const NavContext> NavContext::create(const NavSettings& settings) {
  GridMap map = settings.map_path.empty()
                    ? generate_map(settings.profile == "habitat" ? MapProfile::habitat() : MapProfile::paper(),
                                   settings.map_seed)
                    : GridMap::load(settings.map_path);
  const std::uint64_t hash = map.hash();
  auto ctx = std::make_shared<NavContext>();
  ctx->settings = settings;
  ctx->env = std::make_shared<const GridNavEnv>(std::move(map), settings.nav);
  ctx->q_cache = std::make_shared<QTableCache>(ctx->env->mdp(), hash, settings.q, settings.q_cache_dir);
  WeightLayout layout = settings.layout == "object" ? WeightLayout::per_object(*ctx->env)
                                                    : WeightLayout::per_category(*ctx->env);
  ctx->family = std::make_shared<const NavFamily>(ctx->env, std::move(layout), ctx->q_cache,
                                                  settings.beta, BandwidthUserModel{settings.bandwidth});
  // Surface a malformed user theta now rather than mid-experiment.
  ctx->user_model(settings.user_theta);
  return ctx;
}

NavUserModel NavContext::user_model(const std::vector<double>& theta) const {
  return NavUserModel(
      WeightedObsUserModel(*env, layout(), expand_theta(theta, layout().num_params, "theta")),
      BandwidthUserModel{settings.bandwidth});
}

// ---------------------------------------------------------------------------

NavEpisode::NavEpisode(std::shared_ptr<const NavContext> ctx, Condition condition,
                       std::vector<double> assistant_theta, std::uint64_t root_seed,
                       std::uint64_t episode,
                       std::optional<std::pair<std::size_t, std::size_t>> start_goal)
    : ctx_(std::move(ctx)),
      condition_(condition),
      episode_(episode),
      ambient_rng_(make_rng(root_seed, episode, Stream::kAmbient)),
      assistant_rng_(make_rng(root_seed, episode, Stream::kAssistant)) {
  if (condition == Condition::kOracle) throw ConfigError("grid-nav has no oracle condition");
  const GridNavEnv& env = *ctx_->env;
  const auto& free = env.free_states();
  if (free.empty()) throw ConfigError("map has no free cells");
  if (start_goal) {
    start_ = start_goal->first;
    goal_ = start_goal->second;
    if (!env.is_free_state(start_) || !env.is_free_state(goal_)) {
      throw ConfigError("start and goal must be free states");
    }
  } else {
    Rng rng = make_rng(root_seed, episode, Stream::kEnvironment);
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    start_ = free[pick(rng)];
    goal_ = free[pick(rng)];
  }
  state_ = start_;
  states_.push_back(state_);

  if (is_assisted(condition)) {
    const std::size_t k = ctx_->layout().num_params;
    std::vector<double> theta = condition == Condition::kNaiveAse ? std::vector<double>(k, 1.0)
                                                                  : assistant_theta;
    if (theta.empty()) throw ConfigError("ase needs a fitted user model");
    assistant_user_model_.emplace(ctx_->user_model(theta));
    assistant_belief_.emplace(env.singleton_pomdp().initial_belief());
    predicted_user_.emplace(assistant_user_model_->initial_belief());
  }
  if (start_ == goal_) {
    done_ = true;
    return;
  }
  emit();
}

void NavEpisode::emit() {
  const GridNavEnv& env = *ctx_->env;
  const int nothing = env.nothing_symbol();
  const std::optional<std::size_t> last =
      actions_.empty() ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(actions_.back()));

  const int o = env.observe(state_, ambient_rng_);
  ambient_ = o == nothing ? std::vector<int>{} : std::vector<int>{o};
  synthesis_.reset();

  switch (condition_) {
    case Condition::kUnassisted:
      shown_ = ambient_;
      break;
    case Condition::kRandom: {
      std::vector<int> pool;
      if (ctx_->settings.random_candidates == "all") {
        pool.resize(env.num_objects());
        std::iota(pool.begin(), pool.end(), 0);
      } else {
        const auto vis = env.visible(state_);
        pool.assign(vis.begin(), vis.end());
      }
      if (pool.empty()) {
        shown_.clear();
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        shown_ = {pool[pick(assistant_rng_)]};
      }
      break;
    }
    case Condition::kNaiveAse:
    case Condition::kAse: {
      const auto seen = env.full_observe(state_);
      assistant_belief_ = bayes_update(*assistant_belief_, last, env.full_observation_likelihood(seen),
                                       env.singleton_pomdp(), ImpossiblePolicy::kResetUniform);
      std::vector<int> candidates;
      if (ctx_->settings.candidates == "all") {
        candidates.resize(env.num_symbols());
        std::iota(candidates.begin(), candidates.end(), 0);
      } else if (seen.empty()) {
        candidates = {nothing};
      } else {
        candidates = seen;
      }
      const auto synth = synthesize_enumerative(*assistant_belief_, *assistant_user_model_,
                                                *predicted_user_, last, candidates,
                                                nav_state_embedding(env));
      shown_ = std::get<std::vector<int>>(synth.payload);
      predicted_user_ = assistant_user_model_->update(*predicted_user_, last, shown_);
      synthesis_ = synthesis_log_entry(t_, synth, assistant_belief_->entropy(), predicted_user_->entropy());
      break;
    }
    case Condition::kOracle:
      throw ConfigError("grid-nav has no oracle condition");
  }
  shown_history_.push_back(shown_);
}

void NavEpisode::act(std::size_t action) {
  if (done_) throw ConfigError("episode already finished");
  const GridNavEnv& env = *ctx_->env;
  if (action >= env.num_actions()) throw ConfigError("illegal grid-nav action " + std::to_string(action));
  const NavStep step = env.step(state_, action, goal_);
  state_ = step.next_state;
  return_ += step.reward;
  ++t_;
  actions_.push_back(static_cast<int>(action));
  states_.push_back(state_);
  if (step.terminal || t_ >= env.horizon()) {
    done_ = true;
    return;
  }
  emit();
}

Demonstration NavEpisode::demonstration() const {
  Demonstration d;
  d.episode_id = episode_id(kGridNav, condition_, 0, episode_);
  d.env = kGridNav;
  d.condition = to_string(condition_);
  d.task = static_cast<std::int64_t>(goal_);
  for (const auto& shown : shown_history_) d.observations.push_back(encode_payload(shown));
  d.actions = actions_;
  d.meta = {{"start", start_}, {"goal", goal_}, {"episode", episode_}};
  return d;
}

json nav_frame(const NavEpisode& episode) {
  const GridNavEnv& env = *episode.context().env;
  const GridMap& map = env.map();
  json objects = json::array();
  for (int id : episode.shown()) {
    const GridObject& obj = map.objects.at(static_cast<std::size_t>(id));
    json cells = json::array();
    // Only objects in the user's mental map have known placements.
    if (obj.category != ObjectCategory::kUniqueUnknown) {
      for (const auto& c : obj.cells) cells.push_back(cell_json(c));
    }
    objects.push_back({{"id", obj.id},
                       {"name", obj.name},
                       {"category", std::string(1, category_letter(obj.category))},
                       {"placements", cells}});
  }
  json walls = json::array();
  for (const auto& w : map.walls) walls.push_back(cell_json(w));
  json actions = json::array();
  for (std::size_t a = 0; a < env.num_actions(); ++a) {
    actions.push_back(nav_action_name(static_cast<NavAction>(a)));
  }
  const NavPose goal = env.pose(episode.goal());
  return {{"env", kGridNav},
          {"t", episode.t()},
          {"condition", to_string(episode.condition())},
          {"observation", {{"objects", objects}}},
          {"render_hints",
           {{"width", map.width},
            {"height", map.height},
            {"goal", {{"x", goal.x}, {"y", goal.y}, {"heading", heading_name(goal.heading)}}},
            {"walls", walls},
            {"actions", actions}}},
          {"done", episode.done()}};
}

// ---------------------------------------------------------------------------

LanderEpisode::LanderEpisode(const TiltLanderEnv& env, Condition condition,
                             DistortedPerceptUserModel assistant_model, std::uint64_t root_seed,
                             std::uint64_t episode)
    : env_(&env),
      condition_(condition),
      episode_(episode),
      assistant_model_(assistant_model),
      env_rng_(make_rng(root_seed, episode, Stream::kEnvironment)),
      assistant_rng_(make_rng(root_seed, episode, Stream::kAssistant)) {
  if (condition == Condition::kOracle) throw ConfigError("tilt-lander has no oracle condition");
  state_ = env.reset(env_rng_);
  emit();
}

void LanderEpisode::emit() {
  const double angle = env_->observe(state_);
  synthesis_.reset();
  switch (condition_) {
    case Condition::kUnassisted:
      shown_ = angle;
      break;
    case Condition::kRandom: {
      std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
      shown_ = u(assistant_rng_);
      break;
    }
    case Condition::kNaiveAse:
    case Condition::kAse: {
      const auto synth = logistic_invert(angle, assistant_model_.theta0, assistant_model_.theta1);
      shown_ = std::get<double>(synth.payload);
      // Both beliefs are point estimates.
      synthesis_ = synthesis_log_entry(state_.t, synth, 0.0, 0.0);
      break;
    }
    case Condition::kOracle:
      throw ConfigError("tilt-lander has no oracle condition");
  }
  angles_.push_back(angle);
  shown_history_.push_back(shown_);
}

void LanderEpisode::act(int action) {
  if (done_) throw ConfigError("episode already finished");
  if (action < 0 || action > static_cast<int>(LanderAction::kNoop)) {
    throw ConfigError("illegal tilt-lander action " + std::to_string(action));
  }
  const LanderStep step = env_->step(state_, action, env_rng_);
  state_ = step.next;
  return_ += step.reward;
  actions_.push_back(action);
  if (step.terminal) {
    done_ = true;
    return;
  }
  emit();
}

Demonstration LanderEpisode::demonstration() const {
  Demonstration d;
  d.episode_id = episode_id(kTiltLander, condition_, 0, episode_);
  d.env = kTiltLander;
  d.condition = to_string(condition_);
  d.task = 0;
  for (double o : shown_history_) d.observations.push_back({o});
  d.actions = actions_;
  d.meta = {{"episode", episode_}};
  return d;
}

json lander_frame(const LanderEpisode& episode, bool debug) {
  json hints = {{"actions", json::array({"fire-left", "fire-right", "noop"})}};
  if (debug) hints["true_angle"] = episode.state().angle;
  return {{"env", kTiltLander},
          {"t", episode.t()},
          {"condition", to_string(episode.condition())},
          {"observation", {{"angle", episode.shown()}}},
          {"render_hints", hints},
          {"done", episode.done()}};
}

// ---------------------------------------------------------------------------

EpisodeMetrics episode_metrics(const NavEpisode& ep) {
  const GridNavEnv& env = *ep.context().env;
  EpisodeMetrics m;
  m.env = kGridNav;
  m.condition = ep.condition();
  m.episode = ep.episode();
  m.steps = ep.t();
  m.episode_return = ep.episode_return();
  m.success = ep.success();
  m.time_to_goal = ep.t();
  const double d0 = env.cell_distance(ep.start(), ep.goal());
  const double norm = d0 > 0.0 ? d0 : 1.0;
  for (std::size_t s : ep.state_trace()) m.distance_trace.push_back(env.cell_distance(s, ep.goal()) / norm);
  m.distance_to_goal_normalized = m.distance_trace.back();
  while (m.distance_trace.size() < static_cast<std::size_t>(env.horizon()) + 1) {
    m.distance_trace.push_back(m.distance_trace.back());
  }
  return m;
}

EpisodeMetrics episode_metrics(const LanderEpisode& ep) {
  const auto& angles = ep.angle_trace();
  const std::size_t n = angles.size();
  double total = 0.0;
  double tail = 0.0;
  const std::size_t tail_start = n - n / 3;
  for (std::size_t i = 0; i < n; ++i) {
    total += std::abs(angles[i]);
    if (i >= tail_start) tail += std::abs(angles[i]);
  }
  EpisodeMetrics m;
  m.env = kTiltLander;
  m.condition = ep.condition();
  m.episode = ep.episode();
  m.steps = ep.t();
  m.episode_return = ep.episode_return();
  m.mean_abs_tilt = total / static_cast<double>(n);
  m.final_third_abs_tilt = tail / static_cast<double>(n - tail_start);
  return m;
}

// ---------------------------------------------------------------------------

ExperimentModels ExperimentModels::create(const ExperimentConfig& config) {
  ExperimentModels m;
  if (config.env == kGridNav) {
    m.nav = NavContext::create(config.nav);
  } else if (config.env == kRowReveal) {
    const auto& r = config.row;
    m.pixels = std::make_shared<const ClassPixelModel>(
        r.images_path.empty()
            ? ClassPixelModel::glyphs(r.num_classes, r.rows, r.cols, r.ink, r.background)
            : ClassPixelModel::load_dataset(r.images_path, r.labels_path, r.num_classes, r.rows, r.cols));
  } else if (config.env == kTiltLander) {
    m.lander = std::make_shared<const TiltLanderEnv>(config.lander.lander);
  }
  m.assistant_theta = config.assistant_theta;
  return m;
}

std::vector<double> ExperimentModels::initial_theta(const ExperimentConfig& config,
                                                    const ExperimentModels& models) {
  if (config.learner && !config.learner->init.empty()) return config.learner->init;
  if (config.env == kGridNav) return std::vector<double>(models.nav->layout().num_params, 1.0);
  if (config.env == kTiltLander) {
    const auto id = DistortedPerceptUserModel::identity_like();
    return {id.theta0, id.theta1};
  }
  return {};
}

EpisodeResult run_episode(const ExperimentConfig& config, Condition condition,
                          const ExperimentModels& models, std::uint64_t episode) {
  if (condition == Condition::kOracle && config.env != kDelayTrack) {
    throw ConfigError("the oracle condition is only defined for delay-track");
  }
  if (config.env == kGridNav) {
    return run_nav_episode(models.nav, condition, models.assistant_theta, config.seed, episode);
  }
  if (config.env == kRowReveal) return run_row_episode(*models.pixels, condition, config.seed, episode);
  if (config.env == kDelayTrack) return run_track_episode(config.track, condition, config.seed, episode);
  if (config.env == kTiltLander) {
    return run_lander_episode(*models.lander, config.lander, condition, models.assistant_theta,
                              config.seed, episode);
  }
  throw ConfigError("unknown environment '" + config.env + "'");
}

EpisodeResult run_nav_episode(const std::shared_ptr<const NavContext>& ctx, Condition condition,
                              const std::vector<double>& assistant_theta, std::uint64_t root_seed,
                              std::uint64_t episode) {
  if (!ctx) throw ConfigError("grid-nav models missing");
  NavEpisode ep(ctx, condition, condition == Condition::kAse ? assistant_theta : std::vector<double>{},
                root_seed, episode);
  const NavUserModel user = ctx->user_model(ctx->settings.user_theta);
  const auto policy = ctx->family->policy(ep.goal());
  Rng user_rng = make_rng(root_seed, episode, Stream::kUser);

  EpisodeResult result;
  DiscreteBelief belief = user.initial_belief();
  double belief_sum = 0.0;
  int belief_steps = 0;
  while (!ep.done()) {
    const std::optional<std::size_t> last =
        ep.actions().empty() ? std::nullopt
                             : std::optional<std::size_t>(static_cast<std::size_t>(ep.actions().back()));
    belief = user.update(belief, last, ep.shown());
    belief_sum += log_floor(belief[ep.state()]);
    ++belief_steps;
    if (ep.last_synthesis()) result.synthesis_log.push_back(*ep.last_synthesis());
    ep.act(user_act(*policy, belief, user_rng));
  }
  result.metrics = episode_metrics(ep);
  result.metrics.belief_in_true_state =
      belief_steps > 0 ? belief_sum / belief_steps : log_floor(belief[ep.state()]);
  result.demonstration = ep.demonstration();
  result.demonstration.episode_id = episode_id(kGridNav, condition, root_seed, episode);
  return result;
}

EpisodeResult run_row_episode(const ClassPixelModel& model, Condition condition,
                              std::uint64_t root_seed, std::uint64_t episode) {
  if (condition == Condition::kOracle) throw ConfigError("row-reveal has no oracle condition");
  Rng env_rng = make_rng(root_seed, episode, Stream::kEnvironment);
  Rng assistant_rng = make_rng(root_seed, episode, Stream::kAssistant);
  const RowRevealEnv env = RowRevealEnv::sample(model, env_rng);
  const int rows = env.horizon();

  std::vector<int> all(static_cast<std::size_t>(rows));
  std::iota(all.begin(), all.end(), 0);
  // The assistant sees the whole image.
  const DiscreteBelief assistant = row_reveal_class_posterior(env, all);

  EpisodeResult result;
  auto& m = result.metrics;
  auto& demo = result.demonstration;
  std::vector<int> revealed;
  std::vector<int> unrevealed = all;
  double belief_sum = 0.0;
  int correct = 0;
  for (int t = 0; t < rows; ++t) {
    int r = 0;
    switch (condition) {
      case Condition::kUnassisted:
        r = t;
        break;
      case Condition::kRandom: {
        std::uniform_int_distribution<std::size_t> pick(0, unrevealed.size() - 1);
        r = unrevealed[pick(assistant_rng)];
        break;
      }
      default: {
        const auto synth = synthesize_row(assistant, revealed, unrevealed, env);
        r = synth.chosen;
        const auto user_now = row_reveal_class_posterior(env, revealed);
        result.synthesis_log.push_back(synthesis_log_entry(t, synth, assistant.entropy(), user_now.entropy()));
        break;
      }
    }
    revealed.push_back(r);
    unrevealed.erase(std::find(unrevealed.begin(), unrevealed.end(), r));
    const DiscreteBelief user = row_reveal_class_posterior(env, revealed);
    const int label = static_cast<int>(user.argmax());
    const bool hit = label == env.true_class();
    correct += hit ? 1 : 0;
    m.per_step_accuracy.push_back(hit ? 1.0 : 0.0);
    belief_sum += log_floor(user[static_cast<std::size_t>(env.true_class())]);
    demo.observations.push_back(encode_payload(env.reveal(r)));
    demo.actions.push_back(label);
  }
  m.env = kRowReveal;
  m.condition = condition;
  m.episode = episode;
  m.steps = rows;
  m.episode_return = correct;
  m.belief_in_true_state = belief_sum / rows;
  m.final_accuracy = m.per_step_accuracy.back();
  demo.episode_id = episode_id(kRowReveal, condition, root_seed, episode);
  demo.env = kRowReveal;
  demo.condition = to_string(condition);
  demo.task = env.true_class();
  demo.meta = {{"episode", episode}};
  return result;
}

EpisodeResult run_track_episode(const TrackSettings& settings, Condition condition,
                                std::uint64_t root_seed, std::uint64_t episode) {
  const DelayTrackConfig& cfg = settings.track;
  Rng env_rng = make_rng(root_seed, episode, Stream::kEnvironment);
  Rng assistant_rng = make_rng(root_seed, episode, Stream::kAssistant);
  Rng user_rng = make_rng(root_seed, episode, Stream::kUser);
  const DelayTrackEnv env = DelayTrackEnv::generate(cfg, env_rng);
  DelayedFeed feed(env);
  const DelayBlindUserModel user;

  EpisodeResult result;
  auto& demo = result.demonstration;
  TrackState state = env.initial_state();
  double ret = 0.0;
  double belief_sum = 0.0;
  int t = 0;
  for (; t < env.horizon(); ++t) {
    const TrackObservation ambient = feed.emit(t, state);
    TrackObservation shown;
    switch (condition) {
      case Condition::kUnassisted:
        shown = ambient;
        break;
      case Condition::kRandom: {
        const double center = env.centers()[static_cast<std::size_t>(state.index)];
        std::uniform_real_distribution<double> lateral(center - 2.0 * cfg.lane_half_width,
                                                       center + 2.0 * cfg.lane_half_width);
        std::uniform_real_distribution<double> heading(-cfg.max_heading, cfg.max_heading);
        const double x = lateral(assistant_rng);
        const double h = heading(assistant_rng);
        shown = env.render(TrackState{state.index, x, h});
        break;
      }
      case Condition::kNaiveAse:
      case Condition::kAse: {
        const auto synth = forward_predict(ambient, t - ambient.source_step, demo.actions, env);
        shown = std::get<TrackObservation>(synth.payload);
        result.synthesis_log.push_back(synthesis_log_entry(t, synth, 0.0, 0.0));
        break;
      }
      case Condition::kOracle:
        shown = env.render(state);
        break;
    }
    const std::vector<double> believed = user.update(shown);
    const std::vector<double> truth = env.render(state).state_vector();
    double sq = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sq += (believed[i] - truth[i]) * (believed[i] - truth[i]);
    belief_sum += -0.5 * sq;
    const int a = track_user_policy(believed, cfg, settings.beta, user_rng);
    demo.observations.push_back(encode_payload(shown));
    demo.actions.push_back(a);
    const TrackStep step = env.step(state, a, env_rng);
    ret += step.reward;
    state = step.next;
    if (step.terminal) {
      ++t;
      break;
    }
  }
  auto& m = result.metrics;
  m.env = kDelayTrack;
  m.condition = condition;
  m.episode = episode;
  m.steps = t;
  m.episode_return = ret;
  m.belief_in_true_state = t > 0 ? belief_sum / t : 0.0;
  demo.episode_id = episode_id(kDelayTrack, condition, root_seed, episode);
  demo.env = kDelayTrack;
  demo.condition = to_string(condition);
  demo.task = 0;
  demo.meta = {{"episode", episode}, {"d_max", cfg.d_max}};
  return result;
}

EpisodeResult run_lander_episode(const TiltLanderEnv& env, const LanderSettings& settings,
                                 Condition condition, const std::vector<double>& assistant_theta,
                                 std::uint64_t root_seed, std::uint64_t episode) {
  DistortedPerceptUserModel assistant_model = DistortedPerceptUserModel::identity_like();
  if (condition == Condition::kAse) {
    if (assistant_theta.size() != 2) throw ConfigError("lander ase needs a fitted (theta0, theta1)");
    assistant_model = {assistant_theta[0], assistant_theta[1]};
  }
  LanderEpisode ep(env, condition, assistant_model, root_seed, episode);
  const DistortedPerceptUserModel user{settings.user_theta0, settings.user_theta1};
  Rng user_rng = make_rng(root_seed, episode, Stream::kUser);

  EpisodeResult result;
  double belief_sum = 0.0;
  while (!ep.done()) {
    const double inferred = user.percept(ep.shown());
    const double err = inferred - ep.state().angle;
    belief_sum += -0.5 * err * err;
    if (ep.last_synthesis()) result.synthesis_log.push_back(*ep.last_synthesis());
    ep.act(lander_user_policy(inferred, settings.kappa, user_rng));
  }
  result.metrics = episode_metrics(ep);
  result.metrics.belief_in_true_state = belief_sum / static_cast<double>(ep.angle_trace().size());
  result.demonstration = ep.demonstration();
  result.demonstration.episode_id = episode_id(kTiltLander, condition, root_seed, episode);
  return result;
}

}  // namespace ase
