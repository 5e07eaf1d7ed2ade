#include "ase/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ase {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

nlohmann::json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

}  // namespace

// ---------------------------------------------------------------------------

nlohmann::json Demonstration::to_json() const {
  return {{"v", 1},
          {"episode_id", episode_id},
          {"env", env},
          {"condition", condition},
          {"task", task},
          {"observations", observations},
          {"actions", actions},
          {"meta", meta}};
}

Demonstration Demonstration::from_json(const nlohmann::json& doc) {
  try {
    Demonstration d;
    d.episode_id = doc.at("episode_id").get<std::string>();
    d.env = doc.at("env").get<std::string>();
    d.condition = doc.value("condition", std::string{});
    d.task = doc.at("task").get<std::int64_t>();
    d.observations = doc.at("observations").get<std::vector<std::vector<double>>>();
    d.actions = doc.at("actions").get<std::vector<int>>();
    if (doc.contains("meta")) d.meta = doc.at("meta");
    if (d.observations.size() != d.actions.size()) {
      throw ConfigError("demonstration " + d.episode_id +
                        ": observation and action sequences differ in length");
    }
    if (d.task < 0) throw ConfigError("demonstration " + d.episode_id + " has no task label");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed demonstration: ") + e.what());
  }
}

std::vector<Demonstration> read_demonstrations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open demonstration log " + path.string());
  std::vector<Demonstration> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      // Bridge logs wrap demonstrations and append labels as separate lines.
      const std::string kind = doc.is_object() ? doc.value("kind", "") : "";
      if (kind == "demonstration") {
        out.push_back(Demonstration::from_json(doc.at("demonstration")));
      } else if (kind == "label") {
        const std::string id = doc.at("demonstration").get<std::string>();
        for (auto& d : out) {
          if (d.episode_id == id) d.task = doc.at("task").get<std::int64_t>();
        }
      } else {
        out.push_back(Demonstration::from_json(doc));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed JSON line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_demonstrations(const std::filesystem::path& path, const std::vector<Demonstration>& demos) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& d : demos) out << d.to_json().dump() << '\n';
}

// ---------------------------------------------------------------------------

std::vector<double> UserModelFamily::project(std::vector<double> theta) const {
  const auto lo = lower_bounds();
  const auto hi = upper_bounds();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = std::clamp(theta[i], lo[i], hi[i]);
  return theta;
}

NavFamily::NavFamily(std::shared_ptr<const GridNavEnv> env, WeightLayout layout,
                     std::shared_ptr<QTableCache> q_cache, double beta, BandwidthUserModel bandwidth)
    : env_(std::move(env)),
      layout_(std::move(layout)),
      q_cache_(std::move(q_cache)),
      beta_(beta),
      bandwidth_(bandwidth) {
  if (layout_.param_of_symbol.size() != env_->num_symbols()) {
    throw ConfigError("weight layout does not match the map");
  }
  if (!(beta_ > 0.0)) throw ConfigError("beta must be > 0");
}

std::vector<double> NavFamily::lower_bounds() const { return std::vector<double>(num_params(), 0.0); }
std::vector<double> NavFamily::upper_bounds() const { return std::vector<double>(num_params(), 1.0); }

std::shared_ptr<const BoltzmannPolicy> NavFamily::policy(std::size_t goal) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = policies_.find(goal); it != policies_.end()) return it->second;
  }
  auto p = std::make_shared<const BoltzmannPolicy>(q_cache_->get(goal), beta_);
  std::lock_guard lock(mutex_);
  return policies_.emplace(goal, std::move(p)).first->second;
}

LikelihoodResult NavFamily::log_likelihood(const std::vector<double>& theta,
                                           const Demonstration& demo, bool with_gradient) const {
  const GridNavEnv& env = *env_;
  const std::size_t S = env.num_states();
  const std::size_t K = layout_.num_params;
  if (theta.size() != K) throw ConfigError("theta has wrong dimension");
  if (demo.task < 0 || static_cast<std::size_t>(demo.task) >= S) {
    throw ConfigError("demonstration task is not a state of this map");
  }
  const WeightedObsUserModel model(env, layout_, theta);
  const auto pol = policy(static_cast<std::size_t>(demo.task));
  const std::size_t A = pol->num_actions();

  // dZ_j(s) = Σ_{o in vis(s), param(o) = j} 1 / |vis(s)|.
  std::vector<double> dz;
  if (with_gradient) {
    dz.assign(K * S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      const auto vis = env.visible(s);
      for (int o : vis) {
        const int j = layout_.param_of_symbol[static_cast<std::size_t>(o)];
        if (j >= 0) dz[static_cast<std::size_t>(j) * S + s] += 1.0 / static_cast<double>(vis.size());
      }
    }
  }
  const auto& Z = model.normalizer();

  auto init = model.env().singleton_pomdp().initial_belief();
  std::vector<double> b(init.probs().begin(), init.probs().end());
  std::vector<double> db(with_gradient ? K * S : 0, 0.0);
  std::vector<double> nb(S), ndb(db.size()), L(S), dL(with_gradient ? K * S : 0);

  LikelihoodResult out;
  out.gradient.assign(K, 0.0);
  for (std::size_t t = 0; t < demo.actions.size(); ++t) {
    if (t > 0) {
      const auto a = static_cast<std::size_t>(demo.actions[t - 1]);
      std::fill(nb.begin(), nb.end(), 0.0);
      for (std::size_t s = 0; s < S; ++s) nb[env.next_state(s, a)] += b[s];
      b.swap(nb);
      if (with_gradient) {
        std::fill(ndb.begin(), ndb.end(), 0.0);
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t n = env.next_state(s, a);
          for (std::size_t j = 0; j < K; ++j) ndb[j * S + n] += db[j * S + s];
        }
        db.swap(ndb);
      }
    }

    const auto& shown = demo.observations[t];
    if (bandwidth_.accepts(shown.size())) {
      if (shown.size() > 1) throw ConfigError("weighted users interpret singleton observations only");
      const int symbol = shown.empty() ? env.nothing_symbol() : static_cast<int>(shown.front());
      const double w = model.weight(symbol);
      const int pj = layout_.param_of_symbol.at(static_cast<std::size_t>(symbol));
      const bool nothing = symbol == env.nothing_symbol();
      double total = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const auto vis = env.visible(s);
        double p = 0.0;
        if (nothing) {
          p = vis.empty() ? 1.0 : 0.0;
        } else if (std::binary_search(vis.begin(), vis.end(), symbol)) {
          p = 1.0 / static_cast<double>(vis.size());
        }
        L[s] = (p > 0.0 && Z[s] > 0.0) ? w * p / Z[s] : 0.0;
        total += L[s] * b[s];
        if (with_gradient) {
          for (std::size_t j = 0; j < K; ++j) {
            double g = 0.0;
            if (p > 0.0 && Z[s] > 0.0) {
              const double dw = static_cast<int>(j) == pj ? 1.0 : 0.0;
              g = p * (dw * Z[s] - w * dz[j * S + s]) / (Z[s] * Z[s]);
            }
            dL[j * S + s] = g;
          }
        }
      }
      if (total > 0.0) {
        if (with_gradient) {
          for (std::size_t j = 0; j < K; ++j) {
            double du_sum = 0.0;
            for (std::size_t s = 0; s < S; ++s) {
              const double du = dL[j * S + s] * b[s] + L[s] * db[j * S + s];
              ndb[j * S + s] = du;
              du_sum += du;
            }
            for (std::size_t s = 0; s < S; ++s) {
              const double post = L[s] * b[s] / total;
              ndb[j * S + s] = ndb[j * S + s] / total - post * du_sum / total;
            }
          }
          db.swap(ndb);
        }
        for (std::size_t s = 0; s < S; ++s) b[s] = L[s] * b[s] / total;
      }
    }

    const auto a = static_cast<std::size_t>(demo.actions[t]);
    if (a >= A) throw ConfigError("demonstrated action out of range");
    double prob = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      if (b[s] != 0.0) prob += pol->action_probs(s)[a] * b[s];
    }
    out.step_probs.push_back(prob);
    ++out.steps;
    if (!(prob > 0.0)) {
      out.log_likelihood = kNegInf;
      std::fill(out.gradient.begin(), out.gradient.end(), 0.0);
      return out;
    }
    out.log_likelihood += std::log(prob);
    if (with_gradient) {
      for (std::size_t j = 0; j < K; ++j) {
        double dp = 0.0;
        for (std::size_t s = 0; s < S; ++s) dp += pol->action_probs(s)[a] * db[j * S + s];
        out.gradient[j] += dp / prob;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

LanderFamily::LanderFamily(double kappa) : kappa_(kappa) {
  if (!(kappa > 0.0)) throw ConfigError("lander policy gain must be > 0");
}

std::vector<double> LanderFamily::lower_bounds() const {
  return {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
}
std::vector<double> LanderFamily::upper_bounds() const {
  return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
}

LikelihoodResult LanderFamily::log_likelihood(const std::vector<double>& theta,
                                              const Demonstration& demo, bool with_gradient) const {
  if (theta.size() != 2) throw ConfigError("lander theta must have two entries");
  const DistortedPerceptUserModel user{theta[0], theta[1]};
  LikelihoodResult out;
  out.gradient.assign(2, 0.0);
  for (std::size_t t = 0; t < demo.actions.size(); ++t) {
    const int a = demo.actions[t];
    if (a == static_cast<int>(LanderAction::kNoop)) continue;
    if (a != static_cast<int>(LanderAction::kFireLeft) && a != static_cast<int>(LanderAction::kFireRight)) {
      throw ConfigError("demonstrated lander action out of range");
    }
    if (demo.observations[t].size() != 1) throw ConfigError("lander observations hold one angle");
    const double o = demo.observations[t][0];
    const double x = kappa_ * user.percept(o);
    const bool right = a == static_cast<int>(LanderAction::kFireRight);
    const double ll = right ? log_sigmoid(x) : log_sigmoid(-x);
    out.step_probs.push_back(std::exp(ll));
    ++out.steps;
    out.log_likelihood += ll;
    if (with_gradient) {
      const double dll_dx = right ? 1.0 - sigmoid(x) : -sigmoid(x);
      const double dx0 = kappa_ * user.percept_grad_theta0(o);
      out.gradient[0] += dll_dx * dx0;
      out.gradient[1] += dll_dx * dx0 * o;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& doc) {
  OptimizerConfig c;
  c.step = doc.value("step", c.step);
  c.max_iterations = doc.value("max_iterations", c.max_iterations);
  c.gradient_tolerance = doc.value("gradient_tolerance", c.gradient_tolerance);
  c.step_tolerance = doc.value("step_tolerance", c.step_tolerance);
  c.grid_scan = doc.value("grid_scan", c.grid_scan);
  c.scan_resolution = doc.value("scan_resolution", c.scan_resolution);
  c.threads = doc.value("threads", c.threads);
  if (!(c.step > 0.0) || c.max_iterations < 0 || !(c.scan_resolution > 0.0)) {
    throw ConfigError("invalid optimizer configuration");
  }
  return c;
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"step", step},
          {"max_iterations", max_iterations},
          {"gradient_tolerance", gradient_tolerance},
          {"step_tolerance", step_tolerance},
          {"grid_scan", grid_scan},
          {"scan_resolution", scan_resolution},
          {"threads", threads}};
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json tr = nlohmann::json::array();
  for (const auto& e : trace) {
    tr.push_back({{"iteration", e.iteration},
                  {"log_likelihood", finite_or_string(e.log_likelihood)},
                  {"gradient_norm", e.gradient_norm},
                  {"step", e.step}});
  }
  return {{"v", 1},
          {"theta", theta},
          {"log_likelihood", finite_or_string(log_likelihood)},
          {"converged", converged},
          {"scan_improved", scan_improved},
          {"num_demonstrations", num_demonstrations},
          {"trace", tr}};
}

LikelihoodResult dataset_log_likelihood(const UserModelFamily& family,
                                        const std::vector<double>& theta,
                                        const std::vector<Demonstration>& dataset,
                                        bool with_gradient, unsigned threads) {
  std::vector<LikelihoodResult> parts(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    parts[i] = family.log_likelihood(theta, dataset[i], with_gradient);
  });
  // Sequential reduction keeps the sum independent of scheduling.
  LikelihoodResult total;
  total.gradient.assign(family.num_params(), 0.0);
  for (const auto& p : parts) {
    total.log_likelihood += p.log_likelihood;
    total.steps += p.steps;
    for (std::size_t j = 0; j < total.gradient.size(); ++j) total.gradient[j] += p.gradient[j];
  }
  return total;
}

namespace {

struct Ascent {
  std::vector<double> theta;
  double ll = kNegInf;  // total
  bool converged = false;
};

Ascent projected_ascent(const std::vector<Demonstration>& dataset, const UserModelFamily& family,
                        std::vector<double> theta, const OptimizerConfig& config,
                        std::vector<TraceEntry>& trace) {
  auto eval = [&](const std::vector<double>& th, bool grad) {
    return dataset_log_likelihood(family, th, dataset, grad, config.threads);
  };
  theta = family.project(std::move(theta));
  auto cur = eval(theta, true);
  const double scale = cur.steps > 0 ? 1.0 / static_cast<double>(cur.steps) : 1.0;
  Ascent out{theta, cur.log_likelihood, false};
  if (!std::isfinite(cur.log_likelihood)) return out;

  const int first = trace.empty() ? 0 : trace.back().iteration + 1;
  auto projected_gradient_norm = [&](const std::vector<double>& g) {
    std::vector<double> moved(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) moved[i] = theta[i] + g[i] * scale;
    moved = family.project(std::move(moved));
    for (std::size_t i = 0; i < theta.size(); ++i) moved[i] -= theta[i];
    return norm(moved);
  };
  trace.push_back({first, cur.log_likelihood, projected_gradient_norm(cur.gradient), 0.0});

  for (int it = 1; it <= config.max_iterations; ++it) {
    if (projected_gradient_norm(cur.gradient) < config.gradient_tolerance) {
      out.converged = true;
      break;
    }
    double alpha = config.step;
    bool accepted = false;
    std::vector<double> cand(theta.size());
    double step_norm = 0.0;
    while (true) {
      for (std::size_t i = 0; i < theta.size(); ++i) cand[i] = theta[i] + alpha * scale * cur.gradient[i];
      cand = family.project(std::move(cand));
      std::vector<double> delta(theta.size());
      for (std::size_t i = 0; i < theta.size(); ++i) delta[i] = cand[i] - theta[i];
      step_norm = norm(delta);
      if (step_norm < config.step_tolerance) break;
      const auto trial = eval(cand, false);
      if (std::isfinite(trial.log_likelihood) && trial.log_likelihood >= cur.log_likelihood) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    theta = cand;
    cur = eval(theta, true);
    trace.push_back({first + it, cur.log_likelihood, projected_gradient_norm(cur.gradient), step_norm});
  }
  out.theta = theta;
  out.ll = cur.log_likelihood;
  return out;
}

}  // namespace

FitResult fit_user_model(const std::vector<Demonstration>& dataset, const UserModelFamily& family,
                         const std::vector<double>& init, const OptimizerConfig& config) {
  if (dataset.empty()) throw ConfigError("fit_user_model: empty dataset");
  if (init.size() != family.num_params()) throw ConfigError("fit_user_model: init has wrong dimension");
  FitResult result;
  result.num_demonstrations = dataset.size();
  Ascent best = projected_ascent(dataset, family, init, config, result.trace);

  const auto lo = family.lower_bounds();
  const auto hi = family.upper_bounds();
  if (config.grid_scan && family.num_params() == 1 && std::isfinite(lo[0]) && std::isfinite(hi[0])) {
    const auto n = static_cast<int>(std::llround((hi[0] - lo[0]) / config.scan_resolution));
    std::vector<double> scan_ll(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i) {
      const double v = std::min(hi[0], lo[0] + i * config.scan_resolution);
      scan_ll[static_cast<std::size_t>(i)] =
          dataset_log_likelihood(family, {v}, dataset, false, config.threads).log_likelihood;
    }
    const auto arg = static_cast<int>(std::max_element(scan_ll.begin(), scan_ll.end()) - scan_ll.begin());
    if (scan_ll[static_cast<std::size_t>(arg)] > best.ll) {
      const double v = std::min(hi[0], lo[0] + arg * config.scan_resolution);
      Ascent polished = projected_ascent(dataset, family, {v}, config, result.trace);
      if (polished.ll >= scan_ll[static_cast<std::size_t>(arg)]) {
        best = polished;
      } else {
        best = Ascent{{v}, scan_ll[static_cast<std::size_t>(arg)], false};
      }
      result.scan_improved = true;
    }
  }
  if (!std::isfinite(best.ll)) {
    throw UnfittableError("every evaluated parameter gives the dataset zero likelihood");
  }
  result.theta = best.theta;
  result.log_likelihood = best.ll;
  result.converged = best.converged;
  return result;
}

OnlineUpdate run_online_update(const std::vector<double>& current, const Demonstration& episode,
                               std::vector<Demonstration> dataset, const UserModelFamily& family,
                               const OptimizerConfig& config) {
  if (episode.task < 0) throw ConfigError("online update needs a task-labelled episode");
  dataset.push_back(episode);
  FitResult fit = fit_user_model(dataset, family, current, config);
  return {std::move(dataset), std::move(fit)};
}

}  // namespace ase
