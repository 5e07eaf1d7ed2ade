#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "ase/common.hpp"
#include "ase/grid_nav.hpp"
#include "ase/soft_q.hpp"
#include "ase/user_models.hpp"

namespace ase {

/// One episode as seen by the user: the observations actually shown, the
/// actions taken, and the task the user was pursuing.
struct Demonstration {
  std::string episode_id;
  std::string env;
  std::string condition;
  std::int64_t task = -1;
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
  /// Free-form extras (start state, seeds, labels).
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Demonstration from_json(const nlohmann::json& doc);
};

std::vector<Demonstration> read_demonstrations(const std::filesystem::path& path);
void write_demonstrations(const std::filesystem::path& path, const std::vector<Demonstration>& demos);

struct LikelihoodResult {
  double log_likelihood = 0.0;
  std::vector<double> gradient;
  /// Probability of each demonstrated action under the model (modeled
  /// steps only).
  std::vector<double> step_probs;
  std::size_t steps = 0;
};

/// A parameterized user-model family whose demonstrations can be scored.
class UserModelFamily {
 public:
  virtual ~UserModelFamily() = default;
  virtual std::string name() const = 0;
  virtual std::size_t num_params() const = 0;
  virtual std::vector<double> lower_bounds() const = 0;
  virtual std::vector<double> upper_bounds() const = 0;
  /// log p(actions | observations, task; θ) and, if requested, its gradient.
  /// A zero-probability action yields -infinity (not an error).
  virtual LikelihoodResult log_likelihood(const std::vector<double>& theta,
                                          const Demonstration& demo, bool with_gradient) const = 0;

  std::vector<double> project(std::vector<double> theta) const;
};

/// Weighted-observation grid users acting through hindsight Boltzmann
/// policies: p(a_t) = Σ_s π(a_t | s; goal) b_θ(s | õ_0:t, a_0:t-1).
class NavFamily : public UserModelFamily {
 public:
  NavFamily(std::shared_ptr<const GridNavEnv> env, WeightLayout layout,
            std::shared_ptr<QTableCache> q_cache, double beta,
            BandwidthUserModel bandwidth = {});

  std::string name() const override { return "grid-nav"; }
  std::size_t num_params() const override { return layout_.num_params; }
  std::vector<double> lower_bounds() const override;
  std::vector<double> upper_bounds() const override;
  LikelihoodResult log_likelihood(const std::vector<double>& theta, const Demonstration& demo,
                                  bool with_gradient) const override;

  const GridNavEnv& env() const { return *env_; }
  const WeightLayout& layout() const { return layout_; }
  double beta() const { return beta_; }
  std::shared_ptr<const BoltzmannPolicy> policy(std::size_t goal) const;

 private:
  std::shared_ptr<const GridNavEnv> env_;
  WeightLayout layout_;
  std::shared_ptr<QTableCache> q_cache_;
  double beta_;
  BandwidthUserModel bandwidth_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::shared_ptr<const BoltzmannPolicy>> policies_;
};

/// Lander users with logistic percepts acting through the sigmoid policy:
/// p(fire-right) = σ(κ ŝ_θ(õ_t)). No-op steps carry no information.
class LanderFamily : public UserModelFamily {
 public:
  explicit LanderFamily(double kappa);

  std::string name() const override { return "tilt-lander"; }
  std::size_t num_params() const override { return 2; }
  std::vector<double> lower_bounds() const override;
  std::vector<double> upper_bounds() const override;
  LikelihoodResult log_likelihood(const std::vector<double>& theta, const Demonstration& demo,
                                  bool with_gradient) const override;
  double kappa() const { return kappa_; }

 private:
  double kappa_;
};

struct OptimizerConfig {
  /// Fixed ascent step on the mean per-action log-likelihood; halved until
  /// the objective does not decrease.
  double step = 1.0;
  int max_iterations = 2000;
  double gradient_tolerance = 1e-6;
  double step_tolerance = 1e-9;
  /// Dense scan over [lower, upper] for one-parameter families.
  bool grid_scan = true;
  double scan_resolution = 0.01;
  /// Worker threads for the per-demonstration map (0: hardware).
  unsigned threads = 0;

  static OptimizerConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct TraceEntry {
  int iteration = 0;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;
};

struct FitResult {
  std::vector<double> theta;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  std::vector<TraceEntry> trace;
  bool converged = false;
  /// True when the grid scan found a better point than gradient ascent.
  bool scan_improved = false;
  std::size_t num_demonstrations = 0;

  nlohmann::json to_json() const;
};

class UnfittableError : public Error {
 public:
  using Error::Error;
};

/// Sum of per-demonstration log-likelihoods (and gradients), computed in
/// parallel.
LikelihoodResult dataset_log_likelihood(const UserModelFamily& family,
                                        const std::vector<double>& theta,
                                        const std::vector<Demonstration>& dataset,
                                        bool with_gradient, unsigned threads = 0);

/// Maximum-likelihood θ by projected gradient ascent (plus a grid scan in
/// 1-D). Returns the best point found.
FitResult fit_user_model(const std::vector<Demonstration>& dataset, const UserModelFamily& family,
                         const std::vector<double>& init, const OptimizerConfig& config = {});

struct OnlineUpdate {
  std::vector<Demonstration> dataset;
  FitResult fit;
};

/// Appends `episode` and refits warm-started from `current`.
OnlineUpdate run_online_update(const std::vector<double>& current, const Demonstration& episode,
                               std::vector<Demonstration> dataset, const UserModelFamily& family,
                               const OptimizerConfig& config = {});

}  // namespace ase
