#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "demos/envsim.hpp"
#include "demos/nn.hpp"
#include "demos/policy.hpp"

namespace demos {

struct TrainConfig {
  std::size_t num_envs = 256;
  std::size_t steps_per_env = 24;
  std::size_t epochs = 5;
  std::size_t minibatches = 4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double entropy_coef = 0.005;
  double desired_kl = 0.01;
  double learning_rate = 5e-4;
  double min_learning_rate = 1e-6;
  double max_learning_rate = 1e-2;
  double weight_decay = 0.01;
  double demos_lambda = 0.01;
  double norm_p = 1.0;
  double value_coef = 1.0;
  double max_grad_norm = 1.0;
  /// Rewards are multiplied by this before entering returns and the critic.
  /// Reported rewards are always unscaled.
  double reward_scale = 0.02;
  std::size_t iterations = 300;
  std::uint64_t seed = 0;
  PolicyInit policy;
  std::vector<std::size_t> critic_hidden{128, 128};

  // post-training stage
  double eta = 0.04;
  bool motor_level = false;
  double eta_prime = 0.04;
  std::size_t analysis_batch = 4096;
  std::size_t analysis_envs = 64;
  std::size_t finetune_iterations = 0;

  std::size_t buffer_size() const { return num_envs * steps_per_env; }
  std::size_t minibatch_size() const { return buffer_size() / minibatches; }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// T x E layout: row t is the policy step, column e the env.
struct RolloutBuffer {
  std::size_t steps = 0;
  std::size_t envs = 0;
  Eigen::MatrixXd obs;        // obs_dim x (T*E), column t*E + e
  Eigen::MatrixXd actions;    // |A| x (T*E)
  Eigen::VectorXd log_prob;   // T*E
  Eigen::MatrixXd means;      // |A| x (T*E), policy mean at collection time
  Eigen::VectorXd log_std;    // policy log std at collection time
  Eigen::MatrixXd values;     // T x E
  Eigen::MatrixXd rewards;    // T x E, scaled, with timeout bootstrap added
  Eigen::MatrixXd dones;      // T x E, 1 where the episode ended
  Eigen::VectorXd last_values;  // V(s_T) per env
  Eigen::MatrixXd advantages;   // T x E
  Eigen::MatrixXd returns;      // T x E

  // unscaled reward bookkeeping for metrics
  double reward_sum = 0.0;
  RewardTerms term_sum;

  std::size_t size() const { return steps * envs; }
};

struct GaeResult {
  Eigen::MatrixXd advantages;
  Eigen::MatrixXd returns;
};

/// delta_t = r_t + gamma (1 - done_t) V_{t+1} - V_t,
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, returns = A + V.
/// `last_values` is V after the final row.
GaeResult compute_gae(const Eigen::Ref<const Eigen::MatrixXd>& rewards,
                      const Eigen::Ref<const Eigen::MatrixXd>& values,
                      const Eigen::Ref<const Eigen::MatrixXd>& dones,
                      const Eigen::Ref<const Eigen::VectorXd>& last_values,
                      double gamma, double lambda);

/// Zero mean, unit (population) variance.
Eigen::VectorXd normalize_advantages(const Eigen::Ref<const Eigen::VectorXd>& adv);

/// Desired-KL schedule: divide by 1.5 above 2x target, multiply by 1.5 below
/// half the target, clamp to [lo, hi].
double adapt_learning_rate(double lr, double kl, double desired_kl, double lo,
                           double hi);

Mlp make_critic(std::size_t obs_dim, const std::vector<std::size_t>& hidden,
                std::mt19937_64& rng);

/// Rolls `config.steps_per_env` stochastic steps. `obs` holds the current
/// observation batch and is advanced in place.
RolloutBuffer collect_rollout(const DecentralizedPolicy& policy, const Mlp& critic,
                              BranchWorld& env, Eigen::MatrixXd& obs,
                              const TrainConfig& config, std::mt19937_64& rng);

struct Minibatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::VectorXd old_log_prob;
  Eigen::MatrixXd old_mean;
  Eigen::VectorXd old_log_std;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

struct LossTerms {
  double surrogate = 0.0;  // clipped surrogate objective (maximized)
  double value_loss = 0.0;
  double entropy = 0.0;
  double penalty = 0.0;    // decentralization penalty (J_de = -penalty)
  double kl = 0.0;         // mean(log p_old - log p_new)
  double total = 0.0;      // minimized
};

struct Gradients {
  std::vector<Eigen::VectorXd> nets;
  Eigen::VectorXd log_std;
  Eigen::VectorXd critic;
};

/// Effective decentralization weight: lambda for DEMOS, 0 otherwise.
double effective_lambda(const DecentralizedPolicy& policy, const TrainConfig& config);

/// total = -surrogate + value_coef * value_loss - entropy_coef * entropy
///         + lambda * penalty, with its exact gradient when `grad` is given.
LossTerms ppo_loss(const DecentralizedPolicy& policy, const Mlp& critic,
                   const Minibatch& batch, const TrainConfig& config,
                   Gradients* grad = nullptr);

struct Optimizers {
  std::vector<AdamW> nets;
  AdamW log_std;
  AdamW critic;
  double learning_rate = 5e-4;

  static Optimizers make(const DecentralizedPolicy& policy, const TrainConfig& config);
};

struct UpdateMetrics {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double penalty = 0.0;
  double kl = 0.0;
  double learning_rate = 0.0;
  bool aborted = false;
};

UpdateMetrics ppo_update(DecentralizedPolicy& policy, Mlp& critic,
                         Optimizers& optim, const RolloutBuffer& buffer,
                         const TrainConfig& config, std::mt19937_64& rng);

struct IterationMetrics {
  std::size_t iteration = 0;
  double mean_reward = 0.0;  // mean unscaled per-step reward of the rollout
  RewardTerms mean_terms;    // per-step means
  UpdateMetrics update;
  double wall_time = 0.0;  // seconds since training start
};

struct ConnectionRecord {
  std::size_t iteration = 0;
  Eigen::MatrixXd relative;
};

struct TrainResult {
  DecentralizedPolicy policy;    // final policy (masked for DEMOS)
  DecentralizedPolicy unmasked;  // before the post-training stage
  Mlp critic;
  std::vector<IterationMetrics> history;
  std::vector<ConnectionRecord> connections;
  std::optional<ConnectionMatrix> analysis;
  std::optional<DecouplingResult> decoupling;
  std::optional<DecouplingResult> motor_decoupling;
  std::size_t iterations = 0;
};

/// What the per-iteration callback sees. `connections` is null when the
/// policy has a single branch.
struct IterationView {
  const IterationMetrics& metrics;
  const ConnectionRecord* connections;
  const DecentralizedPolicy& policy;
  const Mlp& critic;
};
using IterationCallback = std::function<void(const IterationView&)>;

/// Full pipeline: branch division (from `robot`), PPO iterations, and for
/// DEMOS the post-training connection analysis and decoupling.
TrainResult train(const Robot& robot, const EnvConfig& env_config,
                  const TrainConfig& config, PolicyKind mode,
                  const IterationCallback& on_iteration = {});

/// Deterministic rollout batch of global observations for connection
/// analysis: full episodes on `envs` parallel envs, keeping every k-th step
/// so that at least `batch` samples are returned.
Eigen::MatrixXd collect_analysis_batch(
    const DecentralizedPolicy& policy, const Robot& robot, EnvConfig env_config,
    std::size_t batch, std::size_t envs, std::uint64_t seed);

struct EvalResult {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  RewardTerms mean_terms;  // per-episode sums, averaged over episodes
  std::vector<double> returns;
};

/// Deterministic (a = mean) rollout of `episodes` full episodes in parallel.
EvalResult evaluate(const DecentralizedPolicy& policy, const Robot& robot,
                    EnvConfig env_config,
                    const std::optional<MalfunctionSpec>& malfunction,
                    std::size_t episodes, std::uint64_t seed);

}  // namespace demos
