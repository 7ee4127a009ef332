#include "demos/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace demos {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

RewardTerms scaled(RewardTerms t, double k) {
  t.balance *= k;
  t.gait *= k;
  t.arm *= k;
  t.torque_penalty *= k;
  t.smooth_penalty *= k;
  return t;
}

// Flattens a T x E matrix into the buffer's column order t * E + e.
Eigen::VectorXd flatten_steps(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd t = m.transpose();  // E x T, column-major = t*E + e
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

double clip_norm(Eigen::VectorXd* const* parts, std::size_t count, double max_norm) {
  double sq = 0.0;
  for (std::size_t k = 0; k < count; ++k) sq += parts[k]->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (std::size_t k = 0; k < count; ++k) *parts[k] *= s;
  }
  return norm;
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

void TrainConfig::validate() const {
  require(num_envs > 0 && steps_per_env > 0, "need envs and steps per env");
  require(epochs > 0 && minibatches > 0, "need at least one epoch and minibatch");
  require(buffer_size() % minibatches == 0,
          "minibatch count " + std::to_string(minibatches) +
              " does not divide the buffer size " + std::to_string(buffer_size()));
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "GAE lambda must lie in [0, 1]");
  require(clip > 0.0, "clip range must be positive");
  require(desired_kl > 0.0, "desired KL must be positive");
  require(min_learning_rate > 0.0 && min_learning_rate <= learning_rate &&
              learning_rate <= max_learning_rate,
          "learning rate must lie within its clamp range");
  require(weight_decay >= 0.0, "weight decay must be >= 0");
  require(demos_lambda >= 0.0, "lambda must be >= 0");
  require(norm_p >= 1.0, "norm order p must be >= 1");
  require(reward_scale > 0.0, "reward scale must be positive");
  require(eta > 0.0 && eta_prime > 0.0, "decoupling thresholds must be positive");
  require(analysis_batch > 0 && analysis_envs > 0, "analysis batch must be nonempty");
}

GaeResult compute_gae(const Eigen::Ref<const Eigen::MatrixXd>& rewards,
                      const Eigen::Ref<const Eigen::MatrixXd>& values,
                      const Eigen::Ref<const Eigen::MatrixXd>& dones,
                      const Eigen::Ref<const Eigen::VectorXd>& last_values,
                      double gamma, double lambda) {
  require(rewards.rows() == values.rows() && rewards.cols() == values.cols() &&
              dones.rows() == rewards.rows() && dones.cols() == rewards.cols() &&
              last_values.size() == rewards.cols(),
          "GAE inputs are not aligned");
  const Eigen::Index steps = rewards.rows();
  GaeResult out;
  out.advantages.resize(rewards.rows(), rewards.cols());
  for (Eigen::Index e = 0; e < rewards.cols(); ++e) {
    double next_value = last_values[e];
    double next_adv = 0.0;
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const double live = 1.0 - dones(t, e);
      const double delta = rewards(t, e) + gamma * live * next_value - values(t, e);
      next_adv = delta + gamma * lambda * live * next_adv;
      out.advantages(t, e) = next_adv;
      next_value = values(t, e);
    }
  }
  out.returns = out.advantages + values;
  return out;
}

Eigen::VectorXd normalize_advantages(const Eigen::Ref<const Eigen::VectorXd>& adv) {
  require(adv.size() > 0, "cannot normalize an empty batch");
  const double mean = adv.mean();
  Eigen::VectorXd centered = adv.array() - mean;
  const double var = centered.squaredNorm() / static_cast<double>(adv.size());
  return centered / (std::sqrt(var) + 1e-12);
}

double adapt_learning_rate(double lr, double kl, double desired_kl, double lo,
                           double hi) {
  if (kl > 2.0 * desired_kl) {
    lr /= 1.5;
  } else if (kl < 0.5 * desired_kl && kl >= 0.0) {
    lr *= 1.5;
  }
  return std::clamp(lr, lo, hi);
}

Mlp make_critic(std::size_t obs_dim, const std::vector<std::size_t>& hidden,
                std::mt19937_64& rng) {
  std::vector<std::size_t> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return Mlp::orthogonal(sizes, 1.0, rng);
}

RolloutBuffer collect_rollout(const DecentralizedPolicy& policy, const Mlp& critic,
                              BranchWorld& env, Eigen::MatrixXd& obs,
                              const TrainConfig& config, std::mt19937_64& rng) {
  const std::size_t steps = config.steps_per_env;
  const std::size_t envs = env.num_envs();
  require(static_cast<std::size_t>(obs.cols()) == envs &&
              static_cast<std::size_t>(obs.rows()) == env.obs_dim(),
          "observation batch does not match the env");
  require(policy.action_dim() == env.num_motors(),
          "policy action dimension does not match the robot");

  RolloutBuffer buf;
  buf.steps = steps;
  buf.envs = envs;
  const auto n = static_cast<Eigen::Index>(steps * envs);
  buf.obs.resize(obs.rows(), n);
  buf.actions.resize(static_cast<Eigen::Index>(policy.action_dim()), n);
  buf.log_prob.resize(n);
  buf.means.resize(buf.actions.rows(), n);
  buf.log_std = policy.log_std;
  buf.values.resize(steps, envs);
  buf.rewards.resize(steps, envs);
  buf.dones.resize(steps, envs);

  const auto E = static_cast<Eigen::Index>(envs);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto col = static_cast<Eigen::Index>(t) * E;
    auto local = policy.local_observations(obs);
    auto out = policy.act(local, true, &rng);
    buf.obs.middleCols(col, E) = obs;
    buf.actions.middleCols(col, E) = out.action;
    buf.log_prob.segment(col, E) = out.log_prob;
    buf.means.middleCols(col, E) = out.mean;
    buf.values.row(t) = critic.forward(obs).row(0);

    StepResult res = env.step(out.action);
    std::vector<Eigen::Index> timed_out;
    for (std::size_t e = 0; e < envs; ++e) {
      buf.reward_sum += res.reward[e];
      buf.term_sum += res.terms[e];
      buf.rewards(t, e) = config.reward_scale * res.reward[e];
      buf.dones(t, e) = res.done[e] ? 1.0 : 0.0;
      if (res.timeout[e]) timed_out.push_back(static_cast<Eigen::Index>(e));
    }
    if (!timed_out.empty()) {
      Eigen::MatrixXd terminal(obs.rows(), static_cast<Eigen::Index>(timed_out.size()));
      for (std::size_t k = 0; k < timed_out.size(); ++k) {
        terminal.col(k) = res.terminal_obs.col(timed_out[k]);
      }
      const Eigen::MatrixXd v = critic.forward(terminal);
      for (std::size_t k = 0; k < timed_out.size(); ++k) {
        buf.rewards(t, timed_out[k]) += config.gamma * v(0, k);
      }
    }
    obs = std::move(res.obs);
  }
  buf.last_values = critic.forward(obs).row(0).transpose();
  return buf;
}

double effective_lambda(const DecentralizedPolicy& policy, const TrainConfig& config) {
  return policy.kind == PolicyKind::kDemos ? config.demos_lambda : 0.0;
}

LossTerms ppo_loss(const DecentralizedPolicy& policy, const Mlp& critic,
                   const Minibatch& batch, const TrainConfig& config,
                   Gradients* grad) {
  const Eigen::Index B = batch.obs.cols();
  require(B > 0, "empty minibatch");
  const std::size_t n = policy.num_branches();
  const auto dim = static_cast<Eigen::Index>(policy.action_dim());
  const double inv_b = 1.0 / static_cast<double>(B);

  auto local = policy.local_observations(batch.obs);
  std::vector<Mlp::Cache> caches(n);
  std::vector<Eigen::MatrixXd> raw(n);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(dim, B);
  for (std::size_t i = 0; i < n; ++i) {
    if (policy.replaced(i)) {
      raw[i] = Eigen::MatrixXd::Zero(dim, B);
      continue;
    }
    raw[i] = policy.nets[i].forward(local[i], &caches[i]);
    for (Eigen::Index m = 0; m < dim; ++m) {
      if (policy.mask.allowed(i, static_cast<std::size_t>(m))) {
        mean.row(m) += raw[i].row(m);
      }
    }
  }

  const auto stats = gaussian_log_prob_entropy(mean, policy.log_std, batch.actions);
  const Eigen::ArrayXd ratio = (stats.log_prob - batch.old_log_prob).array().exp();
  const Eigen::ArrayXd adv = batch.advantages.array();
  const Eigen::ArrayXd unclipped = ratio * adv;
  const Eigen::ArrayXd clipped =
      ratio.min(1.0 + config.clip).max(1.0 - config.clip) * adv;

  LossTerms out;
  out.surrogate = unclipped.min(clipped).mean();
  // Closed-form KL(old || new) of the diagonal Gaussians, batch mean.
  require(batch.old_mean.rows() == dim && batch.old_mean.cols() == B &&
              batch.old_log_std.size() == dim,
          "minibatch lacks the old policy distribution");
  {
    const Eigen::ArrayXd old_var = (2.0 * batch.old_log_std.array()).exp();
    const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std.array()).exp();
    const double per_sample_const =
        (policy.log_std - batch.old_log_std).sum() + 0.5 * (old_var * inv_var).sum() -
        0.5 * static_cast<double>(dim);
    const Eigen::ArrayXXd diff = (batch.old_mean - mean).array();
    out.kl = per_sample_const +
             0.5 * (diff.square().colwise() * inv_var).colwise().sum().mean();
  }
  out.entropy = stats.entropy;

  Mlp::Cache critic_cache;
  const Eigen::MatrixXd values = critic.forward(batch.obs, &critic_cache);
  const Eigen::ArrayXd verr = values.row(0).transpose().array() - batch.returns.array();
  out.value_loss = verr.square().mean();

  const double lambda = effective_lambda(policy, config);
  std::vector<Eigen::MatrixXd> pen_grad;
  out.penalty = decentralization_penalty(raw, policy.branches, config.norm_p,
                                         grad && lambda > 0.0 ? &pen_grad : nullptr)
                    .penalty;
  out.total = -out.surrogate + config.value_coef * out.value_loss -
              config.entropy_coef * out.entropy + lambda * out.penalty;
  if (!grad) return out;

  // d total / d log p per sample; the clipped branch of the min has zero
  // gradient in the ratio.
  Eigen::ArrayXd dlogp = Eigen::ArrayXd::Zero(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    if (unclipped[b] <= clipped[b]) dlogp[b] = -unclipped[b] * inv_b;
  }
  const Eigen::ArrayXd inv_std = (-policy.log_std.array()).exp();
  const Eigen::ArrayXXd z = (batch.actions - mean).array().colwise() * inv_std;
  // d log p / d mean = z / sigma; d log p / d log sigma = z^2 - 1
  Eigen::MatrixXd dmean =
      ((z.colwise() * inv_std).rowwise() * dlogp.transpose()).matrix();
  grad->log_std = ((z.square() - 1.0).rowwise() * dlogp.transpose())
                      .rowwise()
                      .sum()
                      .matrix();
  grad->log_std.array() -= config.entropy_coef;

  grad->nets.assign(n, Eigen::VectorXd());
  for (std::size_t i = 0; i < n; ++i) {
    grad->nets[i] = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(policy.nets[i].num_params()));
    if (policy.replaced(i)) continue;
    Eigen::MatrixXd draw = dmean;
    for (Eigen::Index m = 0; m < dim; ++m) {
      if (!policy.mask.allowed(i, static_cast<std::size_t>(m))) draw.row(m).setZero();
    }
    if (lambda > 0.0) draw += lambda * pen_grad[i];
    policy.nets[i].backward(caches[i], draw, grad->nets[i]);
  }

  Eigen::MatrixXd dv = (2.0 * config.value_coef * inv_b * verr).matrix().transpose();
  grad->critic = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(critic.num_params()));
  critic.backward(critic_cache, dv, grad->critic);
  return out;
}

Optimizers Optimizers::make(const DecentralizedPolicy& policy,
                            const TrainConfig& config) {
  Optimizers o;
  AdamW proto;
  proto.learning_rate = config.learning_rate;
  proto.weight_decay = config.weight_decay;
  o.nets.assign(policy.num_branches(), proto);
  o.log_std = proto;
  o.critic = proto;
  o.learning_rate = config.learning_rate;
  return o;
}

UpdateMetrics ppo_update(DecentralizedPolicy& policy, Mlp& critic,
                         Optimizers& optim, const RolloutBuffer& buffer,
                         const TrainConfig& config, std::mt19937_64& rng) {
  const std::size_t total = buffer.size();
  require(total > 0 && total % config.minibatches == 0,
          "buffer size must be a multiple of the minibatch count");
  require(buffer.advantages.size() == static_cast<Eigen::Index>(total),
          "advantages have not been computed");
  const std::size_t mb = total / config.minibatches;
  const Eigen::VectorXd adv = normalize_advantages(flatten_steps(buffer.advantages));
  const Eigen::VectorXd ret = flatten_steps(buffer.returns);

  std::vector<Eigen::Index> order(total);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  UpdateMetrics m;
  std::size_t updates = 0;
  Minibatch batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < config.minibatches; ++k) {
      const auto B = static_cast<Eigen::Index>(mb);
      batch.obs.resize(buffer.obs.rows(), B);
      batch.actions.resize(buffer.actions.rows(), B);
      batch.old_log_prob.resize(B);
      batch.old_mean.resize(buffer.means.rows(), B);
      batch.old_log_std = buffer.log_std;
      batch.advantages.resize(B);
      batch.returns.resize(B);
      for (Eigen::Index b = 0; b < B; ++b) {
        const Eigen::Index src = order[k * mb + static_cast<std::size_t>(b)];
        batch.obs.col(b) = buffer.obs.col(src);
        batch.actions.col(b) = buffer.actions.col(src);
        batch.old_log_prob[b] = buffer.log_prob[src];
        batch.old_mean.col(b) = buffer.means.col(src);
        batch.advantages[b] = adv[src];
        batch.returns[b] = ret[src];
      }

      Gradients g;
      const LossTerms loss = ppo_loss(policy, critic, batch, config, &g);
      bool finite = std::isfinite(loss.total) && g.log_std.allFinite() &&
                    g.critic.allFinite();
      for (const auto& gn : g.nets) finite = finite && gn.allFinite();
      if (!finite) {
        m.aborted = true;
        m.learning_rate = optim.learning_rate;
        return m;
      }

      optim.learning_rate =
          adapt_learning_rate(optim.learning_rate, loss.kl, config.desired_kl,
                              config.min_learning_rate, config.max_learning_rate);

      std::vector<Eigen::VectorXd*> actor;
      for (auto& gn : g.nets) actor.push_back(&gn);
      actor.push_back(&g.log_std);
      clip_norm(actor.data(), actor.size(), config.max_grad_norm);
      Eigen::VectorXd* critic_part = &g.critic;
      clip_norm(&critic_part, 1, config.max_grad_norm);

      for (std::size_t i = 0; i < policy.num_branches(); ++i) {
        if (policy.replaced(i)) continue;
        optim.nets[i].learning_rate = optim.learning_rate;
        optim.nets[i].step(policy.nets[i].params(), g.nets[i]);
      }
      optim.log_std.learning_rate = optim.learning_rate;
      optim.log_std.step(policy.log_std, g.log_std);
      optim.critic.learning_rate = optim.learning_rate;
      optim.critic.step(critic.params(), g.critic);

      m.surrogate += loss.surrogate;
      m.value_loss += loss.value_loss;
      m.entropy += loss.entropy;
      m.penalty += loss.penalty;
      m.kl += loss.kl;
      ++updates;
    }
  }
  const double inv = 1.0 / static_cast<double>(updates);
  m.surrogate *= inv;
  m.value_loss *= inv;
  m.entropy *= inv;
  m.penalty *= inv;
  m.kl *= inv;
  m.learning_rate = optim.learning_rate;
  return m;
}

namespace {

struct Trainer {
  const Robot& robot;
  const TrainConfig& config;
  BranchWorld env;
  DecentralizedPolicy policy;
  Mlp critic;
  Optimizers optim;
  std::mt19937_64 rng;
  Eigen::MatrixXd obs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Trainer(const Robot& r, EnvConfig env_config, const TrainConfig& c, PolicyKind mode)
      : robot(r), config(c), env(r, [&] {
          env_config.num_envs = c.num_envs;
          return env_config;
        }()) {
    std::mt19937_64 init_rng(config.seed);
    policy = make_policy(mode, robot.branches, config.policy, init_rng);
    critic = make_critic(env.obs_dim(), config.critic_hidden, init_rng);
    optim = Optimizers::make(policy, config);
    rng = derived_rng(config.seed, 1);
    obs = env.reset(config.seed);
  }

  IterationMetrics iterate(std::size_t iteration, TrainResult& result) {
    RolloutBuffer buf = collect_rollout(policy, critic, env, obs, config, rng);
    GaeResult gae = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_values,
                                config.gamma, config.gae_lambda);
    buf.advantages = std::move(gae.advantages);
    buf.returns = std::move(gae.returns);

    if (policy.num_branches() > 1) {
      auto local = policy.local_observations(buf.obs);
      result.connections.push_back(
          {iteration, connection_matrix(policy, local, config.norm_p).relative});
    }

    IterationMetrics m;
    m.iteration = iteration;
    const double inv = 1.0 / static_cast<double>(buf.size());
    m.mean_reward = buf.reward_sum * inv;
    m.mean_terms = scaled(buf.term_sum, inv);
    m.update = ppo_update(policy, critic, optim, buf, config, rng);
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                start)
                      .count();
    return m;
  }
};

}  // namespace

TrainResult train(const Robot& robot, const EnvConfig& env_config,
                  const TrainConfig& config, PolicyKind mode,
                  const IterationCallback& on_iteration) {
  config.validate();
  Trainer trainer(robot, env_config, config, mode);
  TrainResult result;

  auto run = [&](std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      IterationMetrics m = trainer.iterate(result.iterations, result);
      ++result.iterations;
      result.history.push_back(m);
      if (on_iteration) {
        const ConnectionRecord* rec =
            !result.connections.empty() &&
                    result.connections.back().iteration == m.iteration
                ? &result.connections.back()
                : nullptr;
        on_iteration({m, rec, trainer.policy, trainer.critic});
      }
      if (m.update.aborted) {
        throw std::runtime_error("non-finite loss at iteration " +
                                 std::to_string(m.iteration));
      }
    }
  };
  run(config.iterations);

  result.unmasked = trainer.policy;
  if (mode == PolicyKind::kDemos) {
    EnvConfig analysis_env = env_config;
    const Eigen::MatrixXd batch = collect_analysis_batch(
        trainer.policy, robot, analysis_env, config.analysis_batch,
        config.analysis_envs, config.seed ^ 0xa5a5a5a5ULL);
    auto local = trainer.policy.local_observations(batch);
    result.analysis = connection_matrix(trainer.policy, local, config.norm_p);
    result.decoupling = apply_branch_decoupling(trainer.policy, *result.analysis,
                                                config.eta);
    trainer.policy.mask = result.decoupling->mask;
    if (config.motor_level) {
      result.motor_decoupling = apply_motor_decoupling(
          trainer.policy, *result.analysis, config.eta_prime);
      trainer.policy.mask = result.motor_decoupling->mask;
    }
    run(config.finetune_iterations);
  }
  result.policy = trainer.policy;
  result.critic = trainer.critic;
  return result;
}

Eigen::MatrixXd collect_analysis_batch(const DecentralizedPolicy& policy,
                                       const Robot& robot, EnvConfig env_config,
                                       std::size_t batch, std::size_t envs,
                                       std::uint64_t seed) {
  require(batch > 0 && envs > 0, "analysis batch must be nonempty");
  env_config.num_envs = envs;
  BranchWorld env(robot, env_config);
  Eigen::MatrixXd obs = env.reset(seed);
  const std::size_t steps = env_config.episode_steps();
  const std::size_t stride = std::max<std::size_t>(1, steps * envs / batch);
  const std::size_t kept = (steps + stride - 1) / stride;
  const auto E = static_cast<Eigen::Index>(envs);
  Eigen::MatrixXd out(obs.rows(), static_cast<Eigen::Index>(kept) * E);
  std::size_t col = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (t % stride == 0) {
      out.middleCols(static_cast<Eigen::Index>(col), E) = obs;
      col += envs;
    }
    obs = env.step(policy.mean_action(obs)).obs;
  }
  return out;
}

EvalResult evaluate(const DecentralizedPolicy& policy, const Robot& robot,
                    EnvConfig env_config,
                    const std::optional<MalfunctionSpec>& malfunction,
                    std::size_t episodes, std::uint64_t seed) {
  require(episodes > 0, "need at least one evaluation episode");
  require(policy.action_dim() == robot.num_motors(),
          "policy action dimension does not match the robot");
  env_config.num_envs = episodes;
  BranchWorld env(robot, env_config);
  env.set_malfunction(malfunction);
  Eigen::MatrixXd obs = env.reset(seed);

  EvalResult out;
  out.episodes = episodes;
  out.returns.assign(episodes, 0.0);
  std::vector<RewardTerms> terms(episodes);
  std::vector<std::uint8_t> finished(episodes, 0);
  std::size_t remaining = episodes;
  while (remaining > 0) {
    StepResult res = env.step(policy.mean_action(obs));
    for (std::size_t e = 0; e < episodes; ++e) {
      if (finished[e]) continue;
      out.returns[e] += res.reward[e];
      terms[e] += res.terms[e];
      if (res.done[e]) {
        finished[e] = 1;
        --remaining;
      }
    }
    obs = std::move(res.obs);
  }
  const double inv = 1.0 / static_cast<double>(episodes);
  double mean = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    mean += out.returns[e];
    out.mean_terms += scaled(terms[e], inv);
  }
  mean *= inv;
  double var = 0.0;
  for (double r : out.returns) var += (r - mean) * (r - mean);
  out.mean_return = mean;
  out.std_return = std::sqrt(var * inv);
  return out;
}

}  // namespace demos
