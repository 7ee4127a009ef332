#include "demos/policy.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace demos {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool same_structure(const BranchSet& a, const BranchSet& b) {
  if (a.motor_names != b.motor_names || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].motors != b[i].motors) return false;
  }
  return true;
}

std::string edge_name(const BranchSet& branches, std::size_t from,
                      std::size_t to) {
  std::ostringstream out;
  out << "edge (" << from + 1 << "," << to + 1 << ") " << branches.label(from)
      << " -> " << branches.label(to);
  return out.str();
}

}  // namespace

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kDemos: return "demos";
    case PolicyKind::kCentralized: return "centralized";
    case PolicyKind::kLocalActors: return "local_actors";
  }
  return "demos";
}

PolicyKind parse_policy_kind(const std::string& text) {
  if (text == "demos") return PolicyKind::kDemos;
  if (text == "centralized") return PolicyKind::kCentralized;
  if (text == "local_actors") return PolicyKind::kLocalActors;
  throw std::invalid_argument("unknown mode '" + text +
                              "' (expected demos, centralized or local_actors)");
}

std::string to_string(ScriptedController::Kind kind) {
  return kind == ScriptedController::Kind::kHoldPose ? "hold" : "swing";
}

ScriptedController::Kind parse_controller_kind(const std::string& text) {
  if (text == "hold") return ScriptedController::Kind::kHoldPose;
  if (text == "swing") return ScriptedController::Kind::kSwing;
  throw std::invalid_argument("unknown controller '" + text +
                              "' (expected hold or swing)");
}

DecouplingMask::DecouplingMask(const BranchSet& branches)
    : rows_(branches.size()),
      cols_(branches.num_motors()),
      bits_(rows_ * cols_, 1),
      own_(rows_ * cols_, 0) {
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t m : branches[i].motors) own_[i * cols_ + m] = 1;
  }
}

DecouplingMask DecouplingMask::block_diagonal(const BranchSet& branches) {
  DecouplingMask mask(branches);
  mask.bits_ = mask.own_;
  return mask;
}

bool DecouplingMask::clear(std::size_t branch, std::size_t motor) {
  const std::size_t k = branch * cols_ + motor;
  if (own_.at(k)) {
    throw std::logic_error("cannot cut branch " + std::to_string(branch + 1) +
                           " from its own motor " + std::to_string(motor));
  }
  const bool was = bits_[k] != 0;
  bits_[k] = 0;
  return was;
}

void DecouplingMask::set(std::size_t branch, std::size_t motor, bool value) {
  if (value) {
    bits_.at(branch * cols_ + motor) = 1;
  } else {
    clear(branch, motor);
  }
}

std::size_t DecouplingMask::cross_connections() const {
  std::size_t count = 0;
  for (std::size_t k = 0; k < bits_.size(); ++k) {
    if (bits_[k] && !own_[k]) ++count;
  }
  return count;
}

void DecouplingMask::validate() const {
  for (std::size_t k = 0; k < bits_.size(); ++k) {
    if (own_[k] && !bits_[k]) {
      throw std::logic_error("mask clears an own-branch motor");
    }
  }
  for (std::size_t m = 0; m < cols_; ++m) {
    bool driven = false;
    for (std::size_t i = 0; i < rows_; ++i) driven |= bits_[i * cols_ + m] != 0;
    if (!driven) {
      throw std::logic_error("motor " + std::to_string(m) + " has no driver");
    }
  }
}

Eigen::VectorXd ScriptedController::act(
    const Eigen::Ref<const Eigen::VectorXd>& local_obs, const Branch& branch,
    std::size_t num_motors) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_motors));
  if (!branch.owns(lead_motor)) return out;
  double target = value;
  if (kind == Kind::kSwing) {
    const double phase = std::atan2(local_obs[3], local_obs[4]);
    target = value * std::sin(phase);
  }
  out[static_cast<Eigen::Index>(lead_motor)] = target / action_scale;
  return out;
}

std::vector<Eigen::MatrixXd> DecentralizedPolicy::local_observations(
    const Eigen::Ref<const Eigen::MatrixXd>& global) const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(num_branches());
  for (std::size_t i = 0; i < num_branches(); ++i) {
    out.push_back(layout.slice_batch(global, i));
  }
  return out;
}

std::vector<Eigen::MatrixXd> DecentralizedPolicy::raw_outputs(
    std::span<const Eigen::MatrixXd> local_obs) const {
  require(local_obs.size() == num_branches(),
          "expected one observation batch per branch");
  std::vector<Eigen::MatrixXd> raw(num_branches());
  for (std::size_t i = 0; i < num_branches(); ++i) {
    require(static_cast<std::size_t>(local_obs[i].rows()) == layout.local_dim(i),
            "branch " + std::to_string(i + 1) + " observation has " +
                std::to_string(local_obs[i].rows()) + " rows, expected " +
                std::to_string(layout.local_dim(i)));
    if (replaced(i)) {
      raw[i] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(action_dim()),
                                     local_obs[i].cols());
    } else {
      raw[i] = nets[i].forward(local_obs[i]);
    }
  }
  return raw;
}

DecentralizedPolicy::Output DecentralizedPolicy::act(
    std::span<const Eigen::MatrixXd> local_obs, bool stochastic,
    std::mt19937_64* rng) const {
  Output out;
  out.raw = raw_outputs(local_obs);
  const Eigen::Index batch = local_obs.empty() ? 0 : local_obs[0].cols();
  const Eigen::Index dim = static_cast<Eigen::Index>(action_dim());
  out.mean = Eigen::MatrixXd::Zero(dim, batch);
  out.branch_actions.resize(num_branches());
  for (std::size_t i = 0; i < num_branches(); ++i) {
    require(local_obs[i].cols() == batch, "branch batches differ in size");
    Eigen::MatrixXd a;
    if (replaced(i)) {
      a.resize(dim, batch);
      for (Eigen::Index c = 0; c < batch; ++c) {
        a.col(c) = replacements[i]->act(local_obs[i].col(c), branches[i],
                                        action_dim());
      }
    } else {
      a = out.raw[i];
      for (std::size_t m = 0; m < action_dim(); ++m) {
        if (!mask.allowed(i, m)) a.row(static_cast<Eigen::Index>(m)).setZero();
      }
    }
    out.mean += a;
    out.branch_actions[i] = std::move(a);
  }
  if (stochastic) {
    require(rng != nullptr, "stochastic act needs a random generator");
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::VectorXd std_dev = log_std.array().exp();
    out.action.resize(dim, batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
      for (Eigen::Index d = 0; d < dim; ++d) {
        out.action(d, c) = out.mean(d, c) + std_dev[d] * normal(*rng);
      }
    }
  } else {
    out.action = out.mean;
  }
  auto stats = gaussian_log_prob_entropy(out.mean, log_std, out.action);
  out.log_prob = std::move(stats.log_prob);
  out.entropy = stats.entropy;
  return out;
}

Eigen::MatrixXd DecentralizedPolicy::mean_action(
    const Eigen::Ref<const Eigen::MatrixXd>& global) const {
  auto local = local_observations(global);
  return act(local, false).mean;
}

void DecentralizedPolicy::validate() const {
  require(nets.size() == num_branches(), "one net per branch required");
  require(replacements.size() == num_branches(),
          "replacement table must cover every branch");
  require(static_cast<std::size_t>(log_std.size()) == action_dim(),
          "log_std must match the action dimension");
  require(mask.num_branches() == num_branches() &&
              mask.num_motors() == action_dim(),
          "mask shape does not match the policy");
  for (std::size_t i = 0; i < num_branches(); ++i) {
    require(nets[i].input_dim() == layout.local_dim(i),
            "net " + std::to_string(i + 1) + " input does not match its slice");
    require(nets[i].output_dim() == action_dim(),
            "net " + std::to_string(i + 1) + " must emit the global action");
  }
  mask.validate();
}

DecentralizedPolicy make_policy(PolicyKind kind, const BranchSet& robot_branches,
                                const PolicyInit& init, std::mt19937_64& rng) {
  DecentralizedPolicy policy;
  policy.kind = kind;
  policy.branches = kind == PolicyKind::kCentralized
                        ? single_branch(robot_branches.num_motors(),
                                        robot_branches.motor_names)
                        : robot_branches;
  policy.layout = ObservationLayout(policy.branches);
  for (std::size_t i = 0; i < policy.num_branches(); ++i) {
    std::vector<std::size_t> sizes{policy.layout.local_dim(i)};
    sizes.insert(sizes.end(), init.hidden.begin(), init.hidden.end());
    sizes.push_back(policy.action_dim());
    policy.nets.push_back(Mlp::orthogonal(sizes, init.output_gain, rng));
  }
  policy.log_std = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(policy.action_dim()), init.log_std);
  policy.mask = kind == PolicyKind::kLocalActors
                    ? DecouplingMask::block_diagonal(policy.branches)
                    : DecouplingMask(policy.branches);
  policy.replacements.resize(policy.num_branches());
  policy.validate();
  return policy;
}

DecentralizedPolicy make_baseline(PolicyKind kind, const BranchSet& robot_branches,
                                  const PolicyInit& init, std::mt19937_64& rng) {
  require(kind != PolicyKind::kDemos, "make_baseline takes a baseline kind");
  return make_policy(kind, robot_branches, init, rng);
}

PenaltyResult decentralization_penalty(std::span<const Eigen::MatrixXd> raw,
                                       const BranchSet& branches, double p,
                                       std::vector<Eigen::MatrixXd>* grad) {
  require(p >= 1.0, "norm order p must be >= 1");
  require(raw.size() == branches.size(), "one output batch per branch required");
  const Eigen::Index batch = raw.empty() ? 0 : raw[0].cols();
  require(batch > 0, "decentralization penalty needs a nonempty batch");
  if (grad) {
    grad->resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      (*grad)[i] = Eigen::MatrixXd::Zero(raw[i].rows(), raw[i].cols());
    }
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& comp = branches[i].complement;
    if (comp.empty()) continue;
    for (Eigen::Index c = 0; c < batch; ++c) {
      double norm = 0.0;
      if (p == 1.0) {
        for (std::size_t m : comp) norm += std::abs(raw[i](m, c));
      } else {
        double acc = 0.0;
        for (std::size_t m : comp) acc += std::pow(std::abs(raw[i](m, c)), p);
        norm = std::pow(acc, 1.0 / p);
      }
      total += norm;
      if (!grad || norm == 0.0) continue;
      for (std::size_t m : comp) {
        const double y = raw[i](m, c);
        double g = 0.0;
        if (p == 1.0) {
          g = (y > 0.0) - (y < 0.0);
        } else if (y != 0.0) {
          g = std::pow(std::abs(y) / norm, p - 1.0) * ((y > 0.0) - (y < 0.0));
        }
        (*grad)[i](m, c) = g * inv_batch;
      }
    }
  }
  return {total * inv_batch};
}

PenaltyResult decentralization_loss(const DecentralizedPolicy& policy,
                                    std::span<const Eigen::MatrixXd> local_obs,
                                    double p) {
  auto raw = policy.raw_outputs(local_obs);
  return decentralization_penalty(raw, policy.branches, p);
}

bool ConnectionMatrix::undefined(std::size_t i, std::size_t j) const {
  return std::isnan(relative(static_cast<Eigen::Index>(i),
                             static_cast<Eigen::Index>(j)));
}

ConnectionMatrix connection_matrix(std::span<const Eigen::MatrixXd> branch_actions,
                                   const BranchSet& branches, double p) {
  require(p >= 1.0, "norm order p must be >= 1");
  require(branch_actions.size() == branches.size(),
          "one action batch per branch required");
  const std::size_t n = branches.size();
  const Eigen::Index batch = n == 0 ? 0 : branch_actions[0].cols();
  require(batch > 0, "connection strength needs a nonempty batch");
  const double inv_batch = 1.0 / static_cast<double>(batch);

  ConnectionMatrix cm;
  cm.p = p;
  cm.samples = static_cast<std::size_t>(batch);
  cm.strength = Eigen::MatrixXd::Zero(n, n);
  cm.motor = Eigen::MatrixXd::Zero(n, branches.num_motors());
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::MatrixXd& a = branch_actions[i];
    cm.motor.row(i) = a.cwiseAbs().rowwise().sum().transpose() * inv_batch;
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (Eigen::Index c = 0; c < batch; ++c) {
        double acc = 0.0;
        if (p == 1.0) {
          for (std::size_t m : branches[j].motors) acc += std::abs(a(m, c));
          sum += acc;
        } else {
          for (std::size_t m : branches[j].motors) {
            acc += std::pow(std::abs(a(m, c)), p);
          }
          sum += std::pow(acc, 1.0 / p);
        }
      }
      cm.strength(i, j) = sum * inv_batch;
    }
  }
  cm.relative.resize(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double own = cm.strength(j, j);
    for (std::size_t i = 0; i < n; ++i) {
      cm.relative(i, j) = own > 0.0 ? cm.strength(i, j) / own
                                    : std::numeric_limits<double>::quiet_NaN();
    }
  }
  cm.motor_normalizer = Eigen::VectorXd::Zero(branches.num_motors());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m : branches[i].motors) {
      cm.motor_normalizer[m] += cm.motor(i, m);
    }
  }
  return cm;
}

ConnectionMatrix connection_matrix(const DecentralizedPolicy& policy,
                                   std::span<const Eigen::MatrixXd> local_obs,
                                   double p) {
  auto out = policy.act(local_obs, false);
  return connection_matrix(out.branch_actions, policy.branches, p);
}

DecouplingResult apply_branch_decoupling(const DecentralizedPolicy& policy,
                                         const ConnectionMatrix& connections,
                                         double eta) {
  require(eta > 0.0, "threshold eta must be positive");
  const std::size_t n = policy.num_branches();
  require(static_cast<std::size_t>(connections.strength.rows()) == n,
          "connection matrix does not match the policy");
  DecouplingResult result{policy.mask, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool undefined = connections.undefined(i, j);
      if (undefined) result.undefined.emplace_back(i, j);
      if (!undefined && !(connections.relative(i, j) < eta)) continue;
      for (std::size_t m : policy.branches[j].motors) {
        if (policy.branches[i].owns(m)) continue;
        if (result.mask.clear(i, m)) result.cleared.push_back({i, m});
      }
    }
  }
  result.mask.validate();
  return result;
}

DecouplingResult apply_motor_decoupling(const DecentralizedPolicy& policy,
                                        const ConnectionMatrix& connections,
                                        double eta_prime) {
  require(eta_prime > 0.0, "threshold eta' must be positive");
  const std::size_t n = policy.num_branches();
  require(static_cast<std::size_t>(connections.motor.rows()) == n,
          "connection matrix does not match the policy");
  DecouplingResult result{policy.mask, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < policy.action_dim(); ++m) {
      if (policy.branches[i].owns(m)) continue;
      const double norm = connections.motor_normalizer[m];
      if (norm == 0.0) {
        result.undefined.emplace_back(i, m);
        continue;
      }
      if (connections.motor(i, m) / norm < eta_prime) {
        if (result.mask.clear(i, m)) result.cleared.push_back({i, m});
      }
    }
  }
  result.mask.validate();
  return result;
}

DecentralizedPolicy compose(std::span<const PolicyFragment> fragments,
                            const std::map<std::size_t, ScriptedController>& replacements) {
  require(!fragments.empty() && fragments[0].source != nullptr,
          "composition needs at least one retained fragment");
  const DecentralizedPolicy& base = *fragments[0].source;
  const std::size_t n = base.num_branches();
  for (const auto& f : fragments) {
    require(f.source != nullptr, "fragment without a source policy");
    require(same_structure(f.source->branches, base.branches),
            "fragments come from policies with different branch structures");
  }

  // Group id per branch: fragment index, or fragments.size() + branch for a
  // replacement (each replacement is its own group).
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> group(n, kUnset);
  std::vector<const DecentralizedPolicy*> owner(n, nullptr);
  for (std::size_t k = 0; k < fragments.size(); ++k) {
    for (std::size_t i : fragments[k].branches) {
      require(i < n, "fragment names branch " + std::to_string(i + 1) +
                         " but the policy has " + std::to_string(n));
      require(group[i] == kUnset,
              "branch " + std::to_string(i + 1) + " appears twice");
      group[i] = k;
      owner[i] = fragments[k].source;
    }
  }
  for (const auto& [i, controller] : replacements) {
    require(i < n, "replacement for unknown branch " + std::to_string(i + 1));
    require(group[i] == kUnset,
            "branch " + std::to_string(i + 1) + " is both kept and replaced");
    group[i] = fragments.size() + i;
    owner[i] = &base;
  }
  for (std::size_t i = 0; i < n; ++i) {
    require(group[i] != kUnset, "branch " + base.branches.label(i) +
                                    " is neither kept nor replaced");
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (group[i] == group[j]) continue;
      for (std::size_t m : base.branches[j].motors) {
        if (base.branches[i].owns(m)) continue;
        if (owner[i]->mask.allowed(i, m)) {
          throw CompositionError(
              "cannot separate " + base.branches.label(i) + " from " +
                  base.branches.label(j) + ": connection survived pruning, " +
                  edge_name(base.branches, i, j) + "; they must move together",
              i, j);
        }
      }
    }
  }

  DecentralizedPolicy out = base;
  for (std::size_t i = 0; i < n; ++i) {
    out.nets[i] = owner[i]->nets[i];
    for (std::size_t m = 0; m < out.action_dim(); ++m) {
      const bool own = out.branches[i].owns(m);
      out.mask.set(i, m, own || (!replacements.count(i) && owner[i]->mask.allowed(i, m)));
    }
    if (auto it = replacements.find(i); it != replacements.end()) {
      out.replacements[i] = it->second;
    } else {
      out.replacements[i] = owner[i]->replacements[i];
    }
  }
  out.validate();
  return out;
}

}  // namespace demos
