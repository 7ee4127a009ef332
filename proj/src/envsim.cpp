#include "demos/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace demos {

Robot Robot::from_urdf(std::string text) {
  Robot r;
  r.tree = build_tree(parse_urdf(text));
  r.branches = extract_branches(r.tree);
  r.hash = robot_hash(r.tree.model);
  r.urdf = std::move(text);
  return r;
}

Robot Robot::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open URDF file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return from_urdf(text.str());
}

std::size_t EnvConfig::episode_steps() const {
  return static_cast<std::size_t>(std::llround(episode_length / policy_dt));
}

MalfunctionSpec parse_malfunction(const std::string& text,
                                  const KinematicTree& tree) {
  auto first = text.find(':');
  auto last = text.rfind(':');
  if (first == std::string::npos || first == last) {
    throw std::invalid_argument("malfunction must be kind:motor:level, got '" +
                                text + "'");
  }
  std::string kind = text.substr(0, first);
  std::string motor = text.substr(first + 1, last - first - 1);
  std::string level = text.substr(last + 1);

  MalfunctionSpec spec;
  if (kind == "noise") {
    spec.kind = MalfunctionSpec::Kind::kNoise;
  } else if (kind == "stuck") {
    spec.kind = MalfunctionSpec::Kind::kStuck;
  } else {
    throw std::invalid_argument("unknown malfunction kind '" + kind +
                                "' (expected noise or stuck)");
  }
  auto m = tree.find_motor(motor);
  if (!m) throw std::out_of_range("unknown motor '" + motor + "'");
  spec.motor = *m;
  try {
    spec.level = std::stod(level);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad malfunction level '" + level + "'");
  }
  if (spec.kind == MalfunctionSpec::Kind::kNoise && spec.level < 0.0) {
    throw std::invalid_argument("noise std must be non-negative");
  }
  if (spec.kind == MalfunctionSpec::Kind::kStuck) {
    const auto& lim = tree.motor_joint(*m).limits;
    if (spec.level < lim.lower || spec.level > lim.upper) {
      throw std::out_of_range("stuck angle outside the limits of '" + motor +
                              "'");
    }
  }
  return spec;
}

std::string to_string(const MalfunctionSpec& spec, const KinematicTree& tree) {
  std::ostringstream out;
  out << (spec.kind == MalfunctionSpec::Kind::kNoise ? "noise" : "stuck") << ':'
      << tree.motor_name(spec.motor) << ':' << spec.level;
  return out.str();
}

ObservationLayout::ObservationLayout(const BranchSet& branches)
    : num_motors_(branches.num_motors()) {
  for (const Branch& b : branches.branches) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < kRootDim; ++k) idx.push_back(k);
    for (std::size_t m : b.motors) idx.push_back(position_index(m));
    for (std::size_t m : b.motors) idx.push_back(velocity_index(m));
    for (std::size_t m : b.motors) idx.push_back(last_action_index(m));
    slices_.push_back(std::move(idx));
  }
}

std::size_t ObservationLayout::local_dim(std::size_t branch) const {
  return slice(branch).size();
}

const std::vector<std::size_t>& ObservationLayout::slice(
    std::size_t branch) const {
  if (branch >= slices_.size()) {
    throw std::out_of_range("branch id " + std::to_string(branch) +
                            " out of range");
  }
  return slices_[branch];
}

Eigen::VectorXd ObservationLayout::slice_local(
    const Eigen::Ref<const Eigen::VectorXd>& obs, std::size_t branch) const {
  const auto& idx = slice(branch);
  if (static_cast<std::size_t>(obs.size()) != global_dim()) {
    throw std::invalid_argument("observation has wrong dimension");
  }
  Eigen::VectorXd out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = obs[idx[k]];
  return out;
}

Eigen::MatrixXd ObservationLayout::slice_batch(
    const Eigen::Ref<const Eigen::MatrixXd>& batch, std::size_t branch) const {
  const auto& idx = slice(branch);
  if (static_cast<std::size_t>(batch.rows()) != global_dim()) {
    throw std::invalid_argument("observation batch has wrong dimension");
  }
  Eigen::MatrixXd out(idx.size(), batch.cols());
  for (Eigen::Index c = 0; c < batch.cols(); ++c) {
    for (std::size_t k = 0; k < idx.size(); ++k) out(k, c) = batch(idx[k], c);
  }
  return out;
}

RewardTerms& RewardTerms::operator+=(const RewardTerms& o) {
  balance += o.balance;
  gait += o.gait;
  arm += o.arm;
  torque_penalty += o.torque_penalty;
  smooth_penalty += o.smooth_penalty;
  return *this;
}

double pd_torque(double q, double qd, double target, double kp, double kd,
                 double effort) {
  double tau = kp * (target - q) - kd * qd;
  return std::clamp(tau, -effort, effort);
}

std::size_t lead_motor(const BranchSet& branches, std::size_t branch) {
  const Branch& b = branches[branch];
  if (b.motors.empty()) {
    throw std::invalid_argument("branch " + branches.label(branch) +
                                " has no motors");
  }
  for (std::size_t m : b.motors) {
    bool shared = false;
    for (const Branch& other : branches.branches) {
      if (other.id != b.id && other.owns(m)) shared = true;
    }
    if (!shared) return m;
  }
  return b.motors.front();
}

RewardRoles RewardRoles::resolve(const BranchSet& branches,
                                 const EnvConfig& cfg) {
  if (branches.size() < 2) {
    throw std::invalid_argument("the balance task needs at least two branches");
  }
  RewardRoles roles;
  for (int k = 0; k < 2; ++k) {
    const std::string& key = cfg.coordinated_pair[k];
    if (key.empty()) {
      roles.legs[k] = branches.size() - 2 + k;
    } else if (auto b = branches.find(key)) {
      roles.legs[k] = *b;
    } else {
      throw std::invalid_argument("unknown coordinated branch '" + key + "'");
    }
    roles.leg_motor[k] = lead_motor(branches, roles.legs[k]);
  }
  if (roles.legs[0] == roles.legs[1]) {
    throw std::invalid_argument("coordinated pair must name two branches");
  }
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (i == roles.legs[0] || i == roles.legs[1]) continue;
    if (branches[i].motors.empty()) continue;
    roles.arm_motors.push_back(lead_motor(branches, i));
  }
  return roles;
}

RewardTerms compute_reward(const Eigen::Ref<const Eigen::VectorXd>& q,
                           double t,
                           const Eigen::Ref<const Eigen::VectorXd>& action,
                           const Eigen::Ref<const Eigen::VectorXd>& last_action,
                           const EnvConfig& cfg, const RewardRoles& roles) {
  const RewardWeights& w = cfg.weights;
  const double phase = 2.0 * std::numbers::pi * t / cfg.clock_period;
  RewardTerms r;
  const double b = q[roles.leg_motor[0]] + q[roles.leg_motor[1]];
  r.balance = w.balance * std::exp(-b * b);
  for (int k = 0; k < 2; ++k) {
    double e = q[roles.leg_motor[k]] -
               cfg.gait_amplitude * std::sin(phase + cfg.leg_phase_offsets[k]);
    r.gait += w.gait * std::exp(-e * e);
  }
  const double arm_target = cfg.arm_task == ArmTask::kSwing
                                ? cfg.gait_amplitude * std::sin(phase)
                                : cfg.arm_hold_angle;
  for (std::size_t m : roles.arm_motors) {
    double e = q[m] - arm_target;
    r.arm += w.arm * std::exp(-e * e);
  }
  r.torque_penalty = w.torque * action.squaredNorm();
  r.smooth_penalty = w.smooth * (action - last_action).squaredNorm();
  return r;
}

BranchWorld::BranchWorld(Robot robot, EnvConfig config)
    : robot_(std::move(robot)), config_(std::move(config)) {
  if (!(config_.kp > 0.0) || config_.kd < 0.0 || !(config_.clock_period > 0.0)) {
    throw std::invalid_argument("need kp > 0, kd >= 0 and clock period > 0");
  }
  if (config_.substeps <= 0 || !(config_.policy_dt > 0.0)) {
    throw std::invalid_argument("need a positive policy period and substeps");
  }
  if (config_.num_envs == 0) throw std::invalid_argument("need at least one env");
  layout_ = ObservationLayout(robot_.branches);
  roles_ = RewardRoles::resolve(robot_.branches, config_);

  const std::size_t n = num_motors();
  inertia_.resize(n);
  damping_.resize(n);
  lower_.resize(n);
  upper_.resize(n);
  effort_.resize(n);
  vel_limit_.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    const Joint& j = robot_.tree.motor_joint(m);
    inertia_[m] = j.inertia.value_or(config_.default_inertia);
    damping_[m] = j.damping.value_or(config_.default_damping);
    lower_[m] = j.limits.lower;
    upper_[m] = j.limits.upper;
    effort_[m] = j.limits.effort;
    vel_limit_[m] = j.limits.velocity;
  }
  states_.resize(config_.num_envs);
  reset(0);
}

void BranchWorld::set_malfunction(std::optional<MalfunctionSpec> malfunction) {
  if (malfunction && malfunction->motor >= num_motors()) {
    throw std::out_of_range("malfunction motor index out of range");
  }
  malfunction_ = malfunction;
}

Eigen::MatrixXd BranchWorld::reset(std::uint64_t seed) {
  for (std::size_t e = 0; e < states_.size(); ++e) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(e), 0x5eedU};
    states_[e].rng.seed(seq);
    std::seed_seq noise_seq{static_cast<std::uint32_t>(seed),
                            static_cast<std::uint32_t>(seed >> 32),
                            static_cast<std::uint32_t>(e), 0x0b5eU};
    states_[e].obs_rng.seed(noise_seq);
    reset_env(e);
  }
  return observe_all();
}

void BranchWorld::reset_env(std::size_t env) {
  EnvState& s = states_[env];
  const std::size_t n = num_motors();
  std::uniform_real_distribution<double> init(-config_.init_noise,
                                              config_.init_noise);
  s.q.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    s.q[m] = std::clamp(init(s.rng), lower_[m], upper_[m]);
  }
  s.qd = Eigen::VectorXd::Zero(n);
  s.last_action = Eigen::VectorXd::Zero(n);
  s.t = 0.0;
  s.step = 0;
  std::uniform_int_distribution<int> side(0, 1);
  std::uniform_real_distribution<double> torque(-1.0, 1.0);
  s.disturbed_motor = roles_.leg_motor[side(s.rng)];
  s.disturbance = config_.disturbance_max * torque(s.rng);
  if (malfunction_ && malfunction_->kind == MalfunctionSpec::Kind::kStuck) {
    s.q[malfunction_->motor] = malfunction_->level;
  }
}

void BranchWorld::substep(EnvState& s,
                          const Eigen::Ref<const Eigen::VectorXd>& targets) {
  const double dt = config_.substep_dt();
  const std::size_t n = num_motors();
  const bool stuck =
      malfunction_ && malfunction_->kind == MalfunctionSpec::Kind::kStuck;
  for (std::size_t m = 0; m < n; ++m) {
    if (stuck && m == malfunction_->motor) {
      s.q[m] = malfunction_->level;
      s.qd[m] = 0.0;
      continue;
    }
    double tau = pd_torque(s.q[m], s.qd[m], targets[m], config_.kp, config_.kd,
                           effort_[m]);
    if (m == s.disturbed_motor) tau += s.disturbance;
    double qdd = (tau - damping_[m] * s.qd[m]) / inertia_[m];
    double qd = std::clamp(s.qd[m] + dt * qdd, -vel_limit_[m], vel_limit_[m]);
    double q = s.q[m] + dt * qd;
    if (q < lower_[m]) {
      q = lower_[m];
      qd = std::max(qd, 0.0);
    } else if (q > upper_[m]) {
      q = upper_[m];
      qd = std::min(qd, 0.0);
    }
    s.q[m] = q;
    s.qd[m] = qd;
  }
}

StepResult BranchWorld::step(const Eigen::Ref<const Eigen::MatrixXd>& actions) {
  const std::size_t n = num_motors();
  const std::size_t envs = num_envs();
  if (static_cast<std::size_t>(actions.rows()) != n ||
      static_cast<std::size_t>(actions.cols()) != envs) {
    throw std::invalid_argument(
        "action batch must be " + std::to_string(n) + " x " +
        std::to_string(envs) + ", got " + std::to_string(actions.rows()) +
        " x " + std::to_string(actions.cols()));
  }
  StepResult out;
  out.obs.resize(obs_dim(), envs);
  out.terminal_obs = Eigen::MatrixXd::Zero(obs_dim(), envs);
  out.reward.resize(envs);
  out.done.assign(envs, 0);
  out.timeout.assign(envs, 0);
  out.terms.resize(envs);
  const std::size_t limit = config_.episode_steps();

  for (std::size_t e = 0; e < envs; ++e) {
    EnvState& s = states_[e];
    Eigen::VectorXd a = actions.col(e);
    if (!a.allFinite()) {
      out.reward[e] = config_.invalid_action_reward;
      out.done[e] = 1;
      out.terminal_obs.col(e) = observe(e);
      reset_env(e);
      out.obs.col(e) = observe(e);
      continue;
    }
    const Eigen::VectorXd targets = a * config_.action_scale;
    for (int k = 0; k < config_.substeps; ++k) substep(s, targets);
    ++s.step;
    s.t = static_cast<double>(s.step) * config_.policy_dt;
    out.terms[e] = compute_reward(s.q, s.t, a, s.last_action, config_, roles_);
    out.reward[e] = out.terms[e].total();
    s.last_action = a;
    if (s.step >= limit) {
      out.done[e] = 1;
      out.timeout[e] = 1;
      out.terminal_obs.col(e) = observe(e);
      reset_env(e);
    }
    out.obs.col(e) = observe(e);
  }
  return out;
}

Eigen::VectorXd BranchWorld::observe(std::size_t env) {
  return build_observation(states_.at(env), layout_, config_, malfunction_,
                           &states_[env].obs_rng);
}

Eigen::MatrixXd BranchWorld::observe_all() {
  Eigen::MatrixXd obs(obs_dim(), num_envs());
  for (std::size_t e = 0; e < num_envs(); ++e) obs.col(e) = observe(e);
  return obs;
}

Eigen::VectorXd build_observation(
    const EnvState& state, const ObservationLayout& layout,
    const EnvConfig& cfg, const std::optional<MalfunctionSpec>& malfunction,
    std::mt19937_64* noise_rng) {
  const std::size_t n = layout.num_motors();
  Eigen::VectorXd obs(layout.global_dim());
  obs.head<3>() << 0.0, 0.0, -1.0;
  const double phase = 2.0 * std::numbers::pi * state.t / cfg.clock_period;
  obs[3] = std::sin(phase);
  obs[4] = std::cos(phase);
  obs.segment(ObservationLayout::kRootDim, n) = state.q;
  obs.segment(ObservationLayout::kRootDim + n, n) = cfg.velocity_obs_scale * state.qd;
  obs.segment(ObservationLayout::kRootDim + 2 * n, n) = state.last_action;
  if (malfunction && malfunction->kind == MalfunctionSpec::Kind::kNoise &&
      malfunction->level > 0.0 && noise_rng != nullptr) {
    std::normal_distribution<double> noise(0.0, malfunction->level);
    obs[layout.position_index(malfunction->motor)] += noise(*noise_rng);
    obs[layout.velocity_index(malfunction->motor)] +=
        cfg.velocity_obs_scale * noise(*noise_rng);
  }
  return obs;
}

void EpisodeTrace::record(const EnvState& s, const Eigen::VectorXd& a,
                          double r) {
  t.push_back(s.t);
  q.push_back(s.q);
  qd.push_back(s.qd);
  action.push_back(a);
  reward.push_back(r);
}

void EpisodeTrace::write_csv(std::ostream& out) const {
  out << "t";
  for (const auto& n : motor_names) out << ",q_" << n;
  for (const auto& n : motor_names) out << ",qd_" << n;
  for (const auto& n : motor_names) out << ",a_" << n;
  out << ",reward\n";
  out.precision(10);
  for (std::size_t k = 0; k < t.size(); ++k) {
    out << t[k];
    for (Eigen::Index m = 0; m < q[k].size(); ++m) out << ',' << q[k][m];
    for (Eigen::Index m = 0; m < qd[k].size(); ++m) out << ',' << qd[k][m];
    for (Eigen::Index m = 0; m < action[k].size(); ++m) out << ',' << action[k][m];
    out << ',' << reward[k] << '\n';
  }
}

}  // namespace demos
