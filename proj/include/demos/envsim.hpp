#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "demos/kinematics.hpp"

namespace demos {

/// Parsed robot plus its branch decomposition.
struct Robot {
  KinematicTree tree;
  BranchSet branches;
  std::uint64_t hash = 0;
  std::string urdf;  // source text, kept so checkpoints are self-contained

  static Robot from_urdf(std::string text);
  static Robot from_file(const std::string& path);
  std::size_t num_motors() const { return tree.num_motors(); }
};

struct RewardWeights {
  double balance = 1.0;
  double gait = 0.5;
  double arm = 0.25;
  double torque = 1e-3;
  double smooth = 1e-2;
};

/// What the non-leg branches are asked to do.
enum class ArmTask { kSwing, kHold };

struct EnvConfig {
  std::size_t num_envs = 256;
  double policy_dt = 0.02;  // 50 Hz
  int substeps = 20;        // PD loop at 1000 Hz
  double kp = 40.0;
  double kd = 1.0;
  double clock_period = 1.0;
  double episode_length = 20.0;
  double action_scale = 0.5;  // rad per unit action
  /// Joint velocities enter the observation multiplied by this.
  double velocity_obs_scale = 0.05;
  double default_inertia = 0.1;
  double default_damping = 0.5;
  double gait_amplitude = 0.5;
  double init_noise = 0.1;
  double disturbance_max = 2.0;
  /// Leaf link names of the two legs whose lead joints form the balance
  /// variable. Empty means the last two branches.
  std::array<std::string, 2> coordinated_pair;
  std::array<double, 2> leg_phase_offsets{0.0, 3.14159265358979323846};
  ArmTask arm_task = ArmTask::kSwing;
  double arm_hold_angle = 0.0;
  RewardWeights weights;
  double invalid_action_reward = -1.0;

  double substep_dt() const { return policy_dt / substeps; }
  std::size_t episode_steps() const;
};

struct MalfunctionSpec {
  enum class Kind { kNoise, kStuck };
  Kind kind = Kind::kNoise;
  std::size_t motor = 0;
  double level = 0.0;  // noise std (rad) or stuck angle (rad)
};

/// Parses "kind:motor_name:level", e.g. "stuck:l_shoulder_pitch:0.3".
MalfunctionSpec parse_malfunction(const std::string& text,
                                  const KinematicTree& tree);
std::string to_string(const MalfunctionSpec& spec, const KinematicTree& tree);

/// Global observation: gravity(3), clock(2), positions, velocities and last
/// actions (|A| each). Branch slices keep the 5 root entries and the
/// branch's own motor entries, in that order.
class ObservationLayout {
 public:
  static constexpr std::size_t kGravityDim = 3;
  static constexpr std::size_t kClockDim = 2;
  static constexpr std::size_t kRootDim = kGravityDim + kClockDim;

  ObservationLayout() = default;
  explicit ObservationLayout(const BranchSet& branches);

  std::size_t num_motors() const { return num_motors_; }
  std::size_t global_dim() const { return kRootDim + 3 * num_motors_; }
  std::size_t num_branches() const { return slices_.size(); }
  std::size_t local_dim(std::size_t branch) const;

  std::size_t position_index(std::size_t motor) const {
    return kRootDim + motor;
  }
  std::size_t velocity_index(std::size_t motor) const {
    return kRootDim + num_motors_ + motor;
  }
  std::size_t last_action_index(std::size_t motor) const {
    return kRootDim + 2 * num_motors_ + motor;
  }
  const std::vector<std::size_t>& slice(std::size_t branch) const;

  Eigen::VectorXd slice_local(const Eigen::Ref<const Eigen::VectorXd>& obs,
                              std::size_t branch) const;
  /// Column-wise slice of an observation batch (one column per sample).
  Eigen::MatrixXd slice_batch(const Eigen::Ref<const Eigen::MatrixXd>& batch,
                              std::size_t branch) const;

 private:
  std::size_t num_motors_ = 0;
  std::vector<std::vector<std::size_t>> slices_;
};

struct EnvState {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  Eigen::VectorXd last_action;
  double t = 0.0;
  std::size_t step = 0;  // policy steps since reset; t = step * policy_dt
  std::size_t disturbed_motor = 0;
  double disturbance = 0.0;  // N·m
  std::mt19937_64 rng;       // episode sampling
  std::mt19937_64 obs_rng;   // observation noise only
};

struct RewardTerms {
  double balance = 0.0;
  double gait = 0.0;
  double arm = 0.0;
  double torque_penalty = 0.0;  // stored positive, subtracted in total()
  double smooth_penalty = 0.0;

  double total() const {
    return balance + gait + arm - torque_penalty - smooth_penalty;
  }
  double legs() const { return balance + gait; }
  RewardTerms& operator+=(const RewardTerms& o);
};

/// PD torque k_p (target - q) - k_d qd, clamped to +/- effort.
double pd_torque(double q, double qd, double target, double kp, double kd,
                 double effort);

/// Which motors the reward reads. The lead motor of a branch is its first
/// motor not shared with another branch (or its first motor if all are
/// shared).
struct RewardRoles {
  std::array<std::size_t, 2> legs{};       // branch ids
  std::array<std::size_t, 2> leg_motor{};  // hip motors
  std::vector<std::size_t> arm_motors;     // lead motor of every other branch

  static RewardRoles resolve(const BranchSet& branches, const EnvConfig& cfg);
};

std::size_t lead_motor(const BranchSet& branches, std::size_t branch);

RewardTerms compute_reward(const Eigen::Ref<const Eigen::VectorXd>& q,
                           double t,
                           const Eigen::Ref<const Eigen::VectorXd>& action,
                           const Eigen::Ref<const Eigen::VectorXd>& last_action,
                           const EnvConfig& cfg, const RewardRoles& roles);

struct StepResult {
  Eigen::MatrixXd obs;  // after auto-reset for finished envs
  Eigen::VectorXd reward;
  std::vector<std::uint8_t> done;
  std::vector<std::uint8_t> timeout;  // done because of the time limit
  Eigen::MatrixXd terminal_obs;       // valid in columns where done
  std::vector<RewardTerms> terms;
};

/// Vectorized, seedable joint-space simulator. Each joint is an independent
/// second-order system driven by a PD loop; a hidden per-episode torque acts
/// on the lead joint of one leg of the coordinated pair.
class BranchWorld {
 public:
  BranchWorld(Robot robot, EnvConfig config);

  const Robot& robot() const { return robot_; }
  const EnvConfig& config() const { return config_; }
  const ObservationLayout& layout() const { return layout_; }
  const RewardRoles& roles() const { return roles_; }
  std::size_t num_envs() const { return states_.size(); }
  std::size_t num_motors() const { return robot_.num_motors(); }
  std::size_t obs_dim() const { return layout_.global_dim(); }

  void set_malfunction(std::optional<MalfunctionSpec> malfunction);
  const std::optional<MalfunctionSpec>& malfunction() const {
    return malfunction_;
  }

  /// Reseeds every env from `seed` and starts new episodes.
  Eigen::MatrixXd reset(std::uint64_t seed);
  /// `actions` is |A| x num_envs. Finished envs are reset in place.
  StepResult step(const Eigen::Ref<const Eigen::MatrixXd>& actions);

  EnvState& state(std::size_t env) { return states_.at(env); }
  const EnvState& state(std::size_t env) const { return states_.at(env); }
  Eigen::VectorXd observe(std::size_t env);
  Eigen::MatrixXd observe_all();

  /// Advances one env by a single 1 ms substep with PD targets `targets`.
  void substep(EnvState& s, const Eigen::Ref<const Eigen::VectorXd>& targets);

 private:
  void reset_env(std::size_t env);

  Robot robot_;
  EnvConfig config_;
  ObservationLayout layout_;
  RewardRoles roles_;
  std::optional<MalfunctionSpec> malfunction_;
  Eigen::VectorXd inertia_, damping_, lower_, upper_, effort_, vel_limit_;
  std::vector<EnvState> states_;
};

/// Observation of one env. Noise malfunction perturbs only the faulty
/// motor's position and velocity entries; velocity noise is added to the
/// sensed value before velocity_obs_scale is applied.
Eigen::VectorXd build_observation(
    const EnvState& state, const ObservationLayout& layout,
    const EnvConfig& cfg, const std::optional<MalfunctionSpec>& malfunction,
    std::mt19937_64* noise_rng);

/// Per-step record of one env, exported as CSV: t, q_*, qd_*, a_*, reward.
struct EpisodeTrace {
  std::vector<std::string> motor_names;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> q, qd, action;
  std::vector<double> reward;

  void record(const EnvState& s, const Eigen::VectorXd& action, double r);
  void write_csv(std::ostream& out) const;
};

}  // namespace demos
