#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "demos/envsim.hpp"
#include "demos/kinematics.hpp"
#include "demos/nn.hpp"

namespace demos {

enum class PolicyKind { kDemos, kCentralized, kLocalActors };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& text);

/// Which branch may drive which motor. Own-branch entries can never be
/// cleared, and every motor keeps at least one driver.
class DecouplingMask {
 public:
  DecouplingMask() = default;
  /// Fully connected: every branch may drive every motor.
  explicit DecouplingMask(const BranchSet& branches);
  /// Each branch drives only its own motors.
  static DecouplingMask block_diagonal(const BranchSet& branches);

  std::size_t num_branches() const { return rows_; }
  std::size_t num_motors() const { return cols_; }
  bool allowed(std::size_t branch, std::size_t motor) const {
    return bits_.at(branch * cols_ + motor) != 0;
  }
  /// Clears one entry. Returns true if it was set. Throws std::logic_error
  /// for an own-branch motor.
  bool clear(std::size_t branch, std::size_t motor);
  void set(std::size_t branch, std::size_t motor, bool value);
  /// Number of allowed entries outside each branch's own motors.
  std::size_t cross_connections() const;

  void validate() const;
  bool operator==(const DecouplingMask& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::uint8_t> own_;
};

/// A hand-written branch controller used in place of a learned branch net.
/// Emits only the branch's own motors, in action units.
struct ScriptedController {
  enum class Kind { kHoldPose, kSwing };
  Kind kind = Kind::kHoldPose;
  double value = 0.0;  // hold angle or swing amplitude (rad), lead motor
  double action_scale = 0.5;
  std::size_t lead_motor = 0;

  /// `local_obs` is the branch slice; its clock entries give the phase.
  Eigen::VectorXd act(const Eigen::Ref<const Eigen::VectorXd>& local_obs,
                      const Branch& branch, std::size_t num_motors) const;
};

std::string to_string(ScriptedController::Kind kind);
ScriptedController::Kind parse_controller_kind(const std::string& text);

struct PolicyInit {
  std::vector<std::size_t> hidden{64, 64};
  double output_gain = 0.01;
  double log_std = 0.0;
};

/// Local-input / global-output branch networks. Each net reads its branch's
/// observation slice and emits a full action vector; the action mean is the
/// sum of the masked outputs.
class DecentralizedPolicy {
 public:
  PolicyKind kind = PolicyKind::kDemos;
  BranchSet branches;  // a single all-motor pseudo-branch when centralized
  ObservationLayout layout;
  std::vector<Mlp> nets;
  Eigen::VectorXd log_std;
  DecouplingMask mask;
  std::vector<std::optional<ScriptedController>> replacements;

  std::size_t num_branches() const { return branches.size(); }
  std::size_t action_dim() const { return branches.num_motors(); }
  bool replaced(std::size_t i) const { return replacements.at(i).has_value(); }

  std::vector<Eigen::MatrixXd> local_observations(
      const Eigen::Ref<const Eigen::MatrixXd>& global) const;

  struct Output {
    std::vector<Eigen::MatrixXd> raw;             // net outputs before masking
    std::vector<Eigen::MatrixXd> branch_actions;  // a_i = mask_i * raw_i
    Eigen::MatrixXd mean;
    Eigen::MatrixXd action;
    Eigen::VectorXd log_prob;
    double entropy = 0.0;
  };

  /// Deterministic mode returns action = mean. Stochastic mode samples from
  /// N(mean, exp(log_std)^2) using `rng`.
  Output act(std::span<const Eigen::MatrixXd> local_obs, bool stochastic,
             std::mt19937_64* rng = nullptr) const;
  Eigen::MatrixXd mean_action(const Eigen::Ref<const Eigen::MatrixXd>& global) const;

  /// Raw (unmasked) net outputs; replaced branches yield zeros.
  std::vector<Eigen::MatrixXd> raw_outputs(
      std::span<const Eigen::MatrixXd> local_obs) const;

  void validate() const;
};

/// Builds a freshly initialized policy for the robot's branch set.
/// kCentralized uses one pseudo-branch over the full observation;
/// kLocalActors starts and stays block-diagonal.
DecentralizedPolicy make_policy(PolicyKind kind, const BranchSet& robot_branches,
                                const PolicyInit& init, std::mt19937_64& rng);

/// Shorthand for the two baselines.
DecentralizedPolicy make_baseline(PolicyKind kind, const BranchSet& robot_branches,
                                  const PolicyInit& init, std::mt19937_64& rng);

struct PenaltyResult {
  double penalty = 0.0;  // >= 0
  double objective() const { return -penalty; }
};

/// Mean over samples of sum_i || raw_i[complement(i)] ||_p. When `grad` is
/// given it receives dpenalty/draw_i for every branch.
PenaltyResult decentralization_penalty(std::span<const Eigen::MatrixXd> raw,
                                       const BranchSet& branches, double p,
                                       std::vector<Eigen::MatrixXd>* grad = nullptr);

/// Penalty of a policy on a batch of local observations, using raw outputs.
PenaltyResult decentralization_loss(const DecentralizedPolicy& policy,
                                    std::span<const Eigen::MatrixXd> local_obs,
                                    double p);

struct ConnectionMatrix {
  Eigen::MatrixXd strength;   // C, n x n
  Eigen::MatrixXd relative;   // C_ij / C_jj, NaN where C_jj = 0
  Eigen::MatrixXd motor;      // S, n x |A|
  Eigen::VectorXd motor_normalizer;  // per motor: sum of S over owning branches
  double p = 1.0;
  std::size_t samples = 0;

  bool undefined(std::size_t i, std::size_t j) const;
};

/// Connection strengths from masked branch outputs on a batch.
ConnectionMatrix connection_matrix(const DecentralizedPolicy& policy,
                                   std::span<const Eigen::MatrixXd> local_obs,
                                   double p);
/// Same quantities from precomputed branch actions.
ConnectionMatrix connection_matrix(std::span<const Eigen::MatrixXd> branch_actions,
                                   const BranchSet& branches, double p);

struct MaskEdit {
  std::size_t branch = 0;
  std::size_t motor = 0;
};

struct DecouplingResult {
  DecouplingMask mask;
  std::vector<MaskEdit> cleared;
  /// (i, j) pairs whose relative strength was undefined (C_jj = 0), or for
  /// motor level (i, motor) pairs whose normalizer was 0.
  std::vector<std::pair<std::size_t, std::size_t>> undefined;
};

/// Clears mask[i][M_j \ M_i] for every i != j with C_ij / C_jj < eta.
DecouplingResult apply_branch_decoupling(const DecentralizedPolicy& policy,
                                         const ConnectionMatrix& connections,
                                         double eta);

/// Clears mask[i][m] for m outside M_i with S_im / S_m < eta_prime.
DecouplingResult apply_motor_decoupling(const DecentralizedPolicy& policy,
                                        const ConnectionMatrix& connections,
                                        double eta_prime);

/// Thrown when a composition would cut a connection that survived pruning.
class CompositionError : public std::runtime_error {
 public:
  CompositionError(const std::string& message, std::size_t from, std::size_t to)
      : std::runtime_error(message), from_(from), to_(to) {}
  std::size_t from() const { return from_; }
  std::size_t to() const { return to_; }

 private:
  std::size_t from_;
  std::size_t to_;
};

struct PolicyFragment {
  const DecentralizedPolicy* source = nullptr;
  std::vector<std::size_t> branches;
};

/// Combines retained fragments with scripted replacements. Every branch must
/// be covered exactly once, and no surviving mask entry may cross a
/// fragment or replacement boundary.
DecentralizedPolicy compose(std::span<const PolicyFragment> fragments,
                            const std::map<std::size_t, ScriptedController>& replacements);

}  // namespace demos
