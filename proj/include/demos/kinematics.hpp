#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace demos {

/// Malformed XML. `line()` is the 1-based line the XML reader stopped at.
class UrdfParseError : public std::runtime_error {
 public:
  UrdfParseError(const std::string& message, std::size_t line)
      : std::runtime_error(message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed XML that violates a structural rule (dangling link name,
/// duplicate names, bad attribute values).
class UrdfValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The joint graph is not a tree (cycle, multiple roots, disconnected links).
class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class JointType { kRevolute, kContinuous, kPrismatic, kFixed };

std::string_view to_string(JointType type);

struct JointLimits {
  double lower = 0.0;
  double upper = 0.0;
  double effort = 0.0;
  double velocity = 0.0;
};

struct Joint {
  std::string name;
  JointType type = JointType::kFixed;
  std::string parent;
  std::string child;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  JointLimits limits;
  // Optional simulator parameters from <dynamics damping=".." inertia="..">.
  std::optional<double> damping;
  std::optional<double> inertia;

  bool actuated() const { return type != JointType::kFixed; }
};

struct RobotModel {
  std::string name;
  std::vector<std::string> links;
  std::vector<Joint> joints;
};

/// Parses the URDF subset used here: <robot>, <link name>, and <joint> with
/// <parent>, <child>, <axis>, <limit> and <dynamics>. Everything else is
/// ignored. The returned model satisfies all tree invariants.
RobotModel parse_urdf(std::string_view text);

/// Reads and parses a URDF file from disk.
RobotModel load_urdf(const std::string& path);

/// Stable 64-bit fingerprint of the parsed model (names, types, topology,
/// limits, dynamics). Insensitive to whitespace and ignored tags.
std::uint64_t robot_hash(const RobotModel& model);

struct KinematicTree {
  RobotModel model;
  std::size_t root = 0;                               // index into model.links
  std::vector<std::vector<std::size_t>> child_joints;  // per link, file order
  std::vector<std::optional<std::size_t>> parent_joint;  // per link
  /// Joint indices of actuated joints; position in this list is the motor id.
  std::vector<std::size_t> actuated;

  std::size_t num_motors() const { return actuated.size(); }
  std::string motor_name(std::size_t motor) const {
    return model.joints[actuated[motor]].name;
  }
  const Joint& motor_joint(std::size_t motor) const {
    return model.joints[actuated[motor]];
  }
  std::optional<std::size_t> find_motor(std::string_view joint_name) const;
};

/// Builds the tree view. Motor ids follow a depth-first traversal from the
/// root with children visited in file order.
KinematicTree build_tree(RobotModel model);

struct Branch {
  std::size_t id = 0;
  std::string leaf;                  // leaf link name
  std::vector<std::size_t> motors;   // root-to-leaf order
  std::vector<std::size_t> complement;  // ascending

  bool owns(std::size_t motor) const;
};

struct BranchSet {
  std::vector<Branch> branches;
  std::vector<std::string> motor_names;

  std::size_t size() const { return branches.size(); }
  std::size_t num_motors() const { return motor_names.size(); }
  const Branch& operator[](std::size_t i) const { return branches.at(i); }

  /// Looks a branch up by leaf link name or by 1-based label ("3" or "B3").
  std::optional<std::size_t> find(std::string_view key) const;
  /// "B3 (l_foot)"
  std::string label(std::size_t i) const;
};

/// One branch per leaf link, in depth-first order of the leaves.
BranchSet extract_branches(const KinematicTree& tree);

/// Motors not on branch i. Throws std::out_of_range for a bad id.
std::vector<std::size_t> complement_motors(const BranchSet& branches,
                                           std::size_t i);

/// A single pseudo-branch owning every motor. Used by the centralized policy.
BranchSet single_branch(std::size_t num_motors,
                        std::vector<std::string> motor_names);

}  // namespace demos
