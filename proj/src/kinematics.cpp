#include "demos/kinematics.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

namespace demos {
namespace {

namespace pt = boost::property_tree;

std::optional<std::string> attribute(const pt::ptree& node,
                                     const std::string& name) {
  if (auto v = node.get_optional<std::string>("<xmlattr>." + name)) return *v;
  return std::nullopt;
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (text.find_first_not_of(" \t\r\n", used) != std::string::npos) {
      throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::exception&) {
    throw UrdfValidationError("invalid number '" + text + "' for " + what);
  }
}

std::optional<double> optional_double(const pt::ptree& node,
                                      const std::string& name,
                                      const std::string& what) {
  auto v = attribute(node, name);
  if (!v) return std::nullopt;
  return parse_double(*v, what + " " + name);
}

JointType parse_joint_type(const std::string& type, const std::string& joint) {
  if (type == "revolute") return JointType::kRevolute;
  if (type == "continuous") return JointType::kContinuous;
  if (type == "prismatic") return JointType::kPrismatic;
  if (type == "fixed") return JointType::kFixed;
  throw UrdfValidationError("joint '" + joint + "' has unsupported type '" +
                            type + "'");
}

Joint parse_joint(const pt::ptree& node) {
  Joint joint;
  auto name = attribute(node, "name");
  if (!name || name->empty()) throw UrdfValidationError("joint without name");
  joint.name = *name;
  auto type = attribute(node, "type");
  if (!type) {
    throw UrdfValidationError("joint '" + joint.name + "' has no type");
  }
  joint.type = parse_joint_type(*type, joint.name);

  const std::string what = "joint '" + joint.name + "'";
  auto parent = node.get_child_optional("parent");
  auto child = node.get_child_optional("child");
  if (!parent || !attribute(*parent, "link")) {
    throw UrdfValidationError(what + " has no parent link");
  }
  if (!child || !attribute(*child, "link")) {
    throw UrdfValidationError(what + " has no child link");
  }
  joint.parent = *attribute(*parent, "link");
  joint.child = *attribute(*child, "link");

  if (auto axis = node.get_child_optional("axis")) {
    if (auto xyz = attribute(*axis, "xyz")) {
      std::istringstream in(*xyz);
      Eigen::Vector3d a;
      if (!(in >> a.x() >> a.y() >> a.z())) {
        throw UrdfValidationError(what + " has malformed axis '" + *xyz + "'");
      }
      if (a.norm() == 0.0) {
        throw UrdfValidationError(what + " has zero axis");
      }
      joint.axis = a.normalized();
    }
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  joint.limits = {-kInf, kInf, kInf, kInf};
  if (auto limit = node.get_child_optional("limit")) {
    if (joint.type == JointType::kRevolute ||
        joint.type == JointType::kPrismatic) {
      joint.limits.lower =
          optional_double(*limit, "lower", what + " limit").value_or(0.0);
      joint.limits.upper =
          optional_double(*limit, "upper", what + " limit").value_or(0.0);
    }
    if (auto e = optional_double(*limit, "effort", what + " limit")) {
      joint.limits.effort = *e;
    }
    if (auto v = optional_double(*limit, "velocity", what + " limit")) {
      joint.limits.velocity = *v;
    }
  } else if (joint.type == JointType::kRevolute ||
             joint.type == JointType::kPrismatic) {
    throw UrdfValidationError(what + " requires a <limit> element");
  }
  if (joint.limits.lower > joint.limits.upper) {
    throw UrdfValidationError(what + " has lower limit above upper limit");
  }
  if (!(joint.limits.effort > 0.0) || !(joint.limits.velocity > 0.0)) {
    throw UrdfValidationError(what + " needs positive effort and velocity");
  }

  if (auto dyn = node.get_child_optional("dynamics")) {
    joint.damping = optional_double(*dyn, "damping", what + " dynamics");
    joint.inertia = optional_double(*dyn, "inertia", what + " dynamics");
    if (joint.damping && *joint.damping < 0.0) {
      throw UrdfValidationError(what + " has negative damping");
    }
    if (joint.inertia && !(*joint.inertia > 0.0)) {
      throw UrdfValidationError(what + " needs positive inertia");
    }
  }
  return joint;
}

void validate(const RobotModel& model) {
  std::unordered_map<std::string, std::size_t> link_index;
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    if (!link_index.emplace(model.links[i], i).second) {
      throw UrdfValidationError("duplicate link '" + model.links[i] + "'");
    }
  }
  if (model.links.empty()) throw UrdfValidationError("robot has no links");

  std::unordered_map<std::string, std::size_t> joint_names;
  std::vector<int> parents_of(model.links.size(), 0);
  for (const Joint& j : model.joints) {
    if (!joint_names.emplace(j.name, 0).second) {
      throw UrdfValidationError("duplicate joint '" + j.name + "'");
    }
    if (!link_index.count(j.parent)) {
      throw UrdfValidationError("joint '" + j.name +
                                "' references undeclared parent link '" +
                                j.parent + "'");
    }
    if (!link_index.count(j.child)) {
      throw UrdfValidationError("joint '" + j.name +
                                "' references undeclared child link '" +
                                j.child + "'");
    }
    if (j.parent == j.child) {
      throw TopologyError("joint '" + j.name + "' connects link '" + j.parent +
                          "' to itself");
    }
    if (++parents_of[link_index[j.child]] > 1) {
      throw TopologyError("link '" + j.child + "' has more than one parent");
    }
  }

  std::vector<std::string> roots;
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    if (parents_of[i] == 0) roots.push_back(model.links[i]);
  }
  if (roots.empty()) throw TopologyError("no root link: the joints form a cycle");
  if (roots.size() > 1) {
    std::string names;
    for (const auto& r : roots) names += (names.empty() ? "" : ", ") + r;
    throw TopologyError("multiple root links: " + names);
  }
  // One parent per link and a single root give |E| = |V| - 1; a link that is
  // still unreachable from the root sits on a detached cycle.
  std::vector<std::vector<std::size_t>> children(model.links.size());
  for (const Joint& j : model.joints) {
    children[link_index[j.parent]].push_back(link_index[j.child]);
  }
  std::vector<bool> seen(model.links.size(), false);
  std::vector<std::size_t> stack{link_index[roots.front()]};
  while (!stack.empty()) {
    std::size_t l = stack.back();
    stack.pop_back();
    seen[l] = true;
    for (std::size_t c : children[l]) stack.push_back(c);
  }
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    if (!seen[i]) {
      throw TopologyError("link '" + model.links[i] +
                          "' is not reachable from root '" + roots.front() +
                          "' (cycle)");
    }
  }
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string_view to_string(JointType type) {
  switch (type) {
    case JointType::kRevolute: return "revolute";
    case JointType::kContinuous: return "continuous";
    case JointType::kPrismatic: return "prismatic";
    case JointType::kFixed: return "fixed";
  }
  return "fixed";
}

RobotModel parse_urdf(std::string_view text) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(text)};
    pt::read_xml(in, doc, pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw UrdfParseError("malformed XML at line " + std::to_string(e.line()) +
                             ": " + e.message(),
                         e.line());
  }

  const pt::ptree* robot = nullptr;
  std::size_t robots = 0;
  for (const auto& [tag, node] : doc) {
    if (tag == "robot") {
      robot = &node;
      ++robots;
    }
  }
  if (robots != 1) {
    throw UrdfValidationError("expected exactly one <robot> element, found " +
                              std::to_string(robots));
  }

  RobotModel model;
  model.name = attribute(*robot, "name").value_or("robot");
  for (const auto& [tag, node] : *robot) {
    if (tag == "link") {
      auto name = attribute(node, "name");
      if (!name || name->empty()) throw UrdfValidationError("link without name");
      model.links.push_back(*name);
    } else if (tag == "joint") {
      model.joints.push_back(parse_joint(node));
    }
  }
  validate(model);
  return model;
}

RobotModel load_urdf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open URDF file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_urdf(text.str());
}

std::uint64_t robot_hash(const RobotModel& model) {
  std::ostringstream canon;
  canon.precision(17);
  canon << "robot:" << model.name << '\n';
  for (const auto& link : model.links) canon << "link:" << link << '\n';
  for (const Joint& j : model.joints) {
    canon << "joint:" << j.name << ':' << to_string(j.type) << ':' << j.parent
          << ':' << j.child << ':' << j.axis.x() << ',' << j.axis.y() << ','
          << j.axis.z() << ':' << j.limits.lower << ',' << j.limits.upper
          << ',' << j.limits.effort << ',' << j.limits.velocity << ':'
          << (j.damping ? std::to_string(*j.damping) : "-") << ':'
          << (j.inertia ? std::to_string(*j.inertia) : "-") << '\n';
  }
  return fnv1a(14695981039346656037ULL, canon.str());
}

std::optional<std::size_t> KinematicTree::find_motor(
    std::string_view joint_name) const {
  for (std::size_t m = 0; m < actuated.size(); ++m) {
    if (model.joints[actuated[m]].name == joint_name) return m;
  }
  return std::nullopt;
}

KinematicTree build_tree(RobotModel model) {
  validate(model);
  KinematicTree tree;
  std::unordered_map<std::string, std::size_t> link_index;
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    link_index[model.links[i]] = i;
  }
  tree.child_joints.resize(model.links.size());
  tree.parent_joint.resize(model.links.size());
  for (std::size_t j = 0; j < model.joints.size(); ++j) {
    tree.child_joints[link_index[model.joints[j].parent]].push_back(j);
    tree.parent_joint[link_index[model.joints[j].child]] = j;
  }
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    if (!tree.parent_joint[i]) tree.root = i;
  }

  // Iterative depth-first preorder; children pushed in reverse so they pop in
  // file order.
  std::vector<std::size_t> stack{tree.root};
  std::size_t visited = 0;
  while (!stack.empty()) {
    std::size_t link = stack.back();
    stack.pop_back();
    ++visited;
    if (auto pj = tree.parent_joint[link]; pj && model.joints[*pj].actuated()) {
      tree.actuated.push_back(*pj);
    }
    const auto& kids = tree.child_joints[link];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
      stack.push_back(link_index[model.joints[*it].child]);
    }
  }
  if (visited != model.links.size()) {
    throw TopologyError("joint graph is not connected");
  }
  tree.model = std::move(model);
  return tree;
}

bool Branch::owns(std::size_t motor) const {
  return std::find(motors.begin(), motors.end(), motor) != motors.end();
}

std::optional<std::size_t> BranchSet::find(std::string_view key) const {
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (branches[i].leaf == key) return i;
  }
  std::string_view digits = key;
  if (!digits.empty() && (digits.front() == 'B' || digits.front() == 'b')) {
    digits.remove_prefix(1);
  }
  if (digits.empty() ||
      digits.find_first_not_of("0123456789") != std::string_view::npos) {
    return std::nullopt;
  }
  std::size_t label = std::stoul(std::string(digits));
  if (label >= 1 && label <= branches.size()) return label - 1;
  return std::nullopt;
}

std::string BranchSet::label(std::size_t i) const {
  return "B" + std::to_string(i + 1) + " (" + branches.at(i).leaf + ")";
}

BranchSet extract_branches(const KinematicTree& tree) {
  const RobotModel& model = tree.model;
  std::unordered_map<std::string, std::size_t> link_index;
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    link_index[model.links[i]] = i;
  }
  std::vector<std::optional<std::size_t>> motor_of_joint(model.joints.size());
  for (std::size_t m = 0; m < tree.actuated.size(); ++m) {
    motor_of_joint[tree.actuated[m]] = m;
  }

  BranchSet set;
  for (std::size_t m = 0; m < tree.num_motors(); ++m) {
    set.motor_names.push_back(tree.motor_name(m));
  }

  std::vector<std::size_t> path;  // motors from root to the current link
  std::function<void(std::size_t)> visit = [&](std::size_t link) {
    const auto& kids = tree.child_joints[link];
    if (kids.empty()) {
      Branch b;
      b.id = set.branches.size();
      b.leaf = model.links[link];
      b.motors = path;
      set.branches.push_back(std::move(b));
      return;
    }
    for (std::size_t j : kids) {
      bool pushed = false;
      if (auto m = motor_of_joint[j]) {
        path.push_back(*m);
        pushed = true;
      }
      visit(link_index.at(model.joints[j].child));
      if (pushed) path.pop_back();
    }
  };
  visit(tree.root);

  for (std::size_t i = 0; i < set.branches.size(); ++i) {
    set.branches[i].complement = complement_motors(set, i);
  }
  return set;
}

std::vector<std::size_t> complement_motors(const BranchSet& branches,
                                           std::size_t i) {
  if (i >= branches.size()) {
    throw std::out_of_range("branch id " + std::to_string(i) +
                            " out of range (n=" +
                            std::to_string(branches.size()) + ")");
  }
  std::vector<std::size_t> out;
  const Branch& b = branches.branches[i];
  for (std::size_t m = 0; m < branches.num_motors(); ++m) {
    if (!b.owns(m)) out.push_back(m);
  }
  return out;
}

BranchSet single_branch(std::size_t num_motors,
                        std::vector<std::string> motor_names) {
  BranchSet set;
  set.motor_names = std::move(motor_names);
  set.motor_names.resize(num_motors);
  Branch b;
  b.leaf = "all";
  for (std::size_t m = 0; m < num_motors; ++m) b.motors.push_back(m);
  set.branches.push_back(std::move(b));
  return set;
}

}  // namespace demos
