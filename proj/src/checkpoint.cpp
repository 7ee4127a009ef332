#include "demos/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "demos/config.hpp"

namespace demos {
namespace {

using nlohmann::json;

constexpr std::array<char, 8> kMagic{'D', 'E', 'M', 'O', 'S', 'C', 'K', 'P'};
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 34;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b.data(), 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b.data(), 4);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) {
    throw CheckpointError("truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw CheckpointError("truncated checkpoint");
  }
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > kMaxLength) throw CheckpointError("corrupt checkpoint length");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw CheckpointError("truncated checkpoint");
  }
  return s;
}

void put_array(std::ostream& out, const std::string& name,
               const Eigen::Ref<const Eigen::VectorXd>& v) {
  put_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) put_u64(out, std::bit_cast<std::uint64_t>(v[k]));
}

std::pair<std::string, Eigen::VectorXd> get_array(std::istream& in) {
  std::string name = get_bytes(in, get_u64(in));
  const std::uint64_t n = get_u64(in);
  if (n > kMaxLength / 8) throw CheckpointError("corrupt array length");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::uint64_t k = 0; k < n; ++k) {
    v[static_cast<Eigen::Index>(k)] = std::bit_cast<double>(get_u64(in));
  }
  return {std::move(name), std::move(v)};
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

json branches_json(const BranchSet& set) {
  json out = json::array();
  for (const auto& b : set.branches) {
    json joints = json::array();
    for (std::size_t m : b.motors) joints.push_back(set.motor_names.at(m));
    out.push_back({{"leaf", b.leaf}, {"joints", joints}});
  }
  return out;
}

json mask_json(const DecouplingMask& mask) {
  json rows = json::array();
  for (std::size_t i = 0; i < mask.num_branches(); ++i) {
    std::string row;
    for (std::size_t m = 0; m < mask.num_motors(); ++m) {
      row.push_back(mask.allowed(i, m) ? '1' : '0');
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

Robot Checkpoint::robot() const {
  Robot r = Robot::from_urdf(urdf);
  check_robot(*this, r);
  return r;
}

void check_robot(const Checkpoint& ck, const Robot& robot) {
  if (robot.hash != ck.robot_hash) {
    throw CheckpointError("robot description hash " + hex(robot.hash) +
                          " does not match checkpoint hash " + hex(ck.robot_hash));
  }
  if (robot.branches.motor_names != ck.policy.branches.motor_names) {
    throw CheckpointError("robot motors do not match the checkpoint");
  }
}

void write_checkpoint(const Checkpoint& ck, std::ostream& out) {
  const DecentralizedPolicy& p = ck.policy;
  json nets = json::array();
  for (const auto& net : p.nets) nets.push_back(net.sizes());
  json replacements = json::array();
  for (const auto& r : p.replacements) {
    if (!r) {
      replacements.push_back(nullptr);
    } else {
      replacements.push_back({{"kind", to_string(r->kind)},
                              {"value", r->value},
                              {"action_scale", r->action_scale},
                              {"lead_motor", r->lead_motor}});
    }
  }
  json slices = json::array();
  for (std::size_t i = 0; i < p.layout.num_branches(); ++i) {
    slices.push_back(p.layout.slice(i));
  }
  json header = {
      {"format", "demos-checkpoint"},
      {"version", Checkpoint::kVersion},
      {"robot", {{"hash", hex(ck.robot_hash)}, {"urdf", ck.urdf}}},
      {"policy",
       {{"kind", to_string(p.kind)},
        {"branches", branches_json(p.branches)},
        {"layout", {{"global_dim", p.layout.global_dim()}, {"slices", slices}}},
        {"nets", nets},
        {"mask", mask_json(p.mask)},
        {"replacements", replacements}}},
      {"critic", ck.critic ? json(ck.critic->sizes()) : json(nullptr)},
      {"env", to_json(ck.env)},
      {"train", to_json(ck.train)},
      {"seed", ck.seed},
      {"iteration", ck.iteration},
      {"notes", ck.notes},
  };
  const std::string text = header.dump();

  out.write(kMagic.data(), kMagic.size());
  put_u32(out, Checkpoint::kVersion);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const std::uint64_t arrays = 1 + p.nets.size() + (ck.critic ? 1 : 0);
  put_u64(out, arrays);
  put_array(out, "log_std", p.log_std);
  for (std::size_t i = 0; i < p.nets.size(); ++i) {
    put_array(out, "net/" + std::to_string(i), p.nets[i].params());
  }
  if (ck.critic) put_array(out, "critic", ck.critic->params());
  if (!out) throw CheckpointError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = get_u32(in);
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  json header;
  try {
    header = json::parse(get_bytes(in, get_u64(in)));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  std::map<std::string, Eigen::VectorXd> arrays;
  const std::uint64_t count = get_u64(in);
  if (count > 4096) throw CheckpointError("corrupt array count");
  for (std::uint64_t k = 0; k < count; ++k) {
    auto [name, v] = get_array(in);
    arrays[name] = std::move(v);
  }

  try {
    Checkpoint ck;
    ck.urdf = header.at("robot").at("urdf").get<std::string>();
    ck.robot_hash = std::stoull(header.at("robot").at("hash").get<std::string>(),
                                nullptr, 16);
    update_from_json(header.at("env"), ck.env);
    update_from_json(header.at("train"), ck.train);
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.iteration = header.at("iteration").get<std::size_t>();
    ck.notes = header.at("notes");

    const Robot robot = Robot::from_urdf(ck.urdf);
    if (robot.hash != ck.robot_hash) {
      throw CheckpointError("embedded URDF does not match the stored hash");
    }
    const json& pj = header.at("policy");
    DecentralizedPolicy& p = ck.policy;
    p.kind = parse_policy_kind(pj.at("kind").get<std::string>());
    p.branches = p.kind == PolicyKind::kCentralized
                     ? single_branch(robot.num_motors(), robot.branches.motor_names)
                     : robot.branches;
    if (branches_json(p.branches) != pj.at("branches")) {
      throw CheckpointError("branch structure differs from the embedded robot");
    }
    p.layout = ObservationLayout(p.branches);
    if (pj.at("layout").at("global_dim").get<std::size_t>() != p.layout.global_dim()) {
      throw CheckpointError("observation layout differs from the embedded robot");
    }
    const auto& net_sizes = pj.at("nets");
    if (net_sizes.size() != p.num_branches()) {
      throw CheckpointError("net count does not match the branch count");
    }
    for (std::size_t i = 0; i < net_sizes.size(); ++i) {
      Mlp net(net_sizes[i].get<std::vector<std::size_t>>());
      const auto it = arrays.find("net/" + std::to_string(i));
      if (it == arrays.end() || it->second.size() != net.params().size()) {
        throw CheckpointError("missing or mis-sized parameters for net " +
                              std::to_string(i));
      }
      net.params() = it->second;
      p.nets.push_back(std::move(net));
    }
    const auto ls = arrays.find("log_std");
    if (ls == arrays.end()) throw CheckpointError("missing log_std");
    p.log_std = ls->second;

    p.mask = DecouplingMask(p.branches);
    const auto& rows = pj.at("mask");
    if (rows.size() != p.num_branches()) throw CheckpointError("mask has wrong shape");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string row = rows[i].get<std::string>();
      if (row.size() != p.action_dim()) throw CheckpointError("mask has wrong shape");
      for (std::size_t m = 0; m < row.size(); ++m) {
        if (row[m] == '0') {
          if (p.branches[i].owns(m)) {
            throw CheckpointError("mask clears an own-branch motor");
          }
          p.mask.clear(i, m);
        } else if (row[m] != '1') {
          throw CheckpointError("mask entries must be 0 or 1");
        }
      }
    }
    for (const auto& r : pj.at("replacements")) {
      if (r.is_null()) {
        p.replacements.emplace_back();
        continue;
      }
      ScriptedController c;
      c.kind = parse_controller_kind(r.at("kind").get<std::string>());
      c.value = r.at("value").get<double>();
      c.action_scale = r.at("action_scale").get<double>();
      c.lead_motor = r.at("lead_motor").get<std::size_t>();
      p.replacements.emplace_back(c);
    }
    p.validate();

    if (!header.at("critic").is_null()) {
      Mlp critic(header.at("critic").get<std::vector<std::size_t>>());
      const auto it = arrays.find("critic");
      if (it == arrays.end() || it->second.size() != critic.params().size()) {
        throw CheckpointError("missing or mis-sized critic parameters");
      }
      critic.params() = it->second;
      ck.critic = std::move(critic);
    }
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  } catch (const std::logic_error& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  write_checkpoint(ck, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::string mask_report(const DecentralizedPolicy& policy) {
  std::ostringstream out;
  const auto& b = policy.branches;
  out << "mode " << to_string(policy.kind) << ", " << policy.num_branches()
      << " branches, " << policy.action_dim() << " motors, "
      << policy.mask.cross_connections() << " cross-branch entries kept\n";
  for (std::size_t i = 0; i < policy.num_branches(); ++i) {
    out << b.label(i) << ":";
    if (policy.replaced(i)) {
      out << " replaced by scripted " << to_string(policy.replacements[i]->kind)
          << " controller\n";
      continue;
    }
    std::size_t kept = 0;
    for (std::size_t j = 0; j < policy.num_branches(); ++j) {
      if (j == i) continue;
      std::vector<std::string> names;
      for (std::size_t m : b[j].motors) {
        if (!b[i].owns(m) && policy.mask.allowed(i, m)) {
          names.push_back(b.motor_names[m]);
        }
      }
      if (names.empty()) continue;
      out << "\n  -> " << b.label(j) << ":";
      for (const auto& n : names) out << ' ' << n;
      kept += names.size();
    }
    out << (kept == 0 ? " own motors only\n" : "\n");
  }
  return out.str();
}

}  // namespace demos
