#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "demos/envsim.hpp"
#include "demos/policy.hpp"
#include "demos/training.hpp"

namespace demos {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to rebuild a policy and its environment. The byte
/// layout is described in docs/checkpoint.md.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string urdf;
  std::uint64_t robot_hash = 0;
  DecentralizedPolicy policy;
  std::optional<Mlp> critic;
  EnvConfig env;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  /// Free-form record (e.g. the evaluation that was run right after saving).
  nlohmann::json notes = nlohmann::json::object();

  /// Parses the embedded URDF and checks it against the stored hash and
  /// branch structure.
  Robot robot() const;
};

void write_checkpoint(const Checkpoint& ck, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointError if `robot` is not the robot the checkpoint was
/// trained on.
void check_robot(const Checkpoint& ck, const Robot& robot);

/// Human-readable mask listing: one line per branch with the motors it may
/// drive outside its own group.
std::string mask_report(const DecentralizedPolicy& policy);

}  // namespace demos
