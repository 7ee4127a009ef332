#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "demos/envsim.hpp"
#include "demos/training.hpp"

namespace demos {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  std::size_t episodes = 32;
  std::uint64_t seed = 1000;
};

/// A run configuration file: robot, env, training and evaluation settings.
/// See docs/config.md for the schema. Unknown keys are rejected.
struct RunConfig {
  std::filesystem::path robot;  // resolved against the config file directory
  PolicyKind mode = PolicyKind::kDemos;
  EnvConfig env;
  TrainConfig train;
  EvalSettings eval;
};

nlohmann::json to_json(const EnvConfig& env);
nlohmann::json to_json(const TrainConfig& train);
nlohmann::json to_json(const EvalSettings& eval);

/// Fields absent from `j` keep the values already in `out`.
void update_from_json(const nlohmann::json& j, EnvConfig& out);
void update_from_json(const nlohmann::json& j, TrainConfig& out);
void update_from_json(const nlohmann::json& j, EvalSettings& out);

RunConfig parse_run_config(const nlohmann::json& j,
                           const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes the config with `robot_ref` as the robot path.
nlohmann::json to_json(const RunConfig& config, const std::string& robot_ref);

}  // namespace demos
