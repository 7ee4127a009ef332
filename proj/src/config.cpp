#include "demos/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace demos {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// Unsigned fields reject negative numbers instead of wrapping.
void read_count(const json& j, const char* key, std::size_t& out,
                const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + " must be a nonnegative integer");
  }
  out = v.get<std::size_t>();
}

std::string to_string(ArmTask task) {
  return task == ArmTask::kSwing ? "swing" : "hold";
}

ArmTask parse_arm_task(const std::string& text) {
  if (text == "swing") return ArmTask::kSwing;
  if (text == "hold") return ArmTask::kHold;
  throw ConfigError("env.arm_task must be 'swing' or 'hold', got '" + text + "'");
}

}  // namespace

json to_json(const EnvConfig& env) {
  return {
      {"policy_dt", env.policy_dt},
      {"substeps", env.substeps},
      {"kp", env.kp},
      {"kd", env.kd},
      {"clock_period", env.clock_period},
      {"episode_length", env.episode_length},
      {"action_scale", env.action_scale},
      {"velocity_obs_scale", env.velocity_obs_scale},
      {"default_inertia", env.default_inertia},
      {"default_damping", env.default_damping},
      {"gait_amplitude", env.gait_amplitude},
      {"init_noise", env.init_noise},
      {"disturbance_max", env.disturbance_max},
      {"coordinated_pair", env.coordinated_pair},
      {"leg_phase_offsets", env.leg_phase_offsets},
      {"arm_task", to_string(env.arm_task)},
      {"arm_hold_angle", env.arm_hold_angle},
      {"invalid_action_reward", env.invalid_action_reward},
      {"weights",
       {{"balance", env.weights.balance},
        {"gait", env.weights.gait},
        {"arm", env.weights.arm},
        {"torque", env.weights.torque},
        {"smooth", env.weights.smooth}}},
  };
}

void update_from_json(const json& j, EnvConfig& out) {
  const std::string w = "env";
  check_keys(j,
             {"policy_dt", "substeps", "kp", "kd", "clock_period",
              "episode_length", "action_scale", "velocity_obs_scale", "default_inertia",
              "default_damping", "gait_amplitude", "init_noise",
              "disturbance_max", "coordinated_pair", "leg_phase_offsets",
              "arm_task", "arm_hold_angle", "invalid_action_reward", "weights"},
             w);
  read(j, "policy_dt", out.policy_dt, w);
  read(j, "substeps", out.substeps, w);
  read(j, "kp", out.kp, w);
  read(j, "kd", out.kd, w);
  read(j, "clock_period", out.clock_period, w);
  read(j, "episode_length", out.episode_length, w);
  read(j, "action_scale", out.action_scale, w);
  read(j, "velocity_obs_scale", out.velocity_obs_scale, w);
  read(j, "default_inertia", out.default_inertia, w);
  read(j, "default_damping", out.default_damping, w);
  read(j, "gait_amplitude", out.gait_amplitude, w);
  read(j, "init_noise", out.init_noise, w);
  read(j, "disturbance_max", out.disturbance_max, w);
  read(j, "coordinated_pair", out.coordinated_pair, w);
  read(j, "leg_phase_offsets", out.leg_phase_offsets, w);
  read(j, "arm_hold_angle", out.arm_hold_angle, w);
  read(j, "invalid_action_reward", out.invalid_action_reward, w);
  if (j.contains("arm_task")) {
    out.arm_task = parse_arm_task(j.at("arm_task").get<std::string>());
  }
  if (j.contains("weights")) {
    const json& wj = j.at("weights");
    const std::string ww = "env.weights";
    check_keys(wj, {"balance", "gait", "arm", "torque", "smooth"}, ww);
    read(wj, "balance", out.weights.balance, ww);
    read(wj, "gait", out.weights.gait, ww);
    read(wj, "arm", out.weights.arm, ww);
    read(wj, "torque", out.weights.torque, ww);
    read(wj, "smooth", out.weights.smooth, ww);
  }
}

json to_json(const TrainConfig& t) {
  return {
      {"num_envs", t.num_envs},
      {"steps_per_env", t.steps_per_env},
      {"epochs", t.epochs},
      {"minibatches", t.minibatches},
      {"gamma", t.gamma},
      {"gae_lambda", t.gae_lambda},
      {"clip", t.clip},
      {"entropy_coef", t.entropy_coef},
      {"desired_kl", t.desired_kl},
      {"learning_rate", t.learning_rate},
      {"min_learning_rate", t.min_learning_rate},
      {"max_learning_rate", t.max_learning_rate},
      {"weight_decay", t.weight_decay},
      {"lambda", t.demos_lambda},
      {"norm_p", t.norm_p},
      {"value_coef", t.value_coef},
      {"max_grad_norm", t.max_grad_norm},
      {"reward_scale", t.reward_scale},
      {"iterations", t.iterations},
      {"seed", t.seed},
      {"hidden", t.policy.hidden},
      {"output_gain", t.policy.output_gain},
      {"init_log_std", t.policy.log_std},
      {"critic_hidden", t.critic_hidden},
      {"eta", t.eta},
      {"motor_level", t.motor_level},
      {"eta_prime", t.eta_prime},
      {"analysis_batch", t.analysis_batch},
      {"analysis_envs", t.analysis_envs},
      {"finetune_iterations", t.finetune_iterations},
  };
}

void update_from_json(const json& j, TrainConfig& out) {
  const std::string w = "train";
  check_keys(j,
             {"num_envs", "steps_per_env", "epochs", "minibatches", "gamma",
              "gae_lambda", "clip", "entropy_coef", "desired_kl",
              "learning_rate", "min_learning_rate", "max_learning_rate",
              "weight_decay", "lambda", "norm_p", "value_coef", "max_grad_norm",
              "reward_scale", "iterations", "seed", "hidden", "output_gain",
              "init_log_std", "critic_hidden", "eta", "motor_level",
              "eta_prime", "analysis_batch", "analysis_envs",
              "finetune_iterations"},
             w);
  read_count(j, "num_envs", out.num_envs, w);
  read_count(j, "steps_per_env", out.steps_per_env, w);
  read_count(j, "epochs", out.epochs, w);
  read_count(j, "minibatches", out.minibatches, w);
  read(j, "gamma", out.gamma, w);
  read(j, "gae_lambda", out.gae_lambda, w);
  read(j, "clip", out.clip, w);
  read(j, "entropy_coef", out.entropy_coef, w);
  read(j, "desired_kl", out.desired_kl, w);
  read(j, "learning_rate", out.learning_rate, w);
  read(j, "min_learning_rate", out.min_learning_rate, w);
  read(j, "max_learning_rate", out.max_learning_rate, w);
  read(j, "weight_decay", out.weight_decay, w);
  read(j, "lambda", out.demos_lambda, w);
  read(j, "norm_p", out.norm_p, w);
  read(j, "value_coef", out.value_coef, w);
  read(j, "max_grad_norm", out.max_grad_norm, w);
  read(j, "reward_scale", out.reward_scale, w);
  read_count(j, "iterations", out.iterations, w);
  read(j, "seed", out.seed, w);
  read(j, "hidden", out.policy.hidden, w);
  read(j, "output_gain", out.policy.output_gain, w);
  read(j, "init_log_std", out.policy.log_std, w);
  read(j, "critic_hidden", out.critic_hidden, w);
  read(j, "eta", out.eta, w);
  read(j, "motor_level", out.motor_level, w);
  read(j, "eta_prime", out.eta_prime, w);
  read_count(j, "analysis_batch", out.analysis_batch, w);
  read_count(j, "analysis_envs", out.analysis_envs, w);
  read_count(j, "finetune_iterations", out.finetune_iterations, w);
}

json to_json(const EvalSettings& e) {
  return {{"episodes", e.episodes}, {"seed", e.seed}};
}

void update_from_json(const json& j, EvalSettings& out) {
  check_keys(j, {"episodes", "seed"}, "eval");
  read_count(j, "episodes", out.episodes, "eval");
  read(j, "seed", out.seed, "eval");
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"robot", "mode", "env", "train", "eval"}, "config");
  if (!j.contains("robot") || !j.at("robot").is_string()) {
    throw ConfigError("config.robot must name a URDF file");
  }
  RunConfig cfg;
  std::filesystem::path robot = j.at("robot").get<std::string>();
  cfg.robot = robot.is_absolute() ? robot : base_dir / robot;
  if (j.contains("mode")) {
    try {
      cfg.mode = parse_policy_kind(j.at("mode").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config.mode: ") + e.what());
    }
  }
  if (j.contains("env")) update_from_json(j.at("env"), cfg.env);
  if (j.contains("train")) update_from_json(j.at("train"), cfg.train);
  if (j.contains("eval")) update_from_json(j.at("eval"), cfg.eval);
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (cfg.eval.episodes == 0) throw ConfigError("eval.episodes must be positive");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

json to_json(const RunConfig& config, const std::string& robot_ref) {
  return {{"robot", robot_ref},
          {"mode", to_string(config.mode)},
          {"env", to_json(config.env)},
          {"train", to_json(config.train)},
          {"eval", to_json(config.eval)}};
}

}  // namespace demos
