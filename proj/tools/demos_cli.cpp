// demos: train, analyze, decouple, evaluate, compose and plot branch policies.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "demos/checkpoint.hpp"
#include "demos/config.hpp"
#include "demos/envsim.hpp"
#include "demos/policy.hpp"
#include "demos/report.hpp"
#include "demos/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace demos;

namespace {

// Error with a specific process exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::string> branch_labels(const BranchSet& b) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < b.size(); ++i) out.push_back("B" + std::to_string(i + 1));
  return out;
}

void print_matrix(std::ostream& out, const std::string& title, const Eigen::MatrixXd& m) {
  out << title << '\n';
  out << std::setw(6) << "";
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    out << std::setw(11) << ("B" + std::to_string(j + 1));
  }
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << std::setw(6) << ("B" + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::ostringstream cell;
      cell << std::setprecision(4) << m(i, j);
      out << std::setw(11) << cell.str();
    }
    out << '\n';
  }
}

ConnectionMatrix analyze_policy(const Checkpoint& ck, const Robot& robot,
                                std::size_t batch, std::size_t envs, double p,
                                std::uint64_t seed) {
  if (ck.policy.num_branches() < 2) {
    throw UsageError("connection analysis needs a policy with at least two branches");
  }
  const Eigen::MatrixXd obs =
      collect_analysis_batch(ck.policy, robot, ck.env, batch, envs, seed);
  const auto local = ck.policy.local_observations(obs);
  return connection_matrix(ck.policy, local, p);
}

void write_analysis(const fs::path& dir, const ConnectionMatrix& c, const BranchSet& b) {
  fs::create_directories(dir);
  const auto labels = branch_labels(b);
  {
    auto out = open_out(dir / "strength.csv");
    write_matrix_csv(out, c.strength, labels, labels);
  }
  {
    auto out = open_out(dir / "relative.csv");
    write_matrix_csv(out, c.relative, labels, labels);
  }
  {
    auto out = open_out(dir / "motor.csv");
    write_matrix_csv(out, c.motor, labels, b.motor_names);
  }
}

std::string describe_edits(const DecentralizedPolicy& policy,
                           const std::vector<MaskEdit>& edits) {
  std::ostringstream out;
  for (const auto& e : edits) {
    out << "  cleared " << policy.branches.label(e.branch) << " -> "
        << policy.branches.motor_names.at(e.motor) << '\n';
  }
  return out.str();
}

std::size_t resolve_branch(const BranchSet& b, const std::string& key) {
  const auto i = b.find(key);
  if (!i) throw UsageError("unknown branch '" + key + "'");
  return *i;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
  std::string out;
  std::size_t checkpoint_every = 50;
  bool quiet = false;
};

Checkpoint make_checkpoint(const Robot& robot, const DecentralizedPolicy& policy,
                           const Mlp* critic, const RunConfig& cfg,
                           std::size_t iteration) {
  Checkpoint ck;
  ck.urdf = robot.urdf;
  ck.robot_hash = robot.hash;
  ck.policy = policy;
  if (critic) ck.critic = *critic;
  ck.env = cfg.env;
  ck.train = cfg.train;
  ck.seed = cfg.train.seed;
  ck.iteration = iteration;
  return ck;
}

// Evaluates, records the result in the checkpoint notes and saves it.
EvalRow save_evaluated(Checkpoint& ck, const Robot& robot, const RunConfig& cfg,
                       const fs::path& path, const std::string& label) {
  EvalRow row{label, "none",
              evaluate(ck.policy, robot, ck.env, std::nullopt, cfg.eval.episodes,
                       cfg.eval.seed)};
  ck.notes["eval"] = {{"episodes", cfg.eval.episodes},
                      {"seed", cfg.eval.seed},
                      {"mean_return", row.result.mean_return},
                      {"std_return", row.result.std_return}};
  save_checkpoint(ck, path);
  return row;
}

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = load_run_config(args.config);
  if (!args.mode.empty()) cfg.mode = parse_policy_kind(args.mode);
  if (args.seed) cfg.train.seed = *args.seed;
  if (args.iterations) cfg.train.iterations = *args.iterations;
  cfg.train.validate();
  const Robot robot = Robot::from_file(cfg.robot.string());

  const fs::path dir = args.out;
  fs::create_directories(dir / "checkpoints");
  fs::remove(dir / "FAILED");
  write_text(dir / "robot.urdf", robot.urdf);
  write_text(dir / "config.json", to_json(cfg, "robot.urdf").dump(2) + "\n");

  auto metrics = open_out(dir / "metrics.csv");
  auto timing = open_out(dir / "timing.csv");
  write_metrics_header(metrics);
  write_timing_header(timing);
  std::optional<std::ofstream> connections;
  if (cfg.mode != PolicyKind::kCentralized) {
    connections = open_out(dir / "connections.csv");
    write_connection_header(*connections);
  }

  try {
    TrainResult result = train(
        robot, cfg.env, cfg.train, cfg.mode, [&](const IterationView& v) {
          write_metrics_row(metrics, v.metrics);
          write_timing_row(timing, v.metrics);
          metrics.flush();
          if (connections && v.connections) {
            write_connection_rows(*connections, *v.connections);
          }
          const std::size_t done = v.metrics.iteration + 1;
          if (args.checkpoint_every > 0 && done % args.checkpoint_every == 0) {
            std::ostringstream name;
            name << "iter_" << std::setw(6) << std::setfill('0') << done << ".ckpt";
            save_checkpoint(make_checkpoint(robot, v.policy, &v.critic, cfg, done),
                            dir / "checkpoints" / name.str());
          }
          if (!args.quiet) {
            std::fprintf(stderr, "iter %5zu  reward %.4f  kl %.4f  lr %.2e  %.1fs\n",
                         v.metrics.iteration, v.metrics.mean_reward, v.metrics.update.kl,
                         v.metrics.update.learning_rate, v.metrics.wall_time);
          }
        });

    auto eval = open_out(dir / "eval.csv");
    write_eval_header(eval);
    if (cfg.mode == PolicyKind::kDemos) {
      Checkpoint pre = make_checkpoint(robot, result.unmasked, &result.critic, cfg,
                                       cfg.train.iterations);
      write_eval_row(eval, save_evaluated(pre, robot, cfg, dir / "unmasked.ckpt",
                                          "unmasked"));
      if (result.analysis) write_analysis(dir / "analysis", *result.analysis, robot.branches);
    }
    Checkpoint final_ck =
        make_checkpoint(robot, result.policy, &result.critic, cfg, result.iterations);
    if (result.decoupling) {
      json edits = json::array();
      for (const auto& e : result.decoupling->cleared) edits.push_back({e.branch, e.motor});
      final_ck.notes["cleared"] = edits;
    }
    write_eval_row(eval, save_evaluated(final_ck, robot, cfg, dir / "final.ckpt", "final"));

    std::string report = mask_report(result.policy);
    if (result.decoupling) {
      report += "\nbranch-level edits (eta " + format_double(cfg.train.eta) + "):\n" +
                describe_edits(result.policy, result.decoupling->cleared);
    }
    if (result.motor_decoupling) {
      report += "\nmotor-level edits (eta' " + format_double(cfg.train.eta_prime) +
                "):\n" + describe_edits(result.policy, result.motor_decoupling->cleared);
    }
    write_text(dir / "mask_report.txt", report);
    std::cout << report;
    std::cout << "final evaluation: mean return "
              << format_double(final_ck.notes["eval"]["mean_return"].get<double>())
              << " over " << cfg.eval.episodes << " episodes\n";
  } catch (const std::exception& e) {
    write_text(dir / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
  return 0;
}

// ------------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string checkpoint;
  std::string robot;
  std::size_t batch = 4096;
  std::size_t envs = 64;
  double p = 1.0;
  double eta = 0.04;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const Robot robot = args.robot.empty() ? ck.robot() : Robot::from_file(args.robot);
  check_robot(ck, robot);
  const std::uint64_t seed = args.seed.value_or(ck.seed ^ 0xa5a5a5a5ULL);
  const ConnectionMatrix c = analyze_policy(ck, robot, args.batch, args.envs, args.p, seed);

  print_matrix(std::cout, "connection strength C", c.strength);
  print_matrix(std::cout, "relative strength C_ij / C_jj", c.relative);
  const auto& b = ck.policy.branches;
  std::cout << "pruning preview at eta " << format_double(args.eta) << ":\n";
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (i == j) continue;
      const double r = c.relative(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (c.undefined(i, j) || r < args.eta) {
        std::cout << "  (" << i + 1 << ',' << j + 1 << ") " << b.label(i) << " -> "
                  << b.label(j) << ": " << (c.undefined(i, j) ? "undefined" : format_double(r))
                  << '\n';
        ++flagged;
      }
    }
  }
  if (flagged == 0) std::cout << "  nothing below the threshold\n";
  if (!args.out.empty()) {
    write_analysis(args.out, c, b);
    std::cout << "wrote " << args.out << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------ decouple

struct DecoupleArgs {
  std::string checkpoint;
  std::string out;
  double eta = 0.04;
  bool motor_level = false;
  double eta_prime = 0.04;
  std::size_t batch = 4096;
  std::size_t envs = 64;
  double p = 1.0;
  std::optional<std::uint64_t> seed;
};

int cmd_decouple(const DecoupleArgs& args) {
  Checkpoint ck = load_checkpoint(args.checkpoint);
  const Robot robot = ck.robot();
  if (args.eta < 0.0 || args.eta_prime < 0.0) throw UsageError("thresholds must be >= 0");
  std::vector<MaskEdit> cleared;
  const bool branch_level = args.eta > 0.0;
  const bool motor_level = args.motor_level && args.eta_prime > 0.0;
  if (ck.policy.num_branches() > 1 && (branch_level || motor_level)) {
    const std::uint64_t seed = args.seed.value_or(ck.seed ^ 0xa5a5a5a5ULL);
    const ConnectionMatrix c =
        analyze_policy(ck, robot, args.batch, args.envs, args.p, seed);
    if (branch_level) {
      DecouplingResult r = apply_branch_decoupling(ck.policy, c, args.eta);
      ck.policy.mask = r.mask;
      cleared.insert(cleared.end(), r.cleared.begin(), r.cleared.end());
    }
    if (motor_level) {
      DecouplingResult r = apply_motor_decoupling(ck.policy, c, args.eta_prime);
      for (const auto& [i, m] : r.undefined) {
        std::cout << "note: motor " << ck.policy.branches.motor_names.at(m)
                  << " has zero own-branch strength; entry for "
                  << ck.policy.branches.label(i) << " left unchanged\n";
      }
      ck.policy.mask = r.mask;
      cleared.insert(cleared.end(), r.cleared.begin(), r.cleared.end());
    }
  }
  ck.policy.mask.validate();
  if (cleared.empty()) {
    std::cout << "no mask changes\n";
  } else {
    std::cout << cleared.size() << " mask entries cleared:\n"
              << describe_edits(ck.policy, cleared);
  }
  ck.notes.erase("eval");
  save_checkpoint(ck, args.out);
  std::cout << mask_report(ck.policy);
  return 0;
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string robot;
  std::vector<std::string> malfunctions;
  std::string sweep;
  std::vector<double> levels{0.0, 0.05, 0.1, 0.2, 0.4};
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
  std::string label;
  std::string arm_task;
  std::string out;
  bool append = false;
};

EnvConfig with_arm_task(EnvConfig env, const std::string& task) {
  if (task.empty()) return env;
  json j = {{"arm_task", task}};
  update_from_json(j, env);
  return env;
}

int cmd_eval(const EvalArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const Robot robot = args.robot.empty() ? ck.robot() : Robot::from_file(args.robot);
  check_robot(ck, robot);
  const EnvConfig env = with_arm_task(ck.env, args.arm_task);
  const EvalSettings defaults;
  const std::size_t episodes = args.episodes.value_or(defaults.episodes);
  const std::uint64_t seed = args.seed.value_or(defaults.seed);
  if (episodes == 0) throw UsageError("--episodes must be positive");
  const std::string label =
      args.label.empty() ? fs::path(args.checkpoint).stem().string() : args.label;

  std::vector<std::string> specs;
  if (!args.sweep.empty()) {
    for (double level : args.levels) specs.push_back(args.sweep + ":" + format_double(level));
  }
  specs.insert(specs.end(), args.malfunctions.begin(), args.malfunctions.end());
  if (specs.empty()) specs.push_back("none");

  std::vector<EvalRow> rows;
  for (const auto& spec : specs) {
    std::optional<MalfunctionSpec> m;
    std::string text = "none";
    if (spec != "none") {
      m = parse_malfunction(spec, robot.tree);
      text = to_string(*m, robot.tree);
    }
    rows.push_back({label, text, evaluate(ck.policy, robot, env, m, episodes, seed)});
  }

  write_eval_header(std::cout);
  for (const auto& r : rows) write_eval_row(std::cout, r);
  if (!args.out.empty()) {
    const bool header = !args.append || !fs::exists(args.out) || fs::file_size(args.out) == 0;
    std::ofstream out(args.out, std::ios::binary | (args.append ? std::ios::app : std::ios::trunc));
    if (!out) throw std::runtime_error("cannot write " + args.out);
    if (header) write_eval_header(out);
    for (const auto& r : rows) write_eval_row(out, r);
  }
  return 0;
}

// ------------------------------------------------------------------ transfer

struct TransferArgs {
  std::vector<std::string> fragments;
  std::vector<std::string> replacements;
  std::string out;
  std::string arm_task;
  std::size_t episodes = 32;
  std::uint64_t seed = 1000;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, sep)) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

int cmd_transfer(const TransferArgs& args) {
  if (args.fragments.empty()) throw UsageError("at least one --fragment is required");
  // PATH or PATH@B1,B2
  std::vector<Checkpoint> sources;
  std::vector<std::vector<std::string>> keys;
  for (const auto& f : args.fragments) {
    const auto at = f.rfind('@');
    sources.push_back(load_checkpoint(f.substr(0, at)));
    keys.push_back(at == std::string::npos ? std::vector<std::string>{}
                                           : split(f.substr(at + 1), ','));
  }
  const Checkpoint& base = sources.front();
  const Robot robot = base.robot();
  for (const auto& s : sources) check_robot(s, robot);
  const BranchSet& branches = base.policy.branches;
  const EnvConfig env = with_arm_task(base.env, args.arm_task);

  // BRANCH=hold[:value] or BRANCH=swing[:amplitude]
  std::map<std::size_t, ScriptedController> replacements;
  for (const auto& r : args.replacements) {
    const auto eq = r.find('=');
    if (eq == std::string::npos) throw UsageError("--replace expects BRANCH=KIND[:VALUE]");
    const std::size_t i = resolve_branch(branches, r.substr(0, eq));
    const auto parts = split(r.substr(eq + 1), ':');
    if (parts.empty() || parts.size() > 2) throw UsageError("bad replacement '" + r + "'");
    ScriptedController c;
    c.kind = parse_controller_kind(parts[0]);
    c.value = parts.size() == 2 ? std::stod(parts[1])
              : c.kind == ScriptedController::Kind::kHoldPose ? env.arm_hold_angle
                                                              : env.gait_amplitude;
    c.action_scale = env.action_scale;
    c.lead_motor = lead_motor(branches, i);
    replacements[i] = c;
  }

  std::vector<bool> taken(branches.size(), false);
  for (const auto& [i, c] : replacements) taken[i] = true;
  std::vector<PolicyFragment> fragments;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    PolicyFragment f{&sources[k].policy, {}};
    if (keys[k].empty()) {
      for (std::size_t i = 0; i < branches.size(); ++i) {
        if (!taken[i]) f.branches.push_back(i);
      }
    } else {
      for (const auto& key : keys[k]) f.branches.push_back(resolve_branch(branches, key));
    }
    for (std::size_t i : f.branches) taken[i] = true;
    fragments.push_back(std::move(f));
  }

  Checkpoint out = base;
  out.policy = compose(fragments, replacements);
  out.env = env;
  out.critic.reset();
  out.notes = json::object();
  const EvalResult r = evaluate(out.policy, robot, env, std::nullopt, args.episodes, args.seed);
  out.notes["eval"] = {{"episodes", args.episodes},
                       {"seed", args.seed},
                       {"mean_return", r.mean_return},
                       {"std_return", r.std_return}};
  save_checkpoint(out, args.out);
  std::cout << mask_report(out.policy);
  write_eval_header(std::cout);
  write_eval_row(std::cout, {fs::path(args.out).stem().string(), "none", r});
  return 0;
}

// ---------------------------------------------------------------------- plot

struct PlotArgs {
  std::vector<std::string> runs;
  std::string out;
  double eta = 0.04;
};

int cmd_plot(const PlotArgs& args) {
  const fs::path out = args.out.empty() ? fs::path(args.runs.front()) / "plots" : fs::path(args.out);
  fs::create_directories(out);
  std::size_t written = 0;
  auto warn = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  auto name_of = [](const fs::path& run) {
    const auto n = fs::path(run).lexically_normal().filename().string();
    return n.empty() ? fs::path(run).lexically_normal().parent_path().filename().string() : n;
  };

  std::vector<std::pair<std::string, CsvTable>> metrics;
  CsvTable eval;
  for (const auto& run : args.runs) {
    const fs::path dir = run;
    const std::string name = name_of(dir);
    if (fs::exists(dir / "metrics.csv")) {
      CsvTable t = read_csv_file(dir / "metrics.csv");
      if (t.rows.empty()) {
        warn(name + ": metrics.csv is empty");
      } else {
        metrics.emplace_back(name, std::move(t));
      }
    } else {
      warn(name + ": no metrics.csv");
    }
    if (fs::exists(dir / "connections.csv")) {
      const auto charts = connection_charts(read_csv_file(dir / "connections.csv"), args.eta);
      if (!charts.empty()) {
        std::size_t n = 1;
        while (n * n < charts.size()) ++n;
        const fs::path file = out / (args.runs.size() > 1 ? name + "_connections.svg"
                                                          : std::string("connections.svg"));
        write_text(file, render_svg_grid(charts, n, name + ": relative connection strength"));
        ++written;
      } else {
        warn(name + ": connections.csv has no rows");
      }
    }
    if (fs::exists(dir / "eval.csv")) {
      CsvTable t = read_csv_file(dir / "eval.csv");
      if (eval.header.empty()) eval.header = t.header;
      for (auto& row : t.rows) {
        if (!row.empty() && args.runs.size() > 1) row[0] = name + "/" + row[0];
        eval.rows.push_back(std::move(row));
      }
    }
  }
  if (auto chart = reward_chart(metrics)) {
    write_text(out / "reward.svg", render_svg(*chart));
    ++written;
  } else {
    warn("no metrics to plot");
  }
  if (auto chart = sweep_chart(eval)) {
    write_text(out / "sweep.svg", render_svg(*chart));
    ++written;
  }
  std::cout << "wrote " << written << " plot(s) to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized branch policies: training, pruning and evaluation"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a policy and write a run directory");
  train_cmd->add_option("config", ta.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--mode", ta.mode, "demos, centralized or local_actors (overrides config)");
  train_cmd->add_option("--seed", ta.seed, "Training seed (overrides config)");
  train_cmd->add_option("--iterations", ta.iterations, "Iterations (overrides config)");
  train_cmd->add_option("--out", ta.out, "Run directory")->required();
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every,
                        "Checkpoint interval in iterations (0 disables)");
  train_cmd->add_flag("--quiet", ta.quiet, "No per-iteration progress");

  AnalyzeArgs aa;
  auto* analyze_cmd = app.add_subcommand("analyze", "Connection strengths of a checkpoint");
  analyze_cmd->add_option("checkpoint", aa.checkpoint)->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--robot", aa.robot, "URDF to check against the checkpoint");
  analyze_cmd->add_option("--batch-size", aa.batch, "Samples in the analysis batch");
  analyze_cmd->add_option("--envs", aa.envs, "Parallel envs for the analysis rollout");
  analyze_cmd->add_option("--p", aa.p, "Norm order");
  analyze_cmd->add_option("--eta", aa.eta, "Threshold for the pruning preview");
  analyze_cmd->add_option("--seed", aa.seed, "Rollout seed");
  analyze_cmd->add_option("--out", aa.out, "Directory for C / relative / S CSVs");

  DecoupleArgs da;
  auto* decouple_cmd = app.add_subcommand("decouple", "Prune weak connections into a new checkpoint");
  decouple_cmd->add_option("checkpoint", da.checkpoint)->required()->check(CLI::ExistingFile);
  decouple_cmd->add_option("--out", da.out, "Output checkpoint")->required();
  decouple_cmd->add_option("--eta", da.eta, "Branch-level threshold (0 disables)");
  decouple_cmd->add_flag("--motor-level", da.motor_level, "Also prune single branch->motor edges");
  decouple_cmd->add_option("--eta-prime", da.eta_prime, "Motor-level threshold");
  decouple_cmd->add_option("--batch-size", da.batch);
  decouple_cmd->add_option("--envs", da.envs);
  decouple_cmd->add_option("--p", da.p);
  decouple_cmd->add_option("--seed", da.seed);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint, optionally under malfunctions");
  eval_cmd->add_option("checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--robot", ea.robot, "URDF to check against the checkpoint");
  eval_cmd->add_option("--malfunction", ea.malfunctions, "kind:motor:level, repeatable");
  eval_cmd->add_option("--sweep", ea.sweep, "kind:motor; evaluates every --levels value");
  eval_cmd->add_option("--levels", ea.levels, "Sweep levels")->delimiter(',');
  eval_cmd->add_option("--episodes", ea.episodes);
  eval_cmd->add_option("--seed", ea.seed);
  eval_cmd->add_option("--label", ea.label, "Label column (default: checkpoint name)");
  eval_cmd->add_option("--arm-task", ea.arm_task, "Override the arm task: swing or hold");
  eval_cmd->add_option("--out", ea.out, "Also write rows to this CSV");
  eval_cmd->add_flag("--append", ea.append, "Append to --out instead of replacing it");

  TransferArgs xa;
  auto* transfer_cmd = app.add_subcommand("transfer", "Compose fragments and scripted controllers");
  transfer_cmd->add_option("--fragment", xa.fragments,
                           "CKPT or CKPT@B1,B2 (branch labels or leaf names), repeatable")
      ->required();
  transfer_cmd->add_option("--replace", xa.replacements,
                           "BRANCH=hold[:angle] or BRANCH=swing[:amplitude], repeatable");
  transfer_cmd->add_option("--arm-task", xa.arm_task, "Arm task of the new env: swing or hold");
  transfer_cmd->add_option("--out", xa.out, "Composite checkpoint")->required();
  transfer_cmd->add_option("--episodes", xa.episodes);
  transfer_cmd->add_option("--seed", xa.seed);

  PlotArgs pa;
  auto* plot_cmd = app.add_subcommand("plot", "Render SVG plots from run directories");
  plot_cmd->add_option("runs", pa.runs, "Run directories")->required();
  plot_cmd->add_option("--out", pa.out, "Output directory (default: <first run>/plots)");
  plot_cmd->add_option("--eta", pa.eta, "Threshold line on connection plots");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*analyze_cmd) return cmd_analyze(aa);
    if (*decouple_cmd) return cmd_decouple(da);
    if (*eval_cmd) return cmd_eval(ea);
    if (*transfer_cmd) return cmd_transfer(xa);
    if (*plot_cmd) return cmd_plot(pa);
  } catch (const CompositionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
