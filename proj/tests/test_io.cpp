#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "demos/checkpoint.hpp"
#include "demos/config.hpp"
#include "demos/report.hpp"
#include "test_util.hpp"

namespace demos {
namespace {

using nlohmann::json;

Robot humanoid() { return Robot::from_file(test::robot_path("humanoid")); }

Checkpoint sample_checkpoint(PolicyKind kind = PolicyKind::kDemos) {
  const Robot r = humanoid();
  Checkpoint ck;
  ck.urdf = r.urdf;
  ck.robot_hash = r.hash;
  ck.train.policy.hidden = {8};
  std::mt19937_64 rng(1);
  ck.policy = make_policy(kind, r.branches, ck.train.policy, rng);
  ck.policy.log_std.setConstant(-0.7);
  ck.critic = make_critic(53, {8}, rng);
  ck.seed = 17;
  ck.iteration = 300;
  ck.env.arm_task = ArmTask::kHold;
  ck.notes["eval"] = {{"mean_return", 1.5}};
  return ck;
}

std::string bytes_of(const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(ck, out);
  return out.str();
}

Checkpoint parse(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_checkpoint(in);
}

TEST(Checkpoint, RoundTripIsByteExact) {
  Checkpoint ck = sample_checkpoint();
  ck.policy.mask.clear(1, ck.policy.branches[3].motors[2]);
  ck.policy.replacements[0] =
      ScriptedController{ScriptedController::Kind::kSwing, 0.4, 0.5, ck.policy.branches[0].motors[0]};
  const std::string bytes = bytes_of(ck);
  EXPECT_EQ(bytes.substr(0, 8), "DEMOSCKP");
  const Checkpoint back = parse(bytes);
  EXPECT_EQ(bytes_of(back), bytes);
  EXPECT_EQ(back.policy.mask, ck.policy.mask);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back.policy.nets[i].params(), ck.policy.nets[i].params());
  EXPECT_EQ(back.policy.log_std, ck.policy.log_std);
  ASSERT_TRUE(back.critic.has_value());
  EXPECT_EQ(back.critic->params(), ck.critic->params());
  ASSERT_TRUE(back.policy.replaced(0));
  EXPECT_EQ(back.policy.replacements[0]->value, 0.4);
  EXPECT_EQ(back.env.arm_task, ArmTask::kHold);
  EXPECT_EQ(back.seed, 17u);
  EXPECT_EQ(back.iteration, 300u);
  EXPECT_EQ(back.notes["eval"]["mean_return"], 1.5);
  EXPECT_EQ(back.robot().hash, humanoid().hash);
}

TEST(Checkpoint, PoliciesBehaveIdenticallyAfterReload) {
  for (PolicyKind kind : {PolicyKind::kDemos, PolicyKind::kCentralized, PolicyKind::kLocalActors}) {
    const Checkpoint ck = sample_checkpoint(kind);
    const Checkpoint back = parse(bytes_of(ck));
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd obs = test::random_matrix(53, 4, rng);
    EXPECT_EQ(back.policy.mean_action(obs), ck.policy.mean_action(obs)) << to_string(kind);
    EXPECT_EQ(back.policy.kind, kind);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "demos_io_test.ckpt";
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(bytes_of(back), bytes_of(ck));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, RejectsCorruption) {
  const std::string bytes = bytes_of(sample_checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse(bad_magic), CheckpointError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(parse(bad_version), CheckpointError);
  EXPECT_THROW(parse(bytes.substr(0, bytes.size() - 5)), CheckpointError);
  EXPECT_THROW(parse(bytes.substr(0, 30)), CheckpointError);
  EXPECT_THROW(parse(""), CheckpointError);
}

TEST(Checkpoint, DetectsRobotMismatch) {
  const Checkpoint ck = sample_checkpoint();
  EXPECT_NO_THROW(check_robot(ck, humanoid()));
  const Robot quad = Robot::from_file(test::robot_path("quadruped"));
  EXPECT_THROW(check_robot(ck, quad), CheckpointError);

  // A tampered embedded URDF no longer matches the stored hash.
  Checkpoint tampered = ck;
  const auto pos = tampered.urdf.find("effort=\"");
  ASSERT_NE(pos, std::string::npos);
  tampered.urdf.insert(pos + 8, "1");
  EXPECT_THROW(parse(bytes_of(tampered)), CheckpointError);
}

TEST(MaskReport, ListsKeptAndReplaced) {
  Checkpoint ck = sample_checkpoint();
  auto& p = ck.policy;
  p.mask = DecouplingMask::block_diagonal(p.branches);
  p.mask.set(2, p.branches[3].motors[0], true);
  p.replacements[0] = ScriptedController{};
  const std::string text = mask_report(p);
  EXPECT_NE(text.find("1 cross-branch entries kept"), std::string::npos) << text;
  EXPECT_NE(text.find("B1 (l_hand): replaced by scripted hold controller"), std::string::npos)
      << text;
  EXPECT_NE(text.find("B2 (r_hand): own motors only"), std::string::npos) << text;
  EXPECT_NE(text.find("-> B4 (r_foot): r_hip_pitch"), std::string::npos) << text;
}

TEST(Config, ParsesOverridesAndResolvesRobot) {
  const json j = json::parse(R"({
    "robot": "robots/humanoid.urdf",
    "mode": "local_actors",
    "env": {"kp": 30, "arm_task": "hold", "weights": {"gait": 0.7}},
    "train": {"iterations": 12, "lambda": 0.05, "hidden": [32, 32], "seed": 4},
    "eval": {"episodes": 8}
  })");
  const RunConfig c = parse_run_config(j, "/data");
  EXPECT_EQ(c.robot, std::filesystem::path("/data/robots/humanoid.urdf"));
  EXPECT_EQ(c.mode, PolicyKind::kLocalActors);
  EXPECT_EQ(c.env.kp, 30.0);
  EXPECT_EQ(c.env.kd, 1.0);
  EXPECT_EQ(c.env.arm_task, ArmTask::kHold);
  EXPECT_EQ(c.env.weights.gait, 0.7);
  EXPECT_EQ(c.env.weights.balance, 1.0);
  EXPECT_EQ(c.train.iterations, 12u);
  EXPECT_EQ(c.train.demos_lambda, 0.05);
  EXPECT_EQ(c.train.policy.hidden, (std::vector<std::size_t>{32, 32}));
  EXPECT_EQ(c.train.seed, 4u);
  EXPECT_EQ(c.eval.episodes, 8u);
  EXPECT_EQ(c.eval.seed, 1000u);

  const RunConfig again = parse_run_config(to_json(c, "robots/humanoid.urdf"), "/data");
  EXPECT_EQ(to_json(again, "x"), to_json(c, "x"));
}

TEST(Config, RejectsBadInput) {
  auto bad = [](const char* text) {
    EXPECT_THROW(parse_run_config(json::parse(text), "."), ConfigError) << text;
  };
  bad(R"({"env": {}})");
  bad(R"({"robot": "r.urdf", "colour": 1})");
  bad(R"({"robot": "r.urdf", "env": {"kpp": 1}})");
  bad(R"({"robot": "r.urdf", "env": {"weights": {"speed": 1}}})");
  bad(R"({"robot": "r.urdf", "train": {"minibatches": 7}})");
  bad(R"({"robot": "r.urdf", "train": {"iterations": -3}})");
  bad(R"({"robot": "r.urdf", "train": {"lambda": "big"}})");
  bad(R"({"robot": "r.urdf", "mode": "ppo"})");
  bad(R"({"robot": "r.urdf", "eval": {"episodes": 0}})");
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"humanoid", "quadruped", "y_overlap"}) {
    const auto path = test::data_dir() / "configs" / (std::string(name) + ".json");
    const RunConfig c = load_run_config(path);
    EXPECT_TRUE(std::filesystem::exists(c.robot)) << c.robot;
    EXPECT_NO_THROW(Robot::from_file(c.robot.string()));
  }
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, -3.0, 1e-300, 123456.789, 2.0 / 3.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Csv, MetricsAndConnectionsReadBack) {
  std::ostringstream out;
  write_metrics_header(out);
  IterationMetrics m;
  m.iteration = 3;
  m.mean_reward = 1.25;
  m.update.penalty = 0.5;
  m.update.learning_rate = 5e-4;
  write_metrics_row(out, m);
  std::istringstream in(out.str());
  const CsvTable t = read_csv(in);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.numbers(*t.column("mean_reward"))[0], 1.25);
  EXPECT_EQ(t.numbers(*t.column("j_de"))[0], -0.5);
  EXPECT_EQ(t.numbers(*t.column("learning_rate"))[0], 5e-4);
  EXPECT_FALSE(t.column("wall_time").has_value());

  std::ostringstream cout;
  write_connection_header(cout);
  ConnectionRecord rec{7, Eigen::MatrixXd::Identity(3, 3)};
  rec.relative(0, 2) = 0.25;
  rec.relative(2, 1) = std::nan("");
  write_connection_rows(cout, rec);
  std::istringstream cin(cout.str());
  const CsvTable c = read_csv(cin);
  ASSERT_EQ(c.rows.size(), 6u);
  EXPECT_EQ(c.header, (std::vector<std::string>{"iteration", "i", "j", "relative"}));
  bool found = false;
  for (const auto& row : c.rows) {
    EXPECT_NE(row[1], row[2]);
    if (row[1] == "1" && row[2] == "3") {
      EXPECT_EQ(row[3], "0.25");
      found = true;
    }
    if (row[1] == "3" && row[2] == "2") {
      EXPECT_EQ(row[3], "nan");
    }
  }
  EXPECT_TRUE(found);
}

TEST(Csv, EvalRowsAndMatrix) {
  std::ostringstream out;
  write_eval_header(out);
  EvalResult r;
  r.episodes = 4;
  r.mean_return = 10.5;
  r.std_return = 1.0;
  write_eval_row(out, {"final", "stuck:l_knee:0.2", r});
  std::istringstream in(out.str());
  const CsvTable t = read_csv(in);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][*t.column("malfunction")], "stuck:l_knee:0.2");
  EXPECT_EQ(t.numbers(*t.column("mean_return"))[0], 10.5);

  std::ostringstream mat;
  write_matrix_csv(mat, Eigen::MatrixXd::Ones(2, 3), {"B1", "B2"}, {"a", "b", "c"});
  EXPECT_EQ(mat.str(), "row,a,b,c\nB1,1,1,1\nB2,1,1,1\n");
}

TEST(Svg, ChartsRenderWellFormedDocuments) {
  Chart c;
  c.title = "reward <test>";
  c.series.push_back({"run", {0, 1, 2}, {1.0, 1.5, 1.7}});
  c.hline = 1.2;
  const std::string svg = render_svg(c);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("&lt;test&gt;"), std::string::npos);
  EXPECT_EQ(svg.find("<test>"), std::string::npos);

  std::istringstream conn("iteration,i,j,relative\n0,1,2,0.5\n1,1,2,0.01\n0,2,1,nan\n");
  const auto charts = connection_charts(read_csv(conn), 0.04);
  ASSERT_EQ(charts.size(), 4u);
  EXPECT_TRUE(charts[0].series.empty());
  EXPECT_TRUE(charts[1].log_y);
  ASSERT_EQ(charts[1].series.size(), 1u);
  EXPECT_EQ(charts[1].series[0].y, (std::vector<double>{0.5, 0.01}));
  const std::string grid = render_svg_grid(charts, 2, "connections");
  EXPECT_EQ(grid.rfind("<svg", 0), 0u);

  std::istringstream eval(
      "label,malfunction,episodes,mean_return\n"
      "final,none,4,10\n"
      "final,noise:l_knee:0.1,4,9\n"
      "final,noise:l_knee:0.2,4,8\n");
  const auto sweep = sweep_chart(read_csv(eval));
  ASSERT_TRUE(sweep.has_value());
  ASSERT_EQ(sweep->series.size(), 1u);
  EXPECT_EQ(sweep->series[0].x, (std::vector<double>{0.1, 0.2}));
}

}  // namespace
}  // namespace demos
