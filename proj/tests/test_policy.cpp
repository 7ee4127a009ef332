#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "demos/policy.hpp"
#include "test_util.hpp"

namespace demos {
namespace {

Robot load(const std::string& name) { return Robot::from_file(test::robot_path(name)); }

PolicyInit small_init() {
  PolicyInit init;
  init.hidden = {16, 16};
  init.output_gain = 1.0;  // large outputs so every connection is visible
  return init;
}

std::vector<Eigen::MatrixXd> random_actions(const BranchSet& branches, Eigen::Index batch,
                                            std::mt19937_64& rng) {
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    out.push_back(test::random_matrix(static_cast<Eigen::Index>(branches.num_motors()), batch, rng));
  }
  return out;
}

// Direct transcription of the strength definition, one sample at a time.
double brute_strength(const Eigen::MatrixXd& a, const std::vector<std::size_t>& motors, double p) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    double acc = 0.0;
    for (std::size_t m : motors) acc += std::pow(std::abs(a(static_cast<Eigen::Index>(m), c)), p);
    total += std::pow(acc, 1.0 / p);
  }
  return total / static_cast<double>(a.cols());
}

TEST(Mask, OwnEntriesCannotBeCleared) {
  const Robot r = load("humanoid");
  DecouplingMask mask(r.branches);
  EXPECT_EQ(mask.cross_connections(), 4u * 16 - 16);
  EXPECT_THROW(mask.clear(0, r.branches[0].motors[0]), std::logic_error);
  EXPECT_TRUE(mask.clear(0, r.branches[1].motors[0]));
  EXPECT_FALSE(mask.clear(0, r.branches[1].motors[0]));
  EXPECT_EQ(DecouplingMask::block_diagonal(r.branches).cross_connections(), 0u);
  EXPECT_NO_THROW(DecouplingMask::block_diagonal(r.branches).validate());
}

TEST(Policy, ShapesPerKind) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(1);
  const auto demos = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  EXPECT_EQ(demos.num_branches(), 4u);
  EXPECT_EQ(demos.nets[2].input_dim(), 5u + 15);
  EXPECT_EQ(demos.nets[2].output_dim(), 16u);
  const auto central = make_baseline(PolicyKind::kCentralized, r.branches, small_init(), rng);
  EXPECT_EQ(central.num_branches(), 1u);
  EXPECT_EQ(central.nets[0].input_dim(), 53u);
  EXPECT_EQ(central.mask.cross_connections(), 0u);
  const auto local = make_baseline(PolicyKind::kLocalActors, r.branches, small_init(), rng);
  EXPECT_EQ(local.mask, DecouplingMask::block_diagonal(r.branches));
  EXPECT_THROW(make_baseline(PolicyKind::kDemos, r.branches, small_init(), rng),
               std::invalid_argument);
  EXPECT_EQ(parse_policy_kind(to_string(PolicyKind::kLocalActors)), PolicyKind::kLocalActors);
  EXPECT_THROW(parse_policy_kind("ppo"), std::invalid_argument);
}

TEST(Policy, MeanIsSumOfMaskedOutputs) {
  const Robot r = load("quadruped");
  std::mt19937_64 rng(2);
  auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  policy.mask.clear(0, r.branches[3].motors[1]);
  const Eigen::MatrixXd obs = test::random_matrix(41, 6, rng);
  const auto local = policy.local_observations(obs);
  const auto out = policy.act(local, false);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(12, 6);
  for (std::size_t i = 0; i < 4; ++i) {
    Eigen::MatrixXd y = policy.nets[i].forward(local[i]);
    for (std::size_t m = 0; m < 12; ++m) {
      if (!policy.mask.allowed(i, m)) y.row(static_cast<Eigen::Index>(m)).setZero();
    }
    expected += y;
  }
  EXPECT_LT((out.mean - expected).norm(), 1e-12);
  EXPECT_EQ(out.action, out.mean);
  EXPECT_NE(out.raw[0](r.branches[3].motors[1], 0), 0.0);
  EXPECT_EQ(out.branch_actions[0](r.branches[3].motors[1], 0), 0.0);
}

// With a block-diagonal mask, motors of branch i must not react in any way
// to observation entries outside branch i's slice.
TEST(Policy, MaskedBranchesAreIndependent) {
  for (const char* name : {"humanoid", "quadruped"}) {
    const Robot r = load(name);
    std::mt19937_64 rng(3);
    auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
    policy.mask = DecouplingMask::block_diagonal(r.branches);
    const std::size_t dim = policy.layout.global_dim();
    const Eigen::MatrixXd obs = test::random_matrix(static_cast<Eigen::Index>(dim), 8, rng);
    const Eigen::MatrixXd base = policy.mean_action(obs);
    for (std::size_t k = 0; k < r.branches.size(); ++k) {
      Eigen::MatrixXd perturbed = obs;
      for (std::size_t m : r.branches[k].motors) {
        perturbed.row(policy.layout.position_index(m)).array() += 1.0;
        perturbed.row(policy.layout.velocity_index(m)).array() -= 2.0;
        perturbed.row(policy.layout.last_action_index(m)).array() *= 3.0;
      }
      const Eigen::MatrixXd moved = policy.mean_action(perturbed);
      for (std::size_t m = 0; m < r.num_motors(); ++m) {
        if (r.branches[k].owns(m)) continue;
        EXPECT_EQ(moved.row(m), base.row(m)) << name << " branch " << k << " motor " << m;
      }
    }
  }
}

TEST(Policy, StochasticSamplesFollowLogStd) {
  const Robot r = load("quadruped");
  std::mt19937_64 rng(4);
  auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  policy.log_std.setConstant(std::log(0.3));
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(41, 20000);
  const auto local = policy.local_observations(obs);
  std::mt19937_64 sample_rng(5);
  const auto out = policy.act(local, true, &sample_rng);
  const Eigen::MatrixXd noise = out.action - out.mean;
  const double var = noise.array().square().mean();
  EXPECT_NEAR(std::sqrt(var), 0.3, 0.005);
  EXPECT_THROW(policy.act(local, true, nullptr), std::invalid_argument);
}

TEST(Penalty, MatchesDefinitionForSeveralNorms) {
  const Robot r = load("y_overlap");
  std::mt19937_64 rng(6);
  const auto raw = random_actions(r.branches, 7, rng);
  for (double p : {1.0, 2.0, 3.5}) {
    double expected = 0.0;
    for (std::size_t i = 0; i < r.branches.size(); ++i) {
      expected += brute_strength(raw[i], r.branches[i].complement, p);
    }
    const PenaltyResult got = decentralization_penalty(raw, r.branches, p);
    EXPECT_NEAR(got.penalty, expected, 1e-12) << "p=" << p;
    EXPECT_EQ(got.objective(), -got.penalty);
  }
  EXPECT_THROW(decentralization_penalty(raw, r.branches, 0.5), std::invalid_argument);
}

TEST(Penalty, OwnMotorsAreFree) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(7);
  auto raw = random_actions(r.branches, 5, rng);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (std::size_t m : r.branches[i].complement) raw[i].row(m).setZero();
  }
  EXPECT_EQ(decentralization_penalty(raw, r.branches, 1.0).penalty, 0.0);
  EXPECT_EQ(decentralization_penalty(raw, r.branches, 2.0).penalty, 0.0);
}

TEST(Penalty, GradientMatchesFiniteDifferences) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(8);
  const auto raw = random_actions(r.branches, 4, rng);
  for (double p : {1.0, 2.0}) {
    std::vector<Eigen::MatrixXd> grad;
    decentralization_penalty(raw, r.branches, p, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      for (Eigen::Index m = 0; m < raw[i].rows(); ++m) {
        for (Eigen::Index c = 0; c < raw[i].cols(); ++c) {
          auto plus = raw;
          auto minus = raw;
          plus[i](m, c) += h;
          minus[i](m, c) -= h;
          const double fd = (decentralization_penalty(plus, r.branches, p).penalty -
                             decentralization_penalty(minus, r.branches, p).penalty) /
                            (2 * h);
          ASSERT_NEAR(grad[i](m, c), fd, 1e-7) << "p=" << p << " i=" << i;
        }
      }
    }
  }
}

TEST(Penalty, PolicyLossUsesRawOutputs) {
  const Robot r = load("quadruped");
  std::mt19937_64 rng(9);
  auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  const auto local = policy.local_observations(test::random_matrix(41, 5, rng));
  const double before = decentralization_loss(policy, local, 1.0).penalty;
  policy.mask = DecouplingMask::block_diagonal(r.branches);
  EXPECT_EQ(decentralization_loss(policy, local, 1.0).penalty, before);
  EXPECT_GT(before, 0.0);
}

TEST(Connections, MatchBruteForce) {
  const Robot r = load("y_overlap");
  std::mt19937_64 rng(10);
  const auto actions = random_actions(r.branches, 9, rng);
  for (double p : {1.0, 2.0}) {
    const ConnectionMatrix cm = connection_matrix(actions, r.branches, p);
    const std::size_t n = r.branches.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double c = brute_strength(actions[i], r.branches[j].motors, p);
        EXPECT_NEAR(cm.strength(i, j), c, 1e-10);
        EXPECT_NEAR(cm.relative(i, j), c / brute_strength(actions[j], r.branches[j].motors, p),
                    1e-10);
      }
      for (std::size_t m = 0; m < r.num_motors(); ++m) {
        EXPECT_NEAR(cm.motor(i, m), actions[i].row(m).cwiseAbs().mean(), 1e-12);
      }
    }
    for (std::size_t m = 0; m < r.num_motors(); ++m) {
      double norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (r.branches[i].owns(m)) norm += cm.motor(i, m);
      }
      EXPECT_NEAR(cm.motor_normalizer[m], norm, 1e-12);
    }
    EXPECT_EQ(cm.samples, 9u);
  }
}

TEST(Connections, DiagonalIsOneAndZeroOwnIsUndefined) {
  const Robot r = load("quadruped");
  std::mt19937_64 rng(11);
  auto actions = random_actions(r.branches, 3, rng);
  actions[2].setZero();
  const ConnectionMatrix cm = connection_matrix(actions, r.branches, 1.0);
  for (std::size_t j = 0; j < 4; ++j) {
    if (j == 2) continue;
    EXPECT_DOUBLE_EQ(cm.relative(j, j), 1.0);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(cm.undefined(i, 2));
  EXPECT_FALSE(cm.undefined(2, 0));
  EXPECT_EQ(cm.relative(2, 0), 0.0);
}

TEST(Connections, InvariantToSampleOrder) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(12);
  auto actions = random_actions(r.branches, 10, rng);
  const ConnectionMatrix a = connection_matrix(actions, r.branches, 1.0);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (auto& m : actions) {
    Eigen::MatrixXd shuffled(m.rows(), m.cols());
    for (int c = 0; c < 10; ++c) shuffled.col(c) = m.col(perm[c]);
    m = shuffled;
  }
  const ConnectionMatrix b = connection_matrix(actions, r.branches, 1.0);
  EXPECT_LT((a.strength - b.strength).norm(), 1e-12);
}

// Relabeling branches permutes rows and columns of C the same way.
TEST(Connections, EquivariantToBranchRelabeling) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(13);
  const auto actions = random_actions(r.branches, 6, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  BranchSet permuted = r.branches;
  std::vector<Eigen::MatrixXd> permuted_actions;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    permuted.branches[k] = r.branches[perm[k]];
    permuted.branches[k].id = k;
    permuted_actions.push_back(actions[perm[k]]);
  }
  const ConnectionMatrix a = connection_matrix(actions, r.branches, 2.0);
  const ConnectionMatrix b = connection_matrix(permuted_actions, permuted, 2.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(b.strength(i, j), a.strength(perm[i], perm[j]), 1e-12);
    }
  }
}

// For p = 1 and disjoint branches, strengths toward all branches add up to
// the mean l1 norm of the full output.
TEST(Connections, PartitionAdditivityForL1) {
  const Robot r = load("quadruped");
  std::mt19937_64 rng(14);
  const auto actions = random_actions(r.branches, 5, rng);
  const ConnectionMatrix cm = connection_matrix(actions, r.branches, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    const double total = actions[i].cwiseAbs().colwise().sum().mean();
    EXPECT_NEAR(cm.strength.row(i).sum(), total, 1e-12);
    EXPECT_NEAR(cm.motor.row(i).sum(), total, 1e-12);
  }
}

TEST(Connections, FromPolicyUseMaskedOutputs) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(15);
  auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  policy.mask = DecouplingMask::block_diagonal(r.branches);
  const auto local = policy.local_observations(test::random_matrix(53, 4, rng));
  const ConnectionMatrix cm = connection_matrix(policy, local, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i != j) {
        EXPECT_EQ(cm.strength(i, j), 0.0);
      }
    }
    EXPECT_GT(cm.strength(i, i), 0.0);
  }
}

ConnectionMatrix handmade(const BranchSet& branches, const Eigen::MatrixXd& relative) {
  ConnectionMatrix cm;
  cm.strength = relative;
  cm.relative = relative;
  cm.motor = Eigen::MatrixXd::Ones(branches.size(), branches.num_motors());
  cm.motor_normalizer = Eigen::VectorXd::Ones(branches.num_motors());
  return cm;
}

TEST(Decoupling, ClearsExactlyWeakEdges) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(16);
  const auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  Eigen::MatrixXd rel = Eigen::MatrixXd::Constant(4, 4, 0.5);
  rel.diagonal().setOnes();
  rel(0, 2) = 0.039;
  rel(3, 1) = 0.04;  // not strictly below
  rel(1, 0) = 1e-9;
  rel(2, 3) = std::nan("");
  const DecouplingResult res = apply_branch_decoupling(policy, handmade(r.branches, rel), 0.04);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const bool cut = (i == 0 && j == 2) || (i == 1 && j == 0) || (i == 2 && j == 3);
      for (std::size_t m : r.branches[j].motors) {
        EXPECT_EQ(res.mask.allowed(i, m), i == j || !cut) << i << "," << j;
      }
    }
  }
  EXPECT_EQ(res.cleared.size(), 5u + 3 + 5);
  ASSERT_EQ(res.undefined.size(), 1u);
  EXPECT_EQ(res.undefined[0], (std::pair<std::size_t, std::size_t>{2, 3}));
  EXPECT_THROW(apply_branch_decoupling(policy, handmade(r.branches, rel), 0.0),
               std::invalid_argument);
}

TEST(Decoupling, IsIdempotent) {
  const Robot r = load("quadruped");
  std::mt19937_64 rng(17);
  auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  Eigen::MatrixXd rel = Eigen::MatrixXd::Constant(4, 4, 0.01);
  rel.diagonal().setOnes();
  rel(1, 2) = 0.3;
  const auto first = apply_branch_decoupling(policy, handmade(r.branches, rel), 0.04);
  policy.mask = first.mask;
  const auto second = apply_branch_decoupling(policy, handmade(r.branches, rel), 0.04);
  EXPECT_EQ(second.mask, first.mask);
  EXPECT_TRUE(second.cleared.empty());
  EXPECT_EQ(first.mask.cross_connections(), 3u);
}

// Shared torso joints belong to both legs, so neither leg's mask row can lose
// them even when the other leg's connection is weak.
TEST(Decoupling, SharedMotorsStayWithBothOwners) {
  const Robot r = load("y_overlap");
  std::mt19937_64 rng(18);
  const auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  Eigen::MatrixXd rel = Eigen::MatrixXd::Zero(2, 2);
  rel.diagonal().setOnes();
  const auto res = apply_branch_decoupling(policy, handmade(r.branches, rel), 0.04);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t m = 0; m < r.num_motors(); ++m) {
      EXPECT_EQ(res.mask.allowed(i, m), r.branches[i].owns(m));
    }
  }
  EXPECT_EQ(res.cleared.size(), 4u);
}

TEST(Decoupling, MotorLevelUsesOwnerNormalizer) {
  const Robot r = load("y_overlap");
  std::mt19937_64 rng(19);
  const auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  const std::size_t n_m = r.num_motors();
  std::vector<Eigen::MatrixXd> actions(2, Eigen::MatrixXd::Zero(n_m, 1));
  // Every motor gets magnitude 1 from each of its owners.
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t m : r.branches[i].motors) actions[i](m, 0) = 1.0;
  }
  // Branch 0 reaches the first motor owned only by branch 1 weakly, the
  // second one strongly.
  std::vector<std::size_t> only1;
  for (std::size_t m : r.branches[1].motors) {
    if (!r.branches[0].owns(m)) only1.push_back(m);
  }
  ASSERT_EQ(only1.size(), 2u);
  actions[0](only1[0], 0) = 0.03;
  actions[0](only1[1], 0) = -0.5;
  const ConnectionMatrix cm = connection_matrix(actions, r.branches, 1.0);
  for (std::size_t m = 0; m < n_m; ++m) {
    const bool shared = r.branches[0].owns(m) && r.branches[1].owns(m);
    EXPECT_DOUBLE_EQ(cm.motor_normalizer[m], shared ? 2.0 : 1.0);
  }
  const auto res = apply_motor_decoupling(policy, cm, 0.04);
  EXPECT_FALSE(res.mask.allowed(0, only1[0]));
  EXPECT_TRUE(res.mask.allowed(0, only1[1]));
  // Branch 1 never drives branch 0's exclusive motors, so those two go as well.
  ASSERT_EQ(res.cleared.size(), 3u);
  for (const auto& e : res.cleared) EXPECT_FALSE(r.branches[e.branch].owns(e.motor));
  EXPECT_THROW(apply_motor_decoupling(policy, cm, 0.0), std::invalid_argument);
}

TEST(Scripted, HoldAndSwingTargets) {
  const Robot r = load("humanoid");
  ScriptedController hold{ScriptedController::Kind::kHoldPose, 0.2, 0.5, r.branches[0].motors[0]};
  Eigen::VectorXd local = Eigen::VectorXd::Zero(14);
  local[3] = 1.0;  // sin(phase) = 1
  local[4] = 0.0;
  const Eigen::VectorXd a = hold.act(local, r.branches[0], 16);
  EXPECT_DOUBLE_EQ(a[r.branches[0].motors[0]], 0.4);
  EXPECT_DOUBLE_EQ(a.cwiseAbs().sum(), 0.4);
  ScriptedController swing = hold;
  swing.kind = ScriptedController::Kind::kSwing;
  swing.value = 0.5;
  EXPECT_NEAR(swing.act(local, r.branches[0], 16)[r.branches[0].motors[0]], 1.0, 1e-12);
  EXPECT_EQ(swing.act(local, r.branches[1], 16).norm(), 0.0);
  EXPECT_EQ(parse_controller_kind(to_string(ScriptedController::Kind::kSwing)),
            ScriptedController::Kind::kSwing);
}

DecentralizedPolicy decoupled_humanoid(std::uint64_t seed) {
  const Robot r = load("humanoid");
  std::mt19937_64 rng(seed);
  auto policy = make_policy(PolicyKind::kDemos, r.branches, small_init(), rng);
  policy.mask = DecouplingMask::block_diagonal(r.branches);
  return policy;
}

TEST(Compose, SingleFragmentIsIdentity) {
  const auto policy = decoupled_humanoid(20);
  const std::vector<PolicyFragment> frags{{&policy, {0, 1, 2, 3}}};
  const auto composed = compose(frags, {});
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd obs = test::random_matrix(53, 5, rng);
  EXPECT_EQ(composed.mean_action(obs), policy.mean_action(obs));
  EXPECT_EQ(composed.mask, policy.mask);
}

TEST(Compose, MixesBranchesFromDifferentPolicies) {
  const auto a = decoupled_humanoid(21);
  const auto b = decoupled_humanoid(22);
  const std::vector<PolicyFragment> frags{{&a, {0, 1}}, {&b, {2, 3}}};
  const auto composed = compose(frags, {});
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd obs = test::random_matrix(53, 3, rng);
  const Eigen::MatrixXd ya = a.mean_action(obs);
  const Eigen::MatrixXd yb = b.mean_action(obs);
  const Eigen::MatrixXd y = composed.mean_action(obs);
  for (std::size_t m = 0; m < 16; ++m) {
    const bool from_a = a.branches[0].owns(m) || a.branches[1].owns(m);
    EXPECT_EQ(y.row(m), from_a ? ya.row(m) : yb.row(m));
  }
}

TEST(Compose, ReplacementDrivesOnlyItsBranch) {
  const auto a = decoupled_humanoid(23);
  const std::vector<PolicyFragment> frags{{&a, {1, 2, 3}}};
  const std::map<std::size_t, ScriptedController> repl{
      {0, {ScriptedController::Kind::kHoldPose, 0.1, 0.5, a.branches[0].motors[0]}}};
  const auto composed = compose(frags, repl);
  EXPECT_TRUE(composed.replaced(0));
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd obs = test::random_matrix(53, 2, rng);
  const Eigen::MatrixXd y = composed.mean_action(obs);
  const Eigen::MatrixXd ya = a.mean_action(obs);
  for (std::size_t m = 0; m < 16; ++m) {
    if (a.branches[0].owns(m)) {
      EXPECT_EQ(y(m, 0), m == a.branches[0].motors[0] ? 0.2 : 0.0);
    } else {
      EXPECT_EQ(y.row(m), ya.row(m));
    }
  }
}

TEST(Compose, RefusesToCutSurvivingEdge) {
  auto a = decoupled_humanoid(24);
  const auto b = decoupled_humanoid(25);
  for (std::size_t m : a.branches[3].motors) a.mask.set(2, m, true);
  const std::vector<PolicyFragment> frags{{&a, {0, 1, 2}}, {&b, {3}}};
  try {
    compose(frags, {});
    FAIL() << "expected a composition error";
  } catch (const CompositionError& e) {
    EXPECT_EQ(e.from(), 2u);
    EXPECT_EQ(e.to(), 3u);
    EXPECT_NE(std::string(e.what()).find("(3,4)"), std::string::npos) << e.what();
  }
  // Moving the two branches together is fine.
  const std::vector<PolicyFragment> together{{&a, {0, 1, 2, 3}}};
  EXPECT_NO_THROW(compose(together, {}));
}

TEST(Compose, RejectsIncompleteOrOverlappingCover) {
  const auto a = decoupled_humanoid(26);
  const std::vector<PolicyFragment> missing{{&a, {0, 1, 2}}};
  EXPECT_THROW(compose(missing, {}), std::invalid_argument);
  const std::vector<PolicyFragment> twice{{&a, {0, 1, 2, 3}}, {&a, {3}}};
  EXPECT_THROW(compose(twice, {}), std::invalid_argument);
  const std::vector<PolicyFragment> both{{&a, {0, 1, 2, 3}}};
  const std::map<std::size_t, ScriptedController> repl{{3, {}}};
  EXPECT_THROW(compose(both, repl), std::invalid_argument);
}

}  // namespace
}  // namespace demos
