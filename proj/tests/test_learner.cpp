#include <gtest/gtest.h>

#include <map>

#include "coverage_marl/learner.hpp"
#include "coverage_marl/scenario.hpp"
#include "oracles.hpp"

using namespace coverage_marl;

namespace {

FieldMask block_field(int w, int h, int x0, int y0, int x1, int y1) {
  std::vector<Cell> cells;
  for (int x = x0; x <= x1; ++x) {
    for (int y = y0; y <= y1; ++y) cells.push_back({x, y});
  }
  return FieldMask(w, h, cells);
}

// 3x3x2 grid, tan 0.5: 1x1 footprint at z=1, 3x3 at z=2.
CoverageEnv small_env() {
  return {GridSpec{3, 3, 2, 0.5, 0.5}, parse_field_mask("#..\n...\n..#"), OverlapScope::AllCells};
}

bool same_log(const EpisodeLog& a, const EpisodeLog& b) {
  return a.episode == b.episode && a.steps == b.steps && a.goal == b.goal &&
         a.coverage_sum == b.coverage_sum && a.overlap_sum == b.overlap_sum &&
         a.cumulative_reward == b.cumulative_reward && a.epsilon == b.epsilon && a.terminal == b.terminal;
}

}  // namespace

TEST(Epsilon, Schedule) {
  LearnerConfig c;
  c.epsilon0 = 0.9;
  c.epsilon_decay = 0.99;
  EXPECT_EQ(epsilon_at(0, c), 0.9);
  EXPECT_NEAR(epsilon_at(1, c), 0.891, 1e-15);
  EXPECT_EQ(epsilon_at(500, c), 0.01);
  for (std::size_t e = 1; e < 1000; ++e) EXPECT_LE(epsilon_at(e, c), epsilon_at(e - 1, c));
  c.epsilon_decay = 1.0;
  EXPECT_EQ(epsilon_at(12345, c), 0.9);
  c.epsilon0 = 0.0;
  EXPECT_EQ(epsilon_at(3, c), 0.0);
}

TEST(Config, Validation) {
  LearnerConfig c;
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.gamma = 1.1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.max_steps = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.epsilon0 = -0.1;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(StepCe, FullExplorationIsUniformOverAdmissible) {
  const CoverageEnv env = small_env();
  const auto scheme = FeatureScheme::tabular(env.grid, 2);
  const std::vector<ParamVector> thetas(2, scheme.zero_params());
  const JointState joint{{0, 0, 1}, {1, 0, 1}};
  const auto adm = filter_collisions(joint, env.grid);
  std::map<std::size_t, int> hits;
  Rng rng(3);
  LearnerConfig c;
  StepCounters counters;
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) {
    const Transition t = step_ce(joint, thetas, scheme, env, c, 1.0, rng, &counters);
    EXPECT_TRUE(t.explored);
    ++hits[t.action_index];
  }
  EXPECT_EQ(counters.ce_solves, 0u);
  ASSERT_EQ(hits.size(), adm.size());
  const double expect = static_cast<double>(draws) / adm.size();
  for (const auto& [idx, n] : hits) {
    EXPECT_TRUE(std::binary_search(adm.begin(), adm.end(), idx));
    EXPECT_NEAR(n, expect, 5.0 * std::sqrt(expect));
  }
}

TEST(StepCe, GreedyFollowsSinglePositiveEntry) {
  const CoverageEnv env = small_env();
  const auto scheme = FeatureScheme::tabular(env.grid, 2);
  std::vector<ParamVector> thetas(2, scheme.zero_params());
  const JointState joint{{0, 0, 1}, {2, 2, 2}};
  const std::size_t target = encode_joint_action({Action::East, Action::South});
  for (auto& t : thetas) t.values[scheme.features(joint, target).entries[0].index] = 1.0;
  Rng rng(1);
  StepCounters counters;
  const Transition t = step_ce(joint, thetas, scheme, env, LearnerConfig{}, 0.0, rng, &counters);
  EXPECT_FALSE(t.explored);
  EXPECT_EQ(t.action_index, target);
  EXPECT_EQ(t.next, (JointState{{1, 0, 1}, {2, 1, 2}}));
  EXPECT_EQ(counters.ce_solves, 1u);
}

TEST(StepCe, RewardMatchesIndependentRecomputation) {
  const CoverageEnv env = small_env();
  const auto scheme = FeatureScheme::fsr(env.grid, 2);
  const std::vector<ParamVector> thetas(2, scheme.zero_params());
  LearnerConfig c;
  Rng rng(8);
  int goals = 0;
  for (int k = 0; k < 2000; ++k) {
    const JointState joint = random_joint_state(2, env.grid, rng);
    const Transition t = step_ce(joint, thetas, scheme, env, c, 1.0, rng);
    validate_joint_state(t.next, env.grid);
    const double r = global_reward(t.next, env.field, env.grid, c.reward, 2.0);
    EXPECT_EQ(t.reward, r);
    goals += r > 0.0;
  }
  EXPECT_GT(goals, 0);
}

TEST(UpdateAgents, ZeroRewardKeepsZero) {
  const CoverageEnv env = small_env();
  const auto scheme = FeatureScheme::fsr(env.grid, 2);
  std::vector<ParamVector> thetas(2, scheme.zero_params());
  update_agents(thetas, {{0, 0, 1}, {1, 1, 1}}, 5, 0.0, {{0, 0, 1}, {1, 1, 2}}, scheme, LearnerConfig{});
  for (const auto& t : thetas) {
    for (double v : t.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(UpdateAgents, GoalTransitionFromZero) {
  const CoverageEnv env = small_env();
  const auto scheme = FeatureScheme::fsr(env.grid, 2);
  std::vector<ParamVector> thetas(2, scheme.zero_params());
  const JointState joint{{0, 0, 1}, {2, 2, 1}};
  const std::size_t a = encode_joint_action({Action::Up, Action::Up});
  update_agents(thetas, joint, a, 0.1, {{0, 0, 2}, {2, 2, 2}}, scheme, LearnerConfig{});
  const auto support = scheme.features(joint, a);
  for (const auto& t : thetas) {
    std::size_t nonzero = 0;
    for (double v : t.values) nonzero += v != 0.0;
    EXPECT_EQ(nonzero, support.size());
    for (const Feature& f : support) EXPECT_NEAR(t.values[f.index], 0.01, 1e-15);
  }
}

TEST(UpdateAgents, AgentOrderDoesNotMatter) {
  const CoverageEnv env = small_env();
  const auto scheme = FeatureScheme::fsr(env.grid, 2);
  Rng rng(11);
  std::vector<ParamVector> thetas(2, scheme.zero_params());
  for (auto& t : thetas) {
    for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
  }
  const JointState joint{{0, 0, 1}, {2, 2, 1}};
  const JointState next{{1, 0, 1}, {2, 1, 1}};
  std::vector<ParamVector> forward = thetas;
  update_agents(forward, joint, 9, 0.1, next, scheme, LearnerConfig{});
  std::vector<ParamVector> reversed{thetas[1], thetas[0]};
  update_agents(reversed, joint, 9, 0.1, next, scheme, LearnerConfig{});
  EXPECT_EQ(forward[0], reversed[1]);
  EXPECT_EQ(forward[1], reversed[0]);
}

TEST(RunEpisode, SingleStepCap) {
  // Goal needs both agents at z=2 and they start at least one move away.
  const CoverageEnv env{GridSpec{7, 7, 5, 1, 1}, block_field(7, 7, 0, 0, 6, 6), OverlapScope::AllCells};
  const auto scheme = FeatureScheme::fsr(env.grid, 2);
  std::vector<ParamVector> thetas(2, scheme.zero_params());
  LearnerConfig c;
  c.max_steps = 1;
  Rng rng(5);
  const EpisodeLog log = run_episode(thetas, scheme, env, c, 0, 1.0, rng);
  EXPECT_EQ(log.steps, 1u);
  EXPECT_FALSE(log.goal);
}

TEST(RunEpisode, DeterministicAndSound) {
  const CoverageEnv env = small_env();
  LearnerConfig c;
  c.scheme = SchemeKind::Fsr;
  c.episodes = 40;
  c.max_steps = 100;
  c.seed = 21;
  const TrainResult a = train(env, 2, c);
  const TrainResult b = train(env, 2, c);
  ASSERT_EQ(a.logs.size(), 40u);
  for (std::size_t k = 0; k < a.logs.size(); ++k) {
    EXPECT_TRUE(same_log(a.logs[k], b.logs[k])) << "episode " << k;
    const EpisodeLog& log = a.logs[k];
    EXPECT_LE(log.steps, c.max_steps);
    const CoverageStats s = env.stats(log.terminal);
    EXPECT_EQ(s.coverage_sum, log.coverage_sum);
    EXPECT_EQ(s.overlap_sum, log.overlap_sum);
    if (log.goal) {
      EXPECT_GE(s.coverage_sum, 2);
      EXPECT_EQ(s.overlap_sum, 0);
      EXPECT_EQ(log.cumulative_reward, c.reward);
    } else {
      EXPECT_EQ(log.steps, c.max_steps);
    }
  }
  EXPECT_EQ(a.thetas, b.thetas);
  EXPECT_EQ(a.ce_solves, b.ce_solves);
  EXPECT_GT(a.ce_solves, 0u);
}

TEST(Train, ZeroEpisodes) {
  LearnerConfig c;
  c.episodes = 0;
  c.max_steps = 5;
  const TrainResult r = train(small_env(), 2, c);
  EXPECT_TRUE(r.logs.empty());
  ASSERT_EQ(r.thetas.size(), 2u);
  for (const auto& t : r.thetas) {
    for (double v : t.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(Train, RejectsMismatchedField) {
  CoverageEnv env = small_env();
  env.field = block_field(4, 3, 0, 0, 1, 1);
  EXPECT_THROW(train(env, 2, LearnerConfig{}), InvalidArgument);
}

TEST(Train, CheckpointHookCadence) {
  LearnerConfig c;
  c.episodes = 10;
  c.max_steps = 20;
  c.checkpoint_every = 4;
  std::vector<std::size_t> seen;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t done, const FeatureScheme&, const std::vector<ParamVector>& th) {
    EXPECT_EQ(th.size(), 2u);
    seen.push_back(done);
  };
  train(small_env(), 2, c, hooks);
  EXPECT_EQ(seen, (std::vector<std::size_t>{4, 8}));
}

// Runs the tabular learner next to a plain Q table updated by the classic rule
// and checks the two stay identical step for step on the same random stream.
TEST(Tabular, TrajectoryMatchesPlainQTable) {
  const CoverageEnv env = small_env();
  const auto scheme = FeatureScheme::tabular(env.grid, 2);
  LearnerConfig c;
  c.max_steps = 60;
  std::vector<ParamVector> thetas(2, scheme.zero_params());
  std::vector<std::map<std::pair<JointState, std::size_t>, double>> plain(2);
  const auto q = [&](std::size_t i, const JointState& s, std::size_t a) {
    const auto it = plain[i].find({s, a});
    return it == plain[i].end() ? 0.0 : it->second;
  };

  Rng rng(31);
  Rng mirror(31);
  std::size_t steps = 0;
  for (std::size_t e = 0; e < 30; ++e) {
    const double eps = epsilon_at(e, c);
    JointState joint = random_joint_state(2, env.grid, rng);
    ASSERT_EQ(joint, random_joint_state(2, env.grid, mirror));
    for (std::size_t k = 0; k < c.max_steps; ++k, ++steps) {
      const Transition t = step_ce(joint, thetas, scheme, env, c, eps, rng);

      // The same choice, made from the plain table.
      const auto adm = filter_collisions(joint, env.grid);
      std::size_t pick = 0;
      if (mirror.uniform01() < eps) {
        pick = adm[mirror.index(adm.size())];
      } else {
        JointActionTable table(2);
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t a = 0; a < 36; ++a) table.q[i][a] = q(i, joint, a);
        }
        pick = select_joint_action(solve_ce(table), adm);
      }
      ASSERT_EQ(t.action_index, pick);

      update_agents(thetas, joint, t.action_index, t.reward, t.next, scheme, c);
      const auto adm_next = filter_collisions(t.next, env.grid);
      std::vector<double> updated(2);
      for (std::size_t i = 0; i < 2; ++i) {
        double best = -1e300;
        for (std::size_t b : adm_next) best = std::max(best, q(i, t.next, b));
        updated[i] = (1.0 - c.alpha) * q(i, joint, pick) + c.alpha * (t.reward + c.gamma * best);
      }
      for (std::size_t i = 0; i < 2; ++i) plain[i][{joint, pick}] = updated[i];

      for (std::size_t i = 0; i < 2; ++i) {
        for (const auto& [key, v] : plain[i]) {
          ASSERT_NEAR(thetas[i].values[scheme.features(key.first, key.second).entries[0].index], v, 1e-12);
        }
      }
      joint = t.next;
      if (t.reward > 0.0) break;
    }
  }
  EXPECT_GT(steps, 200u);
}

TEST(Baseline, DisjointRewards) {
  // Agents at z=1 see 3x3; Down is blocked so both stay put.
  const GridSpec g{7, 7, 5, 1, 1};
  std::vector<Cell> cells = {{0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1}, {5, 5}, {6, 5}, {5, 6}, {6, 6}};
  const CoverageEnv env{g, FieldMask(7, 7, cells), OverlapScope::AllCells};
  const JointState joint{{1, 1, 1}, {5, 5, 1}};
  std::vector<ParamVector> qs(2, ParamVector{std::vector<double>(6 * 245, 0.0)});
  for (std::size_t i = 0; i < 2; ++i) qs[i].values[individual_index(joint[i], Action::Down, g)] = 1.0;
  Rng rng(1);
  const BaselineTransition t = step_baseline(joint, qs, env, LearnerConfig{}, 0.0, rng);
  EXPECT_EQ(t.next, joint);
  EXPECT_EQ(t.rewards, (std::vector<double>{5.0, 4.0}));
  EXPECT_EQ(t.team_reward, 0.1);  // 9 cells = all of F, no overlap
}

TEST(Baseline, StackedRewards) {
  // tan 0.5: both z=2 and z=3 see the same 3x3 footprint.
  const GridSpec g{5, 5, 3, 0.5, 0.5};
  const CoverageEnv env{g, block_field(5, 5, 1, 1, 3, 3), OverlapScope::AllCells};
  const JointState joint{{1, 2, 2}, {1, 2, 3}};
  std::vector<ParamVector> qs(2, ParamVector{std::vector<double>(6 * 75, 0.0)});
  for (std::size_t i = 0; i < 2; ++i) qs[i].values[individual_index(joint[i], Action::East, g)] = 1.0;
  Rng rng(1);
  const BaselineTransition t = step_baseline(joint, qs, env, LearnerConfig{}, 0.0, rng);
  EXPECT_EQ(t.next, (JointState{{2, 2, 2}, {2, 2, 3}}));
  EXPECT_NEAR(t.rewards[0], 8.91, 1e-12);
  EXPECT_NEAR(t.rewards[1], 8.91, 1e-12);
}

TEST(Baseline, GreedyRespectsRankClaims) {
  const GridSpec g{3, 3, 2, 0.5, 0.5};
  const CoverageEnv env{g, parse_field_mask("#..\n...\n..#"), OverlapScope::AllCells};
  const JointState joint{{0, 0, 1}, {2, 0, 1}};
  std::vector<ParamVector> qs(2, ParamVector{std::vector<double>(6 * 18, 0.0)});
  // Both prefer (1,0,1); agent 0 outranks agent 1.
  qs[0].values[individual_index(joint[0], Action::East, g)] = 1.0;
  qs[1].values[individual_index(joint[1], Action::West, g)] = 1.0;
  Rng rng(1);
  const BaselineTransition t = step_baseline(joint, qs, env, LearnerConfig{}, 0.0, rng);
  EXPECT_EQ(t.next[0], (AgentState{1, 0, 1}));
  EXPECT_NE(t.next[1], t.next[0]);
}

TEST(Baseline, NeverSolvesAnLp) {
  LearnerConfig c;
  c.mode = LearnerMode::Baseline;
  c.episodes = 20;
  c.max_steps = 50;
  const TrainResult r = train(small_env(), 2, c);
  EXPECT_EQ(r.ce_solves, 0u);
  EXPECT_EQ(r.logs.size(), 20u);
  EXPECT_EQ(r.thetas[0].size(), 6u * 18u);
}

TEST(Train, TinySingleAgentLearnsShortestPaths) {
  const Scenario s = load_scenario(std::string(COVERAGE_MARL_SCENARIO_DIR) + "/tiny1uav.cfg");
  const CoverageEnv env = s.env();
  const TrainResult r = train(env, 1, s.config);
  const double fb = s.config.coverage_bound(env.field);
  const std::vector<int> want = oracle::single_agent_steps_to_goal(env.grid, env.field, fb);
  int optimal = 0;
  for (int c = 0; c < env.grid.cell_count(); ++c) {
    const AgentState start{c / (env.grid.dim_y * env.grid.dim_z), (c / env.grid.dim_z) % env.grid.dim_y,
                           c % env.grid.dim_z + 1};
    ASSERT_GT(want[c], 0);
    optimal += oracle::greedy_steps_from({start}, r.thetas, r.scheme, env, s.config, 50) == want[c];
  }
  EXPECT_GE(optimal, static_cast<int>(0.95 * env.grid.cell_count()));
}
