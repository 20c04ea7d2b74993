#pragma once

// Multi-agent approximated equilibrium-based Q-learning on the coverage game,
// and the independent-learner baseline it is compared against.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "coverage_marl/ce_game.hpp"
#include "coverage_marl/coverage_env.hpp"
#include "coverage_marl/errors.hpp"
#include "coverage_marl/func_approx.hpp"
#include "coverage_marl/log.hpp"
#include "coverage_marl/random.hpp"

namespace coverage_marl {

enum class LearnerMode { Ce, Baseline };

inline const char* to_string(LearnerMode m) { return m == LearnerMode::Ce ? "ce" : "baseline"; }

inline constexpr double kEpsilonFloor = 0.01;

struct LearnerConfig {
  double alpha = 0.1;
  double gamma = 0.9;
  double epsilon0 = 0.9;
  double epsilon_decay = 0.995;
  std::size_t episodes = 2000;
  std::size_t max_steps = 2000;
  double reward = 0.1;
  /// Coverage bound; negative means "the whole field".
  double fb = -1.0;
  std::uint64_t seed = 1;
  SchemeKind scheme = SchemeKind::Fsr;
  LearnerMode mode = LearnerMode::Ce;
  std::size_t rbf_centers = 8;
  double baseline_cell_reward = 1.0;
  double baseline_overlap_penalty = 0.01;
  /// Invoke the checkpoint callback every N episodes; 0 disables it.
  std::size_t checkpoint_every = 0;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0)) throw InvalidArgument("epsilon0 must lie in [0, 1]");
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) {
      throw InvalidArgument("epsilon_decay must lie in (0, 1]");
    }
    if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
    if (!(reward > 0.0) || !std::isfinite(reward)) throw InvalidArgument("reward must be positive");
    if (scheme == SchemeKind::Rbf && rbf_centers == 0) throw InvalidArgument("rbf_centers must be >= 1");
  }

  /// fb with the "whole field" default resolved.
  [[nodiscard]] double coverage_bound(const FieldMask& field) const {
    return fb < 0.0 ? static_cast<double>(field.size()) : fb;
  }
};

struct EpisodeLog {
  std::size_t episode = 0;
  std::size_t steps = 0;
  bool goal = false;
  int coverage_sum = 0;
  int overlap_sum = 0;
  double cumulative_reward = 0.0;
  double epsilon = 0.0;
  double seconds = 0.0;  // wall clock; excluded from every reproducibility check
  JointState terminal;   // state the episode ended in
};

struct TrainResult {
  FeatureScheme scheme;
  std::vector<ParamVector> thetas;
  std::vector<EpisodeLog> logs;
  EpisodeLog greedy_eval;
  std::size_t ce_solves = 0;
  std::size_t ce_failures = 0;
};

/// epsilon0 * decay^episode, floored at 0.01 (or at epsilon0 if that is lower).
inline double epsilon_at(std::size_t episode, const LearnerConfig& config) {
  const double e = config.epsilon0 * std::pow(config.epsilon_decay, static_cast<double>(episode));
  return std::max(e, std::min(config.epsilon0, kEpsilonFloor));
}

/// Uniform over joint states whose agents occupy pairwise distinct cells.
inline JointState random_joint_state(std::size_t agents, const GridSpec& grid, Rng& rng) {
  if (agents > static_cast<std::size_t>(grid.cell_count())) {
    throw InvalidArgument("more agents than grid cells");
  }
  JointState joint;
  joint.reserve(agents);
  while (joint.size() < agents) {
    const auto cell = static_cast<int>(rng.index(static_cast<std::size_t>(grid.cell_count())));
    const AgentState s{cell / (grid.dim_y * grid.dim_z), (cell / grid.dim_z) % grid.dim_y,
                       cell % grid.dim_z + 1};
    if (std::find(joint.begin(), joint.end(), s) == joint.end()) joint.push_back(s);
  }
  return joint;
}

/// Counters a run accumulates; kept outside the pure step functions.
struct StepCounters {
  std::size_t ce_solves = 0;
  std::size_t ce_failures = 0;
};

struct Transition {
  std::size_t action_index = 0;
  JointAction action;
  JointState next;
  CoverageStats stats;  // of `next`
  double reward = 0.0;  // global reward on `next`
  bool explored = false;
};

inline JointActionTable joint_action_table(const std::vector<ParamVector>& thetas,
                                           const JointState& joint, const FeatureScheme& scheme) {
  JointActionTable table(joint.size());
  for (std::size_t i = 0; i < thetas.size(); ++i) table.q[i] = q_row(thetas[i], joint, scheme);
  return table;
}

/// One epsilon-greedy CE step. With probability 1 - epsilon the joint action is
/// the social-convention pick from the CE of the current Q tables; otherwise it
/// is uniform over the collision-free set. A failed CE solve falls back to the
/// random branch.
inline Transition step_ce(const JointState& joint, const std::vector<ParamVector>& thetas,
                          const FeatureScheme& scheme, const CoverageEnv& env,
                          const LearnerConfig& config, double epsilon, Rng& rng,
                          StepCounters* counters = nullptr) {
  if (thetas.size() != joint.size()) throw InvalidArgument("one parameter vector per agent is required");
  const std::vector<std::size_t> admissible = filter_collisions(joint, env.grid);
  Transition t;
  t.explored = rng.uniform01() < epsilon;
  if (!t.explored) {
    try {
      if (counters != nullptr) ++counters->ce_solves;
      const CeDistribution dist = solve_ce(joint_action_table(thetas, joint, scheme));
      t.action_index = select_joint_action(dist, admissible);
    } catch (const CeSolveError& e) {
      if (counters != nullptr) ++counters->ce_failures;
      log_message(LogLevel::Info, std::string("CE solve failed, exploring instead: ") + e.what());
      t.explored = true;
    }
  }
  if (t.explored) t.action_index = admissible[rng.index(admissible.size())];
  t.action = decode_joint_action(t.action_index, joint.size());
  t.next = apply_joint_action(joint, t.action, env.grid);
  t.stats = env.stats(t.next);
  t.reward = global_reward(t.stats, config.reward, config.coverage_bound(env.field));
  return t;
}

/// Each agent's TD update from its own pre-update parameters; the order in
/// which agents are processed cannot change the result.
inline void update_agents(std::vector<ParamVector>& thetas, const JointState& joint,
                          std::size_t action_index, double reward, const JointState& next,
                          const FeatureScheme& scheme, const LearnerConfig& config) {
  const std::vector<std::size_t> admissible_next = filter_collisions(next, scheme.grid());
  const SparseFeatures phi = scheme.features(joint, action_index);
  for (ParamVector& theta : thetas) {
    const double max_next = best_joint_q(theta, next, scheme, admissible_next).value;
    td_update_in_place(theta, phi, reward, max_next, config.alpha, config.gamma);
  }
}

/// Runs one episode from a random start until the team reward fires or the
/// step cap is reached. With learn == false the parameters are left untouched.
inline EpisodeLog run_episode(std::vector<ParamVector>& thetas, const FeatureScheme& scheme,
                              const CoverageEnv& env, const LearnerConfig& config,
                              std::size_t episode_index, double epsilon, Rng& rng,
                              StepCounters* counters = nullptr, bool learn = true) {
  const auto start = std::chrono::steady_clock::now();
  EpisodeLog log;
  log.episode = episode_index;
  log.epsilon = epsilon;
  JointState joint = random_joint_state(thetas.size(), env.grid, rng);
  CoverageStats stats = env.stats(joint);
  while (log.steps < config.max_steps) {
    Transition t = step_ce(joint, thetas, scheme, env, config, epsilon, rng, counters);
    if (learn) update_agents(thetas, joint, t.action_index, t.reward, t.next, scheme, config);
    ++log.steps;
    log.cumulative_reward += t.reward;
    joint = std::move(t.next);
    stats = t.stats;
    if (t.reward > 0.0) {
      log.goal = true;
      break;
    }
  }
  log.coverage_sum = stats.coverage_sum;
  log.overlap_sum = stats.overlap_sum;
  log.terminal = std::move(joint);
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

// ---------------------------------------------------------------------------
// Independent-learner baseline: per-agent tabular Q over the agent's own cell
// and its six actions, rewarded by own coverage minus an overlap penalty.

struct BaselineTransition {
  std::size_t action_index = 0;
  JointAction action;
  JointState next;
  CoverageStats stats;
  std::vector<double> rewards;  // individual rewards on `next`
  double team_reward = 0.0;     // global reward on `next`, used for termination
  bool explored = false;
};

/// Individual tabular index of (cell, action) inside a single-agent table.
inline std::size_t individual_index(const AgentState& s, Action a, const GridSpec& grid) {
  const auto cell = static_cast<std::size_t>((s.x * grid.dim_y + s.y) * grid.dim_z + s.z - 1);
  return static_cast<std::size_t>(a) * static_cast<std::size_t>(grid.cell_count()) + cell;
}

inline BaselineTransition step_baseline(const JointState& joint, const std::vector<ParamVector>& qs,
                                        const CoverageEnv& env, const LearnerConfig& config,
                                        double epsilon, Rng& rng) {
  if (qs.size() != joint.size()) throw InvalidArgument("one Q table per agent is required");
  const GridSpec& grid = env.grid;
  const std::vector<std::size_t> admissible = filter_collisions(joint, grid);
  BaselineTransition t;
  t.explored = rng.uniform01() < epsilon;
  if (t.explored) {
    t.action_index = admissible[rng.index(admissible.size())];
    t.action = decode_joint_action(t.action_index, joint.size());
  } else {
    // Greedy picks in rank order, skipping cells already claimed by higher ranks.
    t.action.resize(joint.size());
    std::vector<AgentState> claimed;
    for (std::size_t i = 0; i < joint.size(); ++i) {
      bool found = false;
      double best = 0.0;
      for (Action a : kAllActions) {
        const AgentState cell = apply_action(joint[i], a, grid);
        if (std::find(claimed.begin(), claimed.end(), cell) != claimed.end()) continue;
        const double q = qs[i].values.at(individual_index(joint[i], a, grid));
        if (!found || q > best) {
          found = true;
          best = q;
          t.action[i] = a;
        }
      }
      if (!found) throw InvalidArgument("agent " + std::to_string(i) + " has no collision-free move");
      claimed.push_back(apply_action(joint[i], t.action[i], grid));
    }
    t.action_index = encode_joint_action(t.action);
  }
  t.next = apply_joint_action(joint, t.action, grid);
  t.stats = env.stats(t.next);
  t.rewards.resize(joint.size());
  for (std::size_t i = 0; i < joint.size(); ++i) {
    t.rewards[i] = config.baseline_cell_reward * env.coverage(t.next, i) -
                   config.baseline_overlap_penalty * env.overlap(t.next, i);
  }
  t.team_reward = global_reward(t.stats, config.reward, config.coverage_bound(env.field));
  return t;
}

/// Tabular Q-learning update of every agent on its own (cell, action).
inline void update_baseline(std::vector<ParamVector>& qs, const JointState& joint,
                            const BaselineTransition& t, const GridSpec& grid,
                            const LearnerConfig& config) {
  for (std::size_t i = 0; i < qs.size(); ++i) {
    double next_best = -std::numeric_limits<double>::infinity();
    for (Action a : kAllActions) {
      next_best = std::max(next_best, qs[i].values[individual_index(t.next[i], a, grid)]);
    }
    double& q = qs[i].values[individual_index(joint[i], t.action[i], grid)];
    q = (1.0 - config.alpha) * q + config.alpha * (t.rewards[i] + config.gamma * next_best);
    if (!std::isfinite(q)) throw DivergenceError("baseline Q value became non-finite");
  }
}

inline EpisodeLog run_baseline_episode(std::vector<ParamVector>& qs, const CoverageEnv& env,
                                       const LearnerConfig& config, std::size_t episode_index,
                                       double epsilon, Rng& rng, bool learn = true) {
  const auto start = std::chrono::steady_clock::now();
  EpisodeLog log;
  log.episode = episode_index;
  log.epsilon = epsilon;
  JointState joint = random_joint_state(qs.size(), env.grid, rng);
  CoverageStats stats = env.stats(joint);
  while (log.steps < config.max_steps) {
    BaselineTransition t = step_baseline(joint, qs, env, config, epsilon, rng);
    if (learn) update_baseline(qs, joint, t, env.grid, config);
    ++log.steps;
    log.cumulative_reward += t.team_reward;
    joint = std::move(t.next);
    stats = t.stats;
    if (t.team_reward > 0.0) {
      log.goal = true;
      break;
    }
  }
  log.coverage_sum = stats.coverage_sum;
  log.overlap_sum = stats.overlap_sum;
  log.terminal = std::move(joint);
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

// ---------------------------------------------------------------------------

using CheckpointCallback = std::function<void(std::size_t episodes_done, const FeatureScheme& scheme,
                                              const std::vector<ParamVector>& thetas)>;
using EpisodeCallback = std::function<void(const EpisodeLog&)>;

struct TrainHooks {
  CheckpointCallback on_checkpoint;
  EpisodeCallback on_episode;
};

/// Feature scheme for a run. RBF centers consume draws from rng.
inline FeatureScheme make_scheme(const LearnerConfig& config, const GridSpec& grid,
                                 std::size_t agents, Rng& rng) {
  if (config.mode == LearnerMode::Baseline) return FeatureScheme::tabular(grid, 1);
  switch (config.scheme) {
    case SchemeKind::Fsr: return FeatureScheme::fsr(grid, agents);
    case SchemeKind::Tabular: return FeatureScheme::tabular(grid, agents);
    case SchemeKind::Rbf: return FeatureScheme::default_rbf(grid, agents, config.rbf_centers, rng);
  }
  throw InvalidArgument("unknown feature scheme");
}

/// Trains for config.episodes episodes, then runs one greedy (epsilon = 0)
/// evaluation episode without learning.
inline TrainResult train(const CoverageEnv& env, std::size_t agents, const LearnerConfig& config,
                         const TrainHooks& hooks = {}) {
  config.validate();
  env.grid.validate();
  if (agents == 0) throw InvalidArgument("at least one agent is required");
  if (env.field.width() != env.grid.dim_x || env.field.height() != env.grid.dim_y) {
    throw InvalidArgument("field mask does not match the grid");
  }
  Rng rng(config.seed);
  TrainResult result{make_scheme(config, env.grid, agents, rng), {}, {}, {}, 0, 0};
  result.thetas.assign(agents, result.scheme.zero_params());
  result.logs.reserve(config.episodes);
  StepCounters counters;

  const bool baseline = config.mode == LearnerMode::Baseline;
  for (std::size_t e = 0; e < config.episodes; ++e) {
    const double eps = epsilon_at(e, config);
    EpisodeLog log = baseline ? run_baseline_episode(result.thetas, env, config, e, eps, rng)
                              : run_episode(result.thetas, result.scheme, env, config, e, eps, rng,
                                            &counters);
    if (log_level() >= LogLevel::Debug) {
      log_message(LogLevel::Debug, "episode " + std::to_string(e) + ": steps=" +
                                       std::to_string(log.steps) + " goal=" +
                                       std::to_string(log.goal) + " eps=" + std::to_string(eps));
    }
    if (hooks.on_episode) hooks.on_episode(log);
    result.logs.push_back(log);
    if (config.checkpoint_every != 0 && (e + 1) % config.checkpoint_every == 0 &&
        hooks.on_checkpoint) {
      hooks.on_checkpoint(e + 1, result.scheme, result.thetas);
    }
  }
  result.greedy_eval =
      baseline ? run_baseline_episode(result.thetas, env, config, config.episodes, 0.0, rng, false)
               : run_episode(result.thetas, result.scheme, env, config, config.episodes, 0.0, rng,
                             &counters, false);
  result.ce_solves = counters.ce_solves;
  result.ce_failures = counters.ce_failures;
  return result;
}

}  // namespace coverage_marl
