#pragma once

// Per-state correlated-equilibrium game over joint actions, plus the social
// conventions that turn an equilibrium into one collision-free joint action.
//
// Joint actions are indexed agent-0-major: index = sum_i a_i * k^(m-1-i), so
// ordering by index is lexicographic with agent 0 as the highest-priority digit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "coverage_marl/coverage_env.hpp"
#include "coverage_marl/errors.hpp"
#include "coverage_marl/lp_solver.hpp"

namespace coverage_marl {

/// k^m, throwing if it does not fit comfortably in memory-sized indices.
inline std::size_t joint_action_count(std::size_t agents, std::size_t actions = kActionCount) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < agents; ++i) {
    if (n > (std::size_t{1} << 40) / std::max<std::size_t>(actions, 1)) {
      throw InvalidArgument("joint action space is too large");
    }
    n *= actions;
  }
  return n;
}

inline std::size_t encode_joint_action(const JointAction& action) {
  std::size_t index = 0;
  for (Action a : action) index = index * kActionCount + static_cast<std::size_t>(a);
  return index;
}

inline JointAction decode_joint_action(std::size_t index, std::size_t agents) {
  JointAction out(agents);
  for (std::size_t i = agents; i-- > 0;) {
    out[i] = static_cast<Action>(index % kActionCount);
    index /= kActionCount;
  }
  if (index != 0) throw InvalidArgument("joint action index out of range");
  return out;
}

/// Q_i(S, .) for every agent at one fixed joint state. Joint actions are
/// indexed in mixed radix with agent 0 most significant; the coverage game has
/// six actions per agent, but any per-agent counts are accepted.
struct JointActionTable {
  std::size_t agents = 0;
  std::vector<std::size_t> actions;    // per-agent action counts
  std::vector<std::vector<double>> q;  // q[i][joint index]

  JointActionTable() = default;
  explicit JointActionTable(std::size_t agent_count, std::size_t action_count = kActionCount)
      : JointActionTable(std::vector<std::size_t>(agent_count, action_count)) {}
  explicit JointActionTable(std::vector<std::size_t> action_counts)
      : agents(action_counts.size()), actions(std::move(action_counts)) {
    q.assign(agents, std::vector<double>(size(), 0.0));
  }

  [[nodiscard]] std::size_t size() const {
    std::size_t n = 1;
    for (std::size_t k : actions) n *= k;
    return n;
  }

  /// Index distance between joint actions that differ by one in agent i's action.
  [[nodiscard]] std::size_t stride(std::size_t agent) const {
    std::size_t s = 1;
    for (std::size_t j = agent + 1; j < agents; ++j) s *= actions[j];
    return s;
  }

  void validate() const {
    if (agents == 0 || actions.size() != agents) throw InvalidArgument("game needs at least one agent");
    for (std::size_t k : actions) {
      if (k == 0) throw InvalidArgument("every agent needs at least one action");
    }
    if (q.size() != agents) throw InvalidArgument("one Q vector per agent is required");
    const std::size_t n = size();
    for (const auto& qi : q) {
      if (qi.size() != n) {
        throw InvalidArgument("Q vector has length " + std::to_string(qi.size()) + ", expected " +
                              std::to_string(n));
      }
      for (double v : qi) {
        if (!std::isfinite(v)) throw InvalidArgument("Q table contains non-finite values");
      }
    }
  }
};

/// Probability of every joint action under a correlated equilibrium.
struct CeDistribution {
  std::vector<double> probabilities;
};

/// Utilitarian CE program: maximize the summed expected Q subject to
/// sum p = 1, p >= 0 and, for each agent i and each pair a != a',
///   sum_{A_-i} p(a, A_-i) [Q_i(a, A_-i) - Q_i(a', A_-i)] >= 0.
inline lp::Problem build_ce_lp(const JointActionTable& table) {
  table.validate();
  const std::size_t n = table.size();
  lp::Problem problem;
  problem.objective.assign(n, 0.0);
  for (const auto& qi : table.q) {
    for (std::size_t a = 0; a < n; ++a) problem.objective[a] += qi[a];
  }
  problem.add(std::vector<double>(n, 1.0), lp::Relation::Equal, 1.0);

  for (std::size_t i = 0; i < table.agents; ++i) {
    const std::size_t k = table.actions[i];
    const std::size_t stride = table.stride(i);
    const auto& qi = table.q[i];
    for (std::size_t rec = 0; rec < k; ++rec) {
      for (std::size_t dev = 0; dev < k; ++dev) {
        if (dev == rec) continue;
        std::vector<double> row(n, 0.0);
        for (std::size_t idx = 0; idx < n; ++idx) {
          if ((idx / stride) % k != rec) continue;
          const std::size_t deviated = idx - rec * stride + dev * stride;
          row[idx] = qi[idx] - qi[deviated];
        }
        problem.add(std::move(row), lp::Relation::GreaterEqual, 0.0);
      }
    }
  }
  return problem;
}

/// Worst CE incentive violation of p (0 when every constraint holds).
inline double rationality_violation(const JointActionTable& table, const std::vector<double>& p) {
  table.validate();
  if (p.size() != table.size()) throw InvalidArgument("distribution has the wrong length");
  const std::size_t n = table.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < table.agents; ++i) {
    const std::size_t k = table.actions[i];
    const std::size_t stride = table.stride(i);
    for (std::size_t rec = 0; rec < k; ++rec) {
      for (std::size_t dev = 0; dev < k; ++dev) {
        if (dev == rec) continue;
        double gain = 0.0;
        for (std::size_t idx = 0; idx < n; ++idx) {
          if ((idx / stride) % k != rec) continue;
          gain += p[idx] * (table.q[i][idx - rec * stride + dev * stride] - table.q[i][idx]);
        }
        worst = std::max(worst, gain);
      }
    }
  }
  return worst;
}

inline CeDistribution solve_ce(const JointActionTable& table, const lp::Options& opts = {}) {
  const lp::Problem problem = build_ce_lp(table);
  lp::Solution sol;
  try {
    sol = lp::solve(problem, opts);
  } catch (const SolverError& e) {
    throw CeSolveError(std::string("CE linear program failed: ") + e.what());
  }
  if (sol.status != lp::Status::Optimal) {
    throw CeSolveError(std::string("CE linear program reported ") + lp::to_string(sol.status));
  }
  CeDistribution dist{std::move(sol.x)};
  for (double& p : dist.probabilities) p = std::max(p, 0.0);
  return dist;
}

/// Canonical indices of joint actions whose successor cells are pairwise
/// distinct. Built rank by rank: agent i may not move onto a cell already
/// claimed by agents 0..i-1; a blocked move claims the agent's current cell.
/// Indices come out in increasing order.
inline std::vector<std::size_t> filter_collisions(const JointState& joint, const GridSpec& grid) {
  const std::size_t m = joint.size();
  if (m == 0) throw InvalidArgument("joint state has no agents");
  std::vector<std::array<AgentState, kActionCount>> succ(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (int a = 0; a < kActionCount; ++a) {
      succ[i][a] = apply_action(joint[i], static_cast<Action>(a), grid);
    }
  }
  std::vector<std::size_t> out;
  std::vector<AgentState> claimed(m);
  std::vector<int> digit(m, -1);
  // Iterative depth-first walk in lexicographic order.
  std::size_t depth = 0;
  std::size_t prefix = 0;
  for (;;) {
    ++digit[depth];
    if (digit[depth] >= kActionCount) {
      digit[depth] = -1;
      if (depth == 0) break;
      --depth;
      prefix /= kActionCount;
      continue;
    }
    const AgentState cell = succ[depth][digit[depth]];
    bool clash = false;
    for (std::size_t j = 0; j < depth && !clash; ++j) clash = claimed[j] == cell;
    if (clash) continue;
    claimed[depth] = cell;
    const std::size_t index = prefix * kActionCount + static_cast<std::size_t>(digit[depth]);
    if (depth + 1 == m) {
      out.push_back(index);
    } else {
      prefix = index;
      ++depth;
    }
  }
  return out;
}

/// Restricts the equilibrium to admissible joint actions and returns the most
/// probable one. Ties (within 1e-12) and an all-zero restriction both resolve to
/// the smallest canonical index, i.e. the rank-ordered social convention.
inline std::size_t select_joint_action(const CeDistribution& dist,
                                       const std::vector<std::size_t>& admissible) {
  if (admissible.empty()) throw InvalidArgument("no admissible joint action to select");
  constexpr double kTie = 1e-12;
  std::size_t best = admissible.front();
  double best_p = -1.0;
  for (std::size_t idx : admissible) {
    const double p = std::max(dist.probabilities.at(idx), 0.0);
    if (p > best_p + kTie || (std::abs(p - best_p) <= kTie && idx < best)) {
      best = idx;
      best_p = p;
    }
  }
  if (best_p < kTie) return *std::min_element(admissible.begin(), admissible.end());
  return best;
}

}  // namespace coverage_marl
