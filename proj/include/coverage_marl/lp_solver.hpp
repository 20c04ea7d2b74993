#pragma once

// Dense two-phase simplex for small linear programs of the form
//
//   maximize c^T x  subject to  a_k^T x {<=, =, >=} b_k,  x >= 0.
//
// Pricing is Dantzig's rule; after a run of degenerate pivots the solver falls
// back to Bland's rule, which cannot cycle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "coverage_marl/errors.hpp"

namespace coverage_marl::lp {

enum class Relation { LessEqual, Equal, GreaterEqual };

struct Constraint {
  std::vector<double> coeffs;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

struct Problem {
  std::vector<double> objective;  // maximized
  std::vector<Constraint> constraints;

  [[nodiscard]] std::size_t num_vars() const { return objective.size(); }

  void add(std::vector<double> coeffs, Relation rel, double rhs) {
    constraints.push_back({std::move(coeffs), rel, rhs});
  }

  void validate() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(objective.begin(), objective.end(), finite)) {
      throw InvalidArgument("LP objective has non-finite coefficients");
    }
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      const Constraint& c = constraints[k];
      if (c.coeffs.size() != objective.size()) {
        throw InvalidArgument("LP constraint " + std::to_string(k) + " has " +
                              std::to_string(c.coeffs.size()) + " coefficients, expected " +
                              std::to_string(objective.size()));
      }
      if (!std::all_of(c.coeffs.begin(), c.coeffs.end(), finite) || !std::isfinite(c.rhs)) {
        throw InvalidArgument("LP constraint " + std::to_string(k) + " has non-finite entries");
      }
    }
  }
};

enum class Status { Optimal, Infeasible, Unbounded };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
  }
  return "?";
}

struct Solution {
  Status status = Status::Infeasible;
  std::vector<double> x;        // empty unless Optimal
  double objective_value = 0.0;  // meaningful only when Optimal
  std::size_t iterations = 0;
};

struct Options {
  double feasibility_tol = 1e-7;
  double pivot_tol = 1e-9;
  double optimality_tol = 1e-9;
  /// Primal slack allowed by the ratio test in exchange for larger pivots.
  double harris_tol = 1e-10;
  /// 0 picks a limit from the tableau size.
  std::size_t max_iterations = 0;
  /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
  std::size_t degenerate_run_before_bland = 32;
};

/// Largest violation of any constraint or sign bound at x. Zero means feasible.
inline double max_violation(const Problem& problem, const std::vector<double>& x) {
  if (x.size() != problem.num_vars()) {
    throw InvalidArgument("point has the wrong dimension for this LP");
  }
  double worst = 0.0;
  for (double v : x) worst = std::max(worst, -v);
  for (const Constraint& c : problem.constraints) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) lhs += c.coeffs[j] * x[j];
    switch (c.relation) {
      case Relation::LessEqual: worst = std::max(worst, lhs - c.rhs); break;
      case Relation::GreaterEqual: worst = std::max(worst, c.rhs - lhs); break;
      case Relation::Equal: worst = std::max(worst, std::abs(lhs - c.rhs)); break;
    }
  }
  return worst;
}

namespace detail {

class Tableau {
 public:
  Tableau(const Problem& problem, const Options& opts) : opts_(opts) {
    rows_ = problem.constraints.size();
    structural_ = problem.num_vars();

    // Normalize every row to a nonnegative right-hand side. A ">= 0" row is
    // flipped to "<= 0" so it gets a slack instead of an artificial.
    std::vector<int> sign(rows_, 1);
    std::vector<Relation> rel(rows_);
    std::size_t slacks = 0;
    std::size_t artificials = 0;
    for (std::size_t i = 0; i < rows_; ++i) {
      const Constraint& c = problem.constraints[i];
      Relation r = c.relation;
      if (c.rhs < 0.0 || (c.rhs == 0.0 && r == Relation::GreaterEqual)) {
        sign[i] = -1;
        if (r == Relation::LessEqual) {
          r = Relation::GreaterEqual;
        } else if (r == Relation::GreaterEqual) {
          r = Relation::LessEqual;
        }
      }
      rel[i] = r;
      if (r != Relation::Equal) ++slacks;
      if (r != Relation::LessEqual) ++artificials;
    }
    first_artificial_ = structural_ + slacks;
    cols_ = first_artificial_ + artificials;
    width_ = cols_ + 1;
    cells_.assign((rows_ + 1) * width_, 0.0);
    basis_.assign(rows_, 0);

    std::size_t next_slack = structural_;
    std::size_t next_art = first_artificial_;
    for (std::size_t i = 0; i < rows_; ++i) {
      const Constraint& c = problem.constraints[i];
      double* row = row_ptr(i);
      // Equilibrate: scale the row so its largest structural coefficient is 1.
      double largest = 0.0;
      for (double v : c.coeffs) largest = std::max(largest, std::abs(v));
      const double scale = largest > 0.0 ? sign[i] / largest : static_cast<double>(sign[i]);
      for (std::size_t j = 0; j < structural_; ++j) row[j] = scale * c.coeffs[j];
      row[cols_] = scale * c.rhs;
      switch (rel[i]) {
        case Relation::LessEqual:
          row[next_slack] = 1.0;
          basis_[i] = next_slack++;
          break;
        case Relation::GreaterEqual:
          row[next_slack++] = -1.0;
          row[next_art] = 1.0;
          basis_[i] = next_art++;
          break;
        case Relation::Equal:
          row[next_art] = 1.0;
          basis_[i] = next_art++;
          break;
      }
    }
    max_iterations_ = opts_.max_iterations != 0 ? opts_.max_iterations
                                                 : 50 * (rows_ + cols_) + 1000;
  }

  [[nodiscard]] bool has_artificials() const { return first_artificial_ < cols_; }

  // Returns false if phase 1 proves the problem infeasible.
  // Phase 1 prices with the auxiliary objective; equally attractive columns
  // are ordered by the real objective so the first feasible vertex tends to
  // be a good one.
  bool phase_one(const std::vector<double>& objective) {
    tie_break_.assign(cols_, 0.0);
    std::copy(objective.begin(), objective.end(), tie_break_.begin());
    std::vector<double> cost(cols_, 0.0);
    for (std::size_t j = first_artificial_; j < cols_; ++j) cost[j] = -1.0;
    load_objective(cost);
    if (iterate(cols_) == Outcome::Unbounded) {
      throw SolverError("simplex phase 1 reported an unbounded auxiliary problem");
    }
    double scale = 1.0;
    for (std::size_t i = 0; i < rows_; ++i) scale = std::max(scale, std::abs(row_ptr(i)[cols_]));
    if (objective_value() < -opts_.feasibility_tol * scale) return false;

    // Pivot zero-valued artificials out of the basis where possible. Rows where
    // that is impossible are redundant and keep their artificial at zero.
    for (std::size_t i = 0; i < rows_; ++i) {
      if (basis_[i] < first_artificial_) continue;
      const double* row = row_ptr(i);
      std::size_t best = cols_;
      double best_mag = opts_.pivot_tol;
      for (std::size_t j = 0; j < first_artificial_; ++j) {
        if (std::abs(row[j]) > best_mag) {
          best_mag = std::abs(row[j]);
          best = j;
        }
      }
      if (best != cols_) pivot(i, best);
    }
    return true;
  }

  // Returns false when the objective is unbounded.
  bool phase_two(const std::vector<double>& objective) {
    tie_break_.assign(cols_, 0.0);
    std::vector<double> cost(cols_, 0.0);
    double largest = 0.0;
    for (double v : objective) largest = std::max(largest, std::abs(v));
    const double scale = largest > 0.0 ? 1.0 / largest : 1.0;
    for (std::size_t j = 0; j < objective.size(); ++j) cost[j] = scale * objective[j];
    load_objective(cost);
    return iterate(first_artificial_) == Outcome::Optimal;
  }

  [[nodiscard]] std::vector<double> primal() const {
    std::vector<double> x(structural_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      if (basis_[i] < structural_) x[basis_[i]] = row_ptr(i)[cols_];
    }
    for (double& v : x) {
      if (v < 0.0 && v > -opts_.feasibility_tol) v = 0.0;
    }
    return x;
  }

  [[nodiscard]] std::size_t iterations() const { return iterations_; }

 private:
  enum class Outcome { Optimal, Unbounded };

  double* row_ptr(std::size_t i) { return cells_.data() + i * width_; }
  [[nodiscard]] const double* row_ptr(std::size_t i) const { return cells_.data() + i * width_; }
  double* obj_ptr() { return row_ptr(rows_); }
  [[nodiscard]] double objective_value() const { return row_ptr(rows_)[cols_]; }

  // Objective row holds reduced costs c_B B^-1 A_j - c_j; a negative entry
  // means column j improves the (maximized) objective.
  void load_objective(const std::vector<double>& cost) {
    double* obj = obj_ptr();
    for (std::size_t j = 0; j < cols_; ++j) obj[j] = -cost[j];
    obj[cols_] = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      const double cb = cost[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = row_ptr(i);
      for (std::size_t j = 0; j <= cols_; ++j) obj[j] += cb * row[j];
    }
  }

  void pivot(std::size_t r, std::size_t e) {
    double* prow = row_ptr(r);
    const double inv = 1.0 / prow[e];
    for (std::size_t j = 0; j <= cols_; ++j) prow[j] *= inv;
    prow[e] = 1.0;
    for (std::size_t i = 0; i <= rows_; ++i) {
      if (i == r) continue;
      double* row = row_ptr(i);
      const double f = row[e];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) row[j] -= f * prow[j];
      row[e] = 0.0;
      if (i < rows_ && row[cols_] < 0.0 && row[cols_] > -opts_.feasibility_tol) row[cols_] = 0.0;
    }
    basis_[r] = e;
  }

  // Columns >= column_limit may not enter the basis.
  Outcome iterate(std::size_t column_limit) {
    std::size_t degenerate_run = 0;
    for (;;) {
      if (iterations_ >= max_iterations_) {
        throw SolverError("simplex iteration limit (" + std::to_string(max_iterations_) +
                          ") reached");
      }
      const bool bland = degenerate_run >= opts_.degenerate_run_before_bland;
      const double* obj = obj_ptr();
      std::size_t enter = cols_;
      double most_negative = -opts_.optimality_tol;
      for (std::size_t j = 0; j < column_limit; ++j) {
        if (obj[j] < most_negative - 1e-12) {
          enter = j;
          if (bland) break;
          most_negative = obj[j];
        } else if (!bland && enter != cols_ && obj[j] <= most_negative + 1e-12 &&
                   tie_break_[j] > tie_break_[enter]) {
          enter = j;
        }
      }
      if (enter == cols_) return Outcome::Optimal;

      // Harris two-pass ratio test: find the largest step that keeps every
      // basic variable above -harris_tol, then pivot on the largest element
      // among rows whose exact ratio fits within that step.
      double step_cap = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows_; ++i) {
        const double* row = row_ptr(i);
        const double a = row[enter];
        if (a <= opts_.pivot_tol) continue;
        step_cap = std::min(step_cap, (std::max(row[cols_], 0.0) + opts_.harris_tol) / a);
      }
      if (step_cap == std::numeric_limits<double>::infinity()) return Outcome::Unbounded;
      std::size_t leave = rows_;
      double largest = 0.0;
      for (std::size_t i = 0; i < rows_; ++i) {
        const double a = row_ptr(i)[enter];
        if (a > opts_.pivot_tol && std::max(row_ptr(i)[cols_], 0.0) / a <= step_cap) {
          largest = std::max(largest, a);
        }
      }
      double best_ratio = 0.0;
      for (std::size_t i = 0; i < rows_; ++i) {
        const double* row = row_ptr(i);
        const double a = row[enter];
        if (a <= opts_.pivot_tol) continue;
        const double ratio = std::max(row[cols_], 0.0) / a;
        if (ratio > step_cap) continue;
        if (bland) {
          // Smallest basic index among numerically acceptable candidates.
          if (a >= 1e-3 * largest && (leave == rows_ || basis_[i] < basis_[leave])) {
            leave = i;
            best_ratio = ratio;
          }
        } else if (leave == rows_ || a > row_ptr(leave)[enter]) {
          leave = i;
          best_ratio = ratio;
        }
      }
      degenerate_run = best_ratio <= 1e-12 ? degenerate_run + 1 : 0;
      pivot(leave, enter);
      ++iterations_;
    }
  }

  Options opts_;
  std::size_t rows_ = 0;
  std::size_t structural_ = 0;
  std::size_t first_artificial_ = 0;
  std::size_t cols_ = 0;
  std::size_t width_ = 0;
  std::size_t iterations_ = 0;
  std::size_t max_iterations_ = 0;
  std::vector<double> cells_;  // (rows_ + 1) x width_, objective row last
  std::vector<std::size_t> basis_;
  std::vector<double> tie_break_;
};

}  // namespace detail

/// Solves the LP. Throws InvalidArgument on malformed input and SolverError if
/// the iteration limit is hit; never reports Optimal for an unfinished solve.
inline Solution solve(const Problem& problem, const Options& opts = {}) {
  problem.validate();
  detail::Tableau tableau(problem, opts);
  Solution out;
  if (tableau.has_artificials() && !tableau.phase_one(problem.objective)) {
    out.status = Status::Infeasible;
    out.iterations = tableau.iterations();
    return out;
  }
  if (!tableau.phase_two(problem.objective)) {
    out.status = Status::Unbounded;
    out.iterations = tableau.iterations();
    return out;
  }
  out.status = Status::Optimal;
  out.x = tableau.primal();
  out.iterations = tableau.iterations();
  double value = 0.0;
  for (std::size_t j = 0; j < out.x.size(); ++j) value += problem.objective[j] * out.x[j];
  out.objective_value = value;
  return out;
}

}  // namespace coverage_marl::lp
