#pragma once

// Discrete 3-D grid world for the field-coverage game: agent moves, square
// camera footprints, coverage/overlap counting and the sparse team reward.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coverage_marl/errors.hpp"

namespace coverage_marl {

struct GridSpec {
  int dim_x = 1;
  int dim_y = 1;
  int dim_z = 1;
  double tan_theta_1 = 1.0;
  double tan_theta_2 = 1.0;

  void validate() const {
    if (dim_x < 1 || dim_y < 1 || dim_z < 1) {
      throw InvalidArgument("grid dimensions must all be >= 1");
    }
    if (!(tan_theta_1 > 0.0) || !(tan_theta_2 > 0.0) || !std::isfinite(tan_theta_1) ||
        !std::isfinite(tan_theta_2)) {
      throw InvalidArgument("camera half-angle tangents must be positive and finite");
    }
  }

  /// Number of 3-D cells an agent can occupy.
  [[nodiscard]] int cell_count() const { return dim_x * dim_y * dim_z; }
  [[nodiscard]] int ground_cell_count() const { return dim_x * dim_y; }
};

/// Ground-plane cell.
struct Cell {
  int x = 0;
  int y = 0;
  auto operator<=>(const Cell&) const = default;
};

/// The target field F with per-cell importance weights. Only cells in F have
/// nonzero weight; counting ignores the weights.
class FieldMask {
 public:
  FieldMask() = default;

  FieldMask(int width, int height, std::vector<Cell> cells) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw InvalidArgument("field mask dimensions must be >= 1");
    }
    in_field_.assign(static_cast<std::size_t>(width) * height, 0);
    weights_.assign(in_field_.size(), 0.0);
    for (const Cell& c : cells) {
      if (c.x < 0 || c.x >= width || c.y < 0 || c.y >= height) {
        throw InvalidArgument("field cell (" + std::to_string(c.x) + "," + std::to_string(c.y) +
                              ") lies outside the mask");
      }
      in_field_[index(c.x, c.y)] = 1;
      weights_[index(c.x, c.y)] = 1.0;
    }
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    cells_ = std::move(cells);
  }

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  /// Field cells in (x, y) lexicographic order.
  [[nodiscard]] const std::vector<Cell>& cells() const { return cells_; }
  [[nodiscard]] std::size_t size() const { return cells_.size(); }

  [[nodiscard]] bool contains(int x, int y) const {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) return false;
    return in_field_[index(x, y)] != 0;
  }

  [[nodiscard]] double weight(int x, int y) const {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) return 0.0;
    return weights_[index(x, y)];
  }

  /// Sets Φ(q) for a field cell. Cells outside F keep weight 0.
  void set_weight(Cell c, double w) {
    if (!contains(c.x, c.y)) throw InvalidArgument("weights can only be set on field cells");
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("field weights must be finite and >= 0");
    weights_[index(c.x, c.y)] = w;
  }

 private:
  [[nodiscard]] std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
  std::vector<std::uint8_t> in_field_;
  std::vector<double> weights_;
};

/// Position of one agent; z is the altitude level, 1-based.
struct AgentState {
  int x = 0;
  int y = 0;
  int z = 1;
  auto operator<=>(const AgentState&) const = default;
};

using JointState = std::vector<AgentState>;

/// Canonical action order; the numeric values are part of every serialized
/// index (joint actions, feature blocks, checkpoints) and must not change.
enum class Action : std::uint8_t { North = 0, West = 1, South = 2, East = 3, Up = 4, Down = 5 };

inline constexpr int kActionCount = 6;

inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::North, Action::West, Action::South, Action::East, Action::Up, Action::Down};

using JointAction = std::vector<Action>;

inline std::string_view action_name(Action a) {
  switch (a) {
    case Action::North: return "North";
    case Action::West: return "West";
    case Action::South: return "South";
    case Action::East: return "East";
    case Action::Up: return "Up";
    case Action::Down: return "Down";
  }
  return "?";
}

inline bool in_bounds(const AgentState& s, const GridSpec& grid) {
  return s.x >= 0 && s.x < grid.dim_x && s.y >= 0 && s.y < grid.dim_y && s.z >= 1 &&
         s.z <= grid.dim_z;
}

inline void validate_agent_state(const AgentState& s, const GridSpec& grid) {
  if (!in_bounds(s, grid)) {
    throw InvalidArgument("agent state (" + std::to_string(s.x) + "," + std::to_string(s.y) + "," +
                          std::to_string(s.z) + ") is outside the grid");
  }
}

inline void validate_joint_state(const JointState& joint, const GridSpec& grid) {
  for (std::size_t i = 0; i < joint.size(); ++i) {
    validate_agent_state(joint[i], grid);
    for (std::size_t j = 0; j < i; ++j) {
      if (joint[i] == joint[j]) {
        throw CollisionError("agents " + std::to_string(j) + " and " + std::to_string(i) +
                             " occupy the same cell");
      }
    }
  }
}

/// Inclusive ground rectangle seen by an agent, already clipped to the grid.
struct FovRect {
  int x0 = 0;
  int x1 = -1;
  int y0 = 0;
  int y1 = -1;

  [[nodiscard]] bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  [[nodiscard]] int area() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
};

namespace detail {

// Largest integer k with k <= z * tan(theta). The slack absorbs rounding in
// products like 3 * tan(45deg) that should land exactly on an integer.
inline int half_width(int z, double tan_theta) {
  return static_cast<int>(std::floor(static_cast<double>(z) * tan_theta + 1e-9));
}

}  // namespace detail

/// Per-axis footprint: |qx - x| <= z tan(theta_1) and |qy - y| <= z tan(theta_2).
inline FovRect fov_rect(const AgentState& agent, const GridSpec& grid) {
  const int hx = detail::half_width(agent.z, grid.tan_theta_1);
  const int hy = detail::half_width(agent.z, grid.tan_theta_2);
  return FovRect{std::max(0, agent.x - hx), std::min(grid.dim_x - 1, agent.x + hx),
                 std::max(0, agent.y - hy), std::min(grid.dim_y - 1, agent.y + hy)};
}

/// Ground cells under the agent's camera, in (x, y) lexicographic order.
inline std::vector<Cell> fov_cells(const AgentState& agent, const GridSpec& grid) {
  const FovRect r = fov_rect(agent, grid);
  std::vector<Cell> out;
  out.reserve(static_cast<std::size_t>(r.area()));
  for (int x = r.x0; x <= r.x1; ++x) {
    for (int y = r.y0; y <= r.y1; ++y) out.push_back({x, y});
  }
  return out;
}

/// f_i: field cells under agent i's footprint.
inline int coverage_count(const JointState& joint, std::size_t i, const FieldMask& field,
                          const GridSpec& grid) {
  const FovRect r = fov_rect(joint.at(i), grid);
  int count = 0;
  for (int x = r.x0; x <= r.x1; ++x) {
    for (int y = r.y0; y <= r.y1; ++y) count += field.contains(x, y) ? 1 : 0;
  }
  return count;
}

/// Which ground cells count towards overlap.
enum class OverlapScope : std::uint8_t { AllCells, FieldCells };

namespace detail {

inline int overlap_count_impl(const JointState& joint, std::size_t i, const GridSpec& grid,
                              const FieldMask* field) {
  const FovRect mine = fov_rect(joint.at(i), grid);
  std::array<FovRect, 8> small{};
  std::vector<FovRect> large;
  FovRect* others = small.data();
  if (joint.size() > small.size()) {
    large.resize(joint.size());
    others = large.data();
  }
  std::size_t n = 0;
  for (std::size_t j = 0; j < joint.size(); ++j) {
    if (j != i) others[n++] = fov_rect(joint[j], grid);
  }
  int count = 0;
  for (int x = mine.x0; x <= mine.x1; ++x) {
    for (int y = mine.y0; y <= mine.y1; ++y) {
      if (field != nullptr && !field->contains(x, y)) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (others[k].contains(x, y)) {
          ++count;
          break;
        }
      }
    }
  }
  return count;
}

}  // namespace detail

/// o_i: cells in agent i's footprint also seen by at least one other agent.
inline int overlap_count(const JointState& joint, std::size_t i, const GridSpec& grid) {
  return detail::overlap_count_impl(joint, i, grid, nullptr);
}

/// Variant of overlap_count restricted to field cells.
inline int overlap_count_in_field(const JointState& joint, std::size_t i, const GridSpec& grid,
                                  const FieldMask& field) {
  return detail::overlap_count_impl(joint, i, grid, &field);
}

/// Sum of f_i minus sum of o_i.
inline int objective_h(const JointState& joint, const FieldMask& field, const GridSpec& grid) {
  int h = 0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    h += coverage_count(joint, i, field, grid) - overlap_count(joint, i, grid);
  }
  return h;
}

inline AgentState apply_action(const AgentState& state, Action action, const GridSpec& grid) {
  AgentState next = state;
  switch (action) {
    case Action::North: ++next.y; break;
    case Action::South: --next.y; break;
    case Action::East: ++next.x; break;
    case Action::West: --next.x; break;
    case Action::Up: ++next.z; break;
    case Action::Down: --next.z; break;
  }
  return in_bounds(next, grid) ? next : state;
}

inline JointState apply_joint_action(const JointState& joint, const JointAction& action,
                                     const GridSpec& grid) {
  if (joint.size() != action.size()) {
    throw InvalidArgument("joint action length does not match the agent count");
  }
  JointState next(joint.size());
  for (std::size_t i = 0; i < joint.size(); ++i) {
    next[i] = apply_action(joint[i], action[i], grid);
    for (std::size_t j = 0; j < i; ++j) {
      if (next[i] == next[j]) {
        throw CollisionError("joint action sends agents " + std::to_string(j) + " and " +
                             std::to_string(i) + " to the same cell");
      }
    }
  }
  return next;
}

/// Team totals for one joint state.
struct CoverageStats {
  int coverage_sum = 0;
  int overlap_sum = 0;
};

/// One grid + field + overlap rule: everything the learner needs to score a state.
struct CoverageEnv {
  GridSpec grid;
  FieldMask field;
  OverlapScope overlap_scope = OverlapScope::AllCells;

  [[nodiscard]] int coverage(const JointState& joint, std::size_t i) const {
    return coverage_count(joint, i, field, grid);
  }

  [[nodiscard]] int overlap(const JointState& joint, std::size_t i) const {
    return overlap_scope == OverlapScope::AllCells ? overlap_count(joint, i, grid)
                                                   : overlap_count_in_field(joint, i, grid, field);
  }

  [[nodiscard]] CoverageStats stats(const JointState& joint) const {
    CoverageStats s;
    for (std::size_t i = 0; i < joint.size(); ++i) {
      s.coverage_sum += coverage(joint, i);
      s.overlap_sum += overlap(joint, i);
    }
    return s;
  }
};

/// Team reward: r when coverage reaches fb with no overlap, 0 otherwise.
inline double global_reward(const CoverageStats& stats, double r, double fb) {
  return (static_cast<double>(stats.coverage_sum) >= fb && stats.overlap_sum <= 0) ? r : 0.0;
}

inline double global_reward(const JointState& joint, const FieldMask& field, const GridSpec& grid,
                            double r, double fb) {
  return global_reward(CoverageEnv{grid, field, OverlapScope::AllCells}.stats(joint), r, fb);
}

/// Parses a '#'/'.' mask; line k holds row y = k. Trailing blank lines are ignored.
/// Pass expected dimensions (> 0) to reject masks that do not match a grid.
inline FieldMask parse_field_mask(std::string_view text, int expected_width = 0,
                                  int expected_height = 0) {
  std::vector<std::string> rows;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    rows.push_back(std::move(line));
    if (end == text.size()) break;
    start = end + 1;
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw InvalidArgument("field mask is empty");

  const std::size_t width = rows.front().size();
  if (width == 0) throw InvalidArgument("field mask line 1: empty row");
  std::vector<Cell> cells;
  for (std::size_t y = 0; y < rows.size(); ++y) {
    const std::string& row = rows[y];
    if (row.size() != width) {
      throw InvalidArgument("field mask line " + std::to_string(y + 1) + ": expected " +
                            std::to_string(width) + " columns, got " + std::to_string(row.size()));
    }
    for (std::size_t x = 0; x < row.size(); ++x) {
      if (row[x] == '#') {
        cells.push_back({static_cast<int>(x), static_cast<int>(y)});
      } else if (row[x] != '.') {
        throw InvalidArgument("field mask line " + std::to_string(y + 1) + ", column " +
                              std::to_string(x + 1) + ": unexpected character '" +
                              std::string(1, row[x]) + "'");
      }
    }
  }
  const int w = static_cast<int>(width);
  const int h = static_cast<int>(rows.size());
  if ((expected_width > 0 && w != expected_width) || (expected_height > 0 && h != expected_height)) {
    throw InvalidArgument("field mask is " + std::to_string(w) + "x" + std::to_string(h) +
                          " but the grid is " + std::to_string(expected_width) + "x" +
                          std::to_string(expected_height));
  }
  return FieldMask(w, h, std::move(cells));
}

inline FieldMask load_field_mask(const std::string& path, const GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open field mask '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_field_mask(buf.str(), grid.dim_x, grid.dim_y);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

}  // namespace coverage_marl
