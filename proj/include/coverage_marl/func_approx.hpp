#pragma once

// Linear Q-function approximation Q_i(S, A) = phi(S, A)^T theta_i.
//
// Every scheme lays its feature vector out as one block per joint action:
// index = A * block_size + offset-within-block, with only A's block populated.
//   FSR      block = m * (X + Y + Z) one-hot coordinate indicators
//   RBF      block = L Gaussian activations around fixed centers
//   Tabular  block = (X * Y * Z)^m, a single indicator for the joint state

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "coverage_marl/ce_game.hpp"
#include "coverage_marl/coverage_env.hpp"
#include "coverage_marl/errors.hpp"
#include "coverage_marl/random.hpp"

namespace coverage_marl {

enum class SchemeKind : std::uint32_t { Fsr = 0, Rbf = 1, Tabular = 2 };

inline const char* to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Fsr: return "fsr";
    case SchemeKind::Rbf: return "rbf";
    case SchemeKind::Tabular: return "tabular";
  }
  return "?";
}

struct Feature {
  std::size_t index = 0;
  double value = 0.0;
  auto operator<=>(const Feature&) const = default;
};

/// Nonzero entries of phi, sorted by index.
struct SparseFeatures {
  std::vector<Feature> entries;

  [[nodiscard]] std::size_t size() const { return entries.size(); }
  [[nodiscard]] auto begin() const { return entries.begin(); }
  [[nodiscard]] auto end() const { return entries.end(); }

  [[nodiscard]] SparseFeatures shifted(std::size_t offset) const {
    SparseFeatures out = *this;
    for (Feature& f : out.entries) f.index += offset;
    return out;
  }
};

struct ParamVector {
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  bool operator==(const ParamVector&) const = default;
};

class FeatureScheme {
 public:
  static FeatureScheme fsr(const GridSpec& grid, std::size_t agents) {
    return FeatureScheme(SchemeKind::Fsr, grid, agents);
  }

  static FeatureScheme tabular(const GridSpec& grid, std::size_t agents) {
    return FeatureScheme(SchemeKind::Tabular, grid, agents);
  }

  /// centers are points in the flattened (x1, y1, z1, ..., xm, ym, zm) space.
  static FeatureScheme rbf(const GridSpec& grid, std::size_t agents,
                           std::vector<std::vector<double>> centers, std::vector<double> radii) {
    FeatureScheme s(SchemeKind::Rbf, grid, agents);
    if (centers.empty()) throw InvalidArgument("RBF scheme needs at least one center");
    if (centers.size() != radii.size()) throw InvalidArgument("one radius per RBF center is required");
    for (const auto& c : centers) {
      if (c.size() != 3 * agents) throw InvalidArgument("RBF center has the wrong dimension");
    }
    for (double mu : radii) {
      if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidArgument("RBF radii must be positive");
    }
    s.centers_ = std::move(centers);
    s.radii_ = std::move(radii);
    return s;
  }

  /// Default RBF layout. One agent with 8 centers uses the corners of the
  /// state box; otherwise centers are uniform over the joint-state box. Every
  /// radius is half the mean nearest-center distance.
  static FeatureScheme default_rbf(const GridSpec& grid, std::size_t agents, std::size_t count,
                                   Rng& rng) {
    if (count == 0) throw InvalidArgument("RBF scheme needs at least one center");
    std::vector<std::vector<double>> centers;
    const double hi[3] = {static_cast<double>(grid.dim_x - 1), static_cast<double>(grid.dim_y - 1),
                          static_cast<double>(grid.dim_z)};
    const double lo[3] = {0.0, 0.0, 1.0};
    if (agents == 1 && count == 8) {
      for (int corner = 0; corner < 8; ++corner) {
        centers.push_back({(corner & 4) ? hi[0] : lo[0], (corner & 2) ? hi[1] : lo[1],
                           (corner & 1) ? hi[2] : lo[2]});
      }
    } else {
      for (std::size_t l = 0; l < count; ++l) {
        std::vector<double> c(3 * agents);
        for (std::size_t d = 0; d < c.size(); ++d) c[d] = rng.uniform(lo[d % 3], hi[d % 3]);
        centers.push_back(std::move(c));
      }
    }
    double mu = 1.0;
    if (centers.size() > 1) {
      double total = 0.0;
      for (std::size_t a = 0; a < centers.size(); ++a) {
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < centers.size(); ++b) {
          if (a != b) nearest = std::min(nearest, std::sqrt(squared_distance(centers[a], centers[b])));
        }
        total += nearest;
      }
      mu = 0.5 * total / static_cast<double>(centers.size());
      if (!(mu > 0.0)) mu = 1.0;
    }
    std::vector<double> radii(centers.size(), mu);
    return rbf(grid, agents, std::move(centers), std::move(radii));
  }

  [[nodiscard]] SchemeKind kind() const { return kind_; }
  [[nodiscard]] const GridSpec& grid() const { return grid_; }
  [[nodiscard]] std::size_t agents() const { return agents_; }
  [[nodiscard]] std::size_t joint_actions() const { return joint_actions_; }
  /// D = m * (X + Y + Z).
  [[nodiscard]] std::size_t coordinate_dim() const {
    return agents_ * static_cast<std::size_t>(grid_.dim_x + grid_.dim_y + grid_.dim_z);
  }
  [[nodiscard]] std::size_t rbf_count() const { return centers_.size(); }
  [[nodiscard]] const std::vector<std::vector<double>>& centers() const { return centers_; }
  [[nodiscard]] const std::vector<double>& radii() const { return radii_; }

  [[nodiscard]] std::uint64_t block_size() const {
    switch (kind_) {
      case SchemeKind::Fsr: return coordinate_dim();
      case SchemeKind::Rbf: return centers_.size();
      case SchemeKind::Tabular: {
        std::uint64_t n = 1;
        const auto cells = static_cast<std::uint64_t>(grid_.cell_count());
        for (std::size_t i = 0; i < agents_; ++i) n = checked_mul(n, cells);
        return n;
      }
    }
    return 0;
  }

  /// Parameter-vector length per agent.
  [[nodiscard]] std::uint64_t length() const { return checked_mul(block_size(), joint_actions_); }

  /// phi(S, A) for the joint action with canonical index 0; every other
  /// action's features are this vector shifted by index * block_size().
  [[nodiscard]] SparseFeatures state_features(const JointState& joint) const {
    if (joint.size() != agents_) throw InvalidArgument("joint state has the wrong agent count");
    SparseFeatures out;
    switch (kind_) {
      case SchemeKind::Fsr: {
        out.entries.reserve(3 * agents_);
        const std::size_t per_agent = static_cast<std::size_t>(grid_.dim_x + grid_.dim_y + grid_.dim_z);
        for (std::size_t i = 0; i < agents_; ++i) {
          const AgentState& s = joint[i];
          validate_agent_state(s, grid_);
          const std::size_t base = i * per_agent;
          out.entries.push_back({base + static_cast<std::size_t>(s.x), 1.0});
          out.entries.push_back({base + static_cast<std::size_t>(grid_.dim_x + s.y), 1.0});
          out.entries.push_back(
              {base + static_cast<std::size_t>(grid_.dim_x + grid_.dim_y + s.z - 1), 1.0});
        }
        break;
      }
      case SchemeKind::Rbf: {
        std::vector<double> point(3 * agents_);
        for (std::size_t i = 0; i < agents_; ++i) {
          validate_agent_state(joint[i], grid_);
          point[3 * i] = joint[i].x;
          point[3 * i + 1] = joint[i].y;
          point[3 * i + 2] = joint[i].z;
        }
        out.entries.reserve(centers_.size());
        for (std::size_t l = 0; l < centers_.size(); ++l) {
          const double d2 = squared_distance(point, centers_[l]);
          out.entries.push_back({l, std::exp(-d2 / (2.0 * radii_[l] * radii_[l]))});
        }
        break;
      }
      case SchemeKind::Tabular: {
        std::uint64_t index = 0;
        for (const AgentState& s : joint) {
          validate_agent_state(s, grid_);
          const auto cell = static_cast<std::uint64_t>((s.x * grid_.dim_y + s.y) * grid_.dim_z + s.z - 1);
          index = index * static_cast<std::uint64_t>(grid_.cell_count()) + cell;
        }
        out.entries.push_back({static_cast<std::size_t>(index), 1.0});
        break;
      }
    }
    return out;
  }

  [[nodiscard]] SparseFeatures features(const JointState& joint, std::size_t action_index) const {
    if (action_index >= joint_actions_) throw InvalidArgument("joint action index out of range");
    return state_features(joint).shifted(action_index * static_cast<std::size_t>(block_size()));
  }

  [[nodiscard]] SparseFeatures features(const JointState& joint, const JointAction& action) const {
    if (action.size() != agents_) throw InvalidArgument("joint action has the wrong agent count");
    return features(joint, encode_joint_action(action));
  }

  /// Inverse of the tabular encoding: feature index -> (joint state, action index).
  [[nodiscard]] std::pair<JointState, std::size_t> decode_tabular(std::uint64_t index) const {
    if (kind_ != SchemeKind::Tabular) throw InvalidArgument("decode_tabular needs a tabular scheme");
    const std::uint64_t block = block_size();
    if (index >= length()) throw InvalidArgument("tabular index out of range");
    const auto action = static_cast<std::size_t>(index / block);
    std::uint64_t state = index % block;
    JointState joint(agents_);
    const auto cells = static_cast<std::uint64_t>(grid_.cell_count());
    for (std::size_t i = agents_; i-- > 0;) {
      const auto cell = static_cast<int>(state % cells);
      state /= cells;
      joint[i] = AgentState{cell / (grid_.dim_y * grid_.dim_z), (cell / grid_.dim_z) % grid_.dim_y,
                            cell % grid_.dim_z + 1};
    }
    return {joint, action};
  }

  /// All-zero parameters, refusing lengths that cannot reasonably be allocated.
  [[nodiscard]] ParamVector zero_params() const {
    constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 28;
    const std::uint64_t n = length();
    if (n > kMaxEntries) {
      throw InvalidArgument(std::string(to_string(kind_)) + " parameter vector would need " +
                            std::to_string(n) + " entries");
    }
    return ParamVector{std::vector<double>(static_cast<std::size_t>(n), 0.0)};
  }

 private:
  FeatureScheme(SchemeKind kind, const GridSpec& grid, std::size_t agents)
      : kind_(kind), grid_(grid), agents_(agents) {
    grid.validate();
    if (agents == 0) throw InvalidArgument("feature scheme needs at least one agent");
    joint_actions_ = joint_action_count(agents);
  }

  static std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    if (b != 0 && a > std::numeric_limits<std::uint64_t>::max() / b) {
      throw InvalidArgument("feature vector length overflows 64 bits");
    }
    return a * b;
  }

  static double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
    return d2;
  }

  SchemeKind kind_;
  GridSpec grid_;
  std::size_t agents_ = 0;
  std::size_t joint_actions_ = 0;
  std::vector<std::vector<double>> centers_;
  std::vector<double> radii_;
};

namespace detail {

inline void require_kind(const FeatureScheme& scheme, SchemeKind kind) {
  if (scheme.kind() != kind) {
    throw InvalidArgument(std::string("scheme mismatch: expected ") + to_string(kind) + ", got " +
                          to_string(scheme.kind()));
  }
}

}  // namespace detail

inline SparseFeatures fsr_features(const JointState& joint, const JointAction& action,
                                   const FeatureScheme& scheme) {
  detail::require_kind(scheme, SchemeKind::Fsr);
  return scheme.features(joint, action);
}

inline SparseFeatures rbf_features(const JointState& joint, const JointAction& action,
                                   const FeatureScheme& scheme) {
  detail::require_kind(scheme, SchemeKind::Rbf);
  return scheme.features(joint, action);
}

inline SparseFeatures tabular_features(const JointState& joint, const JointAction& action,
                                       const FeatureScheme& scheme) {
  detail::require_kind(scheme, SchemeKind::Tabular);
  return scheme.features(joint, action);
}

inline double q_value(const ParamVector& theta, const SparseFeatures& phi) {
  double q = 0.0;
  for (const Feature& f : phi) {
    if (f.index >= theta.values.size()) {
      throw InvalidArgument("feature index " + std::to_string(f.index) +
                            " exceeds parameter length " + std::to_string(theta.values.size()));
    }
    q += theta.values[f.index] * f.value;
  }
  return q;
}

/// Q_i(S, A) for every joint action A, in canonical order.
inline std::vector<double> q_row(const ParamVector& theta, const JointState& joint,
                                 const FeatureScheme& scheme) {
  if (theta.size() != scheme.length()) throw InvalidArgument("parameter vector length mismatch");
  const SparseFeatures base = scheme.state_features(joint);
  const auto block = static_cast<std::size_t>(scheme.block_size());
  std::vector<double> out(scheme.joint_actions(), 0.0);
  for (std::size_t a = 0; a < out.size(); ++a) {
    const double* t = theta.values.data() + a * block;
    double q = 0.0;
    for (const Feature& f : base) q += t[f.index] * f.value;
    out[a] = q;
  }
  return out;
}

struct BestJointQ {
  std::size_t action_index = 0;
  double value = 0.0;
};

/// max over the admissible set of phi(S, A)^T theta; ties go to the smaller index.
inline BestJointQ best_joint_q(const ParamVector& theta, const JointState& joint,
                               const FeatureScheme& scheme,
                               const std::vector<std::size_t>& admissible) {
  if (admissible.empty()) throw InvalidArgument("best_joint_q needs a non-empty admissible set");
  if (theta.size() != scheme.length()) throw InvalidArgument("parameter vector length mismatch");
  const SparseFeatures base = scheme.state_features(joint);
  const auto block = static_cast<std::size_t>(scheme.block_size());
  BestJointQ best{admissible.front(), -std::numeric_limits<double>::infinity()};
  for (std::size_t a : admissible) {
    if (a >= scheme.joint_actions()) throw InvalidArgument("joint action index out of range");
    const double* t = theta.values.data() + a * block;
    double q = 0.0;
    for (const Feature& f : base) q += t[f.index] * f.value;
    if (q > best.value || (q == best.value && a < best.action_index)) best = {a, q};
  }
  return best;
}

/// theta += alpha * (reward + gamma * max_next_q - phi^T theta) * phi, in place.
inline void td_update_in_place(ParamVector& theta, const SparseFeatures& phi, double reward,
                               double max_next_q, double alpha, double gamma) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
  const double td_error = reward + gamma * max_next_q - q_value(theta, phi);
  const double step = alpha * td_error;
  for (const Feature& f : phi) {
    double& w = theta.values[f.index];
    w += step * f.value;
    if (!std::isfinite(w)) {
      throw DivergenceError("parameter " + std::to_string(f.index) + " became non-finite");
    }
  }
}

inline ParamVector td_update(ParamVector theta, const SparseFeatures& phi, double reward,
                             double max_next_q, double alpha, double gamma) {
  td_update_in_place(theta, phi, reward, max_next_q, alpha, gamma);
  return theta;
}

// Checkpoint layout, all integers little-endian:
//   0  char[8] "CMARLTH1"
//   8  u32     format version (1)
//  12  u32     scheme (0 fsr, 1 rbf, 2 tabular)
//  16  u32     agent count m
//  20  u32     dim_x     24 u32 dim_y     28 u32 dim_z
//  32  u32     RBF center count L (0 for other schemes)
//  36  u32     agent index this vector belongs to
//  40  u64     entry count n
//  48  f64[n]  parameters, IEEE-754 binary64
struct CheckpointHeader {
  SchemeKind scheme = SchemeKind::Fsr;
  std::uint32_t agents = 0;
  std::uint32_t dim_x = 0;
  std::uint32_t dim_y = 0;
  std::uint32_t dim_z = 0;
  std::uint32_t rbf_count = 0;
  std::uint32_t agent_index = 0;
  bool operator==(const CheckpointHeader&) const = default;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'M', 'A', 'R', 'L', 'T', 'H', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xFF));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw InvalidArgument("checkpoint is truncated");
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  }
  pos += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace detail

inline CheckpointHeader checkpoint_header(const FeatureScheme& scheme, std::uint32_t agent_index) {
  return {scheme.kind(),
          static_cast<std::uint32_t>(scheme.agents()),
          static_cast<std::uint32_t>(scheme.grid().dim_x),
          static_cast<std::uint32_t>(scheme.grid().dim_y),
          static_cast<std::uint32_t>(scheme.grid().dim_z),
          static_cast<std::uint32_t>(scheme.rbf_count()),
          agent_index};
}

inline std::string encode_checkpoint(const CheckpointHeader& header, const ParamVector& theta) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.scheme));
  detail::put_le<std::uint32_t>(out, header.agents);
  detail::put_le<std::uint32_t>(out, header.dim_x);
  detail::put_le<std::uint32_t>(out, header.dim_y);
  detail::put_le<std::uint32_t>(out, header.dim_z);
  detail::put_le<std::uint32_t>(out, header.rbf_count);
  detail::put_le<std::uint32_t>(out, header.agent_index);
  detail::put_le<std::uint64_t>(out, theta.values.size());
  for (double v : theta.values) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    detail::put_le<std::uint64_t>(out, bits);
  }
  return out;
}

inline std::pair<CheckpointHeader, ParamVector> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw InvalidArgument("not a parameter checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kCheckpointMagic);
  if (detail::get_le<std::uint32_t>(bytes, pos) != kCheckpointVersion) {
    throw InvalidArgument("unsupported checkpoint version");
  }
  CheckpointHeader h;
  const auto scheme = detail::get_le<std::uint32_t>(bytes, pos);
  if (scheme > 2) throw InvalidArgument("unknown scheme id in checkpoint");
  h.scheme = static_cast<SchemeKind>(scheme);
  h.agents = detail::get_le<std::uint32_t>(bytes, pos);
  h.dim_x = detail::get_le<std::uint32_t>(bytes, pos);
  h.dim_y = detail::get_le<std::uint32_t>(bytes, pos);
  h.dim_z = detail::get_le<std::uint32_t>(bytes, pos);
  h.rbf_count = detail::get_le<std::uint32_t>(bytes, pos);
  h.agent_index = detail::get_le<std::uint32_t>(bytes, pos);
  const auto n = detail::get_le<std::uint64_t>(bytes, pos);
  if (n != (bytes.size() - pos) / 8 || (bytes.size() - pos) % 8 != 0) {
    throw InvalidArgument("checkpoint entry count does not match its size");
  }
  ParamVector theta{std::vector<double>(static_cast<std::size_t>(n))};
  for (double& v : theta.values) {
    const auto bits = detail::get_le<std::uint64_t>(bytes, pos);
    std::memcpy(&v, &bits, sizeof(v));
  }
  return {h, std::move(theta)};
}

inline void write_checkpoint(const std::string& path, const CheckpointHeader& header,
                             const ParamVector& theta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint '" + path + "' for writing");
  const std::string bytes = encode_checkpoint(header, theta);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline std::pair<CheckpointHeader, ParamVector> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace coverage_marl
