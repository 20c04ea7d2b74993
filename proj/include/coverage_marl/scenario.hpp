#pragma once

// Experiment plumbing: scenario files, run summaries, per-episode CSV output.
//
// Scenario files are `key = value` lines; '#' starts a comment. Relative
// field-mask paths resolve against the scenario file's directory.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coverage_marl/coverage_env.hpp"
#include "coverage_marl/errors.hpp"
#include "coverage_marl/func_approx.hpp"
#include "coverage_marl/learner.hpp"
#include "json.hpp"

namespace coverage_marl {

inline constexpr std::size_t kMaxAgents = 4;  // 6^4 = 1296 LP variables

struct Scenario {
  std::string name;
  std::string source;  // file the scenario came from, for messages
  GridSpec grid;
  std::string field_path;
  FieldMask field;
  OverlapScope overlap = OverlapScope::AllCells;
  std::size_t agents = 1;
  LearnerConfig config;
  std::string output_dir;
  std::vector<std::uint64_t> seeds;

  [[nodiscard]] CoverageEnv env() const { return {grid, field, overlap}; }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  return v;
}

class ScenarioReader {
 public:
  ScenarioReader(std::string source, std::map<std::string, std::pair<std::string, int>> entries)
      : source_(std::move(source)), entries_(std::move(entries)) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = entries_.find(key);
    const std::string where =
        it == entries_.end() ? source_ : source_ + ":" + std::to_string(it->second.second);
    throw ScenarioError(where + ": " + msg);
  }

  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }

  [[nodiscard]] const std::string& raw(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ScenarioError(source_ + ": missing required key '" + key + "'");
    return it->second.first;
  }

  template <typename T>
  T number(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    const auto v = parse_number<T>(raw(key));
    if (!v) fail(key, "'" + key + "' expects a number, got '" + raw(key) + "'");
    return *v;
  }

  template <typename T>
  T number(const std::string& key) const {
    static_cast<void>(raw(key));
    return number<T>(key, T{});
  }

 private:
  std::string source_;
  std::map<std::string, std::pair<std::string, int>> entries_;
};

inline const std::vector<std::string>& scenario_keys() {
  static const std::vector<std::string> keys = {
      "name",          "grid",       "tan_theta",      "field",
      "overlap",       "agents",     "mode",           "scheme",
      "alpha",         "gamma",      "epsilon0",       "epsilon_decay",
      "episodes",      "max_steps",  "reward",         "fb",
      "rbf_centers",   "seed",       "seeds",          "replicates",
      "output",        "checkpoint_every",             "baseline_cell_reward",
      "baseline_overlap_penalty"};
  return keys;
}

}  // namespace detail

inline SchemeKind parse_scheme(std::string_view s) {
  if (s == "fsr") return SchemeKind::Fsr;
  if (s == "rbf") return SchemeKind::Rbf;
  if (s == "tabular") return SchemeKind::Tabular;
  throw InvalidArgument("unknown scheme '" + std::string(s) + "' (expected fsr, rbf or tabular)");
}

inline LearnerMode parse_mode(std::string_view s) {
  if (s == "ce") return LearnerMode::Ce;
  if (s == "baseline") return LearnerMode::Baseline;
  throw InvalidArgument("unknown mode '" + std::string(s) + "' (expected ce or baseline)");
}

/// Parses scenario text. `base_dir` anchors a relative field path; `source`
/// prefixes error messages.
inline Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir,
                               const std::string& source) {
  std::map<std::string, std::pair<std::string, int>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ScenarioError(where + "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    const auto& known = detail::scenario_keys();
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ScenarioError(where + "unknown key '" + key + "'");
    }
    if (value.empty()) throw ScenarioError(where + "key '" + key + "' has no value");
    if (!entries.emplace(key, std::make_pair(value, lineno)).second) {
      throw ScenarioError(where + "duplicate key '" + key + "'");
    }
  }
  const detail::ScenarioReader r(source, std::move(entries));

  Scenario s;
  s.source = source;
  s.name = r.has("name") ? r.raw("name") : std::filesystem::path(source).stem().string();

  {
    const auto dims = detail::split(r.raw("grid"), 'x');
    std::optional<int> d[3];
    if (dims.size() == 3) {
      for (int k = 0; k < 3; ++k) d[k] = detail::parse_number<int>(dims[k]);
    }
    if (dims.size() != 3 || !d[0] || !d[1] || !d[2]) {
      r.fail("grid", "grid expects XxYxZ, e.g. 7x7x5");
    }
    s.grid.dim_x = *d[0];
    s.grid.dim_y = *d[1];
    s.grid.dim_z = *d[2];
  }
  if (r.has("tan_theta")) {
    const auto parts = detail::split(r.raw("tan_theta"), ',');
    if (parts.size() != 1 && parts.size() != 2) r.fail("tan_theta", "tan_theta expects one or two numbers");
    const auto t1 = detail::parse_number<double>(parts[0]);
    const auto t2 = detail::parse_number<double>(parts.back());
    if (!t1 || !t2) r.fail("tan_theta", "tan_theta expects numbers");
    s.grid.tan_theta_1 = *t1;
    s.grid.tan_theta_2 = *t2;
  }
  if (s.grid.dim_x < 1 || s.grid.dim_y < 1 || s.grid.dim_z < 1) {
    r.fail("grid", "grid dimensions must all be >= 1");
  }
  if (!(s.grid.tan_theta_1 > 0.0 && s.grid.tan_theta_2 > 0.0)) {
    r.fail("tan_theta", "tan_theta must be positive");
  }

  const std::filesystem::path field_rel(r.raw("field"));
  s.field_path = (field_rel.is_absolute() ? field_rel : base_dir / field_rel).lexically_normal().string();
  try {
    s.field = load_field_mask(s.field_path, s.grid);
  } catch (const InvalidArgument& e) {
    r.fail("field", e.what());
  }
  if (s.field.size() == 0) r.fail("field", "field mask has no '#' cells");

  if (r.has("overlap")) {
    const std::string& v = r.raw("overlap");
    if (v == "all") {
      s.overlap = OverlapScope::AllCells;
    } else if (v == "field") {
      s.overlap = OverlapScope::FieldCells;
    } else {
      r.fail("overlap", "overlap expects 'all' or 'field'");
    }
  }

  const auto agents = r.number<long long>("agents");
  if (agents < 1 || agents > static_cast<long long>(kMaxAgents)) {
    r.fail("agents", "agents must lie in [1, " + std::to_string(kMaxAgents) + "]");
  }
  s.agents = static_cast<std::size_t>(agents);
  if (s.agents > static_cast<std::size_t>(s.grid.cell_count())) r.fail("agents", "more agents than grid cells");

  LearnerConfig& c = s.config;
  try {
    if (r.has("mode")) c.mode = parse_mode(r.raw("mode"));
  } catch (const InvalidArgument& e) {
    r.fail("mode", e.what());
  }
  try {
    if (r.has("scheme")) c.scheme = parse_scheme(r.raw("scheme"));
  } catch (const InvalidArgument& e) {
    r.fail("scheme", e.what());
  }
  c.alpha = r.number("alpha", c.alpha);
  c.gamma = r.number("gamma", c.gamma);
  c.epsilon0 = r.number("epsilon0", c.epsilon0);
  c.epsilon_decay = r.number("epsilon_decay", c.epsilon_decay);
  c.reward = r.number("reward", c.reward);
  c.baseline_cell_reward = r.number("baseline_cell_reward", c.baseline_cell_reward);
  c.baseline_overlap_penalty = r.number("baseline_overlap_penalty", c.baseline_overlap_penalty);
  c.episodes = r.number<std::size_t>("episodes", c.episodes);
  c.max_steps = r.number<std::size_t>("max_steps", c.max_steps);
  c.rbf_centers = r.number<std::size_t>("rbf_centers", c.rbf_centers);
  c.checkpoint_every = r.number<std::size_t>("checkpoint_every", c.checkpoint_every);
  if (r.has("fb") && r.raw("fb") != "full") {
    c.fb = r.number<double>("fb");
    if (!(c.fb > 0.0 && c.fb <= static_cast<double>(s.field.size()))) {
      r.fail("fb", "fb must lie in (0, |F|] = (0, " + std::to_string(s.field.size()) + "]");
    }
  }

  // Range checks name the offending key's line.
  const auto in_range = [&](const char* key, bool ok, const char* what) {
    if (!ok) r.fail(key, std::string(key) + " must " + what);
  };
  in_range("alpha", c.alpha > 0.0 && c.alpha <= 1.0, "lie in (0, 1]");
  in_range("gamma", c.gamma > 0.0 && c.gamma <= 1.0, "lie in (0, 1]");
  in_range("epsilon0", c.epsilon0 >= 0.0 && c.epsilon0 <= 1.0, "lie in [0, 1]");
  in_range("epsilon_decay", c.epsilon_decay > 0.0 && c.epsilon_decay <= 1.0, "lie in (0, 1]");
  in_range("max_steps", c.max_steps >= 1, "be at least 1");
  in_range("reward", c.reward > 0.0, "be positive");
  in_range("rbf_centers", c.rbf_centers >= 1, "be at least 1");

  const auto first_seed = r.number<std::uint64_t>("seed", 1);
  if (r.has("seeds")) {
    for (const std::string& part : detail::split(r.raw("seeds"), ',')) {
      const auto v = detail::parse_number<std::uint64_t>(part);
      if (!v) r.fail("seeds", "seeds expects a comma-separated list of integers");
      s.seeds.push_back(*v);
    }
  }
  if (r.has("replicates")) {
    const auto n = r.number<std::size_t>("replicates");
    if (n < 1) r.fail("replicates", "replicates must be at least 1");
    if (!s.seeds.empty() && s.seeds.size() != n) {
      r.fail("replicates", "replicates = " + std::to_string(n) + " but " +
                               std::to_string(s.seeds.size()) + " seeds are listed");
    }
    for (std::size_t k = s.seeds.size(); k < n; ++k) s.seeds.push_back(first_seed + k);
  }
  if (s.seeds.empty()) s.seeds.push_back(first_seed);
  c.seed = s.seeds.front();

  s.output_dir = r.has("output") ? r.raw("output") : "runs/" + s.name;
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open scenario file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), std::filesystem::path(path).parent_path(), path);
}

// ---------------------------------------------------------------------------
// Summaries

struct PhaseStats {
  std::size_t first_episode = 0;
  std::size_t episodes = 0;
  double mean_steps = 0.0;
  double median_steps = 0.0;
  double goal_rate = 0.0;
};

struct RunSummary {
  std::size_t episodes = 0;
  std::vector<PhaseStats> phases;  // ten contiguous slices, empty ones dropped
  PhaseStats final_phase;          // the last ceil(n/10) episodes
  std::optional<std::size_t> first_goal_episode;
  bool converged = false;
};

inline constexpr double kConvergedGoalRate = 0.9;

namespace detail {

inline PhaseStats phase_stats(const std::vector<EpisodeLog>& logs, std::size_t begin, std::size_t end) {
  PhaseStats p;
  p.first_episode = logs[begin].episode;
  p.episodes = end - begin;
  std::vector<std::size_t> steps;
  std::size_t goals = 0;
  double total = 0.0;
  for (std::size_t k = begin; k < end; ++k) {
    steps.push_back(logs[k].steps);
    total += static_cast<double>(logs[k].steps);
    goals += logs[k].goal ? 1 : 0;
  }
  std::sort(steps.begin(), steps.end());
  const std::size_t n = steps.size();
  p.median_steps = n % 2 == 1 ? static_cast<double>(steps[n / 2])
                              : 0.5 * static_cast<double>(steps[n / 2 - 1] + steps[n / 2]);
  p.mean_steps = total / static_cast<double>(n);
  p.goal_rate = static_cast<double>(goals) / static_cast<double>(n);
  return p;
}

}  // namespace detail

/// Per-phase step statistics, final-phase goal rate and the convergence
/// verdict. Depends only on the logs, so it can be recomputed from a CSV.
inline RunSummary summarize(const std::vector<EpisodeLog>& logs) {
  if (logs.empty()) throw InvalidArgument("cannot summarize an empty episode list");
  RunSummary s;
  const std::size_t n = logs.size();
  s.episodes = n;
  for (std::size_t k = 0; k < 10; ++k) {
    const std::size_t b = k * n / 10;
    const std::size_t e = (k + 1) * n / 10;
    if (e > b) s.phases.push_back(detail::phase_stats(logs, b, e));
  }
  s.final_phase = detail::phase_stats(logs, n - (n + 9) / 10, n);
  for (const EpisodeLog& l : logs) {
    if (l.goal) {
      s.first_goal_episode = l.episode;
      break;
    }
  }
  s.converged = s.final_phase.goal_rate >= kConvergedGoalRate;
  return s;
}

// ---------------------------------------------------------------------------
// Per-episode CSV. Wall-clock time is left out so that equal seeds give equal
// bytes.

inline constexpr const char* kCsvVersionLine = "# coverage_marl episodes v1";
inline constexpr const char* kCsvHeader =
    "episode,steps,goal_reached,coverage_sum,overlap_sum,cumulative_reward,epsilon";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_episode_csv(std::ostream& out, const std::vector<EpisodeLog>& logs) {
  out << kCsvVersionLine << '\n' << kCsvHeader << '\n';
  for (const EpisodeLog& l : logs) {
    out << l.episode << ',' << l.steps << ',' << (l.goal ? 1 : 0) << ',' << l.coverage_sum << ','
        << l.overlap_sum << ',' << format_double(l.cumulative_reward) << ','
        << format_double(l.epsilon) << '\n';
  }
}

inline std::vector<EpisodeLog> parse_episode_csv(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::vector<EpisodeLog> logs;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (!header_seen) {
      if (line != kCsvHeader) throw InvalidArgument(where + "unexpected CSV header");
      header_seen = true;
      continue;
    }
    const auto f = detail::split(line, ',');
    if (f.size() != 7) throw InvalidArgument(where + "expected 7 fields");
    EpisodeLog l;
    const auto episode = detail::parse_number<std::size_t>(f[0]);
    const auto steps = detail::parse_number<std::size_t>(f[1]);
    const auto goal = detail::parse_number<int>(f[2]);
    const auto cov = detail::parse_number<int>(f[3]);
    const auto ov = detail::parse_number<int>(f[4]);
    const auto cum = detail::parse_number<double>(f[5]);
    const auto eps = detail::parse_number<double>(f[6]);
    if (!episode || !steps || !goal || !cov || !ov || !cum || !eps || (*goal != 0 && *goal != 1)) {
      throw InvalidArgument(where + "malformed field");
    }
    l.episode = *episode;
    l.steps = *steps;
    l.goal = *goal == 1;
    l.coverage_sum = *cov;
    l.overlap_sum = *ov;
    l.cumulative_reward = *cum;
    l.epsilon = *eps;
    logs.push_back(l);
  }
  if (!header_seen) throw InvalidArgument(source + ": missing CSV header");
  return logs;
}

inline std::vector<EpisodeLog> read_episode_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_episode_csv(buf.str(), path);
}

inline nlohmann::json to_json(const PhaseStats& p) {
  return {{"first_episode", p.first_episode},
          {"episodes", p.episodes},
          {"mean_steps", p.mean_steps},
          {"median_steps", p.median_steps},
          {"goal_rate", p.goal_rate}};
}

inline nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json phases = nlohmann::json::array();
  for (const PhaseStats& p : s.phases) phases.push_back(to_json(p));
  return {{"episodes", s.episodes},
          {"converged", s.converged},
          {"first_goal_episode",
           s.first_goal_episode ? nlohmann::json(*s.first_goal_episode) : nlohmann::json(nullptr)},
          {"final_phase", to_json(s.final_phase)},
          {"phases", phases}};
}

inline std::string run_label(const LearnerConfig& c) {
  return c.mode == LearnerMode::Baseline ? "baseline" : to_string(c.scheme);
}

inline nlohmann::json config_json(const Scenario& s, std::uint64_t seed) {
  const LearnerConfig& c = s.config;
  return {{"scenario", s.name},
          {"grid", {s.grid.dim_x, s.grid.dim_y, s.grid.dim_z}},
          {"tan_theta", {s.grid.tan_theta_1, s.grid.tan_theta_2}},
          {"field", s.field_path},
          {"field_cells", s.field.size()},
          {"overlap", s.overlap == OverlapScope::AllCells ? "all" : "field"},
          {"agents", s.agents},
          {"mode", to_string(c.mode)},
          {"scheme", to_string(c.scheme)},
          {"alpha", c.alpha},
          {"gamma", c.gamma},
          {"epsilon0", c.epsilon0},
          {"epsilon_decay", c.epsilon_decay},
          {"episodes", c.episodes},
          {"max_steps", c.max_steps},
          {"reward", c.reward},
          {"fb", c.coverage_bound(s.field)},
          {"rbf_centers", c.rbf_centers},
          {"seed", seed}};
}

/// Short human-readable verdict line.
inline std::string describe(const RunSummary& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "episodes=%zu converged=%s final_goal_rate=%.3f final_median_steps=%g "
                "first_goal_episode=%s",
                s.episodes, s.converged ? "true" : "false", s.final_phase.goal_rate,
                s.final_phase.median_steps,
                s.first_goal_episode ? std::to_string(*s.first_goal_episode).c_str() : "none");
  return buf;
}

// ---------------------------------------------------------------------------
// Running a scenario

struct ReplicateOutput {
  std::uint64_t seed = 0;
  std::string csv_path;
  std::string summary_path;
  std::vector<std::string> checkpoint_paths;
  RunSummary summary;
  TrainResult result;
};

/// Trains one replicate per seed and writes, per seed, `<stem>.csv`,
/// `<stem>.summary.json` and one `<stem>.agent<i>.theta` per agent, where
/// stem = `<name>-<scheme or baseline>-seed<seed>`.
inline std::vector<ReplicateOutput> run_scenario(const Scenario& scenario, std::ostream* progress = nullptr) {
  namespace fs = std::filesystem;
  const fs::path dir(scenario.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());

  const CoverageEnv env = scenario.env();
  std::vector<ReplicateOutput> outputs;
  for (std::uint64_t seed : scenario.seeds) {
    LearnerConfig config = scenario.config;
    config.seed = seed;
    const std::string stem = scenario.name + "-" + run_label(config) + "-seed" + std::to_string(seed);

    std::vector<std::string> final_paths;
    const auto save = [&](const std::string& tag, const FeatureScheme& scheme,
                          const std::vector<ParamVector>& thetas, bool record) {
      for (std::size_t i = 0; i < thetas.size(); ++i) {
        const std::string path = (dir / (stem + tag + ".agent" + std::to_string(i) + ".theta")).string();
        write_checkpoint(path, checkpoint_header(scheme, static_cast<std::uint32_t>(i)), thetas[i]);
        if (record) final_paths.push_back(path);
      }
    };
    TrainHooks hooks;
    hooks.on_checkpoint = [&](std::size_t done, const FeatureScheme& scheme,
                              const std::vector<ParamVector>& thetas) {
      save(".ep" + std::to_string(done), scheme, thetas, false);
    };
    if (progress != nullptr) {
      hooks.on_episode = [&, every = std::max<std::size_t>(1, config.episodes / 10)](const EpisodeLog& l) {
        if ((l.episode + 1) % every == 0) {
          *progress << stem << ": episode " << l.episode + 1 << "/" << config.episodes
                    << " steps=" << l.steps << " goal=" << l.goal << std::endl;
        }
      };
    }
    ReplicateOutput out{seed, {}, {}, {}, {}, train(env, scenario.agents, config, hooks)};
    save("", out.result.scheme, out.result.thetas, true);
    out.checkpoint_paths = std::move(final_paths);

    out.csv_path = (dir / (stem + ".csv")).string();
    {
      std::ofstream csv(out.csv_path, std::ios::binary | std::ios::trunc);
      if (!csv) throw Error("cannot open '" + out.csv_path + "' for writing");
      write_episode_csv(csv, out.result.logs);
      if (!csv) throw Error("failed writing '" + out.csv_path + "'");
    }

    double seconds = 0.0;
    for (const EpisodeLog& l : out.result.logs) seconds += l.seconds;
    nlohmann::json record;
    record["config"] = config_json(scenario, seed);
    if (!out.result.logs.empty()) {
      out.summary = summarize(out.result.logs);
      record["summary"] = to_json(out.summary);
    } else {
      record["summary"] = nullptr;
    }
    record["greedy_eval"] = {{"steps", out.result.greedy_eval.steps},
                             {"goal", out.result.greedy_eval.goal},
                             {"coverage_sum", out.result.greedy_eval.coverage_sum},
                             {"overlap_sum", out.result.greedy_eval.overlap_sum}};
    record["ce_solves"] = out.result.ce_solves;
    record["ce_failures"] = out.result.ce_failures;
    record["wall_seconds"] = seconds;
    record["csv"] = out.csv_path;
    out.summary_path = (dir / (stem + ".summary.json")).string();
    std::ofstream js(out.summary_path, std::ios::trunc);
    if (!js) throw Error("cannot open '" + out.summary_path + "' for writing");
    js << record.dump(2) << '\n';
    outputs.push_back(std::move(out));
  }
  return outputs;
}

}  // namespace coverage_marl
