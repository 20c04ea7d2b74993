// Command-line runner for coverage scenarios.
//
//   coverage_marl run <scenario> [--scheme fsr|rbf|tabular] [--mode ce|baseline]
//                     [--seed N] [--episodes N] [--max-steps N] [--out DIR]
//   coverage_marl summarize <episodes.csv>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coverage_marl/scenario.hpp"

namespace fs = std::filesystem;
using namespace coverage_marl;

#ifndef COVERAGE_MARL_SCENARIO_DIR
#define COVERAGE_MARL_SCENARIO_DIR "scenarios"
#endif

namespace {

// A bare name such as "sim3uav" is looked up under ./scenarios and then under
// the scenario directory of the source tree.
std::string resolve_scenario(const std::string& arg) {
  if (fs::is_regular_file(arg)) return arg;
  for (const fs::path& dir : {fs::path("scenarios"), fs::path(COVERAGE_MARL_SCENARIO_DIR)}) {
    const fs::path candidate = dir / (arg + ".cfg");
    if (fs::is_regular_file(candidate)) return candidate.string();
  }
  throw ScenarioError(arg + ": no such scenario file (also tried scenarios/" + arg + ".cfg)");
}

struct RunArgs {
  std::string scenario;
  std::optional<std::string> scheme;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> max_steps;
  std::optional<std::string> out;
  bool quiet = false;
};

int do_run(const RunArgs& a) {
  Scenario s = load_scenario(resolve_scenario(a.scenario));
  if (a.scheme) {
    // "baseline" is accepted here too, as shorthand for --mode baseline.
    if (*a.scheme == "baseline") {
      s.config.mode = LearnerMode::Baseline;
    } else {
      s.config.scheme = parse_scheme(*a.scheme);
    }
  }
  if (a.mode) s.config.mode = parse_mode(*a.mode);
  if (a.seed) s.seeds = {*a.seed};
  if (a.episodes) s.config.episodes = *a.episodes;
  if (a.max_steps) {
    if (*a.max_steps < 1) throw InvalidArgument("--max-steps must be at least 1");
    s.config.max_steps = *a.max_steps;
  }
  if (a.out) s.output_dir = *a.out;
  s.config.validate();

  const auto outputs = run_scenario(s, a.quiet ? nullptr : &std::cerr);
  for (const ReplicateOutput& o : outputs) {
    std::cout << s.name << " " << run_label(s.config) << " seed=" << o.seed << ": ";
    if (o.result.logs.empty()) {
      std::cout << "no episodes";
    } else {
      std::cout << describe(o.summary);
    }
    std::cout << "\n  csv: " << o.csv_path << "\n  summary: " << o.summary_path << "\n";
  }
  return 0;
}

int do_summarize(const std::string& csv) {
  const RunSummary s = summarize(read_episode_csv(csv));
  std::cout << to_json(s).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative multi-UAV coverage learning with correlated-equilibrium action selection"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Train every replicate of a scenario");
  run_cmd->add_option("scenario", run.scenario, "Scenario file or shipped scenario name")->required();
  run_cmd->add_option("--scheme", run.scheme, "Feature scheme: fsr, rbf, tabular (or baseline)")
      ->check(CLI::IsMember({"fsr", "rbf", "tabular", "baseline"}));
  run_cmd->add_option("--mode", run.mode, "Learner: ce or baseline")->check(CLI::IsMember({"ce", "baseline"}));
  run_cmd->add_option("--seed", run.seed, "Run a single replicate with this seed");
  run_cmd->add_option("--episodes", run.episodes, "Episode count");
  run_cmd->add_option("--max-steps", run.max_steps, "Per-episode step cap");
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_flag("-q,--quiet", run.quiet, "No progress lines on stderr");

  std::string csv;
  auto* sum_cmd = app.add_subcommand("summarize", "Recompute a run summary from an episode CSV");
  sum_cmd->add_option("csv", csv, "Episode CSV written by run")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return do_run(run);
    if (*sum_cmd) return do_summarize(csv);
  } catch (const std::exception& e) {
    std::cerr << "coverage_marl: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
