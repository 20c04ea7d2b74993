#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "coverage_marl/scenario.hpp"

using namespace coverage_marl;
namespace fs = std::filesystem;

namespace {

std::string shipped(const std::string& name) {
  return std::string(COVERAGE_MARL_SCENARIO_DIR) + "/" + name + ".cfg";
}

class ScenarioText : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cmarl_scenario_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    std::ofstream(dir_ / "field.txt") << "#..\n...\n..#\n";
    std::ofstream(dir_ / "wide.txt") << "#...\n....\n...#\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  Scenario parse(const std::string& body) const { return parse_scenario(body, dir_, "test.cfg"); }

  // Message of the ScenarioError thrown by `body`, or "" if none.
  std::string error_of(const std::string& body) const {
    try {
      parse(body);
    } catch (const ScenarioError& e) {
      return e.what();
    }
    return "";
  }

  fs::path dir_;
};

const std::string kMinimal = "grid = 3x3x2\nfield = field.txt\nagents = 2\n";

EpisodeLog log_of(std::size_t episode, std::size_t steps, bool goal) {
  EpisodeLog l;
  l.episode = episode;
  l.steps = steps;
  l.goal = goal;
  return l;
}

}  // namespace

TEST(Shipped, Sim3uav) {
  const Scenario s = load_scenario(shipped("sim3uav"));
  EXPECT_EQ(s.name, "sim3uav");
  EXPECT_EQ(s.grid.dim_x, 7);
  EXPECT_EQ(s.grid.dim_y, 7);
  EXPECT_EQ(s.grid.dim_z, 5);
  EXPECT_EQ(s.agents, 3u);
  EXPECT_EQ(s.config.alpha, 0.1);
  EXPECT_EQ(s.config.gamma, 0.9);
  EXPECT_EQ(s.config.epsilon0, 0.9);
  EXPECT_EQ(s.config.reward, 0.1);
  EXPECT_EQ(s.config.max_steps, 2000u);
  EXPECT_EQ(s.config.mode, LearnerMode::Ce);
  EXPECT_EQ(s.config.scheme, SchemeKind::Fsr);
  EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(s.field.width(), 7);
}

TEST(Shipped, Lab2uav) {
  const Scenario s = load_scenario(shipped("lab2uav"));
  EXPECT_EQ(s.grid.dim_x, 7);
  EXPECT_EQ(s.grid.dim_y, 7);
  EXPECT_EQ(s.grid.dim_z, 4);
  EXPECT_EQ(s.agents, 2u);
}

TEST(Shipped, AllLoad) {
  for (const char* name : {"sim3uav", "lab2uav", "tiny1uav", "tiny2uav"}) {
    EXPECT_NO_THROW(load_scenario(shipped(name))) << name;
  }
  EXPECT_THROW(load_scenario(shipped("does-not-exist")), Error);
}

TEST_F(ScenarioText, MinimalDefaults) {
  const Scenario s = parse(kMinimal);
  EXPECT_EQ(s.name, "test");
  EXPECT_EQ(s.agents, 2u);
  EXPECT_EQ(s.field.size(), 2u);
  EXPECT_EQ(s.grid.tan_theta_1, 1.0);
  EXPECT_EQ(s.config.episodes, LearnerConfig{}.episodes);
  EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{1}));
  EXPECT_EQ(s.output_dir, "runs/test");
  EXPECT_EQ(s.overlap, OverlapScope::AllCells);
}

TEST_F(ScenarioText, CommentsAndOverrides) {
  const Scenario s = parse("# header\n" + kMinimal +
                           "tan_theta = 0.5, 1.5   # lateral\nscheme = rbf\nmode = baseline\n"
                           "fb = 1\noverlap = field\nseed = 10\nreplicates = 3\noutput = out/x\n");
  EXPECT_EQ(s.grid.tan_theta_1, 0.5);
  EXPECT_EQ(s.grid.tan_theta_2, 1.5);
  EXPECT_EQ(s.config.scheme, SchemeKind::Rbf);
  EXPECT_EQ(s.config.mode, LearnerMode::Baseline);
  EXPECT_EQ(s.config.fb, 1.0);
  EXPECT_EQ(s.overlap, OverlapScope::FieldCells);
  EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{10, 11, 12}));
  EXPECT_EQ(s.config.seed, 10u);
  EXPECT_EQ(s.output_dir, "out/x");
}

TEST_F(ScenarioText, ErrorsNameTheLine) {
  EXPECT_EQ(error_of(kMinimal + "alpha = 2\n"), "test.cfg:4: alpha must lie in (0, 1]");
  EXPECT_EQ(error_of(kMinimal + "\n\nagents = 3\n"), "test.cfg:6: duplicate key 'agents'");
  EXPECT_EQ(error_of("grid = 3x3\nfield = field.txt\nagents = 1\n"),
            "test.cfg:1: grid expects XxYxZ, e.g. 7x7x5");
  EXPECT_EQ(error_of(kMinimal + "colour = red\n"), "test.cfg:4: unknown key 'colour'");
  EXPECT_EQ(error_of(kMinimal + "gamma =\n"), "test.cfg:4: key 'gamma' has no value");
  EXPECT_EQ(error_of(kMinimal + "just words\n"), "test.cfg:4: expected 'key = value'");
  EXPECT_EQ(error_of("grid = 3x3x2\nfield = field.txt\n"), "test.cfg: missing required key 'agents'");
  EXPECT_NE(error_of("grid = 3x3x2\nfield = field.txt\nagents = 5\n").find("test.cfg:3:"), std::string::npos);
  EXPECT_NE(error_of(kMinimal + "fb = 3\n").find("test.cfg:4:"), std::string::npos);
  EXPECT_NE(error_of(kMinimal + "scheme = deep\n").find("test.cfg:4:"), std::string::npos);
  EXPECT_NE(error_of(kMinimal + "episodes = many\n").find("test.cfg:4:"), std::string::npos);
  EXPECT_NE(error_of(kMinimal + "seeds = 1,2\nreplicates = 3\n").find("test.cfg:5:"), std::string::npos);
}

TEST_F(ScenarioText, MaskMustMatchGrid) {
  const std::string msg = error_of("grid = 3x3x2\nfield = wide.txt\nagents = 1\n");
  EXPECT_NE(msg.find("test.cfg:2:"), std::string::npos) << msg;
  EXPECT_NE(error_of("grid = 3x3x2\nfield = missing.txt\nagents = 1\n").find("test.cfg:2:"), std::string::npos);
}

TEST(Summary, AllCapped) {
  std::vector<EpisodeLog> logs;
  for (std::size_t e = 0; e < 100; ++e) logs.push_back(log_of(e, 2000, false));
  const RunSummary s = summarize(logs);
  EXPECT_FALSE(s.converged);
  EXPECT_FALSE(s.first_goal_episode.has_value());
  EXPECT_EQ(s.phases.size(), 10u);
  EXPECT_EQ(s.final_phase.median_steps, 2000.0);
  EXPECT_EQ(s.final_phase.goal_rate, 0.0);
}

TEST(Summary, AllOneStep) {
  std::vector<EpisodeLog> logs;
  for (std::size_t e = 0; e < 50; ++e) logs.push_back(log_of(e, 1, true));
  const RunSummary s = summarize(logs);
  EXPECT_TRUE(s.converged);
  EXPECT_EQ(*s.first_goal_episode, 0u);
  EXPECT_EQ(s.final_phase.episodes, 5u);
  EXPECT_EQ(s.final_phase.mean_steps, 1.0);
}

TEST(Summary, HandComputed) {
  const std::size_t steps[] = {2000, 2000, 900, 2000, 400, 300, 2000, 50, 20, 10};
  std::vector<EpisodeLog> logs;
  for (std::size_t e = 0; e < 10; ++e) logs.push_back(log_of(e, steps[e], steps[e] < 2000));
  const RunSummary s = summarize(logs);
  EXPECT_EQ(*s.first_goal_episode, 2u);
  ASSERT_EQ(s.phases.size(), 10u);
  EXPECT_EQ(s.phases[6].median_steps, 2000.0);
  EXPECT_EQ(s.final_phase.first_episode, 9u);
  EXPECT_EQ(s.final_phase.median_steps, 10.0);
  EXPECT_TRUE(s.converged);

  // Eleven episodes: the final phase holds the last two.
  logs.push_back(log_of(10, 2000, false));
  const RunSummary t = summarize(logs);
  EXPECT_EQ(t.final_phase.episodes, 2u);
  EXPECT_EQ(t.final_phase.median_steps, 1005.0);
  EXPECT_EQ(t.final_phase.goal_rate, 0.5);
  EXPECT_FALSE(t.converged);

  EXPECT_THROW(summarize({}), InvalidArgument);
}

TEST(Csv, RoundTrip) {
  std::vector<EpisodeLog> logs;
  for (std::size_t e = 0; e < 5; ++e) {
    EpisodeLog l = log_of(e, 7 * e + 1, e % 2 == 0);
    l.coverage_sum = static_cast<int>(e);
    l.overlap_sum = static_cast<int>(2 * e);
    l.cumulative_reward = 0.1 * e;
    l.epsilon = 0.9 * std::pow(0.998, static_cast<double>(e));
    l.seconds = 123.0;
    logs.push_back(l);
  }
  std::ostringstream out;
  write_episode_csv(out, logs);
  EXPECT_EQ(out.str().find("123"), std::string::npos);
  const auto back = parse_episode_csv(out.str(), "mem");
  ASSERT_EQ(back.size(), logs.size());
  for (std::size_t k = 0; k < logs.size(); ++k) {
    EXPECT_EQ(back[k].steps, logs[k].steps);
    EXPECT_EQ(back[k].goal, logs[k].goal);
    EXPECT_EQ(back[k].coverage_sum, logs[k].coverage_sum);
    EXPECT_EQ(back[k].overlap_sum, logs[k].overlap_sum);
    EXPECT_EQ(back[k].cumulative_reward, logs[k].cumulative_reward);
    EXPECT_EQ(back[k].epsilon, logs[k].epsilon);
  }
  std::ostringstream again;
  write_episode_csv(again, back);
  EXPECT_EQ(again.str(), out.str());

  EXPECT_THROW(parse_episode_csv("a,b\n", "mem"), InvalidArgument);
  EXPECT_THROW(parse_episode_csv(std::string(kCsvHeader) + "\n1,2,3\n", "mem"), InvalidArgument);
  EXPECT_THROW(parse_episode_csv(std::string(kCsvHeader) + "\n1,2,7,0,0,0,0\n", "mem"), InvalidArgument);
}

TEST(Json, SummaryShape) {
  std::vector<EpisodeLog> logs;
  for (std::size_t e = 0; e < 20; ++e) logs.push_back(log_of(e, 2000, false));
  const nlohmann::json j = to_json(summarize(logs));
  EXPECT_FALSE(j["converged"].get<bool>());
  EXPECT_TRUE(j["first_goal_episode"].is_null());
  EXPECT_EQ(j["phases"].size(), 10u);
  EXPECT_EQ(j["final_phase"]["median_steps"].get<double>(), 2000.0);
}
