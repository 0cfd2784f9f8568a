#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "experiment.hpp"

using namespace btgd;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("btgd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const cli::json& j, const std::string& name = "config.json") {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"btgd"};
    for (const auto& a : args) argv.push_back(a.c_str());
    log_.str("");
    err_.str("");
    return cli::main_entry(static_cast<int>(argv.size()), argv.data(), log_, err_);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  }

  fs::path dir_;
  std::ostringstream log_, err_;
};

}  // namespace

TEST_F(CliTest, RunWritesTrajectoryAndSummary) {
  const auto cfg = write_config({{"function", "rosenbrock"},
                                 {"optimizer", "backtracking_gd"},
                                 {"z0", {-1.2, 1.0}},
                                 {"stop", {{"eps", 1e-10}, {"max_iters", 20000}}}});
  const fs::path out = dir_ / "out";
  ASSERT_EQ(run({"run", "--config", cfg, "--out", out.string()}), cli::kExitOk);
  std::ifstream csv(out / "trajectory.csv");
  const auto recs = io::read_trajectory_csv(csv);
  ASSERT_GT(recs.size(), 1u);
  EXPECT_EQ(recs.front().point, (Point{-1.2, 1.0}));
  const auto summary = cli::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["termination"], "Converged");
  EXPECT_EQ(summary["convergence"]["limit_class"]["kind"], to_string(CriticalKind::Minimum));
  EXPECT_TRUE(summary.contains("timestamp"));
}

TEST_F(CliTest, TrajectoryIsByteReproducible) {
  const auto cfg = write_config({{"function", "mexican_hat"},
                                 {"optimizer", "inexact_backtracking_gd"},
                                 {"z0", {{"center", {0.2, 0.1}}, {"radius", 0.3}}},
                                 {"stop", {{"max_iters", 300}}}});
  ASSERT_EQ(run({"run", "--config", cfg, "--seed", "5", "--out", (dir_ / "a").string()}), cli::kExitOk);
  ASSERT_EQ(run({"run", "--config", cfg, "--seed", "5", "--out", (dir_ / "b").string()}), cli::kExitOk);
  ASSERT_EQ(run({"run", "--config", cfg, "--seed", "6", "--out", (dir_ / "c").string()}), cli::kExitOk);
  EXPECT_EQ(slurp(dir_ / "a" / "trajectory.csv"), slurp(dir_ / "b" / "trajectory.csv"));
  EXPECT_NE(slurp(dir_ / "a" / "trajectory.csv"), slurp(dir_ / "c" / "trajectory.csv"));
}

TEST_F(CliTest, UsageErrorsExitTwoWithoutOutput) {
  const fs::path out = dir_ / "out";
  EXPECT_EQ(run({"run", "--function", "cubic", "--optimizer", "backtracking_gd", "--out", out.string()}),
            cli::kExitUsage);  // no z0
  EXPECT_EQ(run({"run", "--config", write_config({{"function", "nope"}, {"optimizer", "backtracking_gd"}, {"z0", {1.0}}}),
                 "--out", out.string()}),
            cli::kExitUsage);
  EXPECT_EQ(run({"run", "--config", write_config({{"function", "cubic"}, {"optimizer", "warp_drive"}, {"z0", {1.0}}}),
                 "--out", out.string()}),
            cli::kExitUsage);
  EXPECT_EQ(run({"run", "--config", write_config({{"function", "cubic"}, {"typo", 1}}), "--out", out.string()}),
            cli::kExitUsage);
  EXPECT_EQ(run({"run", "--config",
                 write_config({{"function", "cubic"},
                               {"optimizer", {{"name", "backtracking_gd"}, {"alpha", 1.5}}},
                               {"z0", {1.0}}}),
                 "--out", out.string()}),
            cli::kExitUsage);
  EXPECT_EQ(run({"run", "--config", (dir_ / "missing.json").string()}), cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, NonFiniteRunExitsThree) {
  const auto cfg = write_config({{"function", "cubic"},
                                 {"optimizer", {{"name", "standard_gd"}, {"delta", 1.0}}},
                                 {"z0", {10.0}},
                                 {"stop", {{"max_iters", 100}, {"divergence_radius", 1e300}}}});
  const fs::path out = dir_ / "out";
  EXPECT_EQ(run({"run", "--config", cfg, "--out", out.string()}), cli::kExitNumerical);
  const auto summary = cli::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["termination"], "Diverged");
  EXPECT_EQ(summary["nonfinite"], true);
}

TEST_F(CliTest, CompareStandardGdOscillates) {
  const auto cfg = write_config({{"function", {{"name", "smoothed_abs"}, {"eps0", 0.1}}},
                                 {"optimizers",
                                  {{{"name", "standard_gd"}, {"delta", 1.0}},
                                   "backtracking_gd",
                                   "backtracking_gd"}},
                                 {"z0", {0.5}},
                                 {"stop", {{"max_iters", 100}}}});
  const fs::path out = dir_ / "out";
  ASSERT_EQ(run({"compare", "--config", cfg, "--out", out.string()}), cli::kExitOk);
  std::istringstream csv(slurp(out / "compare.csv"));
  std::string header, standard, bt1, bt2;
  std::getline(csv, header);
  std::getline(csv, standard);
  std::getline(csv, bt1);
  std::getline(csv, bt2);
  EXPECT_EQ(header, "optimizer,termination,final_value,grad_norm,iterations,func_evals");
  const auto cells = io::detail::split(standard);
  EXPECT_EQ(cells[0], "standard_gd");
  EXPECT_EQ(cells[1], "MaxIters");
  EXPECT_EQ(std::stod(cells[3]), 1.0);
  EXPECT_EQ(bt1, bt2);
  EXPECT_EQ(io::detail::split(bt1)[1], "Converged");
}

TEST_F(CliTest, SaddleMc) {
  const auto cfg = write_config({{"function", {{"name", "quadratic_form"}, {"diag", {1.0, -1.0}}}},
                                 {"radius", 0.1},
                                 {"n_samples", 200},
                                 {"stop", {{"max_iters", 200}}}});
  const fs::path out = dir_ / "out";
  ASSERT_EQ(run({"saddle-mc", "--config", cfg, "--seed", "3", "--out", out.string()}), cli::kExitOk);
  const auto j = cli::json::parse(slurp(out / "saddle_mc.json"));
  EXPECT_GE(j["fraction"].get<double>(), 0.99);

  const auto bowl = write_config({{"function", {{"name", "quadratic_form"}, {"diag", {1.0, 1.0}}}}}, "bowl.json");
  EXPECT_EQ(run({"saddle-mc", "--config", bowl, "--out", (dir_ / "bowl").string()}), cli::kExitUsage);
}

TEST_F(CliTest, LrFinderAndSweep) {
  const cli::json base{{"problem", {{"n_samples", 100}, {"dimension", 2}, {"seed", 7}}},
                       {"n_batches", 10},
                       {"delta0s", {1e-3, 1.0, 1e3}},
                       {"batch_sizes", {5, 20}}};
  const auto cfg = write_config(base);
  ASSERT_EQ(run({"lr-finder", "--config", cfg, "--out", (dir_ / "lr").string()}), cli::kExitOk);
  const auto lr = cli::json::parse(slurp(dir_ / "lr" / "lr_finder.json"));
  EXPECT_GT(lr["report"]["rescaled_sigma"].get<double>(), 0.0);

  ASSERT_EQ(run({"stability-sweep", "--config", cfg, "--out", (dir_ / "sw").string()}), cli::kExitOk);
  std::istringstream csv(slurp(dir_ / "sw" / "stability_sweep.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "batch_size,delta0=0.001,delta0=1,delta0=1000");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 2u);
  const auto sw = cli::json::parse(slurp(dir_ / "sw" / "stability_sweep.json"));
  for (const auto& row : sw["rows"]) EXPECT_LE(row["max_min_ratio"].get<double>(), 2.0);
}

TEST_F(CliTest, MiniBatchRun) {
  const auto cfg = write_config({{"problem", {{"n_samples", 100}, {"dimension", 2}}},
                                 {"optimizer", "mbt_gd"},
                                 {"epochs", 100},
                                 {"stop", {{"eps", 1e-12}}}});
  const fs::path out = dir_ / "out";
  ASSERT_EQ(run({"run", "--config", cfg, "--out", out.string()}), cli::kExitOk);
  const auto summary = cli::json::parse(slurp(out / "summary.json"));
  EXPECT_LT(summary["final_value"].get<double>(), 1e-6);
}
