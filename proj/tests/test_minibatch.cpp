#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "btgd/minibatch.hpp"

using namespace btgd;

namespace {

// f_i(x) = a_i (x - c_i)^2 / 2 in one dimension.
ScalarField parabola(double a, double c) {
  return ScalarField(
      1, [a, c](std::span<const double> x) { return 0.5 * a * (x[0] - c) * (x[0] - c); },
      [a, c](std::span<const double> x) { return Vector{a * (x[0] - c)}; });
}

}  // namespace

TEST(BatchSampler, EpochIsAPartitionWithSortedBatches) {
  const BatchSampler s(103, 10, 5);
  EXPECT_EQ(s.batches_per_epoch(), 11u);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto batches = s.epoch(e);
    ASSERT_EQ(batches.size(), 11u);
    std::multiset<std::size_t> seen;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      EXPECT_EQ(batches[b].size(), b + 1 < batches.size() ? 10u : 3u);
      EXPECT_TRUE(std::is_sorted(batches[b].begin(), batches[b].end()));
      seen.insert(batches[b].begin(), batches[b].end());
    }
    EXPECT_EQ(seen.size(), 103u);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 103u);
  }
}

TEST(BatchSampler, ReproducibleAndEpochDependent) {
  const BatchSampler a(50, 7, 9), b(50, 7, 9), c(50, 7, 10);
  EXPECT_EQ(a.epoch(4), b.epoch(4));
  EXPECT_NE(a.epoch(0), a.epoch(1));
  EXPECT_NE(a.epoch(0), c.epoch(0));
  const auto st = a.stream(2, 10);
  ASSERT_EQ(st.size(), 10u);
  const auto e2 = a.epoch(2), e3 = a.epoch(3);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(st[i], e2[i]);
  EXPECT_EQ(st[8], e3[0]);
  EXPECT_EQ(st[9], e3[1]);
}

TEST(BatchSampler, RejectsBadSizes) {
  EXPECT_THROW(BatchSampler(0, 1, 0), InvalidArgument);
  EXPECT_THROW(BatchSampler(5, 0, 0), InvalidArgument);
  EXPECT_THROW(BatchSampler(5, 6, 0), InvalidArgument);
}

TEST(Problem, FullObjectiveIsComponentMean) {
  const auto p = make_least_squares_problem(LeastSquaresSpec{40, 3, 0.1, 4});
  const ScalarField full = p.full_objective();
  const Vector x{0.3, -1.2, 2.0};
  double mean = 0.0;
  Vector g(3, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    mean += p.component(i).value(x);
    const Vector gi = p.component(i).gradient(x);
    for (std::size_t j = 0; j < 3; ++j) g[j] += gi[j];
  }
  mean /= 40.0;
  EXPECT_NEAR(full.value(x), mean, 1e-12 * (1 + mean));
  const Vector fg = full.gradient(x);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(fg[j], g[j] / 40.0, 1e-12);
  EXPECT_THROW(p.batch_objective({}), InvalidArgument);
  EXPECT_THROW(p.batch_objective({40}), InvalidArgument);
}

TEST(Problem, NoiselessOptimumHasZeroLoss) {
  const auto p = make_least_squares_problem(100, 2, 0.0, 7);
  ASSERT_TRUE(p.optimum().has_value());
  EXPECT_LT(p.full_objective().value(*p.optimum()), 1e-28);
  EXPECT_EQ(p.dimension(), 2u);
  EXPECT_THROW(make_least_squares_problem(0, 2, 0.0, 1), InvalidArgument);
  EXPECT_THROW(make_least_squares_problem(5, 2, -1.0, 1), InvalidArgument);
}

TEST(Rescale, OrderingForSubsampledBatches) {
  for (double rho : {0.01, 0.1, 0.5}) {
    const double s = 0.37;
    EXPECT_LT(rescale(s, rho, RescaleMode::Linear), rescale(s, rho, RescaleMode::Sqrt));
    EXPECT_LT(rescale(s, rho, RescaleMode::Sqrt), rescale(s, rho, RescaleMode::None));
  }
  EXPECT_DOUBLE_EQ(rescale(0.8, 0.25, RescaleMode::Sqrt), 0.4);
}

TEST(LrFinder, IdenticalComponentsGiveOneSigma) {
  std::vector<ScalarField> comps(30, parabola(3.0, 1.0));
  const MiniBatchProblem p(std::move(comps));
  const BatchSampler s(30, 5, 2);
  const auto rep = lr_finder(p, s, mbt_default_config(), Point{4.0}, LRFinderOptions{12, RescaleMode::None});
  ASSERT_EQ(rep.per_batch_sigmas.size(), 12u);
  for (double sg : rep.per_batch_sigmas) EXPECT_EQ(sg, rep.per_batch_sigmas.front());
  EXPECT_EQ(rep.mean_sigma, rep.per_batch_sigmas.front());
  EXPECT_EQ(rep.rescaled_sigma, rep.mean_sigma);
  EXPECT_DOUBLE_EQ(rep.rho, 5.0 / 30.0);
}

TEST(LrFinder, FullBatchBacktrackMatchesPlainBacktracking) {
  const auto p = make_least_squares_problem(60, 3, 0.2, 8);
  const BatchSampler s(60, 60, 1);
  const Point at{0.5, 0.5, -0.5};
  const LineSearchConfig cfg = mbt_default_config();
  const auto rep = lr_finder(p, s, cfg, at, LRFinderOptions{3, RescaleMode::None, FinderSearch::Backtrack});
  const ScalarField full = p.full_objective();
  const Vector g = full.gradient(at);
  const double expected = backtrack(full, Anchor{at.span(), full.value(at), g}, cfg).sigma;
  for (double sg : rep.per_batch_sigmas) EXPECT_EQ(sg, expected);
  EXPECT_EQ(rep.rescaled_sigma, expected);
}

TEST(LrFinder, TwoWayCanExceedDelta0AndBacktrackCannot) {
  std::vector<ScalarField> comps(10, parabola(0.01, 0.0));
  const MiniBatchProblem p(std::move(comps));
  const BatchSampler s(10, 2, 3);
  const auto cfg = mbt_default_config();
  const auto two = lr_finder(p, s, cfg, Point{1.0}, LRFinderOptions{4, RescaleMode::None, FinderSearch::TwoWay});
  const auto bt = lr_finder(p, s, cfg, Point{1.0}, LRFinderOptions{4, RescaleMode::None, FinderSearch::Backtrack});
  EXPECT_GT(two.mean_sigma, cfg.delta0);
  EXPECT_EQ(bt.mean_sigma, cfg.delta0);
}

TEST(LrFinder, ZeroGradientBatchAcceptsDelta0) {
  std::vector<ScalarField> comps(8, parabola(2.0, 0.0));
  const MiniBatchProblem p(std::move(comps));
  const auto rep = lr_finder(p, BatchSampler(8, 4, 0), mbt_default_config(), Point{0.0},
                             LRFinderOptions{2, RescaleMode::None});
  for (double sg : rep.per_batch_sigmas) EXPECT_EQ(sg, 1.0);
}

TEST(LrFinder, RejectsMismatches) {
  const auto p = make_least_squares_problem(20, 2, 0.0, 1);
  EXPECT_THROW(lr_finder(p, BatchSampler(21, 2, 0), mbt_default_config(), Point{0.0, 0.0}), InvalidArgument);
  EXPECT_THROW(lr_finder(p, BatchSampler(20, 2, 0), mbt_default_config(), Point{0.0}), InvalidArgument);
  EXPECT_THROW(lr_finder(p, BatchSampler(20, 2, 0), mbt_default_config(), Point{0.0, 0.0}, LRFinderOptions{0}),
               InvalidArgument);
}

TEST(StuckDetector, FiresAfterWindowWithoutImprovement) {
  StuckDetector d(3);
  EXPECT_FALSE(d.observe(5.0));
  EXPECT_FALSE(d.observe(4.0));
  EXPECT_FALSE(d.observe(4.0));
  EXPECT_FALSE(d.observe(6.0));
  EXPECT_TRUE(d.observe(4.5));
  EXPECT_FALSE(d.observe(4.5));
  EXPECT_FALSE(d.observe(3.0));
  EXPECT_EQ(d.best_loss_seen(), 3.0);
  EXPECT_THROW(StuckDetector(0), InvalidArgument);
}

TEST(Mbt, ZeroMomentumMatchesRefreshedGd) {
  const auto p = make_least_squares_problem(100, 2, 0.0, 7);
  const BatchSampler s(100, 10, 3);
  const StopRule stop{1e-10, 1000, 1e12};
  MbtOptions o;
  o.refresh_each_epoch = true;
  const auto gd = run_mbt_gd(p, s, mbt_default_config(), stop, 30, Point{0.0, 0.0}, o);
  const auto mmt = run_mbt_mmt(p, s, mbt_default_config(), stop, 30, Point{0.0, 0.0}, 0.0, o);
  ASSERT_EQ(gd.records.size(), mmt.records.size());
  for (std::size_t i = 0; i < gd.records.size(); ++i) {
    EXPECT_EQ(gd.records[i].point, mmt.records[i].point);
    EXPECT_EQ(gd.records[i].step_size, mmt.records[i].step_size);
  }
}

TEST(Mbt, FirstEpochUsesFinderRate) {
  const auto p = make_least_squares_problem(100, 2, 0.0, 7);
  const BatchSampler s(100, 10, 3);
  const auto cfg = mbt_default_config();
  const auto rep = lr_finder(p, s, cfg, Point{0.0, 0.0});
  const auto t = run_mbt_gd(p, s, cfg, StopRule{1e-10, 1000, 1e12}, 5, Point{0.0, 0.0});
  EXPECT_EQ(t.records[1].step_size, rep.rescaled_sigma);
  for (std::size_t i = 2; i < t.records.size(); ++i) EXPECT_EQ(t.records[i].step_size, rep.rescaled_sigma);
}

TEST(Mbt, GdReachesSmallLossMonotonically) {
  const auto p = make_least_squares_problem(100, 2, 0.0, 7);
  const BatchSampler s(100, 10, 3);
  const auto t = run_mbt_gd(p, s, mbt_default_config(), StopRule{1e-12, 1000, 1e12}, 200, Point{0.0, 0.0});
  EXPECT_LT(t.last().value, 1e-6);
  for (std::size_t i = 1; i < t.records.size(); ++i) {
    if (t.records[i - 1].value < 1e-20) break;
    EXPECT_LE(t.records[i].value, t.records[i - 1].value);
  }
}

TEST(Mbt, ZeroGradientStartDoesNotMove) {
  const auto p = make_least_squares_problem(50, 2, 0.0, 5);
  const BatchSampler s(50, 10, 1);
  for (auto run : {+[](const MiniBatchProblem& pr, const BatchSampler& sa, const Point& z) {
                     return run_mbt_gd(pr, sa, mbt_default_config(), StopRule{}, 10, z);
                   },
                   +[](const MiniBatchProblem& pr, const BatchSampler& sa, const Point& z) {
                     return run_mbt_nag(pr, sa, mbt_default_config(), StopRule{}, 10, z);
                   }}) {
    const auto t = run(p, s, *p.optimum());
    EXPECT_EQ(t.termination, Termination::Converged);
    EXPECT_EQ(t.last().point, *p.optimum());
  }
}

TEST(Mbt, MomentumSchemesConverge) {
  const auto p = make_least_squares_problem(100, 2, 0.0, 7);
  const BatchSampler s(100, 10, 3);
  const StopRule stop{1e-12, 1000, 1e12};
  EXPECT_LT(run_mbt_mmt(p, s, mbt_default_config(), stop, 300, Point{0.0, 0.0}).last().value, 1e-6);
  EXPECT_LT(run_mbt_nag(p, s, mbt_default_config(), stop, 300, Point{0.0, 0.0}).last().value, 1e-6);
}

TEST(Mbt, RejectsBadArguments) {
  const auto p = make_least_squares_problem(20, 2, 0.0, 1);
  const BatchSampler s(20, 5, 0);
  EXPECT_THROW(run_mbt_gd(p, s, mbt_default_config(), StopRule{}, 0, Point{0.0, 0.0}), InvalidArgument);
  EXPECT_THROW(run_mbt_gd(p, s, mbt_default_config(), StopRule{}, 3, Point{0.0}), InvalidArgument);
  EXPECT_THROW(run_mbt_mmt(p, s, mbt_default_config(), StopRule{}, 3, Point{0.0, 0.0}, -0.1), InvalidArgument);
}

TEST(ObjectiveSequence, TracksMovingMinimizer) {
  std::vector<ScalarField> fs;
  for (int n = 1; n <= 400; ++n) fs.push_back(parabola(1.0, -1.0 / n));
  const auto t = run_objective_sequence(fs, Point{3.0}, LineSearchConfig{}, StopRule{1e-14, 400, 1e12});
  EXPECT_LT(std::abs(t.last().point[0]), 1e-2);
  EXPECT_EQ(t.records[0].value, fs[0].value(Vector{3.0}));
  EXPECT_THROW(run_objective_sequence({}, Point{0.0}, LineSearchConfig{}, StopRule{}), InvalidArgument);
}
