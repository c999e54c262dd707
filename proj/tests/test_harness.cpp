#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "pintda/harness.hpp"
#include "test_support.hpp"

using namespace pintda;
using pintda::testing::lorenz40;
using pintda::testing::random_vector;

TEST(ReferenceInitialCondition, NoSpinupIsLinspaceAndSpinupStaysOnAttractor) {
  const auto m = lorenz40();
  EXPECT_EQ(make_reference_initial_condition(m, 0, 0.05), linspace(-2.0, 2.0, 40));
  const Vector a = make_reference_initial_condition(Lorenz96Params{}, 200, 0.05);
  const Vector b = make_reference_initial_condition(m, 200, 0.05);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 20.0);
  EXPECT_GT((a - linspace(-2.0, 2.0, 40)).norm(), 1.0);
  EXPECT_THROW((void)make_reference_initial_condition(m, -1, 0.05), InvalidArgument);
}

TEST(Rmse, Oracles) {
  const std::vector<Vector> ref{Vector::Zero(4), Vector::Zero(4)};
  EXPECT_EQ(rmse(ref, ref), 0.0);
  EXPECT_DOUBLE_EQ(rmse({Vector::Constant(4, -2.5), Vector::Constant(4, -2.5)}, ref), 2.5);

  SeededRng rng(1);
  std::vector<Vector> a, r;
  for (int k = 0; k < 5; ++k) {
    a.push_back(random_vector(rng, 3));
    r.push_back(random_vector(rng, 3));
  }
  double acc = 0.0;
  for (int k = 0; k < 5; ++k) {
    for (int i = 0; i < 3; ++i) acc += std::pow(a[k](i) - r[k](i), 2);
  }
  EXPECT_NEAR(rmse(a, r), std::sqrt(acc / 15.0), 1e-15);

  // Reordering time levels does not change the score.
  std::vector<Vector> a2{a[4], a[2], a[0], a[3], a[1]};
  std::vector<Vector> r2{r[4], r[2], r[0], r[3], r[1]};
  EXPECT_NEAR(rmse(a2, r2), rmse(a, r), 1e-15);
  EXPECT_THROW((void)rmse(a, std::vector<Vector>(r.begin(), r.end() - 1)), DimensionError);
}

TEST(WindowTrajectory, ContainsEveryStepAndRmseSkipsStart) {
  const auto m = lorenz40();
  const auto partition = uniform_partition(0.0, 3, 4, 0.05);
  const Vector x0 = make_reference_initial_condition(m, 50, 0.05);
  const auto traj = window_trajectory(m, x0, partition);
  ASSERT_EQ(traj.size(), 13u);
  EXPECT_EQ(traj.front(), x0);
  EXPECT_EQ(traj.back(), advance(m, x0, SubInterval::with_step(0.0, 12, 0.05)));
  auto shifted = traj;
  shifted.front() += Vector::Constant(40, 100.0);
  EXPECT_EQ(window_rmse(shifted, traj), 0.0);
}

TEST(BuildTwin, SeededAndConsistent) {
  TwinExperimentSpec spec;
  spec.window = {4, 3, 0.05};
  const auto a = build_twin(lorenz40(), spec);
  const auto b = build_twin(lorenz40(), spec);
  EXPECT_EQ(a.problem.background(), b.problem.background());
  EXPECT_EQ(a.problem.observations().values, b.problem.observations().values);
  EXPECT_EQ(a.problem.sub_intervals(), 4u);
  EXPECT_GT(a.reference_magnitude, 0.0);
  const double sigma_b = 0.08 * a.reference_magnitude;
  EXPECT_NEAR(a.problem.background_covariance().to_dense()(0, 0), sigma_b * sigma_b, 1e-14);
  spec.seed = 99;
  EXPECT_NE(build_twin(lorenz40(), spec).problem.background(), a.problem.background());

  spec.observed_indices = std::vector<Eigen::Index>{0, 2, 4};
  EXPECT_EQ(build_twin(lorenz40(), spec).problem.observation_operator().obs_dim(), 3);
}

TEST(TwinExperiment, PerfectDataRecoversReference) {
  TwinExperimentSpec spec;
  spec.window = {3, 3, 0.05};
  spec.obs_noise_pct = 0.0;
  spec.background_noise_pct = 0.0;
  const auto rep = run_twin_experiment(lorenz40(), spec);
  EXPECT_EQ(rep.rmse_background, 0.0);
  EXPECT_LE(rep.rmse_analysis, 1e-10);
}

TEST(TwinExperiment, SerialAnalysisImprovesOnBackground) {
  TwinExperimentSpec spec;
  spec.window = {4, 3, 0.05};
  const auto rep = run_twin_experiment(lorenz40(), spec);
  EXPECT_EQ(rep.method, Method::serial);
  EXPECT_FALSE(rep.rmse_serial.has_value());
  EXPECT_LT(rep.rmse_analysis, rep.rmse_background);
  EXPECT_EQ(rep.analysis_trajectory.size(), 13u);
}

TEST(TwinExperiment, ParallelRecordsSerialReferenceAndOuterScores) {
  TwinExperimentSpec spec;
  spec.window = {4, 3, 0.05};
  spec.method = Method::parallel;
  spec.workers = 2;
  const auto rep = run_twin_experiment(lorenz40(), spec);
  ASSERT_TRUE(rep.serial_reference.has_value());
  ASSERT_TRUE(rep.rmse_serial.has_value());
  EXPECT_EQ(rep.rmse_outer.size(), rep.solve.outer_trace.size());
  for (const auto& r : rep.solve.outer_trace) EXPECT_TRUE(r.distance_to_serial.has_value());
  EXPECT_LT(rep.rmse_analysis, rep.rmse_background);
}

TEST(TwinExperimentSpec, Validation) {
  TwinExperimentSpec spec;
  EXPECT_NO_THROW(spec.validate());
  spec.window.sub_intervals = 0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = TwinExperimentSpec{};
  spec.obs_weight_pct = 0.0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = TwinExperimentSpec{};
  spec.obs_noise_pct = 0.0;
  EXPECT_EQ(spec.obs_weight(), 0.05);
  spec.obs_weight_pct = 0.2;
  EXPECT_EQ(spec.obs_weight(), 0.2);
}

TEST(WeakScaling, RowsPerKAndPolicyIndependentCost) {
  TwinExperimentSpec base;
  ScalingOptions opts;
  opts.k_list = {1, 2, 3};
  opts.min_sample_ms = 0.0;
  const auto eq = run_weak_scaling(lorenz40(), base, opts);
  ASSERT_EQ(eq.rows.size(), 3u);
  for (std::size_t i = 0; i < eq.rows.size(); ++i) {
    EXPECT_EQ(eq.rows[i].k, opts.k_list[i]);
    EXPECT_EQ(eq.rows[i].workers, static_cast<std::size_t>(opts.k_list[i]));
    EXPECT_GT(eq.rows[i].cost_eval_ms, 0.0);
    EXPECT_GT(eq.rows[i].grad_eval_ms, 0.0);
    EXPECT_GT(eq.rows[i].solve_s, 0.0);
  }
  EXPECT_EQ(eq.ratios().front().first, 1.0);

  opts.policy = WorkersPolicy::fixed;
  const auto fixed = run_weak_scaling(lorenz40(), base, opts);
  for (std::size_t i = 0; i < fixed.rows.size(); ++i) {
    EXPECT_EQ(fixed.rows[i].workers, 1u);
    EXPECT_EQ(fixed.rows[i].cost_value, eq.rows[i].cost_value);
  }
}

TEST(WeakScaling, OptionValidation) {
  ScalingOptions opts;
  opts.repetitions = 4;
  EXPECT_THROW(opts.validate(), InvalidArgument);
  opts = ScalingOptions{};
  opts.k_list = {1, 0};
  EXPECT_THROW(opts.validate(), InvalidArgument);
  opts = ScalingOptions{};
  opts.k_list.clear();
  EXPECT_THROW(opts.validate(), InvalidArgument);
  EXPECT_DOUBLE_EQ(detail::median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(detail::median({4.0, 1.0, 3.0, 2.0}), 2.5);
}
