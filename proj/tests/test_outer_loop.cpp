#include <cmath>

#include <gtest/gtest.h>

#include "pintda/harness.hpp"
#include "pintda/outer_loop.hpp"
#include "test_support.hpp"

using namespace pintda;
using pintda::testing::make_linear_gaussian_case;
using pintda::testing::make_lorenz_problem;

namespace {

MultiplierSet multipliers(std::initializer_list<double> values, Eigen::Index block_dim) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return MultiplierSet(v, block_dim);
}

OuterConfig tight_linear_config() {
  OuterConfig cfg;
  cfg.mu0 = 1.0;
  cfg.rho = 10.0;
  cfg.constraint_tol = 1e-10;
  cfg.inner.grad_tol = 1e-12;
  return cfg;
}

} // namespace

TEST(ClassicalUpdate, WorkedExample) {
  MismatchCache cache;
  Vector dx(2);
  dx << 0.5, -0.5;
  cache.dx = {dx};
  OuterConfig cfg;
  cfg.rho = 4.0;
  const auto p = replicate(CovarianceOperator::identity(2), 1);
  const auto [lam, mu] = classical_update(multipliers({1.0, 1.0}, 2), 2.0, cache, cfg, p);
  EXPECT_EQ(lam.flat(), multipliers({0.0, 2.0}, 2).flat());
  EXPECT_EQ(mu, 8.0);
}

TEST(ClassicalUpdate, ZeroMismatchKeepsMultipliersAndGrowsPenalty) {
  MismatchCache cache;
  cache.dx = {Vector::Zero(3), Vector::Zero(3)};
  OuterConfig cfg;
  const auto lam0 = multipliers({1, 2, 3, 4, 5, 6}, 3);
  const auto p = replicate(CovarianceOperator::scaled_identity(3, 0.5), 2);
  const auto [lam, mu] = classical_update(lam0, 10.0, cache, cfg, p);
  EXPECT_EQ(lam.flat(), lam0.flat());
  EXPECT_EQ(mu, 40.0);
}

TEST(ClassicalUpdate, ScalesByInversePenaltyCovariance) {
  MismatchCache cache;
  cache.dx = {Vector::Constant(2, 1.0)};
  OuterConfig cfg;
  const auto p = replicate(CovarianceOperator::scaled_identity(2, 0.25), 1);
  const auto lam0 = multipliers({0.0, 0.0}, 2);
  EXPECT_EQ(classical_update(lam0, 1.0, cache, cfg, p).first.flat(), Vector::Constant(2, -4.0));
  cfg.scale_update_by_p = false;
  EXPECT_EQ(classical_update(lam0, 1.0, cache, cfg, p).first.flat(), Vector::Constant(2, -1.0));
}

TEST(AcceleratedUpdate, MomentumSequence) {
  EXPECT_NEAR(next_accel_t(1.0), 1.6180339887498949, 1e-15);
  EXPECT_NEAR(next_accel_t(next_accel_t(1.0)), 2.193527085331054, 1e-14);
  EXPECT_NEAR(next_accel_t(next_accel_t(1.0)), 2.1935, 5e-5);
}

TEST(AcceleratedUpdate, WithoutHistoryReturnsClassicalOutput) {
  const auto tilde = multipliers({1.0, -2.0}, 2);
  const auto [out, st] = accelerated_update(AccelState{}, tilde, multipliers({5.0, 5.0}, 2));
  EXPECT_EQ(out.flat(), tilde.flat());
  EXPECT_EQ(st.t, 1.0);
  ASSERT_TRUE(st.lam_tilde_prev.has_value());
  EXPECT_EQ(st.lam_tilde_prev->flat(), tilde.flat());
}

TEST(AcceleratedUpdate, ExtrapolatesWithBothTerms) {
  AccelState st{1.6180339887498949, multipliers({1.0, 1.0}, 2)};
  const auto tilde_new = multipliers({2.0, 0.0}, 2);
  const auto lam_prev = multipliers({1.5, 0.5}, 2);
  const auto [out, next] = accelerated_update(st, tilde_new, lam_prev);
  const double tn = next_accel_t(st.t);
  Vector expected = tilde_new.flat() + ((st.t - 1.0) / tn) * (tilde_new.flat() - Vector::Constant(2, 1.0)) +
                    (st.t / tn) * (tilde_new.flat() - lam_prev.flat());
  EXPECT_LE((out.flat() - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(next.t, tn);
  EXPECT_EQ(next.lam_tilde_prev->flat(), tilde_new.flat());
}

TEST(AcceleratedUpdate, StationaryHistoryIsFixedPoint) {
  const auto lam = multipliers({0.3, -0.7, 1.1}, 3);
  AccelState st{2.0, lam};
  const auto [out, next] = accelerated_update(st, lam, lam);
  EXPECT_EQ(out.flat(), lam.flat());
}

TEST(OuterConfig, Validation) {
  OuterConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.rho = 1.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("rho > 1"), std::string::npos);
  }
  cfg = OuterConfig{};
  cfg.mu0 = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = OuterConfig{};
  cfg.max_outer = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  EXPECT_DOUBLE_EQ(OuterConfig{}.constraint_tolerance(40), 1e-6 * std::sqrt(40.0));
  EXPECT_DOUBLE_EQ(OuterConfig{}.inner_relative_tolerance(0), 1e-2);
  EXPECT_DOUBLE_EQ(OuterConfig{}.inner_relative_tolerance(9), 1e-6);
}

TEST(SolveAuglag, PenaltyGrowsGeometrically) {
  const auto prob = make_lorenz_problem(4, 4, 3);
  OuterConfig cfg;
  cfg.max_outer = 5;
  cfg.constraint_tol = 1e-14;
  WorkerPool pool(1);
  const auto rep = solve_auglag(prob, cfg, pool);
  ASSERT_EQ(rep.outer_trace.size(), 5u);
  for (std::size_t l = 0; l < rep.outer_trace.size(); ++l) {
    EXPECT_DOUBLE_EQ(rep.outer_trace[l].mu, cfg.mu0 * std::pow(cfg.rho, static_cast<double>(l)));
    EXPECT_EQ(rep.outer_trace[l].outer, static_cast<int>(l));
  }
  EXPECT_EQ(rep.termination, Termination::max_iterations);
  EXPECT_EQ(rep.outer_iterates.size(), 5u);
}

TEST(SolveAuglag, MatchesNormalEquationsOnLinearGaussian) {
  const auto c = make_linear_gaussian_case();
  WorkerPool pool(2);
  const auto rep = solve_auglag(c.problem(), tight_linear_config(), pool);
  EXPECT_EQ(rep.termination, Termination::converged);
  EXPECT_LE(inf_norm(rep.x_final - c.normal_equations_minimizer()), 1e-6);
  EXPECT_LE(rep.outer_trace.back().constraint_violation, 1e-10);
}

TEST(SolveAuglag, PerfectBackgroundAndDataStopAfterOneOuterIteration) {
  TwinExperimentSpec spec;
  spec.window = {3, 3, 0.05};
  spec.obs_noise_pct = 0.0;
  spec.background_noise_pct = 0.0;
  const auto setup = build_twin(pintda::testing::lorenz40(), spec);
  WorkerPool pool(1);
  const auto rep = solve_auglag(setup.problem, OuterConfig{}, pool);
  EXPECT_EQ(rep.termination, Termination::converged);
  ASSERT_EQ(rep.outer_trace.size(), 1u);
  EXPECT_EQ(rep.outer_trace.front().constraint_violation, 0.0);
  EXPECT_EQ(rep.x_final, setup.reference_initial);
}

TEST(SolveAuglag, ConvergedRunMeetsConstraintToleranceAndTraceIsCumulative) {
  const auto prob = make_lorenz_problem(5, 4, 3);
  OuterConfig cfg;
  cfg.max_outer = 20;
  WorkerPool pool(2);
  const auto rep = solve_auglag(prob, cfg, pool);
  ASSERT_EQ(rep.termination, Termination::converged);
  EXPECT_LE(rep.outer_trace.back().constraint_violation, cfg.constraint_tolerance(40));
  for (std::size_t i = 1; i < rep.trace.size(); ++i) {
    EXPECT_EQ(rep.trace[i].iteration, rep.trace[i - 1].iteration + 1);
    EXPECT_GE(rep.trace[i].cost_evals, rep.trace[i - 1].cost_evals);
    EXPECT_GE(rep.trace[i].outer, rep.trace[i - 1].outer);
    EXPECT_EQ(rep.trace[i].phase, Phase::parallel);
  }
  EXPECT_EQ(rep.trace.back().iteration, rep.iterations);
  EXPECT_EQ(rep.outer_trace.back().cost_evals, rep.cost_evals);
}

TEST(SolveAuglag, ResultDoesNotDependOnWorkerCount) {
  const auto prob = make_lorenz_problem(6, 4, 3);
  OuterConfig cfg;
  cfg.max_outer = 3;
  WorkerPool one(1);
  WorkerPool three(3);
  const auto a = solve_auglag(prob, cfg, one);
  const auto b = solve_auglag(prob, cfg, three);
  EXPECT_EQ(a.x_final, b.x_final);
  EXPECT_EQ(a.cost_evals, b.cost_evals);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].cost, b.trace[i].cost);
}

TEST(SolveHybrid, SwitchesToSerialAfterRequestedOuterIterations) {
  const auto c = make_linear_gaussian_case(17);
  const auto prob = c.problem();
  WorkerPool pool(1);
  OptimizerConfig serial;
  serial.grad_tol = 1e-12;
  const auto rep = solve_hybrid(prob, tight_linear_config(), serial, 1, pool);
  ASSERT_TRUE(rep.phase_boundary.has_value());
  ASSERT_LE(*rep.phase_boundary, rep.trace.size());
  EXPECT_EQ(rep.outer_trace.size(), 1u);
  for (std::size_t i = 0; i < rep.trace.size(); ++i) {
    EXPECT_EQ(rep.trace[i].phase, i < *rep.phase_boundary ? Phase::parallel : Phase::serial);
  }
  EXPECT_LE(inf_norm(rep.x_final - c.normal_equations_minimizer()), 1e-9);
  EXPECT_THROW((void)solve_hybrid(prob, tight_linear_config(), serial, 0, pool), InvalidArgument);
}
