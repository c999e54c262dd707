// Acceptance gate. Each TEST is one criterion; the listener prints a single
// PASS/FAIL/SKIP line per criterion after the regular gtest output.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "pintda/cli/commands.hpp"
#include "pintda/harness.hpp"
#include "test_support.hpp"

using namespace pintda;
namespace fs = std::filesystem;

namespace {

namespace tol {
constexpr double gradient_lorenz = 1e-5;
constexpr double gradient_linear = 1e-8;
constexpr double gradient_runtime_s = 120.0;
constexpr double oracle_abs = 1e-6;
constexpr double oracle_runtime_s = 10.0;
constexpr int manifold_draws = 20;
constexpr double distance_reduction = 100.0;
constexpr double violation_per_sqrt_n = 1e-6;
constexpr double convergence_runtime_s = 600.0;
constexpr double auglag_rmse_rel = 0.10;
constexpr double hybrid_rmse_rel = 0.05;
constexpr int hybrid_parallel_outer = 2;
constexpr double parallel_ratio_max = 2.0;
constexpr double pinned_ratio_per_k = 0.5;
constexpr unsigned scaling_min_cores = 4;
constexpr double accelerated_violation = 1e-4;
} // namespace tol

const std::vector<std::uint64_t> twin_seeds{2015, 1, 7, 42};

std::string config_path(const std::string& name) { return std::string(PINTDA_CONFIG_DIR) + "/" + name; }

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// The shipped Lorenz-96 twin (n = 40, N = 6).
cli::RunConfig lorenz_twin_config() { return cli::parse_config(cli::read_json_file(config_path("lorenz96_twin.json"))); }

TwinExperimentSpec lorenz_twin(Method method, std::uint64_t seed, PenaltyScaling p = PenaltyScaling::background) {
  TwinExperimentSpec spec = lorenz_twin_config().twin;
  spec.method = method;
  spec.seed = seed;
  spec.outer.penalty_scaling = p;
  return spec;
}

int first_outer_below(const SolveReport& rep, double threshold) {
  for (const auto& o : rep.outer_trace) {
    if (o.constraint_violation <= threshold) return o.outer + 1;
  }
  return -1;
}

class CriterionPrinter : public ::testing::EmptyTestEventListener {
public:
  void OnTestEnd(const ::testing::TestInfo& info) override {
    const auto* r = info.result();
    const char* verdict = r->Skipped() ? "SKIP" : (r->Passed() ? "PASS" : "FAIL");
    lines_.push_back(std::string(verdict) + "  " + info.name());
  }
  void OnTestProgramEnd(const ::testing::UnitTest&) override {
    std::printf("\n==== acceptance criteria ====\n");
    for (const auto& l : lines_) std::printf("%s\n", l.c_str());
    std::fflush(stdout);
  }

private:
  std::vector<std::string> lines_;
};

} // namespace

TEST(Acceptance, GradientCorrectness) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, double>> cases{{"lorenz96_twin.json", tol::gradient_lorenz},
                                                          {"linear_gaussian.json", tol::gradient_linear}};
  for (const auto& [name, bound] : cases) {
    const auto cfg = cli::parse_config(cli::read_json_file(config_path(name)));
    const auto checks = cli::with_model(cfg, [&](const auto& model) {
      return cli::run_gradient_checks(build_twin(model, cfg.twin).problem, cfg);
    });
    ASSERT_EQ(checks.size(), 2u);
    for (const auto& c : checks) {
      std::printf("  %s %s: max relative error %.3e (bound %.0e)\n", name.c_str(), c.suite.c_str(), c.max_rel_error,
                  bound);
      EXPECT_LE(c.max_rel_error, bound) << name << " " << c.suite;
    }
  }
  EXPECT_EQ(lorenz_twin_config().state_dim(), 40);
  EXPECT_EQ(lorenz_twin_config().twin.window.sub_intervals, 6);
  EXPECT_LT(seconds_since(t0), tol::gradient_runtime_s);
}

TEST(Acceptance, OracleEquivalence) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = pintda::testing::make_linear_gaussian_case(11, 2, 2, 5, 0.1);
  const auto prob = c.problem();
  const Vector oracle = c.normal_equations_minimizer();

  OptimizerConfig serial_cfg;
  serial_cfg.grad_tol = 1e-12;
  const auto serial = solve_serial(prob, serial_cfg);
  OuterConfig outer;
  outer.mu0 = 1.0;
  outer.rho = 10.0;
  outer.constraint_tol = 1e-10;
  outer.inner.grad_tol = 1e-12;
  WorkerPool pool(2);
  const auto auglag = solve_auglag(prob, outer, pool);

  const double e_serial = inf_norm(serial.x_final - oracle);
  const double e_auglag = inf_norm(auglag.x_final - oracle);
  std::printf("  serial error %.3e, augmented Lagrangian error %.3e\n", e_serial, e_auglag);
  EXPECT_LE(e_serial, tol::oracle_abs);
  EXPECT_LE(e_auglag, tol::oracle_abs);
  EXPECT_LT(seconds_since(t0), tol::oracle_runtime_s);
}

TEST(Acceptance, ConstraintManifoldIdentity) {
  const auto prob = build_twin(Lorenz96(), lorenz_twin(Method::parallel, 2015)).problem;
  SeededRng rng(77);
  for (int draw = 0; draw < tol::manifold_draws; ++draw) {
    const Vector x0 = prob.background() + pintda::testing::random_vector(rng, prob.state_dim(), 0.5);
    const MultiplierSet lam(pintda::testing::random_vector(rng, prob.state_dim() * 6), prob.state_dim());
    const AugLagParams ap{std::exp(3.0 * rng.normal()), penalty_scaling(prob, PenaltyScaling::background)};
    const double al = parallel_cost(prob, consistent_control(prob, x0), lam, ap).first;
    const double serial = serial_cost(prob, x0).first;
    EXPECT_EQ(al, serial) << "draw " << draw;
  }
}

TEST(Acceptance, ConvergenceToSerialSolution) {
  const auto t0 = std::chrono::steady_clock::now();
  const double bound = tol::violation_per_sqrt_n * std::sqrt(40.0);
  for (const auto p : {PenaltyScaling::background, PenaltyScaling::identity}) {
    for (const auto seed : twin_seeds) {
      const auto rep = run_twin_experiment(Lorenz96(), lorenz_twin(Method::parallel, seed, p));
      const auto& trace = rep.solve.outer_trace;
      ASSERT_FALSE(trace.empty());
      const double first = *trace.front().distance_to_serial;
      const double last = *trace.back().distance_to_serial;
      std::printf("  P=%s seed %llu: distance %.3e -> %.3e over %zu outer, violation %.3e\n",
                  std::string(to_string(p)).c_str(), static_cast<unsigned long long>(seed), first, last, trace.size(),
                  trace.back().constraint_violation);
      EXPECT_LE(last * tol::distance_reduction, first) << "seed " << seed;
      EXPECT_LE(trace.back().constraint_violation, bound) << "seed " << seed;
    }
  }
  EXPECT_LT(seconds_since(t0), tol::convergence_runtime_s);
}

TEST(Acceptance, AnalysisQuality) {
  for (const auto p : {PenaltyScaling::background, PenaltyScaling::identity}) {
    for (const auto seed : twin_seeds) {
      const auto rep = run_twin_experiment(Lorenz96(), lorenz_twin(Method::parallel, seed, p));
      ASSERT_TRUE(rep.rmse_serial.has_value());
      const double serial = *rep.rmse_serial;
      std::printf("  P=%s seed %llu: rmse background %.4f serial %.4f augmented Lagrangian %.4f\n",
                  std::string(to_string(p)).c_str(), static_cast<unsigned long long>(seed), rep.rmse_background,
                  serial, rep.rmse_analysis);
      EXPECT_LE(std::abs(rep.rmse_analysis - serial), tol::auglag_rmse_rel * serial) << "seed " << seed;
      EXPECT_LT(rep.rmse_analysis, rep.rmse_background) << "seed " << seed;
      EXPECT_LT(serial, rep.rmse_background) << "seed " << seed;
    }
  }
}

TEST(Acceptance, HybridParity) {
  for (const auto seed : twin_seeds) {
    auto spec = lorenz_twin(Method::hybrid, seed);
    spec.hybrid_parallel_outer = tol::hybrid_parallel_outer;
    const auto rep = run_twin_experiment(Lorenz96(), spec);
    ASSERT_TRUE(rep.rmse_serial.has_value());
    ASSERT_TRUE(rep.solve.phase_boundary.has_value());
    EXPECT_EQ(rep.solve.outer_trace.size(), static_cast<std::size_t>(tol::hybrid_parallel_outer));
    std::printf("  seed %llu: rmse serial %.4f hybrid %.4f\n", static_cast<unsigned long long>(seed),
                *rep.rmse_serial, rep.rmse_analysis);
    EXPECT_LE(std::abs(rep.rmse_analysis - *rep.rmse_serial), tol::hybrid_rmse_rel * *rep.rmse_serial)
        << "seed " << seed;
  }
}

namespace {

ScalingResult scaling(WorkersPolicy policy) {
  const auto cfg = lorenz_twin_config();
  ScalingOptions opts = cfg.bench;
  opts.k_list = {1, 2, 4};
  opts.policy = policy;
  opts.fixed_workers = 1;
  return run_weak_scaling(Lorenz96(), cfg.twin, opts);
}

double eval_ms(const ScalingRow& r) { return r.cost_eval_ms + r.grad_eval_ms; }

void print_rows(const ScalingResult& res) {
  for (const auto& r : res.rows) {
    std::printf("  k=%d workers=%zu cost %.3f ms gradient %.3f ms (ratio %.3f)\n", r.k, r.workers, r.cost_eval_ms,
                r.grad_eval_ms, eval_ms(r) / eval_ms(res.rows.front()));
  }
}

bool enough_cores() { return std::thread::hardware_concurrency() >= tol::scaling_min_cores; }

} // namespace

TEST(Acceptance, WeakScalingWorkersEqualK) {
  if (!enough_cores()) {
    GTEST_SKIP() << "needs >= " << tol::scaling_min_cores << " hardware threads, have "
                 << std::thread::hardware_concurrency();
  }
  const auto res = scaling(WorkersPolicy::equal_to_k);
  print_rows(res);
  for (const auto& r : res.rows) {
    EXPECT_LE(eval_ms(r) / eval_ms(res.rows.front()), tol::parallel_ratio_max) << "k=" << r.k;
  }
}

TEST(Acceptance, WeakScalingPinnedToOneWorker) {
  const auto res = scaling(WorkersPolicy::fixed);
  print_rows(res);
  for (const auto& r : res.rows) {
    EXPECT_GE(eval_ms(r) / eval_ms(res.rows.front()), tol::pinned_ratio_per_k * r.k) << "k=" << r.k;
  }
}

TEST(Acceptance, WeakScalingMonotoneSpeedup) {
  if (!enough_cores()) {
    GTEST_SKIP() << "needs >= " << tol::scaling_min_cores << " hardware threads, have "
                 << std::thread::hardware_concurrency();
  }
  const auto pinned = scaling(WorkersPolicy::fixed);
  const auto parallel = scaling(WorkersPolicy::equal_to_k);
  double prev = 0.0;
  for (std::size_t i = 0; i < pinned.rows.size(); ++i) {
    const double speedup = eval_ms(pinned.rows[i]) / eval_ms(parallel.rows[i]);
    std::printf("  k=%d speedup %.3f\n", pinned.rows[i].k, speedup);
    EXPECT_GE(speedup, prev) << "k=" << pinned.rows[i].k;
    prev = speedup;
  }
}

TEST(Acceptance, Determinism) {
  const fs::path root = fs::temp_directory_path() / "pintda_acceptance_determinism";
  fs::remove_all(root);
  struct Artifacts {
    std::string convergence, trajectory;
    cli::Json report;
  };
  auto run_once = [&] {
    cli::CliOptions o;
    o.config_path = config_path("lorenz96_twin.json");
    o.workers = 1;
    o.out = root.string();
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_run(o, out, err), cli::exit_ok) << err.str();
    Artifacts a{slurp(root / "convergence.csv"), slurp(root / "analysis_trajectory.csv"),
                cli::Json::parse(slurp(root / "report.json"))};
    a.report.erase("timing");
    return a;
  };
  const auto a = run_once();
  const auto b = run_once();
  EXPECT_GT(a.convergence.size(), 100u);
  EXPECT_EQ(a.convergence, b.convergence);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(a.report, b.report);
  fs::remove_all(root);

  const auto prob = build_twin(Lorenz96(), lorenz_twin(Method::parallel, 2015)).problem;
  auto [ctrl, lam] = initialize(prob);
  SeededRng rng(5);
  ctrl.flat() += pintda::testing::random_vector(rng, ctrl.flat().size(), 0.1);
  lam.flat() = pintda::testing::random_vector(rng, lam.flat().size());
  const AugLagParams ap{0.4, penalty_scaling(prob, PenaltyScaling::background)};
  WorkerPool one(1);
  const double reference = parallel_cost(prob, ctrl, lam, ap, one).first;
  for (std::size_t workers : {2u, 3u, 4u, 6u, 8u}) {
    WorkerPool pool(workers);
    EXPECT_EQ(parallel_cost(prob, ctrl, lam, ap, pool).first, reference) << workers << " workers";
  }
}

TEST(Acceptance, AcceleratedUpdateNoSlowerThanClassical) {
  auto spec = lorenz_twin(Method::parallel, 2015);
  spec.compare_with_serial = false;
  spec.outer.constraint_tol = tol::accelerated_violation;
  const fs::path dir = "acceptance_artifacts";
  int reached[2] = {-1, -1};
  int i = 0;
  for (const auto scheme : {UpdateScheme::classical, UpdateScheme::accelerated}) {
    spec.outer.update_scheme = scheme;
    const auto rep = run_twin_experiment(Lorenz96(), spec);
    reached[i++] = first_outer_below(rep.solve, tol::accelerated_violation);
    std::string csv = "outer,mu,constraint_violation,cost,inner_iterations\n";
    for (const auto& o : rep.solve.outer_trace) {
      csv += std::to_string(o.outer) + ',' + cli::format_double(o.mu) + ',' + cli::format_double(o.constraint_violation) +
             ',' + cli::format_double(o.cost) + ',' + std::to_string(o.inner_iterations) + '\n';
      std::printf("  %s outer %d: violation %.3e\n", std::string(to_string(scheme)).c_str(), o.outer + 1,
                  o.constraint_violation);
    }
    cli::write_atomic(dir / (std::string(to_string(scheme)) + "_outer.csv"), csv);
  }
  std::printf("  outer iterations to violation <= %.0e: classical %d, accelerated %d (traces in %s)\n",
              tol::accelerated_violation, reached[0], reached[1], fs::absolute(dir).string().c_str());
  ASSERT_GT(reached[0], 0);
  ASSERT_GT(reached[1], 0);
  EXPECT_LE(reached[1], reached[0]);
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new CriterionPrinter);
  return RUN_ALL_TESTS();
}
