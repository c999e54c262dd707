#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "pintda/auglag.hpp"
#include "pintda/lbfgs.hpp"
#include "pintda/observations.hpp"
#include "pintda/outer_loop.hpp"
#include "pintda/problem.hpp"
#include "pintda/serial_4dvar.hpp"
#include "pintda/worker_pool.hpp"

namespace pintda {

enum class Method { serial, parallel, hybrid };

inline std::string_view to_string(Method m) {
  switch (m) {
  case Method::serial: return "serial";
  case Method::parallel: return "parallel";
  case Method::hybrid: return "hybrid";
  }
  return "unknown";
}

struct WindowSpec {
  int sub_intervals = 6;
  int steps_per_sub_interval = 3;
  double step_size = 0.05;
};

/// Twin experiment settings. Error "pct" values are fractions of the average
/// magnitude of the reference boundary states (0.05 means 5%).
///
/// The *_weight_pct fields set the assumed error covariances; when unset they
/// follow the matching noise level, or the default noise level if that is 0.
struct TwinExperimentSpec {
  WindowSpec window{};
  int spinup_steps = 200;
  std::optional<Vector> initial_state;                     ///< start of the spin-up; default linspace(-2, 2)
  std::optional<std::vector<Eigen::Index>> observed_indices; ///< default: all components
  double obs_noise_pct = 0.05;
  std::optional<double> obs_weight_pct;
  double background_noise_pct = 0.08;
  std::optional<double> background_weight_pct;
  std::uint64_t seed = 2015;
  Method method = Method::serial;
  bool compare_with_serial = true;
  OptimizerConfig serial_optimizer{.grad_tol_rel = 1e-8};
  OuterConfig outer{};
  int hybrid_parallel_outer = 2;
  std::size_t workers = 1;

  void validate() const {
    if (window.sub_intervals < 1) throw InvalidArgument("window: sub_intervals >= 1 required");
    if (window.steps_per_sub_interval < 1) throw InvalidArgument("window: steps_per_sub_interval >= 1 required");
    if (!(window.step_size > 0.0)) throw InvalidArgument("window: step_size > 0 required");
    if (spinup_steps < 0) throw InvalidArgument("reference: spinup_steps >= 0 required");
    if (!(obs_noise_pct >= 0.0)) throw InvalidArgument("observations: noise_pct >= 0 required");
    if (!(background_noise_pct >= 0.0)) throw InvalidArgument("background: noise_pct >= 0 required");
    if (obs_weight_pct && !(*obs_weight_pct > 0.0)) throw InvalidArgument("observations: weight_pct > 0 required");
    if (background_weight_pct && !(*background_weight_pct > 0.0)) {
      throw InvalidArgument("background: weight_pct > 0 required");
    }
    if (hybrid_parallel_outer < 1) throw InvalidArgument("hybrid: parallel_outer >= 1 required");
    if (workers < 1) throw InvalidArgument("workers >= 1 required");
    serial_optimizer.validate();
    outer.validate();
  }

  [[nodiscard]] double obs_weight() const {
    return obs_weight_pct.value_or(obs_noise_pct > 0.0 ? obs_noise_pct : 0.05);
  }
  [[nodiscard]] double background_weight() const {
    return background_weight_pct.value_or(background_noise_pct > 0.0 ? background_noise_pct : 0.08);
  }
};

/// Equidistant start in [-2, 2] (or `start`), integrated for `spinup_steps`
/// RK4 steps of size h.
template <DynamicalModel M>
Vector make_reference_initial_condition(const M& model, int spinup_steps, double h,
                                        const std::optional<Vector>& start = std::nullopt) {
  if (spinup_steps < 0) throw InvalidArgument("make_reference_initial_condition: spinup_steps >= 0 required");
  Vector x = start.value_or(linspace(-2.0, 2.0, model.dim()));
  detail::require_dim(x.size(), model.dim(), "make_reference_initial_condition");
  if (spinup_steps == 0) return x;
  return advance(model, x, SubInterval::with_step(0.0, spinup_steps, h));
}

inline Vector make_reference_initial_condition(const Lorenz96Params& p, int spinup_steps = 200, double h = 0.05) {
  return make_reference_initial_condition(Lorenz96(p), spinup_steps, h);
}

/// sqrt( (1/N) sum_k ||a_k - r_k||^2 / n )
inline double rmse(const std::vector<Vector>& analysis, const std::vector<Vector>& reference) {
  detail::require_dim(analysis.size(), reference.size(), "rmse trajectory length");
  if (analysis.empty()) throw InvalidArgument("rmse: empty trajectories");
  double acc = 0.0;
  for (std::size_t k = 0; k < analysis.size(); ++k) {
    detail::require_dim(analysis[k].size(), reference[k].size(), "rmse state");
    acc += (analysis[k] - reference[k]).squaredNorm() / static_cast<double>(analysis[k].size());
  }
  return std::sqrt(acc / static_cast<double>(analysis.size()));
}

/// Every RK4 step state across the window, x(t_0) first.
template <DynamicalModel M>
std::vector<Vector> window_trajectory(const M& model, const Vector& x0, const std::vector<SubInterval>& partition) {
  std::vector<Vector> out{x0};
  for (const auto& iv : partition) {
    auto seg = step_states(model, out.back(), iv);
    out.insert(out.end(), std::make_move_iterator(seg.begin() + 1), std::make_move_iterator(seg.end()));
  }
  return out;
}

/// RMSE over every step after t_0.
inline double window_rmse(const std::vector<Vector>& analysis, const std::vector<Vector>& reference) {
  return rmse(std::vector<Vector>(analysis.begin() + 1, analysis.end()),
              std::vector<Vector>(reference.begin() + 1, reference.end()));
}

template <DynamicalModel M>
struct TwinSetup {
  AssimilationProblem<M> problem;
  Vector reference_initial;
  double reference_magnitude = 0.0;
};

template <DynamicalModel M>
TwinSetup<M> build_twin(const M& model, const TwinExperimentSpec& spec) {
  spec.validate();
  const auto& w = spec.window;
  const Vector x_ref0 = make_reference_initial_condition(model, spec.spinup_steps, w.step_size, spec.initial_state);
  auto partition = uniform_partition(0.0, w.sub_intervals, w.steps_per_sub_interval, w.step_size);
  const double magnitude = average_magnitude(boundary_trajectory(model, x_ref0, partition));

  const Eigen::Index n = model.dim();
  const double sigma_b = spec.background_weight() * magnitude;
  auto b0 = CovarianceOperator::scaled_identity(n, sigma_b * sigma_b);
  Vector xb = x_ref0;
  if (spec.background_noise_pct > 0.0) {
    SeededRng rng(spec.seed);
    const double sigma = spec.background_noise_pct * magnitude;
    xb = CovarianceOperator::scaled_identity(n, sigma * sigma).sample(x_ref0, rng);
  }

  auto h = spec.observed_indices ? ObservationOperator::selection(n, *spec.observed_indices)
                                 : ObservationOperator::identity(n);
  SeededRng obs_rng = SeededRng(spec.seed).derive(1);
  auto obs = generate_observations(model, x_ref0, partition, h, spec.obs_noise_pct, obs_rng, spec.obs_weight());
  return TwinSetup<M>{AssimilationProblem<M>(model, std::move(partition), std::move(h), std::move(obs), std::move(xb),
                                             std::move(b0)),
                      x_ref0, magnitude};
}

struct ExperimentReport {
  Method method = Method::serial;
  Vector reference_initial;
  Vector background_initial;
  double reference_magnitude = 0.0;
  std::vector<Vector> reference_trajectory; ///< every RK4 step, t_0 first
  std::vector<Vector> background_trajectory;
  std::vector<Vector> analysis_trajectory;
  double rmse_background = 0.0;
  double rmse_analysis = 0.0;
  std::optional<double> rmse_serial;
  std::vector<double> rmse_outer; ///< analysis RMSE of x_0 after each outer iteration
  SolveReport solve;
  std::optional<SolveReport> serial_reference;
  double total_time_s = 0.0;
};

/// Builds the twin problem, solves it with spec.method and scores the
/// analysis against the reference over the whole window.
template <DynamicalModel M>
ExperimentReport run_twin_experiment(const M& model, const TwinExperimentSpec& spec) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto setup = build_twin(model, spec);
  const auto& prob = setup.problem;
  WorkerPool pool(spec.workers);

  ExperimentReport rep;
  rep.method = spec.method;
  rep.reference_initial = setup.reference_initial;
  rep.background_initial = prob.background();
  rep.reference_magnitude = setup.reference_magnitude;
  rep.reference_trajectory = window_trajectory(model, setup.reference_initial, prob.partition());
  rep.background_trajectory = window_trajectory(model, prob.background(), prob.partition());
  rep.rmse_background = window_rmse(rep.background_trajectory, rep.reference_trajectory);

  std::optional<Vector> serial_x0;
  if (spec.method != Method::serial && spec.compare_with_serial) {
    rep.serial_reference = solve_serial(prob, spec.serial_optimizer);
    serial_x0 = rep.serial_reference->x_final;
    rep.rmse_serial =
        window_rmse(window_trajectory(model, *serial_x0, prob.partition()), rep.reference_trajectory);
  }

  switch (spec.method) {
  case Method::serial: rep.solve = solve_serial(prob, spec.serial_optimizer); break;
  case Method::parallel: rep.solve = solve_auglag(prob, spec.outer, pool, serial_x0); break;
  case Method::hybrid:
    rep.solve = solve_hybrid(prob, spec.outer, spec.serial_optimizer, spec.hybrid_parallel_outer, pool, serial_x0);
    break;
  }
  if (spec.method == Method::serial) rep.rmse_serial = std::nullopt;

  for (const auto& iterate : rep.solve.outer_iterates) {
    rep.rmse_outer.push_back(
        window_rmse(window_trajectory(model, iterate.front(), prob.partition()), rep.reference_trajectory));
  }
  rep.analysis_trajectory = window_trajectory(model, rep.solve.x_final, prob.partition());
  rep.rmse_analysis = window_rmse(rep.analysis_trajectory, rep.reference_trajectory);
  rep.total_time_s = std::chrono::duration<double>(clock::now() - t0).count();
  return rep;
}

enum class WorkersPolicy { equal_to_k, fixed };

inline std::string_view to_string(WorkersPolicy p) { return p == WorkersPolicy::equal_to_k ? "equal-to-k" : "fixed"; }

struct ScalingRow {
  int k = 0;
  std::size_t workers = 1;
  bool oversubscribed = false;
  double cost_eval_ms = 0.0; ///< median over repetitions
  double grad_eval_ms = 0.0;
  double solve_s = 0.0;
  double cost_value = 0.0; ///< cost at the measured point, for cross-configuration checks
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  unsigned hardware_threads = 0;
  int evaluations_per_sample = 1; ///< same batch size for every k

  /// t_k / t_1 for cost (first) and gradient (second) evaluations.
  [[nodiscard]] std::vector<std::pair<double, double>> ratios() const {
    std::vector<std::pair<double, double>> out;
    if (rows.empty()) return out;
    for (const auto& r : rows) {
      out.emplace_back(r.cost_eval_ms / rows.front().cost_eval_ms, r.grad_eval_ms / rows.front().grad_eval_ms);
    }
    return out;
  }
};

struct ScalingOptions {
  std::vector<int> k_list{1, 2, 4};
  WorkersPolicy policy = WorkersPolicy::equal_to_k;
  std::size_t fixed_workers = 1;
  int repetitions = 5;
  int solve_max_outer = 1; ///< outer iterations in the timed solve
  double min_sample_ms = 20.0; ///< each timing sample repeats the evaluation until at least this long at the first k
  std::optional<int> steps_per_sub_interval; ///< overrides the window's, to give each task measurable work

  void validate() const {
    if (k_list.empty()) throw InvalidArgument("bench: k_list must not be empty");
    for (int k : k_list) {
      if (k < 1) throw InvalidArgument("bench: every k must be >= 1");
    }
    if (fixed_workers < 1) throw InvalidArgument("bench: fixed_workers >= 1 required");
    if (repetitions < 5) throw InvalidArgument("bench: repetitions >= 5 required");
    if (solve_max_outer < 1) throw InvalidArgument("bench: solve_max_outer >= 1 required");
    if (!(min_sample_ms >= 0.0)) throw InvalidArgument("bench: min_sample_ms >= 0 required");
    if (steps_per_sub_interval && *steps_per_sub_interval < 1) {
      throw InvalidArgument("bench: steps_per_sub_interval >= 1 required");
    }
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

/// Weak scaling: for each k the window grows to k sub-intervals (one
/// observation each) and the augmented-Lagrangian cost and gradient are timed
/// at the initialization point on `workers` threads. A warm-up evaluation is
/// discarded. Each sample times a batch of evaluations (sized once, at the
/// first k) and the median per-evaluation time over the samples is reported.
template <DynamicalModel M>
ScalingResult run_weak_scaling(const M& model, const TwinExperimentSpec& base, const ScalingOptions& opts) {
  opts.validate();
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t) { return std::chrono::duration<double, std::milli>(clock::now() - t).count(); };

  ScalingResult result;
  result.hardware_threads = std::thread::hardware_concurrency();
  for (int k : opts.k_list) {
    TwinExperimentSpec spec = base;
    spec.window.sub_intervals = k;
    if (opts.steps_per_sub_interval) spec.window.steps_per_sub_interval = *opts.steps_per_sub_interval;
    auto setup = build_twin(model, spec);
    const auto& prob = setup.problem;

    ScalingRow row;
    row.k = k;
    row.workers = opts.policy == WorkersPolicy::equal_to_k ? static_cast<std::size_t>(k) : opts.fixed_workers;
    row.oversubscribed = result.hardware_threads > 0 && row.workers > result.hardware_threads;
    WorkerPool pool(row.workers);

    auto [ctrl, lam] = initialize(prob);
    const AugLagParams ap{spec.outer.mu0, penalty_scaling(prob, spec.outer.penalty_scaling)};
    {
      auto warm = parallel_cost(prob, ctrl, lam, ap, pool);
      (void)parallel_gradient(prob, ctrl, lam, ap, warm.second, pool);
    }
    auto [cost, cache] = parallel_cost(prob, ctrl, lam, ap, pool);
    row.cost_value = cost;
    auto time_cost = [&](int batch) {
      const auto t = clock::now();
      for (int i = 0; i < batch; ++i) (void)parallel_cost(prob, ctrl, lam, ap, pool);
      return ms_since(t) / batch;
    };
    auto time_grad = [&](int batch) {
      const auto t = clock::now();
      for (int i = 0; i < batch; ++i) {
        if (!parallel_gradient(prob, ctrl, lam, ap, cache, pool).flat().allFinite()) {
          throw NumericalError("run_weak_scaling: non-finite gradient");
        }
      }
      return ms_since(t) / batch;
    };
    if (result.rows.empty()) {
      while (time_cost(result.evaluations_per_sample) * result.evaluations_per_sample < opts.min_sample_ms &&
             result.evaluations_per_sample < (1 << 20)) {
        result.evaluations_per_sample *= 2;
      }
    }
    std::vector<double> cost_ms;
    std::vector<double> grad_ms;
    for (int rep = 0; rep < opts.repetitions; ++rep) {
      cost_ms.push_back(time_cost(result.evaluations_per_sample));
      grad_ms.push_back(time_grad(result.evaluations_per_sample));
    }
    row.cost_eval_ms = detail::median(cost_ms);
    row.grad_eval_ms = detail::median(grad_ms);

    OuterConfig outer = spec.outer;
    outer.max_outer = opts.solve_max_outer;
    const auto t = clock::now();
    (void)solve_auglag(prob, outer, pool);
    row.solve_s = ms_since(t) / 1000.0;
    result.rows.push_back(row);
  }
  return result;
}

} // namespace pintda
