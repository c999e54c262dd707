#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pintda/auglag.hpp"
#include "pintda/lbfgs.hpp"
#include "pintda/serial_4dvar.hpp"
#include "pintda/worker_pool.hpp"

namespace pintda {

enum class UpdateScheme { classical, accelerated };
enum class PenaltyScaling { background, identity };

inline std::string_view to_string(UpdateScheme s) { return s == UpdateScheme::classical ? "classical" : "accelerated"; }
inline std::string_view to_string(PenaltyScaling s) { return s == PenaltyScaling::background ? "background" : "identity"; }

/// Method-of-multipliers settings.
///
/// Inner solve l stops at ||grad||_inf <= max(inner.grad_tol,
/// g_ref * max(inner_rel_tol0 / inner_tol_decay^l, inner_rel_tol_floor)),
/// where g_ref is the gradient norm at the initialization.
struct OuterConfig {
  double mu0 = 0.1;
  double rho = 4.0;
  int max_outer = 12;
  std::optional<double> constraint_tol; ///< on max_k ||Dx_k||_2; default 1e-6 * sqrt(n)
  OptimizerConfig inner{};
  UpdateScheme update_scheme = UpdateScheme::classical;
  bool scale_update_by_p = true;
  PenaltyScaling penalty_scaling = PenaltyScaling::background;
  double inner_rel_tol0 = 1e-2;
  double inner_tol_decay = 10.0;
  double inner_rel_tol_floor = 1e-6;
  bool accelerated_restart = false; ///< reset the acceleration when the violation grows

  void validate() const {
    if (!(mu0 > 0.0) || !std::isfinite(mu0)) throw InvalidArgument("auglag: mu0 > 0 required");
    if (!(rho > 1.0) || !std::isfinite(rho)) throw InvalidArgument("auglag: rho > 1 required");
    if (max_outer < 1) throw InvalidArgument("auglag: max_outer >= 1 required");
    if (constraint_tol && !(*constraint_tol > 0.0)) throw InvalidArgument("auglag: constraint_tol > 0 required");
    if (!(inner_rel_tol0 > 0.0)) throw InvalidArgument("auglag: inner_rel_tol0 > 0 required");
    if (!(inner_tol_decay >= 1.0)) throw InvalidArgument("auglag: inner_tol_decay >= 1 required");
    if (!(inner_rel_tol_floor > 0.0)) throw InvalidArgument("auglag: inner_rel_tol_floor > 0 required");
    inner.validate();
  }

  [[nodiscard]] double constraint_tolerance(Eigen::Index n) const {
    return constraint_tol.value_or(1e-6 * std::sqrt(static_cast<double>(n)));
  }

  [[nodiscard]] double inner_relative_tolerance(int outer) const {
    return std::max(inner_rel_tol0 / std::pow(inner_tol_decay, outer), inner_rel_tol_floor);
  }
};

/// Background trajectory as the initial control, zero multipliers.
template <DynamicalModel M>
std::pair<ExtendedControl, MultiplierSet> initialize(const AssimilationProblem<M>& prob) {
  return {consistent_control(prob, prob.background()), MultiplierSet(prob.state_dim(), prob.sub_intervals())};
}

template <DynamicalModel M>
std::vector<CovarianceOperator> penalty_scaling(const AssimilationProblem<M>& prob, PenaltyScaling kind) {
  return kind == PenaltyScaling::background
             ? replicate(prob.background_covariance(), prob.sub_intervals())
             : replicate(CovarianceOperator::identity(prob.state_dim()), prob.sub_intervals());
}

/// mu+ = rho mu;  lambda+_k = lambda_k - mu S_k Dx_k, k = 1..N, with
/// S_k = P_k^-1 when cfg.scale_update_by_p, identity otherwise.
inline std::pair<MultiplierSet, double> classical_update(const MultiplierSet& lam, double mu, const MismatchCache& cache,
                                                         const OuterConfig& cfg,
                                                         const std::vector<CovarianceOperator>& p) {
  detail::require_dim(cache.dx.size(), lam.blocks(), "classical_update");
  MultiplierSet next = lam;
  for (std::size_t k = 1; k <= lam.blocks(); ++k) {
    const Vector& dx = cache.dx[k - 1];
    next.lambda(k) -= mu * (cfg.scale_update_by_p ? p.at(k - 1).apply_inverse(dx) : dx);
  }
  return {std::move(next), cfg.rho * mu};
}

/// Two-step multiplier extrapolation state. t starts at 1; lam_tilde_prev is
/// absent until the first classical update has been seen.
struct AccelState {
  double t = 1.0;
  std::optional<MultiplierSet> lam_tilde_prev;
};

inline double next_accel_t(double t) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t)); }

/// lambda^{l+1} = lt^{l+1} + ((t^l - 1)/t^{l+1}) (lt^{l+1} - lt^l) + (t^l/t^{l+1}) (lt^{l+1} - lambda^l)
/// where lt is the classical-update output. Without history the classical
/// output is returned unchanged and t stays at 1.
inline std::pair<MultiplierSet, AccelState> accelerated_update(const AccelState& state, const MultiplierSet& lam_tilde_new,
                                                               const MultiplierSet& lam_prev) {
  if (!state.lam_tilde_prev) {
    return {lam_tilde_new, AccelState{state.t, lam_tilde_new}};
  }
  const MultiplierSet& lam_tilde_old = *state.lam_tilde_prev;
  detail::require_dim(lam_tilde_old.flat().size(), lam_tilde_new.flat().size(), "accelerated_update history");
  detail::require_dim(lam_prev.flat().size(), lam_tilde_new.flat().size(), "accelerated_update previous");
  const double t = state.t;
  const double t_next = next_accel_t(t);
  MultiplierSet out = lam_tilde_new;
  out.flat() += ((t - 1.0) / t_next) * (lam_tilde_new.flat() - lam_tilde_old.flat()) +
                (t / t_next) * (lam_tilde_new.flat() - lam_prev.flat());
  return {std::move(out), AccelState{t_next, lam_tilde_new}};
}

namespace detail {

/// Shifts per-solve counters in a record onto the cumulative totals.
struct TraceOffset {
  int iteration = 0;
  long cost_evals = 0;
  long grad_evals = 0;
  double elapsed_s = 0.0;

  void apply(IterationRecord& r) const {
    r.iteration += iteration;
    r.cost_evals += cost_evals;
    r.grad_evals += grad_evals;
    r.elapsed_s += elapsed_s;
  }
};

} // namespace detail

/// Augmented-Lagrangian 4D-Var: repeated inner L-BFGS solves of
/// L(., lambda^l, mu^l), warm-started, followed by multiplier and penalty
/// updates. Stops once max_k ||Dx_k||_2 <= constraint tolerance or after
/// max_outer iterations. `serial_reference`, when given, is used only to
/// trace ||x_0^l - x_0^serial||_inf.
template <DynamicalModel M>
SolveReport solve_auglag(const AssimilationProblem<M>& prob, const OuterConfig& cfg, WorkerPool& pool,
                         const std::optional<Vector>& serial_reference = std::nullopt) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  const double tol = cfg.constraint_tolerance(prob.state_dim());
  const auto p = penalty_scaling(prob, cfg.penalty_scaling);
  auto [ctrl, lam] = initialize(prob);
  double mu = cfg.mu0;
  AccelState accel;
  double g_ref = -1.0;
  double prev_violation = std::numeric_limits<double>::infinity();
  int consecutive_failures = 0;

  SolveReport rep;
  rep.termination = Termination::max_iterations;
  detail::TraceOffset offset;
  double last_cost = 0.0;
  double last_grad_norm = 0.0;
  double violation = 0.0;
  int total_iters = 0;

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    AugLagObjective<M> objective(prob, lam, AugLagParams{mu, p}, pool);
    OptimizerConfig inner = cfg.inner;
    if (g_ref < 0.0) {
      inner.grad_tol_rel = cfg.inner_relative_tolerance(outer);
    } else {
      inner.grad_tol = std::max(cfg.inner.grad_tol, g_ref * cfg.inner_relative_tolerance(outer));
      inner.grad_tol_rel = 0.0;
    }
    offset.elapsed_s = elapsed();
    auto stamp = [&](IterationRecord& r) {
      r.phase = Phase::parallel;
      r.outer = outer;
      r.constraint_violation = objective.last_violation();
      offset.apply(r);
    };

    SolveReport inner_rep;
    try {
      inner_rep = minimize(objective, ctrl.flat(), inner, stamp);
    } catch (const NumericalError& e) {
      ++consecutive_failures;
      rep.message = "outer iteration " + std::to_string(outer) + ": " + e.what();
      if (consecutive_failures >= 2) {
        rep.termination = Termination::failed;
        break;
      }
      mu *= cfg.rho;
      continue;
    }
    consecutive_failures = 0;
    if (g_ref < 0.0) g_ref = inner_rep.trace.front().grad_norm;

    // A failed final line search leaves the cache at a rejected trial point.
    ctrl = ExtendedControl(inner_rep.x_final, prob.state_dim());
    long extra_cost_evals = 0;
    if (!objective.cache() || objective.cache()->control != ctrl.flat()) {
      objective.value(ctrl.flat());
      ++extra_cost_evals;
    }
    const MismatchCache& cache = *objective.cache();
    violation = cache.constraint_violation();

    if (!inner_rep.trace.empty() && outer > 0) {
      // The first record repeats the warm-start point already reported.
      inner_rep.trace.erase(inner_rep.trace.begin());
    }
    rep.trace.insert(rep.trace.end(), inner_rep.trace.begin(), inner_rep.trace.end());
    total_iters += inner_rep.iterations;
    offset.iteration = total_iters;
    offset.cost_evals += inner_rep.cost_evals + extra_cost_evals;
    offset.grad_evals += inner_rep.grad_evals;
    last_cost = inner_rep.f_final;
    last_grad_norm = inner_rep.grad_norm_final;

    OuterRecord rec;
    rec.outer = outer;
    rec.mu = mu;
    rec.inner_iterations = inner_rep.iterations;
    rec.cost = inner_rep.f_final;
    rec.grad_norm = inner_rep.grad_norm_final;
    rec.constraint_violation = violation;
    if (serial_reference) rec.distance_to_serial = inf_norm(ctrl.state(0) - *serial_reference);
    rec.cost_evals = offset.cost_evals;
    rec.grad_evals = offset.grad_evals;
    rec.elapsed_s = elapsed();
    rec.inner_termination = inner_rep.termination;
    rep.outer_trace.push_back(rec);
    rep.outer_iterates.push_back(ctrl.to_vectors());

    if (violation <= tol) {
      rep.termination = Termination::converged;
      break;
    }
    if (outer + 1 == cfg.max_outer) break;

    auto [lam_tilde, mu_next] = classical_update(lam, mu, cache, cfg, p);
    if (cfg.update_scheme == UpdateScheme::accelerated) {
      if (cfg.accelerated_restart && violation > prev_violation) accel = AccelState{};
      auto [lam_next, accel_next] = accelerated_update(accel, lam_tilde, lam);
      lam = std::move(lam_next);
      accel = std::move(accel_next);
    } else {
      lam = std::move(lam_tilde);
    }
    mu = mu_next;
    prev_violation = violation;
  }

  rep.x_final = ctrl.state(0);
  rep.f_final = last_cost;
  rep.grad_norm_final = last_grad_norm;
  rep.iterations = total_iters;
  rep.cost_evals = offset.cost_evals;
  rep.grad_evals = offset.grad_evals;
  rep.wall_time_s = elapsed();
  return rep;
}

/// `n_parallel_outer` augmented-Lagrangian outer iterations, then serial
/// 4D-Var started from the resulting x_0. The serial phase begins at
/// trace[*phase_boundary].
template <DynamicalModel M>
SolveReport solve_hybrid(const AssimilationProblem<M>& prob, const OuterConfig& cfg, const OptimizerConfig& serial_cfg,
                         int n_parallel_outer, WorkerPool& pool,
                         const std::optional<Vector>& serial_reference = std::nullopt) {
  if (n_parallel_outer < 1) {
    throw InvalidArgument("solve_hybrid: n_parallel_outer >= 1 required");
  }
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  OuterConfig truncated = cfg;
  truncated.max_outer = n_parallel_outer;
  SolveReport rep = solve_auglag(prob, truncated, pool, serial_reference);
  if (rep.termination == Termination::failed) {
    return rep;
  }

  detail::TraceOffset offset{rep.iterations, rep.cost_evals, rep.grad_evals,
                             std::chrono::duration<double>(clock::now() - t0).count()};
  auto stamp = [&](IterationRecord& r) { offset.apply(r); };
  SolveReport serial = solve_serial(prob, serial_cfg, rep.x_final, stamp);

  rep.phase_boundary = rep.trace.size();
  rep.trace.insert(rep.trace.end(), serial.trace.begin(), serial.trace.end());
  rep.x_final = serial.x_final;
  rep.f_final = serial.f_final;
  rep.grad_norm_final = serial.grad_norm_final;
  rep.iterations += serial.iterations;
  rep.cost_evals += serial.cost_evals;
  rep.grad_evals += serial.grad_evals;
  rep.termination = serial.termination;
  rep.wall_time_s = std::chrono::duration<double>(clock::now() - t0).count();
  return rep;
}

} // namespace pintda
