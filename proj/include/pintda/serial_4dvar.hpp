#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "pintda/lbfgs.hpp"
#include "pintda/problem.hpp"
#include "pintda/timestepper.hpp"

namespace pintda {

/// Forward sweep of the serial cost, kept for the adjoint sweep.
struct SerialTrajectory {
  Vector x0;
  std::vector<Vector> states; ///< x_0..x_N
  std::vector<TrajectoryCheckpoint> checkpoints;
  std::vector<Vector> innovations; ///< H(x_k) - y_k for k = 1..N (empty without observations)
};

/// Strong-constraint 4D-Var cost
///   J(x0) = 1/2 |x0 - xb|^2_{B0^-1} + 1/2 sum_k |H(x_k) - y_k|^2_{R_k^-1}
/// with x_k obtained by propagating x0 sub-interval by sub-interval.
///
/// Summation is background first, then ascending k; the augmented-Lagrangian
/// cost uses the same order so the two agree bitwise on consistent trajectories.
template <DynamicalModel M>
std::pair<double, SerialTrajectory> serial_cost(const AssimilationProblem<M>& prob, const Vector& x0) {
  detail::require_dim(x0.size(), prob.state_dim(), "serial_cost");
  SerialTrajectory traj;
  traj.x0 = x0;
  traj.states.reserve(prob.sub_intervals() + 1);
  traj.checkpoints.reserve(prob.sub_intervals());
  traj.states.push_back(x0);

  double cost = 0.5 * prob.background_covariance().quad_form_inv(x0 - prob.background());
  const auto& h = prob.observation_operator();
  const auto& obs = prob.observations();
  for (std::size_t k = 0; k < prob.sub_intervals(); ++k) {
    auto [next, ckpt] = propagate(prob.model(), traj.states.back(), prob.partition()[k]);
    traj.checkpoints.push_back(std::move(ckpt));
    traj.states.push_back(std::move(next));
    if (prob.has_observations()) {
      Vector dy = h.observe(traj.states.back()) - obs.y(k + 1);
      const double term = 0.5 * obs.r(k + 1).quad_form_inv(dy);
      cost += term;
      traj.innovations.push_back(std::move(dy));
    }
  }
  return {cost, std::move(traj)};
}

/// grad J(x0) = B0^-1 (x0 - xb) + sum_k M_{0,k}^T H^T R_k^-1 (H(x_k) - y_k),
/// one backward adjoint sweep over the stored forward trajectory.
template <DynamicalModel M>
Vector serial_gradient(const AssimilationProblem<M>& prob, const Vector& x0, const SerialTrajectory& traj) {
  if (traj.checkpoints.size() != prob.sub_intervals() || traj.x0.size() != x0.size() || traj.x0 != x0) {
    throw InvalidArgument("serial_gradient: trajectory was not computed at this x0");
  }
  const auto& h = prob.observation_operator();
  const auto& obs = prob.observations();
  const std::size_t n_sub = prob.sub_intervals();
  Vector adj = Vector::Zero(prob.state_dim());
  for (std::size_t k = n_sub; k >= 1; --k) {
    if (prob.has_observations()) {
      adj += h.observe_adjoint(obs.r(k).apply_inverse(traj.innovations[k - 1]));
    }
    adj = adjoint_product(prob.model(), traj.checkpoints[k - 1], adj, prob.partition()[k - 1]);
  }
  return prob.background_covariance().apply_inverse(x0 - prob.background()) + adj;
}

/// Objective adapter for the optimizer; caches the forward sweep between
/// value() and gradient().
template <DynamicalModel M>
class SerialObjective {
public:
  explicit SerialObjective(const AssimilationProblem<M>& prob) : prob_(prob) {}

  double value(const Vector& x) {
    auto [cost, traj] = serial_cost(prob_, x);
    cache_ = std::move(traj);
    return cost;
  }

  Vector gradient(const Vector& x) {
    if (!cache_ || cache_->x0 != x) {
      value(x);
    }
    return serial_gradient(prob_, x, *cache_);
  }

private:
  const AssimilationProblem<M>& prob_;
  std::optional<SerialTrajectory> cache_;
};

/// L-BFGS minimization of J, from `x_init` (default: the background).
template <DynamicalModel M>
SolveReport solve_serial(const AssimilationProblem<M>& prob, const OptimizerConfig& cfg,
                         std::optional<Vector> x_init = std::nullopt, const IterationHook& hook = {}) {
  SerialObjective<M> objective(prob);
  const Vector start = x_init.value_or(prob.background());
  detail::require_dim(start.size(), prob.state_dim(), "solve_serial initial guess");
  auto stamp = [&](IterationRecord& r) {
    r.phase = Phase::serial;
    if (hook) hook(r);
  };
  return minimize(objective, start, cfg, stamp);
}

} // namespace pintda
