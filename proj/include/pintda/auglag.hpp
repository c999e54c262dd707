#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pintda/errors.hpp"
#include "pintda/linalg.hpp"
#include "pintda/observations.hpp"
#include "pintda/problem.hpp"
#include "pintda/timestepper.hpp"
#include "pintda/worker_pool.hpp"

namespace pintda {

/// Fixed number of equally sized blocks stored contiguously, so the optimizer
/// can work on the flat vector directly.
class BlockVector {
public:
  BlockVector() = default;
  BlockVector(Eigen::Index block_dim, std::size_t blocks)
      : flat_(Vector::Zero(block_dim * static_cast<Eigen::Index>(blocks))), block_dim_(block_dim) {}
  BlockVector(Vector flat, Eigen::Index block_dim) : flat_(std::move(flat)), block_dim_(block_dim) {
    if (block_dim_ < 1 || flat_.size() % block_dim_ != 0) {
      throw DimensionError("BlockVector: flat size is not a multiple of the block dimension");
    }
  }

  [[nodiscard]] Eigen::Index block_dim() const noexcept { return block_dim_; }
  [[nodiscard]] std::size_t blocks() const noexcept {
    return block_dim_ == 0 ? 0 : static_cast<std::size_t>(flat_.size() / block_dim_);
  }
  [[nodiscard]] const Vector& flat() const noexcept { return flat_; }
  [[nodiscard]] Vector& flat() noexcept { return flat_; }

  [[nodiscard]] auto block(std::size_t i) { return flat_.segment(static_cast<Eigen::Index>(i) * block_dim_, block_dim_); }
  [[nodiscard]] auto block(std::size_t i) const {
    return flat_.segment(static_cast<Eigen::Index>(i) * block_dim_, block_dim_);
  }

  [[nodiscard]] std::vector<Vector> to_vectors() const {
    std::vector<Vector> out;
    out.reserve(blocks());
    for (std::size_t i = 0; i < blocks(); ++i) out.emplace_back(block(i));
    return out;
  }

protected:
  Vector flat_;
  Eigen::Index block_dim_ = 0;
};

/// Boundary states [x_0 .. x_N].
class ExtendedControl : public BlockVector {
public:
  using BlockVector::BlockVector;

  static ExtendedControl from_states(const std::vector<Vector>& states) {
    if (states.empty()) throw InvalidArgument("ExtendedControl: no states");
    ExtendedControl c(states.front().size(), states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      detail::require_dim(states[k].size(), c.block_dim(), "ExtendedControl state");
      c.block(k) = states[k];
    }
    return c;
  }

  [[nodiscard]] Vector state(std::size_t k) const { return block(k); }
  [[nodiscard]] std::size_t sub_intervals() const noexcept { return blocks() - 1; }
};

/// Multipliers [lambda_1 .. lambda_N]; lambda(k) is 1-based like the constraints.
class MultiplierSet : public BlockVector {
public:
  using BlockVector::BlockVector;

  [[nodiscard]] auto lambda(std::size_t k) { return block(k - 1); }
  [[nodiscard]] auto lambda(std::size_t k) const { return block(k - 1); }
};

struct AugLagParams {
  double mu = 1.0;
  std::vector<CovarianceOperator> penalty_scaling; ///< P_1..P_N

  void validate(std::size_t sub_intervals, Eigen::Index n) const {
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
      throw InvalidArgument("AugLagParams: mu must be finite and non-negative");
    }
    detail::require_dim(penalty_scaling.size(), sub_intervals, "AugLagParams P count");
    for (const auto& p : penalty_scaling) detail::require_dim(p.dim(), n, "AugLagParams P_k");
  }
};

/// N copies of one covariance, e.g. P_k = B0.
inline std::vector<CovarianceOperator> replicate(const CovarianceOperator& c, std::size_t count) {
  return std::vector<CovarianceOperator>(count, c);
}

/// Per-sub-interval forward results at one control point.
struct MismatchCache {
  Vector control;                  ///< flat control the cache was computed at
  std::vector<Vector> dx;          ///< dx[k] = Delta x_{k+1}
  std::vector<Vector> dy;          ///< dy[k] = Delta y_{k+1}; empty without observations
  std::vector<TrajectoryCheckpoint> checkpoints;

  /// max_k ||Delta x_k||_2
  [[nodiscard]] double constraint_violation() const {
    double worst = 0.0;
    for (const auto& v : dx) worst = std::max(worst, v.norm());
    return worst;
  }
};

namespace detail {

template <DynamicalModel M>
void check_auglag_inputs(const AssimilationProblem<M>& prob, const ExtendedControl& ctrl, const MultiplierSet& lam,
                         const AugLagParams& ap) {
  const std::size_t n_sub = prob.sub_intervals();
  require_dim(ctrl.block_dim(), prob.state_dim(), "augmented Lagrangian control state");
  require_dim(ctrl.blocks(), n_sub + 1, "augmented Lagrangian control blocks");
  require_dim(lam.block_dim(), prob.state_dim(), "augmented Lagrangian multiplier");
  require_dim(lam.blocks(), n_sub, "augmented Lagrangian multiplier blocks");
  ap.validate(n_sub, prob.state_dim());
}

} // namespace detail

/// Augmented Lagrangian
///   L = 1/2 |x0 - xb|^2_{B0^-1}
///     + sum_k [ 1/2 |Dy_k|^2_{R_k^-1} - lambda_k^T Dx_k + mu/2 |Dx_k|^2_{P_k^-1} ]
/// with Dx_{k+1} = x_{k+1} - M_{k,k+1}(x_k) and Dy_{k+1} = H(x_{k+1}) - y_{k+1}.
///
/// The sub-interval propagations and per-term scalars run on `pool`; the sum
/// is then taken serially in ascending k, so the result does not depend on
/// the worker count.
template <DynamicalModel M>
std::pair<double, MismatchCache> parallel_cost(const AssimilationProblem<M>& prob, const ExtendedControl& ctrl,
                                               const MultiplierSet& lam, const AugLagParams& ap, WorkerPool& pool) {
  detail::check_auglag_inputs(prob, ctrl, lam, ap);
  const std::size_t n_sub = prob.sub_intervals();
  const bool with_obs = prob.has_observations();
  MismatchCache cache;
  cache.control = ctrl.flat();
  cache.dx.resize(n_sub);
  cache.checkpoints.resize(n_sub);
  if (with_obs) cache.dy.resize(n_sub);
  std::vector<double> terms(n_sub, 0.0);

  pool.parallel_for(n_sub, [&](std::size_t k) {
    const Vector xk = ctrl.state(k);
    const Vector xk1 = ctrl.state(k + 1);
    try {
      auto [forecast, ckpt] = propagate(prob.model(), xk, prob.partition()[k]);
      cache.checkpoints[k] = std::move(ckpt);
      cache.dx[k] = xk1 - forecast;
    } catch (const NumericalError& e) {
      throw NumericalError("sub-interval " + std::to_string(k) + ": " + e.what());
    }
    double term = 0.0;
    if (with_obs) {
      cache.dy[k] = prob.observation_operator().observe(xk1) - prob.observations().y(k + 1);
      term = 0.5 * prob.observations().r(k + 1).quad_form_inv(cache.dy[k]);
    }
    term += -lam.lambda(k + 1).dot(cache.dx[k]);
    term += 0.5 * ap.mu * ap.penalty_scaling[k].quad_form_inv(cache.dx[k]);
    terms[k] = term;
  });

  double cost = 0.5 * prob.background_covariance().quad_form_inv(ctrl.state(0) - prob.background());
  for (const double t : terms) cost += t;
  return {cost, std::move(cache)};
}

/// Gradient of the augmented Lagrangian over the extended control:
///   b_{k+1} = mu P_{k+1}^-1 Dx_{k+1} - lambda_{k+1},  d_{k+1} = H^T R_{k+1}^-1 Dy_{k+1},
///   a_k = M_{k,k+1}^T b_{k+1}  (adjoint runs in parallel),
///   g_0 = B0^-1 (x0 - xb) - a_0,  g_k = b_k + d_k - a_k,  g_N = b_N + d_N.
template <DynamicalModel M>
ExtendedControl parallel_gradient(const AssimilationProblem<M>& prob, const ExtendedControl& ctrl,
                                  const MultiplierSet& lam, const AugLagParams& ap, const MismatchCache& cache,
                                  WorkerPool& pool) {
  detail::check_auglag_inputs(prob, ctrl, lam, ap);
  const std::size_t n_sub = prob.sub_intervals();
  if (cache.dx.size() != n_sub || cache.control.size() != ctrl.flat().size() || cache.control != ctrl.flat()) {
    throw InvalidArgument("parallel_gradient: cache was not computed at this control");
  }
  const bool with_obs = prob.has_observations();
  std::vector<Vector> b(n_sub), d(n_sub), a(n_sub);

  pool.parallel_for(n_sub, [&](std::size_t k) {
    b[k] = ap.mu * ap.penalty_scaling[k].apply_inverse(cache.dx[k]) - Vector(lam.lambda(k + 1));
    d[k] = with_obs ? prob.observation_operator().observe_adjoint(
                          prob.observations().r(k + 1).apply_inverse(cache.dy[k]))
                    : Vector::Zero(prob.state_dim());
    a[k] = adjoint_product(prob.model(), cache.checkpoints[k], b[k], prob.partition()[k]);
  });

  ExtendedControl grad(prob.state_dim(), n_sub + 1);
  grad.block(0) = prob.background_covariance().apply_inverse(ctrl.state(0) - prob.background()) - a[0];
  for (std::size_t k = 1; k < n_sub; ++k) {
    grad.block(k) = b[k - 1] + d[k - 1] - a[k];
  }
  grad.block(n_sub) = b[n_sub - 1] + d[n_sub - 1];
  return grad;
}

/// Single-worker convenience overloads.
template <DynamicalModel M>
std::pair<double, MismatchCache> parallel_cost(const AssimilationProblem<M>& prob, const ExtendedControl& ctrl,
                                               const MultiplierSet& lam, const AugLagParams& ap) {
  WorkerPool inline_pool(1);
  return parallel_cost(prob, ctrl, lam, ap, inline_pool);
}

template <DynamicalModel M>
ExtendedControl parallel_gradient(const AssimilationProblem<M>& prob, const ExtendedControl& ctrl,
                                  const MultiplierSet& lam, const AugLagParams& ap, const MismatchCache& cache) {
  WorkerPool inline_pool(1);
  return parallel_gradient(prob, ctrl, lam, ap, cache, inline_pool);
}

/// The consistent trajectory x_{k+1} = M_{k,k+1}(x_k) started at x0.
template <DynamicalModel M>
ExtendedControl consistent_control(const AssimilationProblem<M>& prob, const Vector& x0) {
  return ExtendedControl::from_states(boundary_trajectory(prob.model(), x0, prob.partition()));
}

/// Objective adapter over the flat extended control for fixed lambda and mu.
template <DynamicalModel M>
class AugLagObjective {
public:
  AugLagObjective(const AssimilationProblem<M>& prob, MultiplierSet lam, AugLagParams ap, WorkerPool& pool)
      : prob_(prob), lam_(std::move(lam)), ap_(std::move(ap)), pool_(pool) {}

  double value(const Vector& x) {
    const ExtendedControl ctrl(x, prob_.state_dim());
    auto [cost, cache] = parallel_cost(prob_, ctrl, lam_, ap_, pool_);
    cache_ = std::move(cache);
    return cost;
  }

  Vector gradient(const Vector& x) {
    if (!cache_ || cache_->control != x) value(x);
    const ExtendedControl ctrl(x, prob_.state_dim());
    last_violation_ = cache_->constraint_violation();
    return parallel_gradient(prob_, ctrl, lam_, ap_, *cache_, pool_).flat();
  }

  /// Constraint violation at the point of the latest gradient evaluation.
  [[nodiscard]] double last_violation() const noexcept { return last_violation_; }
  [[nodiscard]] const std::optional<MismatchCache>& cache() const noexcept { return cache_; }

private:
  const AssimilationProblem<M>& prob_;
  MultiplierSet lam_;
  AugLagParams ap_;
  WorkerPool& pool_;
  std::optional<MismatchCache> cache_;
  double last_violation_ = 0.0;
};

} // namespace pintda
