#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pintda/errors.hpp"
#include "pintda/linalg.hpp"
#include "pintda/models.hpp"

namespace pintda {

/// One piece [t_start, t_end] of the assimilation window, covered by `steps`
/// fixed RK4 steps of size h.
class SubInterval {
public:
  SubInterval(double t_start, double t_end, int steps)
      : SubInterval(t_start, steps, (t_end - t_start) / static_cast<double>(steps), t_end) {}

  /// Uniform-partition constructor: the step size is given exactly so that
  /// all sub-intervals of a partition share a bitwise-identical h.
  static SubInterval with_step(double t_start, int steps, double h) {
    return SubInterval(t_start, steps, h, t_start + h * static_cast<double>(steps));
  }

  [[nodiscard]] double t_start() const noexcept { return t_start_; }
  [[nodiscard]] double t_end() const noexcept { return t_end_; }
  [[nodiscard]] int steps() const noexcept { return steps_; }
  [[nodiscard]] double step_size() const noexcept { return h_; }

  friend bool operator==(const SubInterval&, const SubInterval&) = default;

private:
  SubInterval(double t_start, int steps, double h, double t_end)
      : t_start_(t_start), t_end_(t_end), steps_(steps), h_(h) {
    if (steps_ < 1) {
      throw InvalidArgument("SubInterval: steps must be positive");
    }
    if (!std::isfinite(t_start_) || !std::isfinite(t_end_) || !(t_end_ > t_start_) || !(h_ > 0.0)) {
      throw InvalidArgument("SubInterval: require finite t_end > t_start");
    }
  }

  double t_start_;
  double t_end_;
  int steps_;
  double h_;
};

/// Forward RK4 trajectory over one sub-interval, kept for the tangent-linear
/// and adjoint sweeps. `stages[3*i + j]` holds the input state of RK stage j+2
/// of step i (stage 1 input is states[i]).
struct TrajectoryCheckpoint {
  std::vector<Vector> states;
  std::vector<Vector> stages;
  int steps = 0;
  double step_size = 0.0;

  [[nodiscard]] bool matches(const SubInterval& iv) const noexcept {
    return steps == iv.steps() && step_size == iv.step_size() &&
           states.size() == static_cast<std::size_t>(steps) + 1 &&
           stages.size() == 3 * static_cast<std::size_t>(steps);
  }
};

namespace detail {

template <DynamicalModel M>
struct Rk4Workspace {
  Vector k1, k2, k3, k4, x2, x3, x4;
};

/// One classical RK4 step in place. Stage inputs are left in ws.x2..x4.
template <DynamicalModel M>
void rk4_step(const M& model, Vector& x, double h, Rk4Workspace<M>& ws) {
  const double half = 0.5 * h;
  model.rhs(x, ws.k1);
  ws.x2 = x + half * ws.k1;
  model.rhs(ws.x2, ws.k2);
  ws.x3 = x + half * ws.k2;
  model.rhs(ws.x3, ws.k3);
  ws.x4 = x + h * ws.k3;
  model.rhs(ws.x4, ws.k4);
  x += (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
}

inline void require_finite_step(const Vector& x, int step, const SubInterval& iv) {
  if (!x.allFinite()) {
    throw NumericalError("propagate: non-finite state after step " + std::to_string(step + 1) + " of " +
                         std::to_string(iv.steps()) + " on [" + std::to_string(iv.t_start()) + ", " +
                         std::to_string(iv.t_end()) + "]");
  }
}

inline void require_checkpoint(const TrajectoryCheckpoint& ckpt, const SubInterval& iv, const char* what) {
  if (!ckpt.matches(iv)) {
    throw InvalidArgument(std::string(what) + ": checkpoint does not belong to this sub-interval");
  }
}

} // namespace detail

/// M_{k,k+1}(x) with its checkpoint.
template <DynamicalModel M>
std::pair<Vector, TrajectoryCheckpoint> propagate(const M& model, const Vector& x, const SubInterval& iv) {
  detail::require_dim(x.size(), model.dim(), "propagate");
  require_finite(x, "propagate");
  TrajectoryCheckpoint ckpt;
  ckpt.steps = iv.steps();
  ckpt.step_size = iv.step_size();
  ckpt.states.reserve(static_cast<std::size_t>(iv.steps()) + 1);
  ckpt.stages.reserve(3 * static_cast<std::size_t>(iv.steps()));
  ckpt.states.push_back(x);

  detail::Rk4Workspace<M> ws;
  Vector state = x;
  for (int i = 0; i < iv.steps(); ++i) {
    detail::rk4_step(model, state, iv.step_size(), ws);
    detail::require_finite_step(state, i, iv);
    ckpt.stages.push_back(ws.x2);
    ckpt.stages.push_back(ws.x3);
    ckpt.stages.push_back(ws.x4);
    ckpt.states.push_back(state);
  }
  return {std::move(state), std::move(ckpt)};
}

/// M_{k,k+1}(x) without storing a checkpoint; bitwise equal to propagate().first.
template <DynamicalModel M>
Vector advance(const M& model, const Vector& x, const SubInterval& iv) {
  detail::require_dim(x.size(), model.dim(), "advance");
  require_finite(x, "advance");
  detail::Rk4Workspace<M> ws;
  Vector state = x;
  for (int i = 0; i < iv.steps(); ++i) {
    detail::rk4_step(model, state, iv.step_size(), ws);
    detail::require_finite_step(state, i, iv);
  }
  return state;
}

/// Every step endpoint of the sub-interval, states[0] == x.
template <DynamicalModel M>
std::vector<Vector> step_states(const M& model, const Vector& x, const SubInterval& iv) {
  detail::require_dim(x.size(), model.dim(), "step_states");
  detail::Rk4Workspace<M> ws;
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(iv.steps()) + 1);
  out.push_back(x);
  Vector state = x;
  for (int i = 0; i < iv.steps(); ++i) {
    detail::rk4_step(model, state, iv.step_size(), ws);
    detail::require_finite_step(state, i, iv);
    out.push_back(state);
  }
  return out;
}

/// Derivative of the discrete RK4 map applied to v.
template <DynamicalModel M>
Vector tlm_product(const M& model, const TrajectoryCheckpoint& ckpt, const Vector& v, const SubInterval& iv) {
  detail::require_checkpoint(ckpt, iv, "tlm_product");
  detail::require_dim(v.size(), model.dim(), "tlm_product");
  const double h = iv.step_size();
  const double half = 0.5 * h;
  Vector dv = v;
  Vector d1, d2, d3, d4, tmp;
  for (int i = 0; i < iv.steps(); ++i) {
    const auto s = static_cast<std::size_t>(i);
    model.jacobian_product(ckpt.states[s], dv, d1);
    tmp = dv + half * d1;
    model.jacobian_product(ckpt.stages[3 * s], tmp, d2);
    tmp = dv + half * d2;
    model.jacobian_product(ckpt.stages[3 * s + 1], tmp, d3);
    tmp = dv + h * d3;
    model.jacobian_product(ckpt.stages[3 * s + 2], tmp, d4);
    dv += (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
  }
  return dv;
}

/// Exact transpose of tlm_product: M^T_{k,k+1} w.
template <DynamicalModel M>
Vector adjoint_product(const M& model, const TrajectoryCheckpoint& ckpt, const Vector& w, const SubInterval& iv) {
  detail::require_checkpoint(ckpt, iv, "adjoint_product");
  detail::require_dim(w.size(), model.dim(), "adjoint_product");
  const double h = iv.step_size();
  const double half = 0.5 * h;
  const double sixth = h / 6.0;
  Vector lam = w;
  Vector u1, u2, u3, u4, g;
  for (int i = iv.steps() - 1; i >= 0; --i) {
    const auto s = static_cast<std::size_t>(i);
    g = sixth * lam;
    model.jacobian_transpose_product(ckpt.stages[3 * s + 2], g, u4);
    g = (2.0 * sixth) * lam + h * u4;
    model.jacobian_transpose_product(ckpt.stages[3 * s + 1], g, u3);
    g = (2.0 * sixth) * lam + half * u3;
    model.jacobian_transpose_product(ckpt.stages[3 * s], g, u2);
    g = sixth * lam + half * u2;
    model.jacobian_transpose_product(ckpt.states[s], g, u1);
    lam += u1 + u2 + u3 + u4;
  }
  return lam;
}

} // namespace pintda
