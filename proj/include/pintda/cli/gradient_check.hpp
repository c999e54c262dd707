#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pintda/auglag.hpp"
#include "pintda/cli/config.hpp"
#include "pintda/outer_loop.hpp"
#include "pintda/rng.hpp"
#include "pintda/serial_4dvar.hpp"

namespace pintda::cli {

struct DirectionalCheck {
  std::string suite;
  double max_rel_error = 0.0;
  int worst_direction = -1;
  Eigen::Index worst_coordinate = -1; ///< largest entry of the worst direction
  double fd = 0.0;                    ///< central difference along the worst direction
  double adjoint = 0.0;               ///< gradient . direction along the worst direction
};

/// rel = |fd - ad| / max(|fd|, |ad|, floor)
inline double relative_error(double fd, double ad, double floor) {
  return std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), floor});
}

/// Compares grad . d against (f(x + eps d) - f(x - eps d)) / (2 eps) over
/// random unit directions d.
inline DirectionalCheck directional_check(std::string suite, const std::function<double(const Vector&)>& f,
                                          const Vector& x, const Vector& grad, const GradientCheckConfig& cfg,
                                          SeededRng& rng) {
  DirectionalCheck out;
  out.suite = std::move(suite);
  for (int i = 0; i < cfg.directions; ++i) {
    Vector d(x.size());
    for (Eigen::Index j = 0; j < d.size(); ++j) d(j) = rng.normal();
    d /= d.norm();
    const double fd = (f(x + cfg.epsilon * d) - f(x - cfg.epsilon * d)) / (2.0 * cfg.epsilon);
    const double ad = grad.dot(d);
    const double rel = relative_error(fd, ad, cfg.denominator_floor);
    if (out.worst_direction < 0 || rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_direction = i;
      d.cwiseAbs().maxCoeff(&out.worst_coordinate);
      out.fd = fd;
      out.adjoint = ad;
    }
  }
  return out;
}

/// Serial gradient at the background, and the augmented-Lagrangian gradient
/// at a perturbed consistent control with random multipliers and penalty
/// cfg.mu.
template <DynamicalModel M>
std::vector<DirectionalCheck> run_gradient_checks(const AssimilationProblem<M>& prob, const RunConfig& run) {
  const auto& cfg = run.gradient_check;
  const double corrupt = cfg.corrupt_gradient ? 1.01 : 1.0;
  SeededRng rng = SeededRng(run.twin.seed).derive(2);
  std::vector<DirectionalCheck> out;

  {
    const Vector& x = prob.background();
    auto [cost, traj] = serial_cost(prob, x);
    const Vector grad = corrupt * serial_gradient(prob, x, traj);
    auto f = [&](const Vector& v) { return serial_cost(prob, v).first; };
    out.push_back(directional_check("serial", f, x, grad, cfg, rng));
  }
  {
    ExtendedControl ctrl = consistent_control(prob, prob.background());
    for (Eigen::Index j = 0; j < ctrl.flat().size(); ++j) ctrl.flat()(j) += cfg.control_perturbation * rng.normal();
    MultiplierSet lam(prob.state_dim(), prob.sub_intervals());
    for (Eigen::Index j = 0; j < lam.flat().size(); ++j) lam.flat()(j) = cfg.multiplier_scale * rng.normal();
    const AugLagParams ap{cfg.mu, penalty_scaling(prob, run.twin.outer.penalty_scaling)};

    auto [cost, cache] = parallel_cost(prob, ctrl, lam, ap);
    const Vector grad = corrupt * parallel_gradient(prob, ctrl, lam, ap, cache).flat();
    ExtendedControl probe = ctrl;
    auto f = [&](const Vector& v) {
      probe.flat() = v;
      return parallel_cost(prob, probe, lam, ap).first;
    };
    out.push_back(directional_check("augmented_lagrangian", f, ctrl.flat(), grad, cfg, rng));
  }
  return out;
}

} // namespace pintda::cli
