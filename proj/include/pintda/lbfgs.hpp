#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pintda/errors.hpp"
#include "pintda/linalg.hpp"

namespace pintda {

/// Cost-with-gradient callable. gradient(x) is only ever requested right after
/// value(x) at the same x, so implementations may reuse forward state.
template <typename F>
concept Objective = requires(F& f, const Vector& x) {
  { f.value(x) } -> std::convertible_to<double>;
  { f.gradient(x) } -> std::convertible_to<Vector>;
};

struct OptimizerConfig {
  int memory = 10;
  double grad_tol = 1e-6;     ///< on ||grad||_inf
  double grad_tol_rel = 0.0;  ///< also stop at grad_tol_rel * ||grad(x_init)||_inf
  int max_iters = 1000;
  long max_evals = 20000; ///< cost evaluations
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;

  void validate() const {
    if (memory < 1) throw InvalidArgument("optimizer: memory >= 1 required");
    if (!(grad_tol >= 0.0)) throw InvalidArgument("optimizer: grad_tol >= 0 required");
    if (!(grad_tol_rel >= 0.0)) throw InvalidArgument("optimizer: grad_tol_rel >= 0 required");
    if (max_iters < 0) throw InvalidArgument("optimizer: max_iters >= 0 required");
    if (max_evals < 1) throw InvalidArgument("optimizer: max_evals >= 1 required");
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw InvalidArgument("optimizer: 0 < c1 < c2 < 1 required");
    if (max_line_search < 1) throw InvalidArgument("optimizer: max_line_search >= 1 required");
  }
};

enum class Termination { converged, max_iterations, max_evaluations, line_search_failed, failed };

inline std::string_view to_string(Termination t) {
  switch (t) {
  case Termination::converged: return "converged";
  case Termination::max_iterations: return "max_iterations";
  case Termination::max_evaluations: return "max_evaluations";
  case Termination::line_search_failed: return "line_search_failed";
  case Termination::failed: return "failed";
  }
  return "unknown";
}

enum class Phase { serial, parallel };

inline std::string_view to_string(Phase p) { return p == Phase::serial ? "serial" : "parallel"; }

/// One accepted iterate. Counters are cumulative over the whole solve.
struct IterationRecord {
  int iteration = 0;
  Phase phase = Phase::serial;
  int outer = -1; ///< outer iteration for augmented-Lagrangian phases, -1 otherwise
  double cost = 0.0;
  double grad_norm = 0.0;
  double constraint_violation = 0.0;
  long cost_evals = 0;
  long grad_evals = 0;
  double elapsed_s = 0.0;
};

/// Per outer iteration of the method of multipliers.
struct OuterRecord {
  int outer = 0;
  double mu = 0.0;
  int inner_iterations = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double constraint_violation = 0.0;
  std::optional<double> distance_to_serial;
  long cost_evals = 0;
  long grad_evals = 0;
  double elapsed_s = 0.0;
  Termination inner_termination = Termination::converged;
};

struct SolveReport {
  Vector x_final;
  double f_final = 0.0;
  double grad_norm_final = 0.0;
  int iterations = 0;
  long cost_evals = 0;
  long grad_evals = 0;
  std::vector<IterationRecord> trace;
  double wall_time_s = 0.0;
  Termination termination = Termination::failed;
  std::string message;

  // Augmented-Lagrangian and hybrid solves only.
  std::vector<OuterRecord> outer_trace;
  std::vector<std::vector<Vector>> outer_iterates; ///< boundary states x_0..x_N after each outer iteration
  std::optional<std::size_t> phase_boundary;       ///< index into trace where the serial phase starts
};

/// Hook applied to each record before it is appended; lets callers stamp
/// phase, outer index and constraint violation.
using IterationHook = std::function<void(IterationRecord&)>;

namespace detail {

struct LinePoint {
  double alpha = 0.0;
  double phi = 0.0;
  std::optional<double> dphi;
};

struct LineSearchResult {
  bool ok = false;
  bool budget_exhausted = false;
  Vector x;
  double f = 0.0;
  Vector g;
};

template <Objective F>
class Evaluator {
public:
  Evaluator(F& f, long max_evals) : f_(f), max_evals_(max_evals) {}

  /// Trial evaluation: blow-up maps to +inf so the line search backs off.
  double value(const Vector& x) {
    ++cost_evals;
    try {
      const double v = f_.value(x);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  Vector gradient(const Vector& x) {
    ++grad_evals;
    return f_.gradient(x);
  }

  [[nodiscard]] bool budget_left() const noexcept { return cost_evals < max_evals_; }

  long cost_evals = 0;
  long grad_evals = 0;

private:
  F& f_;
  long max_evals_;
};

/// Minimizer of the cubic through (a, fa, ga), (b, fb, gb), or NaN.
inline double cubic_minimizer(double a, double fa, double ga, double b, double fb, double gb) {
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  return b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
}

/// Minimizer of the quadratic through (a, fa, ga) and (b, fb), or NaN.
inline double quadratic_minimizer(double a, double fa, double ga, double b, double fb) {
  const double w = b - a;
  const double denom = 2.0 * (fb - fa - ga * w);
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return a - ga * w * w / denom;
}

/// Strong-Wolfe line search (bracketing then zoom with safeguarded cubic or
/// quadratic interpolation). The gradient is only evaluated at points that
/// already satisfy sufficient decrease.
template <Objective F>
LineSearchResult strong_wolfe(Evaluator<F>& ev, const Vector& x, double f0, const Vector& d, double dphi0,
                              double alpha_init, const OptimizerConfig& cfg) {
  LineSearchResult res;
  const double armijo_slope = cfg.c1 * dphi0;
  const double curvature_bound = -cfg.c2 * dphi0;
  int budget = cfg.max_line_search;

  auto accept = [&](double alpha, double f, Vector g) {
    res.ok = true;
    res.x = x + alpha * d;
    res.f = f;
    res.g = std::move(g);
    return res;
  };

  auto zoom = [&](LinePoint lo, LinePoint hi) -> LineSearchResult {
    while (budget-- > 0) {
      if (!ev.budget_left()) {
        res.budget_exhausted = true;
        break;
      }
      const double width = std::abs(hi.alpha - lo.alpha);
      if (width <= 1e-14 * std::max(1.0, std::abs(lo.alpha))) break;
      double trial = std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(hi.phi)) {
        trial = hi.dphi ? cubic_minimizer(lo.alpha, lo.phi, *lo.dphi, hi.alpha, hi.phi, *hi.dphi)
                        : quadratic_minimizer(lo.alpha, lo.phi, *lo.dphi, hi.alpha, hi.phi);
      }
      const double left = std::min(lo.alpha, hi.alpha) + 0.1 * width;
      const double right = std::max(lo.alpha, hi.alpha) - 0.1 * width;
      if (!std::isfinite(trial)) trial = 0.5 * (lo.alpha + hi.alpha);
      trial = std::clamp(trial, left, right);

      const double phi = ev.value(x + trial * d);
      if (!std::isfinite(phi) || phi > f0 + trial * armijo_slope || phi >= lo.phi) {
        hi = {trial, phi, std::nullopt};
        continue;
      }
      Vector g = ev.gradient(x + trial * d);
      const double dphi = g.dot(d);
      if (std::abs(dphi) <= curvature_bound) return accept(trial, phi, std::move(g));
      if (dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = {trial, phi, dphi};
    }
    // Fall back to the best sufficient-decrease point seen. Re-evaluate it so
    // that the objective's cached state matches the accepted iterate.
    if (lo.alpha > 0.0 && lo.phi < f0) {
      const Vector xl = x + lo.alpha * d;
      const double phi = ev.value(xl);
      if (std::isfinite(phi)) return accept(lo.alpha, phi, ev.gradient(xl));
    }
    return res;
  };

  LinePoint prev{0.0, f0, dphi0};
  double alpha = alpha_init;
  for (int i = 0; budget-- > 0; ++i) {
    if (!ev.budget_left()) {
      res.budget_exhausted = true;
      return res;
    }
    const double phi = ev.value(x + alpha * d);
    if (!std::isfinite(phi) || phi > f0 + alpha * armijo_slope || (i > 0 && phi >= prev.phi)) {
      return zoom(prev, {alpha, phi, std::nullopt});
    }
    Vector g = ev.gradient(x + alpha * d);
    const double dphi = g.dot(d);
    if (std::abs(dphi) <= curvature_bound) return accept(alpha, phi, std::move(g));
    if (dphi >= 0.0) return zoom({alpha, phi, dphi}, prev);
    prev = {alpha, phi, dphi};
    alpha *= 2.0;
  }
  return res;
}

} // namespace detail

/// Unbounded L-BFGS with two-loop recursion and a strong-Wolfe line search.
///
/// Terminates on ||grad||_inf <= grad_tol, max_iters, max_evals or line-search
/// failure (best iterate kept). A non-finite cost or gradient at x_init throws.
template <Objective F>
SolveReport minimize(F& f, const Vector& x_init, const OptimizerConfig& cfg, const IterationHook& hook = {}) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  detail::Evaluator<F> ev(f, cfg.max_evals);
  SolveReport rep;
  Vector x = x_init;
  ++ev.cost_evals;
  double fx = f.value(x);
  if (!std::isfinite(fx)) throw NumericalError("minimize: non-finite cost at initial point");
  Vector g = ev.gradient(x);
  if (!g.allFinite()) throw NumericalError("minimize: non-finite gradient at initial point");

  auto record = [&](int iter) {
    IterationRecord r;
    r.iteration = iter;
    r.cost = fx;
    r.grad_norm = inf_norm(g);
    r.cost_evals = ev.cost_evals;
    r.grad_evals = ev.grad_evals;
    r.elapsed_s = elapsed();
    if (hook) hook(r);
    rep.trace.push_back(r);
  };
  record(0);
  const double tol = std::max(cfg.grad_tol, cfg.grad_tol_rel * inf_norm(g));

  struct Pair {
    Vector s, y;
    double rho;
  };
  std::deque<Pair> mem;
  int iter = 0;
  Termination why = Termination::failed;
  while (true) {
    if (inf_norm(g) <= tol) {
      why = Termination::converged;
      break;
    }
    if (iter >= cfg.max_iters) {
      why = Termination::max_iterations;
      break;
    }
    if (!ev.budget_left()) {
      why = Termination::max_evaluations;
      break;
    }

    // Two-loop recursion.
    Vector q = -g;
    std::vector<double> alphas(mem.size());
    for (std::size_t i = mem.size(); i-- > 0;) {
      alphas[i] = mem[i].rho * mem[i].s.dot(q);
      q -= alphas[i] * mem[i].y;
    }
    if (!mem.empty()) {
      const auto& last = mem.back();
      q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t i = 0; i < mem.size(); ++i) {
      const double beta = mem[i].rho * mem[i].y.dot(q);
      q += (alphas[i] - beta) * mem[i].s;
    }
    Vector d = std::move(q);
    double dphi0 = g.dot(d);
    if (!(dphi0 < 0.0)) {
      mem.clear();
      d = -g;
      dphi0 = -g.squaredNorm();
    }
    const double alpha0 = mem.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;

    auto ls = detail::strong_wolfe(ev, x, fx, d, dphi0, alpha0, cfg);
    if (!ls.ok) {
      why = ls.budget_exhausted ? Termination::max_evaluations : Termination::line_search_failed;
      break;
    }
    Vector s = ls.x - x;
    Vector y = ls.g - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      if (static_cast<int>(mem.size()) == cfg.memory) mem.pop_front();
      mem.push_back({std::move(s), std::move(y), 1.0 / sy});
    }
    x = std::move(ls.x);
    fx = ls.f;
    g = std::move(ls.g);
    ++iter;
    record(iter);
  }

  rep.x_final = std::move(x);
  rep.f_final = fx;
  rep.grad_norm_final = inf_norm(g);
  rep.iterations = iter;
  rep.cost_evals = ev.cost_evals;
  rep.grad_evals = ev.grad_evals;
  rep.termination = why;
  rep.wall_time_s = elapsed();
  return rep;
}

} // namespace pintda
