#pragma once

#include <concepts>
#include <string>

#include "pintda/errors.hpp"
#include "pintda/linalg.hpp"

namespace pintda {

/// Autonomous ODE right-hand side dx/dt = f(x) with exact Jacobian products.
///
/// Products write into a caller-provided output vector (resized as needed) so
/// the time stepper can reuse buffers across stages.
template <typename M>
concept DynamicalModel = requires(const M& m, const Vector& x, const Vector& v, Vector& out) {
  { m.dim() } -> std::convertible_to<Eigen::Index>;
  { m.rhs(x, out) };
  { m.jacobian_product(x, v, out) };
  { m.jacobian_transpose_product(x, v, out) };
};

struct Lorenz96Params {
  Eigen::Index n = 40;
  double forcing = 8.0;
};

/// dx_k/dt = x_{k-1} (x_{k+1} - x_{k-2}) - x_k + F, indices periodic.
class Lorenz96 {
public:
  explicit Lorenz96(Lorenz96Params p = {}) : p_(p) {
    if (p_.n < 4) {
      throw InvalidArgument("Lorenz96: n must be at least 4, got " + std::to_string(p_.n));
    }
    if (!std::isfinite(p_.forcing)) {
      throw InvalidArgument("Lorenz96: forcing must be finite");
    }
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return p_.n; }
  [[nodiscard]] const Lorenz96Params& params() const noexcept { return p_; }

  void rhs(const Vector& x, Vector& out) const {
    const Eigen::Index n = p_.n;
    out.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double xm2 = x[wrap(k - 2)];
      const double xm1 = x[wrap(k - 1)];
      const double xp1 = x[wrap(k + 1)];
      out[k] = xm1 * (xp1 - xm2) - x[k] + p_.forcing;
    }
  }

  void jacobian_product(const Vector& x, const Vector& v, Vector& out) const {
    const Eigen::Index n = p_.n;
    out.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index km2 = wrap(k - 2);
      const Eigen::Index km1 = wrap(k - 1);
      const Eigen::Index kp1 = wrap(k + 1);
      out[k] = v[km1] * (x[kp1] - x[km2]) + x[km1] * (v[kp1] - v[km2]) - v[k];
    }
  }

  void jacobian_transpose_product(const Vector& x, const Vector& w, Vector& out) const {
    const Eigen::Index n = p_.n;
    out.setZero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index km2 = wrap(k - 2);
      const Eigen::Index km1 = wrap(k - 1);
      const Eigen::Index kp1 = wrap(k + 1);
      out[km1] += (x[kp1] - x[km2]) * w[k];
      out[kp1] += x[km1] * w[k];
      out[km2] -= x[km1] * w[k];
      out[k] -= w[k];
    }
  }

private:
  // Mathematical modulo; k is never below -2.
  [[nodiscard]] Eigen::Index wrap(Eigen::Index k) const noexcept {
    return k < 0 ? k + p_.n : (k >= p_.n ? k - p_.n : k);
  }

  Lorenz96Params p_;
};

/// dx/dt = A x.
class LinearModel {
public:
  explicit LinearModel(Matrix a) : a_(std::move(a)) {
    if (a_.rows() == 0 || a_.rows() != a_.cols()) {
      throw InvalidArgument("LinearModel: matrix must be square and non-empty");
    }
    if (!a_.allFinite()) {
      throw InvalidArgument("LinearModel: matrix has non-finite entries");
    }
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return a_.rows(); }
  [[nodiscard]] const Matrix& matrix() const noexcept { return a_; }

  void rhs(const Vector& x, Vector& out) const { out.noalias() = a_ * x; }
  void jacobian_product(const Vector&, const Vector& v, Vector& out) const { out.noalias() = a_ * v; }
  void jacobian_transpose_product(const Vector&, const Vector& w, Vector& out) const {
    out.noalias() = a_.transpose() * w;
  }

private:
  Matrix a_;
};

static_assert(DynamicalModel<Lorenz96>);
static_assert(DynamicalModel<LinearModel>);

// Value-returning wrappers with dimension checks.

template <DynamicalModel M>
Vector model_rhs(const M& m, const Vector& x) {
  detail::require_dim(x.size(), m.dim(), "rhs");
  Vector out;
  m.rhs(x, out);
  return out;
}

template <DynamicalModel M>
Vector model_jacobian_product(const M& m, const Vector& x, const Vector& v) {
  detail::require_dim(x.size(), m.dim(), "jacobian_product state");
  detail::require_dim(v.size(), m.dim(), "jacobian_product direction");
  Vector out;
  m.jacobian_product(x, v, out);
  return out;
}

template <DynamicalModel M>
Vector model_jacobian_transpose_product(const M& m, const Vector& x, const Vector& w) {
  detail::require_dim(x.size(), m.dim(), "jacobian_transpose_product state");
  detail::require_dim(w.size(), m.dim(), "jacobian_transpose_product cotangent");
  Vector out;
  m.jacobian_transpose_product(x, w, out);
  return out;
}

inline Vector lorenz96_rhs(const Vector& x, const Lorenz96Params& p) { return model_rhs(Lorenz96(p), x); }

inline Vector lorenz96_jacobian_product(const Vector& x, const Vector& v, const Lorenz96Params& p) {
  return model_jacobian_product(Lorenz96(p), x, v);
}

inline Vector lorenz96_jacobian_transpose_product(const Vector& x, const Vector& w,
                                                  const Lorenz96Params& p) {
  return model_jacobian_transpose_product(Lorenz96(p), x, w);
}

} // namespace pintda
