#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>
#include <variant>

#include "pintda/errors.hpp"
#include "pintda/rng.hpp"

namespace pintda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Vector& v) noexcept { return v.allFinite(); }

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw InvalidArgument(std::string(what) + ": non-finite entry");
  }
}

inline double inf_norm(const Vector& v) noexcept {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

/// `count` equidistant points from `lo` to `hi` inclusive.
inline Vector linspace(double lo, double hi, Eigen::Index count) {
  Vector out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (Eigen::Index i = 0; i < count; ++i) {
    out[i] = lo + step * static_cast<double>(i);
  }
  out[count - 1] = hi;
  return out;
}

/// Symmetric positive-definite weighting operator (B0, R_k, P_k).
///
/// Diagonal operators keep their variances; dense operators are factorized
/// once with LLT at construction and rejected there if the factorization fails.
/// Immutable after construction.
class CovarianceOperator {
public:
  static CovarianceOperator diagonal(Vector variances) {
    if (variances.size() == 0) {
      throw InvalidArgument("CovarianceOperator: empty diagonal");
    }
    for (Eigen::Index i = 0; i < variances.size(); ++i) {
      if (!std::isfinite(variances[i]) || variances[i] <= 0.0) {
        throw InvalidArgument("CovarianceOperator: variance " + std::to_string(i) +
                              " is not finite and positive");
      }
    }
    return CovarianceOperator(Diagonal{std::move(variances)});
  }

  static CovarianceOperator scaled_identity(Eigen::Index dim, double variance) {
    return diagonal(Vector::Constant(dim, variance));
  }

  static CovarianceOperator identity(Eigen::Index dim) { return scaled_identity(dim, 1.0); }

  static CovarianceOperator dense(const Matrix& cov) {
    if (cov.rows() == 0 || cov.rows() != cov.cols()) {
      throw InvalidArgument("CovarianceOperator: dense matrix must be square and non-empty");
    }
    if (!cov.allFinite()) {
      throw InvalidArgument("CovarianceOperator: dense matrix has non-finite entries");
    }
    const double scale = cov.cwiseAbs().maxCoeff();
    if (!(cov - cov.transpose()).isZero(1e-12 * scale)) {
      throw InvalidArgument("CovarianceOperator: dense matrix is not symmetric");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw InvalidArgument("CovarianceOperator: dense matrix is not positive definite");
    }
    return CovarianceOperator(Dense{cov, std::move(llt)});
  }

  [[nodiscard]] Eigen::Index dim() const noexcept {
    return std::visit([](const auto& d) { return d.dim(); }, data_);
  }

  [[nodiscard]] bool is_diagonal() const noexcept {
    return std::holds_alternative<Diagonal>(data_);
  }

  /// C v
  [[nodiscard]] Vector apply(const Vector& v) const {
    detail::require_dim(v.size(), dim(), "CovarianceOperator::apply");
    if (const auto* d = std::get_if<Diagonal>(&data_)) {
      return d->variances.cwiseProduct(v);
    }
    return std::get<Dense>(data_).cov * v;
  }

  /// C^{-1} v
  [[nodiscard]] Vector apply_inverse(const Vector& v) const {
    detail::require_dim(v.size(), dim(), "CovarianceOperator::apply_inverse");
    if (const auto* d = std::get_if<Diagonal>(&data_)) {
      return v.cwiseQuotient(d->variances);
    }
    return std::get<Dense>(data_).llt.solve(v);
  }

  /// v^T C^{-1} v
  [[nodiscard]] double quad_form_inv(const Vector& v) const {
    detail::require_dim(v.size(), dim(), "CovarianceOperator::quad_form_inv");
    require_finite(v, "CovarianceOperator::quad_form_inv");
    if (const auto* d = std::get_if<Diagonal>(&data_)) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        acc += v[i] * v[i] / d->variances[i];
      }
      return acc;
    }
    const Vector w = std::get<Dense>(data_).llt.matrixL().solve(v);
    return w.squaredNorm();
  }

  /// mean + L z with C = L L^T and z standard normal drawn from `rng`.
  [[nodiscard]] Vector sample(const Vector& mean, SeededRng& rng) const {
    detail::require_dim(mean.size(), dim(), "CovarianceOperator::sample");
    Vector z(dim());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z[i] = rng.normal();
    }
    if (const auto* d = std::get_if<Diagonal>(&data_)) {
      return mean + d->variances.cwiseSqrt().cwiseProduct(z);
    }
    return mean + std::get<Dense>(data_).llt.matrixL() * z;
  }

  /// Dense matrix form; mainly for oracles and diagnostics.
  [[nodiscard]] Matrix to_dense() const {
    if (const auto* d = std::get_if<Diagonal>(&data_)) {
      return d->variances.asDiagonal();
    }
    return std::get<Dense>(data_).cov;
  }

private:
  struct Diagonal {
    Vector variances;
    [[nodiscard]] Eigen::Index dim() const noexcept { return variances.size(); }
  };
  struct Dense {
    Matrix cov;
    Eigen::LLT<Matrix> llt;
    [[nodiscard]] Eigen::Index dim() const noexcept { return cov.rows(); }
  };

  explicit CovarianceOperator(Diagonal d) : data_(std::move(d)) {}
  explicit CovarianceOperator(Dense d) : data_(std::move(d)) {}

  std::variant<Diagonal, Dense> data_;
};

inline double quad_form_inv(const CovarianceOperator& c, const Vector& v) { return c.quad_form_inv(v); }

inline Vector apply_inverse(const CovarianceOperator& c, const Vector& v) { return c.apply_inverse(v); }

inline Vector sample_gaussian(const Vector& mean, const CovarianceOperator& c, SeededRng& rng) {
  return c.sample(mean, rng);
}

} // namespace pintda
