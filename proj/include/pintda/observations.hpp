#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pintda/errors.hpp"
#include "pintda/linalg.hpp"
#include "pintda/rng.hpp"
#include "pintda/timestepper.hpp"

namespace pintda {

/// Linear observation operator H: identity or a component selection.
class ObservationOperator {
public:
  static ObservationOperator identity(Eigen::Index state_dim) {
    if (state_dim < 1) {
      throw InvalidArgument("ObservationOperator: state dimension must be positive");
    }
    return ObservationOperator(state_dim, {});
  }

  static ObservationOperator selection(Eigen::Index state_dim, std::vector<Eigen::Index> indices) {
    if (indices.empty()) {
      throw InvalidArgument("ObservationOperator: selection needs at least one index");
    }
    std::vector<Eigen::Index> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("ObservationOperator: selection indices must be distinct");
    }
    if (sorted.front() < 0 || sorted.back() >= state_dim) {
      throw InvalidArgument("ObservationOperator: selection index outside state dimension " +
                            std::to_string(state_dim));
    }
    return ObservationOperator(state_dim, std::move(indices));
  }

  [[nodiscard]] bool is_identity() const noexcept { return indices_.empty(); }
  [[nodiscard]] Eigen::Index state_dim() const noexcept { return n_; }
  [[nodiscard]] Eigen::Index obs_dim() const noexcept {
    return is_identity() ? n_ : static_cast<Eigen::Index>(indices_.size());
  }
  [[nodiscard]] const std::vector<Eigen::Index>& indices() const noexcept { return indices_; }

  [[nodiscard]] Vector observe(const Vector& x) const {
    detail::require_dim(x.size(), n_, "observe");
    if (is_identity()) {
      return x;
    }
    Vector y(obs_dim());
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      y[static_cast<Eigen::Index>(i)] = x[indices_[i]];
    }
    return y;
  }

  /// H^T w (scatter).
  [[nodiscard]] Vector observe_adjoint(const Vector& w) const {
    detail::require_dim(w.size(), obs_dim(), "observe_adjoint");
    if (is_identity()) {
      return w;
    }
    Vector x = Vector::Zero(n_);
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      x[indices_[i]] = w[static_cast<Eigen::Index>(i)];
    }
    return x;
  }

private:
  ObservationOperator(Eigen::Index n, std::vector<Eigen::Index> indices) : n_(n), indices_(std::move(indices)) {}

  Eigen::Index n_;
  std::vector<Eigen::Index> indices_;
};

inline Vector observe(const ObservationOperator& h, const Vector& x) { return h.observe(x); }
inline Vector observe_adjoint(const ObservationOperator& h, const Vector& w) { return h.observe_adjoint(w); }

/// y_k and R_k at the boundaries t_1..t_N; values[k-1] belongs to t_k.
/// An empty set means the cost has no observation terms.
struct ObservationSet {
  std::vector<Vector> values;
  std::vector<CovarianceOperator> covariances;

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] bool empty() const noexcept { return values.empty(); }
  [[nodiscard]] const Vector& y(std::size_t k) const { return values.at(k - 1); }
  [[nodiscard]] const CovarianceOperator& r(std::size_t k) const { return covariances.at(k - 1); }
};

/// Boundary states x_0..x_N of the model trajectory started at x0.
template <DynamicalModel M>
std::vector<Vector> boundary_trajectory(const M& model, const Vector& x0, const std::vector<SubInterval>& partition) {
  std::vector<Vector> out;
  out.reserve(partition.size() + 1);
  out.push_back(x0);
  for (const auto& iv : partition) {
    out.push_back(advance(model, out.back(), iv));
  }
  return out;
}

/// Mean of |x_i| over every component of every state in `traj`.
inline double average_magnitude(const std::vector<Vector>& traj) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (const auto& x : traj) {
    sum += x.cwiseAbs().sum();
    count += x.size();
  }
  if (count == 0) {
    throw InvalidArgument("average_magnitude: empty trajectory");
  }
  return sum / static_cast<double>(count);
}

/// Twin-experiment observations y_k = H(x_k^ref) + eta_k at t_1..t_N.
///
/// R_k is diagonal with standard deviation weight_pct * (average magnitude of
/// the reference boundary states t_0..t_N); weight_pct defaults to noise_pct.
/// eta_k ~ N(0, R_k) is drawn with standard deviation noise_pct * magnitude, so
/// noise_pct = 0 gives exact observations.
template <DynamicalModel M>
ObservationSet generate_observations(const M& model, const Vector& x_ref0, const std::vector<SubInterval>& partition,
                                     const ObservationOperator& h, double noise_pct, SeededRng& rng,
                                     std::optional<double> weight_pct = std::nullopt) {
  if (!(noise_pct >= 0.0) || !std::isfinite(noise_pct)) {
    throw InvalidArgument("generate_observations: noise_pct must be >= 0");
  }
  const double weight = weight_pct.value_or(noise_pct);
  if (!(weight > 0.0) || !std::isfinite(weight)) {
    throw InvalidArgument("generate_observations: observation error weight must be > 0 "
                          "(set weight_pct when noise_pct is 0)");
  }
  const auto traj = boundary_trajectory(model, x_ref0, partition);
  const double magnitude = average_magnitude(traj);
  const double sigma_weight = weight * magnitude;
  const double sigma_noise = noise_pct * magnitude;

  ObservationSet obs;
  obs.values.reserve(partition.size());
  obs.covariances.reserve(partition.size());
  for (std::size_t k = 1; k < traj.size(); ++k) {
    Vector y = h.observe(traj[k]);
    if (sigma_noise > 0.0) {
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        y[i] += sigma_noise * rng.normal();
      }
    }
    obs.values.push_back(std::move(y));
    obs.covariances.push_back(CovarianceOperator::scaled_identity(h.obs_dim(), sigma_weight * sigma_weight));
  }
  return obs;
}

} // namespace pintda
