#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pintda/errors.hpp"
#include "pintda/linalg.hpp"
#include "pintda/models.hpp"
#include "pintda/observations.hpp"
#include "pintda/timestepper.hpp"

namespace pintda {

/// N contiguous sub-intervals of `steps` RK4 steps each, all sharing step h.
inline std::vector<SubInterval> uniform_partition(double t0, int sub_intervals, int steps, double h) {
  if (sub_intervals < 1) {
    throw InvalidArgument("uniform_partition: need at least one sub-interval");
  }
  std::vector<SubInterval> out;
  out.reserve(static_cast<std::size_t>(sub_intervals));
  const double length = h * static_cast<double>(steps);
  for (int k = 0; k < sub_intervals; ++k) {
    out.push_back(SubInterval::with_step(t0 + length * static_cast<double>(k), steps, h));
  }
  return out;
}

inline void validate_partition(const std::vector<SubInterval>& partition) {
  if (partition.empty()) {
    throw InvalidArgument("partition: need at least one sub-interval");
  }
  for (std::size_t k = 1; k < partition.size(); ++k) {
    const double prev_end = partition[k - 1].t_end();
    const double start = partition[k].t_start();
    const double tol = 1e-12 * std::max({1.0, std::abs(prev_end), std::abs(start)});
    if (std::abs(prev_end - start) > tol) {
      throw InvalidArgument("partition: sub-interval " + std::to_string(k) +
                            " does not start where the previous one ends");
    }
  }
}

/// One strong-constraint 4D-Var instance: model, window partition,
/// observations at t_1..t_N, background x_b and B0. Immutable.
template <DynamicalModel M>
class AssimilationProblem {
public:
  AssimilationProblem(M model, std::vector<SubInterval> partition, ObservationOperator h, ObservationSet obs,
                      Vector background, CovarianceOperator b0)
      : model_(std::move(model)), partition_(std::move(partition)), h_(std::move(h)), obs_(std::move(obs)),
        xb_(std::move(background)), b0_(std::move(b0)) {
    validate_partition(partition_);
    const Eigen::Index n = model_.dim();
    detail::require_dim(h_.state_dim(), n, "AssimilationProblem observation operator");
    detail::require_dim(xb_.size(), n, "AssimilationProblem background");
    detail::require_dim(b0_.dim(), n, "AssimilationProblem B0");
    require_finite(xb_, "AssimilationProblem background");
    if (!obs_.empty()) {
      detail::require_dim(obs_.values.size(), partition_.size(), "AssimilationProblem observation count");
      detail::require_dim(obs_.covariances.size(), partition_.size(), "AssimilationProblem covariance count");
      for (std::size_t k = 0; k < obs_.values.size(); ++k) {
        detail::require_dim(obs_.values[k].size(), h_.obs_dim(), "AssimilationProblem observation");
        detail::require_dim(obs_.covariances[k].dim(), h_.obs_dim(), "AssimilationProblem R_k");
        require_finite(obs_.values[k], "AssimilationProblem observation");
      }
    }
  }

  [[nodiscard]] const M& model() const noexcept { return model_; }
  [[nodiscard]] const std::vector<SubInterval>& partition() const noexcept { return partition_; }
  [[nodiscard]] const ObservationOperator& observation_operator() const noexcept { return h_; }
  [[nodiscard]] const ObservationSet& observations() const noexcept { return obs_; }
  [[nodiscard]] const Vector& background() const noexcept { return xb_; }
  [[nodiscard]] const CovarianceOperator& background_covariance() const noexcept { return b0_; }

  [[nodiscard]] Eigen::Index state_dim() const noexcept { return model_.dim(); }
  [[nodiscard]] std::size_t sub_intervals() const noexcept { return partition_.size(); }
  [[nodiscard]] bool has_observations() const noexcept { return !obs_.empty(); }

  /// Same model, background and H over another partition.
  [[nodiscard]] AssimilationProblem with_partition(std::vector<SubInterval> partition, ObservationSet obs) const {
    return AssimilationProblem(model_, std::move(partition), h_, std::move(obs), xb_, b0_);
  }

private:
  M model_;
  std::vector<SubInterval> partition_;
  ObservationOperator h_;
  ObservationSet obs_;
  Vector xb_;
  CovarianceOperator b0_;
};

} // namespace pintda
