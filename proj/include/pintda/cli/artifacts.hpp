#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "pintda/cli/config.hpp"
#include "pintda/harness.hpp"

namespace pintda::cli {

/// Wall-clock time per row lives in report.json ("timing.iteration_elapsed_s")
/// so that this file is reproducible byte for byte.
inline constexpr std::string_view convergence_header =
    "iter,phase,outer,cost,grad_norm,constraint_violation,cost_evals,grad_evals";
inline constexpr std::string_view scaling_header = "k,workers,cost_eval_ms,grad_eval_ms,solve_s";

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes via a sibling temp file and a rename, so readers see either the
/// complete file or none.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::string trajectory_header(Eigen::Index n) {
  std::string h = "series,sub_interval,step,time";
  for (Eigen::Index i = 0; i < n; ++i) h += ",x" + std::to_string(i);
  return h;
}

inline void append_row(std::string& out, std::string_view series, std::size_t sub, int step, double time,
                       const Vector& x) {
  out += series;
  out += ',' + std::to_string(sub) + ',' + std::to_string(step) + ',' + format_double(time);
  for (Eigen::Index i = 0; i < x.size(); ++i) out += ',' + format_double(x(i));
  out += '\n';
}

/// Rows of a continuous trajectory stored as every step from t_0; boundary
/// states appear at the end of one sub-interval and the start of the next.
inline void append_continuous(std::string& out, std::string_view series, const std::vector<Vector>& traj,
                              const std::vector<SubInterval>& partition) {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < partition.size(); ++k) {
    const auto& iv = partition[k];
    for (int s = 0; s <= iv.steps(); ++s) {
      append_row(out, series, k, s, iv.t_start() + s * iv.step_size(), traj.at(offset + static_cast<std::size_t>(s)));
    }
    offset += static_cast<std::size_t>(iv.steps());
  }
}

} // namespace detail

/// analysis_trajectory.csv: reference, background and analysis over the
/// window, plus one series per outer iteration in which every sub-interval is
/// propagated from its own control state (discontinuous at boundaries).
template <DynamicalModel M>
std::string trajectory_csv(const M& model, const ExperimentReport& rep, const std::vector<SubInterval>& partition) {
  std::string out = detail::trajectory_header(model.dim()) + '\n';
  detail::append_continuous(out, "reference", rep.reference_trajectory, partition);
  detail::append_continuous(out, "background", rep.background_trajectory, partition);
  detail::append_continuous(out, "analysis", rep.analysis_trajectory, partition);
  for (std::size_t l = 0; l < rep.solve.outer_iterates.size(); ++l) {
    const auto& ctrl = rep.solve.outer_iterates[l];
    const std::string series = "outer_" + std::to_string(l);
    for (std::size_t k = 0; k < partition.size(); ++k) {
      const auto& iv = partition[k];
      const auto states = step_states(model, ctrl.at(k), iv);
      for (int s = 0; s <= iv.steps(); ++s) {
        detail::append_row(out, series, k, s, iv.t_start() + s * iv.step_size(), states[static_cast<std::size_t>(s)]);
      }
    }
  }
  return out;
}

inline std::string convergence_csv(const std::vector<IterationRecord>& trace) {
  std::string out(convergence_header);
  out += '\n';
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + ',' + std::string(to_string(r.phase)) + ',' + std::to_string(r.outer) + ',' +
           format_double(r.cost) + ',' + format_double(r.grad_norm) + ',' + format_double(r.constraint_violation) +
           ',' + std::to_string(r.cost_evals) + ',' + std::to_string(r.grad_evals) + '\n';
  }
  return out;
}

inline std::string scaling_csv(const ScalingResult& result) {
  std::string out(scaling_header);
  out += '\n';
  for (const auto& r : result.rows) {
    out += std::to_string(r.k) + ',' + std::to_string(r.workers) + ',' + format_double(r.cost_eval_ms) + ',' +
           format_double(r.grad_eval_ms) + ',' + format_double(r.solve_s) + '\n';
  }
  return out;
}

namespace detail {

inline Json solve_counts(const SolveReport& s) {
  Json j{{"termination", std::string(to_string(s.termination))},
         {"message", s.message},
         {"iterations", s.iterations},
         {"cost_evals", s.cost_evals},
         {"grad_evals", s.grad_evals},
         {"final_cost", s.f_final},
         {"final_grad_norm", s.grad_norm_final}};
  return j;
}

} // namespace detail

/// report.json. Every wall-clock quantity lives under "timing" so the rest of
/// the document is reproducible for a fixed config and seed.
inline Json report_json(const RunConfig& cfg, const ExperimentReport& rep) {
  const auto& s = rep.solve;
  Json outer = Json::array();
  Json outer_elapsed = Json::array();
  Json iteration_elapsed = Json::array();
  for (const auto& r : s.trace) iteration_elapsed.push_back(r.elapsed_s);
  for (std::size_t i = 0; i < s.outer_trace.size(); ++i) {
    const auto& o = s.outer_trace[i];
    outer.push_back(Json{{"outer", o.outer},
                         {"mu", o.mu},
                         {"inner_iterations", o.inner_iterations},
                         {"cost", o.cost},
                         {"grad_norm", o.grad_norm},
                         {"constraint_violation", o.constraint_violation},
                         {"distance_to_serial", detail::optional_json(o.distance_to_serial)},
                         {"rmse", i < rep.rmse_outer.size() ? Json(rep.rmse_outer[i]) : Json(nullptr)},
                         {"cost_evals", o.cost_evals},
                         {"grad_evals", o.grad_evals},
                         {"inner_termination", std::string(to_string(o.inner_termination))}});
    outer_elapsed.push_back(o.elapsed_s);
  }

  Json result{{"method", std::string(to_string(rep.method))},
              {"seeds", {{"background", cfg.twin.seed}, {"observations", cfg.twin.seed + 1}}},
              {"state_dim", cfg.state_dim()},
              {"sub_intervals", cfg.twin.window.sub_intervals},
              {"reference_magnitude", rep.reference_magnitude},
              {"rmse",
               {{"background", rep.rmse_background},
                {"analysis", rep.rmse_analysis},
                {"serial", detail::optional_json(rep.rmse_serial)}}},
              {"solve", detail::solve_counts(s)},
              {"phase_boundary", s.phase_boundary ? Json(*s.phase_boundary) : Json(nullptr)},
              {"serial_reference", rep.serial_reference ? detail::solve_counts(*rep.serial_reference) : Json(nullptr)},
              {"outer_trace", std::move(outer)},
              {"reference_counts",
               {{"note", "Lorenz-96 evaluation counts reported for the original experiments; not asserted"},
                {"serial", {{"grad_evals", 230}, {"cost_evals", 574}}},
                {"parallel", {{"grad_evals", 100}, {"cost_evals", 650}}}}},
              {"analysis_x0", detail::vector_json(s.x_final)},
              {"config", to_json(cfg)}};
  result["timing"] = Json{{"total_s", rep.total_time_s},
                          {"solve_wall_s", s.wall_time_s},
                          {"serial_reference_wall_s",
                           rep.serial_reference ? Json(rep.serial_reference->wall_time_s) : Json(nullptr)},
                          {"outer_elapsed_s", std::move(outer_elapsed)},
                          {"iteration_elapsed_s", std::move(iteration_elapsed)}};
  return result;
}

} // namespace pintda::cli
