#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pintda/cli/artifacts.hpp"
#include "pintda/cli/config.hpp"
#include "pintda/cli/gradient_check.hpp"
#include "pintda/harness.hpp"

namespace pintda::cli {

enum ExitCode : int { exit_ok = 0, exit_config_error = 1, exit_numerical_failure = 2 };

/// Command-line inputs common to every subcommand. Flags win over --set,
/// which wins over the config file, which wins over built-in defaults.
struct CliOptions {
  std::string config_path; ///< empty: built-in defaults
  std::vector<std::string> sets;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<int>> k_list;
  std::optional<std::string> workers_policy;
};

inline RunConfig load_run_config(const CliOptions& opts) {
  Json doc = opts.config_path.empty() ? Json::object() : read_json_file(opts.config_path);
  if (!doc.is_object()) throw ConfigError(opts.config_path + ": top level must be an object");
  for (const auto& s : opts.sets) apply_override(doc, s);
  if (opts.workers) doc["workers"] = *opts.workers;
  if (opts.seed) doc["seed"] = *opts.seed;
  if (opts.out) doc["out_dir"] = *opts.out;
  if (opts.k_list || opts.workers_policy) {
    Json& bench = doc["bench"];
    if (bench.is_null()) bench = Json::object();
    if (!bench.is_object()) throw ConfigError("bench: expected an object");
    if (opts.k_list) bench["k_list"] = *opts.k_list;
    if (opts.workers_policy) bench["workers_policy"] = *opts.workers_policy;
  }
  return parse_config(doc);
}

template <class Fn>
decltype(auto) with_model(const RunConfig& cfg, Fn&& fn) {
  if (cfg.model.kind == ModelKind::linear) return fn(LinearModel(cfg.model.linear_matrix));
  return fn(Lorenz96(cfg.model.lorenz96));
}

namespace detail {

/// Loads the config and runs `body`, mapping failures onto exit codes:
/// config errors to 1, numerical failures (and anything else) to 2.
template <class Body>
int guarded(const CliOptions& opts, std::ostream& err, Body&& body) {
  RunConfig cfg;
  try {
    cfg = load_run_config(opts);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config_error;
  }
  try {
    return body(cfg);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return exit_numerical_failure;
}

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

} // namespace detail

/// Twin experiment; writes analysis_trajectory.csv, convergence.csv and
/// report.json into the output directory. A solve that ends in
/// Termination::failed still writes its artifacts, then exits 2.
inline int cmd_run(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(opts, err, [&](const RunConfig& cfg) {
    return with_model(cfg, [&](const auto& model) {
      const auto& w = cfg.twin.window;
      const auto partition = uniform_partition(0.0, w.sub_intervals, w.steps_per_sub_interval, w.step_size);
      const ExperimentReport rep = run_twin_experiment(model, cfg.twin);

      const std::filesystem::path dir(cfg.out_dir);
      write_atomic(dir / "analysis_trajectory.csv", trajectory_csv(model, rep, partition));
      write_atomic(dir / "convergence.csv", convergence_csv(rep.solve.trace));
      write_atomic(dir / "report.json", report_json(cfg, rep).dump(2) + '\n');

      out << "method " << to_string(rep.method) << ": " << to_string(rep.solve.termination) << " after "
          << rep.solve.iterations << " iterations (" << rep.solve.cost_evals << " cost / " << rep.solve.grad_evals
          << " gradient evaluations)\n";
      out << "rmse background " << detail::sci(rep.rmse_background) << ", analysis " << detail::sci(rep.rmse_analysis);
      if (rep.rmse_serial) out << ", serial " << detail::sci(*rep.rmse_serial);
      out << "\nartifacts in " << dir.string() << '\n';
      if (rep.solve.termination == Termination::failed) {
        err << "numerical failure: " << rep.solve.message << '\n';
        return static_cast<int>(exit_numerical_failure);
      }
      return static_cast<int>(exit_ok);
    });
  });
}

/// Finite-difference check of the serial and augmented-Lagrangian adjoint
/// gradients; exit 0 iff every suite is within gradient_check.tolerance.
inline int cmd_gradient_check(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(opts, err, [&](const RunConfig& cfg) {
    return with_model(cfg, [&](const auto& model) {
      const auto setup = build_twin(model, cfg.twin);
      const auto checks = run_gradient_checks(setup.problem, cfg);
      const double tol = cfg.gradient_check.tolerance;
      bool ok = true;
      for (const auto& c : checks) {
        const bool pass = c.max_rel_error <= tol;
        ok = ok && pass;
        out << c.suite << ": max relative error " << detail::sci(c.max_rel_error) << " over "
            << cfg.gradient_check.directions << " directions (tolerance " << detail::sci(tol) << ") "
            << (pass ? "PASS" : "FAIL") << '\n';
        if (!pass) {
          err << c.suite << ": worst direction " << c.worst_direction << " (dominant coordinate "
              << c.worst_coordinate << "): finite difference " << format_double(c.fd) << ", adjoint "
              << format_double(c.adjoint) << '\n';
        }
      }
      return static_cast<int>(ok ? exit_ok : exit_numerical_failure);
    });
  });
}

/// Weak-scaling benchmark; writes scaling.csv.
inline int cmd_bench_scaling(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(opts, err, [&](const RunConfig& cfg) {
    return with_model(cfg, [&](const auto& model) {
      const ScalingResult result = run_weak_scaling(model, cfg.twin, cfg.bench);
      const std::filesystem::path dir(cfg.out_dir);
      write_atomic(dir / "scaling.csv", scaling_csv(result));
      const auto ratios = result.ratios();
      out << "hardware threads: " << result.hardware_threads << '\n';
      for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i];
        out << "k=" << r.k << " workers=" << r.workers << (r.oversubscribed ? " (oversubscribed)" : "")
            << " cost " << detail::sci(r.cost_eval_ms) << " ms (x" << detail::sci(ratios[i].first) << ")"
            << " gradient " << detail::sci(r.grad_eval_ms) << " ms (x" << detail::sci(ratios[i].second) << ")"
            << " solve " << detail::sci(r.solve_s) << " s\n";
      }
      out << "scaling.csv in " << dir.string() << '\n';
      return static_cast<int>(exit_ok);
    });
  });
}

} // namespace pintda::cli
