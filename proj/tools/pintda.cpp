#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pintda/cli/commands.hpp"

namespace {

void add_common(CLI::App& sub, pintda::cli::CliOptions& opts) {
  sub.add_option("--config", opts.config_path, "JSON config file (defaults apply to omitted keys)");
  sub.add_option("--set", opts.sets, "override one config key, e.g. --set outer.rho=2 (repeatable)")
      ->take_all();
  sub.add_option("--workers", opts.workers, "worker threads for the parallel cost and gradient");
  sub.add_option("--out", opts.out, "output directory");
  sub.add_option("--seed", opts.seed, "random seed");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-parallel 4D-Var via augmented Lagrangian: twin experiments, gradient checks, scaling"};
  app.require_subcommand(1);

  pintda::cli::CliOptions opts;
  auto* run = app.add_subcommand("run", "twin experiment; writes analysis_trajectory.csv, convergence.csv, report.json");
  auto* check = app.add_subcommand("gradient-check", "finite-difference check of serial and augmented-Lagrangian gradients");
  auto* bench = app.add_subcommand("bench-scaling", "weak-scaling benchmark; writes scaling.csv");
  for (auto* sub : {run, check, bench}) add_common(*sub, opts);
  bench->add_option("--k-list", opts.k_list, "sub-interval counts, e.g. --k-list 1 2 4");
  bench->add_option("--workers-policy", opts.workers_policy, "equal-to-k or fixed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : pintda::cli::exit_config_error;
  }

  if (run->parsed()) return pintda::cli::cmd_run(opts, std::cout, std::cerr);
  if (check->parsed()) return pintda::cli::cmd_gradient_check(opts, std::cout, std::cerr);
  return pintda::cli::cmd_bench_scaling(opts, std::cout, std::cerr);
}
