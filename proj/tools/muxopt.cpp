#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "muxopt/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Energy-optimal multiplexed maneuvers for ensembles on SO(2)"};
  app.require_subcommand(1);

  std::string scenario, out_dir, trajectory, controls;
  std::optional<std::uint64_t> seed;
  double tol_scale = 1.0;

  auto* solve = app.add_subcommand("solve", "solve a scenario and write its artifacts");
  solve->add_option("scenario", scenario, "scenario YAML")->required()->check(CLI::ExistingFile);
  solve->add_option("--out", out_dir, "output directory")->required();
  solve->add_option("--seed", seed, "base seed of the multi-start");

  auto* verify = app.add_subcommand("verify", "check the maximum-principle conditions");
  verify->add_option("scenario", scenario, "scenario YAML")->required()->check(CLI::ExistingFile);
  verify->add_option("trajectory", trajectory, "trajectory CSV")->required()->check(CLI::ExistingFile);
  verify->add_option("--tol-scale", tol_scale, "multiply every tolerance by this factor");

  auto* simulate = app.add_subcommand("simulate", "roll out a control file");
  simulate->add_option("scenario", scenario, "scenario YAML")->required()->check(CLI::ExistingFile);
  simulate->add_option("controls", controls, "control CSV")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mux::cli::kExitInput;
  }

  if (solve->parsed()) return mux::cli::cmd_solve(scenario, out_dir, seed, std::cerr);
  if (verify->parsed()) {
    return mux::cli::cmd_verify(scenario, trajectory, tol_scale, std::cout, std::cerr);
  }
  return mux::cli::cmd_simulate(scenario, controls, out_dir, std::cerr);
}
