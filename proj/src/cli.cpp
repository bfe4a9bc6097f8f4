#include "muxopt/cli.hpp"

#include <fstream>
#include <ostream>

#include "muxopt/errors.hpp"
#include "muxopt/io.hpp"
#include "muxopt/optimizer.hpp"
#include "muxopt/pmp.hpp"
#include "muxopt/scenario.hpp"

namespace mux::cli {
namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + p.string());
  return f;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ParseError("cannot read " + p.string());
  return f;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidArgument("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

int cmd_solve(const fs::path& scenario_path, const fs::path& out_dir,
              std::optional<std::uint64_t> seed, std::ostream& log) {
  scenario::Scenario s;
  optimizer::TranscribedNLP nlp;
  try {
    s = scenario::load_scenario(scenario_path);
    if (seed) s.seed = *seed;
    nlp = optimizer::transcribe(s);
    prepare_dir(out_dir);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }

  optimizer::SolveResult r;
  try {
    r = optimizer::solve(nlp, optimizer::SolveOptions::from(s));
  } catch (const NumericalBreakdown& e) {
    log << "error: " << e.what() << '\n';
    return kExitNotConverged;
  }

  try {
    auto traj = open_out(out_dir / "trajectory.csv");
    io::write_trajectory_csv(traj, r.trajectory, nlp.models());
    auto controls = open_out(out_dir / "controls.csv");
    io::write_controls_csv(controls, r.controls, nlp.models());
    open_out(out_dir / "summary.yaml") << io::solve_summary_yaml(s, r);
    open_out(out_dir / "scenario.yaml") << scenario::dump_scenario(s);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
  log << s.name << ": " << optimizer::to_string(r.status) << ", objective " << r.objective
      << ", multiplexing residual " << r.multiplexing_residual << '\n';
  return r.status == optimizer::Status::Converged ? kExitOk : kExitNotConverged;
}

int cmd_verify(const fs::path& scenario_path, const fs::path& trajectory_path,
               double tolerance_scale, std::ostream& report, std::ostream& log) {
  try {
    if (!(tolerance_scale > 0.0)) throw InvalidArgument("tolerance scale must be positive");
    const scenario::Scenario s = scenario::load_scenario(scenario_path);
    const optimizer::TranscribedNLP nlp = optimizer::transcribe(s);
    auto in = open_in(trajectory_path);
    const plants::JointTrajectory traj = io::read_trajectory_csv(in, nlp.models(), s.horizon);
    const scenario::VerifierTolerances tol = s.verifier.scaled(tolerance_scale);
    const pmp::Estimate e = pmp::estimate_multipliers(nlp, traj, tol);
    report << io::report_yaml(s, e, tol);
    log << s.name << ": verdict " << (e.report.pass() ? "pass" : "fail")
        << ", stationarity residual " << e.report.stationarity << '\n';
    return e.report.pass() ? kExitOk : kExitVerdictFail;
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

int cmd_simulate(const fs::path& scenario_path, const fs::path& controls_path,
                 const fs::path& out_dir, std::ostream& log) {
  try {
    const scenario::Scenario s = scenario::load_scenario(scenario_path);
    const plants::ModelList models = s.models();
    auto in = open_in(controls_path);
    const auto controls = io::read_controls_csv(in, models, s.horizon);
    for (const auto& u : controls) {
      for (const auto& b : u.blocks) {
        if (!b.allFinite()) throw ParseError("controls must be finite");
      }
    }
    prepare_dir(out_dir);
    const plants::PartialRollout pr = plants::joint_rollout_partial(
        models, s.initial_configurations(), s.initial_states(), controls);
    auto traj = open_out(out_dir / "trajectory.csv");
    io::write_trajectory_csv(traj, pr.trajectory, models);
    open_out(out_dir / "summary.yaml")
        << io::simulate_summary_yaml(s, pr.trajectory, pr.failure.value_or(""),
                                     pr.failed_plant, pr.failed_step);
    if (pr.failure) {
      log << "chart violation: plant " << pr.failed_plant + 1 << " at step " << pr.failed_step
          << ": " << *pr.failure << '\n';
      return kExitChart;
    }
    return kExitOk;
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace mux::cli
