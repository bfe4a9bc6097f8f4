#pragma once

// Trajectory and control files (CSV) and run summaries (YAML).
//
// Trajectory header, plants numbered from 1:
//   t, q{i}_angle..., q{i}_angle_unwrapped..., x{i}_{label}..., u{i}_{label}...,
//   w1, w2, g{i}_{label}...
// with one row per t = 0..N. The control columns of the last row are empty.
// Control files hold t and the u columns for t = 0..N-1. Numbers are written
// with 17 significant digits so that reading them back is exact.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "muxopt/multiplex.hpp"
#include "muxopt/optimizer.hpp"
#include "muxopt/plants.hpp"
#include "muxopt/pmp.hpp"
#include "muxopt/scenario.hpp"

namespace mux::io {

// printf("%.17g").
std::string format_double(double v);

std::vector<std::string> trajectory_header(const plants::ModelList& models);
std::vector<std::string> control_header(const plants::ModelList& models);

void write_trajectory_csv(std::ostream& out, const plants::JointTrajectory& traj,
                          const plants::ModelList& models);
void write_controls_csv(std::ostream& out, std::span<const multiplex::JointControl> controls,
                        const plants::ModelList& models);

// Reads a full trajectory file of `horizon` steps. Configurations are rebuilt
// from the wrapped angle column. Throws ParseError.
plants::JointTrajectory read_trajectory_csv(std::istream& in, const plants::ModelList& models,
                                            int horizon);

// Reads `horizon` control rows from either a control file or a trajectory
// file; columns are located by name. Throws ParseError.
std::vector<multiplex::JointControl> read_controls_csv(std::istream& in,
                                                       const plants::ModelList& models,
                                                       int horizon);

std::string solve_summary_yaml(const scenario::Scenario& s,
                               const optimizer::SolveResult& r);

// Rollout summary. Steps whose control is not in the multiplexed set are
// listed under non_multiplexed_steps. `failure` is empty for a full rollout.
std::string simulate_summary_yaml(const scenario::Scenario& s,
                                  const plants::JointTrajectory& traj,
                                  const std::string& failure, int failed_plant,
                                  int failed_step);

std::string report_yaml(const scenario::Scenario& s, const pmp::Estimate& e,
                        const scenario::VerifierTolerances& tol);

}  // namespace mux::io
