#pragma once

// Scenario description: horizon, plants, boundary conditions, solver and
// verifier settings. Scenarios are stored as YAML documents.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "muxopt/liegroup.hpp"
#include "muxopt/plants.hpp"

namespace mux::scenario {

enum class PlantKind : std::uint8_t { Satellite, UWVehicle };
enum class EndpointMode : std::uint8_t { Fixed, Free };

const char* to_string(PlantKind k) noexcept;
const char* to_string(EndpointMode m) noexcept;

struct BoundaryState {
  double angle = 0.0;       // radians
  Eigen::VectorXd state;    // Euclidean state in the model's layout
};

struct PlantSpec {
  PlantKind kind = PlantKind::Satellite;
  double inertia = 0.0;              // metadata only
  Eigen::VectorXd control_bounds;    // satellite: (tau); UW: (tau, fx, fy)
  Eigen::VectorXd state_bounds;      // satellite: (M); UW: (M, vx, vy)
  Eigen::Matrix2d mass = Eigen::Matrix2d::Identity();
  BoundaryState initial;
  BoundaryState terminal;
  // Terminal cost weights, used when the endpoint is free.
  double angle_weight = 0.0;
  Eigen::VectorXd state_weights;
};

struct SolverSettings {
  int seeds = 8;
  int threads = 0;  // 0: one worker per hardware thread
  int outer_iterations = 60;
  int inner_iterations = 4000;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e9;
  double inner_tolerance = 1e-6;
  double feasibility_tolerance = 1e-9;
  double fd_step = 1e-6;
  // Relaxed first phase that chooses which plant is served at each step.
  int schedule_outer_iterations = 8;
  double schedule_aid_weight = 1.0;
};

struct VerifierTolerances {
  double certificate = 1e-10;     // non-triviality floor
  double recursion = 1e-8;
  double transversality = 1e-8;
  double stationarity = 1e-6;
  double slackness = 1e-8;
  double sign = 1e-12;
  double multiplexing = 1e-8;
  double feasibility = 1e-7;
  double activation = 1e-7;       // |g| below which a state constraint is active

  VerifierTolerances scaled(double factor) const;
};

struct Scenario {
  std::string name;
  int horizon = 1;
  double step = 0.1;
  EndpointMode endpoint = EndpointMode::Fixed;
  std::uint64_t seed = 0;
  std::vector<PlantSpec> plants;
  SolverSettings solver;
  VerifierTolerances verifier;

  plants::ModelList models() const;
  std::vector<lie::GroupElement> initial_configurations() const;
  std::vector<Eigen::VectorXd> initial_states() const;
  std::vector<lie::GroupElement> terminal_configurations() const;
  std::vector<Eigen::VectorXd> terminal_states() const;

  // Throws InvalidScenario on inconsistent dimensions, non-positive horizon or
  // step, boundary states violating their constraints, or targets outside
  // the logarithm chart.
  void validate() const;
};

int euclid_dim(PlantKind k) noexcept;
int control_dim(PlantKind k) noexcept;
int constraint_dim(PlantKind k) noexcept;

// Parse and validate. Throws InvalidScenario.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& yaml_text);

// Canonical YAML rendering; parse_scenario(dump_scenario(s)) reproduces s.
std::string dump_scenario(const Scenario& s);

}  // namespace mux::scenario
