#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <string>

#include "muxopt/errors.hpp"
#include "muxopt/scenario.hpp"

using namespace mux;
using namespace mux::scenario;

namespace {

const std::string kDir = MUXOPT_SCENARIO_DIR;

const char* kPair = R"(
name: pair
horizon: 10
step: 0.1
plants:
  - kind: satellite
    torque_bound: 0.05
    momentum_bound: 0.1
    initial: {angle_deg: 0, momentum: 0}
    terminal: {angle_deg: 45, momentum: 0.015}
  - kind: satellite
    torque_bound: 0.05
    momentum_bound: 0.1
    terminal: {angle: 1.5, momentum: 0.015}
)";

}  // namespace

TEST(Scenario, ParsesSatellitePair) {
  const Scenario s = parse_scenario(kPair);
  EXPECT_EQ(s.name, "pair");
  EXPECT_EQ(s.horizon, 10);
  EXPECT_EQ(s.endpoint, EndpointMode::Fixed);
  ASSERT_EQ(s.plants.size(), 2u);
  EXPECT_NEAR(s.plants[0].terminal.angle, std::numbers::pi / 4.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.plants[1].terminal.angle, 1.5);
  EXPECT_DOUBLE_EQ(s.plants[1].initial.state[0], 0.0);
  EXPECT_EQ(s.models().size(), 2u);
  EXPECT_EQ(s.solver.seeds, 8);
}

TEST(Scenario, DumpRoundTrip) {
  const Scenario s = parse_scenario(kPair);
  const Scenario r = parse_scenario(dump_scenario(s));
  EXPECT_EQ(dump_scenario(r), dump_scenario(s));
  EXPECT_EQ(r.plants[0].terminal.angle, s.plants[0].terminal.angle);
  EXPECT_EQ(r.plants[1].terminal.state, s.plants[1].terminal.state);
}

TEST(Scenario, BundledScenariosLoad) {
  for (const char* f : {"trivial", "single_satellite", "maneuver_bar", "maneuver_bar_smoke",
                        "maneuver_star", "maneuver_star_smoke", "desk_brute_force"}) {
    SCOPED_TRACE(f);
    const Scenario s = load_scenario(kDir + "/" + f + ".yaml");
    const Scenario r = parse_scenario(dump_scenario(s));
    EXPECT_EQ(dump_scenario(r), dump_scenario(s));
  }
  const Scenario bar = load_scenario(kDir + "/maneuver_bar.yaml");
  EXPECT_EQ(bar.horizon, 1170);
  EXPECT_DOUBLE_EQ(bar.step, 0.1);
  const Scenario star = load_scenario(kDir + "/maneuver_star.yaml");
  EXPECT_EQ(star.horizon, 540);
  EXPECT_EQ(star.plants[0].kind, PlantKind::UWVehicle);
  EXPECT_DOUBLE_EQ(star.plants[1].terminal.state[1], 0.5);
}

TEST(Scenario, RejectsMalformedInput) {
  EXPECT_THROW(parse_scenario("name: [unclosed"), InvalidScenario);
  EXPECT_THROW(parse_scenario("horizon: 0\nstep: 0.1\nplants: []"), InvalidScenario);
  std::string bad_kind = kPair;
  bad_kind.replace(bad_kind.find("satellite"), 9, "rocket");
  EXPECT_THROW(parse_scenario(bad_kind), InvalidScenario);
  std::string negative_step = kPair;
  negative_step.replace(negative_step.find("step: 0.1"), 9, "step: -1");
  EXPECT_THROW(parse_scenario(negative_step), InvalidScenario);
}

TEST(Scenario, RejectsBoundaryStatesOutsideConstraints) {
  std::string s = kPair;
  s.replace(s.find("momentum: 0.015"), 15, "momentum: 0.5");
  EXPECT_THROW(parse_scenario(s), InvalidScenario);
}

TEST(Scenario, RejectsMismatchedDimensions) {
  const char* uw = R"(
horizon: 5
step: 0.05
plants:
  - kind: uw_vehicle
    torque_bound: 0.025
    force_bounds: [0.05]
    momentum_bound: 0.085
    velocity_bounds: [0.02, 0.1]
)";
  EXPECT_THROW(parse_scenario(uw), InvalidScenario);
}

TEST(Scenario, RejectsSingularMass) {
  const char* uw = R"(
horizon: 5
step: 0.05
plants:
  - kind: uw_vehicle
    torque_bound: 0.025
    force_bounds: [0.05, 0.05]
    momentum_bound: 0.085
    velocity_bounds: [0.02, 0.1]
    mass: [[1, 0], [0, 0]]
)";
  EXPECT_THROW(parse_scenario(uw), InvalidScenario);
}

TEST(Scenario, FreeEndpointSkipsTerminalConstraintCheck) {
  const char* free = R"(
horizon: 4
step: 0.1
endpoint: free
plants:
  - kind: satellite
    torque_bound: 1
    momentum_bound: 0.1
    terminal: {angle: 0.1, momentum: 0.3}
    terminal_weights: {angle: 1, state: [1]}
)";
  const Scenario s = parse_scenario(free);
  EXPECT_EQ(s.endpoint, EndpointMode::Free);
  EXPECT_DOUBLE_EQ(s.plants[0].angle_weight, 1.0);
}

TEST(Scenario, VerifierToleranceScaling) {
  VerifierTolerances t;
  const VerifierTolerances s = t.scaled(10.0);
  EXPECT_DOUBLE_EQ(s.stationarity, 10.0 * t.stationarity);
  EXPECT_DOUBLE_EQ(s.multiplexing, 10.0 * t.multiplexing);
  EXPECT_DOUBLE_EQ(s.activation, t.activation);
}
