#include "muxopt/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "muxopt/errors.hpp"

namespace mux::scenario {
namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidScenario(what); }

template <typename T>
T get(const YAML::Node& node, const char* key, const std::string& where) {
  const YAML::Node v = node[key];
  if (!v) fail(where + ": missing '" + key + "'");
  try {
    return v.as<T>();
  } catch (const YAML::Exception& e) {
    fail(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const YAML::Node& node, const char* key, T fallback, const std::string& where) {
  if (!node[key]) return fallback;
  return get<T>(node, key, where);
}

Eigen::VectorXd get_vector(const YAML::Node& node, const char* key, int size,
                           const std::string& where) {
  const auto v = get<std::vector<double>>(node, key, where);
  if (static_cast<int>(v.size()) != size) {
    fail(where + ": '" + key + "' must have " + std::to_string(size) + " entries");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), size);
}

double read_angle(const YAML::Node& node, const std::string& where) {
  const bool deg = static_cast<bool>(node["angle_deg"]);
  const bool rad = static_cast<bool>(node["angle"]);
  if (deg && rad) fail(where + ": give either 'angle' or 'angle_deg', not both");
  if (deg) return get<double>(node, "angle_deg", where) * std::numbers::pi / 180.0;
  if (rad) return get<double>(node, "angle", where);
  return 0.0;
}

BoundaryState read_boundary(const YAML::Node& node, PlantKind kind, const std::string& where) {
  BoundaryState b;
  b.state = Eigen::VectorXd::Zero(euclid_dim(kind));
  if (!node) return b;
  if (!node.IsMap()) fail(where + ": expected a mapping");
  b.angle = read_angle(node, where);
  b.state[0] = get_or<double>(node, "momentum", 0.0, where);
  if (kind == PlantKind::UWVehicle) {
    if (node["position"]) b.state.segment<2>(1) = get_vector(node, "position", 2, where);
    if (node["velocity"]) b.state.segment<2>(3) = get_vector(node, "velocity", 2, where);
  } else if (node["position"] || node["velocity"]) {
    fail(where + ": satellites have no position or velocity");
  }
  return b;
}

PlantSpec read_plant(const YAML::Node& node, int index) {
  const std::string where = "plants[" + std::to_string(index) + "]";
  if (!node.IsMap()) fail(where + ": expected a mapping");
  PlantSpec p;
  const auto kind = get<std::string>(node, "kind", where);
  if (kind == "satellite") {
    p.kind = PlantKind::Satellite;
  } else if (kind == "uw_vehicle") {
    p.kind = PlantKind::UWVehicle;
  } else {
    fail(where + ": unknown kind '" + kind + "'");
  }
  p.inertia = get_or<double>(node, "inertia", 0.0, where);
  const double tau = get<double>(node, "torque_bound", where);
  const double mom = get<double>(node, "momentum_bound", where);
  if (p.kind == PlantKind::Satellite) {
    p.control_bounds = Eigen::VectorXd::Constant(1, tau);
    p.state_bounds = Eigen::VectorXd::Constant(1, mom);
  } else {
    const Eigen::VectorXd f = get_vector(node, "force_bounds", 2, where);
    const Eigen::VectorXd v = get_vector(node, "velocity_bounds", 2, where);
    p.control_bounds = Eigen::Vector3d(tau, f[0], f[1]);
    p.state_bounds = Eigen::Vector3d(mom, v[0], v[1]);
    if (node["mass"]) {
      const auto rows = get<std::vector<std::vector<double>>>(node, "mass", where);
      if (rows.size() != 2 || rows[0].size() != 2 || rows[1].size() != 2) {
        fail(where + ": 'mass' must be a 2x2 matrix");
      }
      p.mass << rows[0][0], rows[0][1], rows[1][0], rows[1][1];
    }
  }
  p.initial = read_boundary(node["initial"], p.kind, where + ".initial");
  p.terminal = read_boundary(node["terminal"], p.kind, where + ".terminal");
  p.state_weights = Eigen::VectorXd::Zero(euclid_dim(p.kind));
  if (const YAML::Node w = node["terminal_weights"]) {
    p.angle_weight = get_or<double>(w, "angle", 0.0, where + ".terminal_weights");
    if (w["state"]) {
      p.state_weights = get_vector(w, "state", euclid_dim(p.kind), where + ".terminal_weights");
    }
  }
  return p;
}

SolverSettings read_solver(const YAML::Node& n) {
  SolverSettings s;
  if (!n) return s;
  const std::string w = "solver";
  s.seeds = get_or(n, "seeds", s.seeds, w);
  s.threads = get_or(n, "threads", s.threads, w);
  s.outer_iterations = get_or(n, "outer_iterations", s.outer_iterations, w);
  s.inner_iterations = get_or(n, "inner_iterations", s.inner_iterations, w);
  s.initial_penalty = get_or(n, "initial_penalty", s.initial_penalty, w);
  s.penalty_growth = get_or(n, "penalty_growth", s.penalty_growth, w);
  s.max_penalty = get_or(n, "max_penalty", s.max_penalty, w);
  s.inner_tolerance = get_or(n, "inner_tolerance", s.inner_tolerance, w);
  s.feasibility_tolerance = get_or(n, "feasibility_tolerance", s.feasibility_tolerance, w);
  s.fd_step = get_or(n, "fd_step", s.fd_step, w);
  s.schedule_outer_iterations =
      get_or(n, "schedule_outer_iterations", s.schedule_outer_iterations, w);
  s.schedule_aid_weight = get_or(n, "schedule_aid_weight", s.schedule_aid_weight, w);
  return s;
}

VerifierTolerances read_verifier(const YAML::Node& n) {
  VerifierTolerances v;
  if (!n) return v;
  const std::string w = "verifier";
  v.certificate = get_or(n, "certificate", v.certificate, w);
  v.recursion = get_or(n, "recursion", v.recursion, w);
  v.transversality = get_or(n, "transversality", v.transversality, w);
  v.stationarity = get_or(n, "stationarity", v.stationarity, w);
  v.slackness = get_or(n, "slackness", v.slackness, w);
  v.sign = get_or(n, "sign", v.sign, w);
  v.multiplexing = get_or(n, "multiplexing", v.multiplexing, w);
  v.feasibility = get_or(n, "feasibility", v.feasibility, w);
  v.activation = get_or(n, "activation", v.activation, w);
  return v;
}

Scenario from_node(const YAML::Node& root) {
  if (!root.IsMap()) fail("scenario: top level must be a mapping");
  Scenario s;
  s.name = get_or<std::string>(root, "name", "unnamed", "scenario");
  s.horizon = get<int>(root, "horizon", "scenario");
  s.step = get<double>(root, "step", "scenario");
  const auto mode = get_or<std::string>(root, "endpoint", "fixed", "scenario");
  if (mode == "fixed") {
    s.endpoint = EndpointMode::Fixed;
  } else if (mode == "free") {
    s.endpoint = EndpointMode::Free;
  } else {
    fail("scenario: endpoint must be 'fixed' or 'free'");
  }
  s.seed = get_or<std::uint64_t>(root, "seed", 0, "scenario");
  const YAML::Node plants = root["plants"];
  if (!plants || !plants.IsSequence() || plants.size() == 0) {
    fail("scenario: 'plants' must be a non-empty list");
  }
  for (std::size_t i = 0; i < plants.size(); ++i) {
    s.plants.push_back(read_plant(plants[i], static_cast<int>(i)));
  }
  s.solver = read_solver(root["solver"]);
  s.verifier = read_verifier(root["verifier"]);
  s.validate();
  return s;
}

void emit_vector(YAML::Emitter& out, const Eigen::VectorXd& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (double a : v) out << a;
  out << YAML::EndSeq;
}

void emit_boundary(YAML::Emitter& out, const BoundaryState& b, PlantKind kind) {
  out << YAML::BeginMap;
  out << YAML::Key << "angle" << YAML::Value << b.angle;
  out << YAML::Key << "momentum" << YAML::Value << b.state[0];
  if (kind == PlantKind::UWVehicle) {
    out << YAML::Key << "position" << YAML::Value;
    emit_vector(out, b.state.segment<2>(1));
    out << YAML::Key << "velocity" << YAML::Value;
    emit_vector(out, b.state.segment<2>(3));
  }
  out << YAML::EndMap;
}

}  // namespace

const char* to_string(PlantKind k) noexcept {
  return k == PlantKind::Satellite ? "satellite" : "uw_vehicle";
}

const char* to_string(EndpointMode m) noexcept {
  return m == EndpointMode::Fixed ? "fixed" : "free";
}

int euclid_dim(PlantKind k) noexcept { return k == PlantKind::Satellite ? 1 : 5; }
int control_dim(PlantKind k) noexcept { return k == PlantKind::Satellite ? 1 : 3; }
int constraint_dim(PlantKind k) noexcept { return k == PlantKind::Satellite ? 1 : 3; }

VerifierTolerances VerifierTolerances::scaled(double factor) const {
  VerifierTolerances t = *this;
  t.certificate *= factor;
  t.recursion *= factor;
  t.transversality *= factor;
  t.stationarity *= factor;
  t.slackness *= factor;
  t.sign *= factor;
  t.multiplexing *= factor;
  t.feasibility *= factor;
  return t;
}

plants::ModelList Scenario::models() const {
  plants::ModelList out;
  for (const auto& p : plants) {
    if (p.kind == PlantKind::Satellite) {
      out.push_back(std::make_shared<plants::SatelliteModel>(step, p.control_bounds[0],
                                                             p.state_bounds[0], p.inertia));
    } else {
      out.push_back(std::make_shared<plants::UWVehicleModel>(
          step, Eigen::Vector3d(p.control_bounds), Eigen::Vector3d(p.state_bounds), p.mass));
    }
  }
  return out;
}

std::vector<lie::GroupElement> Scenario::initial_configurations() const {
  std::vector<lie::GroupElement> q;
  for (const auto& p : plants) q.push_back(lie::GroupElement::rotation(p.initial.angle));
  return q;
}

std::vector<Eigen::VectorXd> Scenario::initial_states() const {
  std::vector<Eigen::VectorXd> x;
  for (const auto& p : plants) x.push_back(p.initial.state);
  return x;
}

std::vector<lie::GroupElement> Scenario::terminal_configurations() const {
  std::vector<lie::GroupElement> q;
  for (const auto& p : plants) q.push_back(lie::GroupElement::rotation(p.terminal.angle));
  return q;
}

std::vector<Eigen::VectorXd> Scenario::terminal_states() const {
  std::vector<Eigen::VectorXd> x;
  for (const auto& p : plants) x.push_back(p.terminal.state);
  return x;
}

void Scenario::validate() const {
  if (horizon < 1) fail("scenario: horizon must be >= 1");
  if (!(step > 0.0) || !std::isfinite(step)) fail("scenario: step must be positive");
  if (plants.empty()) fail("scenario: no plants");
  if (solver.seeds < 1) fail("solver: seeds must be >= 1");
  const double tols[] = {solver.inner_tolerance, solver.feasibility_tolerance, solver.fd_step,
                         verifier.stationarity, verifier.slackness, verifier.multiplexing};
  for (double t : tols) {
    if (!(t > 0.0)) fail("scenario: tolerances must be positive");
  }
  if (!(solver.penalty_growth > 1.0) || !(solver.initial_penalty > 0.0)) {
    fail("solver: penalty must be positive and grow");
  }
  for (std::size_t i = 0; i < plants.size(); ++i) {
    const auto& p = plants[i];
    const std::string where = "plants[" + std::to_string(i) + "]";
    const int n = euclid_dim(p.kind);
    if (p.initial.state.size() != n || p.terminal.state.size() != n ||
        p.state_weights.size() != n || p.control_bounds.size() != control_dim(p.kind) ||
        p.state_bounds.size() != constraint_dim(p.kind)) {
      fail(where + ": dimension mismatch");
    }
    if ((p.control_bounds.array() < 0.0).any() || (p.state_bounds.array() <= 0.0).any()) {
      fail(where + ": bounds must be positive");
    }
    if (p.angle_weight < 0.0 || (p.state_weights.array() < 0.0).any()) {
      fail(where + ": terminal weights must be non-negative");
    }
    std::shared_ptr<const plants::PlantModel> model;
    try {
      model = models()[i];
    } catch (const Error& e) {
      fail(where + ": " + e.what());
    }
    for (const BoundaryState* b : {&p.initial, &p.terminal}) {
      const bool terminal = b == &p.terminal;
      if (terminal && endpoint == EndpointMode::Free && p.angle_weight == 0.0 &&
          p.state_weights.isZero()) {
        continue;
      }
      const char* tag = terminal ? "terminal" : "initial";
      if (!std::isfinite(b->angle) || !b->state.allFinite()) {
        fail(where + "." + tag + ": non-finite value");
      }
      if (std::abs(step * b->state[0]) >= plants::kChartGuard) {
        fail(where + "." + tag + ": momentum outside the chart of the step map");
      }
      if (terminal && endpoint == EndpointMode::Free) continue;
      const Eigen::VectorXd g =
          model->constraints(lie::GroupElement::rotation(b->angle), b->state);
      if ((g.array() > 1e-12).any()) {
        fail(where + "." + tag + ": boundary state violates its state constraints");
      }
    }
  }
}

Scenario parse_scenario(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    fail(std::string("scenario: YAML parse error: ") + e.what());
  }
  return from_node(root);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("scenario: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string dump_scenario(const Scenario& s) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << s.name;
  out << YAML::Key << "horizon" << YAML::Value << s.horizon;
  out << YAML::Key << "step" << YAML::Value << s.step;
  out << YAML::Key << "endpoint" << YAML::Value << to_string(s.endpoint);
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::Key << "plants" << YAML::Value << YAML::BeginSeq;
  for (const auto& p : s.plants) {
    out << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << to_string(p.kind);
    out << YAML::Key << "inertia" << YAML::Value << p.inertia;
    out << YAML::Key << "torque_bound" << YAML::Value << p.control_bounds[0];
    out << YAML::Key << "momentum_bound" << YAML::Value << p.state_bounds[0];
    if (p.kind == PlantKind::UWVehicle) {
      out << YAML::Key << "force_bounds" << YAML::Value;
      emit_vector(out, p.control_bounds.tail<2>());
      out << YAML::Key << "velocity_bounds" << YAML::Value;
      emit_vector(out, p.state_bounds.tail<2>());
      out << YAML::Key << "mass" << YAML::Value << YAML::Flow << YAML::BeginSeq;
      for (int r = 0; r < 2; ++r) emit_vector(out, p.mass.row(r).transpose());
      out << YAML::EndSeq;
    }
    out << YAML::Key << "initial" << YAML::Value;
    emit_boundary(out, p.initial, p.kind);
    out << YAML::Key << "terminal" << YAML::Value;
    emit_boundary(out, p.terminal, p.kind);
    if (p.angle_weight != 0.0 || !p.state_weights.isZero()) {
      out << YAML::Key << "terminal_weights" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "angle" << YAML::Value << p.angle_weight;
      out << YAML::Key << "state" << YAML::Value;
      emit_vector(out, p.state_weights);
      out << YAML::EndMap;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  const auto& v = s.solver;
  out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "seeds" << YAML::Value << v.seeds;
  out << YAML::Key << "threads" << YAML::Value << v.threads;
  out << YAML::Key << "outer_iterations" << YAML::Value << v.outer_iterations;
  out << YAML::Key << "inner_iterations" << YAML::Value << v.inner_iterations;
  out << YAML::Key << "initial_penalty" << YAML::Value << v.initial_penalty;
  out << YAML::Key << "penalty_growth" << YAML::Value << v.penalty_growth;
  out << YAML::Key << "max_penalty" << YAML::Value << v.max_penalty;
  out << YAML::Key << "inner_tolerance" << YAML::Value << v.inner_tolerance;
  out << YAML::Key << "feasibility_tolerance" << YAML::Value << v.feasibility_tolerance;
  out << YAML::Key << "fd_step" << YAML::Value << v.fd_step;
  out << YAML::Key << "schedule_outer_iterations" << YAML::Value << v.schedule_outer_iterations;
  out << YAML::Key << "schedule_aid_weight" << YAML::Value << v.schedule_aid_weight;
  out << YAML::EndMap;

  const auto& t = s.verifier;
  out << YAML::Key << "verifier" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "certificate" << YAML::Value << t.certificate;
  out << YAML::Key << "recursion" << YAML::Value << t.recursion;
  out << YAML::Key << "transversality" << YAML::Value << t.transversality;
  out << YAML::Key << "stationarity" << YAML::Value << t.stationarity;
  out << YAML::Key << "slackness" << YAML::Value << t.slackness;
  out << YAML::Key << "sign" << YAML::Value << t.sign;
  out << YAML::Key << "multiplexing" << YAML::Value << t.multiplexing;
  out << YAML::Key << "feasibility" << YAML::Value << t.feasibility;
  out << YAML::Key << "activation" << YAML::Value << t.activation;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace mux::scenario
