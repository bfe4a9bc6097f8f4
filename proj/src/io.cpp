#include "muxopt/io.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "muxopt/errors.hpp"

namespace mux::io {
namespace {

std::string plant_prefix(char letter, std::size_t i) {
  return std::string(1, letter) + std::to_string(i + 1) + "_";
}

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out << ',';
    out << cells[k];
  }
  out << '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& cell, int line) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("line " + std::to_string(line) + ": cannot read number '" + cell + "'");
  }
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::size_t> index;

  std::size_t column(const std::string& name) const {
    const auto it = index.find(name);
    if (it == index.end()) throw ParseError("missing column '" + name + "'");
    return it->second;
  }
};

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    if (!t.index.emplace(t.header[k], k).second) {
      throw ParseError("duplicate column '" + t.header[k] + "'");
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw ParseError("line " + std::to_string(t.rows.size() + 2) + ": expected " +
                       std::to_string(t.header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::vector<std::string> control_columns(const plants::ModelList& models) {
  std::vector<std::string> cols;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (const auto& l : models[i]->control_labels()) cols.push_back(plant_prefix('u', i) + l);
  }
  return cols;
}

multiplex::JointControl control_row(const Table& t, std::size_t r,
                                    const std::vector<std::size_t>& cols,
                                    const plants::ModelList& models) {
  multiplex::JointControl u;
  std::size_t c = 0;
  for (const auto& m : models) {
    Eigen::VectorXd b(m->control_dim());
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      b[k] = parse_double(t.rows[r][cols[c++]], static_cast<int>(r) + 2);
    }
    u.blocks.push_back(std::move(b));
  }
  return u;
}

void check_step_column(const Table& t, std::size_t rows) {
  const std::size_t tc = t.column("t");
  for (std::size_t r = 0; r < rows; ++r) {
    if (t.rows[r][tc] != std::to_string(r)) {
      throw ParseError("line " + std::to_string(r + 2) + ": expected t = " + std::to_string(r));
    }
  }
}

void emit_condition(YAML::Emitter& y, const char* name, double value, double tol, bool ok) {
  y << YAML::Key << name << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "value" << YAML::Value << value;
  y << YAML::Key << "tolerance" << YAML::Value << tol;
  y << YAML::Key << "pass" << YAML::Value << ok;
  y << YAML::EndMap;
}

// Plants are numbered from 1 in every file; 0 marks a step without control
// and -1 a step with more than one active plant.
std::vector<int> schedule_numbers(const std::vector<int>& sigma) {
  std::vector<int> out;
  out.reserve(sigma.size());
  for (int v : sigma) out.push_back(v + 1);
  return out;
}

YAML::Emitter& begin(YAML::Emitter& y) {
  y.SetDoublePrecision(17);
  y << YAML::BeginMap;
  return y;
}

std::string finish(YAML::Emitter& y) {
  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> trajectory_header(const plants::ModelList& models) {
  std::vector<std::string> h{"t"};
  for (std::size_t i = 0; i < models.size(); ++i) h.push_back(plant_prefix('q', i) + "angle");
  for (std::size_t i = 0; i < models.size(); ++i) {
    h.push_back(plant_prefix('q', i) + "angle_unwrapped");
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (const auto& l : models[i]->euclid_labels()) h.push_back(plant_prefix('x', i) + l);
  }
  for (auto& c : control_columns(models)) h.push_back(std::move(c));
  h.emplace_back("w1");
  h.emplace_back("w2");
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (const auto& l : models[i]->constraint_labels()) h.push_back(plant_prefix('g', i) + l);
  }
  return h;
}

std::vector<std::string> control_header(const plants::ModelList& models) {
  std::vector<std::string> h{"t"};
  for (auto& c : control_columns(models)) h.push_back(std::move(c));
  return h;
}

void write_trajectory_csv(std::ostream& out, const plants::JointTrajectory& traj,
                          const plants::ModelList& models) {
  const std::size_t np = models.size();
  if (traj.plants() != static_cast<int>(np)) {
    throw DimensionMismatch("write_trajectory_csv: plant count mismatch");
  }
  const auto g = plants::constraint_values(traj, models);
  write_row(out, trajectory_header(models));
  for (std::size_t t = 0; t < traj.q.size(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (std::size_t i = 0; i < np; ++i) {
      const Eigen::MatrixXd& r = traj.q[t][i].matrix();
      row.push_back(format_double(std::atan2(r(1, 0), r(0, 0))));
    }
    for (std::size_t i = 0; i < np; ++i) row.push_back(format_double(traj.unwrapped_angle[t][i]));
    for (std::size_t i = 0; i < np; ++i) {
      for (double v : traj.x[t][i]) row.push_back(format_double(v));
    }
    for (std::size_t i = 0; i < np; ++i) {
      for (int k = 0; k < models[i]->control_dim(); ++k) {
        row.push_back(t < traj.u.size() ? format_double(traj.u[t].blocks[i][k]) : std::string());
      }
    }
    row.push_back(format_double(traj.w[t][0]));
    row.push_back(format_double(traj.w[t][1]));
    for (std::size_t i = 0; i < np; ++i) {
      for (double v : g[t][i]) row.push_back(format_double(v));
    }
    write_row(out, row);
  }
}

void write_controls_csv(std::ostream& out, std::span<const multiplex::JointControl> controls,
                        const plants::ModelList& models) {
  write_row(out, control_header(models));
  for (std::size_t t = 0; t < controls.size(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (const auto& b : controls[t].blocks) {
      for (double v : b) row.push_back(format_double(v));
    }
    write_row(out, row);
  }
}

plants::JointTrajectory read_trajectory_csv(std::istream& in, const plants::ModelList& models,
                                            int horizon) {
  const Table t = read_table(in);
  if (t.header != trajectory_header(models)) {
    throw ParseError("trajectory header does not match the scenario's plants");
  }
  const std::size_t n = static_cast<std::size_t>(horizon);
  if (t.rows.size() != n + 1) {
    throw ParseError("expected " + std::to_string(n + 1) + " trajectory rows, found " +
                     std::to_string(t.rows.size()));
  }
  check_step_column(t, n + 1);
  const std::size_t np = models.size();
  std::vector<std::size_t> ucols;
  for (const auto& name : control_columns(models)) ucols.push_back(t.column(name));
  for (std::size_t c : ucols) {
    if (!t.rows[n][c].empty()) throw ParseError("controls on the last row must be empty");
  }

  plants::JointTrajectory traj;
  for (std::size_t r = 0; r <= n; ++r) {
    const int line = static_cast<int>(r) + 2;
    std::vector<lie::GroupElement> q;
    std::vector<Eigen::VectorXd> x;
    std::vector<double> unwrapped;
    std::size_t c = 1;
    for (std::size_t i = 0; i < np; ++i) {
      q.push_back(lie::GroupElement::rotation(parse_double(t.rows[r][c++], line)));
    }
    for (std::size_t i = 0; i < np; ++i) unwrapped.push_back(parse_double(t.rows[r][c++], line));
    for (std::size_t i = 0; i < np; ++i) {
      Eigen::VectorXd xi(models[i]->euclid_dim());
      for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = parse_double(t.rows[r][c++], line);
      x.push_back(std::move(xi));
    }
    traj.q.push_back(std::move(q));
    traj.x.push_back(std::move(x));
    traj.unwrapped_angle.push_back(std::move(unwrapped));
    traj.w.emplace_back(parse_double(t.rows[r][t.column("w1")], line),
                        parse_double(t.rows[r][t.column("w2")], line));
    if (r < n) traj.u.push_back(control_row(t, r, ucols, models));
  }
  return traj;
}

std::vector<multiplex::JointControl> read_controls_csv(std::istream& in,
                                                       const plants::ModelList& models,
                                                       int horizon) {
  const Table t = read_table(in);
  const std::size_t n = static_cast<std::size_t>(horizon);
  std::vector<std::size_t> ucols;
  for (const auto& name : control_columns(models)) ucols.push_back(t.column(name));
  std::size_t rows = t.rows.size();
  // A trajectory file carries one extra row with empty controls.
  if (rows == n + 1 && std::all_of(ucols.begin(), ucols.end(),
                                   [&](std::size_t c) { return t.rows[n][c].empty(); })) {
    rows = n;
  }
  if (rows != n) {
    throw ParseError("expected " + std::to_string(n) + " control rows, found " +
                     std::to_string(rows));
  }
  check_step_column(t, n);
  std::vector<multiplex::JointControl> u;
  u.reserve(n);
  for (std::size_t r = 0; r < n; ++r) u.push_back(control_row(t, r, ucols, models));
  return u;
}

std::string solve_summary_yaml(const scenario::Scenario& s, const optimizer::SolveResult& r) {
  YAML::Emitter y;
  begin(y);
  y << YAML::Key << "scenario" << YAML::Value << s.name;
  y << YAML::Key << "status" << YAML::Value << optimizer::to_string(r.status);
  y << YAML::Key << "seed" << YAML::Value << r.seed;
  y << YAML::Key << "objective" << YAML::Value << r.objective;
  y << YAML::Key << "equality_residual" << YAML::Value << r.equality_residual;
  y << YAML::Key << "inequality_violation" << YAML::Value << r.inequality_violation;
  y << YAML::Key << "multiplexing_residual" << YAML::Value << r.multiplexing_residual;
  y << YAML::Key << "stationarity" << YAML::Value << r.stationarity;
  y << YAML::Key << "seeds" << YAML::Value << YAML::BeginSeq;
  for (const auto& k : r.seeds) {
    y << YAML::BeginMap;
    y << YAML::Key << "seed" << YAML::Value << k.seed;
    y << YAML::Key << "status" << YAML::Value << optimizer::to_string(k.status);
    y << YAML::Key << "objective" << YAML::Value << k.objective;
    y << YAML::Key << "equality_residual" << YAML::Value << k.equality_residual;
    y << YAML::Key << "inequality_violation" << YAML::Value << k.inequality_violation;
    y << YAML::Key << "multiplexing_residual" << YAML::Value << k.multiplexing_residual;
    y << YAML::Key << "stationarity" << YAML::Value << k.stationarity;
    y << YAML::Key << "outer_iterations" << YAML::Value << k.outer_iterations;
    y << YAML::Key << "inner_iterations" << YAML::Value << k.inner_iterations;
    if (!k.note.empty()) y << YAML::Key << "note" << YAML::Value << k.note;
    y << YAML::EndMap;
  }
  y << YAML::EndSeq;
  y << YAML::Key << "schedule" << YAML::Value << YAML::Flow << schedule_numbers(r.schedule);
  return finish(y);
}

std::string simulate_summary_yaml(const scenario::Scenario& s,
                                  const plants::JointTrajectory& traj,
                                  const std::string& failure, int failed_plant,
                                  int failed_step) {
  const plants::ModelList models = s.models();
  const auto layout = plants::layout_of(models);
  double energy = 0.0;
  double max_z = 0.0;
  std::vector<int> bad;
  for (std::size_t t = 0; t < traj.u.size(); ++t) {
    energy += 0.5 * traj.u[t].flatten().squaredNorm();
    max_z = std::max(max_z, multiplex::z(traj.u[t]).norm());
    if (!multiplex::star_membership(layout, traj.u[t]).member) bad.push_back(static_cast<int>(t));
  }
  double max_g = -std::numeric_limits<double>::infinity();
  for (const auto& step : plants::constraint_values(traj, models)) {
    for (const auto& g : step) {
      if (g.size() > 0) max_g = std::max(max_g, g.maxCoeff());
    }
  }

  YAML::Emitter y;
  begin(y);
  y << YAML::Key << "scenario" << YAML::Value << s.name;
  y << YAML::Key << "complete" << YAML::Value << failure.empty();
  y << YAML::Key << "steps" << YAML::Value << traj.u.size();
  if (!failure.empty()) {
    y << YAML::Key << "failure" << YAML::Value << YAML::BeginMap;
    y << YAML::Key << "plant" << YAML::Value << failed_plant + 1;
    y << YAML::Key << "step" << YAML::Value << failed_step;
    y << YAML::Key << "message" << YAML::Value << failure;
    y << YAML::EndMap;
  }
  y << YAML::Key << "objective" << YAML::Value << energy;
  y << YAML::Key << "w_final" << YAML::Value << YAML::Flow << YAML::BeginSeq << traj.w.back()[0]
    << traj.w.back()[1] << YAML::EndSeq;
  y << YAML::Key << "multiplexing_residual" << YAML::Value << max_z;
  y << YAML::Key << "multiplexed" << YAML::Value << bad.empty();
  y << YAML::Key << "non_multiplexed_steps" << YAML::Value << YAML::Flow << bad;
  y << YAML::Key << "max_constraint_value" << YAML::Value << max_g;
  return finish(y);
}

std::string report_yaml(const scenario::Scenario& s, const pmp::Estimate& e,
                        const scenario::VerifierTolerances& tol) {
  const pmp::Report& r = e.report;
  YAML::Emitter y;
  begin(y);
  y << YAML::Key << "scenario" << YAML::Value << s.name;
  y << YAML::Key << "verdict" << YAML::Value << (r.pass() ? "pass" : "fail");
  y << YAML::Key << "nu" << YAML::Value << e.certificate.nu;
  y << YAML::Key << "chi" << YAML::Value << YAML::Flow << YAML::BeginSeq << e.certificate.chi[0]
    << e.certificate.chi[1] << YAML::EndSeq;
  y << YAML::Key << "conditions" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "nontriviality" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "value" << YAML::Value << r.nontriviality;
  y << YAML::Key << "floor" << YAML::Value << tol.certificate;
  y << YAML::Key << "pass" << YAML::Value << r.nontriviality_ok;
  y << YAML::EndMap;
  emit_condition(y, "adjoint_recursion", r.recursion, tol.recursion, r.recursion_ok);
  if (r.transversality) {
    emit_condition(y, "transversality", *r.transversality, tol.transversality,
                   r.transversality_ok);
  } else {
    y << YAML::Key << "transversality" << YAML::Value << YAML::BeginMap;
    y << YAML::Key << "skipped" << YAML::Value << true;
    y << YAML::Key << "pass" << YAML::Value << true;
    y << YAML::EndMap;
  }
  emit_condition(y, "stationarity", r.stationarity, tol.stationarity, r.stationarity_ok);
  emit_condition(y, "complementary_slackness", r.slackness, tol.slackness, r.slackness_ok);
  emit_condition(y, "multiplier_sign", r.sign, tol.sign, r.sign_ok);
  emit_condition(y, "multiplexing", r.multiplexing, tol.multiplexing, r.multiplexing_ok);
  emit_condition(y, "primal_feasibility", r.feasibility, tol.feasibility, r.feasibility_ok);
  y << YAML::EndMap;
  y << YAML::Key << "stationarity_detail" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "served_plant" << YAML::Value << r.stationarity_on_branch;
  y << YAML::Key << "idle_plants" << YAML::Value << r.stationarity_off_branch;
  y << YAML::Key << "worst_step" << YAML::Value << r.worst_step;
  y << YAML::EndMap;
  y << YAML::Key << "fit" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "residual" << YAML::Value << e.fit_residual;
  y << YAML::Key << "unknowns" << YAML::Value << e.unknowns;
  y << YAML::Key << "rank" << YAML::Value << e.rank;
  y << YAML::Key << "active_constraints" << YAML::Value << e.active_constraints;
  if (e.degenerate) y << YAML::Key << "degenerate" << YAML::Value << *e.degenerate;
  y << YAML::EndMap;
  y << YAML::Key << "schedule" << YAML::Value << YAML::Flow << schedule_numbers(r.schedule);
  return finish(y);
}

}  // namespace mux::io
