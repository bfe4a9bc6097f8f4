#pragma once

// Direct transcription of the multiplexed energy-optimal control problem and
// an augmented-Lagrangian solver with a spectral projected-gradient inner
// loop.
//
// Decision vector: the controls U_0, ..., U_{N-1} concatenated, plant blocks
// in order inside each step. States are obtained by rollout. Constraints:
//   equalities   per plant: log(qbar_N^{-1} q_N), x_N - xbar_N   (fixed endpoint)
//                then w_N = sum_t z(U_t)                          (P >= 2)
//   inequalities g^i(q_t, x_t) <= 0 for t = 1..N, plant-major inside a step.
// The objective is sum_t 1/2 |U_t|^2 plus, for a free endpoint, the terminal
// cost sum_i 1/2 a_i e_i^2 + 1/2 sum_k b_ik (x_N - xbar_N)_k^2.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "muxopt/multiplex.hpp"
#include "muxopt/plants.hpp"
#include "muxopt/scenario.hpp"

namespace mux::optimizer {

enum class Status : std::uint8_t { Converged, NotConverged };
const char* to_string(Status s) noexcept;

struct SolveOptions {
  int seeds = 8;
  int threads = 0;
  int outer_iterations = 60;
  int inner_iterations = 4000;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e9;
  double inner_tolerance = 1e-6;
  double feasibility_tolerance = 1e-9;
  double fd_step = 1e-6;
  int schedule_outer_iterations = 8;
  double schedule_aid_weight = 1.0;
  std::uint64_t seed = 0;

  static SolveOptions from(const scenario::Scenario& s);
};

// Everything the solver needs about one scenario, immutable after transcribe().
class TranscribedNLP {
 public:
  struct Residuals {
    double objective = 0.0;
    Eigen::VectorXd equality;
    Eigen::VectorXd inequality;
  };

  int horizon() const noexcept { return horizon_; }
  int plants() const noexcept { return static_cast<int>(models_.size()); }
  int step_dim() const noexcept { return layout_.total_dim(); }
  int decision_dim() const noexcept { return horizon_ * layout_.total_dim(); }
  int equality_count() const noexcept { return equality_count_; }
  int inequality_count() const noexcept { return inequality_count_; }
  int constraint_rows_per_step() const noexcept { return constraints_per_step_; }
  // Index of the first w_N row, or -1 when P == 1.
  int aux_row() const noexcept { return aux_row_; }
  // First equality row of plant i (angle row, then its Euclidean rows).
  int terminal_row(int plant) const { return terminal_rows_.at(plant); }
  int constraint_offset(int plant) const { return constraint_offsets_.at(plant); }

  scenario::EndpointMode endpoint() const noexcept { return endpoint_; }
  const plants::ModelList& models() const noexcept { return models_; }
  const multiplex::ControlLayout& layout() const noexcept { return layout_; }
  const std::vector<lie::GroupElement>& initial_configurations() const noexcept { return q0_; }
  const std::vector<Eigen::VectorXd>& initial_states() const noexcept { return x0_; }
  const std::vector<lie::GroupElement>& target_configurations() const noexcept { return q_target_; }
  const std::vector<Eigen::VectorXd>& target_states() const noexcept { return x_target_; }
  const std::vector<double>& angle_weights() const noexcept { return angle_weights_; }
  const std::vector<Eigen::VectorXd>& state_weights() const noexcept { return state_weights_; }

  // Box bounds of the decision vector.
  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }

  // Row scales used inside the augmented Lagrangian: the solver works with
  // c / equality_scale and g / inequality_scale.
  const Eigen::VectorXd& equality_scale() const noexcept { return eq_scale_; }
  const Eigen::VectorXd& inequality_scale() const noexcept { return ineq_scale_; }

  // Throws ChartViolation when the rollout leaves the step-map chart.
  Residuals evaluate(std::span<const double> u) const;
  double objective(std::span<const double> u) const;

  std::vector<multiplex::JointControl> unflatten(std::span<const double> u) const;
  Eigen::VectorXd flatten(std::span<const multiplex::JointControl> controls) const;
  plants::JointTrajectory rollout(std::span<const double> u) const;

  // Terminal angle error log(qbar^{-1} q) without the chart check.
  static double angle_error(const Eigen::Matrix2d& target, const Eigen::Matrix2d& q);

 private:
  friend TranscribedNLP transcribe(const scenario::Scenario& s);

  int horizon_ = 0;
  scenario::EndpointMode endpoint_ = scenario::EndpointMode::Fixed;
  plants::ModelList models_;
  multiplex::ControlLayout layout_;
  std::vector<lie::GroupElement> q0_, q_target_;
  std::vector<Eigen::VectorXd> x0_, x_target_;
  std::vector<double> angle_weights_;
  std::vector<Eigen::VectorXd> state_weights_;
  Eigen::VectorXd lower_, upper_;
  Eigen::VectorXd eq_scale_, ineq_scale_;
  int equality_count_ = 0;
  int inequality_count_ = 0;
  int constraints_per_step_ = 0;
  int aux_row_ = -1;
  std::vector<int> terminal_rows_;
  std::vector<int> constraint_offsets_;
};

// Throws InvalidScenario.
TranscribedNLP transcribe(const scenario::Scenario& s);

// Multipliers and penalty of one augmented-Lagrangian subproblem. The
// optional aid adds 1/2 aid_weight sum_t |z(U_t / aid_scale)|^2.
struct LagrangianState {
  Eigen::VectorXd eq_multipliers;    // per scaled equality row
  Eigen::VectorXd ineq_multipliers;  // per scaled inequality row, >= 0
  double penalty = 10.0;
  double aid_weight = 0.0;

  static LagrangianState zero(const TranscribedNLP& nlp, double penalty);
};

// Value of the augmented Lagrangian; fills `grad` when it is non-empty.
// Returns +infinity when the rollout leaves the chart.
double augmented_lagrangian(const TranscribedNLP& nlp, const LagrangianState& state,
                            std::span<const double> u, std::span<double> grad);

// Gradient of the augmented Lagrangian by a backward adjoint sweep.
Eigen::VectorXd gradient(const TranscribedNLP& nlp, const LagrangianState& state,
                         const Eigen::VectorXd& u);

// Gradient of sum_e a_e c_e + sum_k b_k g_k + c0 * J (raw rows, no scaling).
Eigen::VectorXd weighted_gradient(const TranscribedNLP& nlp, const Eigen::VectorXd& u,
                                  double objective_weight, const Eigen::VectorXd& eq_weights,
                                  const Eigen::VectorXd& ineq_weights);

struct SpgResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double projected_gradient = 0.0;  // inf-norm of P(x - g) - x
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  // Reference values max(f over the last window) at each accepted step.
  std::vector<double> reference_values;
};

// Spectral projected gradient with a nonmonotone (windowed max) Armijo line
// search on the box [lower, upper].
using ValueGradient = std::function<double(std::span<const double>, std::span<double>)>;
SpgResult spg_minimize(const ValueGradient& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, int max_iterations, double tolerance,
                       int window = 10);

struct SeedReport {
  std::uint64_t seed = 0;
  Status status = Status::NotConverged;
  double objective = 0.0;
  double equality_residual = 0.0;
  double inequality_violation = 0.0;
  double multiplexing_residual = 0.0;
  double stationarity = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  std::string note;
};

struct SolveResult {
  std::vector<multiplex::JointControl> controls;
  plants::JointTrajectory trajectory;
  double objective = 0.0;
  double equality_residual = 0.0;      // max |c_e|
  double inequality_violation = 0.0;   // max(g, 0)
  double multiplexing_residual = 0.0;  // max_t |z(U_t)|
  double stationarity = 0.0;           // projected Lagrangian gradient, inf-norm
  Status status = Status::NotConverged;
  std::uint64_t seed = 0;
  // Plant served at each step (-1 when no control is applied).
  std::vector<int> schedule;
  std::vector<SeedReport> seeds;
};

// Multi-start solve. Throws NumericalBreakdown if every start produced
// non-finite values.
SolveResult solve(const TranscribedNLP& nlp, const SolveOptions& opts);

// Re-evaluates residuals of a given control sequence exactly.
SolveResult assess(const TranscribedNLP& nlp, const Eigen::VectorXd& u, double stationarity = 0.0);

}  // namespace mux::optimizer
