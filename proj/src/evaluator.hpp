#pragma once

// Allocation-free forward rollout and backward adjoint sweep over a
// transcribed problem. Not thread-safe; use one instance per worker.

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "muxopt/optimizer.hpp"

namespace mux::optimizer::detail {

class Evaluator {
 public:
  explicit Evaluator(const TranscribedNLP& nlp);

  // Rolls out the controls. Returns false when a step leaves the chart.
  bool forward(std::span<const double> u);

  double objective() const;
  void equality(Eigen::Ref<Eigen::VectorXd> c) const;
  void inequality(Eigen::Ref<Eigen::VectorXd> g) const;

  // grad = objective_weight * dJ/du + sum_e eq_w_e dc_e/du + sum_k ineq_w_k dg_k/du,
  // evaluated at the last forward() point.
  void backward(double objective_weight, const Eigen::Ref<const Eigen::VectorXd>& eq_w,
                const Eigen::Ref<const Eigen::VectorXd>& ineq_w, std::span<double> grad);

  // Terminal configuration of plant i after forward().
  const Eigen::Matrix2d& final_rotation(int plant) const { return rot_[plant].back(); }

 private:
  const TranscribedNLP& nlp_;
  std::span<const double> u_;
  // rot_[i][t], states_[i].col(t) for t = 0..N.
  std::vector<std::vector<Eigen::Matrix2d>> rot_;
  std::vector<Eigen::MatrixXd> states_;
  Eigen::Vector2d w_final_ = Eigen::Vector2d::Zero();
  std::vector<plants::StepJacobians> jac_;
  std::vector<Eigen::MatrixXd> gjac_;
  std::vector<Eigen::VectorXd> lam_x_, lam_x_next_;
};

// z(U_t) from a flat per-step control block.
Eigen::Vector2d step_z(const multiplex::ControlLayout& layout, const double* u);

// Adds scale * d<chi, z(U_t)>/dU_t to grad.
void add_step_z_gradient(const multiplex::ControlLayout& layout, const double* u,
                         const Eigen::Vector2d& chi, double* grad);

// Per-coordinate normalisation of the multiplexing aid: max(|lower|, |upper|).
Eigen::VectorXd aid_scale(const TranscribedNLP& nlp);

// Augmented Lagrangian at u using `ev` as workspace; fills grad when it is
// non-empty. +infinity when the rollout leaves the chart.
double lagrangian_value(const TranscribedNLP& nlp, Evaluator& ev, const LagrangianState& st,
                        const Eigen::VectorXd& scale, std::span<const double> u,
                        std::span<double> grad);

}  // namespace mux::optimizer::detail
