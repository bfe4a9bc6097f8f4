#include <cmath>
#include <limits>
#include <string>

#include "evaluator.hpp"
#include "muxopt/errors.hpp"
#include "muxopt/optimizer.hpp"

namespace mux::optimizer {
namespace detail {

Eigen::Vector2d step_z(const multiplex::ControlLayout& layout, const double* u) {
  Eigen::Vector2d z = Eigen::Vector2d::Zero();
  const int p = layout.plants();
  for (int i = 0; i + 1 < p; ++i) {
    const Eigen::Map<const Eigen::VectorXd> ui(u + layout.offset(i), layout.dim(i));
    const double ni = ui.squaredNorm();
    const double si = ui.sum();
    for (int j = i + 1; j < p; ++j) {
      const Eigen::Map<const Eigen::VectorXd> uj(u + layout.offset(j), layout.dim(j));
      const double a = ni * uj.squaredNorm();
      const double b = si * uj.sum();
      z[0] += a + b;
      z[1] += a - b;
    }
  }
  return z;
}

void add_step_z_gradient(const multiplex::ControlLayout& layout, const double* u,
                         const Eigen::Vector2d& chi, double* grad) {
  const int p = layout.plants();
  if (p < 2) return;
  double total_sq = 0.0;
  double total_sum = 0.0;
  for (int i = 0; i < p; ++i) {
    const Eigen::Map<const Eigen::VectorXd> ui(u + layout.offset(i), layout.dim(i));
    total_sq += ui.squaredNorm();
    total_sum += ui.sum();
  }
  const double cs = chi[0] + chi[1];
  const double cd = chi[0] - chi[1];
  for (int i = 0; i < p; ++i) {
    const Eigen::Map<const Eigen::VectorXd> ui(u + layout.offset(i), layout.dim(i));
    Eigen::Map<Eigen::VectorXd> gi(grad + layout.offset(i), layout.dim(i));
    const double other_sq = total_sq - ui.squaredNorm();
    const double other_sum = total_sum - ui.sum();
    gi.array() += 2.0 * cs * other_sq * ui.array() + cd * other_sum;
  }
}

Evaluator::Evaluator(const TranscribedNLP& nlp) : nlp_(nlp) {
  const int p = nlp.plants();
  const int n_steps = nlp.horizon();
  rot_.resize(p);
  states_.resize(p);
  for (int i = 0; i < p; ++i) {
    const auto& m = *nlp.models()[i];
    rot_[i].assign(n_steps + 1, Eigen::Matrix2d::Identity());
    states_[i] = Eigen::MatrixXd::Zero(m.euclid_dim(), n_steps + 1);
    jac_.push_back(m.make_jacobians());
    gjac_.push_back(Eigen::MatrixXd::Zero(m.constraint_dim(), m.euclid_dim()));
    lam_x_.push_back(Eigen::VectorXd::Zero(m.euclid_dim()));
    lam_x_next_.push_back(Eigen::VectorXd::Zero(m.euclid_dim()));
  }
}

bool Evaluator::forward(std::span<const double> u) {
  u_ = u;
  const auto& layout = nlp_.layout();
  const int p = nlp_.plants();
  const int n_steps = nlp_.horizon();
  const int d = layout.total_dim();
  for (int i = 0; i < p; ++i) {
    rot_[i][0] = nlp_.initial_configurations()[i].matrix();
    states_[i].col(0) = nlp_.initial_states()[i];
  }
  w_final_.setZero();
  try {
    for (int t = 0; t < n_steps; ++t) {
      const double* ut = u.data() + static_cast<std::ptrdiff_t>(t) * d;
      for (int i = 0; i < p; ++i) {
        const auto& m = *nlp_.models()[i];
        const Eigen::Map<const Eigen::VectorXd> ui(ut + layout.offset(i), layout.dim(i));
        const Eigen::Matrix2d& r = rot_[i][t];
        rot_[i][t + 1] = r * m.step_group(r, states_[i].col(t));
        m.step_euclid(r, states_[i].col(t), ui, states_[i].col(t + 1));
      }
      if (p > 1) w_final_ += step_z(layout, ut);
    }
  } catch (const ChartViolation&) {
    return false;
  }
  for (int i = 0; i < p; ++i) {
    if (!states_[i].allFinite()) return false;
  }
  return std::isfinite(w_final_[0]) && std::isfinite(w_final_[1]);
}

double Evaluator::objective() const {
  double j = 0.0;
  for (double v : u_) j += 0.5 * v * v;
  if (nlp_.endpoint() == scenario::EndpointMode::Free) {
    for (int i = 0; i < nlp_.plants(); ++i) {
      const double e = TranscribedNLP::angle_error(nlp_.target_configurations()[i].matrix(),
                                                   rot_[i].back());
      const Eigen::VectorXd dx = states_[i].col(nlp_.horizon()) - nlp_.target_states()[i];
      j += 0.5 * nlp_.angle_weights()[i] * e * e;
      j += 0.5 * (nlp_.state_weights()[i].array() * dx.array().square()).sum();
    }
  }
  return j;
}

void Evaluator::equality(Eigen::Ref<Eigen::VectorXd> c) const {
  if (nlp_.endpoint() == scenario::EndpointMode::Fixed) {
    for (int i = 0; i < nlp_.plants(); ++i) {
      const int row = nlp_.terminal_row(i);
      const int n = nlp_.models()[i]->euclid_dim();
      c[row] = TranscribedNLP::angle_error(nlp_.target_configurations()[i].matrix(),
                                           rot_[i].back());
      c.segment(row + 1, n) = states_[i].col(nlp_.horizon()) - nlp_.target_states()[i];
    }
  }
  if (nlp_.aux_row() >= 0) c.segment<2>(nlp_.aux_row()) = w_final_;
}

void Evaluator::inequality(Eigen::Ref<Eigen::VectorXd> g) const {
  const int rows = nlp_.constraint_rows_per_step();
  for (int t = 1; t <= nlp_.horizon(); ++t) {
    for (int i = 0; i < nlp_.plants(); ++i) {
      const auto& m = *nlp_.models()[i];
      m.constraints(rot_[i][t], states_[i].col(t),
                    g.segment(static_cast<Eigen::Index>(t - 1) * rows + nlp_.constraint_offset(i),
                              m.constraint_dim()));
    }
  }
}

void Evaluator::backward(double objective_weight, const Eigen::Ref<const Eigen::VectorXd>& eq_w,
                         const Eigen::Ref<const Eigen::VectorXd>& ineq_w, std::span<double> grad) {
  const auto& layout = nlp_.layout();
  const int p = nlp_.plants();
  const int n_steps = nlp_.horizon();
  const int d = layout.total_dim();
  const int rows = nlp_.constraint_rows_per_step();
  const bool fixed = nlp_.endpoint() == scenario::EndpointMode::Fixed;

  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = objective_weight * u_[k];
  if (nlp_.aux_row() >= 0) {
    const Eigen::Vector2d chi = eq_w.segment<2>(nlp_.aux_row());
    if (chi[0] != 0.0 || chi[1] != 0.0) {
      for (int t = 0; t < n_steps; ++t) {
        const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(t) * d;
        add_step_z_gradient(layout, u_.data() + at, chi, grad.data() + at);
      }
    }
  }

  for (int i = 0; i < p; ++i) {
    const auto& m = *nlp_.models()[i];
    const int n = m.euclid_dim();
    const int l = m.constraint_dim();
    const int coff = nlp_.constraint_offset(i);
    auto& jac = jac_[i];
    auto& gj = gjac_[i];
    Eigen::VectorXd& lam = lam_x_[i];
    Eigen::VectorXd& lam_prev = lam_x_next_[i];

    // Seeds at t = N.
    double a = 0.0;
    lam.setZero();
    if (fixed) {
      const int row = nlp_.terminal_row(i);
      a += eq_w[row];
      lam += eq_w.segment(row + 1, n);
    } else if (objective_weight != 0.0) {
      const double e = TranscribedNLP::angle_error(nlp_.target_configurations()[i].matrix(),
                                                   rot_[i].back());
      a += objective_weight * nlp_.angle_weights()[i] * e;
      lam.array() += objective_weight * nlp_.state_weights()[i].array() *
                     (states_[i].col(n_steps) - nlp_.target_states()[i]).array();
    }
    {
      const auto wn = ineq_w.segment(static_cast<Eigen::Index>(n_steps - 1) * rows + coff, l);
      if (!wn.isZero(0.0)) {
        m.constraint_jacobian(rot_[i][n_steps], states_[i].col(n_steps), gj);
        lam.noalias() += gj.transpose() * wn;
      }
    }

    for (int t = n_steps - 1; t >= 0; --t) {
      const Eigen::Map<const Eigen::VectorXd> ui(
          u_.data() + static_cast<std::ptrdiff_t>(t) * d + layout.offset(i), layout.dim(i));
      m.step_jacobians(rot_[i][t], states_[i].col(t), ui, jac);
      Eigen::Map<Eigen::VectorXd> gi(grad.data() + static_cast<std::ptrdiff_t>(t) * d +
                                         layout.offset(i),
                                     layout.dim(i));
      gi.noalias() += jac.fu.transpose() * lam;
      // lam_t = sx^T a_{t+1} + fx^T lam_{t+1} + Gx^T b_t ;  a_t = a_{t+1} + fq^T lam_{t+1}
      lam_prev.noalias() = jac.fx.transpose() * lam;
      lam_prev.noalias() += jac.sx.transpose() * a;
      a += jac.fq.dot(lam);
      if (t >= 1) {
        const auto wt = ineq_w.segment(static_cast<Eigen::Index>(t - 1) * rows + coff, l);
        if (!wt.isZero(0.0)) {
          m.constraint_jacobian(rot_[i][t], states_[i].col(t), gj);
          lam_prev.noalias() += gj.transpose() * wt;
        }
      }
      lam.swap(lam_prev);
    }
  }
}

}  // namespace detail

const char* to_string(Status s) noexcept {
  return s == Status::Converged ? "converged" : "not_converged";
}

SolveOptions SolveOptions::from(const scenario::Scenario& s) {
  SolveOptions o;
  const auto& v = s.solver;
  o.seeds = v.seeds;
  o.threads = v.threads;
  o.outer_iterations = v.outer_iterations;
  o.inner_iterations = v.inner_iterations;
  o.initial_penalty = v.initial_penalty;
  o.penalty_growth = v.penalty_growth;
  o.max_penalty = v.max_penalty;
  o.inner_tolerance = v.inner_tolerance;
  o.feasibility_tolerance = v.feasibility_tolerance;
  o.fd_step = v.fd_step;
  o.schedule_outer_iterations = v.schedule_outer_iterations;
  o.schedule_aid_weight = v.schedule_aid_weight;
  o.seed = s.seed;
  return o;
}

double TranscribedNLP::angle_error(const Eigen::Matrix2d& target, const Eigen::Matrix2d& q) {
  const Eigen::Matrix2d rel = target.transpose() * q;
  return std::atan2(rel(1, 0), rel(0, 0));
}

TranscribedNLP::Residuals TranscribedNLP::evaluate(std::span<const double> u) const {
  if (static_cast<int>(u.size()) != decision_dim()) {
    throw DimensionMismatch("evaluate: decision vector has wrong length");
  }
  detail::Evaluator ev(*this);
  if (!ev.forward(u)) throw ChartViolation("evaluate: rollout left the chart of the step map");
  Residuals r;
  r.objective = ev.objective();
  r.equality = Eigen::VectorXd::Zero(equality_count_);
  r.inequality = Eigen::VectorXd::Zero(inequality_count_);
  ev.equality(r.equality);
  ev.inequality(r.inequality);
  return r;
}

double TranscribedNLP::objective(std::span<const double> u) const { return evaluate(u).objective; }

std::vector<multiplex::JointControl> TranscribedNLP::unflatten(std::span<const double> u) const {
  if (static_cast<int>(u.size()) != decision_dim()) {
    throw DimensionMismatch("unflatten: decision vector has wrong length");
  }
  std::vector<multiplex::JointControl> out;
  out.reserve(horizon_);
  const int d = step_dim();
  for (int t = 0; t < horizon_; ++t) {
    out.push_back(multiplex::JointControl::from_flat(layout_, u.subspan(static_cast<std::size_t>(t) * d, d)));
  }
  return out;
}

Eigen::VectorXd TranscribedNLP::flatten(std::span<const multiplex::JointControl> controls) const {
  if (static_cast<int>(controls.size()) != horizon_) {
    throw DimensionMismatch("flatten: expected " + std::to_string(horizon_) + " steps");
  }
  Eigen::VectorXd u(decision_dim());
  const int d = step_dim();
  for (int t = 0; t < horizon_; ++t) {
    const Eigen::VectorXd f = controls[t].flatten();
    if (f.size() != d) throw DimensionMismatch("flatten: control width mismatch");
    u.segment(static_cast<Eigen::Index>(t) * d, d) = f;
  }
  return u;
}

plants::JointTrajectory TranscribedNLP::rollout(std::span<const double> u) const {
  const auto controls = unflatten(u);
  return plants::joint_rollout(models_, q0_, x0_, controls);
}

TranscribedNLP transcribe(const scenario::Scenario& s) {
  s.validate();
  TranscribedNLP nlp;
  nlp.horizon_ = s.horizon;
  nlp.endpoint_ = s.endpoint;
  nlp.models_ = s.models();
  nlp.layout_ = plants::layout_of(nlp.models_);
  nlp.q0_ = s.initial_configurations();
  nlp.x0_ = s.initial_states();
  nlp.q_target_ = s.terminal_configurations();
  nlp.x_target_ = s.terminal_states();
  for (const auto& p : s.plants) {
    nlp.angle_weights_.push_back(p.angle_weight);
    nlp.state_weights_.push_back(p.state_weights);
  }

  const int p = nlp.plants();
  const int d = nlp.layout_.total_dim();
  nlp.lower_.resize(static_cast<Eigen::Index>(s.horizon) * d);
  nlp.upper_.resize(nlp.lower_.size());
  for (int t = 0; t < s.horizon; ++t) {
    for (int i = 0; i < p; ++i) {
      const auto& box = nlp.layout_.box(i);
      nlp.lower_.segment(static_cast<Eigen::Index>(t) * d + nlp.layout_.offset(i), box.dim()) = box.lower;
      nlp.upper_.segment(static_cast<Eigen::Index>(t) * d + nlp.layout_.offset(i), box.dim()) = box.upper;
    }
  }

  int row = 0;
  for (int i = 0; i < p; ++i) {
    nlp.terminal_rows_.push_back(row);
    if (s.endpoint == scenario::EndpointMode::Fixed) row += 1 + nlp.models_[i]->euclid_dim();
  }
  if (p > 1) {
    nlp.aux_row_ = row;
    row += 2;
  }
  nlp.equality_count_ = row;

  int per_step = 0;
  for (int i = 0; i < p; ++i) {
    nlp.constraint_offsets_.push_back(per_step);
    per_step += nlp.models_[i]->constraint_dim();
  }
  nlp.constraints_per_step_ = per_step;
  nlp.inequality_count_ = per_step * s.horizon;

  // Inequality scales: the constraint value at the rest state (the square of
  // the bound for the shipped constraints) times N. Gradients of consecutive
  // path rows are nearly parallel, so without the factor N the penalty
  // curvature of an active arc grows with its length.
  Eigen::VectorXd step_scale(per_step);
  for (int i = 0; i < p; ++i) {
    const auto& m = *nlp.models_[i];
    Eigen::VectorXd g(m.constraint_dim());
    m.constraints(Eigen::Matrix2d::Identity(), Eigen::VectorXd::Zero(m.euclid_dim()), g);
    step_scale.segment(nlp.constraint_offsets_[i], g.size()) =
        (2.0 * g.array().abs()).max(1e-12).matrix();
  }
  nlp.ineq_scale_ = step_scale.replicate(s.horizon, 1) * static_cast<double>(s.horizon);

  // Equality scales: gradient norms of the terminal rows at U = 0, and the
  // per-step magnitude of z at the box corners for the aux rows.
  nlp.eq_scale_ = Eigen::VectorXd::Ones(row);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(nlp.decision_dim());
  detail::Evaluator ev(nlp);
  if (!ev.forward({zero.data(), static_cast<std::size_t>(zero.size())})) {
    throw InvalidScenario("transcribe: the uncontrolled rollout leaves the chart of the step map");
  }
  if (s.endpoint == scenario::EndpointMode::Fixed) {
    Eigen::VectorXd grad(nlp.decision_dim());
    const Eigen::VectorXd no_ineq = Eigen::VectorXd::Zero(nlp.inequality_count_);
    const int terminal_rows = p > 1 ? nlp.aux_row_ : row;
    for (int r = 0; r < terminal_rows; ++r) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(row);
      w[r] = 1.0;
      ev.backward(0.0, w, no_ineq, {grad.data(), static_cast<std::size_t>(grad.size())});
      nlp.eq_scale_[r] = std::max(grad.norm(), 1e-8);
    }
  }
  if (p > 1) {
    double zs = 0.0;
    for (int i = 0; i < p; ++i) {
      for (int j = i + 1; j < p; ++j) {
        const auto& bi = nlp.layout_.box(i);
        const auto& bj = nlp.layout_.box(j);
        const double ni = bi.lower.cwiseAbs().cwiseMax(bi.upper.cwiseAbs()).sum();
        const double nj = bj.lower.cwiseAbs().cwiseMax(bj.upper.cwiseAbs()).sum();
        zs += ni * nj;
      }
    }
    nlp.eq_scale_.segment<2>(nlp.aux_row_).setConstant(std::max(zs, 1e-12));
  }
  return nlp;
}

LagrangianState LagrangianState::zero(const TranscribedNLP& nlp, double penalty) {
  LagrangianState s;
  s.eq_multipliers = Eigen::VectorXd::Zero(nlp.equality_count());
  s.ineq_multipliers = Eigen::VectorXd::Zero(nlp.inequality_count());
  s.penalty = penalty;
  return s;
}

namespace detail {

Eigen::VectorXd aid_scale(const TranscribedNLP& nlp) {
  return nlp.lower().cwiseAbs().cwiseMax(nlp.upper().cwiseAbs()).cwiseMax(1e-12);
}

double lagrangian_value(const TranscribedNLP& nlp, detail::Evaluator& ev, const LagrangianState& st,
                const Eigen::VectorXd& scale, std::span<const double> u, std::span<double> grad) {
  if (!ev.forward(u)) return std::numeric_limits<double>::infinity();
  Eigen::VectorXd c(nlp.equality_count());
  Eigen::VectorXd g(nlp.inequality_count());
  ev.equality(c);
  ev.inequality(g);
  const double rho = st.penalty;
  const Eigen::VectorXd cs = c.cwiseQuotient(nlp.equality_scale());
  const Eigen::VectorXd gs = g.cwiseQuotient(nlp.inequality_scale());
  const Eigen::VectorXd shifted = (st.ineq_multipliers + rho * gs).cwiseMax(0.0);
  double value = ev.objective() + st.eq_multipliers.dot(cs) + 0.5 * rho * cs.squaredNorm() +
                 (shifted.squaredNorm() - st.ineq_multipliers.squaredNorm()) / (2.0 * rho);

  const auto& layout = nlp.layout();
  const int d = layout.total_dim();
  const bool aid = st.aid_weight > 0.0 && nlp.plants() > 1;
  Eigen::VectorXd tmp;
  if (aid) tmp.resize(d);
  if (aid) {
    for (int t = 0; t < nlp.horizon(); ++t) {
      const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(t) * d;
      tmp = Eigen::Map<const Eigen::VectorXd>(u.data() + at, d).cwiseQuotient(scale.segment(at, d));
      const Eigen::Vector2d zt = detail::step_z(layout, tmp.data());
      value += 0.5 * st.aid_weight * zt.squaredNorm();
    }
  }
  if (grad.empty()) return value;

  const Eigen::VectorXd eq_w = (st.eq_multipliers + rho * cs).cwiseQuotient(nlp.equality_scale());
  const Eigen::VectorXd ineq_w = shifted.cwiseQuotient(nlp.inequality_scale());
  ev.backward(1.0, eq_w, ineq_w, grad);
  if (aid) {
    Eigen::VectorXd gt(d);
    for (int t = 0; t < nlp.horizon(); ++t) {
      const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(t) * d;
      tmp = Eigen::Map<const Eigen::VectorXd>(u.data() + at, d).cwiseQuotient(scale.segment(at, d));
      const Eigen::Vector2d zt = detail::step_z(layout, tmp.data());
      if (zt.isZero(0.0)) continue;
      gt.setZero();
      detail::add_step_z_gradient(layout, tmp.data(), st.aid_weight * zt, gt.data());
      Eigen::Map<Eigen::VectorXd>(grad.data() + at, d) += gt.cwiseQuotient(scale.segment(at, d));
    }
  }
  return value;
}

}  // namespace detail

double augmented_lagrangian(const TranscribedNLP& nlp, const LagrangianState& state,
                            std::span<const double> u, std::span<double> grad) {
  detail::Evaluator ev(nlp);
  return detail::lagrangian_value(nlp, ev, state, detail::aid_scale(nlp), u, grad);
}

Eigen::VectorXd gradient(const TranscribedNLP& nlp, const LagrangianState& state,
                         const Eigen::VectorXd& u) {
  Eigen::VectorXd g(u.size());
  const double v = augmented_lagrangian(nlp, state, {u.data(), static_cast<std::size_t>(u.size())},
                                        {g.data(), static_cast<std::size_t>(g.size())});
  if (!std::isfinite(v)) throw ChartViolation("gradient: rollout left the chart of the step map");
  return g;
}

Eigen::VectorXd weighted_gradient(const TranscribedNLP& nlp, const Eigen::VectorXd& u,
                                  double objective_weight, const Eigen::VectorXd& eq_weights,
                                  const Eigen::VectorXd& ineq_weights) {
  detail::Evaluator ev(nlp);
  if (!ev.forward({u.data(), static_cast<std::size_t>(u.size())})) {
    throw ChartViolation("weighted_gradient: rollout left the chart of the step map");
  }
  Eigen::VectorXd g(u.size());
  ev.backward(objective_weight, eq_weights, ineq_weights,
              {g.data(), static_cast<std::size_t>(g.size())});
  return g;
}

}  // namespace mux::optimizer
