#include "muxopt/plants.hpp"

#include <cmath>
#include <string>
#include <tuple>

#include "muxopt/errors.hpp"

namespace mux::plants {
namespace {

// Unit skew matrix E = hat(1).
const Eigen::Matrix2d& unit_skew() {
  static const Eigen::Matrix2d e = (Eigen::Matrix2d() << 0.0, -1.0, 1.0, 0.0).finished();
  return e;
}

double chart_sqrt(double momentum, double h) {
  const double hm = h * momentum;
  if (!(std::abs(hm) < kChartGuard)) {
    throw ChartViolation("step: |h M| = " + std::to_string(std::abs(hm)) +
                         " leaves the domain of F_h");
  }
  return std::sqrt(1.0 - hm * hm);
}

Eigen::Matrix2d as_matrix2(const lie::GroupElement& q) {
  if (q.group_id() != lie::GroupId::SO2) {
    throw DimensionMismatch("plant configuration must be an SO2 element");
  }
  return q.matrix();
}

}  // namespace

Eigen::Matrix2d step_rotation(double momentum, double h) {
  const double c = chart_sqrt(momentum, h);
  const double s = h * momentum;
  Eigen::Matrix2d f;
  f << c, -s, s, c;
  return f;
}

Eigen::Matrix2d step_rotation_derivative(double momentum, double h) {
  const double c = chart_sqrt(momentum, h);
  const double dc = -h * h * momentum / c;
  Eigen::Matrix2d d;
  d << dc, -h, h, dc;
  return d;
}

PlantModel::PlantModel(double h, multiplex::Box control_box)
    : h_(h), box_(std::move(control_box)) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw InvalidArgument("PlantModel: step must be positive");
  }
}

StepJacobians PlantModel::make_jacobians() const {
  const int n = euclid_dim();
  const int m = control_dim();
  return {Eigen::RowVectorXd::Zero(n), Eigen::VectorXd::Zero(n),
          Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, m)};
}

lie::GroupElement PlantModel::step_group(const lie::GroupElement& q,
                                         const Eigen::VectorXd& x) const {
  return {lie::GroupId::SO2, step_group(as_matrix2(q), x)};
}

Eigen::VectorXd PlantModel::step_euclid(const lie::GroupElement& q,
                                        const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& u) const {
  if (x.size() != euclid_dim() || u.size() != control_dim()) {
    throw DimensionMismatch("step_euclid: state or control has wrong length");
  }
  Eigen::VectorXd out(euclid_dim());
  step_euclid(as_matrix2(q), x, u, out);
  return out;
}

Eigen::VectorXd PlantModel::constraints(const lie::GroupElement& q,
                                        const Eigen::VectorXd& x) const {
  if (x.size() != euclid_dim()) {
    throw DimensionMismatch("constraints: state has wrong length");
  }
  Eigen::VectorXd out(constraint_dim());
  constraints(as_matrix2(q), x, out);
  return out;
}

SatelliteModel::SatelliteModel(double h, double torque_bound, double momentum_bound,
                               double inertia)
    : PlantModel(h, multiplex::Box::symmetric(Eigen::VectorXd::Constant(1, torque_bound))),
      torque_bound_(torque_bound),
      momentum_bound_(momentum_bound),
      inertia_(inertia) {
  if (!(torque_bound >= 0.0) || !(momentum_bound > 0.0)) {
    throw InvalidArgument("SatelliteModel: bounds must be positive");
  }
}

Eigen::Matrix2d SatelliteModel::step_group(const Eigen::Matrix2d&,
                                           const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return step_rotation(x[0], step());
}

void SatelliteModel::step_euclid(const Eigen::Matrix2d&,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& u,
                                 Eigen::Ref<Eigen::VectorXd> out) const {
  out[0] = x[0] + step() * u[0];
}

void SatelliteModel::constraints(const Eigen::Matrix2d&,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 Eigen::Ref<Eigen::VectorXd> out) const {
  out[0] = 0.5 * (x[0] * x[0] - momentum_bound_ * momentum_bound_);
}

void SatelliteModel::step_jacobians(const Eigen::Matrix2d&,
                                    const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>&,
                                    StepJacobians& jac) const {
  const double h = step();
  jac.sx(0) = h / chart_sqrt(x[0], h);
  jac.fq(0) = 0.0;
  jac.fx(0, 0) = 1.0;
  jac.fu(0, 0) = h;
}

void SatelliteModel::constraint_jacobian(const Eigen::Matrix2d&,
                                         const Eigen::Ref<const Eigen::VectorXd>& x,
                                         Eigen::Ref<Eigen::MatrixXd> out) const {
  out(0, 0) = x[0];
}

UWVehicleModel::UWVehicleModel(double h, const Eigen::Vector3d& control_bounds,
                               const Eigen::Vector3d& state_bounds,
                               const Eigen::Matrix2d& mass)
    : PlantModel(h, multiplex::Box::symmetric(control_bounds)),
      control_bounds_(control_bounds),
      state_bounds_(state_bounds),
      mass_(mass) {
  if ((control_bounds.array() < 0.0).any() || (state_bounds.array() <= 0.0).any()) {
    throw InvalidArgument("UWVehicleModel: bounds must be positive");
  }
  if ((mass - mass.transpose()).cwiseAbs().maxCoeff() > 1e-12 * mass.cwiseAbs().maxCoeff()) {
    throw SingularMass("UWVehicleModel: mass matrix is not symmetric");
  }
  Eigen::LLT<Eigen::Matrix2d> llt(mass);
  if (llt.info() != Eigen::Success || !(mass.determinant() > 0.0)) {
    throw SingularMass("UWVehicleModel: mass matrix is not positive definite");
  }
  mass_inv_ = llt.solve(Eigen::Matrix2d::Identity());
}

Eigen::Matrix2d UWVehicleModel::step_group(const Eigen::Matrix2d&,
                                           const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return step_rotation(x[0], step());
}

void UWVehicleModel::step_euclid(const Eigen::Matrix2d& r,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& u,
                                 Eigen::Ref<Eigen::VectorXd> out) const {
  const double h = step();
  const Eigen::Matrix2d f = step_rotation(x[0], h);
  const Eigen::Vector2d v = x.segment<2>(3);
  const Eigen::Vector2d phi = u.segment<2>(1);
  const Eigen::Vector2d p_next = x.segment<2>(1) + h * (r * v);
  const Eigen::Vector2d v_next = mass_inv_ * (f.transpose() * (mass_ * v) + h * phi);
  out[0] = x[0] + h * u[0];
  out.segment<2>(1) = p_next;
  out.segment<2>(3) = v_next;
}

void UWVehicleModel::constraints(const Eigen::Matrix2d&,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 Eigen::Ref<Eigen::VectorXd> out) const {
  out[0] = 0.5 * (x[0] * x[0] - state_bounds_[0] * state_bounds_[0]);
  out[1] = 0.5 * (x[3] * x[3] - state_bounds_[1] * state_bounds_[1]);
  out[2] = 0.5 * (x[4] * x[4] - state_bounds_[2] * state_bounds_[2]);
}

void UWVehicleModel::step_jacobians(const Eigen::Matrix2d& r,
                                    const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>&,
                                    StepJacobians& jac) const {
  const double h = step();
  const Eigen::Matrix2d f = step_rotation(x[0], h);
  const Eigen::Matrix2d df = step_rotation_derivative(x[0], h);
  const Eigen::Vector2d v = x.segment<2>(3);

  jac.sx.setZero();
  jac.sx(0) = h / chart_sqrt(x[0], h);

  jac.fq.setZero();
  jac.fq.segment<2>(1) = h * (r * unit_skew() * v);

  jac.fx.setZero();
  jac.fx(0, 0) = 1.0;
  jac.fx.block<2, 2>(1, 1).setIdentity();
  jac.fx.block<2, 2>(1, 3) = h * r;
  jac.fx.block<2, 1>(3, 0) = mass_inv_ * (df.transpose() * (mass_ * v));
  jac.fx.block<2, 2>(3, 3) = mass_inv_ * f.transpose() * mass_;

  jac.fu.setZero();
  jac.fu(0, 0) = h;
  jac.fu.block<2, 2>(3, 1) = h * mass_inv_;
}

void UWVehicleModel::constraint_jacobian(const Eigen::Matrix2d&,
                                         const Eigen::Ref<const Eigen::VectorXd>& x,
                                         Eigen::Ref<Eigen::MatrixXd> out) const {
  out.setZero();
  out(0, 0) = x[0];
  out(1, 3) = x[3];
  out(2, 4) = x[4];
}

std::pair<lie::GroupElement, double> satellite_step(const lie::GroupElement& r,
                                                    double momentum, double tau,
                                                    double h) {
  const Eigen::Matrix2d f = step_rotation(momentum, h);
  return {lie::GroupElement(lie::GroupId::SO2, as_matrix2(r) * f), momentum + h * tau};
}

UWState uw_step(const UWState& s, double tau, const Eigen::Vector2d& phi, double h,
                const Eigen::Matrix2d& mass) {
  Eigen::FullPivLU<Eigen::Matrix2d> lu(mass);
  if (!lu.isInvertible()) throw SingularMass("uw_step: mass matrix is singular");
  const Eigen::Matrix2d r = as_matrix2(s.r);
  const Eigen::Matrix2d f = step_rotation(s.momentum, h);
  UWState next;
  next.r = lie::GroupElement(lie::GroupId::SO2, r * f);
  next.momentum = s.momentum + h * tau;
  next.position = s.position + h * (r * s.velocity);
  next.velocity = lu.solve(f.transpose() * (mass * s.velocity) + h * phi);
  return next;
}

multiplex::ControlLayout layout_of(const ModelList& models) {
  std::vector<multiplex::Box> boxes;
  boxes.reserve(models.size());
  for (const auto& m : models) boxes.push_back(m->control_box());
  return multiplex::ControlLayout(std::move(boxes));
}

namespace {

void check_rollout_inputs(const ModelList& models, const std::vector<lie::GroupElement>& q0,
                          const std::vector<Eigen::VectorXd>& x0,
                          std::span<const multiplex::JointControl> controls) {
  const std::size_t p = models.size();
  if (p == 0) throw InvalidArgument("joint_rollout: no plants");
  if (q0.size() != p || x0.size() != p) {
    throw DimensionMismatch("joint_rollout: initial state count differs from plant count");
  }
  for (std::size_t i = 0; i < p; ++i) {
    if (x0[i].size() != models[i]->euclid_dim()) {
      throw DimensionMismatch("joint_rollout: initial state of plant " + std::to_string(i) +
                              " has wrong length");
    }
  }
  for (std::size_t t = 0; t < controls.size(); ++t) {
    if (controls[t].blocks.size() != p) {
      throw DimensionMismatch("joint_rollout: control at step " + std::to_string(t) +
                              " has wrong plant count");
    }
    for (std::size_t i = 0; i < p; ++i) {
      if (controls[t].blocks[i].size() != models[i]->control_dim()) {
        throw DimensionMismatch("joint_rollout: control block " + std::to_string(i) +
                                " at step " + std::to_string(t) + " has wrong length");
      }
    }
  }
}

// Runs the recursion into `traj`; returns the failing (plant, step, message)
// or nothing.
std::optional<std::tuple<int, int, std::string>> run_rollout(
    const ModelList& models, const std::vector<lie::GroupElement>& q0,
    const std::vector<Eigen::VectorXd>& x0,
    std::span<const multiplex::JointControl> controls, JointTrajectory& traj) {
  check_rollout_inputs(models, q0, x0, controls);
  const int p = static_cast<int>(models.size());
  const std::size_t n = controls.size();
  traj = JointTrajectory{};
  traj.q.reserve(n + 1);
  traj.x.reserve(n + 1);
  traj.w.reserve(n + 1);
  traj.u.reserve(n);
  traj.unwrapped_angle.reserve(n + 1);

  traj.q.push_back(q0);
  traj.x.push_back(x0);
  traj.w.push_back(multiplex::AuxState::Zero());
  std::vector<double> angles(p);
  for (int i = 0; i < p; ++i) angles[i] = lie::log(q0[i]).coords[0];
  traj.unwrapped_angle.push_back(angles);

  for (std::size_t t = 0; t < n; ++t) {
    std::vector<lie::GroupElement> q_next;
    std::vector<Eigen::VectorXd> x_next;
    q_next.reserve(p);
    x_next.reserve(p);
    for (int i = 0; i < p; ++i) {
      try {
        const Eigen::Matrix2d r = as_matrix2(traj.q[t][i]);
        const Eigen::Matrix2d s = models[i]->step_group(r, traj.x[t][i]);
        Eigen::VectorXd xn(models[i]->euclid_dim());
        models[i]->step_euclid(r, traj.x[t][i], controls[t].blocks[i], xn);
        q_next.emplace_back(lie::GroupId::SO2, r * s);
        x_next.push_back(std::move(xn));
        angles[i] += std::atan2(s(1, 0), s(0, 0));
      } catch (const ChartViolation& e) {
        return std::make_tuple(i, static_cast<int>(t), std::string(e.what()));
      }
    }
    traj.q.push_back(std::move(q_next));
    traj.x.push_back(std::move(x_next));
    traj.u.push_back(controls[t]);
    traj.w.push_back(traj.w.back() + multiplex::z(controls[t]));
    traj.unwrapped_angle.push_back(angles);
  }
  return std::nullopt;
}

}  // namespace

JointTrajectory joint_rollout(const ModelList& models,
                              const std::vector<lie::GroupElement>& q0,
                              const std::vector<Eigen::VectorXd>& x0,
                              std::span<const multiplex::JointControl> controls) {
  JointTrajectory traj;
  if (auto fail = run_rollout(models, q0, x0, controls, traj)) {
    const auto& [plant, step, what] = *fail;
    throw ChartViolation("joint_rollout: plant " + std::to_string(plant) + " at step " +
                             std::to_string(step) + ": " + what,
                         plant, step);
  }
  return traj;
}

PartialRollout joint_rollout_partial(const ModelList& models,
                                     const std::vector<lie::GroupElement>& q0,
                                     const std::vector<Eigen::VectorXd>& x0,
                                     std::span<const multiplex::JointControl> controls) {
  PartialRollout out;
  if (auto fail = run_rollout(models, q0, x0, controls, out.trajectory)) {
    const auto& [plant, step, what] = *fail;
    out.failure = what;
    out.failed_plant = plant;
    out.failed_step = step;
  }
  return out;
}

std::vector<std::vector<Eigen::VectorXd>> constraint_values(const JointTrajectory& traj,
                                                            const ModelList& models) {
  if (traj.plants() != static_cast<int>(models.size())) {
    throw DimensionMismatch("constraint_values: plant count mismatch");
  }
  std::vector<std::vector<Eigen::VectorXd>> g(traj.q.size());
  for (std::size_t t = 0; t < traj.q.size(); ++t) {
    g[t].reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
      g[t].push_back(models[i]->constraints(traj.q[t][i], traj.x[t][i]));
    }
  }
  return g;
}

}  // namespace mux::plants
