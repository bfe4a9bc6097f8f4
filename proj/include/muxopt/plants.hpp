#pragma once

// Discrete-mechanics plant models and the joint rollout of an ensemble.
//
// Every shipped plant has configuration R in SO(2) and a Euclidean state x
// whose first entry is the angular momentum M. The group step is
// R' = R F_h(M) with
//   F_h(M) = [[sqrt(1 - h^2 M^2), -h M], [h M, sqrt(1 - h^2 M^2)]].
// Linearisations are expressed in left-trivialised algebra coordinates for
// the group part, so a perturbation of R is R exp(eps E) with E the unit skew
// matrix.

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "muxopt/liegroup.hpp"
#include "muxopt/multiplex.hpp"

namespace mux::plants {

// |h M| at or above this bound is outside the domain of F_h.
inline constexpr double kChartGuard = 1.0 - 1e-12;

// F_h(M). Throws ChartViolation when |h M| >= kChartGuard.
Eigen::Matrix2d step_rotation(double momentum, double h);

// d/dM of F_h(M).
Eigen::Matrix2d step_rotation_derivative(double momentum, double h);

// Derivatives of one plant step at (R, x, u). The angle increment is
// log s(R, x); the shipped group steps do not depend on R.
struct StepJacobians {
  Eigen::RowVectorXd sx;  // 1 x n, d(angle increment)/dx
  Eigen::VectorXd fq;     // n x 1, df/d(angle) along R exp(eps E)
  Eigen::MatrixXd fx;     // n x n
  Eigen::MatrixXd fu;     // n x m
};

class PlantModel {
 public:
  PlantModel(double h, multiplex::Box control_box);
  virtual ~PlantModel() = default;

  virtual std::string_view kind() const noexcept = 0;
  virtual int euclid_dim() const noexcept = 0;
  virtual int control_dim() const noexcept = 0;
  virtual int constraint_dim() const noexcept = 0;
  virtual std::vector<std::string> euclid_labels() const = 0;
  virtual std::vector<std::string> control_labels() const = 0;
  virtual std::vector<std::string> constraint_labels() const = 0;

  double step() const noexcept { return h_; }
  const multiplex::Box& control_box() const noexcept { return box_; }
  lie::GroupId group_id() const noexcept { return lie::GroupId::SO2; }

  // The group step s(R, x) so that R' = R s(R, x).
  virtual Eigen::Matrix2d step_group(const Eigen::Matrix2d& r,
                                     const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;

  // The Euclidean step f(R, x, u), written into `out`.
  virtual void step_euclid(const Eigen::Matrix2d& r,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& u,
                           Eigen::Ref<Eigen::VectorXd> out) const = 0;

  // State constraints g(R, x) <= 0, written into `out`.
  virtual void constraints(const Eigen::Matrix2d& r,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           Eigen::Ref<Eigen::VectorXd> out) const = 0;

  // `jac` must have been sized by make_jacobians().
  virtual void step_jacobians(const Eigen::Matrix2d& r,
                              const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& u,
                              StepJacobians& jac) const = 0;

  // l x n Jacobian of the constraints in x. The shipped constraints do not
  // depend on R.
  virtual void constraint_jacobian(const Eigen::Matrix2d& r,
                                   const Eigen::Ref<const Eigen::VectorXd>& x,
                                   Eigen::Ref<Eigen::MatrixXd> out) const = 0;

  StepJacobians make_jacobians() const;

  // Convenience wrappers over GroupElement values.
  lie::GroupElement step_group(const lie::GroupElement& q, const Eigen::VectorXd& x) const;
  Eigen::VectorXd step_euclid(const lie::GroupElement& q, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) const;
  Eigen::VectorXd constraints(const lie::GroupElement& q, const Eigen::VectorXd& x) const;

 private:
  double h_;
  multiplex::Box box_;
};

// Single-axis satellite: x = (M), u = (tau), g = 1/2 (M^2 - Mbar^2).
class SatelliteModel final : public PlantModel {
 public:
  SatelliteModel(double h, double torque_bound, double momentum_bound,
                 double inertia = 0.0);

  std::string_view kind() const noexcept override { return "satellite"; }
  int euclid_dim() const noexcept override { return 1; }
  int control_dim() const noexcept override { return 1; }
  int constraint_dim() const noexcept override { return 1; }
  std::vector<std::string> euclid_labels() const override { return {"M"}; }
  std::vector<std::string> control_labels() const override { return {"tau"}; }
  std::vector<std::string> constraint_labels() const override { return {"momentum"}; }

  double torque_bound() const noexcept { return torque_bound_; }
  double momentum_bound() const noexcept { return momentum_bound_; }
  // Metadata only; the dynamics use the momentum directly.
  double inertia() const noexcept { return inertia_; }

  using PlantModel::constraints;
  using PlantModel::step_euclid;
  using PlantModel::step_group;

  Eigen::Matrix2d step_group(const Eigen::Matrix2d& r,
                             const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  void step_euclid(const Eigen::Matrix2d& r, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& u,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void constraints(const Eigen::Matrix2d& r, const Eigen::Ref<const Eigen::VectorXd>& x,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void step_jacobians(const Eigen::Matrix2d& r, const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& u,
                      StepJacobians& jac) const override;
  void constraint_jacobian(const Eigen::Matrix2d& r,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           Eigen::Ref<Eigen::MatrixXd> out) const override;

 private:
  double torque_bound_;
  double momentum_bound_;
  double inertia_;
};

// Planar underwater vehicle: x = (M, px, py, vx, vy), u = (tau, phi_x, phi_y),
//   p' = p + h R v,   Mass v' = F(M)^T Mass v + h phi,
// constraints 1/2 (M^2 - Mbar1^2), 1/2 (vx^2 - Mbar2^2), 1/2 (vy^2 - Mbar3^2).
class UWVehicleModel final : public PlantModel {
 public:
  // Throws SingularMass unless `mass` is symmetric positive definite.
  UWVehicleModel(double h, const Eigen::Vector3d& control_bounds,
                 const Eigen::Vector3d& state_bounds,
                 const Eigen::Matrix2d& mass = Eigen::Matrix2d::Identity());

  std::string_view kind() const noexcept override { return "uw_vehicle"; }
  int euclid_dim() const noexcept override { return 5; }
  int control_dim() const noexcept override { return 3; }
  int constraint_dim() const noexcept override { return 3; }
  std::vector<std::string> euclid_labels() const override {
    return {"M", "px", "py", "vx", "vy"};
  }
  std::vector<std::string> control_labels() const override { return {"tau", "fx", "fy"}; }
  std::vector<std::string> constraint_labels() const override {
    return {"momentum", "vx", "vy"};
  }

  const Eigen::Vector3d& control_bounds() const noexcept { return control_bounds_; }
  const Eigen::Vector3d& state_bounds() const noexcept { return state_bounds_; }
  const Eigen::Matrix2d& mass() const noexcept { return mass_; }

  using PlantModel::constraints;
  using PlantModel::step_euclid;
  using PlantModel::step_group;

  Eigen::Matrix2d step_group(const Eigen::Matrix2d& r,
                             const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  void step_euclid(const Eigen::Matrix2d& r, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& u,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void constraints(const Eigen::Matrix2d& r, const Eigen::Ref<const Eigen::VectorXd>& x,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void step_jacobians(const Eigen::Matrix2d& r, const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& u,
                      StepJacobians& jac) const override;
  void constraint_jacobian(const Eigen::Matrix2d& r,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           Eigen::Ref<Eigen::MatrixXd> out) const override;

 private:
  Eigen::Vector3d control_bounds_;
  Eigen::Vector3d state_bounds_;
  Eigen::Matrix2d mass_;
  Eigen::Matrix2d mass_inv_;
};

// One satellite step: (R F_h(M), M + h tau). Throws ChartViolation.
std::pair<lie::GroupElement, double> satellite_step(const lie::GroupElement& r,
                                                    double momentum, double tau,
                                                    double h);

struct UWState {
  lie::GroupElement r = lie::GroupElement::identity(lie::GroupId::SO2);
  double momentum = 0.0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
};

// One underwater-vehicle step. Throws ChartViolation or SingularMass.
UWState uw_step(const UWState& s, double tau, const Eigen::Vector2d& phi, double h,
                const Eigen::Matrix2d& mass = Eigen::Matrix2d::Identity());

using ModelList = std::vector<std::shared_ptr<const PlantModel>>;

multiplex::ControlLayout layout_of(const ModelList& models);

struct JointTrajectory {
  // q[t][i] and x[t][i] for t = 0..N; u[t] for t = 0..N-1.
  std::vector<std::vector<lie::GroupElement>> q;
  std::vector<std::vector<Eigen::VectorXd>> x;
  std::vector<multiplex::AuxState> w;
  std::vector<multiplex::JointControl> u;
  // Cumulative sum of chart increments starting from log(q[0][i]).
  std::vector<std::vector<double>> unwrapped_angle;

  int horizon() const noexcept { return static_cast<int>(u.size()); }
  int plants() const noexcept { return q.empty() ? 0 : static_cast<int>(q.front().size()); }
};

// Full joint rollout. Throws ChartViolation carrying (plant, step).
JointTrajectory joint_rollout(const ModelList& models,
                              const std::vector<lie::GroupElement>& q0,
                              const std::vector<Eigen::VectorXd>& x0,
                              std::span<const multiplex::JointControl> controls);

struct PartialRollout {
  JointTrajectory trajectory;  // states up to the last valid step
  std::optional<std::string> failure;
  int failed_plant = -1;
  int failed_step = -1;
};

// Like joint_rollout but returns the prefix computed before a ChartViolation.
PartialRollout joint_rollout_partial(const ModelList& models,
                                     const std::vector<lie::GroupElement>& q0,
                                     const std::vector<Eigen::VectorXd>& x0,
                                     std::span<const multiplex::JointControl> controls);

// g[t][i] for t = 0..N.
std::vector<std::vector<Eigen::VectorXd>> constraint_values(const JointTrajectory& traj,
                                                            const ModelList& models);

}  // namespace mux::plants
