#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "muxopt/errors.hpp"
#include "muxopt/plants.hpp"

using namespace mux;
using namespace mux::plants;
using lie::GroupElement;
using lie::GroupId;
using multiplex::JointControl;

namespace {

JointControl scalars(std::initializer_list<double> v) {
  JointControl u;
  for (double a : v) u.blocks.push_back(Eigen::VectorXd::Constant(1, a));
  return u;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(v.size());
  int k = 0;
  for (double a : v) out[k++] = a;
  return out;
}

ModelList two_satellites(double h = 0.1) {
  return {std::make_shared<SatelliteModel>(h, 0.05, 0.1),
          std::make_shared<SatelliteModel>(h, 0.05, 0.1)};
}

Eigen::Matrix2d rot(double a) { return GroupElement::rotation(a).matrix(); }

// Angle of R exp(eps E) perturbations, used to finite-difference f in q.
Eigen::Matrix2d rot_perturbed(const Eigen::Matrix2d& r, double eps) { return r * rot(eps); }

}  // namespace

TEST(SatelliteStep, RestStaysPut) {
  const auto [r, m] = satellite_step(GroupElement::rotation(0.4), 0.0, 0.0, 0.1);
  EXPECT_TRUE(r.matrix().isApprox(rot(0.4), 1e-15));
  EXPECT_EQ(m, 0.0);
}

TEST(SatelliteStep, TorqueOnlyChangesMomentum) {
  const auto [r, m] = satellite_step(GroupElement::identity(GroupId::SO2), 0.0, 0.05, 0.1);
  EXPECT_EQ(r.matrix(), Eigen::Matrix2d::Identity());
  EXPECT_DOUBLE_EQ(m, 0.005);
}

TEST(SatelliteStep, StepRotationFormula) {
  Eigen::Matrix2d expect;
  expect << std::sqrt(0.99), -0.1, 0.1, std::sqrt(0.99);
  EXPECT_LE((step_rotation(1.0, 0.1) - expect).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(SatelliteStep, ChartViolation) {
  EXPECT_THROW(satellite_step(GroupElement::identity(GroupId::SO2), 10.0, 0.0, 0.1),
               ChartViolation);
  EXPECT_THROW(step_rotation(1.0 - 1e-13, 1.0), ChartViolation);
  EXPECT_NO_THROW(step_rotation(1.0 - 1e-11, 1.0));
}

TEST(StepRotation, OrthogonalInsideChart) {
  for (double hw = -0.99; hw <= 0.99; hw += 0.01) {
    const Eigen::Matrix2d f = step_rotation(hw, 1.0);
    EXPECT_LE((f.transpose() * f - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(f.determinant(), 1.0, 1e-14);
  }
}

TEST(UWStep, ZeroStaysZero) {
  const UWState next = uw_step(UWState{}, 0.0, Eigen::Vector2d::Zero(), 0.05);
  EXPECT_EQ(next.momentum, 0.0);
  EXPECT_EQ(next.position, Eigen::Vector2d::Zero());
  EXPECT_EQ(next.velocity, Eigen::Vector2d::Zero());
}

TEST(UWStep, ZeroMomentumVelocityUpdate) {
  UWState s;
  s.velocity = Eigen::Vector2d(0.3, -0.1);
  const UWState next = uw_step(s, 0.0, Eigen::Vector2d(1.0, 2.0), 0.05);
  EXPECT_NEAR((next.velocity - Eigen::Vector2d(0.35, 0.0)).norm(), 0.0, 1e-16);
}

TEST(UWStep, PositionShift) {
  UWState s;
  s.velocity = Eigen::Vector2d(0.02, 0.0);
  const UWState next = uw_step(s, 0.0, Eigen::Vector2d::Zero(), 0.05);
  EXPECT_NEAR(next.position[0], 0.001, 1e-18);
  EXPECT_EQ(next.position[1], 0.0);
}

TEST(UWStep, SingularMass) {
  EXPECT_THROW(uw_step(UWState{}, 0.0, Eigen::Vector2d::Zero(), 0.05, Eigen::Matrix2d::Zero()),
               SingularMass);
  EXPECT_THROW(UWVehicleModel(0.05, Eigen::Vector3d::Ones(), Eigen::Vector3d::Ones(),
                              Eigen::Matrix2d::Zero()),
               SingularMass);
}

TEST(UWStep, ModelMatchesFreeFunctionWithMass) {
  Eigen::Matrix2d mass;
  mass << 2.0, 0.3, 0.3, 1.5;
  const UWVehicleModel model(0.05, Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(1, 1, 1), mass);
  UWState s;
  s.r = GroupElement::rotation(0.7);
  s.momentum = 0.4;
  s.position = Eigen::Vector2d(1, 2);
  s.velocity = Eigen::Vector2d(-0.2, 0.5);
  const UWState next = uw_step(s, 0.3, Eigen::Vector2d(0.1, -0.4), 0.05, mass);
  const Eigen::VectorXd x = vec({0.4, 1, 2, -0.2, 0.5});
  const Eigen::VectorXd xn = model.step_euclid(s.r, x, vec({0.3, 0.1, -0.4}));
  EXPECT_NEAR(xn[0], next.momentum, 1e-15);
  EXPECT_LE((xn.segment<2>(1) - next.position).norm(), 1e-15);
  EXPECT_LE((xn.segment<2>(3) - next.velocity).norm(), 1e-14);
  EXPECT_TRUE(model.step_group(s.r, x).matrix().isApprox(step_rotation(0.4, 0.05)));
}

namespace {

void check_jacobians(const PlantModel& model, const Eigen::Matrix2d& r, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u) {
  StepJacobians jac = model.make_jacobians();
  model.step_jacobians(r, x, u, jac);
  const int n = model.euclid_dim();
  const double eps = 1e-6;
  auto f = [&](const Eigen::Matrix2d& rr, const Eigen::VectorXd& xx, const Eigen::VectorXd& uu) {
    Eigen::VectorXd out(n);
    model.step_euclid(rr, xx, uu, out);
    return out;
  };
  auto inc = [&](const Eigen::VectorXd& xx) {
    const Eigen::Matrix2d s = model.step_group(r, xx);
    return std::atan2(s(1, 0), s(0, 0));
  };
  const Eigen::VectorXd dq = (f(rot_perturbed(r, eps), x, u) - f(rot_perturbed(r, -eps), x, u)) / (2 * eps);
  EXPECT_LE((dq - jac.fq).cwiseAbs().maxCoeff(), 1e-9);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += eps;
    xm[k] -= eps;
    const Eigen::VectorXd d = (f(r, xp, u) - f(r, xm, u)) / (2 * eps);
    EXPECT_LE((d - jac.fx.col(k)).cwiseAbs().maxCoeff(), 1e-9) << "column " << k;
    EXPECT_NEAR((inc(xp) - inc(xm)) / (2 * eps), jac.sx(k), 1e-9);
  }
  for (int k = 0; k < model.control_dim(); ++k) {
    Eigen::VectorXd up = u, um = u;
    up[k] += eps;
    um[k] -= eps;
    const Eigen::VectorXd d = (f(r, x, up) - f(r, x, um)) / (2 * eps);
    EXPECT_LE((d - jac.fu.col(k)).cwiseAbs().maxCoeff(), 1e-9);
  }
  Eigen::MatrixXd gj(model.constraint_dim(), n);
  model.constraint_jacobian(r, x, gj);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += eps;
    xm[k] -= eps;
    Eigen::VectorXd gp(model.constraint_dim()), gm(model.constraint_dim());
    model.constraints(r, xp, gp);
    model.constraints(r, xm, gm);
    EXPECT_LE(((gp - gm) / (2 * eps) - gj.col(k)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

}  // namespace

TEST(PlantJacobians, SatelliteFiniteDifferences) {
  const SatelliteModel model(0.1, 0.05, 0.1);
  check_jacobians(model, rot(0.3), vec({0.7}), vec({0.02}));
  check_jacobians(model, rot(-2.0), vec({-3.1}), vec({-0.04}));
}

TEST(PlantJacobians, UWVehicleFiniteDifferences) {
  Eigen::Matrix2d mass;
  mass << 1.7, -0.2, -0.2, 0.9;
  const UWVehicleModel model(0.05, Eigen::Vector3d(0.025, 0.05, 0.05),
                             Eigen::Vector3d(0.085, 0.02, 0.1), mass);
  check_jacobians(model, rot(1.1), vec({2.0, 0.3, -0.4, 0.5, -0.7}), vec({0.01, 0.02, -0.03}));
  const UWVehicleModel unit(0.05, Eigen::Vector3d(0.025, 0.05, 0.05),
                            Eigen::Vector3d(0.085, 0.02, 0.1));
  check_jacobians(unit, rot(-0.4), vec({-5.0, 1.0, 2.0, -0.1, 0.2}), vec({0.0, 0.0, 0.0}));
}

TEST(JointRollout, ZeroControlsZeroMomentaIsConstant) {
  const auto models = two_satellites();
  std::vector<JointControl> c(20, scalars({0.0, 0.0}));
  const auto traj = joint_rollout(models, {GroupElement::rotation(0.2), GroupElement::rotation(-1.0)},
                                  {vec({0.0}), vec({0.0})}, c);
  ASSERT_EQ(traj.q.size(), 21u);
  for (int t = 0; t <= 20; ++t) {
    EXPECT_TRUE(traj.q[t][0].matrix().isApprox(rot(0.2), 1e-15));
    EXPECT_EQ(traj.x[t][1][0], 0.0);
    EXPECT_EQ(traj.w[t], Eigen::Vector2d::Zero());
  }
}

TEST(JointRollout, ConstantTorqueMomentumRamp) {
  const ModelList models{std::make_shared<SatelliteModel>(0.1, 0.05, 0.1)};
  std::vector<JointControl> c(10, scalars({0.01}));
  const auto traj = joint_rollout(models, {GroupElement::identity(GroupId::SO2)}, {vec({0.0})}, c);
  EXPECT_NEAR(traj.x[10][0][0], 0.01, 1e-17);
}

TEST(JointRollout, ViolatingMultiplexingLeavesAuxNonzero) {
  const auto models = two_satellites();
  std::vector<JointControl> c(6, scalars({0.0, 0.02}));
  c[2] = scalars({0.01, 0.02});
  const auto traj = joint_rollout(models, {GroupElement::identity(GroupId::SO2), GroupElement::identity(GroupId::SO2)},
                                  {vec({0.0}), vec({0.0})}, c);
  const double ab = 0.01 * 0.02;
  EXPECT_NEAR(traj.w.back()[0], ab * (ab + 1), 1e-18);
  EXPECT_NEAR(traj.w.back()[1], ab * (ab - 1), 1e-18);
}

TEST(JointRollout, ChartViolationCarriesLocation) {
  const auto models = two_satellites(1.0);
  std::vector<JointControl> c(30, scalars({0.0, 0.05}));
  try {
    joint_rollout(models, {GroupElement::identity(GroupId::SO2), GroupElement::identity(GroupId::SO2)},
                  {vec({0.0}), vec({0.9})}, c);
    FAIL() << "expected ChartViolation";
  } catch (const ChartViolation& e) {
    EXPECT_EQ(e.plant(), 1);
    // M_t = 0.9 + 0.05 t reaches 1 at t = 2.
    EXPECT_EQ(e.step(), 2);
  }
  const auto partial = joint_rollout_partial(
      models, {GroupElement::identity(GroupId::SO2), GroupElement::identity(GroupId::SO2)},
      {vec({0.0}), vec({0.9})}, c);
  ASSERT_TRUE(partial.failure.has_value());
  EXPECT_EQ(partial.failed_step, 2);
  EXPECT_EQ(partial.trajectory.q.size(), 3u);
}

TEST(JointRollout, GroupPreservationOverLongHorizon) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> tau(-0.05, 0.05);
  const ModelList models{std::make_shared<SatelliteModel>(0.1, 0.05, 10.0)};
  std::vector<JointControl> c;
  for (int t = 0; t < 2000; ++t) c.push_back(scalars({tau(rng)}));
  const auto traj = joint_rollout(models, {GroupElement::identity(GroupId::SO2)}, {vec({0.5})}, c);
  double worst = 0.0;
  for (const auto& q : traj.q) worst = std::max(worst, q[0].orthogonality_defect());
  EXPECT_LE(worst, 1e-9);
  // Momentum linearity with left-to-right summation.
  double sum = 0.0;
  for (const auto& u : c) sum += u.blocks[0][0];
  EXPECT_NEAR(traj.x.back()[0][0] - 0.5, 0.1 * sum, 1e-14);
}

TEST(JointRollout, EqualsIndependentRollouts) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> val(-0.05, 0.05);
  const auto uw = std::make_shared<UWVehicleModel>(0.05, Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(1, 1, 1));
  const auto sat = std::make_shared<SatelliteModel>(0.05, 1.0, 1.0);
  const ModelList joint{sat, uw};
  std::vector<JointControl> c, c_sat, c_uw;
  for (int t = 0; t < 50; ++t) {
    JointControl u;
    u.blocks = {vec({val(rng)}), vec({val(rng), val(rng), val(rng)})};
    c.push_back(u);
    c_sat.push_back(JointControl{{u.blocks[0]}});
    c_uw.push_back(JointControl{{u.blocks[1]}});
  }
  const std::vector<GroupElement> q0{GroupElement::rotation(0.1), GroupElement::rotation(0.2)};
  const std::vector<Eigen::VectorXd> x0{vec({0.3}), vec({0.1, 0, 0, 0.2, 0})};
  const auto a = joint_rollout(joint, q0, x0, c);
  const auto b = joint_rollout({sat}, {q0[0]}, {x0[0]}, c_sat);
  const auto d = joint_rollout({uw}, {q0[1]}, {x0[1]}, c_uw);
  for (int t = 0; t <= 50; ++t) {
    EXPECT_EQ(a.q[t][0].matrix(), b.q[t][0].matrix());
    EXPECT_EQ(a.q[t][1].matrix(), d.q[t][0].matrix());
    EXPECT_EQ(a.x[t][0], b.x[t][0]);
    EXPECT_EQ(a.x[t][1], d.x[t][0]);
  }
}

TEST(JointRollout, UnwrappedAngleFollowsFullRevolution) {
  const ModelList models{std::make_shared<SatelliteModel>(0.1, 0.05, 1.0)};
  std::vector<JointControl> c(800, scalars({0.0}));
  const auto traj = joint_rollout(models, {GroupElement::identity(GroupId::SO2)}, {vec({0.1})}, c);
  EXPECT_NEAR(traj.unwrapped_angle.back()[0], 800 * std::asin(0.01), 1e-10);
  EXPECT_GT(traj.unwrapped_angle.back()[0], 2 * M_PI);
}

TEST(ConstraintValues, SatelliteExamples) {
  const SatelliteModel model(0.1, 0.05, 0.1);
  const GroupElement id = GroupElement::identity(GroupId::SO2);
  EXPECT_DOUBLE_EQ(model.constraints(id, vec({0.0}))[0], -0.005);
  EXPECT_EQ(model.constraints(id, vec({0.1}))[0], 0.0);
  EXPECT_NEAR(model.constraints(id, vec({0.015}))[0], -0.0048875, 1e-18);
}

TEST(ConstraintValues, TrajectoryShape) {
  const auto models = two_satellites();
  std::vector<JointControl> c(4, scalars({0.01, 0.0}));
  const auto traj = joint_rollout(models, {GroupElement::identity(GroupId::SO2), GroupElement::identity(GroupId::SO2)},
                                  {vec({0.0}), vec({0.0})}, c);
  const auto g = constraint_values(traj, models);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_NEAR(g[4][0][0], 0.5 * (0.004 * 0.004 - 0.01), 1e-18);
}
