#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>
#include <string>

#include "muxopt/errors.hpp"
#include "muxopt/multiplex.hpp"
#include "muxopt/optimizer.hpp"
#include "muxopt/plants.hpp"
#include "muxopt/pmp.hpp"
#include "muxopt/scenario.hpp"

using namespace mux;
using namespace mux::pmp;

namespace {

const std::string kDir = MUXOPT_SCENARIO_DIR;

scenario::Scenario bundled(const char* name) {
  return scenario::load_scenario(kDir + "/" + name + ".yaml");
}

std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

struct Point {
  std::vector<lie::GroupElement> q;
  std::vector<Eigen::VectorXd> x;
  multiplex::JointControl u;
  StepCovector cov;
  Eigen::Vector2d chi;
};

Point random_point(const plants::ModelList& models, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Point p;
  p.cov.rho.resize(static_cast<Eigen::Index>(models.size()));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = *models[i];
    p.q.push_back(lie::GroupElement::rotation(3.0 * unit(rng)));
    Eigen::VectorXd x(m.euclid_dim());
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = unit(rng);
    x[0] = 0.9 * x[0] / m.step();  // keep |h M| inside the chart
    p.x.push_back(x);
    const auto& box = m.control_box();
    Eigen::VectorXd u(m.control_dim());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      u[k] = box.lower[k] + 0.5 * (unit(rng) + 1.0) * (box.upper[k] - box.lower[k]);
    }
    p.u.blocks.push_back(u);
    p.cov.rho[static_cast<Eigen::Index>(i)] = unit(rng);
    Eigen::VectorXd xi(m.euclid_dim());
    for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = unit(rng);
    p.cov.xi.push_back(xi);
  }
  p.chi = Eigen::Vector2d(unit(rng), unit(rng));
  return p;
}

double grad_h_mismatch(const plants::ModelList& models, const Point& p, double nu) {
  const Eigen::VectorXd g = grad_H_control(models, p.q, p.x, p.u, p.cov, p.chi, nu);
  double worst = 0.0;
  int c = 0;
  for (int i = 0; i < p.u.plants(); ++i) {
    for (Eigen::Index k = 0; k < p.u.blocks[i].size(); ++k, ++c) {
      multiplex::JointControl up = p.u, um = p.u;
      const double e = 1e-5;
      up.blocks[i][k] += e;
      um.blocks[i][k] -= e;
      const double fd = (hamiltonian(models, p.q, p.x, up, p.cov, p.chi, nu) -
                         hamiltonian(models, p.q, p.x, um, p.cov, p.chi, nu)) /
                        (2.0 * e);
      worst = std::max(worst, std::abs(fd - g[c]));
    }
  }
  return worst / std::max(1.0, g.cwiseAbs().maxCoeff());
}

plants::ModelList satellite_pair() {
  return {std::make_shared<plants::SatelliteModel>(0.1, 0.05, 0.1),
          std::make_shared<plants::SatelliteModel>(0.1, 0.05, 0.1)};
}

plants::ModelList uw_pair() {
  Eigen::Matrix2d mass;
  mass << 2.0, 0.3, 0.3, 1.5;
  return {std::make_shared<plants::UWVehicleModel>(0.05, Eigen::Vector3d(0.025, 0.05, 0.05),
                                                   Eigen::Vector3d(0.085, 0.02, 0.1)),
          std::make_shared<plants::UWVehicleModel>(0.05, Eigen::Vector3d(0.025, 0.05, 0.05),
                                                   Eigen::Vector3d(0.085, 0.02, 0.1), mass)};
}

struct Solved {
  optimizer::TranscribedNLP nlp;
  optimizer::SolveResult result;
};

Solved solve(const char* name) {
  const scenario::Scenario s = bundled(name);
  Solved out{optimizer::transcribe(s), {}};
  out.result = optimizer::solve(out.nlp, optimizer::SolveOptions::from(s));
  return out;
}

const Solved& bar_smoke() {
  static const Solved sv = solve("maneuver_bar_smoke");
  return sv;
}

}  // namespace

TEST(Hamiltonian, ControlGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (const auto& models : {satellite_pair(), uw_pair()}) {
    for (double nu : {-1.0, 0.0}) {
      double worst = 0.0;
      for (int trial = 0; trial < 1000; ++trial) {
        worst = std::max(worst, grad_h_mismatch(models, random_point(models, rng), nu));
      }
      EXPECT_LE(worst, 1e-8) << models.front()->kind() << " nu=" << nu;
    }
  }
}

TEST(Hamiltonian, GroupTermIsTheAngleIncrement) {
  const plants::ModelList models = {std::make_shared<plants::SatelliteModel>(0.1, 0.05, 0.1)};
  StepCovector cov;
  cov.rho = Eigen::VectorXd::Constant(1, 2.0);
  cov.xi = {Eigen::VectorXd::Zero(1)};
  multiplex::JointControl u;
  u.blocks = {Eigen::VectorXd::Zero(1)};
  const double m = 3.0;
  const double h = hamiltonian(models, {lie::GroupElement::rotation(0.4)},
                               {Eigen::VectorXd::Constant(1, m)}, u, cov,
                               Eigen::Vector2d::Zero(), -1.0);
  EXPECT_NEAR(h, 2.0 * std::asin(0.1 * m), 1e-15);
}

TEST(Adjoint, SatelliteRecursionMatchesClosedForm) {
  const scenario::Scenario s = bundled("maneuver_bar_smoke");
  const optimizer::TranscribedNLP nlp = optimizer::transcribe(s);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd u(nlp.decision_dim());
  for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = 0.04 * unit(rng);
  const plants::JointTrajectory traj = nlp.rollout(view(u));
  auto mu = zero_multipliers(nlp);
  for (int t = 1; t <= nlp.horizon(); ++t) {
    for (auto& m : mu[t]) m[0] = -std::abs(unit(rng));
  }
  StepCovector seed;
  seed.rho = Eigen::Vector2d(0.3, -0.7);
  seed.xi = {Eigen::VectorXd::Constant(1, 0.2), Eigen::VectorXd::Constant(1, -0.1)};
  const Certificate c = adjoint_backward(nlp, traj, mu, -1.0, Eigen::Vector2d::Zero(), seed);
  const double h = s.step;
  for (int i = 0; i < 2; ++i) {
    for (int t = nlp.horizon() - 1; t >= 1; --t) {
      const double m = traj.x[t][i][0];
      const double expect = h * c.adjoint[t].rho[i] / std::sqrt(1.0 - h * h * m * m) +
                            c.adjoint[t].xi[i][0] + mu[t][i][0] * m;
      ASSERT_NEAR(c.adjoint[t - 1].xi[i][0], expect, 1e-12);
      ASSERT_EQ(c.adjoint[t - 1].rho[i], seed.rho[i]);
    }
  }
}

TEST(Adjoint, FreeEndpointSeedsFromTerminalCost) {
  const scenario::Scenario s = bundled("desk_brute_force");
  const optimizer::TranscribedNLP nlp = optimizer::transcribe(s);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(nlp.decision_dim());
  u[0] = 0.5;
  const plants::JointTrajectory traj = nlp.rollout(view(u));
  const Certificate c =
      adjoint_backward(nlp, traj, zero_multipliers(nlp), -1.0, Eigen::Vector2d::Zero());
  const int n = nlp.horizon();
  for (int i = 0; i < 2; ++i) {
    const double e = optimizer::TranscribedNLP::angle_error(
        nlp.target_configurations()[i].matrix(), traj.q[n][i].matrix());
    EXPECT_NEAR(c.adjoint[n - 1].rho[i], -s.plants[i].angle_weight * e, 1e-14);
    EXPECT_NEAR(c.adjoint[n - 1].xi[i][0],
                -s.plants[i].state_weights[0] * (traj.x[n][i][0] - s.plants[i].terminal.state[0]),
                1e-14);
  }
}

TEST(Adjoint, RejectsMissingOrSurplusTerminalCovector) {
  const optimizer::TranscribedNLP fixed = optimizer::transcribe(bundled("trivial"));
  const plants::JointTrajectory t1 =
      fixed.rollout(view(Eigen::VectorXd::Zero(fixed.decision_dim())));
  EXPECT_THROW(adjoint_backward(fixed, t1, zero_multipliers(fixed), -1.0, Eigen::Vector2d::Zero()),
               InvalidArgument);
  const optimizer::TranscribedNLP free = optimizer::transcribe(bundled("desk_brute_force"));
  const plants::JointTrajectory t2 = free.rollout(view(Eigen::VectorXd::Zero(free.decision_dim())));
  StepCovector s;
  s.rho = Eigen::Vector2d::Zero();
  s.xi = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  EXPECT_THROW(adjoint_backward(free, t2, zero_multipliers(free), -1.0, Eigen::Vector2d::Zero(), s),
               InvalidArgument);
  EXPECT_THROW(adjoint_backward(free, t1, zero_multipliers(free), -1.0, Eigen::Vector2d::Zero()),
               DimensionMismatch);
}

TEST(Certificate, RestSolutionHasZeroAdjoint) {
  const scenario::Scenario s = bundled("trivial");
  const optimizer::TranscribedNLP nlp = optimizer::transcribe(s);
  const plants::JointTrajectory traj = nlp.rollout(view(Eigen::VectorXd::Zero(nlp.decision_dim())));
  const Estimate e = estimate_multipliers(nlp, traj, s.verifier);
  EXPECT_TRUE(e.report.pass());
  EXPECT_EQ(e.certificate.nu, -1.0);
  for (const auto& step : e.certificate.adjoint) {
    EXPECT_LE(step.rho.cwiseAbs().maxCoeff(), 1e-14);
    for (const auto& xi : step.xi) EXPECT_LE(xi.cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_LE(e.report.stationarity, 1e-14);
  EXPECT_EQ(e.report.schedule.front(), -1);
}

TEST(Certificate, SingleSatelliteSolutionIsCertified) {
  const Solved sv = solve("single_satellite");
  ASSERT_EQ(sv.result.status, optimizer::Status::Converged);
  const scenario::VerifierTolerances tol;
  const Estimate e = estimate_multipliers(sv.nlp, sv.result.trajectory, tol);
  EXPECT_TRUE(e.report.pass()) << "stationarity " << e.report.stationarity;
  EXPECT_EQ(e.certificate.nu, -1.0);
  EXPECT_FALSE(e.report.transversality.has_value());
  // tau = h xi at every interior step.
  const double h = sv.nlp.models()[0]->step();
  for (int t = 0; t < sv.nlp.horizon(); ++t) {
    const double tau = sv.result.trajectory.u[t].blocks[0][0];
    if (std::abs(tau) < 0.05 - 1e-9) {
      ASSERT_NEAR(tau, h * e.certificate.adjoint[t].xi[0][0], 1e-6) << "t=" << t;
    }
  }
}

TEST(Certificate, PerturbedControlIsRejected) {
  const Solved sv = solve("single_satellite");
  ASSERT_EQ(sv.result.status, optimizer::Status::Converged);
  const scenario::VerifierTolerances tol;
  Eigen::VectorXd u = sv.nlp.flatten(sv.result.controls);
  const int t = sv.nlp.horizon() / 3;
  ASSERT_LT(std::abs(u[t]), 0.05 - 0.01);
  u[t] += 0.01;
  const Estimate e = estimate_multipliers(sv.nlp, sv.nlp.rollout(view(u)), tol);
  EXPECT_FALSE(e.report.pass());
  EXPECT_GE(e.report.stationarity, 1e-3);
}

TEST(Certificate, MultiplexingResidualIsTheViolatingStepZ) {
  const Solved& sv = bar_smoke();
  ASSERT_EQ(sv.result.status, optimizer::Status::Converged);
  Eigen::VectorXd u = sv.nlp.flatten(sv.result.controls);
  const int t = 40;
  const int idle = sv.result.schedule[t] == 0 ? 1 : 0;
  u[2 * t + idle] = 0.02;
  const plants::JointTrajectory traj = sv.nlp.rollout(view(u));
  const double zt = multiplex::z(traj.u[t]).norm();
  ASSERT_GT(zt, 1e-6);
  const Certificate c =
      adjoint_backward(sv.nlp, traj, zero_multipliers(sv.nlp), -1.0, Eigen::Vector2d::Zero(),
                       StepCovector{Eigen::Vector2d::Zero(),
                                    {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)}});
  const Report r = check_conditions(sv.nlp, traj, c, scenario::VerifierTolerances{});
  EXPECT_NEAR(r.multiplexing, zt, 1e-12);
  EXPECT_FALSE(r.multiplexing_ok);
  EXPECT_EQ(r.schedule[t], -2);
}

TEST(Certificate, TrivialAbnormalCertificateIsNotAccepted) {
  const Solved& sv = bar_smoke();
  ASSERT_EQ(sv.result.status, optimizer::Status::Converged);
  const auto& traj = sv.result.trajectory;
  const Certificate c = adjoint_backward(
      sv.nlp, traj, zero_multipliers(sv.nlp), 0.0, Eigen::Vector2d(1.0, 1.0),
      StepCovector{Eigen::Vector2d::Zero(), {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)}});
  const Report r = check_conditions(sv.nlp, traj, c, scenario::VerifierTolerances{});
  EXPECT_LE(r.stationarity, 1e-12);
  EXPECT_TRUE(r.multiplexing_ok);
  EXPECT_FALSE(r.nontriviality_ok);
  EXPECT_FALSE(r.pass());
}

TEST(Certificate, ConvergedPairMeetsPrimalAndSignConditions) {
  const Solved& sv = bar_smoke();
  ASSERT_EQ(sv.result.status, optimizer::Status::Converged);
  const Estimate e = estimate_multipliers(sv.nlp, sv.result.trajectory, scenario::VerifierTolerances{});
  EXPECT_LE(e.report.recursion, 1e-10);
  EXPECT_LE(e.report.feasibility, 1e-7);
  EXPECT_LE(e.report.multiplexing, 1e-8);
  EXPECT_LE(e.report.sign, 1e-12);
}
