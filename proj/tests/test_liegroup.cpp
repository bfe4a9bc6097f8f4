#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "muxopt/errors.hpp"
#include "muxopt/liegroup.hpp"

using namespace mux;
using namespace mux::lie;

namespace {

AlgebraVector so2(double a) { return {GroupId::SO2, Eigen::VectorXd::Constant(1, a)}; }

AlgebraVector product(std::initializer_list<double> a) {
  Eigen::VectorXd c(a.size());
  int k = 0;
  for (double v : a) c[k++] = v;
  return {GroupId::ProductOfSO2s, c};
}

// Generic matrix exponential of hat(xi), independent of the closed form.
Eigen::MatrixXd exp_oracle(const AlgebraVector& xi) { return xi.hat().exp(); }

}  // namespace

TEST(LieGroupExp, IdentityAtZero) {
  EXPECT_TRUE(exp(so2(0.0)).matrix().isApprox(Eigen::Matrix2d::Identity()));
}

TEST(LieGroupExp, QuarterTurn) {
  Eigen::Matrix2d expect;
  expect << 0, -1, 1, 0;
  EXPECT_LE((exp(so2(std::numbers::pi / 2)).matrix() - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LieGroupExp, ProductHalfTurnAndIdentity) {
  const GroupElement g = exp(product({std::numbers::pi, 0.0}));
  Eigen::MatrixXd expect = Eigen::MatrixXd::Identity(4, 4);
  expect.block(0, 0, 2, 2) = -Eigen::Matrix2d::Identity();
  EXPECT_LE((g.matrix() - expect).cwiseAbs().maxCoeff(), 1e-15);
  // Blockwise against the per-factor exponential.
  EXPECT_LE((g.factor(0).matrix() - exp(so2(std::numbers::pi)).matrix()).cwiseAbs().maxCoeff(),
            0.0);
  EXPECT_LE((g.factor(1).matrix() - exp(so2(0.0)).matrix()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LieGroupExp, MatchesGenericMatrixExponential) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ang(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const AlgebraVector xi = product({ang(rng), ang(rng), ang(rng)});
    EXPECT_LE((exp(xi).matrix() - exp_oracle(xi)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(LieGroupLog, Identity) {
  EXPECT_EQ(log(GroupElement::identity(GroupId::SO2)).coords[0], 0.0);
}

TEST(LieGroupLog, QuarterTurn) {
  Eigen::MatrixXd m(2, 2);
  m << 0, -1, 1, 0;
  EXPECT_NEAR(log(GroupElement(GroupId::SO2, m)).coords[0], std::numbers::pi / 2, 1e-15);
}

TEST(LieGroupLog, ProductFactorwise) {
  const std::vector<GroupElement> f{GroupElement::rotation(0.3), GroupElement::rotation(-0.2)};
  const AlgebraVector a = log(GroupElement::product(f));
  ASSERT_EQ(a.coords.size(), 2);
  // Oracle: atan2 on each block.
  EXPECT_NEAR(a.coords[0], std::atan2(std::sin(0.3), std::cos(0.3)), 1e-15);
  EXPECT_NEAR(a.coords[1], std::atan2(std::sin(-0.2), std::cos(-0.2)), 1e-15);
}

TEST(LieGroupLog, OutOfChartNearHalfTurn) {
  EXPECT_THROW(log(GroupElement::rotation(std::numbers::pi)), OutOfChart);
  EXPECT_NO_THROW(log(GroupElement::rotation(std::numbers::pi - 1e-6)));
}

TEST(LieGroupLog, ExpLogRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-3.0, 3.0);
  for (int k = 0; k < 2000; ++k) {
    const GroupElement g = GroupElement::rotation(ang(rng));
    EXPECT_LE((exp(log(g)).matrix() - g.matrix()).cwiseAbs().maxCoeff(), 1e-10);
  }
  std::uniform_real_distribution<double> inner(-(std::numbers::pi - 1e-6),
                                               std::numbers::pi - 1e-6);
  for (int k = 0; k < 2000; ++k) {
    const double a = inner(rng);
    EXPECT_NEAR(log(exp(so2(a))).coords[0], a, 1e-12);
  }
}

TEST(LieGroupAlgebra, HatVeeRoundTrip) {
  const AlgebraVector a = product({0.1, -2.5, 7.0});
  const AlgebraVector b = AlgebraVector::vee(GroupId::ProductOfSO2s, a.hat());
  EXPECT_EQ(a.coords, b.coords);
}

TEST(LieGroupCoadjoint, AbelianLeavesCovectorUnchanged) {
  const CoAlgebraVector mu{GroupId::SO2, Eigen::VectorXd::Constant(1, 1.7)};
  EXPECT_EQ(coadjoint(GroupElement::rotation(0.9), mu).coords[0], 1.7);
  EXPECT_EQ(coadjoint(GroupElement::identity(GroupId::SO2), mu).coords[0], 1.7);
}

TEST(LieGroupCoadjoint, DualityOverBasisOnProduct) {
  const std::vector<GroupElement> f{GroupElement::rotation(0.4), GroupElement::rotation(2.1)};
  const GroupElement g = GroupElement::product(f);
  const CoAlgebraVector mu{GroupId::ProductOfSO2s, Eigen::Vector2d(0.5, -1.5)};
  const CoAlgebraVector lhs = coadjoint(g, mu);
  for (int k = 0; k < 2; ++k) {
    AlgebraVector eta{GroupId::ProductOfSO2s, Eigen::VectorXd::Unit(2, k)};
    // Ad_{g^-1} eta computed monolithically: g^-1 hat(eta) g.
    const Eigen::MatrixXd conj = g.inverse().matrix() * eta.hat() * g.matrix();
    const AlgebraVector ad = AlgebraVector::vee(GroupId::ProductOfSO2s, conj);
    EXPECT_NEAR(lhs.pair(eta), mu.pair(ad), 1e-14);
  }
}

TEST(LieGroupCoadjoint, RejectsMismatchedGroups) {
  const CoAlgebraVector mu{GroupId::ProductOfSO2s, Eigen::Vector2d(1, 2)};
  EXPECT_THROW(coadjoint(GroupElement::rotation(0.1), mu), DimensionMismatch);
}

TEST(LieGroupCotangentLift, IdentityElement) {
  const CoAlgebraVector mu{GroupId::SO2, Eigen::VectorXd::Constant(1, -0.3)};
  EXPECT_EQ(cotangent_lift_left(GroupElement::identity(GroupId::SO2), mu).coords[0], -0.3);
}

TEST(LieGroupCotangentLift, DualOfFiniteDifferenceTangentLift) {
  // The tangent lift T_e Phi_g maps eta to d/ds g exp(s eta); represented back
  // in left-trivialised coordinates via g^{-1} (.) it must be eta itself.
  const GroupElement g = GroupElement::rotation(1.0);
  const double s = 1e-6;
  const Eigen::MatrixXd plus = g.matrix() * exp(so2(s)).matrix();
  const Eigen::MatrixXd minus = g.matrix() * exp(so2(-s)).matrix();
  const Eigen::MatrixXd tangent = (plus - minus) / (2 * s);
  const double eta_coord =
      AlgebraVector::vee(GroupId::SO2, g.inverse().matrix() * tangent).coords[0];
  const CoAlgebraVector mu{GroupId::SO2, Eigen::VectorXd::Constant(1, 2.0)};
  EXPECT_NEAR(cotangent_lift_left(g, mu).coords[0], 2.0 * eta_coord, 1e-9);
}

TEST(LieGroupRho, FiniteDifferenceLogJacobian) {
  const GroupElement g = GroupElement::rotation(0.7);
  const double s = 1e-6;
  const double d = (log(GroupElement(GroupId::SO2, g.matrix() * exp(so2(s)).matrix())).coords[0] -
                    log(GroupElement(GroupId::SO2, g.matrix() * exp(so2(-s)).matrix())).coords[0]) /
                   (2 * s);
  const CoAlgebraVector theta{GroupId::SO2, Eigen::VectorXd::Constant(1, 0.4)};
  EXPECT_NEAR(rho_transform(theta, g).coords[0], d * 0.4, 1e-9);
  const CoAlgebraVector zero{GroupId::SO2, Eigen::VectorXd::Zero(1)};
  EXPECT_EQ(rho_transform(zero, g).coords[0], 0.0);
}

TEST(LieGroupRho, ProductFactorwiseFiniteDifference) {
  const std::vector<GroupElement> f{GroupElement::rotation(0.2), GroupElement::rotation(-1.1)};
  const GroupElement g = GroupElement::product(f);
  const CoAlgebraVector theta{GroupId::ProductOfSO2s, Eigen::Vector2d(0.4, -0.9)};
  const Eigen::VectorXd rho = rho_transform(theta, g).coords;
  const double s = 1e-6;
  for (int k = 0; k < 2; ++k) {
    AlgebraVector e{GroupId::ProductOfSO2s, Eigen::VectorXd::Unit(2, k) * s};
    AlgebraVector em{GroupId::ProductOfSO2s, -Eigen::VectorXd::Unit(2, k) * s};
    const Eigen::VectorXd d =
        (log(GroupElement(GroupId::ProductOfSO2s, g.matrix() * exp(e).matrix())).coords -
         log(GroupElement(GroupId::ProductOfSO2s, g.matrix() * exp(em).matrix())).coords) /
        (2 * s);
    EXPECT_NEAR(rho[k], theta.coords.dot(d), 1e-9);
  }
}

TEST(LieGroupRho, OutOfChartPropagates) {
  const CoAlgebraVector theta{GroupId::SO2, Eigen::VectorXd::Constant(1, 1.0)};
  EXPECT_THROW(rho_transform(theta, GroupElement::rotation(std::numbers::pi)), OutOfChart);
}

TEST(LieGroupProduct, ComposingManyRotationsKeepsOrthogonality) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(-3.0, 3.0);
  GroupElement g = GroupElement::identity(GroupId::SO2);
  for (int k = 0; k < 100000; ++k) g = g * exp(so2(ang(rng)));
  EXPECT_LE(g.orthogonality_defect(), 1e-9);
  EXPECT_LE(g.determinant_defect(), 1e-9);
}

TEST(LieGroupReprojection, OnlyAboveThresholdAndLogged) {
  int calls = 0;
  set_reprojection_logger([&](double) { ++calls; });
  const GroupElement clean = GroupElement::rotation(0.5);
  EXPECT_EQ(reproject_if_drifted(clean).matrix(), clean.matrix());
  EXPECT_EQ(calls, 0);
  Eigen::MatrixXd m = clean.matrix();
  m(0, 0) *= 1.0 + 1e-6;
  const GroupElement fixed = reproject_if_drifted(GroupElement(GroupId::SO2, m));
  EXPECT_EQ(calls, 1);
  EXPECT_LE(fixed.orthogonality_defect(), 1e-14);
  EXPECT_LE(fixed.determinant_defect(), 1e-14);
  set_reprojection_logger(nullptr);
}
