#include "muxopt/liegroup.hpp"

#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

#include "muxopt/errors.hpp"

namespace mux::lie {
namespace {

void check_same_group(GroupId a, int fa, GroupId b, int fb, const char* op) {
  if (a != b || fa != fb) {
    throw DimensionMismatch(std::string(op) + ": incompatible groups (" +
                            to_string(a) + "/" + std::to_string(fa) + " vs " +
                            to_string(b) + "/" + std::to_string(fb) + ")");
  }
}

void check_coords(GroupId id, int factors, const Eigen::VectorXd& coords,
                  const char* op) {
  if (coords.size() != factors) {
    throw DimensionMismatch(std::string(op) + ": expected " +
                            std::to_string(factors) + " coordinates, got " +
                            std::to_string(coords.size()));
  }
  if (id == GroupId::SO2 && factors != 1) {
    throw DimensionMismatch(std::string(op) + ": SO2 has one coordinate");
  }
}

std::mutex& logger_mutex() {
  static std::mutex m;
  return m;
}

ReprojectionLogger& logger_slot() {
  static ReprojectionLogger logger = [](double defect) {
    std::clog << "liegroup: re-projected element with orthogonality defect "
              << defect << '\n';
  };
  return logger;
}

}  // namespace

const char* to_string(GroupId id) noexcept {
  switch (id) {
    case GroupId::SO2:
      return "SO2";
    case GroupId::ProductOfSO2s:
      return "ProductOfSO2s";
  }
  return "unknown";
}

GroupElement::GroupElement(GroupId id, Eigen::MatrixXd matrix)
    : id_(id), matrix_(std::move(matrix)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0 ||
      matrix_.rows() % 2 != 0) {
    throw DimensionMismatch("GroupElement: matrix must be 2k x 2k");
  }
  if (id_ == GroupId::SO2 && matrix_.rows() != 2) {
    throw DimensionMismatch("GroupElement: SO2 element must be 2 x 2");
  }
}

GroupElement GroupElement::identity(GroupId id, int factors) {
  if (factors < 1 || (id == GroupId::SO2 && factors != 1)) {
    throw InvalidArgument("GroupElement::identity: bad factor count");
  }
  return {id, Eigen::MatrixXd::Identity(2 * factors, 2 * factors)};
}

GroupElement GroupElement::rotation(double angle) {
  Eigen::MatrixXd m(2, 2);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  m << c, -s, s, c;
  return {GroupId::SO2, std::move(m)};
}

GroupElement GroupElement::product(std::span<const GroupElement> factors) {
  int blocks = 0;
  for (const auto& f : factors) blocks += f.factors();
  if (blocks == 0) throw InvalidArgument("GroupElement::product: no factors");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * blocks, 2 * blocks);
  int at = 0;
  for (const auto& f : factors) {
    const auto n = f.matrix().rows();
    m.block(at, at, n, n) = f.matrix();
    at += static_cast<int>(n);
  }
  return {GroupId::ProductOfSO2s, std::move(m)};
}

GroupElement GroupElement::factor(int i) const {
  if (i < 0 || i >= factors()) {
    throw InvalidArgument("GroupElement::factor: index out of range");
  }
  return {GroupId::SO2, matrix_.block(2 * i, 2 * i, 2, 2)};
}

GroupElement GroupElement::inverse() const {
  return {id_, matrix_.transpose()};
}

GroupElement GroupElement::operator*(const GroupElement& rhs) const {
  check_same_group(id_, factors(), rhs.id_, rhs.factors(), "operator*");
  return {id_, matrix_ * rhs.matrix_};
}

double GroupElement::orthogonality_defect() const {
  double worst = 0.0;
  for (int i = 0; i < factors(); ++i) {
    const Eigen::Matrix2d b = matrix_.block(2 * i, 2 * i, 2, 2);
    const Eigen::Matrix2d e = b.transpose() * b - Eigen::Matrix2d::Identity();
    worst = std::max(worst, e.cwiseAbs().maxCoeff());
  }
  return worst;
}

double GroupElement::determinant_defect() const {
  double worst = 0.0;
  for (int i = 0; i < factors(); ++i) {
    const Eigen::Matrix2d b = matrix_.block(2 * i, 2 * i, 2, 2);
    worst = std::max(worst, std::abs(b.determinant() - 1.0));
  }
  return worst;
}

Eigen::MatrixXd AlgebraVector::hat() const {
  const auto k = coords.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * k, 2 * k);
  for (Eigen::Index i = 0; i < k; ++i) {
    m(2 * i, 2 * i + 1) = -coords[i];
    m(2 * i + 1, 2 * i) = coords[i];
  }
  return m;
}

AlgebraVector AlgebraVector::vee(GroupId id, const Eigen::MatrixXd& skew) {
  if (skew.rows() != skew.cols() || skew.rows() % 2 != 0) {
    throw DimensionMismatch("AlgebraVector::vee: matrix must be 2k x 2k");
  }
  const auto k = skew.rows() / 2;
  AlgebraVector v{id, Eigen::VectorXd(k)};
  for (Eigen::Index i = 0; i < k; ++i) v.coords[i] = skew(2 * i + 1, 2 * i);
  return v;
}

double CoAlgebraVector::pair(const AlgebraVector& eta) const {
  check_same_group(group_id, static_cast<int>(coords.size()), eta.group_id,
                   static_cast<int>(eta.coords.size()), "pair");
  return coords.dot(eta.coords);
}

GroupElement exp(const AlgebraVector& xi) {
  const auto k = static_cast<int>(xi.coords.size());
  check_coords(xi.group_id, k, xi.coords, "exp");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * k, 2 * k);
  for (int i = 0; i < k; ++i) {
    const double c = std::cos(xi.coords[i]);
    const double s = std::sin(xi.coords[i]);
    m.block<2, 2>(2 * i, 2 * i) << c, -s, s, c;
  }
  return {xi.group_id, std::move(m)};
}

AlgebraVector log(const GroupElement& g, double chart_margin) {
  const int k = g.factors();
  AlgebraVector out{g.group_id(), Eigen::VectorXd(k)};
  const auto& m = g.matrix();
  for (int i = 0; i < k; ++i) {
    const double a = std::atan2(m(2 * i + 1, 2 * i), m(2 * i, 2 * i));
    if (std::abs(a) >= std::numbers::pi - chart_margin) {
      throw OutOfChart("log: rotation angle " + std::to_string(a) +
                       " of factor " + std::to_string(i) +
                       " is outside the chart");
    }
    out.coords[i] = a;
  }
  return out;
}

AlgebraVector adjoint(const GroupElement& g, const AlgebraVector& eta) {
  check_same_group(g.group_id(), g.factors(), eta.group_id,
                   static_cast<int>(eta.coords.size()), "adjoint");
  // Abelian: conjugation fixes every algebra element.
  return eta;
}

CoAlgebraVector coadjoint(const GroupElement& g, const CoAlgebraVector& mu) {
  check_same_group(g.group_id(), g.factors(), mu.group_id,
                   static_cast<int>(mu.coords.size()), "coadjoint");
  return mu;
}

CoAlgebraVector cotangent_lift_left(const GroupElement& g,
                                    const CoAlgebraVector& mu) {
  check_same_group(g.group_id(), g.factors(), mu.group_id,
                   static_cast<int>(mu.coords.size()), "cotangent_lift_left");
  // In left-trivialised coordinates T_e Phi_g maps eta to g * hat(eta), which
  // is again represented by eta.
  return mu;
}

Eigen::MatrixXd log_left_jacobian(const GroupElement& g) {
  (void)log(g);  // chart check
  // For each SO(2) factor log(g exp(s eta)) = log(g) + s eta inside the chart.
  return Eigen::MatrixXd::Identity(g.factors(), g.factors());
}

CoAlgebraVector rho_transform(const CoAlgebraVector& theta,
                              const GroupElement& g_rel) {
  check_same_group(g_rel.group_id(), g_rel.factors(), theta.group_id,
                   static_cast<int>(theta.coords.size()), "rho_transform");
  const Eigen::MatrixXd j = log_left_jacobian(g_rel);
  return {theta.group_id, j.transpose() * theta.coords};
}

GroupElement reproject(const GroupElement& g) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g.matrix().rows(), g.matrix().cols());
  for (int i = 0; i < g.factors(); ++i) {
    const Eigen::Matrix2d b = g.matrix().block(2 * i, 2 * i, 2, 2);
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix2d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
      Eigen::Matrix2d u = svd.matrixU();
      u.col(1) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    m.block<2, 2>(2 * i, 2 * i) = r;
  }
  return {g.group_id(), std::move(m)};
}

void set_reprojection_logger(ReprojectionLogger logger) {
  std::lock_guard lock(logger_mutex());
  logger_slot() = std::move(logger);
}

GroupElement reproject_if_drifted(const GroupElement& g, double threshold) {
  const double defect = g.orthogonality_defect();
  if (defect <= threshold) return g;
  {
    std::lock_guard lock(logger_mutex());
    if (logger_slot()) logger_slot()(defect);
  }
  return reproject(g);
}

}  // namespace mux::lie
