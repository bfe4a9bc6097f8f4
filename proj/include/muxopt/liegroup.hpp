#pragma once

// Matrix Lie group kernel for SO(2) and finite direct products of SO(2).
//
// Algebra and coalgebra elements are stored as coordinate vectors; matrices
// are derived views. Every group shipped here is abelian, so the adjoint and
// coadjoint actions, the left-translation lifts and the derivative of the
// logarithm reduce to identities in coordinates. They are still exposed as
// separate operations because the optimality recursions are written in terms
// of them.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>

namespace mux::lie {

enum class GroupId : std::uint8_t { SO2, ProductOfSO2s };

const char* to_string(GroupId id) noexcept;

// Angles within this distance of +-pi are rejected by log().
inline constexpr double kChartMargin = 1e-9;

// Drift above which reproject_if_drifted() polar-projects an element.
inline constexpr double kReprojectionThreshold = 1e-9;

class GroupElement {
 public:
  // The matrix must be 2k x 2k block diagonal with k == 1 for SO2. Group
  // membership is not enforced so that raw arithmetic drift stays visible;
  // use orthogonality_defect() to inspect it.
  GroupElement(GroupId id, Eigen::MatrixXd matrix);

  static GroupElement identity(GroupId id, int factors = 1);
  static GroupElement rotation(double angle);
  static GroupElement product(std::span<const GroupElement> factors);

  GroupId group_id() const noexcept { return id_; }
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  int factors() const noexcept { return static_cast<int>(matrix_.rows() / 2); }
  int algebra_dim() const noexcept { return factors(); }

  // Projection onto the i-th SO(2) factor.
  GroupElement factor(int i) const;

  GroupElement inverse() const;
  GroupElement operator*(const GroupElement& rhs) const;

  // max |(R^T R - I)_{ij}| over all blocks.
  double orthogonality_defect() const;
  // max |det(block) - 1| over all blocks.
  double determinant_defect() const;

 private:
  GroupId id_;
  Eigen::MatrixXd matrix_;
};

struct AlgebraVector {
  GroupId group_id = GroupId::SO2;
  Eigen::VectorXd coords;

  // Block-diagonal skew matrix with blocks [[0, -a], [a, 0]].
  Eigen::MatrixXd hat() const;
  static AlgebraVector vee(GroupId id, const Eigen::MatrixXd& skew);
};

struct CoAlgebraVector {
  GroupId group_id = GroupId::SO2;
  Eigen::VectorXd coords;

  double pair(const AlgebraVector& eta) const;
};

GroupElement exp(const AlgebraVector& xi);

// Throws OutOfChart when any factor's angle magnitude is >= pi - margin.
AlgebraVector log(const GroupElement& g, double chart_margin = kChartMargin);

// Ad_g eta = d/ds g exp(s eta) g^{-1} at s = 0.
AlgebraVector adjoint(const GroupElement& g, const AlgebraVector& eta);

// Ad*_{g^{-1}} mu, defined by <Ad*_{g^{-1}} mu, eta> = <mu, Ad_{g^{-1}} eta>.
CoAlgebraVector coadjoint(const GroupElement& g, const CoAlgebraVector& mu);

// Left-trivialised cotangent lift T*_e Phi_g of left translation by g.
CoAlgebraVector cotangent_lift_left(const GroupElement& g,
                                    const CoAlgebraVector& mu);

// Matrix of D log(g) o T_e Phi_g in algebra coordinates. Throws OutOfChart.
Eigen::MatrixXd log_left_jacobian(const GroupElement& g);

// theta -> (D log(g_rel) o T_e Phi_{g_rel})^* theta. Throws OutOfChart.
CoAlgebraVector rho_transform(const CoAlgebraVector& theta,
                              const GroupElement& g_rel);

// Polar projection of every block onto SO(2).
GroupElement reproject(const GroupElement& g);

// Sink for re-projection events; the default writes one line to std::clog.
using ReprojectionLogger = std::function<void(double defect)>;
void set_reprojection_logger(ReprojectionLogger logger);

// Re-projects only when orthogonality_defect() exceeds `threshold`, and logs
// every application.
GroupElement reproject_if_drifted(const GroupElement& g,
                                  double threshold = kReprojectionThreshold);

}  // namespace mux::lie
