#pragma once

// The star-shaped admissible control set, the constraint map z whose zeros
// characterise it, and the support cone of a box product.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace mux::multiplex {

// Membership tolerance on block norms.
inline constexpr double kMembershipTol = 1e-9;
// Norm below which z(U) counts as zero.
inline constexpr double kZeroTol = 1e-12;
// Slack allowed when checking that an apex lies in its box.
inline constexpr double kApexSlack = 1e-9;

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dim() const noexcept { return static_cast<int>(lower.size()); }
  bool contains(const Eigen::VectorXd& u, double slack = 0.0) const;
  Eigen::VectorXd project(const Eigen::VectorXd& u) const;
  static Box symmetric(const Eigen::VectorXd& bound);
};

// Per-plant control boxes U_1 x ... x U_P. Every box must contain 0.
class ControlLayout {
 public:
  ControlLayout() = default;
  explicit ControlLayout(std::vector<Box> boxes);

  int plants() const noexcept { return static_cast<int>(boxes_.size()); }
  int dim(int plant) const { return boxes_.at(plant).dim(); }
  int offset(int plant) const { return offsets_.at(plant); }
  int total_dim() const noexcept { return total_; }
  const Box& box(int plant) const { return boxes_.at(plant); }
  const std::vector<Box>& boxes() const noexcept { return boxes_; }

 private:
  std::vector<Box> boxes_;
  std::vector<int> offsets_;
  int total_ = 0;
};

// One control block per plant.
struct JointControl {
  std::vector<Eigen::VectorXd> blocks;

  int plants() const noexcept { return static_cast<int>(blocks.size()); }
  Eigen::VectorXd flatten() const;
  static JointControl zeros(const ControlLayout& layout);
  static JointControl from_flat(const ControlLayout& layout,
                                std::span<const double> flat);
};

using AuxState = Eigen::Vector2d;

// The matrix Lambda in R^{(n1 n2) x n1} with Lambda_{ij} = 1 iff
// j*n2 <= i < (j+1)*n2 (zero-based).
Eigen::MatrixXd lambda_matrix(int n1, int n2);

// v1 (*) v2 = < Lambda v1, (v2, v2, ..., v2) >, evaluated through the index
// structure of Lambda without materialising it.
double opr(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2);

// z(U) = sum_{i<j} |u^i|^2 |u^j|^2 (1,1) + (u^i (*) u^j) (1,-1).
Eigen::Vector2d z(const JointControl& u);

// Generalisation allowing at most m nonzero blocks: sum over (m+1)-subsets.
// Throws InvalidArgument unless 1 <= m < P.
Eigen::Vector2d z_m(const JointControl& u, int m);

// 2 x dim Jacobian of z with respect to the flattened control.
Eigen::Matrix<double, 2, Eigen::Dynamic> z_jacobian(const JointControl& u);

// Gradient of <chi, z(U)> with respect to the flattened control.
Eigen::VectorXd z_pairing_gradient(const JointControl& u,
                                   const Eigen::Vector2d& chi);

struct Membership {
  bool member = false;
  // Index of the unique block with norm > tol (the multiplexer value).
  std::optional<int> branch;
};

Membership star_membership(const ControlLayout& layout, const JointControl& u,
                           double tol = kMembershipTol);

// w_0 = 0, w_{t+1} = w_t + z(U_t). Returns N + 1 states.
std::vector<AuxState> aux_rollout(std::span<const JointControl> controls);

enum class ConeBound : std::uint8_t {
  Free,         // strictly interior coordinate
  NonPositive,  // at the upper bound
  NonNegative,  // at the lower bound
  Fixed,        // degenerate interval, lower == upper
};

// Per-plant, per-coordinate direction restrictions describing the support
// cone K(U*, apex) of the box product. Throws ApexOutsideSet.
std::vector<std::vector<ConeBound>> support_cone_halfspace(
    const ControlLayout& layout, const JointControl& apex,
    double active_tol = 0.0);

}  // namespace mux::multiplex
