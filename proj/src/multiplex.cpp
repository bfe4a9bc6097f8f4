#include "muxopt/multiplex.hpp"

#include <cmath>
#include <string>

#include "muxopt/errors.hpp"

namespace mux::multiplex {

bool Box::contains(const Eigen::VectorXd& u, double slack) const {
  if (u.size() != lower.size()) return false;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    if (u[k] < lower[k] - slack || u[k] > upper[k] + slack) return false;
  }
  return true;
}

Eigen::VectorXd Box::project(const Eigen::VectorXd& u) const {
  return u.cwiseMax(lower).cwiseMin(upper);
}

Box Box::symmetric(const Eigen::VectorXd& bound) {
  return {-bound, bound};
}

ControlLayout::ControlLayout(std::vector<Box> boxes) : boxes_(std::move(boxes)) {
  offsets_.reserve(boxes_.size());
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    const Box& b = boxes_[i];
    if (b.lower.size() != b.upper.size() || b.lower.size() == 0) {
      throw DimensionMismatch("ControlLayout: box " + std::to_string(i) +
                              " has inconsistent bounds");
    }
    for (Eigen::Index k = 0; k < b.lower.size(); ++k) {
      if (!(b.lower[k] <= 0.0 && 0.0 <= b.upper[k])) {
        throw InvalidArgument("ControlLayout: box " + std::to_string(i) +
                              " must contain the origin");
      }
    }
    offsets_.push_back(total_);
    total_ += b.dim();
  }
}

Eigen::VectorXd JointControl::flatten() const {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.size();
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.segment(at, b.size()) = b;
    at += b.size();
  }
  return out;
}

JointControl JointControl::zeros(const ControlLayout& layout) {
  JointControl u;
  u.blocks.reserve(layout.plants());
  for (int i = 0; i < layout.plants(); ++i) {
    u.blocks.push_back(Eigen::VectorXd::Zero(layout.dim(i)));
  }
  return u;
}

JointControl JointControl::from_flat(const ControlLayout& layout,
                                     std::span<const double> flat) {
  if (static_cast<int>(flat.size()) != layout.total_dim()) {
    throw DimensionMismatch("JointControl::from_flat: expected " +
                            std::to_string(layout.total_dim()) + " values, got " +
                            std::to_string(flat.size()));
  }
  JointControl u;
  u.blocks.reserve(layout.plants());
  for (int i = 0; i < layout.plants(); ++i) {
    u.blocks.emplace_back(Eigen::Map<const Eigen::VectorXd>(
        flat.data() + layout.offset(i), layout.dim(i)));
  }
  return u;
}

Eigen::MatrixXd lambda_matrix(int n1, int n2) {
  Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(n1 * n2, n1);
  for (int j = 0; j < n1; ++j) lam.block(j * n2, j, n2, 1).setOnes();
  return lam;
}

double opr(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2) {
  const Eigen::Index n1 = v1.size();
  const Eigen::Index n2 = v2.size();
  // Row r of Lambda v1 is v1[r / n2]; row r of the stacked copy is v2[r % n2].
  double acc = 0.0;
  for (Eigen::Index r = 0; r < n1 * n2; ++r) acc += v1[r / n2] * v2[r % n2];
  return acc;
}

namespace {

void check_blocks(const JointControl& u) {
  for (const auto& b : u.blocks) {
    if (b.size() == 0) throw DimensionMismatch("z: empty control block");
  }
}

}  // namespace

Eigen::Vector2d z(const JointControl& u) {
  check_blocks(u);
  const int p = u.plants();
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (int i = 0; i + 1 < p; ++i) {
    const double ni = u.blocks[i].squaredNorm();
    for (int j = i + 1; j < p; ++j) {
      const double a = ni * u.blocks[j].squaredNorm();
      const double b = opr(u.blocks[i], u.blocks[j]);
      out[0] += a + b;
      out[1] += a - b;
    }
  }
  return out;
}

Eigen::Vector2d z_m(const JointControl& u, int m) {
  check_blocks(u);
  const int p = u.plants();
  if (m < 1 || m >= p) {
    throw InvalidArgument("z_m: need 1 <= m < P (m = " + std::to_string(m) +
                          ", P = " + std::to_string(p) + ")");
  }
  const int k = m + 1;
  std::vector<int> idx(k);
  for (int s = 0; s < k; ++s) idx[s] = s;
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  while (true) {
    double norms = 1.0;
    for (int s : idx) norms *= u.blocks[s].squaredNorm();
    // Chained product: the running scalar is a 1-vector on the left.
    Eigen::VectorXd chain = u.blocks[idx[0]];
    for (int s = 1; s < k; ++s) {
      chain = Eigen::VectorXd::Constant(1, opr(chain, u.blocks[idx[s]]));
    }
    const double b = chain.size() == 1 ? chain[0] : chain.sum();
    out[0] += norms + b;
    out[1] += norms - b;

    int pos = k - 1;
    while (pos >= 0 && idx[pos] == p - k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (int s = pos + 1; s < k; ++s) idx[s] = idx[s - 1] + 1;
  }
  return out;
}

Eigen::Matrix<double, 2, Eigen::Dynamic> z_jacobian(const JointControl& u) {
  check_blocks(u);
  const int p = u.plants();
  std::vector<Eigen::Index> off(p);
  Eigen::Index n = 0;
  for (int i = 0; i < p; ++i) {
    off[i] = n;
    n += u.blocks[i].size();
  }
  Eigen::Matrix<double, 2, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, n);
  std::vector<double> sq(p), sums(p);
  for (int i = 0; i < p; ++i) {
    sq[i] = u.blocks[i].squaredNorm();
    sums[i] = u.blocks[i].sum();
  }
  for (int i = 0; i < p; ++i) {
    double other_sq = 0.0;
    double other_sum = 0.0;
    for (int j = 0; j < p; ++j) {
      if (j == i) continue;
      other_sq += sq[j];
      other_sum += sums[j];
    }
    const auto ni = u.blocks[i].size();
    const Eigen::VectorXd da = 2.0 * other_sq * u.blocks[i];
    jac.block(0, off[i], 1, ni) = (da.array() + other_sum).matrix().transpose();
    jac.block(1, off[i], 1, ni) = (da.array() - other_sum).matrix().transpose();
  }
  return jac;
}

Eigen::VectorXd z_pairing_gradient(const JointControl& u,
                                   const Eigen::Vector2d& chi) {
  return z_jacobian(u).transpose() * chi;
}

Membership star_membership(const ControlLayout& layout, const JointControl& u,
                           double tol) {
  Membership out;
  if (u.plants() != layout.plants()) return out;
  int nonzero = 0;
  for (int i = 0; i < u.plants(); ++i) {
    if (!layout.box(i).contains(u.blocks[i])) return out;
    if (u.blocks[i].norm() > tol) {
      ++nonzero;
      out.branch = i;
    }
  }
  if (nonzero > 1) {
    out.branch.reset();
    return out;
  }
  out.member = true;
  return out;
}

std::vector<AuxState> aux_rollout(std::span<const JointControl> controls) {
  std::vector<AuxState> w;
  w.reserve(controls.size() + 1);
  w.push_back(AuxState::Zero());
  for (const auto& u : controls) w.push_back(w.back() + z(u));
  return w;
}

std::vector<std::vector<ConeBound>> support_cone_halfspace(
    const ControlLayout& layout, const JointControl& apex, double active_tol) {
  if (apex.plants() != layout.plants()) {
    throw DimensionMismatch("support_cone_halfspace: plant count mismatch");
  }
  std::vector<std::vector<ConeBound>> cone(layout.plants());
  for (int i = 0; i < layout.plants(); ++i) {
    const Box& box = layout.box(i);
    const Eigen::VectorXd& a = apex.blocks[i];
    if (a.size() != box.dim()) {
      throw DimensionMismatch("support_cone_halfspace: block " +
                              std::to_string(i) + " has wrong length");
    }
    if (!box.contains(a, kApexSlack)) {
      throw ApexOutsideSet("support_cone_halfspace: block " + std::to_string(i) +
                           " violates its box");
    }
    cone[i].resize(box.dim());
    for (int k = 0; k < box.dim(); ++k) {
      const bool at_upper = a[k] >= box.upper[k] - active_tol;
      const bool at_lower = a[k] <= box.lower[k] + active_tol;
      if (at_upper && at_lower) {
        cone[i][k] = ConeBound::Fixed;
      } else if (at_upper) {
        cone[i][k] = ConeBound::NonPositive;
      } else if (at_lower) {
        cone[i][k] = ConeBound::NonNegative;
      } else {
        cone[i][k] = ConeBound::Free;
      }
    }
  }
  return cone;
}

}  // namespace mux::multiplex
