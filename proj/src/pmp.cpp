#include "muxopt/pmp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "muxopt/errors.hpp"

namespace mux::pmp {
namespace {

constexpr double kConeActiveTol = 1e-12;
constexpr double kZeroColumn = 1e-12;
constexpr double kRankThreshold = 1e-12;
constexpr int kMaxSignPasses = 100;

using Multipliers = std::vector<std::vector<Eigen::VectorXd>>;

Eigen::Matrix2d rot(const plants::JointTrajectory& traj, int t, int i) {
  return traj.q[t][i].matrix();
}

void check_shape(const optimizer::TranscribedNLP& nlp, const plants::JointTrajectory& traj) {
  const int n = nlp.horizon();
  if (traj.horizon() != n || static_cast<int>(traj.q.size()) != n + 1 ||
      static_cast<int>(traj.x.size()) != n + 1 || traj.plants() != nlp.plants()) {
    throw DimensionMismatch("trajectory does not match the problem horizon or plant count");
  }
}

void check_multipliers(const optimizer::TranscribedNLP& nlp, const Multipliers& mu) {
  if (static_cast<int>(mu.size()) != nlp.horizon() + 1) {
    throw DimensionMismatch("multipliers must cover t = 0..N");
  }
  for (const auto& step : mu) {
    if (static_cast<int>(step.size()) != nlp.plants()) {
      throw DimensionMismatch("multiplier step has the wrong plant count");
    }
    for (int i = 0; i < nlp.plants(); ++i) {
      if (step[i].size() != nlp.models()[i]->constraint_dim()) {
        throw DimensionMismatch("multiplier block has the wrong length");
      }
    }
  }
}

std::vector<multiplex::ConeBound> flat_cone(const multiplex::ControlLayout& layout,
                                            const multiplex::JointControl& u) {
  std::vector<std::vector<multiplex::ConeBound>> cone;
  try {
    cone = multiplex::support_cone_halfspace(layout, u, kConeActiveTol);
  } catch (const ApexOutsideSet&) {
    // Classify the clamped point; the box violation shows up as infeasibility.
    multiplex::JointControl c = u;
    for (int i = 0; i < layout.plants(); ++i) {
      c.blocks[i] = u.blocks[i].cwiseMax(layout.box(i).lower).cwiseMin(layout.box(i).upper);
    }
    cone = multiplex::support_cone_halfspace(layout, c, kConeActiveTol);
  }
  std::vector<multiplex::ConeBound> flat;
  flat.reserve(layout.total_dim());
  for (const auto& block : cone) flat.insert(flat.end(), block.begin(), block.end());
  return flat;
}

// Violation of <D, W - U> <= 0 along the admissible unit directions.
double cone_violation(multiplex::ConeBound b, double d) {
  switch (b) {
    case multiplex::ConeBound::Free: return std::abs(d);
    case multiplex::ConeBound::NonPositive: return std::max(0.0, -d);
    case multiplex::ConeBound::NonNegative: return std::max(0.0, d);
    case multiplex::ConeBound::Fixed: return 0.0;
  }
  return 0.0;
}

int schedule_entry(const multiplex::ControlLayout& layout, const multiplex::JointControl& u) {
  const multiplex::Membership m = multiplex::star_membership(layout, u);
  if (!m.member) return -2;
  return m.branch ? *m.branch : -1;
}

double primal_violation(const optimizer::TranscribedNLP& nlp,
                        const plants::JointTrajectory& traj) {
  const int n = nlp.horizon();
  const auto& layout = nlp.layout();
  double v = 0.0;
  for (int t = 0; t < n; ++t) {
    for (int i = 0; i < nlp.plants(); ++i) {
      const auto& box = layout.box(i);
      const Eigen::VectorXd& ui = traj.u[t].blocks[i];
      v = std::max(v, (ui - box.upper).maxCoeff());
      v = std::max(v, (box.lower - ui).maxCoeff());
    }
  }
  for (int i = 0; i < nlp.plants(); ++i) {
    v = std::max(v, std::abs(optimizer::TranscribedNLP::angle_error(
                        nlp.initial_configurations()[i].matrix(), rot(traj, 0, i))));
    v = std::max(v, (traj.x[0][i] - nlp.initial_states()[i]).cwiseAbs().maxCoeff());
  }
  plants::JointTrajectory re;
  try {
    re = plants::joint_rollout(nlp.models(), traj.q[0], traj.x[0], traj.u);
  } catch (const ChartViolation&) {
    return std::numeric_limits<double>::infinity();
  }
  for (int t = 1; t <= n; ++t) {
    for (int i = 0; i < nlp.plants(); ++i) {
      v = std::max(v, std::abs(optimizer::TranscribedNLP::angle_error(rot(traj, t, i),
                                                                     rot(re, t, i))));
      v = std::max(v, (traj.x[t][i] - re.x[t][i]).cwiseAbs().maxCoeff());
    }
  }
  for (const auto& step : plants::constraint_values(traj, nlp.models())) {
    for (const auto& g : step) {
      if (g.size() > 0) v = std::max(v, g.maxCoeff());
    }
  }
  if (nlp.endpoint() == scenario::EndpointMode::Fixed) {
    for (int i = 0; i < nlp.plants(); ++i) {
      v = std::max(v, std::abs(optimizer::TranscribedNLP::angle_error(
                          nlp.target_configurations()[i].matrix(), rot(traj, n, i))));
      v = std::max(v, (traj.x[n][i] - nlp.target_states()[i]).cwiseAbs().maxCoeff());
    }
  }
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

// Least-squares system A p + nu b = 0 over the interior coordinates of
// D_U H, with p = (terminal covector [fixed endpoint], active mu, chi_1, chi_2).
struct MuColumn {
  int t, plant, row;
};

struct FitSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  int seed_columns = 0;
  std::vector<int> seed_offset;  // per plant: rho column, then xi columns
  std::vector<MuColumn> mu_columns;
  int chi_column = 0;  // chi_1 at chi_column, chi_2 next
};

FitSystem build_fit(const optimizer::TranscribedNLP& nlp, const plants::JointTrajectory& traj,
                    double activation) {
  const int n = nlp.horizon();
  const int np = nlp.plants();
  const auto& models = nlp.models();
  const auto& layout = nlp.layout();
  const bool fixed = nlp.endpoint() == scenario::EndpointMode::Fixed;
  FitSystem fs;

  fs.seed_offset.assign(np, 0);
  if (fixed) {
    for (int i = 0; i < np; ++i) {
      fs.seed_offset[i] = fs.seed_columns;
      fs.seed_columns += 1 + models[i]->euclid_dim();
    }
  }
  const auto g = plants::constraint_values(traj, models);
  const int t_last = fixed ? n - 1 : n;
  // mu_index[t][i][k] = column or -1.
  std::vector<std::vector<std::vector<int>>> mu_index(n + 1, std::vector<std::vector<int>>(np));
  int col = fs.seed_columns;
  for (int t = 1; t <= n; ++t) {
    for (int i = 0; i < np; ++i) {
      mu_index[t][i].assign(models[i]->constraint_dim(), -1);
      if (t > t_last) continue;
      for (int k = 0; k < models[i]->constraint_dim(); ++k) {
        if (std::abs(g[t][i][k]) <= activation) {
          mu_index[t][i][k] = col++;
          fs.mu_columns.push_back({t, i, k});
        }
      }
    }
  }
  fs.chi_column = col;
  const int p = col + 2;

  std::vector<std::vector<multiplex::ConeBound>> cones(n);
  int rows = 0;
  for (int t = 0; t < n; ++t) {
    cones[t] = flat_cone(layout, traj.u[t]);
    rows += static_cast<int>(
        std::count(cones[t].begin(), cones[t].end(), multiplex::ConeBound::Free));
  }
  fs.a = Eigen::MatrixXd::Zero(rows, p);
  fs.b = Eigen::VectorXd::Zero(rows);

  // Per plant: rho_t = R p + r, xi_t = X p + xc (constants at nu = 1).
  std::vector<Eigen::RowVectorXd> r_lin(np, Eigen::RowVectorXd::Zero(p));
  std::vector<Eigen::MatrixXd> x_lin(np);
  std::vector<double> r_const(np, 0.0);
  std::vector<Eigen::VectorXd> x_const(np);
  std::vector<plants::StepJacobians> jac;
  std::vector<Eigen::MatrixXd> gjac;
  for (int i = 0; i < np; ++i) {
    const int ni = models[i]->euclid_dim();
    x_lin[i] = Eigen::MatrixXd::Zero(ni, p);
    x_const[i] = Eigen::VectorXd::Zero(ni);
    jac.push_back(models[i]->make_jacobians());
    gjac.emplace_back(models[i]->constraint_dim(), ni);
    if (fixed) {
      r_lin[i][fs.seed_offset[i]] = 1.0;
      for (int k = 0; k < ni; ++k) x_lin[i](k, fs.seed_offset[i] + 1 + k) = 1.0;
    } else {
      r_const[i] = nlp.angle_weights()[i] *
                   optimizer::TranscribedNLP::angle_error(
                       nlp.target_configurations()[i].matrix(), rot(traj, n, i));
      x_const[i] = nlp.state_weights()[i].cwiseProduct(traj.x[n][i] - nlp.target_states()[i]);
      models[i]->constraint_jacobian(rot(traj, n, i), traj.x[n][i], gjac[i]);
      for (int k = 0; k < models[i]->constraint_dim(); ++k) {
        if (mu_index[n][i][k] >= 0) x_lin[i].col(mu_index[n][i][k]) += gjac[i].row(k).transpose();
      }
    }
  }

  int row = 0;
  for (int t = n - 1; t >= 0; --t) {
    const auto jz = multiplex::z_jacobian(traj.u[t]);
    for (int i = 0; i < np; ++i) {
      const auto& m = *models[i];
      const Eigen::VectorXd& ui = traj.u[t].blocks[i];
      m.step_jacobians(rot(traj, t, i), traj.x[t][i], ui, jac[i]);
      for (int k = 0; k < m.control_dim(); ++k) {
        const int c = layout.offset(i) + k;
        if (cones[t][c] != multiplex::ConeBound::Free) continue;
        fs.a.row(row).noalias() = jac[i].fu.col(k).transpose() * x_lin[i];
        fs.a(row, fs.chi_column) = jz(0, c);
        fs.a(row, fs.chi_column + 1) = jz(1, c);
        fs.b[row] = ui[k] + jac[i].fu.col(k).dot(x_const[i]);
        ++row;
      }
      if (t == 0) continue;
      Eigen::MatrixXd x_prev = jac[i].fx.transpose() * x_lin[i];
      x_prev.noalias() += jac[i].sx.transpose() * r_lin[i];
      Eigen::VectorXd xc_prev = jac[i].fx.transpose() * x_const[i];
      xc_prev += jac[i].sx.transpose() * r_const[i];
      m.constraint_jacobian(rot(traj, t, i), traj.x[t][i], gjac[i]);
      for (int k = 0; k < m.constraint_dim(); ++k) {
        if (mu_index[t][i][k] >= 0) x_prev.col(mu_index[t][i][k]) += gjac[i].row(k).transpose();
      }
      r_lin[i].noalias() += jac[i].fq.transpose() * x_lin[i];
      r_const[i] += jac[i].fq.dot(x_const[i]);
      x_lin[i].swap(x_prev);
      x_const[i].swap(xc_prev);
    }
  }
  return fs;
}

struct ColumnSolve {
  Eigen::VectorXd p;  // full length, zeros on dropped columns
  int rank = 0;
  int used = 0;
};

Eigen::VectorXd column_norms(const Eigen::MatrixXd& a) {
  Eigen::VectorXd s = a.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s[k] == 0.0) s[k] = 1.0;
  }
  return s;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& a, const std::vector<int>& cols) {
  Eigen::MatrixXd out(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
  return out;
}

// min |A p + b| over the kept columns, minimum norm in column-scaled units.
ColumnSolve solve_normal(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                         const std::vector<int>& cols) {
  ColumnSolve out;
  out.p = Eigen::VectorXd::Zero(a.cols());
  out.used = static_cast<int>(cols.size());
  if (cols.empty() || a.rows() == 0) return out;
  Eigen::MatrixXd sub = select_columns(a, cols);
  const Eigen::VectorXd scale = column_norms(sub);
  sub = sub * scale.cwiseInverse().asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(kRankThreshold);
  cod.compute(sub);
  const Eigen::VectorXd y = cod.solve(-b);
  out.rank = static_cast<int>(cod.rank());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.p[cols[k]] = y[static_cast<Eigen::Index>(k)] / scale[static_cast<Eigen::Index>(k)];
  }
  return out;
}

// Unit-norm p minimising |A p| over the kept columns.
ColumnSolve solve_abnormal(const Eigen::MatrixXd& a, const std::vector<int>& cols) {
  ColumnSolve out;
  out.p = Eigen::VectorXd::Zero(a.cols());
  out.used = static_cast<int>(cols.size());
  if (cols.empty()) return out;
  Eigen::MatrixXd sub = select_columns(a, cols);
  const Eigen::VectorXd scale = column_norms(sub);
  sub = sub * scale.cwiseInverse().asDiagonal();
  Eigen::VectorXd v;
  if (sub.rows() < sub.cols()) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeFullV);
    v = svd.matrixV().col(sub.cols() - 1);
    out.rank = static_cast<int>(svd.setThreshold(kRankThreshold).rank());
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeThinV);
    v = svd.matrixV().col(sub.cols() - 1);
    out.rank = static_cast<int>(svd.setThreshold(kRankThreshold).rank());
  }
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.p[cols[k]] = v[static_cast<Eigen::Index>(k)] / scale[static_cast<Eigen::Index>(k)];
  }
  out.p /= out.p.norm();
  return out;
}

Certificate certificate_from(const optimizer::TranscribedNLP& nlp,
                             const plants::JointTrajectory& traj, const FitSystem& fs,
                             const Eigen::VectorXd& p, double nu) {
  Multipliers mu = zero_multipliers(nlp);
  for (std::size_t k = 0; k < fs.mu_columns.size(); ++k) {
    const MuColumn& c = fs.mu_columns[k];
    mu[c.t][c.plant][c.row] = p[fs.seed_columns + static_cast<Eigen::Index>(k)];
  }
  const Eigen::Vector2d chi(p[fs.chi_column], p[fs.chi_column + 1]);
  std::optional<StepCovector> terminal;
  if (nlp.endpoint() == scenario::EndpointMode::Fixed) {
    StepCovector s;
    s.rho.resize(nlp.plants());
    for (int i = 0; i < nlp.plants(); ++i) {
      const int o = fs.seed_offset[i];
      s.rho[i] = p[o];
      s.xi.push_back(p.segment(o + 1, nlp.models()[i]->euclid_dim()));
    }
    terminal = std::move(s);
  }
  return adjoint_backward(nlp, traj, std::move(mu), nu, chi, terminal);
}

}  // namespace

Multipliers zero_multipliers(const optimizer::TranscribedNLP& nlp) {
  Multipliers mu(nlp.horizon() + 1);
  for (auto& step : mu) {
    for (const auto& m : nlp.models()) step.push_back(Eigen::VectorXd::Zero(m->constraint_dim()));
  }
  return mu;
}

double hamiltonian(const plants::ModelList& models, const std::vector<lie::GroupElement>& q,
                   const std::vector<Eigen::VectorXd>& x, const multiplex::JointControl& u,
                   const StepCovector& cov, const Eigen::Vector2d& chi, double nu) {
  const int np = static_cast<int>(models.size());
  if (static_cast<int>(q.size()) != np || static_cast<int>(x.size()) != np ||
      u.plants() != np || cov.rho.size() != np || static_cast<int>(cov.xi.size()) != np) {
    throw DimensionMismatch("hamiltonian: plant count mismatch");
  }
  double h = 0.0;
  for (int i = 0; i < np; ++i) {
    const auto& m = *models[i];
    const Eigen::Matrix2d r = q[i].matrix();
    const Eigen::Matrix2d s = m.step_group(r, x[i]);
    Eigen::VectorXd next(m.euclid_dim());
    m.step_euclid(r, x[i], u.blocks[i], next);
    h += nu * 0.5 * u.blocks[i].squaredNorm();
    h += cov.rho[i] * std::atan2(s(1, 0), s(0, 0));
    h += cov.xi[i].dot(next);
  }
  return h + chi.dot(multiplex::z(u));
}

Eigen::VectorXd grad_H_control(const plants::ModelList& models,
                               const std::vector<lie::GroupElement>& q,
                               const std::vector<Eigen::VectorXd>& x,
                               const multiplex::JointControl& u, const StepCovector& cov,
                               const Eigen::Vector2d& chi, double nu) {
  const int np = static_cast<int>(models.size());
  if (static_cast<int>(q.size()) != np || static_cast<int>(x.size()) != np ||
      u.plants() != np || static_cast<int>(cov.xi.size()) != np) {
    throw DimensionMismatch("grad_H_control: plant count mismatch");
  }
  Eigen::VectorXd g = multiplex::z_pairing_gradient(u, chi);
  int off = 0;
  for (int i = 0; i < np; ++i) {
    const auto& m = *models[i];
    plants::StepJacobians jac = m.make_jacobians();
    m.step_jacobians(q[i].matrix(), x[i], u.blocks[i], jac);
    g.segment(off, m.control_dim()) += nu * u.blocks[i] + jac.fu.transpose() * cov.xi[i];
    off += m.control_dim();
  }
  return g;
}

StepCovector transversality(const optimizer::TranscribedNLP& nlp,
                            const plants::JointTrajectory& traj,
                            const std::vector<Eigen::VectorXd>& mu_terminal, double nu) {
  check_shape(nlp, traj);
  const int n = nlp.horizon();
  if (static_cast<int>(mu_terminal.size()) != nlp.plants()) {
    throw DimensionMismatch("transversality: plant count mismatch");
  }
  StepCovector s;
  s.rho.resize(nlp.plants());
  for (int i = 0; i < nlp.plants(); ++i) {
    const auto& m = *nlp.models()[i];
    s.rho[i] = nu * nlp.angle_weights()[i] *
               optimizer::TranscribedNLP::angle_error(nlp.target_configurations()[i].matrix(),
                                                      rot(traj, n, i));
    Eigen::VectorXd xi =
        nu * nlp.state_weights()[i].cwiseProduct(traj.x[n][i] - nlp.target_states()[i]);
    Eigen::MatrixXd gj(m.constraint_dim(), m.euclid_dim());
    m.constraint_jacobian(rot(traj, n, i), traj.x[n][i], gj);
    xi += gj.transpose() * mu_terminal[i];
    s.xi.push_back(std::move(xi));
  }
  return s;
}

Certificate adjoint_backward(const optimizer::TranscribedNLP& nlp,
                             const plants::JointTrajectory& traj, Multipliers mu, double nu,
                             const Eigen::Vector2d& chi,
                             const std::optional<StepCovector>& terminal) {
  check_shape(nlp, traj);
  check_multipliers(nlp, mu);
  const int n = nlp.horizon();
  const bool fixed = nlp.endpoint() == scenario::EndpointMode::Fixed;
  if (fixed != terminal.has_value()) {
    throw InvalidArgument(fixed ? "adjoint_backward: a fixed endpoint needs a terminal covector"
                                : "adjoint_backward: a free endpoint takes its terminal "
                                  "covector from transversality");
  }
  Certificate c;
  c.nu = nu;
  c.chi = chi;
  c.adjoint.resize(n);
  c.adjoint[n - 1] = fixed ? *terminal : transversality(nlp, traj, mu[n], nu);
  const StepCovector& last = c.adjoint[n - 1];
  if (last.rho.size() != nlp.plants() || static_cast<int>(last.xi.size()) != nlp.plants()) {
    throw DimensionMismatch("adjoint_backward: terminal covector has the wrong plant count");
  }
  for (int i = 0; i < nlp.plants(); ++i) {
    if (last.xi[i].size() != nlp.models()[i]->euclid_dim()) {
      throw DimensionMismatch("adjoint_backward: terminal covector block has the wrong length");
    }
  }
  for (int i = 0; i < nlp.plants(); ++i) {
    const auto& m = *nlp.models()[i];
    plants::StepJacobians jac = m.make_jacobians();
    Eigen::MatrixXd gj(m.constraint_dim(), m.euclid_dim());
    for (int t = n - 1; t >= 1; --t) {
      const StepCovector& cur = c.adjoint[t];
      StepCovector& prev = c.adjoint[t - 1];
      if (prev.rho.size() == 0) {
        prev.rho = Eigen::VectorXd::Zero(nlp.plants());
        prev.xi.resize(nlp.plants());
      }
      m.step_jacobians(rot(traj, t, i), traj.x[t][i], traj.u[t].blocks[i], jac);
      m.constraint_jacobian(rot(traj, t, i), traj.x[t][i], gj);
      prev.rho[i] = cur.rho[i] + jac.fq.dot(cur.xi[i]);
      prev.xi[i] = jac.fx.transpose() * cur.xi[i] + jac.sx.transpose() * cur.rho[i] +
                   gj.transpose() * mu[t][i];
    }
  }
  c.mu = std::move(mu);
  return c;
}

Report check_conditions(const optimizer::TranscribedNLP& nlp,
                        const plants::JointTrajectory& traj, const Certificate& cert,
                        const scenario::VerifierTolerances& tol) {
  check_shape(nlp, traj);
  check_multipliers(nlp, cert.mu);
  const int n = nlp.horizon();
  const int np = nlp.plants();
  if (cert.horizon() != n) throw DimensionMismatch("certificate horizon mismatch");
  const auto& models = nlp.models();
  const auto& layout = nlp.layout();
  Report r;

  double norm2 = cert.nu * cert.nu + 0.5 * std::pow(cert.chi[0] - cert.chi[1], 2);
  for (const auto& s : cert.adjoint) {
    norm2 += s.rho.squaredNorm();
    for (const auto& xi : s.xi) norm2 += xi.squaredNorm();
  }
  for (const auto& step : cert.mu) {
    for (const auto& m : step) norm2 += m.squaredNorm();
  }
  r.nontriviality = std::sqrt(norm2);

  for (int i = 0; i < np; ++i) {
    const auto& m = *models[i];
    plants::StepJacobians jac = m.make_jacobians();
    Eigen::MatrixXd gj(m.constraint_dim(), m.euclid_dim());
    for (int t = n - 1; t >= 1; --t) {
      const StepCovector& cur = cert.adjoint[t];
      const StepCovector& prev = cert.adjoint[t - 1];
      m.step_jacobians(rot(traj, t, i), traj.x[t][i], traj.u[t].blocks[i], jac);
      m.constraint_jacobian(rot(traj, t, i), traj.x[t][i], gj);
      const double dr = prev.rho[i] - cur.rho[i] - jac.fq.dot(cur.xi[i]);
      const Eigen::VectorXd dx = prev.xi[i] - jac.fx.transpose() * cur.xi[i] -
                                 jac.sx.transpose() * cur.rho[i] -
                                 gj.transpose() * cert.mu[t][i];
      r.recursion = std::max({r.recursion, std::abs(dr), dx.cwiseAbs().maxCoeff()});
    }
  }

  if (nlp.endpoint() == scenario::EndpointMode::Free) {
    const StepCovector expect = transversality(nlp, traj, cert.mu[n], cert.nu);
    double v = 0.0;
    for (int i = 0; i < np; ++i) {
      v = std::max(v, std::abs(expect.rho[i] - cert.adjoint[n - 1].rho[i]));
      v = std::max(v, (expect.xi[i] - cert.adjoint[n - 1].xi[i]).cwiseAbs().maxCoeff());
    }
    r.transversality = v;
  }

  r.schedule.resize(n);
  Eigen::Vector2d w = Eigen::Vector2d::Zero();
  for (int t = 0; t < n; ++t) {
    const multiplex::JointControl& u = traj.u[t];
    r.schedule[t] = schedule_entry(layout, u);
    w += multiplex::z(u);
    const Eigen::VectorXd d =
        grad_H_control(models, traj.q[t], traj.x[t], u, cert.adjoint[t], cert.chi, cert.nu);
    const auto cone = flat_cone(layout, u);
    for (int i = 0; i < np; ++i) {
      const bool on = r.schedule[t] == i;
      for (int k = 0; k < layout.dim(i); ++k) {
        const int c = layout.offset(i) + k;
        const double v = cone_violation(cone[c], d[c]);
        double& slot = on ? r.stationarity_on_branch : r.stationarity_off_branch;
        slot = std::max(slot, v);
        if (v > r.stationarity) {
          r.stationarity = v;
          r.worst_step = t;
        }
      }
    }
  }
  r.multiplexing = w.norm();

  const auto g = plants::constraint_values(traj, models);
  for (int t = 1; t <= n; ++t) {
    for (int i = 0; i < np; ++i) {
      if (cert.mu[t][i].size() == 0) continue;
      r.slackness = std::max(r.slackness, cert.mu[t][i].cwiseProduct(g[t][i]).cwiseAbs().maxCoeff());
      r.sign = std::max(r.sign, cert.mu[t][i].maxCoeff());
    }
  }
  r.feasibility = primal_violation(nlp, traj);

  r.nontriviality_ok = r.nontriviality > tol.certificate;
  r.recursion_ok = r.recursion <= tol.recursion;
  r.transversality_ok = !r.transversality || *r.transversality <= tol.transversality;
  r.stationarity_ok = r.stationarity <= tol.stationarity;
  r.slackness_ok = r.slackness <= tol.slackness;
  r.sign_ok = r.sign <= tol.sign;
  r.multiplexing_ok = r.multiplexing <= tol.multiplexing;
  r.feasibility_ok = r.feasibility <= tol.feasibility;
  return r;
}

Estimate estimate_multipliers(const optimizer::TranscribedNLP& nlp,
                              const plants::JointTrajectory& traj,
                              const scenario::VerifierTolerances& tol) {
  check_shape(nlp, traj);
  const FitSystem fs = build_fit(nlp, traj, tol.activation);
  const int p = static_cast<int>(fs.a.cols());
  const int mu_begin = fs.seed_columns;
  const int mu_end = mu_begin + static_cast<int>(fs.mu_columns.size());

  // chi enters through chi_1 + chi_2 and chi_1 - chi_2. The sum column
  // vanishes on multiplexed controls and is dropped there.
  Eigen::MatrixXd a = fs.a;
  a.col(fs.chi_column) = fs.a.col(fs.chi_column) + fs.a.col(fs.chi_column + 1);
  a.col(fs.chi_column + 1) = fs.a.col(fs.chi_column) - fs.a.col(fs.chi_column + 1);
  const auto chi_of = [&](const Eigen::VectorXd& y) {
    Eigen::VectorXd out = y;
    out[fs.chi_column] = y[fs.chi_column] + y[fs.chi_column + 1];
    out[fs.chi_column + 1] = y[fs.chi_column] - y[fs.chi_column + 1];
    return out;
  };
  const bool sum_dead = a.rows() == 0 || a.col(fs.chi_column).cwiseAbs().maxCoeff() <= kZeroColumn;
  const bool diff_dead =
      a.rows() == 0 || a.col(fs.chi_column + 1).cwiseAbs().maxCoeff() <= kZeroColumn;

  std::vector<int> cols;
  for (int k = 0; k < p; ++k) {
    if (k == fs.chi_column && sum_dead) continue;
    if (k == fs.chi_column + 1 && diff_dead) continue;
    cols.push_back(k);
  }

  Estimate est;
  est.unknowns = static_cast<int>(cols.size());
  est.active_constraints = static_cast<int>(fs.mu_columns.size());

  // Normal certificate: drop multipliers of the wrong sign and refit.
  ColumnSolve sol = solve_normal(a, -fs.b, cols);
  for (int pass = 0; pass < kMaxSignPasses; ++pass) {
    std::vector<int> kept;
    bool dropped = false;
    for (int k : cols) {
      if (k >= mu_begin && k < mu_end && sol.p[k] > tol.sign) {
        dropped = true;
        continue;
      }
      kept.push_back(k);
    }
    if (!dropped) break;
    cols = std::move(kept);
    sol = solve_normal(a, -fs.b, cols);
  }
  Eigen::VectorXd y = chi_of(sol.p);
  est.certificate = certificate_from(nlp, traj, fs, y, -1.0);
  est.report = check_conditions(nlp, traj, est.certificate, tol);
  est.fit_residual = (fs.a * y - fs.b).norm();
  est.rank = sol.rank;
  if (sol.rank < sol.used) {
    est.degenerate = "least-squares system has rank " + std::to_string(sol.rank) + " for " +
                     std::to_string(sol.used) + " unknowns";
  }
  if (est.report.pass()) return est;

  // Abnormal certificate on the chi_1 - chi_2 direction only.
  std::vector<int> abn;
  for (int k = 0; k < p; ++k) {
    if (k == fs.chi_column) continue;
    if (k == fs.chi_column + 1 && diff_dead) continue;
    abn.push_back(k);
  }
  const ColumnSolve s0 = solve_abnormal(a, abn);
  Eigen::VectorXd y0 = chi_of(s0.p);
  if (y0.segment(mu_begin, mu_end - mu_begin).sum() > 0.0) y0 = -y0;
  Certificate c0 = certificate_from(nlp, traj, fs, y0, 0.0);
  Report r0 = check_conditions(nlp, traj, c0, tol);
  if (r0.pass()) {
    est.certificate = std::move(c0);
    est.report = std::move(r0);
    est.fit_residual = (fs.a * y0).norm();
    est.rank = s0.rank;
    est.unknowns = s0.used;
    est.degenerate.reset();
    if (s0.rank < s0.used - 1) {
      est.degenerate = "abnormal system has a null space of dimension " +
                       std::to_string(s0.used - s0.rank);
    }
  }
  return est;
}

}  // namespace mux::pmp
