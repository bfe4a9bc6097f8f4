#pragma once

// Discrete maximum principle for multiplexed ensembles: Hamiltonian, adjoint
// recursion, multiplier estimation and the condition checks.
//
// Sign conventions. The Hamiltonian at step t is
//   H = nu c(U) + sum_i <theta_i, log s_i(q_t, x_t)> + sum_i <xi_i, f_i(q_t, x_t, u_t)>
//       + <chi, z(U_t)>,
// with c(U) = 1/2 |U|^2, nu in {-1, 0}, state-constraint multipliers mu <= 0 and
// the adjoint recursion
//   rho_{t-1} = rho_t + fq_t^T xi_t,
//   xi_{t-1}  = sx_t^T rho_t + fx_t^T xi_t + Gx(x_t)^T mu_t,        t = 1..N-1.
// Every shipped plant lives on SO(2), which is abelian, so rho and theta
// coincide and the coadjoint action is the identity.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "muxopt/multiplex.hpp"
#include "muxopt/optimizer.hpp"
#include "muxopt/plants.hpp"
#include "muxopt/scenario.hpp"

namespace mux::pmp {

// Adjoint variables paired with one step: one so(2)* coordinate and one
// Euclidean covector per plant.
struct StepCovector {
  Eigen::VectorXd rho;
  std::vector<Eigen::VectorXd> xi;
};

struct Certificate {
  double nu = -1.0;
  Eigen::Vector2d chi = Eigen::Vector2d::Zero();
  // adjoint[t] pairs with step t, t = 0..N-1.
  std::vector<StepCovector> adjoint;
  // mu[t][i] multiplies g_i(x_t), t = 0..N. mu[0] is unused and zero.
  std::vector<std::vector<Eigen::VectorXd>> mu;

  int horizon() const noexcept { return static_cast<int>(adjoint.size()); }
};

// Zero multipliers shaped for the given problem.
std::vector<std::vector<Eigen::VectorXd>> zero_multipliers(const optimizer::TranscribedNLP& nlp);

// H at one step. Throws ChartViolation when a group step leaves its chart.
double hamiltonian(const plants::ModelList& models,
                   const std::vector<lie::GroupElement>& q,
                   const std::vector<Eigen::VectorXd>& x,
                   const multiplex::JointControl& u, const StepCovector& cov,
                   const Eigen::Vector2d& chi, double nu);

// D_U H at one step, flattened like the joint control.
Eigen::VectorXd grad_H_control(const plants::ModelList& models,
                               const std::vector<lie::GroupElement>& q,
                               const std::vector<Eigen::VectorXd>& x,
                               const multiplex::JointControl& u, const StepCovector& cov,
                               const Eigen::Vector2d& chi, double nu);

// (rho_{N-1}, xi_{N-1}) for a free endpoint:
//   rho = nu D_q phi,  xi = nu D_x phi + Gx(x_N)^T mu_N,
// with phi the terminal cost.
StepCovector transversality(const optimizer::TranscribedNLP& nlp,
                            const plants::JointTrajectory& traj,
                            const std::vector<Eigen::VectorXd>& mu_terminal, double nu);

// Runs the adjoint recursion backwards. For a free endpoint the terminal
// covector comes from transversality() and `terminal` must be empty; for a
// fixed endpoint it is required. Throws InvalidArgument or DimensionMismatch.
Certificate adjoint_backward(const optimizer::TranscribedNLP& nlp,
                             const plants::JointTrajectory& traj,
                             std::vector<std::vector<Eigen::VectorXd>> mu, double nu,
                             const Eigen::Vector2d& chi,
                             const std::optional<StepCovector>& terminal = std::nullopt);

struct Report {
  double nontriviality = 0.0;
  double recursion = 0.0;
  std::optional<double> transversality;  // empty for a fixed endpoint
  double stationarity = 0.0;             // Hamiltonian-cone violation
  double stationarity_on_branch = 0.0;   // restricted to the served plant
  double stationarity_off_branch = 0.0;  // restricted to idle plants
  int worst_step = -1;                   // step of the largest cone violation
  double slackness = 0.0;
  double sign = 0.0;
  double multiplexing = 0.0;
  double feasibility = 0.0;
  // sigma[t]: plant served at step t, -1 when no block is active, -2 when
  // more than one is.
  std::vector<int> schedule;

  bool nontriviality_ok = false;
  bool recursion_ok = false;
  bool transversality_ok = false;
  bool stationarity_ok = false;
  bool slackness_ok = false;
  bool sign_ok = false;
  bool multiplexing_ok = false;
  bool feasibility_ok = false;

  bool pass() const noexcept {
    return nontriviality_ok && recursion_ok && transversality_ok && stationarity_ok &&
           slackness_ok && sign_ok && multiplexing_ok && feasibility_ok;
  }
};

// Checks every condition of the maximum principle for `cert` along `traj`.
// The certificate nu = 0, chi = (c, c) with all other fields zero satisfies
// the remaining conditions at every multiplexed trajectory, so the
// non-triviality norm leaves out the chi_1 + chi_2 direction.
Report check_conditions(const optimizer::TranscribedNLP& nlp,
                        const plants::JointTrajectory& traj, const Certificate& cert,
                        const scenario::VerifierTolerances& tol);

struct Estimate {
  Certificate certificate;
  Report report;
  double fit_residual = 0.0;  // |A p + b| of the least-squares fit
  int unknowns = 0;
  int rank = 0;
  int active_constraints = 0;
  // Set when the least-squares system is rank deficient beyond the chi_1 +
  // chi_2 direction. Not an error.
  std::optional<std::string> degenerate;
};

// Fits (terminal covector, active mu, chi) by least squares on the interior
// coordinates of D_U H = 0, dropping multipliers that come out positive.
// Tries nu = -1 first and falls back to nu = 0 when the normal certificate
// fails.
Estimate estimate_multipliers(const optimizer::TranscribedNLP& nlp,
                              const plants::JointTrajectory& traj,
                              const scenario::VerifierTolerances& tol);

}  // namespace mux::pmp
