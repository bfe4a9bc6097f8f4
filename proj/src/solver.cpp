#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <thread>

#include "evaluator.hpp"
#include "muxopt/errors.hpp"
#include "muxopt/optimizer.hpp"

namespace mux::optimizer {
namespace {

constexpr double kStepMin = 1e-12;
constexpr double kStepMax = 1e12;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
std::span<double> view(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (x.size() == 0) return 0.0;
  return (project(x - g, lo, hi) - x).lpNorm<Eigen::Infinity>();
}

}  // namespace

SpgResult spg_minimize(const ValueGradient& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, int max_iterations, double tolerance,
                       int window) {
  SpgResult r;
  const Eigen::Index n = x0.size();
  Eigen::VectorXd x = project(x0, lower, upper);
  Eigen::VectorXd g(n), gn(n), xn(n), d(n);
  double fx = f(view(x), view(g));
  ++r.evaluations;
  r.x = x;
  r.value = fx;
  if (!std::isfinite(fx)) {
    r.projected_gradient = std::numeric_limits<double>::infinity();
    return r;
  }
  std::deque<double> history{fx};
  double pg = projected_gradient_norm(x, g, lower, upper);
  double lambda = pg > 0.0 ? std::clamp(1.0 / pg, kStepMin, kStepMax) : 1.0;

  while (pg > tolerance && r.iterations < max_iterations) {
    d = project(x - lambda * g, lower, upper) - x;
    const double gtd = g.dot(d);
    const double ref = *std::max_element(history.begin(), history.end());
    double alpha = 1.0;
    double fn = 0.0;
    bool accepted = false;
    for (int k = 0; k < kMaxBacktracks; ++k) {
      xn = x + alpha * d;
      fn = f(view(xn), view(gn));
      ++r.evaluations;
      if (std::isfinite(fn) && fn <= ref + kArmijo * alpha * gtd) {
        accepted = true;
        break;
      }
      double next = 0.5 * alpha;
      if (std::isfinite(fn)) {
        const double denom = fn - fx - alpha * gtd;
        if (denom > 0.0) next = -0.5 * alpha * alpha * gtd / denom;
      }
      alpha = std::clamp(next, 0.1 * alpha, 0.5 * alpha);
    }
    if (!accepted) break;

    const double sts = (xn - x).squaredNorm();
    const double sty = (xn - x).dot(gn - g);
    lambda = sty > 0.0 ? std::clamp(sts / sty, kStepMin, kStepMax) : kStepMax;
    x.swap(xn);
    g.swap(gn);
    fx = fn;
    ++r.iterations;
    history.push_back(fx);
    if (static_cast<int>(history.size()) > std::max(window, 1)) history.pop_front();
    r.reference_values.push_back(ref);
    pg = projected_gradient_norm(x, g, lower, upper);
  }
  r.x = x;
  r.value = fx;
  r.projected_gradient = pg;
  r.converged = pg <= tolerance;
  return r;
}

namespace {

struct Residual {
  double equality = 0.0;
  double inequality = 0.0;
};

Residual raw_residual(const Eigen::VectorXd& c, const Eigen::VectorXd& g) {
  Residual r;
  if (c.size() > 0) r.equality = c.lpNorm<Eigen::Infinity>();
  if (g.size() > 0) r.inequality = std::max(0.0, g.maxCoeff());
  return r;
}

struct AlRun {
  Eigen::VectorXd u;
  LagrangianState state;
  int outer = 0;
  int inner = 0;
  bool finite = true;
};

// One augmented-Lagrangian run on the box [lo, hi]. With ramp_aid the aid
// weight grows by 3x per outer iteration (schedule phase).
AlRun run_al(const TranscribedNLP& nlp, detail::Evaluator& ev, Eigen::VectorXd u,
             LagrangianState state, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
             const Eigen::VectorXd& aid_scale, int outer_max, int inner_max, bool ramp_aid,
             const SolveOptions& opts) {
  AlRun run;
  const double omega_floor = 0.5 * opts.inner_tolerance;
  double omega = std::max(1e-2, omega_floor);
  double previous = std::numeric_limits<double>::infinity();
  Eigen::VectorXd c(nlp.equality_count());
  Eigen::VectorXd g(nlp.inequality_count());

  for (int k = 0; k < outer_max; ++k) {
    const ValueGradient f = [&](std::span<const double> x, std::span<double> grad) {
      return detail::lagrangian_value(nlp, ev, state, aid_scale, x, grad);
    };
    SpgResult inner = spg_minimize(f, u, lo, hi, inner_max, omega);
    run.inner += inner.iterations;
    ++run.outer;
    u = inner.x;
    if (!std::isfinite(inner.value) || !ev.forward(view(u))) {
      run.finite = false;
      break;
    }
    ev.equality(c);
    ev.inequality(g);
    const double rho = state.penalty;
    const Eigen::VectorXd cs = c.cwiseQuotient(nlp.equality_scale());
    const Eigen::VectorXd gs = g.cwiseQuotient(nlp.inequality_scale());
    double violation = cs.size() > 0 ? cs.lpNorm<Eigen::Infinity>() : 0.0;
    if (gs.size() > 0) {
      violation = std::max(violation, gs.cwiseMax(-state.ineq_multipliers / rho).lpNorm<Eigen::Infinity>());
    }
    state.eq_multipliers += rho * cs;
    state.ineq_multipliers = (state.ineq_multipliers + rho * gs).cwiseMax(0.0);
    // Growing the penalty while the subproblem is still unsolved only
    // worsens its conditioning.
    if (inner.converged && violation > 0.25 * previous) {
      state.penalty = std::min(state.penalty * opts.penalty_growth, opts.max_penalty);
    }
    previous = violation;
    if (ramp_aid) state.aid_weight *= 3.0;

    const Residual raw = raw_residual(c, g);
    // The final polish closes the last decade of infeasibility.
    const double exit_tol = 10.0 * opts.feasibility_tolerance;
    if (omega <= omega_floor && inner.converged && raw.equality <= exit_tol &&
        raw.inequality <= exit_tol) {
      break;
    }
    omega = std::max(0.1 * omega, omega_floor);
  }
  run.u = std::move(u);
  run.state = std::move(state);
  return run;
}

// Minimal-norm Gauss-Newton correction of the violated equality and
// inequality rows over the coordinates strictly inside their bounds.
void polish(const TranscribedNLP& nlp, detail::Evaluator& ev, Eigen::VectorXd& u,
            const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, double feas_tol) {
  constexpr double kActive = 1e-7;
  constexpr double kInterior = 1e-12;
  Eigen::VectorXd c(nlp.equality_count());
  Eigen::VectorXd g(nlp.inequality_count());
  for (int iter = 0; iter < 6; ++iter) {
    if (!ev.forward(view(u))) return;
    ev.equality(c);
    ev.inequality(g);
    const Residual before = raw_residual(c, g);
    if (before.equality <= 0.01 * feas_tol && before.inequality <= 0.01 * feas_tol) return;

    std::vector<int> free;
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      if (u[k] - lo[k] > kInterior && hi[k] - u[k] > kInterior) free.push_back(static_cast<int>(k));
    }
    std::vector<int> eq_rows;
    for (int r = 0; r < nlp.equality_count(); ++r) {
      // The aux rows are identically zero once the schedule is fixed.
      if (nlp.aux_row() >= 0 && (r == nlp.aux_row() || r == nlp.aux_row() + 1) && c[r] == 0.0) continue;
      eq_rows.push_back(r);
    }
    std::vector<int> in_rows;
    for (int r = 0; r < nlp.inequality_count(); ++r) {
      if (g[r] > -kActive) in_rows.push_back(r);
    }
    const Eigen::Index m = static_cast<Eigen::Index>(eq_rows.size() + in_rows.size());
    if (m == 0 || free.empty()) return;
    Eigen::MatrixXd jac(m, static_cast<Eigen::Index>(free.size()));
    Eigen::VectorXd rhs(m);
    Eigen::VectorXd grad(u.size());
    Eigen::VectorXd we = Eigen::VectorXd::Zero(nlp.equality_count());
    Eigen::VectorXd wi = Eigen::VectorXd::Zero(nlp.inequality_count());
    Eigen::Index row = 0;
    for (int r : eq_rows) {
      we[r] = 1.0;
      ev.backward(0.0, we, wi, view(grad));
      we[r] = 0.0;
      for (std::size_t k = 0; k < free.size(); ++k) jac(row, static_cast<Eigen::Index>(k)) = grad[free[k]];
      rhs[row++] = -c[r];
    }
    for (int r : in_rows) {
      wi[r] = 1.0;
      ev.backward(0.0, we, wi, view(grad));
      wi[r] = 0.0;
      for (std::size_t k = 0; k < free.size(); ++k) jac(row, static_cast<Eigen::Index>(k)) = grad[free[k]];
      rhs[row++] = -std::max(g[r], 0.0);
    }
    const Eigen::VectorXd delta = jac.completeOrthogonalDecomposition().solve(rhs);
    Eigen::VectorXd trial = u;
    for (std::size_t k = 0; k < free.size(); ++k) trial[free[k]] += delta[static_cast<Eigen::Index>(k)];
    trial = project(trial, lo, hi);
    if (!ev.forward(view(trial))) return;
    ev.equality(c);
    ev.inequality(g);
    const Residual after = raw_residual(c, g);
    if (std::max(after.equality, after.inequality) >= std::max(before.equality, before.inequality)) return;
    u = std::move(trial);
  }
}

std::vector<int> schedule_of(const TranscribedNLP& nlp, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& scale) {
  const auto& layout = nlp.layout();
  const int p = nlp.plants();
  const int d = layout.total_dim();
  std::vector<int> sigma(nlp.horizon(), 0);
  for (int t = 0; t < nlp.horizon(); ++t) {
    const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(t) * d;
    std::vector<double> mag(p);
    for (int i = 0; i < p; ++i) {
      const Eigen::Index off = at + layout.offset(i);
      mag[i] = u.segment(off, layout.dim(i)).cwiseQuotient(scale.segment(off, layout.dim(i))).lpNorm<Eigen::Infinity>();
    }
    // Ties (including all-zero steps) rotate through the plants.
    int best = t % p;
    for (int k = 1; k < p; ++k) {
      const int i = (t + k) % p;
      if (mag[i] > mag[best]) best = i;
    }
    sigma[t] = best;
  }
  return sigma;
}

double stationarity_of(const TranscribedNLP& nlp, const Eigen::VectorXd& u, const LagrangianState& st,
                       const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const Eigen::VectorXd grad =
      weighted_gradient(nlp, u, 1.0, st.eq_multipliers.cwiseQuotient(nlp.equality_scale()),
                        st.ineq_multipliers.cwiseQuotient(nlp.inequality_scale()));
  return projected_gradient_norm(u, grad, lo, hi);
}

struct StartOutcome {
  Eigen::VectorXd u;
  SeedReport report;
  bool finite = false;
};

StartOutcome run_start(const TranscribedNLP& nlp, const SolveOptions& opts, std::uint64_t seed) {
  StartOutcome out;
  out.report.seed = seed;
  detail::Evaluator ev(nlp);
  const Eigen::VectorXd& lo = nlp.lower();
  const Eigen::VectorXd& hi = nlp.upper();
  const Eigen::VectorXd scale = detail::aid_scale(nlp);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd u(nlp.decision_dim());
  for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = 0.5 * (lo[k] + unit(rng) * (hi[k] - lo[k]));
  if (!ev.forward(view(u))) u.setZero();

  Eigen::VectorXd lo2 = lo;
  Eigen::VectorXd hi2 = hi;
  if (nlp.plants() > 1) {
    LagrangianState st = LagrangianState::zero(nlp, opts.initial_penalty);
    st.aid_weight = opts.schedule_aid_weight;
    const AlRun relaxed = run_al(nlp, ev, u, std::move(st), lo, hi, scale, opts.schedule_outer_iterations,
                                 std::max(1, opts.inner_iterations / 4), true, opts);
    out.report.outer_iterations += relaxed.outer;
    out.report.inner_iterations += relaxed.inner;
    if (relaxed.finite) u = relaxed.u;
    const std::vector<int> sigma = schedule_of(nlp, u, scale);
    const auto& layout = nlp.layout();
    const int d = layout.total_dim();
    for (int t = 0; t < nlp.horizon(); ++t) {
      for (int i = 0; i < nlp.plants(); ++i) {
        if (i == sigma[t]) continue;
        const Eigen::Index off = static_cast<Eigen::Index>(t) * d + layout.offset(i);
        lo2.segment(off, layout.dim(i)).setZero();
        hi2.segment(off, layout.dim(i)).setZero();
      }
    }
    u = project(u, lo2, hi2);
    if (!ev.forward(view(u))) u.setZero();
  }

  AlRun run = run_al(nlp, ev, u, LagrangianState::zero(nlp, opts.initial_penalty), lo2, hi2, scale,
                     opts.outer_iterations, opts.inner_iterations, false, opts);
  out.report.outer_iterations += run.outer;
  out.report.inner_iterations += run.inner;
  if (!run.finite) {
    out.report.note = "non-finite augmented Lagrangian";
    return out;
  }
  polish(nlp, ev, run.u, lo2, hi2, opts.feasibility_tolerance);
  if (!ev.forward(view(run.u))) {
    out.report.note = "polish left the chart";
    return out;
  }
  out.finite = true;
  out.u = run.u;
  const double stat = stationarity_of(nlp, run.u, run.state, lo2, hi2);
  const SolveResult a = assess(nlp, run.u, stat);
  out.report.objective = a.objective;
  out.report.equality_residual = a.equality_residual;
  out.report.inequality_violation = a.inequality_violation;
  out.report.multiplexing_residual = a.multiplexing_residual;
  out.report.stationarity = stat;
  const bool ok = a.equality_residual <= opts.feasibility_tolerance &&
                  a.inequality_violation <= opts.feasibility_tolerance && stat <= opts.inner_tolerance;
  out.report.status = ok ? Status::Converged : Status::NotConverged;
  return out;
}

bool better(const StartOutcome& a, const StartOutcome& b) {
  if (a.finite != b.finite) return a.finite;
  const bool ca = a.report.status == Status::Converged;
  const bool cb = b.report.status == Status::Converged;
  if (ca != cb) return ca;
  if (!ca) {
    const double va = std::max(a.report.equality_residual, a.report.inequality_violation);
    const double vb = std::max(b.report.equality_residual, b.report.inequality_violation);
    if (va != vb) return va < vb;
  }
  if (a.report.objective != b.report.objective) return a.report.objective < b.report.objective;
  return a.report.seed < b.report.seed;
}

}  // namespace

SolveResult assess(const TranscribedNLP& nlp, const Eigen::VectorXd& u, double stationarity) {
  const auto res = nlp.evaluate(view(u));
  SolveResult r;
  r.controls = nlp.unflatten(view(u));
  r.trajectory = nlp.rollout(view(u));
  r.objective = res.objective;
  r.equality_residual = res.equality.size() > 0 ? res.equality.lpNorm<Eigen::Infinity>() : 0.0;
  r.inequality_violation = res.inequality.size() > 0 ? std::max(0.0, res.inequality.maxCoeff()) : 0.0;
  r.stationarity = stationarity;
  r.schedule.assign(nlp.horizon(), -1);
  for (int t = 0; t < nlp.horizon(); ++t) {
    r.multiplexing_residual = std::max(r.multiplexing_residual, multiplex::z(r.controls[t]).norm());
    double best = multiplex::kZeroTol;
    for (int i = 0; i < nlp.plants(); ++i) {
      const double n = r.controls[t].blocks[i].norm();
      if (n > best) {
        best = n;
        r.schedule[t] = i;
      }
    }
  }
  return r;
}

SolveResult solve(const TranscribedNLP& nlp, const SolveOptions& opts) {
  if (!(opts.inner_tolerance > 0.0) || !(opts.feasibility_tolerance > 0.0) || !(opts.fd_step > 0.0) ||
      opts.seeds < 1 || opts.outer_iterations < 1 || opts.inner_iterations < 1 ||
      !(opts.penalty_growth > 1.0) || !(opts.initial_penalty > 0.0)) {
    throw InvalidArgument("solve: invalid solver options");
  }
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(nlp.decision_dim());
  try {
    SolveResult r0 = assess(nlp, zero, 0.0);
    if (r0.objective == 0.0 && r0.equality_residual <= opts.feasibility_tolerance &&
        r0.inequality_violation <= opts.feasibility_tolerance) {
      r0.status = Status::Converged;
      r0.seed = opts.seed;
      SeedReport rep;
      rep.seed = opts.seed;
      rep.status = Status::Converged;
      rep.equality_residual = r0.equality_residual;
      rep.inequality_violation = r0.inequality_violation;
      rep.note = "rest solution is feasible";
      r0.seeds.push_back(rep);
      return r0;
    }
  } catch (const ChartViolation&) {
  }

  const int starts = opts.seeds;
  std::vector<StartOutcome> outcomes(starts);
  unsigned workers = opts.threads > 0 ? static_cast<unsigned>(opts.threads) : std::thread::hardware_concurrency();
  workers = std::clamp(workers, 1u, static_cast<unsigned>(starts));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int k = next++; k < starts; k = next++) {
      outcomes[k] = run_start(nlp, opts, opts.seed + static_cast<std::uint64_t>(k));
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  int best = 0;
  for (int k = 1; k < starts; ++k) {
    if (better(outcomes[k], outcomes[best])) best = k;
  }
  if (!outcomes[best].finite) throw NumericalBreakdown("solve: every start produced non-finite values");
  SolveResult r = assess(nlp, outcomes[best].u, outcomes[best].report.stationarity);
  r.status = outcomes[best].report.status;
  r.seed = outcomes[best].report.seed;
  for (const auto& o : outcomes) r.seeds.push_back(o.report);
  return r;
}

}  // namespace mux::optimizer
