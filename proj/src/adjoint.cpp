#include "dmpopt/adjoint.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "dmpopt/rng.hpp"

namespace dmpopt {

BudgetProfile BudgetProfile::constant(int horizon, double nu_budget, double mu_budget) {
  BudgetProfile b;
  b.nu.assign(static_cast<std::size_t>(std::max(horizon, 0)), nu_budget);
  b.mu.assign(static_cast<std::size_t>(std::max(horizon, 0)), mu_budget);
  return b;
}

AdjointTrajectory::AdjointTrajectory(std::size_t nodes, std::size_t edges, int horizon)
    : nodes_(nodes), edges_(edges), horizon_(horizon) {
  const auto slices = static_cast<std::size_t>(horizon + 1);
  ls_.assign(slices * nodes, 0.0);
  lr_.assign(slices * nodes, 0.0);
  les_.assign(slices * edges, 0.0);
  ler_.assign(slices * edges, 0.0);
  lth_.assign(slices * edges, 0.0);
  lph_.assign(slices * edges, 0.0);
  gnu_.assign(static_cast<std::size_t>(horizon) * nodes, 0.0);
  gmu_.assign(gnu_.size(), 0.0);
  lb_nu_.assign(static_cast<std::size_t>(horizon), 0.0);
  lb_mu_.assign(static_cast<std::size_t>(horizon), 0.0);
}

void require_alpha_below_one(const SpreadingNetwork& net) {
  for (EdgeId e = 0; e < static_cast<EdgeId>(net.edge_count()); ++e) {
    if (net.alpha(e) >= 1.0) {
      throw ValidationError("edge " + net.label(net.src(e)) + "->" + net.label(net.dst(e)) +
                            " has alpha = 1; the optimizer needs alpha < 1 (use 1 - 1e-9 instead)");
    }
  }
}

// Grants the sweep write access to the multiplier arrays.
struct SweepAccess {
  static AdjointTrajectory run(const SpreadingNetwork& net, const DmpTrajectory& tr, ControlSchedule& c,
                               const TargetSpec& target, const ControlUpdateHook& hook);
};

AdjointTrajectory SweepAccess::run(const SpreadingNetwork& net, const DmpTrajectory& tr, ControlSchedule& c,
                                   const TargetSpec& target, const ControlUpdateHook& hook) {
  const int T = tr.horizon();
  const std::size_t N = net.node_count();
  const std::size_t M = net.edge_count();
  if (tr.node_count() != N || tr.edge_count() != M) throw ValidationError("trajectory does not match network");
  if (c.node_count() != N || c.horizon() < T) throw ValidationError("control schedule does not match trajectory");
  target.validate(N, T);
  const double s = target.sense == Sense::maximize_infected ? 1.0 : -1.0;

  AdjointTrajectory adj(N, M, T);
  auto ni = [N](std::size_t i, int t) { return static_cast<std::size_t>(t) * N + i; };
  auto mi = [M](std::size_t e, int t) { return static_cast<std::size_t>(t) * M + e; };

  std::vector<double> inject(static_cast<std::size_t>(T + 1) * N, 0.0);
  for (const auto& tg : target.targets) inject[ni(static_cast<std::size_t>(tg.node), tg.time)] += s;

  // Control-free parts of the one-step survival ratios:
  // node_ratio_i(t) = prod_{in(i)} theta(t+1)/theta(t), cav_ratio_e(t) skips rev(e).
  std::vector<double> node_ratio(static_cast<std::size_t>(T) * N, 1.0);
  std::vector<double> cav_ratio(static_cast<std::size_t>(T) * M, 1.0);
  {
    std::vector<double> r, prefix, suffix;
    for (int t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < N; ++k) {
        const auto in = net.in_edges(static_cast<NodeId>(k));
        r.resize(in.size());
        for (std::size_t p = 0; p < in.size(); ++p) {
          const double th = tr.theta(in[p], t);
          if (!(th > 0.0)) {
            throw NumericalError("theta reached 0 on edge " + std::to_string(in[p]) + " at t=" + std::to_string(t));
          }
          r[p] = tr.theta(in[p], t + 1) / th;
        }
        prefix.assign(in.size() + 1, 1.0);
        suffix.assign(in.size() + 1, 1.0);
        for (std::size_t p = 0; p < in.size(); ++p) prefix[p + 1] = prefix[p] * r[p];
        for (std::size_t p = in.size(); p > 0; --p) suffix[p - 1] = suffix[p] * r[p - 1];
        node_ratio[ni(k, t)] = prefix[in.size()];
        for (EdgeId e : net.out_edges(static_cast<NodeId>(k))) {
          const auto pos = net.reverse_in_pos(e);
          cav_ratio[mi(static_cast<std::size_t>(e), t)] = pos == kNoPos ? prefix[in.size()] : prefix[pos] * suffix[pos + 1];
        }
      }
    }
  }
  auto surv = [&](std::size_t i, int t) {
    return (1.0 - c.nu(static_cast<NodeId>(i), t)) * (1.0 - c.mu(static_cast<NodeId>(i), t));
  };

  // q_node(i) = lambda^S_i(t) S_i(t-1) A_i(t-1); q_out(i) = sum over out-edges f of
  // lambda^S_f(t) S_f(t-1) B_f(t-1); q_edge(f) is the single term.
  std::vector<double> qn_next(N, 0.0), qo_next(N, 0.0), qe_next(M, 0.0);
  std::vector<double> qn_cur(N, 0.0), qo_cur(N, 0.0), qe_cur(M, 0.0);

  auto gradients = [&](int t) {
    // needs lambda at t+1
    for (std::size_t i = 0; i < N; ++i) {
      const auto id = static_cast<NodeId>(i);
      double bracket = adj.ls_[ni(i, t + 1)] * tr.ps(id, t) * node_ratio[ni(i, t)];
      double rterm = adj.lr_[ni(i, t + 1)] * tr.ps(id, t);
      for (EdgeId f : net.out_edges(id)) {
        const auto fe = static_cast<std::size_t>(f);
        bracket += adj.les_[mi(fe, t + 1)] * tr.ps_cav(f, t) * cav_ratio[mi(fe, t)];
        rterm += adj.ler_[mi(fe, t + 1)] * tr.ps_cav(f, t);
      }
      adj.gnu_[ni(i, t)] = (1.0 - c.mu(id, t)) * bracket;
      adj.gmu_[ni(i, t)] = (1.0 - c.nu(id, t)) * bracket - rterm;
    }
    if (hook) {
      const std::span<const double> gnu(adj.gnu_.data() + ni(0, t), N);
      const std::span<const double> gmu(adj.gmu_.data() + ni(0, t), N);
      const double lb = hook(t, gnu, gmu, c);
      adj.lb_nu_[static_cast<std::size_t>(t)] = lb;
      adj.lb_mu_[static_cast<std::size_t>(t)] = lb;
    }
  };
  // q terms at slice t (t >= 1), using controls at t-1 as they are now
  auto fill_q = [&](int t, std::vector<double>& qn, std::vector<double>& qo, std::vector<double>& qe) {
    const int u = t - 1;
    for (std::size_t i = 0; i < N; ++i) {
      const auto id = static_cast<NodeId>(i);
      qn[i] = adj.ls_[ni(i, t)] * tr.ps(id, u) * surv(i, u) * node_ratio[ni(i, u)];
      double acc = 0.0;
      for (EdgeId f : net.out_edges(id)) {
        const auto fe = static_cast<std::size_t>(f);
        const double v = adj.les_[mi(fe, t)] * tr.ps_cav(f, u) * surv(i, u) * cav_ratio[mi(fe, u)];
        qe[fe] = v;
        acc += v;
      }
      qo[i] = acc;
    }
  };
  auto theta_term = [&](std::size_t e, const std::vector<double>& qn, const std::vector<double>& qo,
                        const std::vector<double>& qe) {
    const auto i = static_cast<std::size_t>(net.dst(static_cast<EdgeId>(e)));
    const EdgeId rev = net.reverse(static_cast<EdgeId>(e));
    return qn[i] + qo[i] - (rev == kNoEdge ? 0.0 : qe[static_cast<std::size_t>(rev)]);
  };

  // t = T
  for (std::size_t i = 0; i < N; ++i) {
    adj.ls_[ni(i, T)] = inject[ni(i, T)];
    adj.lr_[ni(i, T)] = inject[ni(i, T)];
  }
  if (T >= 1) {
    gradients(T - 1);
    fill_q(T, qn_cur, qo_cur, qe_cur);
    for (std::size_t e = 0; e < M; ++e) {
      adj.lth_[mi(e, T)] = theta_term(e, qn_cur, qo_cur, qe_cur) / tr.theta(static_cast<EdgeId>(e), T);
    }
  }

  for (int t = T - 1; t >= 0; --t) {
    qn_next.swap(qn_cur);
    qo_next.swap(qo_cur);
    qe_next.swap(qe_cur);
    for (std::size_t e = 0; e < M; ++e) {
      const auto id = static_cast<EdgeId>(e);
      const double a = net.alpha(id);
      const auto k = static_cast<std::size_t>(net.src(id));
      const double ph1 = adj.lph_[mi(e, t + 1)];
      const double ph = (1.0 - a) * ph1 - a * adj.lth_[mi(e, t + 1)];
      adj.lph_[mi(e, t)] = ph;
      adj.ler_[mi(e, t)] = adj.ler_[mi(e, t + 1)] + ph1 - ph;
      adj.les_[mi(e, t)] = -ph + adj.les_[mi(e, t + 1)] * surv(k, t) * cav_ratio[mi(e, t)] +
                           adj.ler_[mi(e, t + 1)] * c.mu(static_cast<NodeId>(k), t) + ph1;
    }
    for (std::size_t i = 0; i < N; ++i) {
      const auto id = static_cast<NodeId>(i);
      adj.lr_[ni(i, t)] = inject[ni(i, t)] + adj.lr_[ni(i, t + 1)];
      adj.ls_[ni(i, t)] = inject[ni(i, t)] + adj.ls_[ni(i, t + 1)] * surv(i, t) * node_ratio[ni(i, t)] +
                          adj.lr_[ni(i, t + 1)] * c.mu(id, t);
    }
    if (t >= 1) {
      gradients(t - 1);
      fill_q(t, qn_cur, qo_cur, qe_cur);
    }
    for (std::size_t e = 0; e < M; ++e) {
      const double later = theta_term(e, qn_next, qo_next, qe_next);
      const double now = t >= 1 ? theta_term(e, qn_cur, qo_cur, qe_cur) : 0.0;
      adj.lth_[mi(e, t)] = adj.lth_[mi(e, t + 1)] + (now - later) / tr.theta(static_cast<EdgeId>(e), t);
    }
  }

  for (double v : adj.ls_) {
    if (!std::isfinite(v)) throw NumericalError("non-finite multiplier in backward sweep");
  }
  return adj;
}

AdjointTrajectory backward_sweep(const SpreadingNetwork& net, const DmpTrajectory& traj, ControlSchedule& controls,
                                 const TargetSpec& target, const ControlUpdateHook& hook) {
  return SweepAccess::run(net, traj, controls, target, hook);
}

AdjointTrajectory backward_sweep_targeting(const SpreadingNetwork& net, const DmpTrajectory& traj,
                                           const ControlSchedule& controls, const TargetSpec& target) {
  require_alpha_below_one(net);
  if (!controls.all_zero(ControlKind::mu)) throw ValidationError("targeting sweep requires mu = 0 everywhere");
  ControlSchedule copy = controls;
  return SweepAccess::run(net, traj, copy, target, {});
}

AdjointTrajectory backward_sweep_vaccination(const SpreadingNetwork& net, const DmpTrajectory& traj,
                                             const ControlSchedule& controls) {
  require_alpha_below_one(net);
  if (!controls.all_zero(ControlKind::nu)) throw ValidationError("vaccination sweep requires nu = 0 everywhere");
  ControlSchedule copy = controls;
  return SweepAccess::run(net, traj, copy,
                          TargetSpec::total_spread(net.node_count(), traj.horizon(), Sense::minimize_infected), {});
}

// ---------------------------------------------------------------------------
// Budget multiplier

double barrier_root(double c, double lo, double hi, double eps) {
  const double w = hi - lo;
  // c x^2 - (c w - 2 eps) x - eps w = 0, root in (0, w)
  const double b = c * w - 2.0 * eps;
  const double d = std::hypot(c * w, 2.0 * eps);
  const double x = b > 0.0 ? (b + d) / (2.0 * c) : 2.0 * eps * w / (d - b);
  if (!(x >= 0.0 && x <= w)) throw NumericalError("barrier root outside its interval");
  return std::clamp(lo + x, std::nextafter(lo, hi), std::nextafter(hi, lo));
}

namespace {

constexpr double kBudgetTol = 1e-10;
constexpr int kMaxExpansions = 200;
constexpr int kMaxBisections = 200;

}  // namespace

BudgetSolution solve_budget_multiplier(std::span<const double> psi, double budget, std::span<const double> lower,
                                       std::span<const double> upper, double eps) {
  const std::size_t n = psi.size();
  if (lower.size() != n || upper.size() != n) throw ValidationError("bounds do not match the coordinates");
  if (!(eps > 0.0)) throw ValidationError("barrier weight must be positive");
  if (!(budget >= 0.0) || !std::isfinite(budget)) throw ValidationError("budget must be a nonnegative number");
  double sum_lo = 0.0, sum_hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lower[i] < upper[i])) throw ValidationError("empty bound interval");
    sum_lo += lower[i];
    sum_hi += upper[i];
  }
  BudgetSolution sol;
  if (n == 0) {
    if (budget > kBudgetTol) throw ValidationError("positive budget but no controllable nodes");
    return sol;
  }
  if (budget < sum_lo - kBudgetTol) {
    throw ValidationError("infeasible budget: " + std::to_string(budget) + " is below the sum of lower bounds " +
                          std::to_string(sum_lo));
  }
  if (budget <= sum_lo) {
    sol.values.assign(lower.begin(), lower.end());
    sol.lambda = -std::numeric_limits<double>::infinity();
    sol.residual = sum_lo - budget;
    sol.saturated = true;
    return sol;
  }
  if (budget >= sum_hi) {
    // budget covers every upper bound
    sol.values.assign(upper.begin(), upper.end());
    sol.lambda = std::numeric_limits<double>::infinity();
    sol.residual = sum_hi - budget;
    sol.saturated = true;
    return sol;
  }

  auto total = [&](double lambda) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += barrier_root(lambda + psi[i], lower[i], upper[i], eps);
    return acc - budget;
  };
  const auto [pmin, pmax] = std::minmax_element(psi.begin(), psi.end());
  double lo = -*pmax - 1.0, hi = -*pmin + 1.0;
  double flo = total(lo), fhi = total(hi);
  double step = 1.0;
  int expansions = 0;
  while (flo > 0.0) {
    if (++expansions > kMaxExpansions) throw ValidationError("infeasible budget: no sign change in the multiplier bracket");
    lo -= step;
    step *= 2.0;
    flo = total(lo);
  }
  step = 1.0;
  while (fhi < 0.0) {
    if (++expansions > kMaxExpansions) throw ValidationError("infeasible budget: no sign change in the multiplier bracket");
    hi += step;
    step *= 2.0;
    fhi = total(hi);
  }
  double best = std::abs(flo) < std::abs(fhi) ? lo : hi;
  double fbest = std::min(std::abs(flo), std::abs(fhi));
  for (int it = 0; it < kMaxBisections && fbest > kBudgetTol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = total(mid);
    if (std::abs(fm) < fbest) {
      fbest = std::abs(fm);
      best = mid;
    }
    if (fm < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  sol.lambda = best;
  sol.values.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sol.values[i] = barrier_root(best + psi[i], lower[i], upper[i], eps);
    sum += sol.values[i];
  }
  double res = sum - budget;
  if (std::abs(res) > kBudgetTol) {
    // lambda is at float resolution; spread the leftover along dx/dc
    std::vector<double> slope(n);
    double ssum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = sol.values[i] - lower[i], b = upper[i] - sol.values[i];
      slope[i] = 1.0 / (eps / (a * a) + eps / (b * b));
      ssum += slope[i];
    }
    sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sol.values[i] = std::clamp(sol.values[i] - res * slope[i] / ssum, std::nextafter(lower[i], upper[i]),
                                 std::nextafter(upper[i], lower[i]));
      sum += sol.values[i];
    }
    res = sum - budget;
  }
  sol.residual = res;
  return sol;
}

// ---------------------------------------------------------------------------
// Problem

void ProblemSpec::validate() const {
  const std::size_t n = network.node_count();
  if (n == 0) throw ValidationError("empty network");
  if (init.size() != n) throw ValidationError("initial condition size does not match network");
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  target.validate(n, horizon);
  require_alpha_below_one(network);
  const auto& b = kind() == ControlKind::nu ? budget.nu : budget.mu;
  const auto& other = kind() == ControlKind::nu ? budget.mu : budget.nu;
  const std::size_t need = mode == Mode::seeding ? 1 : static_cast<std::size_t>(horizon);
  if (b.size() < need) throw ValidationError("budget profile shorter than the controlled steps");
  for (double x : b) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("budget entries must be nonnegative");
  }
  for (double x : other) {
    if (x != 0.0) throw ValidationError("mixed nu and mu control is not supported; budget the other mechanism at 0");
  }
  if (!lower.empty() && lower.size() != n) throw ValidationError("lower bounds must list every node");
  if (!upper.empty() && upper.size() != n) throw ValidationError("upper bounds must list every node");
  for (NodeId i : controllable) {
    if (i < 0 || static_cast<std::size_t>(i) >= n) throw ValidationError("controllable node out of range");
  }
  double sum_lo = 0.0;
  const std::size_t wsize = controllable.empty() ? n : controllable.size();
  for (std::size_t k = 0; k < wsize; ++k) {
    const auto i = controllable.empty() ? k : static_cast<std::size_t>(controllable[k]);
    const double lo = lower.empty() ? 0.0 : lower[i];
    const double hi = upper.empty() ? 1.0 : upper[i];
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) throw ValidationError("bounds must satisfy 0 <= lower < upper <= 1");
    sum_lo += lo;
  }
  for (int t = 0; t < horizon; ++t) {
    if (!free_step(t)) continue;
    if (b[static_cast<std::size_t>(t)] < sum_lo - kBudgetTol) {
      throw ValidationError("infeasible budget at t=" + std::to_string(t) + ": below the sum of lower bounds");
    }
  }
}

ControlSchedule ProblemSpec::blank_schedule() const {
  ControlSchedule c(network.node_count(), horizon);
  if (!controllable.empty()) c.set_controllable(controllable);
  if (!lower.empty() || !upper.empty()) {
    for (int t = 0; t < horizon; ++t) {
      for (std::size_t i = 0; i < network.node_count(); ++i) {
        c.set_bounds(kind(), static_cast<NodeId>(i), t, lower.empty() ? 0.0 : lower[i], upper.empty() ? 1.0 : upper[i]);
      }
    }
  }
  return c;
}

namespace {

double effective_budget(const ProblemSpec& p, const ControlSchedule& c, const std::vector<NodeId>& w, int t) {
  const auto& b = p.kind() == ControlKind::nu ? p.budget.nu : p.budget.mu;
  double lo = 0.0, hi = 0.0;
  for (NodeId i : w) {
    lo += c.lower(p.kind(), i, t);
    hi += c.upper(p.kind(), i, t);
  }
  return std::clamp(b[static_cast<std::size_t>(t)], lo, hi);
}

}  // namespace

std::vector<double> budget_residuals(const ProblemSpec& problem, const ControlSchedule& controls) {
  const auto w = controls.controllable_nodes();
  std::vector<double> res(static_cast<std::size_t>(problem.horizon), 0.0);
  for (int t = 0; t < problem.horizon; ++t) {
    if (!problem.free_step(t)) continue;
    double sum = 0.0;
    for (NodeId i : w) sum += controls.value(problem.kind(), i, t);
    res[static_cast<std::size_t>(t)] = sum - effective_budget(problem, controls, w, t);
  }
  return res;
}

ControlSchedule uniform_schedule(const ProblemSpec& problem) {
  auto c = problem.blank_schedule();
  const auto w = c.controllable_nodes();
  if (w.empty()) return c;
  for (int t = 0; t < problem.horizon; ++t) {
    if (!problem.free_step(t)) continue;
    const double share = effective_budget(problem, c, w, t) / static_cast<double>(w.size());
    for (NodeId i : w) {
      c.set(problem.kind(), i, t, std::clamp(share, c.lower(problem.kind(), i, t), c.upper(problem.kind(), i, t)));
    }
  }
  return c;
}

double score(const ProblemSpec& problem, double objective) {
  return problem.target.sense == Sense::maximize_infected ? objective : -objective;
}

namespace {

ControlUpdateHook make_hook(const ProblemSpec& problem, const std::vector<NodeId>& w, double eps) {
  const auto& budget = problem.kind() == ControlKind::nu ? problem.budget.nu : problem.budget.mu;
  return [&problem, &w, &budget, eps](int t, std::span<const double> gnu, std::span<const double> gmu,
                                      ControlSchedule& c) -> double {
    if (!problem.free_step(t) || w.empty()) return 0.0;
    const auto kind = problem.kind();
    const auto grad = kind == ControlKind::nu ? gnu : gmu;
    std::vector<double> psi(w.size()), lo(w.size()), hi(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      psi[k] = grad[static_cast<std::size_t>(w[k])];
      lo[k] = c.lower(kind, w[k], t);
      hi[k] = c.upper(kind, w[k], t);
    }
    auto sol = solve_budget_multiplier(psi, budget[static_cast<std::size_t>(t)], lo, hi, eps);
    for (std::size_t k = 0; k < w.size(); ++k) c.set(kind, w[k], t, sol.values[k]);
    return sol.lambda;
  };
}

}  // namespace

OptimizationReport forward_backward_iterate(const ProblemSpec& problem, const OptimizerConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  problem.validate();
  if (config.eps_grid.empty()) throw ValidationError("empty epsilon grid");
  for (double e : config.eps_grid) {
    if (!(e > 0.0)) throw ValidationError("epsilon values must be positive");
  }
  if (config.max_iters < 0) throw ValidationError("max_iters must be >= 0");
  if (config.restarts < 0) throw ValidationError("restarts must be >= 0");

  OptimizationReport rep;
  bool have_best = false;
  double best_score = -std::numeric_limits<double>::infinity();
  const auto& net = problem.network;

  ControlSchedule first;
  if (config.init == InitScheme::given) {
    if (!config.initial) throw ValidationError("given init scheme without an initial schedule");
    first = *config.initial;
    if (first.node_count() != net.node_count() || first.horizon() != problem.horizon) {
      throw ValidationError("initial schedule has the wrong shape");
    }
  } else {
    first = uniform_schedule(problem);
  }
  SeededStream restart_rng(config.restart_seed);

  for (int start = 0; start <= config.restarts; ++start) {
    ControlSchedule initial = first;
    if (start > 0) {
      initial = problem.blank_schedule();
      const auto kind = problem.kind();
      for (int t = 0; t < problem.horizon; ++t) {
        if (!problem.free_step(t)) continue;
        for (NodeId i : initial.controllable_nodes()) {
          const double lo = initial.lower(kind, i, t), hi = initial.upper(kind, i, t);
          initial.set(kind, i, t, lo + (hi - lo) * restart_rng.uniform());
        }
      }
    }
    for (double eps : config.eps_grid) {
      ControlSchedule c = initial;
      const auto w = c.controllable_nodes();
      const auto hook = make_hook(problem, w, eps);
      bool converged = false;
      for (int it = 0;; ++it) {
        DmpTrajectory tr;
        try {
          tr = run_forward(net, problem.init, c, problem.horizon);
        } catch (const NumericalError& err) {
          throw NumericalError("iteration " + std::to_string(it) + " (eps " + std::to_string(eps) + "): " + err.what());
        }
        const double obj = objective_value(tr, problem.target);
        if (!std::isfinite(obj)) throw NumericalError("non-finite objective at iteration " + std::to_string(it));
        const auto res = budget_residuals(problem, c);
        double max_res = 0.0;
        for (double r : res) max_res = std::max(max_res, std::abs(r));
        IterationRecord rec{start, eps, it, obj, max_res, 0.0};
        const double sc = score(problem, obj);
        if (max_res <= 1e-8 && (!have_best || sc > best_score)) {
          have_best = true;
          best_score = sc;
          rep.best = c;
          rep.best_objective = obj;
          rep.best_eps = eps;
          rep.best_start = start;
          rep.best_iteration = it;
        }
        if (converged || it >= config.max_iters) {
          rep.trace.push_back(rec);
          break;
        }
        const ControlSchedule old = c;
        try {
          backward_sweep(net, tr, c, problem.target, hook);
        } catch (const NumericalError& err) {
          throw NumericalError("iteration " + std::to_string(it) + " (eps " + std::to_string(eps) + "): " + err.what());
        }
        ++rep.iterations;
        double change = 0.0;
        for (int t = 0; t < problem.horizon; ++t) {
          for (NodeId i : w) change = std::max(change, std::abs(c.value(problem.kind(), i, t) - old.value(problem.kind(), i, t)));
        }
        rec.change = change;
        rep.trace.push_back(rec);
        converged = change < config.tolerance;
        if (config.time_limit_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > config.time_limit_seconds) {
          throw TimeoutError("optimizer exceeded its time limit of " + std::to_string(config.time_limit_seconds) + " s");
        }
      }
    }
  }
  if (!have_best) throw NumericalError("no iterate satisfied the budget constraint");
  rep.residual = budget_residuals(problem, rep.best);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<double> control_gradient(const ProblemSpec& problem, const ControlSchedule& controls) {
  require_alpha_below_one(problem.network);
  auto tr = run_forward(problem.network, problem.init, controls, problem.horizon);
  ControlSchedule copy = controls;
  auto adj = backward_sweep(problem.network, tr, copy, problem.target);
  const std::size_t n = problem.network.node_count();
  std::vector<double> g(static_cast<std::size_t>(problem.horizon) * n);
  for (int t = 0; t < problem.horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      g[static_cast<std::size_t>(t) * n + i] = adj.grad(problem.kind(), static_cast<NodeId>(i), t);
    }
  }
  return g;
}

std::vector<LandscapePoint> objective_landscape(const ProblemSpec& problem, std::span<const FreeParam> free,
                                                double resolution) {
  if (!(resolution > 0.0)) throw ValidationError("grid resolution must be positive");
  if (free.empty()) throw ValidationError("no free parameters");
  const auto kind = problem.kind();
  const auto base = problem.blank_schedule();
  const auto w = base.controllable_nodes();
  const auto& budget = kind == ControlKind::nu ? problem.budget.nu : problem.budget.mu;
  for (const auto& f : free) {
    if (f.node < 0 || static_cast<std::size_t>(f.node) >= problem.network.node_count() || !base.controllable(f.node)) {
      throw ValidationError("free parameter on a non-controllable node");
    }
    if (f.time < 0 || f.time >= problem.horizon || !problem.free_step(f.time)) {
      throw ValidationError("free parameter at a step without control");
    }
  }

  std::vector<std::vector<double>> axes;
  for (const auto& f : free) {
    const double lo = base.lower(kind, f.node, f.time), hi = base.upper(kind, f.node, f.time);
    std::vector<double> ax;
    const auto steps = static_cast<long>(std::floor((hi - lo) / resolution + 1e-9));
    for (long k = 0; k <= steps; ++k) ax.push_back(lo + static_cast<double>(k) * resolution);
    axes.push_back(std::move(ax));
  }

  std::vector<LandscapePoint> out;
  std::vector<std::size_t> idx(free.size(), 0);
  for (;;) {
    LandscapePoint pt;
    for (std::size_t k = 0; k < free.size(); ++k) pt.free_values.push_back(axes[k][idx[k]]);
    ControlSchedule c = base;
    bool ok = true;
    for (int t = 0; t < problem.horizon && ok; ++t) {
      if (!problem.free_step(t)) continue;
      double used = 0.0;
      std::vector<NodeId> rest;
      for (NodeId i : w) {
        bool is_free = false;
        for (std::size_t k = 0; k < free.size(); ++k) {
          if (free[k].node == i && free[k].time == t) {
            c.set(kind, i, t, pt.free_values[k]);
            used += pt.free_values[k];
            is_free = true;
          }
        }
        if (!is_free) rest.push_back(i);
      }
      const double left = budget[static_cast<std::size_t>(t)] - used;
      if (rest.empty()) {
        ok = std::abs(left) <= 1e-9;
        continue;
      }
      const double share = left / static_cast<double>(rest.size());
      for (NodeId i : rest) {
        if (share < c.lower(kind, i, t) - 1e-12 || share > c.upper(kind, i, t) + 1e-12) {
          ok = false;
          break;
        }
        c.set(kind, i, t, std::clamp(share, c.lower(kind, i, t), c.upper(kind, i, t)));
      }
    }
    pt.valid = ok;
    if (ok) {
      auto tr = run_forward(problem.network, problem.init, c, problem.horizon);
      pt.objective = objective_value(tr, problem.target);
    }
    out.push_back(std::move(pt));

    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] == axes[k].size()) idx[k++] = 0;
    if (k == idx.size()) break;
  }
  return out;
}

}  // namespace dmpopt
