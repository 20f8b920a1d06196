#include "dmpopt/continuous.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmpopt/text.hpp"

namespace dmpopt {

ContinuousControl::ContinuousControl(std::size_t nodes, double horizon, double dt)
    : nodes_(nodes), dt_(dt), horizon_(horizon) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive");
  const double cells = horizon / dt;
  cells_ = static_cast<int>(std::llround(cells));
  if (cells_ < 1 || std::abs(cells - cells_) > 1e-9 * std::max(1.0, cells)) {
    throw ValidationError("dt must divide the horizon");
  }
  nu_.assign(nodes * static_cast<std::size_t>(cells_), 0.0);
  w_.assign(nodes, 1);
  budget.assign(static_cast<std::size_t>(cells_), 0.0);
}

void ContinuousControl::set_nu(NodeId i, int cell, double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("nu rate must be finite and nonnegative");
  if (v != 0.0 && !controllable(i)) throw ValidationError("nu set on non-controllable node " + std::to_string(i));
  nu_[at(i, cell)] = v;
}

double ContinuousControl::total(int cell) const {
  double s = 0.0;
  for (std::size_t i = 0; i < nodes_; ++i) s += nu_[at(static_cast<NodeId>(i), cell)];
  return s;
}

void ContinuousControl::set_controllable(std::span<const NodeId> nodes) {
  std::fill(w_.begin(), w_.end(), 0);
  for (NodeId i : nodes) {
    if (i < 0 || static_cast<std::size_t>(i) >= nodes_) throw ValidationError("controllable node out of range");
    w_[static_cast<std::size_t>(i)] = 1;
  }
  for (int c = 0; c < cells_; ++c) {
    for (std::size_t i = 0; i < nodes_; ++i) {
      if (!w_[i]) nu_[at(static_cast<NodeId>(i), c)] = 0.0;
    }
  }
}

std::vector<NodeId> ContinuousControl::controllable_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_; ++i) {
    if (w_[i]) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

ContinuousControl ContinuousControl::uniform(std::size_t nodes, double horizon, double dt,
                                             std::span<const double> budget, std::span<const NodeId> controllable) {
  ContinuousControl c(nodes, horizon, dt);
  if (budget.size() != static_cast<std::size_t>(c.cells())) throw ValidationError("budget needs one entry per cell");
  if (!controllable.empty()) c.set_controllable(controllable);
  const auto w = c.controllable_nodes();
  if (w.empty()) throw ValidationError("no controllable nodes");
  c.budget.assign(budget.begin(), budget.end());
  for (int k = 0; k < c.cells(); ++k) {
    const double b = budget[static_cast<std::size_t>(k)];
    if (!(b >= 0.0) || !std::isfinite(b)) throw ValidationError("budget entries must be nonnegative");
    for (NodeId i : w) c.set_nu(i, k, b / static_cast<double>(w.size()));
  }
  return c;
}

namespace {

// cav[e] = prod of theta over in_edges(src e) except the reverse of e;
// full[i] = prod over all in_edges(i).
struct Products {
  std::vector<double> cav, full;
  std::vector<double> prefix;

  void compute(const SpreadingNetwork& net, std::span<const double> theta) {
    const std::size_t n = net.node_count();
    cav.resize(net.edge_count());
    full.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto in = net.in_edges(static_cast<NodeId>(i));
      prefix.assign(in.size() + 1, 1.0);
      for (std::size_t k = 0; k < in.size(); ++k) prefix[k + 1] = prefix[k] * theta[static_cast<std::size_t>(in[k])];
      full[i] = prefix[in.size()];
      // suffix on the fly, visiting in-edge positions from the back
      double suffix = 1.0;
      const auto& pre = prefix;
      for (std::size_t k = in.size(); k-- > 0;) {
        // out-edge whose reverse sits at position k gets pre[k] * suffix
        const EdgeId back = net.reverse(in[k]);
        if (back != kNoEdge) cav[static_cast<std::size_t>(back)] = pre[k] * suffix;
        suffix *= theta[static_cast<std::size_t>(in[k])];
      }
      for (EdgeId e : net.out_edges(static_cast<NodeId>(i))) {
        if (net.reverse(e) == kNoEdge) cav[static_cast<std::size_t>(e)] = full[i];
      }
    }
  }
};

struct Survival {
  const ContinuousControl* control;
  SurvivalForm form;

  // S at t0 + tau inside `cell`, given S(t0).
  double advance(double s0, NodeId i, int cell, double t0, double tau) const {
    const double nu = control->nu(i, cell);
    if (form == SurvivalForm::exponential) return s0 * std::exp(-nu * tau);
    if (nu == 0.0) return s0 + tau;
    return s0 + (std::exp(-nu * t0) - std::exp(-nu * (t0 + tau))) / nu;
  }
};

void rhs(const SpreadingNetwork& net, std::span<const double> ps0, std::span<const double> surv,
         std::span<const double> theta, Products& pr, std::vector<double>& out) {
  pr.compute(net, theta);
  out.resize(net.edge_count());
  for (std::size_t e = 0; e < out.size(); ++e) {
    const auto id = static_cast<EdgeId>(e);
    const auto i = static_cast<std::size_t>(net.src(id));
    const double a = net.alpha(id);
    out[e] = a * (ps0[i] * surv[i] * pr.cav[e] - theta[e]);
  }
}

void check_theta(const SpreadingNetwork& net, std::span<double> theta, double t) {
  for (std::size_t e = 0; e < theta.size(); ++e) {
    const double v = theta[e];
    if (!std::isfinite(v) || v < -1e-9 || v > 1.0 + 1e-9) {
      throw NumericalError("theta on edge " + net.label(net.src(static_cast<EdgeId>(e))) + "->" +
                           net.label(net.dst(static_cast<EdgeId>(e))) + " left [0,1] at t=" + fmt_double(t));
    }
    theta[e] = std::clamp(v, 0.0, 1.0);
  }
}

int substeps_for(const ContinuousControl& control, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
  const double r = control.dt() / dt;
  const auto k = static_cast<int>(std::llround(r));
  if (k < 1 || std::abs(r - k) > 1e-9 * std::max(1.0, r)) {
    throw ValidationError("integration dt must divide the control cell width");
  }
  return k;
}

}  // namespace

ContinuousTrajectory integrate_forward(const SpreadingNetwork& net, const InitialCondition& init,
                                       const ContinuousControl& control, double dt, Scheme scheme,
                                       SurvivalForm survival) {
#ifdef DMPOPT_NO_PRINTED_SURVIVAL
  if (survival == SurvivalForm::printed) throw ValidationError("printed survival form compiled out");
#endif
  const std::size_t n = net.node_count(), m = net.edge_count();
  if (init.size() != n || control.node_count() != n) throw ValidationError("size mismatch between network, init and control");
  const int sub = substeps_for(control, dt);
  ContinuousTrajectory tr;
  tr.nodes = n;
  tr.edges = m;
  tr.substeps = sub;
  tr.form = survival;
  tr.steps = control.cells() * sub;
  tr.dt = control.dt() / sub;
  const double h = tr.dt;
  tr.ps0.resize(n);
  tr.pr0.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tr.ps0[i] = init.nodes()[i].s;
    tr.pr0[i] = init.nodes()[i].r;
  }
  const auto slices = static_cast<std::size_t>(tr.steps) + 1;
  tr.theta.assign(slices * m, 1.0);
  tr.ps.assign(slices * n, 0.0);
  tr.survival.assign(slices * n, 0.0);

  const Survival sv{&control, survival};
  std::vector<double> s(n, survival == SurvivalForm::exponential ? 1.0 : 0.0), s_mid(n), s_end(n);
  std::vector<double> th(m, 1.0), tmp(m), k1, k2, k3, k4;
  Products pr;

  auto record = [&](int step) {
    pr.compute(net, th);
    const auto base_e = static_cast<std::size_t>(step) * m, base_n = static_cast<std::size_t>(step) * n;
    std::copy(th.begin(), th.end(), tr.theta.begin() + static_cast<std::ptrdiff_t>(base_e));
    for (std::size_t i = 0; i < n; ++i) {
      tr.survival[base_n + i] = s[i];
      const double p = tr.ps0[i] * s[i] * pr.full[i];
      if (!std::isfinite(p)) throw NumericalError("non-finite P_S at t=" + fmt_double(step * h));
      tr.ps[base_n + i] = p;
    }
  };
  record(0);

  for (int step = 0; step < tr.steps; ++step) {
    const int cell = step / sub;
    const double t0 = step * h;
    for (std::size_t i = 0; i < n; ++i) {
      s_mid[i] = sv.advance(s[i], static_cast<NodeId>(i), cell, t0, 0.5 * h);
      s_end[i] = sv.advance(s[i], static_cast<NodeId>(i), cell, t0, h);
    }
    if (scheme == Scheme::euler) {
      rhs(net, tr.ps0, s, th, pr, k1);
      for (std::size_t e = 0; e < m; ++e) th[e] += h * k1[e];
    } else {
      rhs(net, tr.ps0, s, th, pr, k1);
      for (std::size_t e = 0; e < m; ++e) tmp[e] = th[e] + 0.5 * h * k1[e];
      rhs(net, tr.ps0, s_mid, tmp, pr, k2);
      for (std::size_t e = 0; e < m; ++e) tmp[e] = th[e] + 0.5 * h * k2[e];
      rhs(net, tr.ps0, s_mid, tmp, pr, k3);
      for (std::size_t e = 0; e < m; ++e) tmp[e] = th[e] + h * k3[e];
      rhs(net, tr.ps0, s_end, tmp, pr, k4);
      for (std::size_t e = 0; e < m; ++e) th[e] += h / 6.0 * (k1[e] + 2.0 * k2[e] + 2.0 * k3[e] + k4[e]);
    }
    s.swap(s_end);
    check_theta(net, th, t0 + h);
    record(step + 1);
  }
  return tr;
}

namespace {

std::vector<std::pair<NodeId, int>> grid_targets(const ContinuousTrajectory& tr,
                                                 std::span<const ContinuousTarget> targets) {
  std::vector<std::pair<NodeId, int>> out;
  if (targets.empty()) {
    for (std::size_t i = 0; i < tr.nodes; ++i) out.push_back({static_cast<NodeId>(i), tr.steps});
    return out;
  }
  for (const auto& t : targets) {
    if (t.node < 0 || static_cast<std::size_t>(t.node) >= tr.nodes) throw ValidationError("target node out of range");
    const double r = t.time / tr.dt;
    const auto k = static_cast<int>(std::llround(r));
    if (k < 0 || k > tr.steps || std::abs(r - k) > 1e-9 * std::max(1.0, r)) {
      throw ValidationError("target time " + fmt_double(t.time) + " is not on the integration grid");
    }
    out.push_back({t.node, k});
  }
  return out;
}

}  // namespace

double continuous_objective(const ContinuousTrajectory& traj, std::span<const ContinuousTarget> targets) {
  double j = 0.0;
  for (auto [i, k] : grid_targets(traj, targets)) j += traj.ps_at(i, k);
  return j;
}

ContinuousAdjoint backward_continuous(const SpreadingNetwork& net, const ContinuousTrajectory& tr,
                                      const ContinuousControl& control, std::span<const ContinuousTarget> targets,
                                      Scheme scheme) {
  const std::size_t n = tr.nodes, m = tr.edges;
  if (n != net.node_count() || m != net.edge_count() || control.node_count() != n) {
    throw ValidationError("size mismatch between network, trajectory and control");
  }
  if (control.cells() * tr.substeps != tr.steps) throw ValidationError("control grid does not match the trajectory");
  if (tr.form != SurvivalForm::exponential) throw ValidationError("the adjoint needs the exponential survival form");
  const auto tg = grid_targets(tr, targets);
  std::vector<std::vector<NodeId>> at_step(static_cast<std::size_t>(tr.steps) + 1);
  for (auto [i, k] : tg) at_step[static_cast<std::size_t>(k)].push_back(i);

  ContinuousAdjoint adj;
  adj.nodes = n;
  adj.edges = m;
  adj.steps = tr.steps;
  const auto slices = static_cast<std::size_t>(tr.steps) + 1;
  adj.lambda_theta.assign(slices * m, 0.0);
  adj.lambda_s.assign(slices * n, 0.0);
  adj.value.assign(slices * n, 0.0);
  adj.grad.assign(static_cast<std::size_t>(control.cells()) * n, 0.0);

  const double h = tr.dt;
  // forward state at an arbitrary evaluation point
  struct Point {
    std::vector<double> theta, surv;
    Products pr;
  };
  auto grid_point = [&](int k, Point& p) {
    const auto be = static_cast<std::size_t>(k) * m, bn = static_cast<std::size_t>(k) * n;
    p.theta.assign(tr.theta.begin() + static_cast<std::ptrdiff_t>(be), tr.theta.begin() + static_cast<std::ptrdiff_t>(be + m));
    p.surv.assign(tr.survival.begin() + static_cast<std::ptrdiff_t>(bn), tr.survival.begin() + static_cast<std::ptrdiff_t>(bn + n));
    p.pr.compute(net, p.theta);
  };
  std::vector<double> dth_lo, dth_hi;
  Products scratch;
  auto derivative = [&](const Point& p, std::vector<double>& out) { rhs(net, tr.ps0, p.surv, p.theta, scratch, out); };

  // y = (mu_e = dJ/dtheta_e, Lambda_i, K_i); F = dy/dt
  std::vector<double> y(m + 2 * n, 0.0), f1, f2, f3, f4, ytmp(y.size());
  std::vector<double> hsum(n);
  auto F = [&](const Point& p, std::span<const double> yy, std::vector<double>& out) {
    out.assign(yy.size(), 0.0);
    std::fill(hsum.begin(), hsum.end(), 0.0);
    for (std::size_t e = 0; e < m; ++e) {
      const auto id = static_cast<EdgeId>(e);
      const auto i = static_cast<std::size_t>(net.src(id));
      hsum[i] += yy[e] * net.alpha(id) * tr.ps0[i] * p.surv[i] * p.pr.cav[e];
    }
    for (std::size_t e = 0; e < m; ++e) {
      const auto id = static_cast<EdgeId>(e);
      const auto j = static_cast<std::size_t>(net.dst(id));
      const EdgeId back = net.reverse(id);
      double down = hsum[j];
      if (back != kNoEdge) {
        const auto b = static_cast<std::size_t>(back);
        down -= yy[b] * net.alpha(back) * tr.ps0[j] * p.surv[j] * p.pr.cav[b];
      }
      double term = 0.0;
      if (down != 0.0) {
        if (!(p.theta[e] > 0.0)) {
          throw NumericalError("theta on edge " + net.label(net.src(id)) + "->" + net.label(net.dst(id)) +
                               " reached 0 in the adjoint sweep");
        }
        term = down / p.theta[e];
      }
      out[e] = net.alpha(id) * yy[e] - term;
    }
    for (std::size_t i = 0; i < n; ++i) {
      out[m + i] = -hsum[i];
      out[m + n + i] = -yy[m + i];
    }
  };

  auto apply_targets = [&](int k) {
    const auto bn = static_cast<std::size_t>(k) * n, be = static_cast<std::size_t>(k) * m;
    for (NodeId i : at_step[static_cast<std::size_t>(k)]) {
      const auto iu = static_cast<std::size_t>(i);
      y[m + iu] += tr.ps[bn + iu];
      // dP_S^i/dtheta_e for every in-edge, as an exclusion product
      const auto in = net.in_edges(i);
      double pre = 1.0;
      std::vector<double> suf(in.size() + 1, 1.0);
      for (std::size_t q = in.size(); q-- > 0;) suf[q] = suf[q + 1] * tr.theta[be + static_cast<std::size_t>(in[q])];
      for (std::size_t q = 0; q < in.size(); ++q) {
        y[static_cast<std::size_t>(in[q])] += tr.ps0[iu] * tr.survival[bn + iu] * pre * suf[q + 1];
        pre *= tr.theta[be + static_cast<std::size_t>(in[q])];
      }
    }
  };
  auto store = [&](int k) {
    const auto bn = static_cast<std::size_t>(k) * n, be = static_cast<std::size_t>(k) * m;
    for (std::size_t e = 0; e < m; ++e) adj.lambda_theta[be + e] = -y[e];
    for (std::size_t i = 0; i < n; ++i) {
      const double lam = y[m + i];
      adj.value[bn + i] = lam;
      const double p = tr.ps[bn + i];
      if (p > 0.0) {
        adj.lambda_s[bn + i] = -lam / p;
      } else {
        double cnt = 0.0;
        for (auto [ti, tk] : tg) cnt += (static_cast<std::size_t>(ti) == i && tk >= k) ? 1.0 : 0.0;
        adj.lambda_s[bn + i] = -cnt;
      }
    }
  };

  apply_targets(tr.steps);
  store(tr.steps);
  Point hi, lo, mid;
  grid_point(tr.steps, hi);
  derivative(hi, dth_hi);
  for (int k = tr.steps - 1; k >= 0; --k) {
    const int cell = k / tr.substeps;
    grid_point(k, lo);
    if (scheme == Scheme::euler) {
      F(hi, y, f1);
      for (std::size_t q = 0; q < y.size(); ++q) y[q] -= h * f1[q];
    } else {
      derivative(lo, dth_lo);
      mid.theta.resize(m);
      for (std::size_t e = 0; e < m; ++e) {
        mid.theta[e] = 0.5 * (lo.theta[e] + hi.theta[e]) + h / 8.0 * (dth_lo[e] - dth_hi[e]);
      }
      mid.surv.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        mid.surv[i] = lo.surv[i] * std::exp(-control.nu(static_cast<NodeId>(i), cell) * 0.5 * h);
      }
      mid.pr.compute(net, mid.theta);
      F(hi, y, f1);
      for (std::size_t q = 0; q < y.size(); ++q) ytmp[q] = y[q] - 0.5 * h * f1[q];
      F(mid, ytmp, f2);
      for (std::size_t q = 0; q < y.size(); ++q) ytmp[q] = y[q] - 0.5 * h * f2[q];
      F(mid, ytmp, f3);
      for (std::size_t q = 0; q < y.size(); ++q) ytmp[q] = y[q] - h * f3[q];
      F(lo, ytmp, f4);
      for (std::size_t q = 0; q < y.size(); ++q) y[q] -= h / 6.0 * (f1[q] + 2.0 * f2[q] + 2.0 * f3[q] + f4[q]);
      dth_hi.swap(dth_lo);
    }
    if (k % tr.substeps == 0) {
      // left edge of the cell: K holds the integral of Lambda over it
      for (std::size_t i = 0; i < n; ++i) {
        adj.grad[static_cast<std::size_t>(cell) * n + i] = -y[m + n + i];
        y[m + n + i] = 0.0;
      }
    }
    apply_targets(k);
    store(k);
    std::swap(hi, lo);
  }
  return adj;
}

ContinuousControl update_controls_continuous(const ContinuousAdjoint& adj, const ContinuousControl& control,
                                             std::vector<std::string>* warnings) {
  ContinuousControl next = control;
  const auto w = control.controllable_nodes();
  if (w.empty()) throw ValidationError("no controllable nodes");
  if (adj.grad.size() != static_cast<std::size_t>(control.cells()) * control.node_count()) {
    throw ValidationError("adjoint does not match the control grid");
  }
  std::vector<double> weight(w.size());
  for (int c = 0; c < control.cells(); ++c) {
    double sum = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      weight[k] = std::max(0.0, -adj.grad_at(w[k], c));
      sum += weight[k];
    }
    const double b = control.budget[static_cast<std::size_t>(c)];
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      if (warnings) warnings->push_back("all weights zero in cell " + std::to_string(c) + "; uniform split used");
      for (NodeId i : w) next.set_nu(i, c, b / static_cast<double>(w.size()));
      continue;
    }
    for (std::size_t k = 0; k < w.size(); ++k) next.set_nu(w[k], c, b * (weight[k] / sum));
  }
  return next;
}

ContinuousReport optimize_continuous(const SpreadingNetwork& net, const InitialCondition& init,
                                     const ContinuousControl& start, std::span<const ContinuousTarget> targets,
                                     const ContinuousConfig& config) {
  if (config.max_iters < 0) throw ValidationError("max_iters must be >= 0");
  ContinuousReport rep;
  ContinuousControl c = start;
  bool have = false;
  for (int it = 0;; ++it) {
    const auto tr = integrate_forward(net, init, c, config.dt, config.scheme);
    const double j = continuous_objective(tr, targets);
    rep.objective.push_back(j);
    if (!have || j < rep.best_objective) {
      have = true;
      rep.best = c;
      rep.best_objective = j;
      rep.best_iteration = it;
    }
    rep.best_so_far.push_back(rep.best_objective);
    if (it >= config.max_iters) break;
    const auto adj = backward_continuous(net, tr, c, targets, config.scheme);
    auto next = update_controls_continuous(adj, c, &rep.warnings);
    ++rep.iterations;
    double change = 0.0;
    for (int k = 0; k < c.cells(); ++k) {
      for (std::size_t i = 0; i < c.node_count(); ++i) {
        change = std::max(change, std::abs(next.nu(static_cast<NodeId>(i), k) - c.nu(static_cast<NodeId>(i), k)));
      }
    }
    c = std::move(next);
    if (change < config.tolerance) {
      // one more evaluation of the fixed point
      const auto last = integrate_forward(net, init, c, config.dt, config.scheme);
      const double jl = continuous_objective(last, targets);
      rep.objective.push_back(jl);
      if (jl < rep.best_objective) {
        rep.best = c;
        rep.best_objective = jl;
        rep.best_iteration = it + 1;
      }
      rep.best_so_far.push_back(rep.best_objective);
      break;
    }
  }
  return rep;
}

void write_continuous_csv(std::ostream& out, const SpreadingNetwork& net, const ContinuousTrajectory& traj) {
  out << "node,t,P_S,P_I,P_R\n";
  for (std::size_t i = 0; i < traj.nodes; ++i) {
    const auto id = static_cast<NodeId>(i);
    for (int k = 0; k <= traj.steps; ++k) {
      const double s = traj.ps_at(id, k), r = traj.pr0[i];
      out << net.label(id) << ',' << fmt_double(traj.time(k)) << ',' << fmt_double(s) << ','
          << fmt_double(std::max(0.0, 1.0 - s - r)) << ',' << fmt_double(r) << '\n';
    }
  }
}

}  // namespace dmpopt
