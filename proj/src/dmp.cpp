#include "dmpopt/dmp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmpopt/text.hpp"

namespace dmpopt {

// ---------------------------------------------------------------------------
// ControlSchedule

ControlSchedule::ControlSchedule(std::size_t nodes, int horizon)
    : nodes_(nodes),
      horizon_(horizon),
      nu_(nodes * static_cast<std::size_t>(std::max(horizon, 0)), 0.0),
      mu_(nu_.size(), 0.0),
      controllable_(nodes, 1),
      nu_lo_(nu_.size(), 0.0),
      nu_hi_(nu_.size(), 1.0),
      mu_lo_(nu_.size(), 0.0),
      mu_hi_(nu_.size(), 1.0) {
  if (horizon < 0) throw ValidationError("negative horizon");
}

void ControlSchedule::set_nu(NodeId i, int t, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("nu outside [0,1]");
  if (v != 0.0 && !controllable(i)) throw ValidationError("nu set on non-controllable node " + std::to_string(i));
  nu_[index(i, t)] = v;
}

void ControlSchedule::set_mu(NodeId i, int t, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("mu outside [0,1]");
  if (v != 0.0 && !controllable(i)) throw ValidationError("mu set on non-controllable node " + std::to_string(i));
  mu_[index(i, t)] = v;
}

void ControlSchedule::set_controllable(std::span<const NodeId> nodes) {
  std::fill(controllable_.begin(), controllable_.end(), 0);
  for (NodeId i : nodes) {
    if (i < 0 || static_cast<std::size_t>(i) >= nodes_) throw ValidationError("controllable node out of range");
    controllable_[static_cast<std::size_t>(i)] = 1;
  }
  for (int t = 0; t < horizon_; ++t) {
    for (std::size_t i = 0; i < nodes_; ++i) {
      if (!controllable_[i]) {
        nu_[index(static_cast<NodeId>(i), t)] = 0.0;
        mu_[index(static_cast<NodeId>(i), t)] = 0.0;
      }
    }
  }
}

std::vector<NodeId> ControlSchedule::controllable_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_; ++i) {
    if (controllable_[i]) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

const std::vector<double>& ControlSchedule::bound(ControlKind k, int which) const {
  if (k == ControlKind::nu) return which == 0 ? nu_lo_ : nu_hi_;
  return which == 0 ? mu_lo_ : mu_hi_;
}

std::vector<double>& ControlSchedule::bound(ControlKind k, int which) {
  if (k == ControlKind::nu) return which == 0 ? nu_lo_ : nu_hi_;
  return which == 0 ? mu_lo_ : mu_hi_;
}

void ControlSchedule::set_bounds(ControlKind k, NodeId i, int t, double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) throw ValidationError("bounds must satisfy 0 <= lower < upper <= 1");
  bound(k, 0)[index(i, t)] = lo;
  bound(k, 1)[index(i, t)] = hi;
}

void ControlSchedule::set_bounds(ControlKind k, double lo, double hi) {
  for (int t = 0; t < horizon_; ++t) {
    for (std::size_t i = 0; i < nodes_; ++i) set_bounds(k, static_cast<NodeId>(i), t, lo, hi);
  }
}

bool ControlSchedule::all_zero(ControlKind k) const {
  const auto& v = k == ControlKind::nu ? nu_ : mu_;
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

double ControlSchedule::total(ControlKind k, int t) const {
  double s = 0.0;
  for (double x : row(k, t)) s += x;
  return s;
}

void ControlSchedule::validate() const {
  for (int t = 0; t < horizon_; ++t) {
    for (std::size_t i = 0; i < nodes_; ++i) {
      const auto id = static_cast<NodeId>(i);
      for (auto k : {ControlKind::nu, ControlKind::mu}) {
        const double v = value(k, id, t);
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("control outside [0,1]");
        if (!controllable_[i] && v != 0.0) throw ValidationError("nonzero control off the controllable set");
        if (controllable_[i] && !(lower(k, id, t) < upper(k, id, t))) throw ValidationError("empty bound interval");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Trajectory

DmpTrajectory::DmpTrajectory(std::size_t nodes, std::size_t edges, int horizon)
    : nodes_(nodes), edges_(edges), horizon_(-1), capacity_(horizon) {
  const auto slices = static_cast<std::size_t>(horizon + 1);
  theta_.assign(slices * edges, 0.0);
  phi_.assign(slices * edges, 0.0);
  ps_cav_.assign(slices * edges, 0.0);
  pr_cav_.assign(slices * edges, 0.0);
  ps_.assign(slices * nodes, 0.0);
  pi_.assign(slices * nodes, 0.0);
  pr_.assign(slices * nodes, 0.0);
  survival_.assign(slices * nodes, 0.0);
}

TargetSpec TargetSpec::total_spread(std::size_t nodes, int horizon, Sense sense) {
  TargetSpec spec;
  spec.sense = sense;
  for (std::size_t i = 0; i < nodes; ++i) spec.targets.push_back({static_cast<NodeId>(i), horizon});
  return spec;
}

void TargetSpec::validate(std::size_t nodes, int horizon) const {
  if (targets.empty()) throw ValidationError("target set is empty");
  for (const auto& tg : targets) {
    if (tg.node < 0 || static_cast<std::size_t>(tg.node) >= nodes) throw ValidationError("target node out of range");
    if (tg.time < 0 || tg.time > horizon) {
      throw ValidationError("target time " + std::to_string(tg.time) + " beyond horizon " + std::to_string(horizon));
    }
  }
}

DmpTrajectory init_messages(const SpreadingNetwork& net, const InitialCondition& init, int horizon) {
  if (init.size() != net.node_count()) throw ValidationError("initial condition size does not match network");
  if (horizon < 0) throw ValidationError("negative horizon");
  DmpTrajectory tr(net.node_count(), net.edge_count(), horizon);
  tr.ps0_.resize(net.node_count());
  for (std::size_t i = 0; i < net.node_count(); ++i) {
    const auto& p = init[static_cast<NodeId>(i)];
    tr.ps0_[i] = p.s;
    tr.ps_[i] = p.s;
    tr.pi_[i] = p.i;
    tr.pr_[i] = p.r;
    tr.survival_[i] = 1.0;
  }
  for (std::size_t e = 0; e < net.edge_count(); ++e) {
    const auto& p = init[net.src(static_cast<EdgeId>(e))];
    tr.theta_[e] = 1.0;
    tr.phi_[e] = p.i;
    tr.ps_cav_[e] = p.s;
    tr.pr_cav_[e] = p.r;
  }
  tr.horizon_ = 0;
  return tr;
}

namespace {

double checked_unit(double v, const char* what, std::size_t index, int t) {
  if (!std::isfinite(v) || v < -kMessageTolerance || v > 1.0 + kMessageTolerance) {
    throw NumericalError(std::string(what) + " left [0,1] on edge " + std::to_string(index) + " at t=" +
                         std::to_string(t) + " (value " + std::to_string(v) + ")");
  }
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

void step(const SpreadingNetwork& net, const ControlSchedule& controls, DmpTrajectory& tr, int t) {
  if (t != tr.horizon_) throw ValidationError("step must extend the last slice");
  if (t >= tr.capacity_) throw ValidationError("trajectory is full");
  if (controls.node_count() != net.node_count() || controls.horizon() <= t) {
    throw ValidationError("control schedule does not cover the step");
  }
  const std::size_t m = net.edge_count();
  const std::size_t n = net.node_count();
  const int u = t + 1;
  const auto nu = controls.nu_row(t);
  const auto mu = controls.mu_row(t);

  for (std::size_t e = 0; e < m; ++e) {
    const double a = net.alpha(static_cast<EdgeId>(e));
    tr.theta_[tr.eidx(static_cast<EdgeId>(e), u)] =
        checked_unit(tr.theta_[tr.eidx(static_cast<EdgeId>(e), t)] - a * tr.phi_[tr.eidx(static_cast<EdgeId>(e), t)],
                     "theta", e, u);
  }
  for (std::size_t i = 0; i < n; ++i) {
    tr.survival_[tr.nidx(static_cast<NodeId>(i), u)] =
        tr.survival_[tr.nidx(static_cast<NodeId>(i), t)] * (1.0 - nu[i]) * (1.0 - mu[i]);
  }

  std::vector<double> prefix, suffix;
  for (std::size_t k = 0; k < n; ++k) {
    const auto node = static_cast<NodeId>(k);
    const auto in = net.in_edges(node);
    prefix.assign(in.size() + 1, 1.0);
    suffix.assign(in.size() + 1, 1.0);
    for (std::size_t p = 0; p < in.size(); ++p) prefix[p + 1] = prefix[p] * tr.theta_[tr.eidx(in[p], u)];
    for (std::size_t p = in.size(); p > 0; --p) suffix[p - 1] = suffix[p] * tr.theta_[tr.eidx(in[p - 1], u)];

    const double base = tr.ps0_[k] * tr.survival_[tr.nidx(node, u)];
    const double ps_prev = tr.ps_[tr.nidx(node, t)];
    const double ps_next = base * prefix[in.size()];
    tr.ps_[tr.nidx(node, u)] = ps_next;
    const double pr_next = tr.pr_[tr.nidx(node, t)] + mu[k] * ps_prev;
    tr.pr_[tr.nidx(node, u)] = pr_next;
    tr.pi_[tr.nidx(node, u)] = 1.0 - ps_next - pr_next;

    for (EdgeId e : net.out_edges(node)) {
      const auto pos = net.reverse_in_pos(e);
      const double cav = pos == kNoPos ? prefix[in.size()] : prefix[pos] * suffix[pos + 1];
      const auto now = tr.eidx(e, t);
      const auto nxt = tr.eidx(e, u);
      const double s_next = base * cav;
      const double r_next = tr.pr_cav_[now] + mu[k] * tr.ps_cav_[now];
      tr.ps_cav_[nxt] = s_next;
      tr.pr_cav_[nxt] = r_next;
      const double a = net.alpha(e);
      const double phi = (1.0 - a) * tr.phi_[now] + (tr.ps_cav_[now] - s_next) - (r_next - tr.pr_cav_[now]);
      tr.phi_[nxt] = checked_unit(phi, "phi", static_cast<std::size_t>(e), u);
    }
  }
  tr.horizon_ = u;
}

DmpTrajectory run_forward(const SpreadingNetwork& net, const InitialCondition& init, const ControlSchedule& controls,
                          int horizon) {
  if (controls.horizon() < horizon) throw ValidationError("control schedule shorter than horizon");
  auto tr = init_messages(net, init, horizon);
  for (int t = 0; t < horizon; ++t) step(net, controls, tr, t);
  return tr;
}

double objective_value(const DmpTrajectory& traj, const TargetSpec& target) {
  double sum = 0.0;
  for (const auto& tg : target.targets) {
    if (tg.time > traj.horizon() || tg.time < 0) {
      throw ValidationError("target time " + std::to_string(tg.time) + " beyond trajectory horizon");
    }
    sum += traj.pi(tg.node, tg.time);
  }
  return sum;
}

double total_infected(const DmpTrajectory& traj, int t) {
  double s = 0.0;
  for (double x : traj.pi_slice(t)) s += x;
  return s;
}

void write_marginals_csv(std::ostream& out, const SpreadingNetwork& net, const DmpTrajectory& traj) {
  out << "node,t,P_S,P_I,P_R\n";
  for (std::size_t i = 0; i < traj.node_count(); ++i) {
    const auto id = static_cast<NodeId>(i);
    for (int t = 0; t <= traj.horizon(); ++t) {
      out << net.label(id) << ',' << t << ',' << fmt_double(traj.ps(id, t)) << ',' << fmt_double(traj.pi(id, t))
          << ',' << fmt_double(traj.pr(id, t)) << '\n';
    }
  }
}

void write_messages_csv(std::ostream& out, const DmpTrajectory& traj) {
  out << "edge_id,t,theta,phi\n";
  for (std::size_t e = 0; e < traj.edge_count(); ++e) {
    for (int t = 0; t <= traj.horizon(); ++t) {
      out << e << ',' << t << ',' << fmt_double(traj.theta(static_cast<EdgeId>(e), t)) << ','
          << fmt_double(traj.phi(static_cast<EdgeId>(e), t)) << '\n';
    }
  }
}

}  // namespace dmpopt
