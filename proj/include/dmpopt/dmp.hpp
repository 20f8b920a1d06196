#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "dmpopt/network.hpp"

namespace dmpopt {

enum class ControlKind { nu, mu };

/*
  Per-node, per-step control probabilities nu_i(t) (spontaneous infection) and
  mu_i(t) (vaccination) for t in [0, T), stored time-major. Nodes outside the
  controllable set W are pinned to zero. Bounds are only meaningful for
  controllable entries and are used by the optimizer's barrier.
*/
class ControlSchedule {
 public:
  ControlSchedule() = default;
  ControlSchedule(std::size_t nodes, int horizon);

  std::size_t node_count() const { return nodes_; }
  int horizon() const { return horizon_; }

  double nu(NodeId i, int t) const { return nu_[index(i, t)]; }
  double mu(NodeId i, int t) const { return mu_[index(i, t)]; }
  double value(ControlKind k, NodeId i, int t) const { return k == ControlKind::nu ? nu(i, t) : mu(i, t); }

  void set_nu(NodeId i, int t, double v);
  void set_mu(NodeId i, int t, double v);
  void set(ControlKind k, NodeId i, int t, double v) { k == ControlKind::nu ? set_nu(i, t, v) : set_mu(i, t, v); }

  // Row of all nodes at time t.
  std::span<const double> nu_row(int t) const { return {nu_.data() + index(0, t), nodes_}; }
  std::span<const double> mu_row(int t) const { return {mu_.data() + index(0, t), nodes_}; }
  std::span<const double> row(ControlKind k, int t) const { return k == ControlKind::nu ? nu_row(t) : mu_row(t); }

  bool controllable(NodeId i) const { return controllable_[static_cast<std::size_t>(i)] != 0; }
  // Restricting W zeroes the controls of nodes leaving it.
  void set_controllable(std::span<const NodeId> nodes);
  std::vector<NodeId> controllable_nodes() const;

  double lower(ControlKind k, NodeId i, int t) const { return bound(k, 0)[index(i, t)]; }
  double upper(ControlKind k, NodeId i, int t) const { return bound(k, 1)[index(i, t)]; }
  void set_bounds(ControlKind k, NodeId i, int t, double lo, double hi);
  void set_bounds(ControlKind k, double lo, double hi);

  bool all_zero(ControlKind k) const;
  double total(ControlKind k, int t) const;

  // Validates the invariants (values in [0,1], zero off W, lower < upper).
  void validate() const;

 private:
  std::size_t index(NodeId i, int t) const {
    return static_cast<std::size_t>(t) * nodes_ + static_cast<std::size_t>(i);
  }
  const std::vector<double>& bound(ControlKind k, int which) const;
  std::vector<double>& bound(ControlKind k, int which);

  std::size_t nodes_ = 0;
  int horizon_ = 0;
  std::vector<double> nu_, mu_;
  std::vector<char> controllable_;
  std::vector<double> nu_lo_, nu_hi_, mu_lo_, mu_hi_;
};

/*
  Full forward history, slices t = 0..T.

  Edge quantities (indexed by edge id e = k->i):
    theta   probability k has not passed activation to i by t
    phi     probability k is infected and has not yet passed activation to i
    ps_cav  P_S^{k->i}, node k on the cavity graph without i
    pr_cav  P_R^{k->i}
  Node quantities: ps, pi, pr, and survival = prod_{t'<t} (1-nu)(1-mu).
*/
class DmpTrajectory {
 public:
  DmpTrajectory() = default;
  DmpTrajectory(std::size_t nodes, std::size_t edges, int horizon);

  int horizon() const { return horizon_; }  // last filled slice
  int capacity() const { return capacity_; }
  std::size_t node_count() const { return nodes_; }
  std::size_t edge_count() const { return edges_; }

  double theta(EdgeId e, int t) const { return theta_[eidx(e, t)]; }
  double phi(EdgeId e, int t) const { return phi_[eidx(e, t)]; }
  double ps_cav(EdgeId e, int t) const { return ps_cav_[eidx(e, t)]; }
  double pr_cav(EdgeId e, int t) const { return pr_cav_[eidx(e, t)]; }
  double pi_cav(EdgeId e, int t) const { return 1.0 - ps_cav(e, t) - pr_cav(e, t); }

  double ps(NodeId i, int t) const { return ps_[nidx(i, t)]; }
  double pi(NodeId i, int t) const { return pi_[nidx(i, t)]; }
  double pr(NodeId i, int t) const { return pr_[nidx(i, t)]; }
  double survival(NodeId i, int t) const { return survival_[nidx(i, t)]; }

  std::span<const double> theta_slice(int t) const { return {theta_.data() + eidx(0, t), edges_}; }
  std::span<const double> ps_slice(int t) const { return {ps_.data() + nidx(0, t), nodes_}; }
  std::span<const double> pi_slice(int t) const { return {pi_.data() + nidx(0, t), nodes_}; }
  std::span<const double> pr_slice(int t) const { return {pr_.data() + nidx(0, t), nodes_}; }

 private:
  friend DmpTrajectory init_messages(const SpreadingNetwork&, const InitialCondition&, int);
  friend void step(const SpreadingNetwork&, const ControlSchedule&, DmpTrajectory&, int);

  std::size_t eidx(EdgeId e, int t) const { return static_cast<std::size_t>(t) * edges_ + static_cast<std::size_t>(e); }
  std::size_t nidx(NodeId i, int t) const { return static_cast<std::size_t>(t) * nodes_ + static_cast<std::size_t>(i); }

  std::size_t nodes_ = 0, edges_ = 0;
  int horizon_ = -1;
  int capacity_ = 0;
  std::vector<double> theta_, phi_, ps_cav_, pr_cav_;
  std::vector<double> ps_, pi_, pr_, survival_;
  std::vector<double> ps0_;
};

struct Target {
  NodeId node = 0;
  int time = 0;
};

enum class Sense { maximize_infected, minimize_infected };

struct TargetSpec {
  std::vector<Target> targets;
  Sense sense = Sense::maximize_infected;

  // U = V, t_i = T.
  static TargetSpec total_spread(std::size_t nodes, int horizon, Sense sense = Sense::maximize_infected);
  void validate(std::size_t nodes, int horizon) const;
};

// Round-off tolerance before a message outside [0,1] is treated as a bug.
inline constexpr double kMessageTolerance = 1e-9;

// Slice t = 0 for a trajectory with room for `horizon` steps.
DmpTrajectory init_messages(const SpreadingNetwork& net, const InitialCondition& init, int horizon);

// Appends slice t+1. Requires slices 0..t present.
void step(const SpreadingNetwork& net, const ControlSchedule& controls, DmpTrajectory& traj, int t);

DmpTrajectory run_forward(const SpreadingNetwork& net, const InitialCondition& init, const ControlSchedule& controls,
                          int horizon);

// sum_{i in U} P_I^i(t_i), independent of sense.
double objective_value(const DmpTrajectory& traj, const TargetSpec& target);

double total_infected(const DmpTrajectory& traj, int t);

void write_marginals_csv(std::ostream& out, const SpreadingNetwork& net, const DmpTrajectory& traj);
void write_messages_csv(std::ostream& out, const DmpTrajectory& traj);

}  // namespace dmpopt
