#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dmpopt/network.hpp"

namespace dmpopt {

// Continuous-time SI dynamics with transmission rates alpha_ij and
// spontaneous-infection rates nu_i(t).

// nu_i(t) piecewise constant on cells [n dt, (n+1) dt).
class ContinuousControl {
 public:
  ContinuousControl() = default;
  ContinuousControl(std::size_t nodes, double horizon, double dt);

  std::size_t node_count() const { return nodes_; }
  int cells() const { return cells_; }
  double dt() const { return dt_; }
  double horizon() const { return horizon_; }

  double nu(NodeId i, int cell) const { return nu_[at(i, cell)]; }
  void set_nu(NodeId i, int cell, double v);
  double total(int cell) const;

  bool controllable(NodeId i) const { return w_[static_cast<std::size_t>(i)] != 0; }
  void set_controllable(std::span<const NodeId> nodes);
  std::vector<NodeId> controllable_nodes() const;

  // B(t) per cell.
  std::vector<double> budget;

  // Spreads budget[n] uniformly over W.
  static ContinuousControl uniform(std::size_t nodes, double horizon, double dt, std::span<const double> budget,
                                   std::span<const NodeId> controllable = {});

 private:
  std::size_t at(NodeId i, int cell) const {
    return static_cast<std::size_t>(cell) * nodes_ + static_cast<std::size_t>(i);
  }
  std::size_t nodes_ = 0;
  int cells_ = 0;
  double dt_ = 0.0, horizon_ = 0.0;
  std::vector<double> nu_;
  std::vector<char> w_;
};

enum class Scheme { euler, rk4 };

// exp(-int nu) is the survival probability against spontaneous infection.
// `printed` evaluates int_0^t exp(-nu(s) s) ds instead, for comparison only;
// it is not a probability and the adjoint does not support it.
enum class SurvivalForm { exponential, printed };

struct ContinuousTrajectory {
  std::size_t nodes = 0, edges = 0;
  int steps = 0;
  double dt = 0.0;  // integration step
  int substeps = 1;  // integration steps per control cell
  SurvivalForm form = SurvivalForm::exponential;
  std::vector<double> ps0;  // P_S(0)
  std::vector<double> pr0;  // constant in SI
  // [n * edges + e] and [n * nodes + i], n = 0..steps
  std::vector<double> theta, ps, survival;

  double time(int n) const { return n * dt; }
  double theta_at(EdgeId e, int n) const { return theta[static_cast<std::size_t>(n) * edges + static_cast<std::size_t>(e)]; }
  double ps_at(NodeId i, int n) const { return ps[static_cast<std::size_t>(n) * nodes + static_cast<std::size_t>(i)]; }
  double survival_at(NodeId i, int n) const {
    return survival[static_cast<std::size_t>(n) * nodes + static_cast<std::size_t>(i)];
  }
};

/*
  d theta^{i->j}/dt = -a_ij theta^{i->j} + a_ij P_S^i(0) S_i(t) prod_{k in di\j} theta^{k->i}
  P_S^i(t)          = P_S^i(0) S_i(t) prod_{k in di} theta^{k->i}
  with theta(0) = 1. S_i is evaluated in closed form inside each cell. dt must
  divide the control cell width.
*/
ContinuousTrajectory integrate_forward(const SpreadingNetwork& net, const InitialCondition& init,
                                       const ContinuousControl& control, double dt, Scheme scheme = Scheme::rk4,
                                       SurvivalForm survival = SurvivalForm::exponential);

struct ContinuousTarget {
  NodeId node = 0;
  double time = 0.0;  // must sit on the integration grid
};

// J = sum over targets of P_S^i(t_i), the quantity being minimized (spread
// maximization). Empty target list = every node at the horizon.
double continuous_objective(const ContinuousTrajectory& traj, std::span<const ContinuousTarget> targets);

/*
  Adjoint of the forward system, lambda = -dJ/dX:
    lambda^theta_{i->j}(t) = -dJ/d theta^{i->j}(t)
    lambda^S_i(t)          = -Lambda_i(t) / P_S^i(t)
  where Lambda_i(t) = -dJ/dnu_i(t) per unit time: the downstream value of
  node i staying susceptible from t on. Untargeted end conditions are
  lambda^S_i(T) = -1 and lambda^theta_{i->j}(T) = -P_S^j(T)/theta^{i->j}(T).
  Integrated backward with the forward scheme; forward values between grid
  points come from cubic Hermite interpolation.
*/
struct ContinuousAdjoint {
  std::size_t nodes = 0, edges = 0;
  int steps = 0;
  std::vector<double> lambda_theta;  // [n * edges + e]
  std::vector<double> lambda_s;      // [n * nodes + i]
  std::vector<double> value;         // Lambda_i, [n * nodes + i]
  std::vector<double> grad;          // dJ/dnu_i on control cell c, [c * nodes + i]

  double lambda_theta_at(EdgeId e, int n) const {
    return lambda_theta[static_cast<std::size_t>(n) * edges + static_cast<std::size_t>(e)];
  }
  double lambda_s_at(NodeId i, int n) const { return lambda_s[static_cast<std::size_t>(n) * nodes + static_cast<std::size_t>(i)]; }
  double grad_at(NodeId i, int cell) const { return grad[static_cast<std::size_t>(cell) * nodes + static_cast<std::size_t>(i)]; }
};

ContinuousAdjoint backward_continuous(const SpreadingNetwork& net, const ContinuousTrajectory& traj,
                                      const ContinuousControl& control, std::span<const ContinuousTarget> targets,
                                      Scheme scheme = Scheme::rk4);

/*
  nu_i(cell) = B(cell) * w_i / sum_{j in W} w_j with w_i = -lambda^S_i P_S^i
  averaged over the cell, i.e. the current-iterate susceptibility inside the
  exponent. Negative weights are clipped to 0; an all-zero cell falls back to
  the uniform split and appends a warning.
*/
ContinuousControl update_controls_continuous(const ContinuousAdjoint& adj, const ContinuousControl& control,
                                             std::vector<std::string>* warnings = nullptr);

struct ContinuousConfig {
  double dt = 1e-2;
  Scheme scheme = Scheme::rk4;
  int max_iters = 200;
  double tolerance = 1e-9;  // max-norm change of nu
};

struct ContinuousReport {
  ContinuousControl best;
  double best_objective = 0.0;  // J at the best iterate
  int best_iteration = 0;
  std::vector<double> objective;  // per iteration
  std::vector<double> best_so_far;
  std::vector<std::string> warnings;
  int iterations = 0;
};

ContinuousReport optimize_continuous(const SpreadingNetwork& net, const InitialCondition& init,
                                     const ContinuousControl& start, std::span<const ContinuousTarget> targets,
                                     const ContinuousConfig& config = {});

// node,t,P_S,P_I,P_R with real-valued t.
void write_continuous_csv(std::ostream& out, const SpreadingNetwork& net, const ContinuousTrajectory& traj);

}  // namespace dmpopt
