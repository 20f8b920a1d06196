#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dmpopt/dmp.hpp"

namespace dmpopt {

// B(t) for t in [0, T).
struct BudgetProfile {
  std::vector<double> nu;
  std::vector<double> mu;

  static BudgetProfile constant(int horizon, double nu_budget, double mu_budget);
};

/*
  Lagrange multipliers of the forward recursions, slices t = 0..T.

  Sign convention: lambda = -dJ/dX with J = s * sum_{targets} P_I^i(t_i) and
  s = +1 when maximizing infection, -1 when minimizing. This gives
  lambda^S_i(T) = 1[t_i = T] for targeting and lambda^R_i(T) = -1 for the
  vaccination objective.

  grad_nu/grad_mu hold dJ/dnu_i(t) and dJ/dmu_i(t), t in [0, T). When a
  control-update hook is active these are the values the hook saw, i.e. they
  mix old and updated controls exactly as the sweep does.
*/
class AdjointTrajectory {
 public:
  AdjointTrajectory() = default;
  AdjointTrajectory(std::size_t nodes, std::size_t edges, int horizon);

  int horizon() const { return horizon_; }

  double lambda_s(NodeId i, int t) const { return ls_[n(i, t)]; }
  double lambda_r(NodeId i, int t) const { return lr_[n(i, t)]; }
  double lambda_s_edge(EdgeId e, int t) const { return les_[m(e, t)]; }
  double lambda_r_edge(EdgeId e, int t) const { return ler_[m(e, t)]; }
  double lambda_theta(EdgeId e, int t) const { return lth_[m(e, t)]; }
  double lambda_phi(EdgeId e, int t) const { return lph_[m(e, t)]; }
  double lambda_budget(ControlKind k, int t) const {
    return (k == ControlKind::nu ? lb_nu_ : lb_mu_)[static_cast<std::size_t>(t)];
  }
  double grad(ControlKind k, NodeId i, int t) const { return (k == ControlKind::nu ? gnu_ : gmu_)[n(i, t)]; }

 private:
  friend struct SweepAccess;
  std::size_t n(NodeId i, int t) const { return static_cast<std::size_t>(t) * nodes_ + static_cast<std::size_t>(i); }
  std::size_t m(EdgeId e, int t) const { return static_cast<std::size_t>(t) * edges_ + static_cast<std::size_t>(e); }

  std::size_t nodes_ = 0, edges_ = 0;
  int horizon_ = 0;
  std::vector<double> ls_, lr_, les_, ler_, lth_, lph_;
  std::vector<double> gnu_, gmu_;
  std::vector<double> lb_nu_, lb_mu_;
};

/*
  Called once per step t = T-1 .. 0 while sweeping backward, right after the
  gradients at t become available. It may rewrite the controls at time t; the
  rest of the sweep then uses the new values. Returns the budget multiplier
  used (or 0).
*/
using ControlUpdateHook = std::function<double(int t, std::span<const double> grad_nu,
                                               std::span<const double> grad_mu, ControlSchedule& controls)>;

// Exact reverse sweep for both controls. Without a hook the gradients are the
// exact derivatives of the sense-adjusted objective.
AdjointTrajectory backward_sweep(const SpreadingNetwork& net, const DmpTrajectory& traj, ControlSchedule& controls,
                                 const TargetSpec& target, const ControlUpdateHook& hook = {});

// Wrappers that check the regime preconditions (SI: all mu = 0; vaccination:
// all nu = 0, total-spread minimization) and alpha < 1.
AdjointTrajectory backward_sweep_targeting(const SpreadingNetwork& net, const DmpTrajectory& traj,
                                           const ControlSchedule& controls, const TargetSpec& target);
AdjointTrajectory backward_sweep_vaccination(const SpreadingNetwork& net, const DmpTrajectory& traj,
                                             const ControlSchedule& controls);

void require_alpha_below_one(const SpreadingNetwork& net);

struct BudgetSolution {
  double lambda = 0.0;
  std::vector<double> values;
  double residual = 0.0;  // sum(values) - B
  bool saturated = false;
};

/*
  Maximizes sum_i psi_i x_i + eps * sum_i [log(x_i - lo_i) + log(hi_i - x_i)]
  subject to sum_i x_i = B. Each x_i(lambda) is the interior root of
  lambda + psi_i + eps/(x - lo) - eps/(hi - x) = 0; lambda is found by
  bisection on the (increasing) total.
*/
BudgetSolution solve_budget_multiplier(std::span<const double> psi, double budget, std::span<const double> lower,
                                       std::span<const double> upper, double eps);

// Interior root for one coordinate; exposed for testing.
double barrier_root(double c, double lo, double hi, double eps);

enum class Mode { targeting, seeding, vaccination };

struct ProblemSpec {
  SpreadingNetwork network;
  InitialCondition init;
  int horizon = 0;
  Mode mode = Mode::targeting;
  TargetSpec target;
  BudgetProfile budget;
  std::vector<NodeId> controllable;  // empty = all nodes
  // Optional per-node bounds for the controlled mechanism; default [0,1].
  std::vector<double> lower, upper;

  ControlKind kind() const { return mode == Mode::vaccination ? ControlKind::mu : ControlKind::nu; }
  // Steps at which the controlled mechanism is free.
  bool free_step(int t) const { return mode != Mode::seeding || t == 0; }
  void validate() const;
  // Empty schedule with W and bounds applied.
  ControlSchedule blank_schedule() const;
};

enum class InitScheme { uniform, given };

struct OptimizerConfig {
  std::vector<double> eps_grid{1e-2, 1e-3, 5e-4, 1e-4};
  int max_iters = 200;
  double tolerance = 1e-9;  // max-norm control change
  InitScheme init = InitScheme::uniform;
  std::optional<ControlSchedule> initial;  // used with InitScheme::given
  double time_limit_seconds = 0.0;          // wall-clock cap, 0 = none
  // Extra starts from random schedules (each coordinate uniform in its
  // bounds, budget ignored), each run over the whole eps grid.
  int restarts = 0;
  std::uint64_t restart_seed = 1;
};

struct IterationRecord {
  int start = 0;  // 0 = configured init, k = k-th random restart
  double eps = 0.0;
  int iteration = 0;
  double objective = 0.0;  // sum P_I at the targets
  double max_residual = 0.0;
  double change = 0.0;
};

struct OptimizationReport {
  ControlSchedule best;
  double best_objective = 0.0;
  double best_eps = 0.0;
  int best_start = 0;
  int best_iteration = 0;
  int iterations = 0;  // total over the grid
  std::vector<IterationRecord> trace;
  std::vector<double> residual;  // per t for the best schedule
  double wall_seconds = 0.0;
};

// sum_{i in W} x_i(t) - B(t) per step for the controlled mechanism.
std::vector<double> budget_residuals(const ProblemSpec& problem, const ControlSchedule& controls);

// Uniform B(t)/|W| on the free steps, clipped to the bounds.
ControlSchedule uniform_schedule(const ProblemSpec& problem);

// Sense-adjusted objective: larger is better.
double score(const ProblemSpec& problem, double objective);

OptimizationReport forward_backward_iterate(const ProblemSpec& problem, const OptimizerConfig& config = {});

// dJ/dx_i(t) for every (i, t) of the controlled mechanism at fixed controls.
std::vector<double> control_gradient(const ProblemSpec& problem, const ControlSchedule& controls);

struct LandscapePoint {
  std::vector<double> free_values;
  double objective = 0.0;
  bool valid = false;
};

struct FreeParam {
  NodeId node = 0;
  int time = 0;
};

/*
  Forward-DMP objective over a grid of the listed coordinates. At each step the
  remaining controllable entries share what is left of B(t) equally; grid
  points that push anything outside its bounds are marked invalid.
*/
std::vector<LandscapePoint> objective_landscape(const ProblemSpec& problem, std::span<const FreeParam> free,
                                                double resolution);

}  // namespace dmpopt
