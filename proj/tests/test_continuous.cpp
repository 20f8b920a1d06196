#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmpopt/continuous.hpp"
#include "dmpopt/rng.hpp"

using namespace dmpopt;

namespace {

ContinuousControl random_rates(std::size_t n, double T, double cell, double cap, std::uint64_t seed) {
  ContinuousControl c(n, T, cell);
  SeededStream rng(seed);
  for (int k = 0; k < c.cells(); ++k) {
    for (std::size_t i = 0; i < n; ++i) c.set_nu(static_cast<NodeId>(i), k, cap * rng.uniform());
  }
  return c;
}

InitialCondition mixed_init(std::size_t n, std::uint64_t seed) {
  SeededStream rng(seed);
  std::vector<InitialCondition::Triple> v(n);
  for (auto& x : v) {
    x.i = 0.5 * rng.uniform();
    x.s = 1.0 - x.i;
  }
  return InitialCondition(v);
}

double max_gap(const ContinuousTrajectory& a, const ContinuousTrajectory& b, int every_a, int every_b) {
  double g = 0.0;
  const int cells = a.steps / every_a;
  for (int k = 0; k <= cells; ++k) {
    for (std::size_t i = 0; i < a.nodes; ++i) {
      g = std::max(g, std::abs(a.ps_at(static_cast<NodeId>(i), k * every_a) - b.ps_at(static_cast<NodeId>(i), k * every_b)));
    }
  }
  return g;
}

}  // namespace

TEST_CASE("continuous: two-node analytic solution") {
  const double a = 0.4;
  auto g = SpreadingNetwork::from_edges(2, {{0, 1, a}});
  std::vector<NodeId> seed{0};
  auto init = InitialCondition::with_infected(2, seed);
  ContinuousControl c(2, 5.0, 1e-3);
  for (Scheme s : {Scheme::rk4, Scheme::euler}) {
    auto tr = integrate_forward(g, init, c, 1e-3, s);
    double worst = 0.0;
    for (int k = 0; k <= tr.steps; ++k) {
      worst = std::max(worst, std::abs(tr.ps_at(1, k) - std::exp(-a * tr.time(k))));
      worst = std::max(worst, std::abs(tr.theta_at(0, k) - std::exp(-a * tr.time(k))));
    }
    if (s == Scheme::rk4) {
      CHECK(worst <= 1e-6);
    } else {
      CHECK(worst <= 1e-3);
    }
    CHECK(tr.ps_at(0, tr.steps) == 0.0);
  }
}

TEST_CASE("continuous: frozen dynamics without rates") {
  auto g = generate_random_tree(8, {0.0, 0.0}, 3);
  auto init = mixed_init(8, 4);
  ContinuousControl c(8, 2.0, 0.1);
  auto tr = integrate_forward(g, init, c, 0.05);
  for (int k = 0; k <= tr.steps; ++k) {
    for (std::size_t i = 0; i < 8; ++i) CHECK(tr.ps_at(static_cast<NodeId>(i), k) == init.nodes()[i].s);
  }
}

TEST_CASE("continuous: spontaneous rate alone gives exp(-int nu)") {
  auto g = SpreadingNetwork::from_edges(1, {});
  auto init = InitialCondition::all_susceptible(1);
  ContinuousControl c(1, 2.0, 0.5);
  const double nus[] = {0.2, 0.0, 1.0, 0.4};
  for (int k = 0; k < 4; ++k) c.set_nu(0, k, nus[k]);
  auto tr = integrate_forward(g, init, c, 0.5);
  CHECK(tr.ps_at(0, 4) == doctest::Approx(std::exp(-0.5 * (0.2 + 0 + 1.0 + 0.4))).epsilon(1e-14));
}

TEST_CASE("continuous: rk4 agrees with fine euler on random trees") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto g = generate_random_tree(10, {0.0, 1.0}, seed);
    auto init = mixed_init(10, seed + 100);
    auto c = random_rates(10, 5.0, 0.01, 0.2, seed + 7);
    auto r = integrate_forward(g, init, c, 0.01, Scheme::rk4);
    auto e = integrate_forward(g, init, c, 1e-4, Scheme::euler);
    CHECK(max_gap(r, e, 1, 100) <= 1e-5);
  }
}

TEST_CASE("continuous: observed order of the schemes") {
  auto g = generate_random_tree(8, {0.2, 0.9}, 12);
  auto init = mixed_init(8, 13);
  auto c = random_rates(8, 4.0, 0.5, 0.3, 14);
  auto ref = integrate_forward(g, init, c, 0.5 / 512, Scheme::rk4);
  auto err = [&](Scheme s, int sub) {
    auto tr = integrate_forward(g, init, c, 0.5 / sub, s);
    return max_gap(tr, ref, sub, 512);
  };
  const double e1 = err(Scheme::euler, 8), e2 = err(Scheme::euler, 16);
  const double r1 = err(Scheme::rk4, 2), r2 = err(Scheme::rk4, 4);
  MESSAGE("euler ratio " << e1 / e2 << " rk4 ratio " << r1 / r2);
  CHECK(std::log2(e1 / e2) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(std::log2(r1 / r2) == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("continuous: printed survival form") {
  auto g = SpreadingNetwork::from_edges(1, {});
  auto init = InitialCondition::all_susceptible(1);
  ContinuousControl c(1, 2.0, 0.5);
  auto tr = integrate_forward(g, init, c, 0.5, Scheme::rk4, SurvivalForm::printed);
  // int_0^t 1 dt' = t: zero at t = 0 and above 1 later, so not a probability
  CHECK(tr.survival_at(0, 0) == 0.0);
  CHECK(tr.survival_at(0, 4) == doctest::Approx(2.0));
  std::vector<ContinuousTarget> none;
  CHECK_THROWS_AS(backward_continuous(g, tr, c, none), ValidationError);
}

TEST_CASE("continuous: input validation") {
  auto g = SpreadingNetwork::from_edges(2, {{0, 1, 0.5}});
  auto init = InitialCondition::all_susceptible(2);
  CHECK_THROWS_AS(ContinuousControl(2, 1.0, 0.3), ValidationError);
  CHECK_THROWS_AS(ContinuousControl(2, 1.0, 0.0), ValidationError);
  ContinuousControl c(2, 1.0, 0.25);
  CHECK_THROWS_AS(integrate_forward(g, init, c, 0.1), ValidationError);
  CHECK_THROWS_AS(c.set_nu(0, 0, -1.0), ValidationError);
  std::vector<NodeId> w{1};
  c.set_controllable(w);
  CHECK_THROWS_AS(c.set_nu(0, 0, 0.3), ValidationError);
  auto tr = integrate_forward(g, init, c, 0.125);
  std::vector<ContinuousTarget> off{{1, 0.3}};
  CHECK_THROWS_AS(continuous_objective(tr, off), ValidationError);
  std::vector<ContinuousTarget> bad{{5, 0.25}};
  CHECK_THROWS_AS(continuous_objective(tr, bad), ValidationError);
}

TEST_CASE("continuous adjoint: end conditions") {
  auto g = generate_random_graph(7, 0.4, {0.1, 0.9}, 2);
  std::vector<NodeId> seed{3};
  auto init = InitialCondition::with_infected(7, seed);
  auto c = random_rates(7, 2.0, 0.25, 0.3, 5);
  auto tr = integrate_forward(g, init, c, 0.05);
  std::vector<ContinuousTarget> all;
  auto adj = backward_continuous(g, tr, c, all);
  const int T = tr.steps;
  for (std::size_t i = 0; i < 7; ++i) CHECK(adj.lambda_s_at(static_cast<NodeId>(i), T) == -1.0);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto id = static_cast<EdgeId>(e);
    CHECK(adj.lambda_theta_at(id, T) ==
          doctest::Approx(-tr.ps_at(g.dst(id), T) / tr.theta_at(id, T)).epsilon(1e-12));
  }

  // targeted: only node 0 at T counts
  std::vector<ContinuousTarget> one{{0, 2.0}};
  auto a1 = backward_continuous(g, tr, c, one);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto id = static_cast<EdgeId>(e);
    if (g.dst(id) != 0) CHECK(a1.lambda_theta_at(id, T) == 0.0);
  }
  CHECK(a1.lambda_s_at(0, T) == -1.0);
  CHECK(a1.lambda_s_at(1, T) == 0.0);
}

TEST_CASE("continuous adjoint: gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t n = 3 + seed % 6;
    auto g = seed % 2 ? generate_random_tree(n, {0.1, 0.9}, seed) : generate_random_graph(n, 0.5, {0.1, 0.9}, seed);
    auto init = mixed_init(n, seed + 40);
    auto c = random_rates(n, 2.0, 0.25, 0.5, seed + 41);
    const double dt = 1e-3;
    std::vector<ContinuousTarget> targets;
    if (seed % 3 == 1) targets = {{0, 1.0}, {static_cast<NodeId>(n - 1), 2.0}, {1, 0.5}};
    auto tr = integrate_forward(g, init, c, dt);
    auto adj = backward_continuous(g, tr, c, targets);
    double worst = 0.0;
    for (int k = 0; k < c.cells(); ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto id = static_cast<NodeId>(i);
        const double h = 1e-5, v = c.nu(id, k);
        auto cp = c, cm = c;
        cp.set_nu(id, k, v + h);
        cm.set_nu(id, k, v - h);
        const double fd = (continuous_objective(integrate_forward(g, init, cp, dt), targets) -
                           continuous_objective(integrate_forward(g, init, cm, dt), targets)) /
                          (2 * h);
        const double gr = adj.grad_at(id, k);
        const double scale = std::max(std::abs(fd), std::abs(gr));
        CHECK(std::abs(gr - fd) <= 1e-3 * scale + 1e-9);
        if (scale > 1e-6) worst = std::max(worst, std::abs(gr - fd) / scale);
      }
    }
    MESSAGE("seed " << seed << " worst relative gap " << worst);
  }
}

TEST_CASE("continuous update: normalization and symmetry") {
  // single controllable node gets the whole budget
  auto g = generate_random_tree(5, {0.3, 0.6}, 8);
  auto init = mixed_init(5, 9);
  std::vector<double> b(8, 0.7);
  std::vector<NodeId> w{2};
  auto c = ContinuousControl::uniform(5, 2.0, 0.25, b, w);
  auto adj = backward_continuous(g, integrate_forward(g, init, c, 0.05), c, {});
  auto next = update_controls_continuous(adj, c);
  for (int k = 0; k < 8; ++k) {
    CHECK(next.nu(2, k) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(next.nu(0, k) == 0.0);
  }

  // symmetric pair
  auto pair = SpreadingNetwork::from_edges(2, {{0, 1, 0.5}, {1, 0, 0.5}});
  auto c2 = ContinuousControl::uniform(2, 2.0, 0.25, b);
  auto a2 = backward_continuous(pair, integrate_forward(pair, InitialCondition::all_susceptible(2), c2, 0.05), c2, {});
  auto n2 = update_controls_continuous(a2, c2);
  for (int k = 0; k < 8; ++k) {
    CHECK(n2.nu(0, k) == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(n2.nu(1, k) == doctest::Approx(0.35).epsilon(1e-12));
  }

  // random instance: budget exact in every cell
  auto g3 = generate_random_graph(8, 0.4, {0.2, 0.8}, 3);
  std::vector<double> b3(8);
  for (int k = 0; k < 8; ++k) b3[static_cast<std::size_t>(k)] = 0.1 * (k + 1);
  auto c3 = ContinuousControl::uniform(8, 2.0, 0.25, b3);
  auto a3 = backward_continuous(g3, integrate_forward(g3, mixed_init(8, 1), c3, 0.05), c3, {});
  auto n3 = update_controls_continuous(a3, c3);
  for (int k = 0; k < 8; ++k) CHECK(n3.total(k) == doctest::Approx(b3[static_cast<std::size_t>(k)]).epsilon(1e-14));
}

TEST_CASE("continuous update: zero weights fall back to uniform") {
  // fully infected start: nothing left to protect or infect
  auto g = SpreadingNetwork::from_edges(2, {{0, 1, 0.5}});
  std::vector<NodeId> all{0, 1};
  auto init = InitialCondition::with_infected(2, all);
  std::vector<double> b(4, 1.0);
  auto c = ContinuousControl::uniform(2, 1.0, 0.25, b);
  auto adj = backward_continuous(g, integrate_forward(g, init, c, 0.25), c, {});
  std::vector<std::string> warn;
  auto next = update_controls_continuous(adj, c, &warn);
  CHECK(warn.size() == 4);
  CHECK(next.nu(0, 0) == 0.5);
}

TEST_CASE("continuous optimizer: best objective never increases") {
  auto g = generate_random_graph(10, 0.3, {0.2, 0.7}, 6);
  std::vector<NodeId> seed{0};
  auto init = InitialCondition::with_infected(10, seed);
  std::vector<double> b(10, 1.0);
  auto start = ContinuousControl::uniform(10, 2.0, 0.2, b);
  ContinuousConfig cfg;
  cfg.dt = 0.05;
  cfg.max_iters = 30;
  auto rep = optimize_continuous(g, init, start, {}, cfg);
  REQUIRE(!rep.best_so_far.empty());
  for (std::size_t k = 1; k < rep.best_so_far.size(); ++k) CHECK(rep.best_so_far[k] <= rep.best_so_far[k - 1]);
  CHECK(rep.best_objective <= rep.objective.front());
  for (int k = 0; k < rep.best.cells(); ++k) CHECK(rep.best.total(k) == doctest::Approx(1.0).epsilon(1e-13));
  MESSAGE("start " << rep.objective.front() << " best " << rep.best_objective << " at " << rep.best_iteration);
}

TEST_CASE("continuous CSV") {
  auto g = SpreadingNetwork::from_edges(2, {{0, 1, 0.5}});
  std::vector<NodeId> seed{0};
  ContinuousControl c(2, 0.5, 0.5);
  auto tr = integrate_forward(g, InitialCondition::with_infected(2, seed), c, 0.25);
  std::ostringstream os;
  write_continuous_csv(os, g, tr);
  const auto s = os.str();
  CHECK(s.rfind("node,t,P_S,P_I,P_R\n0,0,0,1,0\n0,0.25,0,1,0\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 7);
}
