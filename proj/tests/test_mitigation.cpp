#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmpopt/mitigation.hpp"

using namespace dmpopt;

namespace {

MitigationConfig quick(int T, double b, std::size_t replicas) {
  MitigationConfig c;
  c.horizon = T;
  c.budget.assign(static_cast<std::size_t>(T), b);
  c.replicas = replicas;
  c.seed = 11;
  c.optimizer.eps_grid = {1e-3};
  c.optimizer.max_iters = 60;
  return c;
}

constexpr Policy kAll[] = {Policy::planned, Policy::greedy, Policy::dmp_greedy, Policy::dmp_optimal};

}  // namespace

TEST_CASE("policy names round-trip") {
  for (Policy p : kAll) CHECK(parse_policy(policy_name(p)) == p);
  CHECK_THROWS_AS(parse_policy("optimal"), ValidationError);
}

TEST_CASE("saturating budget freezes the epidemic") {
  auto g = generate_random_graph(12, 0.4, {0.3, 0.9}, 4);
  std::vector<NodeId> seeds{0, 5};
  auto init = InitialCondition::with_infected(12, seeds);
  for (Policy p : kAll) {
    auto run = run_policy(g, init, p, quick(4, 10.0, 20));
    for (const auto& rep : run.infected) {
      for (int x : rep) CHECK(x == 2);
    }
    for (const auto& sp : run.spent) CHECK(sp[0] == doctest::Approx(10.0));
  }
}

TEST_CASE("single edge: feedback policies protect the target") {
  auto g = SpreadingNetwork::from_edges(2, {{0, 1, 0.8}});
  std::vector<NodeId> seeds{0};
  auto init = InitialCondition::with_infected(2, seeds);
  auto cfg = quick(3, 1.0, 30);
  EpidemicState s = EpidemicState::from_initial(init);
  for (Policy p : {Policy::greedy, Policy::dmp_greedy, Policy::dmp_optimal}) {
    auto row = decide_vaccination(g, s, p, cfg);
    CHECK(row[1] == 1.0);
    CHECK(row[0] == 0.0);
    auto run = run_policy(g, init, p, cfg);
    CHECK(run.mean.back() == 1.0);
    CHECK(run.stderr_mean.back() == 0.0);
  }
}

TEST_CASE("greedy follows the risk ranking") {
  // 0 infected; 1 and 2 exposed with alpha 0.9 and 0.4; 3 unexposed
  auto g = SpreadingNetwork::from_edges(4, {{0, 1, 0.9}, {0, 2, 0.4}, {2, 3, 0.5}});
  EpidemicState s;
  s.nodes = {State::I, State::S, State::S, State::S};
  auto cfg = quick(2, 1.5, 1);
  auto row = decide_vaccination(g, s, Policy::greedy, cfg);
  CHECK(row == std::vector<double>{0.0, 1.0, 0.5, 0.0});
  // ties go to the lower index
  s.nodes = {State::R, State::S, State::S, State::S};
  row = decide_vaccination(g, s, Policy::greedy, cfg);
  CHECK(row == std::vector<double>{0.0, 1.0, 0.5, 0.0});
  s.t = 2;
  CHECK_THROWS_AS(decide_vaccination(g, s, Policy::greedy, cfg), ValidationError);
}

TEST_CASE("runs respect the budget and never lose infected nodes") {
  auto g = generate_scale_free(30, 2, {0.2, 0.7}, 8);
  std::vector<NodeId> seeds{0};
  auto init = InitialCondition::with_infected(30, seeds);
  auto cfg = quick(4, 2.5, 25);
  for (Policy p : kAll) {
    auto run = run_policy(g, init, p, cfg);
    for (std::size_t r = 0; r < run.infected.size(); ++r) {
      for (std::size_t t = 1; t < run.infected[r].size(); ++t) CHECK(run.infected[r][t] >= run.infected[r][t - 1]);
      for (double sp : run.spent[r]) CHECK(sp <= 2.5 + 1e-9);
    }
    CHECK(run.mean[0] == 1.0);
  }
}

TEST_CASE("runs are deterministic and independent of threads") {
  auto g = generate_scale_free(25, 2, {0.2, 0.7}, 3);
  std::vector<NodeId> seeds{1};
  auto init = InitialCondition::with_infected(25, seeds);
  for (Policy p : {Policy::greedy, Policy::dmp_optimal}) {
    auto cfg = quick(3, 2.0, 16);
    auto a = run_policy(g, init, p, cfg);
    cfg.threads = 4;
    auto b = run_policy(g, init, p, cfg);
    CHECK(a.infected == b.infected);
    CHECK(a.mean == b.mean);
    CHECK(a.stderr_mean == b.stderr_mean);
  }
}

TEST_CASE("decisions are memoized across replicas") {
  auto g = generate_scale_free(20, 2, {0.2, 0.6}, 5);
  std::vector<NodeId> seeds{0};
  auto init = InitialCondition::with_infected(20, seeds);
  auto run = run_policy(g, init, Policy::dmp_optimal, quick(3, 2.0, 10));
  // the t=0 state is shared by every replica
  CHECK(run.cache_hits >= 9);
  CHECK(run.optimizer_calls + run.cache_hits == 30);
}

TEST_CASE("decision time limit") {
  auto g = generate_scale_free(40, 2, {0.2, 0.6}, 5);
  std::vector<NodeId> seeds{0};
  auto init = InitialCondition::with_infected(40, seeds);
  auto cfg = quick(5, 3.0, 2);
  cfg.optimizer.time_limit_seconds = 1e-9;
  CHECK_THROWS_AS(run_policy(g, init, Policy::dmp_optimal, cfg), TimeoutError);
  cfg.threads = 2;
  CHECK_THROWS_AS(run_policy(g, init, Policy::dmp_greedy, cfg), TimeoutError);
}

TEST_CASE("mitigation input validation") {
  auto g = generate_scale_free(10, 2, {0.2, 0.6}, 5);
  std::vector<NodeId> seeds{0};
  auto init = InitialCondition::with_infected(10, seeds);
  auto cfg = quick(3, 1.0, 2);
  cfg.budget.pop_back();
  CHECK_THROWS_AS(run_policy(g, init, Policy::greedy, cfg), ValidationError);
  cfg = quick(3, 1.0, 0);
  CHECK_THROWS_AS(run_policy(g, init, Policy::greedy, cfg), ValidationError);
  std::vector<InitialCondition::Triple> mixed(10);
  mixed[0] = {0.5, 0.5, 0.0};
  CHECK_THROWS_AS(run_policy(g, InitialCondition(mixed), Policy::greedy, quick(3, 1.0, 2)), ValidationError);
}

TEST_CASE("feedback beats the open-loop plan on a small scale-free graph") {
  auto g = generate_scale_free(60, 2, {0.3, 0.6}, 21);
  std::vector<NodeId> seeds{0};
  auto init = InitialCondition::with_infected(60, seeds);
  auto cfg = quick(6, 3.0, 100);
  cfg.threads = 4;
  auto opt = run_policy(g, init, Policy::dmp_optimal, cfg);
  auto plan = run_policy(g, init, Policy::planned, cfg);
  auto dg = run_policy(g, init, Policy::dmp_greedy, cfg);
  const int T = 6;
  auto pooled = [&](const PolicyRun& a, const PolicyRun& b) {
    return std::hypot(a.stderr_mean[T], b.stderr_mean[T]);
  };
  MESSAGE("optimal " << opt.mean[T] << " planned " << plan.mean[T] << " dmp-greedy " << dg.mean[T]);
  CHECK(opt.mean[T] <= plan.mean[T] + pooled(opt, plan));
  CHECK(opt.mean[T] <= dg.mean[T] + pooled(opt, dg));
}

TEST_CASE("feedback dominance on the flight network, default optimizer") {
  const auto g = synthetic_flight_network(1);
  const std::size_t n = g.node_count();
  std::vector<NodeId> seeds{g.require("ATL")};
  const auto init = InitialCondition::with_infected(n, seeds);
  MitigationConfig cfg;
  cfg.horizon = 10;
  cfg.budget.assign(10, 0.5 * static_cast<double>(n));
  cfg.replicas = 100;
  cfg.threads = 4;
  const auto opt = run_policy(g, init, Policy::dmp_optimal, cfg);
  for (Policy p : {Policy::planned, Policy::dmp_greedy}) {
    const auto other = run_policy(g, init, p, cfg);
    MESSAGE(policy_name(p) << " " << other.mean[10] << " vs optimal " << opt.mean[10]);
    CHECK(opt.mean[10] <= other.mean[10] + std::hypot(opt.stderr_mean[10], other.stderr_mean[10]));
  }
}

TEST_CASE("policy CSV") {
  PolicyRun r;
  r.policy = Policy::dmp_greedy;
  r.mean = {1.0, 2.5};
  r.stderr_mean = {0.0, 0.25};
  std::ostringstream os;
  std::vector<PolicyRun> runs{r};
  write_policy_csv(os, runs);
  CHECK(os.str() == "policy,t,mean_infected,stderr\ndmp-greedy,0,1,0\ndmp-greedy,1,2.5,0.25\n");
}
