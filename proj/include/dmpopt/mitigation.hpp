#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmpopt/adjoint.hpp"
#include "dmpopt/stochastic.hpp"

namespace dmpopt {

enum class Policy { planned, greedy, dmp_greedy, dmp_optimal };

std::string_view policy_name(Policy p);
Policy parse_policy(std::string_view name);  // "planned", "greedy", "dmp-greedy", "dmp-optimal"

struct MitigationConfig {
  int horizon = 10;
  std::vector<double> budget;  // B_mu(t) for t in [0, T)
  std::size_t replicas = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  // Used by planned, dmp-greedy and dmp-optimal. time_limit_seconds caps each
  // decision.
  OptimizerConfig optimizer;
};

struct PolicyRun {
  Policy policy = Policy::planned;
  int horizon = 0;
  std::vector<std::vector<int>> infected;   // [replica][t], t = 0..T
  std::vector<std::vector<double>> spent;   // [replica][t], t < T
  std::vector<double> mean, stderr_mean;    // per t
  std::size_t optimizer_calls = 0;
  std::size_t cache_hits = 0;
};

/*
  Simulates `replicas` realizations from a deterministic initial state. At each
  step the policy picks mu(t) from the observed state (planned fixes its whole
  schedule from the initial condition), then mc_step advances. Replica r uses
  CounterRng(seed, r) under every policy.

  Only currently susceptible nodes are offered budget; nu is 0 throughout.
*/
PolicyRun run_policy(const SpreadingNetwork& net, const InitialCondition& init, Policy policy,
                     const MitigationConfig& config);

// One decision: mu for step t given the observed state (all of [0, N)).
std::vector<double> decide_vaccination(const SpreadingNetwork& net, const EpidemicState& state, Policy policy,
                                       const MitigationConfig& config);

// policy,t,mean_infected,stderr
void write_policy_csv(std::ostream& out, std::span<const PolicyRun> runs);

}  // namespace dmpopt
