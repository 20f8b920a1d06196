#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "dmpopt/dmp.hpp"
#include "dmpopt/rng.hpp"

namespace dmpopt {

enum class State : std::uint8_t { S = 0, I = 1, R = 2 };

struct EpidemicState {
  std::vector<State> nodes;
  int t = 0;

  std::size_t count(State s) const;
  static EpidemicState from_initial(const InitialCondition& init);  // requires a deterministic init
};

// Random-number slots per step: node i uses 2i (nu) and 2i+1 (mu), edge e uses
// 2N + e. Every draw is addressable independently of which other nodes happen
// to be susceptible, so policies sharing a seed share their randomness.
inline std::uint64_t nu_slot(NodeId i) { return 2 * static_cast<std::uint64_t>(i); }
inline std::uint64_t mu_slot(NodeId i) { return 2 * static_cast<std::uint64_t>(i) + 1; }
inline std::uint64_t edge_slot(std::size_t nodes, EdgeId e) {
  return 2 * static_cast<std::uint64_t>(nodes) + static_cast<std::uint64_t>(e);
}
// Time index reserved for sampling the initial state.
inline constexpr std::uint64_t kInitTime = ~std::uint64_t{0};

/*
  One synchronous step of the generalized SIR rules from the frozen state at
  time t. A susceptible node i is exposed to every infected in-neighbor j with
  probability alpha_ji, to spontaneous infection nu_i(t) and to vaccination
  mu_i(t); if vaccination fires it wins over any infection in the same step.
*/
EpidemicState mc_step(const EpidemicState& state, const SpreadingNetwork& net, const ControlSchedule& controls,
                      const CounterRng& rng);

// Samples the initial state from a (possibly probabilistic) initial condition.
EpidemicState sample_initial(const InitialCondition& init, const CounterRng& rng);

struct MarginalTable {
  std::size_t nodes = 0;
  int horizon = 0;
  // time-major, [t * nodes + i]
  std::vector<double> ps, pi, pr;

  double s(NodeId i, int t) const { return ps[at(i, t)]; }
  double i(NodeId n, int t) const { return pi[at(n, t)]; }
  double r(NodeId i, int t) const { return pr[at(i, t)]; }
  std::size_t at(NodeId i, int t) const { return static_cast<std::size_t>(t) * nodes + static_cast<std::size_t>(i); }
};

struct McEstimate {
  MarginalTable mean;
  std::size_t replicas = 0;

  // sqrt(p (1 - p) / replicas)
  double stderr_s(NodeId i, int t) const;
  double stderr_i(NodeId i, int t) const;
  double stderr_r(NodeId i, int t) const;
};

struct McOptions {
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

McEstimate mc_estimate_marginals(const SpreadingNetwork& net, const InitialCondition& init,
                                 const ControlSchedule& controls, int horizon, const McOptions& opts);

inline constexpr std::size_t kExactMaxNodes = 12;

// Evolves the joint distribution over {S,I,R}^N exactly; N <= kExactMaxNodes.
MarginalTable exact_marginals(const SpreadingNetwork& net, const InitialCondition& init,
                              const ControlSchedule& controls, int horizon);

// Same schema as the DMP marginal CSV plus standard errors.
void write_mc_csv(std::ostream& out, const SpreadingNetwork& net, const McEstimate& est);

}  // namespace dmpopt
