#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "dmpopt/dmp.hpp"
#include "dmpopt/stochastic.hpp"

namespace dmpopt {

struct RankedNode {
  NodeId node = 0;
  double score = 0.0;  // degree / shell / CI value at the time of selection
};

// floor(B) distinct random nodes get nu(0) = 1, one more gets the remainder.
ControlSchedule allocate_random(const SpreadingNetwork& net, double budget, int horizon, std::uint64_t seed);

// nu_i(0) = B / N.
ControlSchedule allocate_uniform(const SpreadingNetwork& net, double budget, int horizon);

// Top floor(B) of the ranking at 1, the next one at the fractional remainder,
// written into mechanism k at step t of `out`. Nodes outside W are skipped.
void apply_ranking(std::span<const NodeId> ranking, double budget, ControlKind k, int t, ControlSchedule& out);
ControlSchedule allocation_from_ranking(const SpreadingNetwork& net, std::span<const NodeId> ranking, double budget,
                                        int horizon);

// The rankers use the undirected view; ties go to the lowest index.

// Adaptive high-degree: pick the max residual degree, delete it, repeat.
std::vector<RankedNode> rank_hda(const SpreadingNetwork& net, std::size_t k);

// Shell index per node from iterative peeling.
std::vector<int> kshell_indices(const SpreadingNetwork& net);
// All nodes by descending shell.
std::vector<RankedNode> rank_kshell(const SpreadingNetwork& net);

// CI_l(i) = (d_i - 1) * sum over the distance-l sphere of (d_j - 1), on the
// graph with `removed` nodes deleted.
double collective_influence(const SpreadingNetwork& net, NodeId i, int l, std::span<const char> removed);
// Adaptive CI_l selection of k nodes with local score updates.
std::vector<RankedNode> rank_ci(const SpreadingNetwork& net, int l, std::size_t k);

// Probability that each susceptible node is infected at the next step given
// the realized state; 0 for I and R nodes.
std::vector<double> high_risk_scores(const EpidemicState& state, const SpreadingNetwork& net);

std::vector<NodeId> nodes_of(std::span<const RankedNode> ranked);

// rank,node_label,score with rank starting at 1.
void write_ranking_csv(std::ostream& out, const SpreadingNetwork& net, std::span<const RankedNode> ranked);

}  // namespace dmpopt
