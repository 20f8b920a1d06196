#pragma once

#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dmpopt/errors.hpp"

namespace dmpopt {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;

inline constexpr EdgeId kNoEdge = -1;
inline constexpr std::size_t kNoPos = std::numeric_limits<std::size_t>::max();

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  double alpha = 0.0;
};

/*
  SpreadingNetwork: immutable directed graph with a transmission probability on
  every ordered edge (k -> i).

  Edge ids follow the order of the edge vector passed to from_edges(); all
  message arrays elsewhere in the library are indexed by that id. In- and
  out-adjacency are stored as CSR slices of edge ids, each slice sorted by edge
  id. For every edge k->i we precompute the id of i->k (if present) and its
  position inside in_edges(k), which is what cavity products need to skip.
*/
class SpreadingNetwork {
 public:
  SpreadingNetwork() = default;

  static SpreadingNetwork from_edges(std::size_t node_count, std::vector<Edge> edges,
                                     std::vector<std::string> labels = {});

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }

  const Edge& edge(EdgeId e) const { return edges_[static_cast<std::size_t>(e)]; }
  std::span<const Edge> edges() const { return edges_; }
  NodeId src(EdgeId e) const { return edge(e).src; }
  NodeId dst(EdgeId e) const { return edge(e).dst; }
  double alpha(EdgeId e) const { return edge(e).alpha; }

  std::span<const EdgeId> in_edges(NodeId i) const;
  std::span<const EdgeId> out_edges(NodeId i) const;

  // Edge i->k for e = k->i, or kNoEdge.
  EdgeId reverse(EdgeId e) const { return reverse_[static_cast<std::size_t>(e)]; }
  // Position of reverse(e) inside in_edges(src(e)), or kNoPos.
  std::size_t reverse_in_pos(EdgeId e) const { return reverse_in_pos_[static_cast<std::size_t>(e)]; }

  // Undirected view: sorted distinct neighbors over both directions.
  std::span<const NodeId> neighbors(NodeId i) const;
  std::size_t undirected_degree(NodeId i) const { return neighbors(i).size(); }

  const std::string& label(NodeId i) const { return labels_[static_cast<std::size_t>(i)]; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<NodeId> find(std::string_view label) const;
  NodeId require(std::string_view label) const;

  EdgeId find_edge(NodeId src, NodeId dst) const;
  double max_alpha() const;

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, NodeId> index_;

  std::vector<std::size_t> in_offsets_, out_offsets_, nb_offsets_;
  std::vector<EdgeId> in_list_, out_list_;
  std::vector<NodeId> nb_list_;
  std::vector<EdgeId> reverse_;
  std::vector<std::size_t> reverse_in_pos_;
};

/// Per-node starting probabilities (P_S, P_I, P_R).
class InitialCondition {
 public:
  struct Triple {
    double s = 1.0;
    double i = 0.0;
    double r = 0.0;
  };

  InitialCondition() = default;
  explicit InitialCondition(std::vector<Triple> nodes);

  static InitialCondition all_susceptible(std::size_t n);
  static InitialCondition with_infected(std::size_t n, std::span<const NodeId> infected);

  std::size_t size() const { return nodes_.size(); }
  const Triple& operator[](NodeId i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::span<const Triple> nodes() const { return nodes_; }
  bool deterministic() const;

 private:
  std::vector<Triple> nodes_;
};

struct EdgeListOptions {
  bool undirected = false;
  // Used when a line carries only two fields.
  std::optional<double> default_alpha;
  // Benchmark datasets contain both orientations and occasional self-loops;
  // these switches drop them instead of failing.
  bool skip_duplicates = false;
  bool skip_self_loops = false;
};

// Lines `src dst [alpha]`, separated by whitespace or commas. Blank lines and
// lines starting with '#' or '%' are ignored. Labels map to dense indices in
// first-appearance order.
SpreadingNetwork load_edge_list(std::istream& in, const EdgeListOptions& opts = {});
SpreadingNetwork load_edge_list_file(const std::string& path, const EdgeListOptions& opts = {});
void write_edge_list(std::ostream& out, const SpreadingNetwork& net);

std::string network_to_json(const SpreadingNetwork& net);
SpreadingNetwork network_from_json(std::string_view text);

struct PassengerRecord {
  std::string src;
  std::string dst;
  std::int64_t passengers = 0;
};

// Routes are directed and aggregated by summation; routes below
// keep_fraction * (busiest route) are pruned; alpha is linear in passengers
// with the lightest surviving route at alpha_min.
SpreadingNetwork from_passenger_records(std::span<const PassengerRecord> records, double alpha_min,
                                        double keep_fraction);

struct AlphaSampler {
  double lo = 0.0;
  double hi = 1.0;  // exclusive unless lo == hi
};

// Uniform labeled tree via Pruefer decoding, both directions per edge with a
// shared alpha.
SpreadingNetwork generate_random_tree(std::size_t n, AlphaSampler alpha, std::uint64_t seed);

// Erdos-Renyi G(n, p), symmetric alphas.
SpreadingNetwork generate_random_graph(std::size_t n, double p, AlphaSampler alpha, std::uint64_t seed);

// Barabasi-Albert preferential attachment with m links per new node.
SpreadingNetwork generate_scale_free(std::size_t n, std::size_t m, AlphaSampler alpha, std::uint64_t seed);

// Stand-in for the BTS flight network: a gravity model over airports with
// Zipf-distributed traffic, fed through from_passenger_records. Node 0 is the
// busiest hub.
std::vector<PassengerRecord> synthetic_flight_records(std::size_t airports, std::uint64_t seed);
SpreadingNetwork synthetic_flight_network(std::uint64_t seed);

}  // namespace dmpopt
