#include "dmpopt/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmpopt/rng.hpp"

namespace dmpopt {

namespace {

std::string default_label(std::size_t i) { return std::to_string(i); }

void build_csr(std::size_t n, std::span<const Edge> edges, bool by_dst, std::vector<std::size_t>& offsets,
               std::vector<EdgeId>& list) {
  offsets.assign(n + 1, 0);
  for (const auto& e : edges) {
    ++offsets[static_cast<std::size_t>(by_dst ? e.dst : e.src) + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  list.resize(edges.size());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto key = static_cast<std::size_t>(by_dst ? edges[e].dst : edges[e].src);
    list[cursor[key]++] = static_cast<EdgeId>(e);
  }
}

}  // namespace

SpreadingNetwork SpreadingNetwork::from_edges(std::size_t node_count, std::vector<Edge> edges,
                                              std::vector<std::string> labels) {
  if (node_count == 0) {
    throw ValidationError("network must have at least one node");
  }
  if (node_count > static_cast<std::size_t>(std::numeric_limits<NodeId>::max())) {
    throw ValidationError("too many nodes");
  }
  if (!labels.empty() && labels.size() != node_count) {
    throw ValidationError("label count does not match node count");
  }
  SpreadingNetwork g;
  g.node_count_ = node_count;

  std::set<std::pair<NodeId, NodeId>> seen;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& ed = edges[e];
    if (ed.src < 0 || ed.dst < 0 || static_cast<std::size_t>(ed.src) >= node_count ||
        static_cast<std::size_t>(ed.dst) >= node_count) {
      throw ValidationError("edge " + std::to_string(e) + " references a node out of range");
    }
    if (ed.src == ed.dst) {
      throw ValidationError("self-loop on node " + std::to_string(ed.src));
    }
    if (!(ed.alpha >= 0.0 && ed.alpha <= 1.0)) {
      throw ValidationError("alpha outside [0,1] on edge " + std::to_string(e));
    }
    if (!seen.emplace(ed.src, ed.dst).second) {
      throw ValidationError("duplicate edge " + std::to_string(ed.src) + "->" + std::to_string(ed.dst));
    }
  }
  g.edges_ = std::move(edges);

  if (labels.empty()) {
    labels.reserve(node_count);
    for (std::size_t i = 0; i < node_count; ++i) labels.push_back(default_label(i));
  }
  g.labels_ = std::move(labels);
  for (std::size_t i = 0; i < node_count; ++i) {
    if (!g.index_.emplace(g.labels_[i], static_cast<NodeId>(i)).second) {
      throw ValidationError("duplicate node label '" + g.labels_[i] + "'");
    }
  }

  build_csr(node_count, g.edges_, /*by_dst=*/true, g.in_offsets_, g.in_list_);
  build_csr(node_count, g.edges_, /*by_dst=*/false, g.out_offsets_, g.out_list_);

  const auto m = g.edges_.size();
  g.reverse_.assign(m, kNoEdge);
  g.reverse_in_pos_.assign(m, kNoPos);
  for (std::size_t e = 0; e < m; ++e) {
    const auto& ed = g.edges_[e];
    // reverse edge dst->src lives in in_edges(src)
    const auto in_k = g.in_edges(ed.src);
    for (std::size_t p = 0; p < in_k.size(); ++p) {
      if (g.src(in_k[p]) == ed.dst) {
        g.reverse_[e] = in_k[p];
        g.reverse_in_pos_[e] = p;
        break;
      }
    }
  }

  g.nb_offsets_.assign(node_count + 1, 0);
  std::vector<std::vector<NodeId>> nb(node_count);
  for (const auto& ed : g.edges_) {
    nb[static_cast<std::size_t>(ed.src)].push_back(ed.dst);
    nb[static_cast<std::size_t>(ed.dst)].push_back(ed.src);
  }
  for (std::size_t i = 0; i < node_count; ++i) {
    auto& v = nb[i];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    g.nb_offsets_[i + 1] = g.nb_offsets_[i] + v.size();
  }
  g.nb_list_.reserve(g.nb_offsets_.back());
  for (auto& v : nb) g.nb_list_.insert(g.nb_list_.end(), v.begin(), v.end());
  return g;
}

std::span<const EdgeId> SpreadingNetwork::in_edges(NodeId i) const {
  const auto k = static_cast<std::size_t>(i);
  return {in_list_.data() + in_offsets_[k], in_offsets_[k + 1] - in_offsets_[k]};
}

std::span<const EdgeId> SpreadingNetwork::out_edges(NodeId i) const {
  const auto k = static_cast<std::size_t>(i);
  return {out_list_.data() + out_offsets_[k], out_offsets_[k + 1] - out_offsets_[k]};
}

std::span<const NodeId> SpreadingNetwork::neighbors(NodeId i) const {
  const auto k = static_cast<std::size_t>(i);
  return {nb_list_.data() + nb_offsets_[k], nb_offsets_[k + 1] - nb_offsets_[k]};
}

std::optional<NodeId> SpreadingNetwork::find(std::string_view label) const {
  const auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

NodeId SpreadingNetwork::require(std::string_view label) const {
  if (auto id = find(label)) return *id;
  throw ValidationError("unknown node label '" + std::string(label) + "'");
}

EdgeId SpreadingNetwork::find_edge(NodeId s, NodeId d) const {
  for (EdgeId e : out_edges(s)) {
    if (dst(e) == d) return e;
  }
  return kNoEdge;
}

double SpreadingNetwork::max_alpha() const {
  double m = 0.0;
  for (const auto& e : edges_) m = std::max(m, e.alpha);
  return m;
}

InitialCondition::InitialCondition(std::vector<Triple> nodes) : nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& t = nodes_[i];
    for (double p : {t.s, t.i, t.r}) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("initial probability outside [0,1] at node " + std::to_string(i));
      }
    }
    if (std::abs(t.s + t.i + t.r - 1.0) > 1e-12) {
      throw ValidationError("initial probabilities do not sum to 1 at node " + std::to_string(i));
    }
  }
}

InitialCondition InitialCondition::all_susceptible(std::size_t n) {
  return InitialCondition(std::vector<Triple>(n));
}

InitialCondition InitialCondition::with_infected(std::size_t n, std::span<const NodeId> infected) {
  std::vector<Triple> v(n);
  for (NodeId i : infected) {
    if (i < 0 || static_cast<std::size_t>(i) >= n) throw ValidationError("infected node out of range");
    v[static_cast<std::size_t>(i)] = {0.0, 1.0, 0.0};
  }
  return InitialCondition(std::move(v));
}

bool InitialCondition::deterministic() const {
  return std::all_of(nodes_.begin(), nodes_.end(), [](const Triple& t) {
    auto bin = [](double p) { return p == 0.0 || p == 1.0; };
    return bin(t.s) && bin(t.i) && bin(t.r);
  });
}

// ---------------------------------------------------------------------------
// Edge list I/O

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [](char c) { return c == ' ' || c == '\t' || c == ',' || c == '\r'; };
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

class LabelMap {
 public:
  NodeId get(std::string_view label) {
    auto [it, inserted] = index_.try_emplace(std::string(label), static_cast<NodeId>(labels_.size()));
    if (inserted) labels_.emplace_back(label);
    return it->second;
  }
  std::vector<std::string> take() { return std::move(labels_); }
  std::size_t size() const { return labels_.size(); }

 private:
  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::string> labels_;
};

}  // namespace

SpreadingNetwork load_edge_list(std::istream& in, const EdgeListOptions& opts) {
  LabelMap labels;
  std::vector<Edge> edges;
  std::set<std::pair<NodeId, NodeId>> seen;
  std::string line;
  std::size_t lineno = 0;

  auto add = [&](NodeId s, NodeId d, double a) {
    if (!seen.emplace(s, d).second) {
      if (opts.skip_duplicates) return;
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate edge");
    }
    edges.push_back({s, d, a});
  };

  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_fields(line);
    if (fields.empty() || fields[0].front() == '#' || fields[0].front() == '%') continue;
    double alpha = 0.0;
    if (fields.size() == 3) {
      const auto a = parse_double(fields[2]);
      if (!a) throw ValidationError("line " + std::to_string(lineno) + ": cannot parse alpha");
      alpha = *a;
    } else if (fields.size() == 2 && opts.default_alpha) {
      alpha = *opts.default_alpha;
    } else {
      throw ValidationError("line " + std::to_string(lineno) + ": expected 'src dst alpha'");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ValidationError("line " + std::to_string(lineno) + ": alpha outside [0,1]");
    }
    if (fields[0] == fields[1]) {
      if (opts.skip_self_loops) continue;
      throw ValidationError("line " + std::to_string(lineno) + ": self-loop");
    }
    const NodeId s = labels.get(fields[0]);
    const NodeId d = labels.get(fields[1]);
    add(s, d, alpha);
    if (opts.undirected) add(d, s, alpha);
  }
  if (edges.empty()) throw ValidationError("no edges");
  const auto n = labels.size();
  return SpreadingNetwork::from_edges(n, std::move(edges), labels.take());
}

SpreadingNetwork load_edge_list_file(const std::string& path, const EdgeListOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return load_edge_list(in, opts);
}

void write_edge_list(std::ostream& out, const SpreadingNetwork& net) {
  for (const auto& e : net.edges()) {
    out << net.label(e.src) << ' ' << net.label(e.dst) << ' ' << format_double(e.alpha) << '\n';
  }
}

std::string network_to_json(const SpreadingNetwork& net) {
  nlohmann::json j;
  j["nodes"] = net.labels();
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : net.edges()) {
    edges.push_back({{"src", net.label(e.src)}, {"dst", net.label(e.dst)}, {"alpha", e.alpha}});
  }
  return j.dump(2);
}

SpreadingNetwork network_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("network json: ") + e.what());
  }
  if (!j.contains("nodes") || !j.contains("edges")) {
    throw ValidationError("network json needs 'nodes' and 'edges'");
  }
  std::vector<std::string> labels = j["nodes"].get<std::vector<std::string>>();
  std::unordered_map<std::string, NodeId> idx;
  for (std::size_t i = 0; i < labels.size(); ++i) idx.emplace(labels[i], static_cast<NodeId>(i));
  auto lookup = [&](const std::string& l) {
    auto it = idx.find(l);
    if (it == idx.end()) throw ValidationError("network json: edge references unknown node '" + l + "'");
    return it->second;
  };
  std::vector<Edge> edges;
  for (const auto& e : j["edges"]) {
    edges.push_back({lookup(e.at("src").get<std::string>()), lookup(e.at("dst").get<std::string>()),
                     e.at("alpha").get<double>()});
  }
  const auto n = labels.size();
  return SpreadingNetwork::from_edges(n, std::move(edges), std::move(labels));
}

// ---------------------------------------------------------------------------
// Passenger records

SpreadingNetwork from_passenger_records(std::span<const PassengerRecord> records, double alpha_min,
                                        double keep_fraction) {
  if (records.empty()) throw ValidationError("empty passenger record set");
  if (!(alpha_min > 0.0 && alpha_min < 1.0)) throw ValidationError("alpha_min must lie in (0,1)");
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) throw ValidationError("keep_fraction must lie in [0,1]");

  // Aggregate per ordered route, keeping first-appearance order of routes and labels.
  std::map<std::pair<std::string, std::string>, std::size_t> route_index;
  std::vector<std::pair<std::pair<std::string, std::string>, std::int64_t>> routes;
  for (const auto& r : records) {
    if (r.passengers < 0) throw ValidationError("negative passenger count on " + r.src + "->" + r.dst);
    if (r.src == r.dst) throw ValidationError("self-route on " + r.src);
    auto key = std::make_pair(r.src, r.dst);
    auto [it, inserted] = route_index.try_emplace(key, routes.size());
    if (inserted) routes.push_back({key, 0});
    routes[it->second].second += r.passengers;
  }
  std::int64_t busiest = 0;
  for (const auto& [_, p] : routes) busiest = std::max(busiest, p);
  if (busiest <= 0) throw ValidationError("no route carries passengers");

  const double cutoff = keep_fraction * static_cast<double>(busiest);
  std::vector<std::pair<std::pair<std::string, std::string>, std::int64_t>> kept;
  for (const auto& r : routes) {
    if (r.second > 0 && static_cast<double>(r.second) >= cutoff) kept.push_back(r);
  }
  std::int64_t lightest = busiest;
  for (const auto& [_, p] : kept) lightest = std::min(lightest, p);

  const double scale = alpha_min / static_cast<double>(lightest);
  if (scale * static_cast<double>(busiest) >= 1.0) {
    throw ValidationError("busiest route would get alpha >= 1; lower alpha_min");
  }

  LabelMap labels;
  std::vector<Edge> edges;
  for (const auto& [key, p] : kept) {
    const NodeId s = labels.get(key.first);
    const NodeId d = labels.get(key.second);
    // the lightest route gets exactly alpha_min
    const double a = (p == lightest) ? alpha_min : scale * static_cast<double>(p);
    edges.push_back({s, d, a});
  }
  const auto n = labels.size();
  return SpreadingNetwork::from_edges(n, std::move(edges), labels.take());
}

// ---------------------------------------------------------------------------
// Generators

namespace {

double draw_alpha(SeededStream& rng, const AlphaSampler& a) {
  return a.lo == a.hi ? a.lo : rng.uniform(a.lo, a.hi);
}

void add_undirected(std::vector<Edge>& edges, NodeId a, NodeId b, double alpha) {
  edges.push_back({a, b, alpha});
  edges.push_back({b, a, alpha});
}

}  // namespace

SpreadingNetwork generate_random_tree(std::size_t n, AlphaSampler alpha, std::uint64_t seed) {
  if (n == 0) throw ValidationError("tree needs n >= 1");
  SeededStream rng(seed);
  std::vector<Edge> edges;
  if (n == 2) {
    add_undirected(edges, 0, 1, draw_alpha(rng, alpha));
  } else if (n > 2) {
    std::vector<std::size_t> pruefer(n - 2);
    for (auto& x : pruefer) x = rng.below(n);
    std::vector<std::size_t> degree(n, 1);
    for (auto x : pruefer) ++degree[x];
    // O(n log n) decoding with an ordered set of current leaves
    std::set<std::size_t> leaves;
    for (std::size_t i = 0; i < n; ++i) {
      if (degree[i] == 1) leaves.insert(i);
    }
    for (auto x : pruefer) {
      const auto leaf = *leaves.begin();
      leaves.erase(leaves.begin());
      add_undirected(edges, static_cast<NodeId>(leaf), static_cast<NodeId>(x), draw_alpha(rng, alpha));
      if (--degree[x] == 1) leaves.insert(x);
    }
    const auto u = *leaves.begin();
    const auto v = *std::next(leaves.begin());
    add_undirected(edges, static_cast<NodeId>(u), static_cast<NodeId>(v), draw_alpha(rng, alpha));
  }
  return SpreadingNetwork::from_edges(n, std::move(edges));
}

SpreadingNetwork generate_random_graph(std::size_t n, double p, AlphaSampler alpha, std::uint64_t seed) {
  if (n == 0) throw ValidationError("graph needs n >= 1");
  SeededStream rng(seed);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) add_undirected(edges, static_cast<NodeId>(i), static_cast<NodeId>(j), draw_alpha(rng, alpha));
    }
  }
  return SpreadingNetwork::from_edges(n, std::move(edges));
}

SpreadingNetwork generate_scale_free(std::size_t n, std::size_t m, AlphaSampler alpha, std::uint64_t seed) {
  if (m == 0 || n <= m) throw ValidationError("scale-free generator needs n > m >= 1");
  SeededStream rng(seed);
  std::vector<Edge> edges;
  std::vector<NodeId> targets;  // node repeated once per incident edge end
  // seed clique on m+1 nodes
  for (std::size_t i = 0; i <= m; ++i) {
    for (std::size_t j = i + 1; j <= m; ++j) {
      add_undirected(edges, static_cast<NodeId>(i), static_cast<NodeId>(j), draw_alpha(rng, alpha));
      targets.push_back(static_cast<NodeId>(i));
      targets.push_back(static_cast<NodeId>(j));
    }
  }
  for (std::size_t v = m + 1; v < n; ++v) {
    std::set<NodeId> chosen;
    while (chosen.size() < m) chosen.insert(targets[rng.below(targets.size())]);
    for (NodeId u : chosen) {
      add_undirected(edges, static_cast<NodeId>(v), u, draw_alpha(rng, alpha));
      targets.push_back(u);
      targets.push_back(static_cast<NodeId>(v));
    }
  }
  return SpreadingNetwork::from_edges(n, std::move(edges));
}

std::vector<PassengerRecord> synthetic_flight_records(std::size_t airports, std::uint64_t seed) {
  SeededStream rng(seed);
  std::vector<std::string> names;
  names.reserve(airports);
  for (std::size_t i = 0; i < airports; ++i) {
    std::string name = std::to_string(i);
    if (name.size() < 2) name.insert(0, "0");
    names.push_back(i == 0 ? "ATL" : "AP" + name);
  }
  // Zipf-like enplanement weights. At exponent 0.45 the smallest airport's
  // hub route still clears the 10% pruning cut, so no airport drops out
  // (checked over seeds 1..200 at 61 airports); ~600 directed routes remain.
  std::vector<double> weight(airports);
  for (std::size_t i = 0; i < airports; ++i) {
    weight[i] = std::pow(static_cast<double>(i + 1), -0.45) * std::exp(0.15 * (rng.uniform() - 0.5));
  }
  std::vector<PassengerRecord> records;
  for (std::size_t i = 0; i < airports; ++i) {
    for (std::size_t j = i + 1; j < airports; ++j) {
      // two carriers per route in each direction; aggregation sums them
      const double base = 2.0e6 * weight[i] * weight[j] * std::exp(0.6 * (rng.uniform() - 0.5));
      for (int carrier = 0; carrier < 2; ++carrier) {
        const double share = carrier == 0 ? 0.6 : 0.4;
        const auto fwd = static_cast<std::int64_t>(base * share * (0.95 + 0.1 * rng.uniform()));
        const auto bwd = static_cast<std::int64_t>(base * share * (0.95 + 0.1 * rng.uniform()));
        records.push_back({names[i], names[j], fwd});
        records.push_back({names[j], names[i], bwd});
      }
    }
  }
  return records;
}

SpreadingNetwork synthetic_flight_network(std::uint64_t seed) {
  const auto records = synthetic_flight_records(61, seed);
  return from_passenger_records(records, 0.05, 0.10);
}

}  // namespace dmpopt
