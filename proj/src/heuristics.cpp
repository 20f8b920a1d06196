#include "dmpopt/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "dmpopt/rng.hpp"
#include "dmpopt/text.hpp"

namespace dmpopt {

namespace {

void check_budget(const SpreadingNetwork& net, double budget) {
  if (!(budget >= 0.0)) throw ValidationError("budget must be nonnegative");
  if (budget > static_cast<double>(net.node_count())) {
    throw ValidationError("budget " + std::to_string(budget) + " exceeds the node count " +
                          std::to_string(net.node_count()));
  }
}

}  // namespace

void apply_ranking(std::span<const NodeId> ranking, double budget, ControlKind k, int t, ControlSchedule& out) {
  if (!(budget >= 0.0)) throw ValidationError("budget must be nonnegative");
  double left = budget;
  for (NodeId i : ranking) {
    if (left <= 0.0) break;
    if (!out.controllable(i)) continue;
    const double v = std::min(1.0, left);
    out.set(k, i, t, v);
    left -= v;
  }
}

ControlSchedule allocation_from_ranking(const SpreadingNetwork& net, std::span<const NodeId> ranking, double budget,
                                        int horizon) {
  check_budget(net, budget);
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  ControlSchedule c(net.node_count(), horizon);
  apply_ranking(ranking, budget, ControlKind::nu, 0, c);
  return c;
}

ControlSchedule allocate_random(const SpreadingNetwork& net, double budget, int horizon, std::uint64_t seed) {
  check_budget(net, budget);
  // partial Fisher-Yates
  std::vector<NodeId> order(net.node_count());
  std::iota(order.begin(), order.end(), 0);
  SeededStream rng(seed);
  const auto take = std::min(order.size(), static_cast<std::size_t>(std::ceil(budget)));
  for (std::size_t k = 0; k < take; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.below(order.size() - k));
    std::swap(order[k], order[j]);
  }
  order.resize(take);
  return allocation_from_ranking(net, order, budget, horizon);
}

ControlSchedule allocate_uniform(const SpreadingNetwork& net, double budget, int horizon) {
  check_budget(net, budget);
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  ControlSchedule c(net.node_count(), horizon);
  const double v = budget / static_cast<double>(net.node_count());
  for (NodeId i = 0; i < static_cast<NodeId>(net.node_count()); ++i) c.set_nu(i, 0, v);
  return c;
}

std::vector<RankedNode> rank_hda(const SpreadingNetwork& net, std::size_t k) {
  const std::size_t n = net.node_count();
  if (k > n) throw ValidationError("cannot rank more nodes than the network has");
  std::vector<long> deg(n);
  std::set<std::pair<long, NodeId>> queue;  // (-degree, id)
  for (std::size_t i = 0; i < n; ++i) {
    deg[i] = static_cast<long>(net.undirected_degree(static_cast<NodeId>(i)));
    queue.emplace(-deg[i], static_cast<NodeId>(i));
  }
  std::vector<char> removed(n, 0);
  std::vector<RankedNode> out;
  while (out.size() < k) {
    const auto [negd, v] = *queue.begin();
    queue.erase(queue.begin());
    removed[static_cast<std::size_t>(v)] = 1;
    out.push_back({v, static_cast<double>(-negd)});
    for (NodeId u : net.neighbors(v)) {
      const auto ui = static_cast<std::size_t>(u);
      if (removed[ui]) continue;
      queue.erase({-deg[ui], u});
      --deg[ui];
      queue.emplace(-deg[ui], u);
    }
  }
  return out;
}

std::vector<int> kshell_indices(const SpreadingNetwork& net) {
  // Batagelj-Zaversnik bucket peeling
  const std::size_t n = net.node_count();
  std::vector<int> deg(n);
  int maxd = 0;
  for (std::size_t i = 0; i < n; ++i) {
    deg[i] = static_cast<int>(net.undirected_degree(static_cast<NodeId>(i)));
    maxd = std::max(maxd, deg[i]);
  }
  std::vector<std::size_t> bin(static_cast<std::size_t>(maxd) + 1, 0);
  for (int d : deg) ++bin[static_cast<std::size_t>(d)];
  std::size_t start = 0;
  for (auto& b : bin) {
    const auto cnt = b;
    b = start;
    start += cnt;
  }
  std::vector<std::size_t> pos(n), vert(n);
  for (std::size_t v = 0; v < n; ++v) {
    pos[v] = bin[static_cast<std::size_t>(deg[v])]++;
    vert[pos[v]] = v;
  }
  for (std::size_t d = bin.size(); d-- > 1;) bin[d] = bin[d - 1];
  if (!bin.empty()) bin[0] = 0;
  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::size_t v = vert[idx];
    for (NodeId un : net.neighbors(static_cast<NodeId>(v))) {
      const auto u = static_cast<std::size_t>(un);
      if (deg[u] > deg[v]) {
        const int du = deg[u];
        const std::size_t pu = pos[u];
        const std::size_t pw = bin[static_cast<std::size_t>(du)];
        const std::size_t w = vert[pw];
        if (u != w) {
          pos[u] = pw;
          vert[pu] = w;
          pos[w] = pu;
          vert[pw] = u;
        }
        ++bin[static_cast<std::size_t>(du)];
        --deg[u];
      }
    }
  }
  return deg;
}

std::vector<RankedNode> rank_kshell(const SpreadingNetwork& net) {
  const auto shell = kshell_indices(net);
  std::vector<RankedNode> out(net.node_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {static_cast<NodeId>(i), static_cast<double>(shell[i])};
  std::stable_sort(out.begin(), out.end(), [](const RankedNode& a, const RankedNode& b) { return a.score > b.score; });
  return out;
}

namespace {

// Nodes at distance exactly l (and, optionally, everything within l) from src
// in the graph without `removed`.
struct Bfs {
  std::vector<int> dist;
  std::vector<NodeId> touched;

  explicit Bfs(std::size_t n) : dist(n, -1) {}

  template <class F>
  void run(const SpreadingNetwork& net, NodeId src, int depth, std::span<const char> removed, F&& visit) {
    for (NodeId v : touched) dist[static_cast<std::size_t>(v)] = -1;
    touched.clear();
    dist[static_cast<std::size_t>(src)] = 0;
    touched.push_back(src);
    for (std::size_t head = 0; head < touched.size(); ++head) {
      const NodeId v = touched[head];
      const int dv = dist[static_cast<std::size_t>(v)];
      visit(v, dv);
      if (dv == depth) continue;
      for (NodeId u : net.neighbors(v)) {
        const auto ui = static_cast<std::size_t>(u);
        if (dist[ui] >= 0 || (!removed.empty() && removed[ui])) continue;
        dist[ui] = dv + 1;
        touched.push_back(u);
      }
    }
  }
};

long residual_degree(const SpreadingNetwork& net, NodeId v, std::span<const char> removed) {
  long d = 0;
  for (NodeId u : net.neighbors(v)) d += removed.empty() || !removed[static_cast<std::size_t>(u)];
  return d;
}

double ci_with(const SpreadingNetwork& net, NodeId i, int l, std::span<const char> removed, Bfs& bfs) {
  const long di = residual_degree(net, i, removed);
  if (di <= 1) return 0.0;  // (d_i - 1) = 0, or an isolated node with an empty sphere
  double sum = 0.0;
  bfs.run(net, i, l, removed, [&](NodeId v, int d) {
    if (d == l) sum += static_cast<double>(residual_degree(net, v, removed) - 1);
  });
  return static_cast<double>(di - 1) * sum;
}

}  // namespace

double collective_influence(const SpreadingNetwork& net, NodeId i, int l, std::span<const char> removed) {
  if (l < 1) throw ValidationError("CI radius must be >= 1");
  if (!removed.empty() && removed[static_cast<std::size_t>(i)]) return 0.0;
  Bfs bfs(net.node_count());
  return ci_with(net, i, l, removed, bfs);
}

std::vector<RankedNode> rank_ci(const SpreadingNetwork& net, int l, std::size_t k) {
  if (l < 1) throw ValidationError("CI radius must be >= 1");
  const std::size_t n = net.node_count();
  if (k > n) throw ValidationError("cannot rank more nodes than the network has");
  std::vector<char> removed(n, 0);
  std::vector<double> score(n);
  std::set<std::pair<double, NodeId>> queue;  // (-CI, id)
  Bfs bfs(n), around(n);
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = ci_with(net, static_cast<NodeId>(i), l, removed, bfs);
    queue.emplace(-score[i], static_cast<NodeId>(i));
  }
  std::vector<RankedNode> out;
  std::vector<NodeId> affected;
  while (out.size() < k) {
    const auto [negs, v] = *queue.begin();
    queue.erase(queue.begin());
    out.push_back({v, -negs});
    // scores can only change within l+1 hops of the deleted node
    affected.clear();
    around.run(net, v, l + 1, removed, [&](NodeId u, int) {
      if (u != v) affected.push_back(u);
    });
    removed[static_cast<std::size_t>(v)] = 1;
    for (NodeId u : affected) {
      const auto ui = static_cast<std::size_t>(u);
      queue.erase({-score[ui], u});
      score[ui] = ci_with(net, u, l, removed, bfs);
      queue.emplace(-score[ui], u);
    }
  }
  return out;
}

std::vector<double> high_risk_scores(const EpidemicState& state, const SpreadingNetwork& net) {
  if (state.nodes.size() != net.node_count()) throw ValidationError("state size does not match network");
  std::vector<double> out(net.node_count(), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (state.nodes[k] != State::S) continue;
    double escape = 1.0;
    for (EdgeId e : net.in_edges(static_cast<NodeId>(k))) {
      if (state.nodes[static_cast<std::size_t>(net.src(e))] == State::I) escape *= 1.0 - net.alpha(e);
    }
    out[k] = 1.0 - escape;
  }
  return out;
}

std::vector<NodeId> nodes_of(std::span<const RankedNode> ranked) {
  std::vector<NodeId> out;
  out.reserve(ranked.size());
  for (const auto& r : ranked) out.push_back(r.node);
  return out;
}

void write_ranking_csv(std::ostream& out, const SpreadingNetwork& net, std::span<const RankedNode> ranked) {
  out << "rank,node_label,score\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    out << r + 1 << ',' << net.label(ranked[r].node) << ',' << fmt_double(ranked[r].score) << '\n';
  }
}

}  // namespace dmpopt
