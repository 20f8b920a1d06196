#include "dmpopt/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "dmpopt/text.hpp"

namespace dmpopt {

std::size_t EpidemicState::count(State s) const { return static_cast<std::size_t>(std::count(nodes.begin(), nodes.end(), s)); }

EpidemicState EpidemicState::from_initial(const InitialCondition& init) {
  if (!init.deterministic()) throw ValidationError("initial condition is not deterministic");
  EpidemicState st;
  st.nodes.resize(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) {
    const auto& p = init[static_cast<NodeId>(i)];
    st.nodes[i] = p.s == 1.0 ? State::S : p.i == 1.0 ? State::I : State::R;
  }
  return st;
}

EpidemicState sample_initial(const InitialCondition& init, const CounterRng& rng) {
  EpidemicState st;
  st.nodes.resize(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) {
    const auto& p = init[static_cast<NodeId>(i)];
    const double u = rng.uniform(kInitTime, i);
    st.nodes[i] = u < p.s ? State::S : u < p.s + p.i ? State::I : State::R;
  }
  return st;
}

EpidemicState mc_step(const EpidemicState& state, const SpreadingNetwork& net, const ControlSchedule& controls,
                      const CounterRng& rng) {
  const std::size_t n = net.node_count();
  if (state.nodes.size() != n) throw ValidationError("state size does not match network");
  if (state.t < 0 || state.t >= controls.horizon()) throw ValidationError("control schedule does not cover the step");
  const int t = state.t;
  const auto tt = static_cast<std::uint64_t>(t);
  EpidemicState next = state;
  next.t = t + 1;
  for (std::size_t k = 0; k < n; ++k) {
    if (state.nodes[k] != State::S) continue;
    const auto i = static_cast<NodeId>(k);
    // vaccination wins ties, so it is checked first
    const double mu = controls.mu(i, t);
    if (mu > 0.0 && rng.uniform(tt, mu_slot(i)) < mu) {
      next.nodes[k] = State::R;
      continue;
    }
    bool infected = false;
    const double nu = controls.nu(i, t);
    if (nu > 0.0 && rng.uniform(tt, nu_slot(i)) < nu) infected = true;
    for (EdgeId e : net.in_edges(i)) {
      if (infected) break;
      if (state.nodes[static_cast<std::size_t>(net.src(e))] != State::I) continue;
      if (rng.uniform(tt, edge_slot(n, e)) < net.alpha(e)) infected = true;
    }
    if (infected) next.nodes[k] = State::I;
  }
  return next;
}

namespace {

double se(double p, std::size_t replicas) {
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(replicas));
}

}  // namespace

double McEstimate::stderr_s(NodeId i, int t) const { return se(mean.s(i, t), replicas); }
double McEstimate::stderr_i(NodeId i, int t) const { return se(mean.i(i, t), replicas); }
double McEstimate::stderr_r(NodeId i, int t) const { return se(mean.r(i, t), replicas); }

McEstimate mc_estimate_marginals(const SpreadingNetwork& net, const InitialCondition& init,
                                 const ControlSchedule& controls, int horizon, const McOptions& opts) {
  if (opts.replicas < 1) throw ValidationError("replicas must be >= 1");
  if (horizon < 0 || controls.horizon() < horizon) throw ValidationError("control schedule shorter than horizon");
  if (init.size() != net.node_count() || controls.node_count() != net.node_count()) {
    throw ValidationError("initial condition / controls do not match network");
  }
  const std::size_t n = net.node_count();
  const std::size_t cells = n * static_cast<std::size_t>(horizon + 1);

  // Integer counts summed across workers, so the result cannot depend on how
  // replicas were partitioned.
  struct Counts {
    std::vector<std::uint64_t> s, i, r;
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(opts.replicas)));
  std::vector<Counts> partial(workers);
  auto work = [&](unsigned w) {
    auto& c = partial[w];
    c.s.assign(cells, 0);
    c.i.assign(cells, 0);
    c.r.assign(cells, 0);
    for (std::size_t rep = w; rep < opts.replicas; rep += workers) {
      const CounterRng rng(opts.seed, rep);
      EpidemicState st = sample_initial(init, rng);
      for (int t = 0;; ++t) {
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t at = static_cast<std::size_t>(t) * n + k;
          switch (st.nodes[k]) {
            case State::S: ++c.s[at]; break;
            case State::I: ++c.i[at]; break;
            case State::R: ++c.r[at]; break;
          }
        }
        if (t == horizon) break;
        st = mc_step(st, net, controls, rng);
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }

  McEstimate est;
  est.replicas = opts.replicas;
  est.mean.nodes = n;
  est.mean.horizon = horizon;
  est.mean.ps.assign(cells, 0.0);
  est.mean.pi.assign(cells, 0.0);
  est.mean.pr.assign(cells, 0.0);
  const double inv = 1.0 / static_cast<double>(opts.replicas);
  for (std::size_t at = 0; at < cells; ++at) {
    std::uint64_t s = 0, i = 0, r = 0;
    for (const auto& c : partial) {
      s += c.s[at];
      i += c.i[at];
      r += c.r[at];
    }
    est.mean.ps[at] = static_cast<double>(s) * inv;
    est.mean.pi[at] = static_cast<double>(i) * inv;
    est.mean.pr[at] = static_cast<double>(r) * inv;
  }
  return est;
}

MarginalTable exact_marginals(const SpreadingNetwork& net, const InitialCondition& init,
                              const ControlSchedule& controls, int horizon) {
  const std::size_t n = net.node_count();
  if (n > kExactMaxNodes) {
    throw ValidationError("exact oracle supports at most " + std::to_string(kExactMaxNodes) + " nodes, got " +
                          std::to_string(n));
  }
  if (horizon < 0 || controls.horizon() < horizon) throw ValidationError("control schedule shorter than horizon");
  if (init.size() != n || controls.node_count() != n) throw ValidationError("initial condition / controls do not match network");

  std::vector<std::size_t> pow3(n + 1, 1);
  for (std::size_t k = 1; k <= n; ++k) pow3[k] = pow3[k - 1] * 3;
  const std::size_t states = pow3[n];
  auto digit = [&](std::size_t code, std::size_t k) { return (code / pow3[k]) % 3; };

  // product measure over the initial triples
  std::vector<double> dist(states, 0.0);
  for (std::size_t code = 0; code < states; ++code) {
    double p = 1.0;
    for (std::size_t k = 0; k < n && p != 0.0; ++k) {
      const auto& tr = init[static_cast<NodeId>(k)];
      const std::size_t d = digit(code, k);
      p *= d == 0 ? tr.s : d == 1 ? tr.i : tr.r;
    }
    dist[code] = p;
  }

  MarginalTable out;
  out.nodes = n;
  out.horizon = horizon;
  const std::size_t cells = n * static_cast<std::size_t>(horizon + 1);
  out.ps.assign(cells, 0.0);
  out.pi.assign(cells, 0.0);
  out.pr.assign(cells, 0.0);
  auto accumulate = [&](int t) {
    for (std::size_t code = 0; code < states; ++code) {
      if (dist[code] == 0.0) continue;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t at = out.at(static_cast<NodeId>(k), t);
        const std::size_t d = digit(code, k);
        (d == 0 ? out.ps : d == 1 ? out.pi : out.pr)[at] += dist[code];
      }
    }
  };
  accumulate(0);

  std::vector<double> next(states);
  std::vector<std::size_t> sus;
  std::vector<double> stay, to_i, to_r;
  for (int t = 0; t < horizon; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t code = 0; code < states; ++code) {
      const double p = dist[code];
      if (p == 0.0) continue;
      sus.clear();
      stay.clear();
      to_i.clear();
      to_r.clear();
      for (std::size_t k = 0; k < n; ++k) {
        if (digit(code, k) != 0) continue;
        const auto i = static_cast<NodeId>(k);
        const double nu = controls.nu(i, t), mu = controls.mu(i, t);
        double escape = (1.0 - nu) * (1.0 - mu);
        for (EdgeId e : net.in_edges(i)) {
          if (digit(code, static_cast<std::size_t>(net.src(e))) == 1) escape *= 1.0 - net.alpha(e);
        }
        sus.push_back(k);
        stay.push_back(escape);
        to_r.push_back(mu);
        to_i.push_back(std::max(0.0, 1.0 - escape - mu));
      }
      // depth-first over successor assignments of the susceptible nodes
      auto branch = [&](auto&& self, std::size_t idx, std::size_t target, double w) -> void {
        if (w == 0.0) return;
        if (idx == sus.size()) {
          next[target] += w;
          return;
        }
        const std::size_t k = sus[idx];
        self(self, idx + 1, target, w * stay[idx]);
        self(self, idx + 1, target + pow3[k], w * to_i[idx]);
        self(self, idx + 1, target + 2 * pow3[k], w * to_r[idx]);
      };
      branch(branch, 0, code, p);
    }
    dist.swap(next);
    accumulate(t + 1);
  }
  return out;
}

void write_mc_csv(std::ostream& out, const SpreadingNetwork& net, const McEstimate& est) {
  out << "node,t,P_S,P_I,P_R,stderr_S,stderr_I,stderr_R\n";
  for (std::size_t k = 0; k < est.mean.nodes; ++k) {
    const auto i = static_cast<NodeId>(k);
    for (int t = 0; t <= est.mean.horizon; ++t) {
      out << net.label(i) << ',' << t << ',' << fmt_double(est.mean.s(i, t)) << ',' << fmt_double(est.mean.i(i, t))
          << ',' << fmt_double(est.mean.r(i, t)) << ',' << fmt_double(est.stderr_s(i, t)) << ','
          << fmt_double(est.stderr_i(i, t)) << ',' << fmt_double(est.stderr_r(i, t)) << '\n';
    }
  }
}

}  // namespace dmpopt
