#include "dmpopt/mitigation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "dmpopt/heuristics.hpp"
#include "dmpopt/text.hpp"

namespace dmpopt {

std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::planned: return "planned";
    case Policy::greedy: return "greedy";
    case Policy::dmp_greedy: return "dmp-greedy";
    case Policy::dmp_optimal: return "dmp-optimal";
  }
  return "?";
}

Policy parse_policy(std::string_view name) {
  for (Policy p : {Policy::planned, Policy::greedy, Policy::dmp_greedy, Policy::dmp_optimal}) {
    if (policy_name(p) == name) return p;
  }
  throw ValidationError("unknown policy '" + std::string(name) + "'");
}

namespace {

std::vector<NodeId> susceptible_nodes(const EpidemicState& s) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    if (s.nodes[i] == State::S) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

// Vaccination schedule over steps t0 .. t0+h-1, indexed from 0, optimized
// from the observed state.
ControlSchedule plan_from(const SpreadingNetwork& net, const EpidemicState& state, int h,
                          const MitigationConfig& config) {
  const std::size_t n = net.node_count();
  auto w = susceptible_nodes(state);
  if (w.empty()) return ControlSchedule(n, h);
  ProblemSpec p;
  p.network = net;
  std::vector<InitialCondition::Triple> tr(n);
  for (std::size_t i = 0; i < n; ++i) {
    tr[i] = {state.nodes[i] == State::S ? 1.0 : 0.0, state.nodes[i] == State::I ? 1.0 : 0.0,
             state.nodes[i] == State::R ? 1.0 : 0.0};
  }
  p.init = InitialCondition(std::move(tr));
  p.horizon = h;
  p.mode = Mode::vaccination;
  p.target = TargetSpec::total_spread(n, h, Sense::minimize_infected);
  p.budget.nu.assign(static_cast<std::size_t>(h), 0.0);
  const auto first = config.budget.begin() + state.t;
  p.budget.mu.assign(first, first + h);
  p.controllable = std::move(w);
  OptimizerConfig oc = config.optimizer;
  oc.init = InitScheme::uniform;
  oc.initial.reset();
  auto a = forward_backward_iterate(p, oc);

  // Second start: the observed risk order poured into the budget step by step.
  // On dense graphs the uniform start can settle well above this.
  const auto risk = high_risk_scores(state, net);
  auto order = p.controllable;
  std::stable_sort(order.begin(), order.end(), [&](NodeId x, NodeId y) {
    return risk[static_cast<std::size_t>(x)] > risk[static_cast<std::size_t>(y)];
  });
  ControlSchedule warm(n, h);
  std::size_t next = 0;
  for (int t = 0; t < h && next < order.size(); ++t) {
    double left = p.budget.mu[static_cast<std::size_t>(t)];
    for (; next < order.size() && left > 0.0; ++next) {
      const double v = std::min(1.0, left);
      warm.set_mu(order[next], t, v);
      left -= v;
    }
  }
  oc.init = InitScheme::given;
  oc.initial = std::move(warm);
  auto b = forward_backward_iterate(p, oc);
  return b.best_objective < a.best_objective ? std::move(b.best) : std::move(a.best);
}

std::vector<double> greedy_row(const SpreadingNetwork& net, const EpidemicState& state, double budget) {
  const auto risk = high_risk_scores(state, net);
  auto order = susceptible_nodes(state);
  std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
    return risk[static_cast<std::size_t>(a)] > risk[static_cast<std::size_t>(b)];
  });
  ControlSchedule c(net.node_count(), 1);
  apply_ranking(order, budget, ControlKind::mu, 0, c);
  const auto row = c.mu_row(0);
  return {row.begin(), row.end()};
}

void check_config(const SpreadingNetwork& net, const MitigationConfig& config) {
  if (config.horizon < 1) throw ValidationError("horizon must be >= 1");
  if (config.budget.size() < static_cast<std::size_t>(config.horizon)) {
    throw ValidationError("budget profile shorter than the horizon");
  }
  for (double b : config.budget) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw ValidationError("budget entries must be nonnegative");
  }
  if (config.replicas == 0) throw ValidationError("need at least one replica");
  if (net.node_count() == 0) throw ValidationError("empty network");
}

}  // namespace

std::vector<double> decide_vaccination(const SpreadingNetwork& net, const EpidemicState& state, Policy policy,
                                       const MitigationConfig& config) {
  check_config(net, config);
  if (state.t < 0 || state.t >= config.horizon) throw ValidationError("decision time outside [0, T)");
  if (state.nodes.size() != net.node_count()) throw ValidationError("state size does not match network");
  const double b = config.budget[static_cast<std::size_t>(state.t)];
  if (policy == Policy::greedy) return greedy_row(net, state, b);
  const int h = policy == Policy::dmp_greedy ? 1 : config.horizon - state.t;
  const auto plan = plan_from(net, state, h, config);
  const auto row = plan.mu_row(0);
  return {row.begin(), row.end()};
}

PolicyRun run_policy(const SpreadingNetwork& net, const InitialCondition& init, Policy policy,
                     const MitigationConfig& config) {
  check_config(net, config);
  if (init.size() != net.node_count()) throw ValidationError("initial condition size does not match network");
  if (!init.deterministic()) throw ValidationError("mitigation needs a deterministic initial state");
  const std::size_t n = net.node_count();
  const int T = config.horizon;
  const auto start = EpidemicState::from_initial(init);

  PolicyRun run;
  run.policy = policy;
  run.horizon = T;
  run.infected.assign(config.replicas, std::vector<int>(static_cast<std::size_t>(T) + 1, 0));
  run.spent.assign(config.replicas, std::vector<double>(static_cast<std::size_t>(T), 0.0));

  ControlSchedule planned;
  if (policy == Policy::planned) {
    planned = plan_from(net, start, T, config);
    run.optimizer_calls = 1;
  }

  // decisions depend only on (t, state), so replicas that meet share them
  std::map<std::pair<int, std::vector<State>>, std::vector<double>> cache;
  std::mutex cache_mu;
  std::atomic<std::size_t> calls{0}, hits{0};

  auto decide = [&](const EpidemicState& s) -> std::vector<double> {
    if (policy == Policy::planned) {
      const auto row = planned.mu_row(s.t);
      return {row.begin(), row.end()};
    }
    if (policy == Policy::greedy) return decide_vaccination(net, s, policy, config);
    auto key = std::make_pair(s.t, s.nodes);
    {
      std::lock_guard lock(cache_mu);
      if (auto it = cache.find(key); it != cache.end()) {
        ++hits;
        return it->second;
      }
    }
    auto row = decide_vaccination(net, s, policy, config);
    ++calls;
    std::lock_guard lock(cache_mu);
    cache.emplace(std::move(key), row);
    return row;
  };

  auto simulate = [&](std::size_t r) {
    const CounterRng rng(config.seed, r);
    EpidemicState s = start;
    ControlSchedule sched(n, T);
    run.infected[r][0] = static_cast<int>(s.count(State::I));
    for (int t = 0; t < T; ++t) {
      const auto row = decide(s);
      double spent = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sched.set_mu(static_cast<NodeId>(i), t, row[i]);
        spent += row[i];
      }
      run.spent[r][static_cast<std::size_t>(t)] = spent;
      s = mc_step(s, net, sched, rng);
      run.infected[r][static_cast<std::size_t>(t) + 1] = static_cast<int>(s.count(State::I));
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(config.replicas)));
  if (workers == 1) {
    for (std::size_t r = 0; r < config.replicas; ++r) simulate(r);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < config.replicas; r += workers) simulate(r);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  run.optimizer_calls += calls.load();
  run.cache_hits = hits.load();

  const double R = static_cast<double>(config.replicas);
  run.mean.assign(static_cast<std::size_t>(T) + 1, 0.0);
  run.stderr_mean.assign(static_cast<std::size_t>(T) + 1, 0.0);
  for (std::size_t t = 0; t <= static_cast<std::size_t>(T); ++t) {
    double sum = 0.0;
    for (const auto& rep : run.infected) sum += rep[t];
    const double m = sum / R;
    double ss = 0.0;
    for (const auto& rep : run.infected) ss += (rep[t] - m) * (rep[t] - m);
    run.mean[t] = m;
    run.stderr_mean[t] = config.replicas > 1 ? std::sqrt(ss / (R - 1.0) / R) : 0.0;
  }
  return run;
}

void write_policy_csv(std::ostream& out, std::span<const PolicyRun> runs) {
  out << "policy,t,mean_infected,stderr\n";
  for (const auto& run : runs) {
    for (std::size_t t = 0; t < run.mean.size(); ++t) {
      out << policy_name(run.policy) << ',' << t << ',' << fmt_double(run.mean[t]) << ','
          << fmt_double(run.stderr_mean[t]) << '\n';
    }
  }
}

}  // namespace dmpopt
