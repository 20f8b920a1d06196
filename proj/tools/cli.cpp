#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dmpopt/heuristics.hpp"
#include "dmpopt/io.hpp"
#include "dmpopt/mitigation.hpp"
#include "dmpopt/stochastic.hpp"
#include "dmpopt/text.hpp"

#ifndef DMPOPT_VERSION
#define DMPOPT_VERSION "unknown"
#endif

namespace dmpopt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GraphFlags {
  std::string path;
  bool undirected = false;
  bool lenient = false;
  double default_alpha = -1.0;
};

void add_graph_flags(CLI::App* cmd, GraphFlags& g, bool undirected_default) {
  cmd->add_option("--graph", g.path,
                  "edge list, network JSON, synthetic:flight[:seed] or synthetic:scale-free:N:m[:seed]")
      ->required();
  g.undirected = undirected_default;
  if (undirected_default) {
    cmd->add_flag("!--directed", g.undirected, "treat each edge-list line as one directed edge");
    // benchmark datasets list both orientations and the odd self-loop
    g.lenient = true;
    cmd->add_flag("!--strict", g.lenient, "fail on duplicate edges and self-loops");
  } else {
    cmd->add_flag("--undirected", g.undirected, "add both orientations for each edge-list line");
    cmd->add_flag("--lenient", g.lenient, "drop duplicate edges and self-loops instead of failing");
  }
  cmd->add_option("--default-alpha", g.default_alpha, "alpha for edge-list lines with two fields");
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("bad " + what + " '" + s + "'");
}

SpreadingNetwork load_graph(const GraphFlags& g, double synthetic_alpha) {
  const std::string prefix = "synthetic:";
  if (g.path.rfind(prefix, 0) == 0) {
    std::vector<std::string> parts;
    std::stringstream ss(g.path.substr(prefix.size()));
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (!parts.empty() && parts[0] == "flight" && parts.size() <= 2) {
      return synthetic_flight_network(parts.size() == 2 ? parse_u64(parts[1], "seed") : 1);
    }
    if (!parts.empty() && parts[0] == "scale-free" && (parts.size() == 3 || parts.size() == 4)) {
      const double a = synthetic_alpha > 0 ? synthetic_alpha : 0.5;
      return generate_scale_free(parse_u64(parts[1], "N"), parse_u64(parts[2], "m"), {a, a},
                                 parts.size() == 4 ? parse_u64(parts[3], "seed") : 1);
    }
    throw ValidationError("unknown synthetic graph '" + g.path + "'");
  }
  EdgeListOptions opts;
  opts.undirected = g.undirected;
  opts.skip_duplicates = g.lenient;
  opts.skip_self_loops = g.lenient;
  if (g.default_alpha >= 0) {
    opts.default_alpha = g.default_alpha;
  } else if (synthetic_alpha > 0) {
    opts.default_alpha = synthetic_alpha;
  }
  return load_network(g.path, opts);
}

SpreadingNetwork with_uniform_alpha(const SpreadingNetwork& net, double alpha) {
  std::vector<Edge> edges(net.edges().begin(), net.edges().end());
  for (auto& e : edges) e.alpha = alpha;
  return SpreadingNetwork::from_edges(net.node_count(), std::move(edges), net.labels());
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

// Sidecar next to every output: enough to re-run the command exactly.
void write_manifests(const CLI::App& cmd, const std::vector<std::string>& args, const std::vector<fs::path>& outputs) {
  json m;
  m["command"] = cmd.get_name();
  m["argv"] = args;
  json flags = json::object();
  for (const CLI::Option* o : cmd.get_options()) {
    if (o->get_name() == "--help") continue;
    const auto name = o->get_name();
    if (o->count() > 0) {
      const auto& r = o->results();
      flags[name] = r.size() == 1 ? json(r[0]) : json(r);
    } else {
      flags[name] = o->get_default_str();
    }
  }
  m["flags"] = flags;
  m["version"] = DMPOPT_VERSION;
  m["compiler"] = __VERSION__;
  std::vector<std::string> outs;
  for (const auto& o : outputs) outs.push_back(o.string());
  m["outputs"] = outs;
  const auto text = m.dump(2) + "\n";
  for (const auto& o : outputs) {
    auto f = open_out(fs::path(o.string() + ".manifest.json"));
    f << text;
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ',');) {
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

// dmp ------------------------------------------------------------------------

struct DmpArgs {
  GraphFlags graph;
  std::string init, controls, out, scatter;
  int horizon = 0;
  std::size_t mc = 0;
  std::uint64_t seed = 1;
  int scatter_time = -1;
  unsigned threads = 1;
};

int cmd_dmp(const CLI::App& cmd, const DmpArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto net = load_graph(a.graph, -1.0);
  std::ifstream init_in(resolve_data_path(a.init));
  if (!init_in) throw ValidationError("cannot open init file " + a.init);
  const auto init = read_initial_condition(init_in, net);
  ControlSchedule controls(net.node_count(), a.horizon);
  if (!a.controls.empty()) {
    std::ifstream c_in(resolve_data_path(a.controls));
    if (!c_in) throw ValidationError("cannot open controls file " + a.controls);
    controls = read_schedule_csv(c_in, net, a.horizon);
  }
  const int ts = a.scatter_time < 0 ? a.horizon : a.scatter_time;
  if (ts > a.horizon) throw ValidationError("--scatter-time beyond the horizon");

  const auto tr = run_forward(net, init, controls, a.horizon);
  std::vector<fs::path> written{a.out};
  {
    auto f = open_out(a.out);
    write_marginals_csv(f, net, tr);
  }
  if (a.mc > 0) {
    McOptions opts;
    opts.replicas = a.mc;
    opts.seed = a.seed;
    opts.threads = a.threads;
    const auto est = mc_estimate_marginals(net, init, controls, a.horizon, opts);
    const fs::path sp = a.scatter.empty() ? fs::path(a.out).replace_extension("").string() + "_scatter.csv" : a.scatter;
    auto f = open_out(sp);
    f << "node,t,dmp_value,mc_value,stderr\n";
    for (std::size_t i = 0; i < net.node_count(); ++i) {
      const auto id = static_cast<NodeId>(i);
      f << net.label(id) << ',' << ts << ',' << fmt_double(tr.pi(id, ts)) << ',' << fmt_double(est.mean.i(id, ts)) << ','
        << fmt_double(est.stderr_i(id, ts)) << '\n';
    }
    written.push_back(sp);
  }
  write_manifests(cmd, args, written);
  out << "nodes " << net.node_count() << " edges " << net.edge_count() << " expected_infected_T "
      << fmt_double(total_infected(tr, a.horizon)) << '\n';
  return 0;
}

// optimize -------------------------------------------------------------------

struct OptimizeArgs {
  std::string problem, report, schedule;
  int max_iters = -1, restarts = -1;
  double time_limit = 0.0;
  unsigned threads = 1;
};

int cmd_optimize(const CLI::App& cmd, const OptimizeArgs& a, const std::vector<std::string>& args,
                 std::ostream& out) {
  auto lp = load_problem_file(resolve_data_path(a.problem));
  if (a.max_iters > 0) lp.config.max_iters = a.max_iters;
  if (a.restarts >= 0) lp.config.restarts = a.restarts;
  lp.config.time_limit_seconds = a.time_limit;
  const auto rep = forward_backward_iterate(lp.problem, lp.config);
  {
    auto f = open_out(a.report);
    f << report_to_json(lp.problem, rep) << '\n';
  }
  {
    auto f = open_out(a.schedule);
    write_schedule_csv(f, lp.problem.network, rep.best);
  }
  write_manifests(cmd, args, {a.report, a.schedule});
  double worst = 0.0;
  for (double r : rep.residual) worst = std::max(worst, std::abs(r));
  out << "objective " << fmt_double(rep.best_objective) << '\n';
  out << "max_budget_residual " << fmt_double(worst) << '\n';
  return 0;
}

// benchmark ------------------------------------------------------------------

struct BenchArgs {
  GraphFlags graph;
  std::string methods = "random,uniform,hda,kshell,ci:2,dmp";
  std::string out;
  double budget_frac = 0.05, alpha = 0.99;
  int horizon = 3, max_iters = 200, restarts = 0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

int cmd_benchmark(const CLI::App& cmd, const BenchArgs& a, const std::vector<std::string>& args,
                  std::ostream& out) {
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw ValidationError("--alpha must be in (0, 1)");
  if (!(a.budget_frac >= 0.0 && a.budget_frac <= 1.0)) throw ValidationError("--budget-frac must be in [0, 1]");
  if (a.horizon < 1) throw ValidationError("--horizon must be >= 1");
  const auto methods = split_list(a.methods);
  if (methods.empty()) throw ValidationError("--methods is empty");
  std::vector<int> ci_l(methods.size(), 0);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto& name = methods[m];
    if (name.rfind("ci:", 0) == 0) {
      ci_l[m] = static_cast<int>(parse_u64(name.substr(3), "CI radius"));
      if (ci_l[m] < 1) throw ValidationError("CI radius must be >= 1");
    } else if (name != "random" && name != "uniform" && name != "hda" && name != "kshell" && name != "dmp") {
      throw ValidationError("unknown method '" + name + "'");
    }
  }

  const auto net = with_uniform_alpha(load_graph(a.graph, a.alpha), a.alpha);
  const std::size_t n = net.node_count();
  const double budget = a.budget_frac * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::ceil(budget));
  const auto init = InitialCondition::all_susceptible(n);
  const auto spread = [&](const ControlSchedule& c) {
    return total_infected(run_forward(net, init, c, a.horizon), a.horizon) / static_cast<double>(n);
  };

  std::ostringstream csv;
  csv << "method,normalized_spread,budget,nodes,edges,horizon,alpha\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto& name = methods[m];
    const auto t0 = std::chrono::steady_clock::now();
    ControlSchedule c;
    if (name == "random") {
      c = allocate_random(net, budget, a.horizon, a.seed);
    } else if (name == "uniform") {
      c = allocate_uniform(net, budget, a.horizon);
    } else if (name == "hda") {
      c = allocation_from_ranking(net, nodes_of(rank_hda(net, k)), budget, a.horizon);
    } else if (name == "kshell") {
      c = allocation_from_ranking(net, nodes_of(rank_kshell(net)), budget, a.horizon);
    } else if (ci_l[m] > 0) {
      c = allocation_from_ranking(net, nodes_of(rank_ci(net, ci_l[m], k)), budget, a.horizon);
    } else {
      ProblemSpec p;
      p.network = net;
      p.init = init;
      p.horizon = a.horizon;
      p.mode = Mode::seeding;
      p.target = TargetSpec::total_spread(n, a.horizon);
      p.budget.nu.assign(static_cast<std::size_t>(a.horizon), budget);
      p.budget.mu.assign(static_cast<std::size_t>(a.horizon), 0.0);
      OptimizerConfig cfg;
      cfg.max_iters = a.max_iters;
      cfg.restarts = a.restarts;
      cfg.restart_seed = a.seed;
      c = forward_backward_iterate(p, cfg).best;
    }
    const double s = spread(c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    csv << name << ',' << fmt_double(s) << ',' << fmt_double(budget) << ',' << n << ',' << net.edge_count() << ','
        << a.horizon << ',' << fmt_double(a.alpha) << '\n';
    out << name << " " << fmt_double(s) << " (" << secs << " s)\n";
  }
  {
    auto f = open_out(a.out);
    f << csv.str();
  }
  write_manifests(cmd, args, {a.out});
  return 0;
}

// mitigate -------------------------------------------------------------------

struct MitigateArgs {
  GraphFlags graph;
  std::string seed_node, policies = "planned,greedy,dmp-greedy,dmp-optimal", out_dir;
  double budget_frac = 0.5;
  int horizon = 10, max_iters = 200;
  std::string eps_grid;
  std::size_t replicas = 100;
  std::uint64_t seed = 1;
  double time_limit = 0.0;
  unsigned threads = 1;
};

int cmd_mitigate(const CLI::App& cmd, const MitigateArgs& a, const std::vector<std::string>& args,
                 std::ostream& out) {
  std::vector<Policy> policies;
  for (const auto& p : split_list(a.policies)) policies.push_back(parse_policy(p));
  if (policies.empty()) throw ValidationError("--policy is empty");
  if (a.horizon < 1) throw ValidationError("--horizon must be >= 1");
  if (a.replicas < 1) throw ValidationError("--replicas must be >= 1");
  if (!(a.budget_frac >= 0.0)) throw ValidationError("--budget-frac must be >= 0");

  const auto net = load_graph(a.graph, -1.0);
  NodeId seed_node = 0;
  if (a.seed_node.empty()) {
    // busiest hub: largest undirected degree, lowest id on ties
    for (std::size_t i = 1; i < net.node_count(); ++i) {
      if (net.undirected_degree(static_cast<NodeId>(i)) > net.undirected_degree(seed_node)) {
        seed_node = static_cast<NodeId>(i);
      }
    }
  } else {
    seed_node = net.require(a.seed_node);
  }
  const NodeId seeds[] = {seed_node};
  const auto init = InitialCondition::with_infected(net.node_count(), seeds);

  MitigationConfig cfg;
  cfg.horizon = a.horizon;
  cfg.budget.assign(static_cast<std::size_t>(a.horizon), a.budget_frac * static_cast<double>(net.node_count()));
  cfg.replicas = a.replicas;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.optimizer.max_iters = a.max_iters;
  cfg.optimizer.time_limit_seconds = a.time_limit;
  if (!a.eps_grid.empty()) {
    cfg.optimizer.eps_grid.clear();
    for (const auto& e : split_list(a.eps_grid)) {
      try {
        cfg.optimizer.eps_grid.push_back(std::stod(e));
      } catch (const std::exception&) {
        throw ValidationError("bad --eps-grid entry '" + e + "'");
      }
    }
  }

  std::vector<PolicyRun> runs;
  for (Policy p : policies) {
    const auto t0 = std::chrono::steady_clock::now();
    runs.push_back(run_policy(net, init, p, cfg));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& r = runs.back();
    out << policy_name(p) << " mean_infected_T " << fmt_double(r.mean.back()) << " stderr "
        << fmt_double(r.stderr_mean.back()) << " (" << secs << " s)\n";
  }

  const fs::path dir = a.out_dir;
  std::vector<fs::path> written;
  for (const auto& r : runs) {
    const auto p = dir / ("policy_" + std::string(policy_name(r.policy)) + ".csv");
    auto f = open_out(p);
    write_policy_csv(f, std::span<const PolicyRun>(&r, 1));
    written.push_back(p);
  }
  const auto cp = dir / "comparison.csv";
  {
    auto f = open_out(cp);
    write_policy_csv(f, runs);
  }
  written.push_back(cp);
  write_manifests(cmd, args, written);
  out << "seed node " << net.label(seed_node) << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic message passing tools for spreading processes", "dmpopt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DMPOPT_VERSION);

  DmpArgs da;
  auto* dmp = app.add_subcommand("dmp", "forward marginals, optionally against Monte Carlo");
  add_graph_flags(dmp, da.graph, false);
  dmp->add_option("--init", da.init, "infected labels, one per line, or node,P_S,P_I,P_R csv")->required();
  dmp->add_option("--horizon", da.horizon, "T")->required()->check(CLI::PositiveNumber);
  dmp->add_option("--controls", da.controls, "schedule csv node,t,nu,mu");
  dmp->add_option("--out", da.out, "marginal csv")->required();
  dmp->add_option("--mc", da.mc, "Monte Carlo replicas for the scatter csv");
  dmp->add_option("--seed", da.seed, "Monte Carlo seed");
  dmp->add_option("--scatter", da.scatter, "scatter csv path (default <out>_scatter.csv)");
  dmp->add_option("--scatter-time", da.scatter_time, "time of the scatter comparison (default T)");
  dmp->add_option("--threads", da.threads)->check(CLI::PositiveNumber);

  OptimizeArgs oa;
  auto* opt = app.add_subcommand("optimize", "forward-backward control optimization of a problem file");
  opt->add_option("--problem", oa.problem, "problem json")->required();
  opt->add_option("--out-report", oa.report, "report json")->required();
  opt->add_option("--out-schedule", oa.schedule, "schedule csv")->required();
  opt->add_option("--max-iters", oa.max_iters, "override max iterations per barrier weight");
  opt->add_option("--restarts", oa.restarts, "override the number of random restarts");
  opt->add_option("--time-limit", oa.time_limit, "wall-clock cap in seconds, 0 = none");
  opt->add_option("--threads", oa.threads)->check(CLI::PositiveNumber);

  BenchArgs ba;
  auto* bench = app.add_subcommand("benchmark", "seeding comparison of heuristics and DMP");
  add_graph_flags(bench, ba.graph, true);
  bench->add_option("--methods", ba.methods, "comma list of random,uniform,hda,kshell,ci:l,dmp")->capture_default_str();
  bench->add_option("--budget-frac", ba.budget_frac)->capture_default_str();
  bench->add_option("--alpha", ba.alpha, "uniform transmission probability")->capture_default_str();
  bench->add_option("--horizon", ba.horizon)->capture_default_str();
  bench->add_option("--seed", ba.seed, "seed of the random method")->capture_default_str();
  bench->add_option("--max-iters", ba.max_iters, "DMP iterations per barrier weight")->capture_default_str();
  bench->add_option("--restarts", ba.restarts, "extra random starts for DMP")->capture_default_str();
  bench->add_option("--out", ba.out, "csv, one row per method")->required();
  bench->add_option("--threads", ba.threads)->check(CLI::PositiveNumber);

  MitigateArgs ma;
  auto* mit = app.add_subcommand("mitigate", "closed-loop vaccination policies on simulated outbreaks");
  add_graph_flags(mit, ma.graph, false);
  mit->add_option("--seed-node", ma.seed_node, "initially infected label (default: highest-degree node)");
  mit->add_option("--policy", ma.policies, "comma list of planned,greedy,dmp-greedy,dmp-optimal")->capture_default_str();
  mit->add_option("--budget-frac", ma.budget_frac, "B_mu(t) / N")->capture_default_str();
  mit->add_option("--horizon", ma.horizon)->capture_default_str();
  mit->add_option("--replicas", ma.replicas)->capture_default_str();
  mit->add_option("--seed", ma.seed)->capture_default_str();
  mit->add_option("--max-iters", ma.max_iters, "optimizer iterations per barrier weight")->capture_default_str();
  mit->add_option("--eps-grid", ma.eps_grid, "comma list of barrier weights");
  mit->add_option("--time-limit", ma.time_limit, "per-decision wall-clock cap in seconds");
  mit->add_option("--out-dir", ma.out_dir, "directory for the csv files")->required();
  mit->add_option("--threads", ma.threads)->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (dmp->parsed()) return cmd_dmp(*dmp, da, args, out);
    if (opt->parsed()) return cmd_optimize(*opt, oa, args, out);
    if (bench->parsed()) return cmd_benchmark(*bench, ba, args, out);
    if (mit->parsed()) return cmd_mitigate(*mit, ma, args, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dmpopt::cli
