#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "dmpopt/continuous.hpp"
#include "dmpopt/errors.hpp"
#include "dmpopt/heuristics.hpp"
#include "dmpopt/io.hpp"
#include "dmpopt/mitigation.hpp"
#include "dmpopt/stochastic.hpp"

namespace py = pybind11;
using namespace dmpopt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array make_array(std::size_t rows, std::size_t cols) {
  return Array({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
}

InitialCondition make_init(const SpreadingNetwork& net, const std::optional<std::vector<NodeId>>& infected,
                           const std::optional<Array>& probs) {
  const std::size_t n = net.node_count();
  if (infected && probs) throw ValidationError("pass either infected or init, not both");
  if (probs) {
    const auto p = probs->unchecked<2>();
    if (p.shape(0) != static_cast<py::ssize_t>(n) || p.shape(1) != 3) {
      throw ValidationError("init must have shape (N, 3)");
    }
    std::vector<InitialCondition::Triple> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<py::ssize_t>(i);
      t[i] = {p(k, 0), p(k, 1), p(k, 2)};
    }
    return InitialCondition(std::move(t));
  }
  if (infected) {
    for (NodeId i : *infected) {
      if (i < 0 || static_cast<std::size_t>(i) >= n) throw ValidationError("infected node out of range");
    }
    return InitialCondition::with_infected(n, *infected);
  }
  return InitialCondition::all_susceptible(n);
}

void fill_rows(ControlSchedule& c, ControlKind k, const std::optional<Array>& a) {
  if (!a) return;
  const auto v = a->unchecked<2>();
  if (v.shape(0) != c.horizon() || v.shape(1) != static_cast<py::ssize_t>(c.node_count())) {
    throw ValidationError("control array must have shape (T, N)");
  }
  for (int t = 0; t < c.horizon(); ++t) {
    for (std::size_t i = 0; i < c.node_count(); ++i) {
      c.set(k, static_cast<NodeId>(i), t, v(t, static_cast<py::ssize_t>(i)));
    }
  }
}

ControlSchedule make_schedule(const SpreadingNetwork& net, int horizon, const std::optional<Array>& nu,
                              const std::optional<Array>& mu) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  ControlSchedule c(net.node_count(), horizon);
  fill_rows(c, ControlKind::nu, nu);
  fill_rows(c, ControlKind::mu, mu);
  return c;
}

Array schedule_rows(const ControlSchedule& c, ControlKind k) {
  auto a = make_array(static_cast<std::size_t>(c.horizon()), c.node_count());
  auto w = a.mutable_unchecked<2>();
  for (int t = 0; t < c.horizon(); ++t) {
    const auto row = c.row(k, t);
    for (std::size_t i = 0; i < row.size(); ++i) w(t, static_cast<py::ssize_t>(i)) = row[i];
  }
  return a;
}

py::dict table_dict(const MarginalTable& m) {
  py::dict d;
  const std::vector<double>* src[] = {&m.ps, &m.pi, &m.pr};
  const char* names[] = {"P_S", "P_I", "P_R"};
  for (int k = 0; k < 3; ++k) {
    auto a = make_array(static_cast<std::size_t>(m.horizon) + 1, m.nodes);
    std::copy(src[k]->begin(), src[k]->end(), a.mutable_data());
    d[names[k]] = a;
  }
  return d;
}

py::object json_loads(const std::string& s) { return py::module_::import("json").attr("loads")(s); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dynamic message passing for SIR spreading: forward marginals, adjoint optimization, heuristics.";

  py::register_exception<TimeoutError>(m, "TimeoutError", PyExc_TimeoutError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<SpreadingNetwork>(m, "Network")
      .def_static(
          "from_edges",
          [](std::size_t n, const std::vector<std::tuple<NodeId, NodeId, double>>& edges,
             std::vector<std::string> labels) {
            std::vector<Edge> es;
            es.reserve(edges.size());
            for (const auto& [s, d, a] : edges) es.push_back({s, d, a});
            return SpreadingNetwork::from_edges(n, std::move(es), std::move(labels));
          },
          py::arg("n"), py::arg("edges"), py::arg("labels") = std::vector<std::string>{},
          "Directed edges (src, dst, alpha).")
      .def_static(
          "load",
          [](const std::filesystem::path& path, bool undirected, std::optional<double> default_alpha, bool lenient) {
            EdgeListOptions o;
            o.undirected = undirected;
            o.default_alpha = default_alpha;
            o.skip_duplicates = lenient;
            o.skip_self_loops = lenient;
            return load_network(path, o);
          },
          py::arg("path"), py::arg("undirected") = false, py::arg("default_alpha") = py::none(),
          py::arg("lenient") = false)
      .def_static("from_json", [](const std::string& s) { return network_from_json(s); })
      .def_static("synthetic_flight", &synthetic_flight_network, py::arg("seed") = 1)
      .def_static(
          "scale_free",
          [](std::size_t n, std::size_t mm, double lo, double hi, std::uint64_t seed) {
            return generate_scale_free(n, mm, {lo, hi}, seed);
          },
          py::arg("n"), py::arg("m"), py::arg("alpha_lo") = 0.5, py::arg("alpha_hi") = 0.5, py::arg("seed") = 1)
      .def_static(
          "random_tree",
          [](std::size_t n, double lo, double hi, std::uint64_t seed) { return generate_random_tree(n, {lo, hi}, seed); },
          py::arg("n"), py::arg("alpha_lo") = 0.0, py::arg("alpha_hi") = 1.0, py::arg("seed") = 1)
      .def_property_readonly("node_count", &SpreadingNetwork::node_count)
      .def_property_readonly("edge_count", &SpreadingNetwork::edge_count)
      .def_property_readonly("labels", &SpreadingNetwork::labels)
      .def("edges",
           [](const SpreadingNetwork& g) {
             std::vector<std::tuple<NodeId, NodeId, double>> out;
             for (const auto& e : g.edges()) out.emplace_back(e.src, e.dst, e.alpha);
             return out;
           })
      .def("index", &SpreadingNetwork::require, py::arg("label"))
      .def("degree", &SpreadingNetwork::undirected_degree, py::arg("node"))
      .def("to_json", &network_to_json)
      .def("__len__", &SpreadingNetwork::node_count)
      .def("__repr__", [](const SpreadingNetwork& g) {
        return "<Network nodes=" + std::to_string(g.node_count()) + " edges=" + std::to_string(g.edge_count()) + ">";
      });

  m.def(
      "run_dmp",
      [](const SpreadingNetwork& net, int horizon, std::optional<std::vector<NodeId>> infected,
         std::optional<Array> init, std::optional<Array> nu, std::optional<Array> mu) {
        const auto ic = make_init(net, infected, init);
        const auto c = make_schedule(net, horizon, nu, mu);
        DmpTrajectory tr;
        {
          py::gil_scoped_release nogil;
          tr = run_forward(net, ic, c, horizon);
        }
        MarginalTable t{net.node_count(), horizon, {}, {}, {}};
        for (int s = 0; s <= horizon; ++s) {
          for (auto [dst, src] : {std::pair{&t.ps, tr.ps_slice(s)}, {&t.pi, tr.pi_slice(s)}, {&t.pr, tr.pr_slice(s)}}) {
            dst->insert(dst->end(), src.begin(), src.end());
          }
        }
        return table_dict(t);
      },
      py::arg("network"), py::arg("horizon"), py::arg("infected") = py::none(), py::arg("init") = py::none(),
      py::arg("nu") = py::none(), py::arg("mu") = py::none(),
      "DMP marginals. Returns {'P_S', 'P_I', 'P_R'}, each of shape (T+1, N).");

  m.def(
      "monte_carlo",
      [](const SpreadingNetwork& net, int horizon, std::optional<std::vector<NodeId>> infected,
         std::optional<Array> init, std::optional<Array> nu, std::optional<Array> mu, std::size_t replicas,
         std::uint64_t seed, unsigned threads) {
        const auto ic = make_init(net, infected, init);
        const auto c = make_schedule(net, horizon, nu, mu);
        McEstimate est;
        {
          py::gil_scoped_release nogil;
          est = mc_estimate_marginals(net, ic, c, horizon, {replicas, seed, threads});
        }
        auto d = table_dict(est.mean);
        auto se = make_array(static_cast<std::size_t>(horizon) + 1, net.node_count());
        auto w = se.mutable_unchecked<2>();
        for (int t = 0; t <= horizon; ++t) {
          for (std::size_t i = 0; i < net.node_count(); ++i) {
            w(t, static_cast<py::ssize_t>(i)) = est.stderr_i(static_cast<NodeId>(i), t);
          }
        }
        d["stderr_I"] = se;
        d["replicas"] = est.replicas;
        return d;
      },
      py::arg("network"), py::arg("horizon"), py::arg("infected") = py::none(), py::arg("init") = py::none(),
      py::arg("nu") = py::none(), py::arg("mu") = py::none(), py::arg("replicas") = 1000, py::arg("seed") = 1,
      py::arg("threads") = 1);

  m.def(
      "exact_marginals",
      [](const SpreadingNetwork& net, int horizon, std::optional<std::vector<NodeId>> infected,
         std::optional<Array> init, std::optional<Array> nu, std::optional<Array> mu) {
        const auto ic = make_init(net, infected, init);
        const auto c = make_schedule(net, horizon, nu, mu);
        return table_dict(exact_marginals(net, ic, c, horizon));
      },
      py::arg("network"), py::arg("horizon"), py::arg("infected") = py::none(), py::arg("init") = py::none(),
      py::arg("nu") = py::none(), py::arg("mu") = py::none(), "Enumerates all 3^N histories; N <= 12.");

  m.def(
      "optimize_json",
      [](const std::string& text, const std::filesystem::path& base_dir, std::optional<int> max_iters,
         std::optional<int> restarts, double time_limit) {
        auto lp = parse_problem_json(text, base_dir);
        if (max_iters) lp.config.max_iters = *max_iters;
        if (restarts) lp.config.restarts = *restarts;
        if (time_limit > 0.0) lp.config.time_limit_seconds = time_limit;
        OptimizationReport rep;
        {
          py::gil_scoped_release nogil;
          rep = forward_backward_iterate(lp.problem, lp.config);
        }
        py::dict d = json_loads(report_to_json(lp.problem, rep));
        d["nu"] = schedule_rows(rep.best, ControlKind::nu);
        d["mu"] = schedule_rows(rep.best, ControlKind::mu);
        d["labels"] = lp.problem.network.labels();
        return d;
      },
      py::arg("text"), py::arg("base_dir") = std::filesystem::path{}, py::arg("max_iters") = py::none(),
      py::arg("restarts") = py::none(), py::arg("time_limit") = 0.0);

  m.def(
      "rank",
      [](const SpreadingNetwork& net, const std::string& method, std::size_t k) {
        std::vector<RankedNode> r;
        if (method == "hda") {
          r = rank_hda(net, k);
        } else if (method == "kshell") {
          r = rank_kshell(net);
          if (k < r.size()) r.resize(k);
        } else if (method.rfind("ci:", 0) == 0) {
          r = rank_ci(net, std::stoi(method.substr(3)), k);
        } else {
          throw ValidationError("unknown ranking '" + method + "' (hda, kshell, ci:<l>)");
        }
        std::vector<std::pair<NodeId, double>> out;
        for (const auto& x : r) out.emplace_back(x.node, x.score);
        return out;
      },
      py::arg("network"), py::arg("method"), py::arg("k"));

  m.def(
      "allocate",
      [](const SpreadingNetwork& net, const std::string& method, double budget, int horizon, std::uint64_t seed) {
        ControlSchedule c;
        if (method == "random") {
          c = allocate_random(net, budget, horizon, seed);
        } else if (method == "uniform") {
          c = allocate_uniform(net, budget, horizon);
        } else {
          const auto k = static_cast<std::size_t>(std::ceil(budget));
          std::vector<RankedNode> r;
          if (method == "hda") {
            r = rank_hda(net, k);
          } else if (method == "kshell") {
            r = rank_kshell(net);
          } else if (method.rfind("ci:", 0) == 0) {
            r = rank_ci(net, std::stoi(method.substr(3)), k);
          } else {
            throw ValidationError("unknown method '" + method + "'");
          }
          c = allocation_from_ranking(net, nodes_of(r), budget, horizon);
        }
        return schedule_rows(c, ControlKind::nu);
      },
      py::arg("network"), py::arg("method"), py::arg("budget"), py::arg("horizon"), py::arg("seed") = 1,
      "Seeding nu(0) of a baseline; returns shape (T, N).");

  m.def(
      "mitigate",
      [](const SpreadingNetwork& net, std::vector<NodeId> seeds, const std::string& policy, int horizon,
         std::vector<double> budget, std::size_t replicas, std::uint64_t seed, unsigned threads, int max_iters) {
        MitigationConfig cfg;
        cfg.horizon = horizon;
        cfg.budget = std::move(budget);
        if (cfg.budget.size() == 1 && horizon > 1) cfg.budget.assign(static_cast<std::size_t>(horizon), cfg.budget[0]);
        cfg.replicas = replicas;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.optimizer.max_iters = max_iters;
        const auto p = parse_policy(policy);
        const auto ic = make_init(net, seeds, std::nullopt);
        PolicyRun run;
        {
          py::gil_scoped_release nogil;
          run = run_policy(net, ic, p, cfg);
        }
        py::dict d;
        d["policy"] = std::string(policy_name(p));
        d["mean"] = run.mean;
        d["stderr"] = run.stderr_mean;
        d["infected"] = run.infected;
        d["optimizer_calls"] = run.optimizer_calls;
        return d;
      },
      py::arg("network"), py::arg("seeds"), py::arg("policy"), py::arg("horizon") = 10, py::arg("budget"),
      py::arg("replicas") = 100, py::arg("seed") = 1, py::arg("threads") = 1, py::arg("max_iters") = 200,
      "Closed-loop vaccination. budget is per step, or one value for every step.");

  m.def(
      "optimize_continuous",
      [](const SpreadingNetwork& net, std::vector<NodeId> infected,
         const std::vector<std::pair<NodeId, double>>& targets, double horizon, double cell, std::vector<double> budget,
         std::optional<std::vector<NodeId>> controllable, double dt, int max_iters) {
        const auto ic = make_init(net, infected, std::nullopt);
        const int cells = static_cast<int>(std::lround(horizon / cell));
        if (budget.size() == 1 && cells > 1) budget.assign(static_cast<std::size_t>(cells), budget[0]);
        std::vector<NodeId> w = controllable.value_or(std::vector<NodeId>{});
        const auto start = ContinuousControl::uniform(net.node_count(), horizon, cell, budget, w);
        std::vector<ContinuousTarget> tg;
        for (const auto& [i, t] : targets) tg.push_back({i, t});
        ContinuousConfig cfg;
        cfg.dt = dt;
        cfg.max_iters = max_iters;
        ContinuousReport rep;
        {
          py::gil_scoped_release nogil;
          rep = optimize_continuous(net, ic, start, tg, cfg);
        }
        auto nu = make_array(static_cast<std::size_t>(rep.best.cells()), net.node_count());
        auto v = nu.mutable_unchecked<2>();
        for (int c = 0; c < rep.best.cells(); ++c) {
          for (std::size_t i = 0; i < net.node_count(); ++i) v(c, static_cast<py::ssize_t>(i)) = rep.best.nu(static_cast<NodeId>(i), c);
        }
        py::dict d;
        d["best_objective"] = rep.best_objective;
        d["best_iteration"] = rep.best_iteration;
        d["objective"] = rep.objective;
        d["warnings"] = rep.warnings;
        d["nu"] = nu;
        return d;
      },
      py::arg("network"), py::arg("infected"), py::arg("targets"), py::arg("horizon"), py::arg("cell"),
      py::arg("budget"), py::arg("controllable") = py::none(), py::arg("dt") = 1e-2, py::arg("max_iters") = 200,
      "Continuous-time SI targeting; targets are (node, time) and the objective is sum P_S.");
}
