#include "dmpopt/io.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmpopt/text.hpp"

namespace dmpopt {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_data_path(const fs::path& p) {
  if (fs::exists(p) || p.is_absolute()) return p;
  if (const char* dir = std::getenv("DMPOPT_DATA_DIR"); dir && *dir) {
    const fs::path alt = fs::path(dir) / p;
    if (fs::exists(alt)) return alt;
  }
  return p;
}

SpreadingNetwork load_network(const fs::path& p, const EdgeListOptions& opts) {
  const auto path = resolve_data_path(p);
  if (!fs::exists(path)) throw ValidationError("graph file not found: " + p.string());
  if (path.extension() == ".json") {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return network_from_json(ss.str());
  }
  return load_edge_list_file(path.string(), opts);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(where + ": '" + s + "' is not a number");
  }
}

int parse_int(const std::string& s, const std::string& where) {
  const double v = parse_number(s, where);
  if (v != static_cast<int>(v)) throw ValidationError(where + ": '" + s + "' is not an integer");
  return static_cast<int>(v);
}

bool skip_line(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

}  // namespace

InitialCondition read_initial_condition(std::istream& in, const SpreadingNetwork& net) {
  std::vector<InitialCondition::Triple> v(net.node_count());
  std::string line;
  bool first = true, csv = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    auto f = split_fields(line);
    const std::string where = "init line " + std::to_string(lineno);
    if (first) {
      first = false;
      if (f.size() == 4 && f[0] == "node") {
        csv = true;
        continue;
      }
    }
    if (csv) {
      if (f.size() != 4) throw ValidationError(where + ": expected node,P_S,P_I,P_R");
      auto& t = v[static_cast<std::size_t>(net.require(f[0]))];
      t = {parse_number(f[1], where), parse_number(f[2], where), parse_number(f[3], where)};
    } else {
      if (f.size() != 1) throw ValidationError(where + ": expected one infected label");
      v[static_cast<std::size_t>(net.require(f[0]))] = {0.0, 1.0, 0.0};
    }
  }
  return InitialCondition(std::move(v));
}

void write_schedule_csv(std::ostream& out, const SpreadingNetwork& net, const ControlSchedule& c) {
  out << "node,t,nu,mu\n";
  for (std::size_t i = 0; i < c.node_count(); ++i) {
    const auto id = static_cast<NodeId>(i);
    for (int t = 0; t < c.horizon(); ++t) {
      out << net.label(id) << ',' << t << ',' << fmt_double(c.nu(id, t)) << ',' << fmt_double(c.mu(id, t)) << '\n';
    }
  }
}

ControlSchedule read_schedule_csv(std::istream& in, const SpreadingNetwork& net, int horizon) {
  ControlSchedule c(net.node_count(), horizon);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    auto f = split_fields(line);
    const std::string where = "schedule line " + std::to_string(lineno);
    if (!header) {
      if (f != std::vector<std::string>{"node", "t", "nu", "mu"}) throw ValidationError(where + ": expected header node,t,nu,mu");
      header = true;
      continue;
    }
    if (f.size() != 4) throw ValidationError(where + ": expected 4 fields");
    const NodeId i = net.require(f[0]);
    const int t = parse_int(f[1], where);
    if (t < 0 || t >= horizon) throw ValidationError(where + ": t outside [0, " + std::to_string(horizon) + ")");
    c.set_nu(i, t, parse_number(f[2], where));
    c.set_mu(i, t, parse_number(f[3], where));
  }
  if (!header) throw ValidationError("schedule file is empty");
  return c;
}

namespace {

std::vector<double> budget_vector(const json& j, const char* key, int horizon) {
  if (!j.contains(key)) return std::vector<double>(static_cast<std::size_t>(horizon), 0.0);
  const auto& b = j.at(key);
  if (b.is_number()) return std::vector<double>(static_cast<std::size_t>(horizon), b.get<double>());
  auto v = b.get<std::vector<double>>();
  if (v.size() != static_cast<std::size_t>(horizon)) {
    throw ValidationError(std::string(key) + " must be a number or have one entry per step");
  }
  return v;
}

std::vector<double> bound_vector(const json& j, const SpreadingNetwork& net, double fallback) {
  std::vector<double> v(net.node_count(), fallback);
  if (j.is_number()) {
    std::fill(v.begin(), v.end(), j.get<double>());
  } else if (j.is_object()) {
    for (const auto& [label, x] : j.items()) v[static_cast<std::size_t>(net.require(label))] = x.get<double>();
  } else {
    throw ValidationError("bounds must be a number or a {label: value} object");
  }
  return v;
}

}  // namespace

LoadedProblem parse_problem_json(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("problem json: ") + e.what());
  }
  try {
    LoadedProblem out;
    auto& p = out.problem;
    if (j.contains("network")) {
      p.network = network_from_json(j.at("network").dump());
    } else if (j.contains("graph")) {
      fs::path g = j.at("graph").get<std::string>();
      if (g.is_relative() && !base_dir.empty() && fs::exists(base_dir / g)) g = base_dir / g;
      EdgeListOptions opts;
      opts.undirected = j.value("undirected", false);
      if (j.contains("alpha")) opts.default_alpha = j.at("alpha").get<double>();
      p.network = load_network(g, opts);
    } else {
      throw ValidationError("problem json needs 'graph' or 'network'");
    }
    const auto& net = p.network;
    const std::string mode = j.value("mode", "targeting");
    if (mode == "targeting") {
      p.mode = Mode::targeting;
    } else if (mode == "seeding") {
      p.mode = Mode::seeding;
    } else if (mode == "vaccination") {
      p.mode = Mode::vaccination;
    } else {
      throw ValidationError("unknown mode '" + mode + "'");
    }
    if (!j.contains("horizon")) throw ValidationError("problem json needs 'horizon'");
    p.horizon = j.at("horizon").get<int>();
    if (p.horizon < 1) throw ValidationError("horizon must be >= 1");

    Sense sense = p.mode == Mode::vaccination ? Sense::minimize_infected : Sense::maximize_infected;
    if (j.contains("sense")) {
      const auto s = j.at("sense").get<std::string>();
      if (s == "maximize") {
        sense = Sense::maximize_infected;
      } else if (s == "minimize") {
        sense = Sense::minimize_infected;
      } else {
        throw ValidationError("sense must be 'maximize' or 'minimize'");
      }
    }
    if (j.contains("targets")) {
      p.target.sense = sense;
      for (const auto& t : j.at("targets")) {
        p.target.targets.push_back({net.require(t.at("node").get<std::string>()), t.value("time", p.horizon)});
      }
    } else {
      p.target = TargetSpec::total_spread(net.node_count(), p.horizon, sense);
    }
    p.budget.nu = budget_vector(j, "budget_nu", p.horizon);
    p.budget.mu = budget_vector(j, "budget_mu", p.horizon);
    if (j.contains("controllable")) {
      for (const auto& l : j.at("controllable")) p.controllable.push_back(net.require(l.get<std::string>()));
      if (p.controllable.empty()) throw ValidationError("controllable list is empty");
    }
    if (j.contains("bounds")) {
      const auto& b = j.at("bounds");
      if (b.contains("lower")) p.lower = bound_vector(b.at("lower"), net, 0.0);
      if (b.contains("upper")) p.upper = bound_vector(b.at("upper"), net, 1.0);
    }
    std::vector<InitialCondition::Triple> init(net.node_count());
    if (j.contains("init")) {
      const auto& in = j.at("init");
      if (in.contains("infected")) {
        for (const auto& l : in.at("infected")) init[static_cast<std::size_t>(net.require(l.get<std::string>()))] = {0, 1, 0};
      }
      if (in.contains("probabilities")) {
        for (const auto& [label, x] : in.at("probabilities").items()) {
          init[static_cast<std::size_t>(net.require(label))] = {x.value("s", 0.0), x.value("i", 0.0), x.value("r", 0.0)};
        }
      }
    }
    p.init = InitialCondition(std::move(init));

    auto& c = out.config;
    if (j.contains("epsilon_grid")) c.eps_grid = j.at("epsilon_grid").get<std::vector<double>>();
    c.max_iters = j.value("max_iters", c.max_iters);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.restarts = j.value("restarts", c.restarts);
    c.restart_seed = j.value("restart_seed", c.restart_seed);
    p.validate();
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("problem json: ") + e.what());
  }
}

LoadedProblem load_problem_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open problem file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem_json(ss.str(), path.parent_path());
}

std::string report_to_json(const ProblemSpec& problem, const OptimizationReport& rep) {
  json j;
  const char* modes[] = {"targeting", "seeding", "vaccination"};
  j["mode"] = modes[static_cast<int>(problem.mode)];
  j["sense"] = problem.target.sense == Sense::maximize_infected ? "maximize" : "minimize";
  j["horizon"] = problem.horizon;
  j["best_objective"] = rep.best_objective;
  j["best_eps"] = rep.best_eps;
  j["best_start"] = rep.best_start;
  j["best_iteration"] = rep.best_iteration;
  j["iterations"] = rep.iterations;
  j["wall_seconds"] = rep.wall_seconds;
  j["residual"] = rep.residual;
  double worst = 0.0;
  for (double r : rep.residual) worst = std::max(worst, std::abs(r));
  j["max_abs_residual"] = worst;
  auto& trace = j["trace"] = json::array();
  for (const auto& r : rep.trace) {
    trace.push_back({{"start", r.start},
                     {"eps", r.eps},
                     {"iteration", r.iteration},
                     {"objective", r.objective},
                     {"max_residual", r.max_residual},
                     {"change", r.change}});
  }
  const auto tr = run_forward(problem.network, problem.init, rep.best, problem.horizon);
  auto& targets = j["targets"] = json::array();
  for (const auto& t : problem.target.targets) {
    targets.push_back({{"node", problem.network.label(t.node)}, {"time", t.time}, {"P_I", tr.pi(t.node, t.time)}});
  }
  return j.dump(2);
}

}  // namespace dmpopt
