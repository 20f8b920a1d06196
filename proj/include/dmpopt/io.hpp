#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "dmpopt/adjoint.hpp"

namespace dmpopt {

// Edge list (text) or network JSON, chosen by extension. Relative paths that
// do not exist are retried under $DMPOPT_DATA_DIR.
std::filesystem::path resolve_data_path(const std::filesystem::path& p);
SpreadingNetwork load_network(const std::filesystem::path& p, const EdgeListOptions& opts = {});

/*
  Initial condition file. Either a CSV with header `node,P_S,P_I,P_R`, or one
  infected label per line. Unlisted nodes start susceptible.
*/
InitialCondition read_initial_condition(std::istream& in, const SpreadingNetwork& net);

// node,t,nu,mu; rows missing from the input are 0.
void write_schedule_csv(std::ostream& out, const SpreadingNetwork& net, const ControlSchedule& c);
ControlSchedule read_schedule_csv(std::istream& in, const SpreadingNetwork& net, int horizon);

/*
  {
    "graph": "path" | "network": {nodes, edges},   // path relative to the file
    "undirected": bool, "alpha": number,          // edge-list loading options
    "mode": "targeting" | "seeding" | "vaccination",
    "horizon": T,
    "targets": [{"node": label, "time": t}],      // default: all nodes at T
    "sense": "maximize" | "minimize",             // default by mode
    "budget_nu": number | [..], "budget_mu": number | [..],
    "controllable": [labels],
    "bounds": {"lower": number | {label: v}, "upper": ...},
    "epsilon_grid": [..], "max_iters": n, "tolerance": x,
    "restarts": n, "restart_seed": s,              // extra random starts
    "init": {"infected": [labels]} | {"probabilities": {label: {"s","i","r"}}}
  }
*/
struct LoadedProblem {
  ProblemSpec problem;
  OptimizerConfig config;
};
LoadedProblem parse_problem_json(std::string_view text, const std::filesystem::path& base_dir = {});
LoadedProblem load_problem_file(const std::filesystem::path& p);

// Report fields plus each target's P_I(t_i) under the best schedule.
std::string report_to_json(const ProblemSpec& problem, const OptimizationReport& rep);

}  // namespace dmpopt
