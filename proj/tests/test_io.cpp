#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmpopt/io.hpp"
#include "helpers.hpp"

using namespace dmpopt;
namespace fs = std::filesystem;

namespace {

SpreadingNetwork path3() {
  return SpreadingNetwork::from_edges(3, {{0, 1, 0.5}, {1, 0, 0.5}, {1, 2, 0.25}, {2, 1, 0.25}}, {"a", "b", "c"});
}

fs::path scratch_dir() {
  auto d = fs::temp_directory_path() / "dmpopt_test_io";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("schedule csv round trip is bit-exact") {
  const auto net = path3();
  const auto c = testing_util::random_controls(3, 4, 0.9, 0.7, 17);
  std::stringstream ss;
  write_schedule_csv(ss, net, c);
  const auto back = read_schedule_csv(ss, net, 4);
  for (NodeId i = 0; i < 3; ++i) {
    for (int t = 0; t < 4; ++t) {
      CHECK(back.nu(i, t) == c.nu(i, t));
      CHECK(back.mu(i, t) == c.mu(i, t));
    }
  }
}

TEST_CASE("schedule csv: missing rows are zero, bad rows throw") {
  const auto net = path3();
  std::istringstream in("node,t,nu,mu\nb,1,0.5,0\n");
  const auto c = read_schedule_csv(in, net, 2);
  CHECK(c.nu(1, 1) == 0.5);
  CHECK(c.nu(0, 0) == 0.0);

  std::istringstream bad_t("node,t,nu,mu\na,2,0.1,0\n");
  CHECK_THROWS_AS(read_schedule_csv(bad_t, net, 2), ValidationError);
  std::istringstream bad_label("node,t,nu,mu\nzz,0,0.1,0\n");
  CHECK_THROWS_AS(read_schedule_csv(bad_label, net, 2), ValidationError);
  std::istringstream bad_value("node,t,nu,mu\na,0,1.5,0\n");
  CHECK_THROWS_AS(read_schedule_csv(bad_value, net, 2), ValidationError);
  std::istringstream no_header("a,0,0.1,0\n");
  CHECK_THROWS_AS(read_schedule_csv(no_header, net, 2), ValidationError);
  std::istringstream junk("node,t,nu,mu\na,0,x,0\n");
  CHECK_THROWS_AS(read_schedule_csv(junk, net, 2), ValidationError);
}

TEST_CASE("initial condition: label list and csv") {
  const auto net = path3();
  std::istringstream labels("# seeds\nc\n");
  const auto a = read_initial_condition(labels, net);
  CHECK(a[2].i == 1.0);
  CHECK(a[0].s == 1.0);

  std::istringstream csv("node,P_S,P_I,P_R\nb,0.5,0.25,0.25\n");
  const auto b = read_initial_condition(csv, net);
  CHECK(b[1].s == 0.5);
  CHECK(b[1].r == 0.25);
  CHECK(b[2].s == 1.0);

  std::istringstream bad("node,P_S,P_I,P_R\nb,0.5,0.6,0\n");
  CHECK_THROWS_AS(read_initial_condition(bad, net), ValidationError);
  std::istringstream unknown("q\n");
  CHECK_THROWS_AS(read_initial_condition(unknown, net), ValidationError);
}

TEST_CASE("problem json: inline network and defaults") {
  const auto net = path3();
  nlohmann::json j;
  j["network"] = nlohmann::json::parse(network_to_json(net));
  j["horizon"] = 3;
  j["budget_nu"] = 0.5;
  j["init"] = {{"infected", {"a"}}};
  const auto lp = parse_problem_json(j.dump());
  const auto& p = lp.problem;
  CHECK(p.mode == Mode::targeting);
  CHECK(p.target.sense == Sense::maximize_infected);
  CHECK(p.target.targets.size() == 3);
  CHECK(p.budget.nu == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(p.budget.mu == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(p.init[0].i == 1.0);
  CHECK(lp.config.max_iters == OptimizerConfig{}.max_iters);

  j["mode"] = "vaccination";
  j.erase("budget_nu");
  j["budget_mu"] = {0.2, 0.1, 0.0};
  j["targets"] = {{{"node", "c"}, {"time", 2}}};
  j["controllable"] = {"b", "c"};
  j["bounds"] = {{"upper", {{"b", 0.3}}}};
  j["epsilon_grid"] = {1e-3};
  j["max_iters"] = 7;
  const auto lv = parse_problem_json(j.dump());
  CHECK(lv.problem.mode == Mode::vaccination);
  CHECK(lv.problem.target.sense == Sense::minimize_infected);
  REQUIRE(lv.problem.target.targets.size() == 1);
  CHECK(lv.problem.target.targets[0].node == 2);
  CHECK(lv.problem.target.targets[0].time == 2);
  CHECK(lv.problem.budget.mu[1] == 0.1);
  CHECK(lv.problem.controllable == std::vector<NodeId>{1, 2});
  CHECK(lv.problem.upper == std::vector<double>{1.0, 0.3, 1.0});
  CHECK(lv.config.eps_grid == std::vector<double>{1e-3});
  CHECK(lv.config.max_iters == 7);
}

TEST_CASE("problem json: validation errors") {
  const auto net = path3();
  nlohmann::json base;
  base["network"] = nlohmann::json::parse(network_to_json(net));
  base["horizon"] = 2;

  CHECK_THROWS_AS(parse_problem_json("{not json"), ValidationError);
  CHECK_THROWS_AS(parse_problem_json(R"({"horizon": 2})"), ValidationError);
  auto j = base;
  j.erase("horizon");
  CHECK_THROWS_AS(parse_problem_json(j.dump()), ValidationError);
  j = base;
  j["mode"] = "spraying";
  CHECK_THROWS_AS(parse_problem_json(j.dump()), ValidationError);
  j = base;
  j["sense"] = "sideways";
  CHECK_THROWS_AS(parse_problem_json(j.dump()), ValidationError);
  j = base;
  j["budget_nu"] = {0.1, 0.2, 0.3};
  CHECK_THROWS_AS(parse_problem_json(j.dump()), ValidationError);
  j = base;
  j["targets"] = {{{"node", "nobody"}, {"time", 1}}};
  CHECK_THROWS_AS(parse_problem_json(j.dump()), ValidationError);
  j = base;
  j["targets"] = {{{"node", "a"}, {"time", 9}}};
  CHECK_THROWS_AS(parse_problem_json(j.dump()), ValidationError);
  j = base;
  j["horizon"] = "two";
  CHECK_THROWS_AS(parse_problem_json(j.dump()), ValidationError);
}

TEST_CASE("graph paths resolve against the problem file and DMPOPT_DATA_DIR") {
  const auto dir = scratch_dir();
  {
    std::ofstream g(dir / "g.txt");
    g << "x y 0.5\ny z 0.5\n";
    std::ofstream p(dir / "p.json");
    p << R"({"graph": "g.txt", "undirected": true, "horizon": 2, "budget_nu": 0.1})";
  }
  const auto lp = load_problem_file(dir / "p.json");
  CHECK(lp.problem.network.node_count() == 3);
  CHECK(lp.problem.network.edge_count() == 4);

  CHECK_THROWS_AS(load_network("definitely_missing_dmpopt.txt"), ValidationError);
  ::setenv("DMPOPT_DATA_DIR", dir.c_str(), 1);
  const auto net = load_network("g.txt");
  ::unsetenv("DMPOPT_DATA_DIR");
  CHECK(net.edge_count() == 2);

  {
    std::ofstream j(dir / "n.json");
    j << network_to_json(path3());
  }
  CHECK(load_network(dir / "n.json").label(2) == "c");
}

TEST_CASE("report json lists target infection under the best schedule") {
  const auto net = path3();
  ProblemSpec p;
  p.network = net;
  p.horizon = 2;
  p.init = InitialCondition::with_infected(3, std::vector<NodeId>{0});
  p.target.targets = {{2, 2}};
  p.budget.nu = {0.2, 0.2};
  p.budget.mu = {0.0, 0.0};
  OptimizerConfig cfg;
  cfg.eps_grid = {1e-3};
  cfg.max_iters = 20;
  const auto rep = forward_backward_iterate(p, cfg);
  const auto j = nlohmann::json::parse(report_to_json(p, rep));
  const auto tr = run_forward(net, p.init, rep.best, 2);
  CHECK(j["targets"][0]["node"] == "c");
  CHECK(j["targets"][0]["P_I"].get<double>() == tr.pi(2, 2));
  CHECK(j["best_objective"].get<double>() == rep.best_objective);
  CHECK(j["trace"].size() == rep.trace.size());
  CHECK(j["residual"].size() == 2);
}
