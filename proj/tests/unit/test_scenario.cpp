#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mcmp/scenario.hpp"
#include "support.hpp"

using namespace mcmp;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(const std::string& text) {
  try {
    (void)parse_scenario(text, "case.json");
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

std::string replace_once(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  return text.replace(at, from.size(), to);
}

}  // namespace

TEST_CASE("bundled scenarios survive a serialize/load round trip") {
  for (const char* name : {"si_two_gap", "si_corridor", "di_corridor"}) {
    const Scenario a = load_scenario(testing::scenario_path(name));
    const std::string text = serialize_scenario(a);
    const Scenario b = parse_scenario(text);
    CHECK(a == b);
    CHECK(serialize_scenario(b) == text);
    CHECK(b.nominal_path.size() == a.nominal_path.size());
    CHECK(b.obstacles.size() == a.obstacles.size());
  }
}

TEST_CASE("scenario errors name the source line and JSON pointer") {
  const std::string base = read_file(testing::scenario_path("si_corridor"));
  const Scenario s = parse_scenario(base);
  const std::string text = serialize_scenario(s);

  // Syntax error on a known line.
  std::istringstream lines(text);
  std::string line;
  int number = 0, dt_line = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (line.find("\"dt\"") != std::string::npos) dt_line = number;
  }
  REQUIRE(dt_line > 0);
  const std::string broken = replace_once(text, "\"dt\": ", "\"dt\": ,");
  CHECK(error_of(broken).find("case.json:" + std::to_string(dt_line) + ":") == 0);

  const std::string negative_dt = replace_once(text, "\"dt\": ", "\"dt\": -");
  const std::string msg = error_of(negative_dt);
  CHECK(msg.find("case.json:" + std::to_string(dt_line) + ":") == 0);
  CHECK(msg.find("/dt") != std::string::npos);

  const std::string bad_dynamics = replace_once(text, "\"single_integrator\"", "\"unicycle\"");
  CHECK(error_of(bad_dynamics).find("/dynamics") != std::string::npos);

  // A measurement covariance with the wrong shape.
  const std::string bad_shape = replace_once(text, "\"measurement\": [", "\"measurement\": [[1.0],");
  CHECK(error_of(bad_shape).find("/noise/measurement") != std::string::npos);

  // Indefinite process noise is rejected by validation, still with a line.
  Scenario bad = s;
  bad.process_noise(0, 0) = -1.0;
  const std::string indefinite = serialize_scenario(bad);
  const std::string e = error_of(indefinite);
  CHECK(e.find("/noise/process") != std::string::npos);
  CHECK(e.find("case.json:") == 0);
  CHECK(e.find("case.json:0:") == std::string::npos);
}

TEST_CASE("missing files and non-objects are reported") {
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ScenarioError);
  CHECK(error_of("[1, 2]").find("must be a JSON object") != std::string::npos);
  CHECK(error_of("{\"dynamics\": \"single_integrator\"}").find("/dimension") != std::string::npos);
}

TEST_CASE("scenario quantities map onto the model") {
  const Scenario s = load_scenario(testing::scenario_path("di_corridor"));
  CHECK(s.state_dim() == 4);
  const ContinuousLinearSystem c = s.continuous_system();
  CHECK(c.A(0, 2) == 1.0);
  CHECK(c.B(2, 0) == 1.0);
  CHECK(c.C.isIdentity());
  const Workspace ws = s.workspace();
  CHECK(ws.obstacles.size() == s.obstacles.size());
  CHECK(ws.start.size() == 4);
  const PathProblem p = make_path_problem(s, scenario_nominal_path(s));
  CHECK(p.nominal.dt == doctest::Approx(s.dt));
  CHECK(p.law.horizon == p.nominal.horizon());
}
