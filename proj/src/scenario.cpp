#include "mcmp/scenario.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace mcmp {
namespace {

using nlohmann::json;

// Maps JSON pointers to the 1-based line where their value starts. Assumes
// the text already parsed successfully.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) : text_(text) {
    skip_ws();
    value("");
  }
  int line_of(const std::string& pointer) const {
    // Fall back to the nearest enclosing value that is known.
    std::string p = pointer;
    for (;;) {
      if (auto it = lines_.find(p); it != lines_.end()) return it->second;
      const auto slash = p.rfind('/');
      if (slash == std::string::npos || p.empty()) return 0;
      p.resize(slash);
    }
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }
  std::string string_token() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') {
        ++pos_;
        if (pos_ < text_.size() && text_[pos_] == 'u') {
          pos_ += 4;
          out += '?';
        } else if (pos_ < text_.size()) {
          out += text_[pos_];
        }
      } else {
        out += text_[pos_];
      }
      ++pos_;
    }
    ++pos_;  // closing quote
    return out;
  }
  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }
  void value(const std::string& pointer) {
    lines_.emplace(pointer, line_);
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const int key_line = line_;
        const std::string key = string_token();
        skip_ws();
        ++pos_;  // colon
        skip_ws();
        const std::string child = pointer + "/" + escape(key);
        lines_.emplace(child, key_line);
        value(child);
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      skip_ws();
      int index = 0;
      while (pos_ < text_.size() && text_[pos_] != ']') {
        value(pointer + "/" + std::to_string(index++));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && std::string_view(",]}").find(text_[pos_]) == std::string_view::npos &&
             !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      }
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

// Typed accessors that report failures with pointer and line.
class Reader {
 public:
  Reader(const json& root, const LineIndex& index, std::string source)
      : root_(root), index_(index), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& what) const {
    const int line = index_.line_of(pointer);
    std::ostringstream msg;
    msg << source_;
    if (line > 0) msg << ":" << line;
    msg << ": " << (pointer.empty() ? "/" : pointer) << ": " << what;
    throw ScenarioError(msg.str(), pointer, line);
  }

  const json* find(const std::string& pointer) const {
    const json::json_pointer p(pointer);
    return root_.contains(p) ? &root_.at(p) : nullptr;
  }
  const json& at(const std::string& pointer) const {
    const json* v = find(pointer);
    if (v == nullptr) fail(pointer, "required field is missing");
    return *v;
  }
  double number(const std::string& pointer) const {
    const json& v = at(pointer);
    if (!v.is_number()) fail(pointer, "expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& pointer, double fallback) const {
    return find(pointer) ? number(pointer) : fallback;
  }
  std::int64_t integer(const std::string& pointer) const {
    const json& v = at(pointer);
    if (!v.is_number_integer()) fail(pointer, "expected an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer_or(const std::string& pointer, std::int64_t fallback) const {
    return find(pointer) ? integer(pointer) : fallback;
  }
  std::uint64_t unsigned_or(const std::string& pointer, std::uint64_t fallback) const {
    if (!find(pointer)) return fallback;
    const json& v = at(pointer);
    if (!v.is_number_unsigned()) fail(pointer, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean_or(const std::string& pointer, bool fallback) const {
    if (!find(pointer)) return fallback;
    const json& v = at(pointer);
    if (!v.is_boolean()) fail(pointer, "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& pointer) const {
    const json& v = at(pointer);
    if (!v.is_string()) fail(pointer, "expected a string");
    return v.get<std::string>();
  }
  VectorXd vector(const std::string& pointer, int expected = -1) const {
    const json& v = at(pointer);
    if (!v.is_array()) fail(pointer, "expected an array of numbers");
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(pointer + "/" + std::to_string(i), "expected a number");
      out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    if (expected >= 0 && out.size() != expected) {
      fail(pointer, "expected " + std::to_string(expected) + " entries, got " + std::to_string(out.size()));
    }
    return out;
  }
  MatrixXd matrix(const std::string& pointer, int rows, int cols) const {
    const json& v = at(pointer);
    if (!v.is_array()) fail(pointer, "expected a matrix (array of rows)");
    if (rows >= 0 && static_cast<int>(v.size()) != rows) {
      fail(pointer, "expected " + std::to_string(rows) + " rows, got " + std::to_string(v.size()));
    }
    const int r = static_cast<int>(v.size());
    const int c = r > 0 && v[0].is_array() ? static_cast<int>(v[0].size()) : 0;
    MatrixXd out(r, cols >= 0 ? cols : c);
    for (int i = 0; i < r; ++i) {
      const VectorXd row = vector(pointer + "/" + std::to_string(i), cols >= 0 ? cols : c);
      out.row(i) = row.transpose();
    }
    return out;
  }

 private:
  const json& root_;
  const LineIndex& index_;
  std::string source_;
};

json to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(VectorXd(m.row(i).transpose())));
  return a;
}

bool is_symmetric(const MatrixXd& m) { return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()); }

bool is_psd(const MatrixXd& m) {
  if (!is_symmetric(m)) return false;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  return eig.eigenvalues().minCoeff() >= -1e-12 * (1.0 + m.cwiseAbs().maxCoeff());
}

bool is_pd(const MatrixXd& m) {
  if (!is_symmetric(m)) return false;
  return Eigen::LLT<MatrixXd>(m).info() == Eigen::Success;
}

}  // namespace

ConvexObstacle ObstacleSpec::build() const {
  switch (kind) {
    case Kind::box:
      return ConvexObstacle::box(lower, upper);
    case Kind::vertices:
      return ConvexObstacle::from_vertices(vertices);
    default:
      return ConvexObstacle(faces);
  }
}

ContinuousLinearSystem Scenario::continuous_system() const {
  const int k = dimension;
  const int n = state_dim();
  ContinuousLinearSystem c;
  c.A = MatrixXd::Zero(n, n);
  c.B = MatrixXd::Zero(n, k);
  if (dynamics == Dynamics::single_integrator) {
    c.B.setIdentity();
  } else {
    c.A.topRightCorner(k, k).setIdentity();
    c.B.bottomRows(k).setIdentity();
  }
  c.C = measurement_matrix.size() > 0 ? measurement_matrix : MatrixXd::Identity(n, n);
  c.V = process_noise;
  c.W = measurement_noise;
  return c;
}

DiscreteLQGSystem Scenario::discrete_system() const { return discretize(continuous_system(), dt); }

DiscreteLQGSystem Scenario::discrete_system(double dt_override) const {
  return discretize(continuous_system(), dt_override > 0.0 ? dt_override : dt);
}

TrackingCost Scenario::tracking_cost() const { return {Q, R, F}; }

SteeringModel Scenario::steering_model() const {
  SteeringModel m;
  m.dynamics = dynamics;
  m.dim = dimension;
  m.time_weight = planner.time_weight;
  m.R = planner.control_weight.size() > 0 ? planner.control_weight : MatrixXd::Identity(dimension, dimension);
  return m;
}

PlannerOptions Scenario::planner_options() const {
  PlannerOptions o;
  o.nodes = planner.nodes;
  o.seed = planner.seed;
  o.resolution = planner.resolution;
  o.velocity_bound = planner.velocity_bound;
  o.radius_scale = planner.radius_scale;
  return o;
}

AdaptiveOptions Scenario::adaptive_options() const {
  AdaptiveOptions o;
  o.alpha = alpha;
  o.batch = mcmp.batch;
  o.max_m = mcmp.max_m;
  o.confidence_z = mcmp.confidence_z;
  o.rel_tol = mcmp.rel_tol;
  return o;
}

Workspace Scenario::workspace() const {
  Workspace ws;
  for (const ObstacleSpec& o : obstacles) ws.obstacles.push_back(o.build());
  ws.bounds = bounds;
  ws.goal = goal;
  ws.start = start;
  return ws;
}

void Scenario::validate() const {
  auto bad = [](const std::string& pointer, const std::string& what) { throw ScenarioError(pointer + ": " + what, pointer, 0); };
  const int n = state_dim();
  const int k = dimension;
  if (k < 1 || k > 3) bad("/dimension", "must be 1, 2 or 3");
  if (!(dt > 0.0)) bad("/dt", "must be positive");
  if (!(speed > 0.0)) bad("/speed", "must be positive");
  const int p = measurement_matrix.size() > 0 ? static_cast<int>(measurement_matrix.rows()) : n;
  if (measurement_matrix.size() > 0 && measurement_matrix.cols() != n) bad("/measurement_matrix", "needs state_dim columns");
  if (process_noise.rows() != n || process_noise.cols() != n || !is_psd(process_noise)) {
    bad("/noise/process", "must be a symmetric PSD " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
  }
  if (measurement_noise.rows() != p || measurement_noise.cols() != p || !is_pd(measurement_noise)) {
    bad("/noise/measurement", "must be a symmetric positive definite " + std::to_string(p) + "x" + std::to_string(p) + " matrix");
  }
  if (Q.rows() != n || Q.cols() != n || !is_psd(Q)) bad("/cost/Q", "must be a symmetric PSD state_dim matrix");
  if (F.rows() != n || F.cols() != n || !is_psd(F)) bad("/cost/F", "must be a symmetric PSD state_dim matrix");
  if (R.rows() != k || R.cols() != k || !is_pd(R)) bad("/cost/R", "must be a symmetric positive definite input_dim matrix");
  if (initial_covariance.rows() != n || initial_covariance.cols() != n || !is_psd(initial_covariance)) {
    bad("/initial_covariance", "must be a symmetric PSD state_dim matrix");
  }
  if (bounds.lower.size() != k || bounds.upper.size() != k || !((bounds.upper - bounds.lower).array() > 0.0).all()) {
    bad("/bounds", "lower and upper must have dimension entries with lower < upper");
  }
  if (start.size() != n) bad("/start", "must have state_dim entries");
  if (!bounds.contains(start.head(k))) bad("/start", "start position lies outside the bounds");
  if (goal.shape == GoalRegion::Shape::ball) {
    if (goal.center.size() != k || !(goal.radius > 0.0)) bad("/goal", "ball goal needs center[dimension] and radius > 0");
  } else if (goal.lower.size() != k || goal.upper.size() != k || !((goal.upper - goal.lower).array() > 0.0).all()) {
    bad("/goal", "box goal needs lower < upper with dimension entries");
  }
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    try {
      if (obstacles[i].build().dim() != k) bad("/obstacles/" + std::to_string(i), "obstacle dimension mismatch");
    } catch (const std::invalid_argument& e) {
      bad("/obstacles/" + std::to_string(i), e.what());
    }
  }
  if (!(alpha > 0.0 && alpha < 1.0)) bad("/alpha", "must lie in (0, 1)");
  for (std::size_t i = 0; i < nominal_path.size(); ++i) {
    const int want = dynamics == Dynamics::single_integrator ? k : n;
    if (nominal_path[i].size() != want) bad("/nominal_path/" + std::to_string(i), "wrong number of entries");
  }
  if (planner.nodes < 2) bad("/planner/nodes", "must be at least 2");
  if (!(planner.resolution > 0.0)) bad("/planner/resolution", "must be positive");
  if (!(planner.time_weight > 0.0)) bad("/planner/time_weight", "must be positive");
  if (planner.control_weight.size() > 0 &&
      (planner.control_weight.rows() != k || planner.control_weight.cols() != k || !is_pd(planner.control_weight))) {
    bad("/planner/control_weight", "must be a symmetric positive definite dimension x dimension matrix");
  }
  if (!(planner.velocity_bound > 0.0)) bad("/planner/velocity_bound", "must be positive");
  if (!(planner.radius_scale > 0.0)) bad("/planner/radius_scale", "must be positive");
  if (!(mcmp.inflation_min >= 0.0 && mcmp.inflation_min < mcmp.inflation_max)) {
    bad("/mcmp/inflation_min", "need 0 <= inflation_min < inflation_max");
  }
  if (mcmp.bisection_steps < 1) bad("/mcmp/bisection_steps", "must be at least 1");
  if (mcmp.batch < 100) bad("/mcmp/batch", "must be at least 100");
  if (mcmp.max_m < mcmp.batch) bad("/mcmp/max_m", "must be at least batch");
  if (!(mcmp.confidence_z > 0.0)) bad("/mcmp/confidence_z", "must be positive");
  if (!(mcmp.rel_tol >= 0.0)) bad("/mcmp/rel_tol", "must be non-negative");
  if (!(mcmp.blocker_scale > 0.0)) bad("/mcmp/blocker_scale", "must be positive");
  if (mcmp.max_backtracks < 0) bad("/mcmp/max_backtracks", "must be non-negative");
}

bool operator==(const Scenario& a, const Scenario& b) { return serialize_scenario(a) == serialize_scenario(b); }

Scenario parse_scenario(const std::string& text, const std::string& source_name) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offset -> line number.
    const std::size_t offset = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
    throw ScenarioError(source_name + ":" + std::to_string(line) + ": invalid JSON: " + e.what(), "", line);
  }
  const LineIndex index(text);
  const Reader r(root, index, source_name);
  if (!root.is_object()) r.fail("", "scenario must be a JSON object");

  Scenario s;
  s.name = r.find("/name") ? r.string("/name") : "";
  const std::string dyn = r.string("/dynamics");
  if (dyn == "single_integrator") s.dynamics = Dynamics::single_integrator;
  else if (dyn == "double_integrator") s.dynamics = Dynamics::double_integrator;
  else r.fail("/dynamics", "expected \"single_integrator\" or \"double_integrator\"");
  s.dimension = static_cast<int>(r.integer("/dimension"));
  if (s.dimension < 1 || s.dimension > 3) r.fail("/dimension", "must be 1, 2 or 3");
  const int k = s.dimension;
  const int n = s.state_dim();
  s.dt = r.number("/dt");
  if (!(s.dt > 0.0)) r.fail("/dt", "must be positive");
  s.speed = r.number_or("/speed", 1.0);
  if (r.find("/measurement_matrix")) s.measurement_matrix = r.matrix("/measurement_matrix", -1, n);
  const int p = s.measurement_matrix.size() > 0 ? static_cast<int>(s.measurement_matrix.rows()) : n;
  s.process_noise = r.matrix("/noise/process", n, n);
  s.measurement_noise = r.matrix("/noise/measurement", p, p);
  s.Q = r.matrix("/cost/Q", n, n);
  s.R = r.matrix("/cost/R", k, k);
  s.F = r.matrix("/cost/F", n, n);
  s.initial_covariance = r.matrix("/initial_covariance", n, n);
  s.bounds.lower = r.vector("/bounds/lower", k);
  s.bounds.upper = r.vector("/bounds/upper", k);
  s.start = r.vector("/start", n);

  const std::string goal_type = r.string("/goal/type");
  if (goal_type == "ball") {
    s.goal.shape = GoalRegion::Shape::ball;
    s.goal.center = r.vector("/goal/center", k);
    s.goal.radius = r.number("/goal/radius");
  } else if (goal_type == "box") {
    s.goal.shape = GoalRegion::Shape::box;
    s.goal.lower = r.vector("/goal/lower", k);
    s.goal.upper = r.vector("/goal/upper", k);
  } else {
    r.fail("/goal/type", "expected \"ball\" or \"box\"");
  }

  if (r.find("/obstacles")) {
    const json& obs = r.at("/obstacles");
    if (!obs.is_array()) r.fail("/obstacles", "expected an array");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::string base = "/obstacles/" + std::to_string(i);
      ObstacleSpec o;
      const std::string type = r.string(base + "/type");
      if (type == "box") {
        o.kind = ObstacleSpec::Kind::box;
        o.lower = r.vector(base + "/lower", k);
        o.upper = r.vector(base + "/upper", k);
      } else if (type == "vertices") {
        o.kind = ObstacleSpec::Kind::vertices;
        const json& vs = r.at(base + "/vertices");
        if (!vs.is_array()) r.fail(base + "/vertices", "expected an array of points");
        for (std::size_t j = 0; j < vs.size(); ++j) o.vertices.push_back(r.vector(base + "/vertices/" + std::to_string(j), k));
      } else if (type == "halfspaces") {
        o.kind = ObstacleSpec::Kind::halfspaces;
        const json& hs = r.at(base + "/halfspaces");
        if (!hs.is_array()) r.fail(base + "/halfspaces", "expected an array of {normal, offset}");
        for (std::size_t j = 0; j < hs.size(); ++j) {
          const std::string hb = base + "/halfspaces/" + std::to_string(j);
          o.faces.push_back({r.vector(hb + "/normal", k), r.number(hb + "/offset")});
        }
      } else {
        r.fail(base + "/type", "expected \"box\", \"vertices\" or \"halfspaces\"");
      }
      try {
        (void)o.build();
      } catch (const std::invalid_argument& e) {
        r.fail(base, e.what());
      }
      s.obstacles.push_back(std::move(o));
    }
  }
  s.alpha = r.number_or("/alpha", 0.01);
  s.seed = r.unsigned_or("/seed", 1);
  if (r.find("/nominal_path")) {
    const json& np = r.at("/nominal_path");
    if (!np.is_array()) r.fail("/nominal_path", "expected an array of points");
    const int want = s.dynamics == Dynamics::single_integrator ? k : n;
    for (std::size_t i = 0; i < np.size(); ++i) s.nominal_path.push_back(r.vector("/nominal_path/" + std::to_string(i), want));
  }

  s.planner.nodes = static_cast<int>(r.integer_or("/planner/nodes", s.planner.nodes));
  s.planner.seed = r.unsigned_or("/planner/seed", s.planner.seed);
  s.planner.resolution = r.number_or("/planner/resolution", s.planner.resolution);
  s.planner.time_weight = r.number_or("/planner/time_weight", s.planner.time_weight);
  if (r.find("/planner/control_weight")) s.planner.control_weight = r.matrix("/planner/control_weight", k, k);
  s.planner.velocity_bound = r.number_or("/planner/velocity_bound", s.planner.velocity_bound);
  s.planner.radius_scale = r.number_or("/planner/radius_scale", s.planner.radius_scale);
  s.planner.smoothing = r.boolean_or("/planner/smoothing", s.planner.smoothing);

  s.mcmp.inflation_min = r.number_or("/mcmp/inflation_min", s.mcmp.inflation_min);
  s.mcmp.inflation_max = r.number_or("/mcmp/inflation_max", s.mcmp.inflation_max);
  s.mcmp.bisection_steps = static_cast<int>(r.integer_or("/mcmp/bisection_steps", s.mcmp.bisection_steps));
  s.mcmp.backtrack = r.boolean_or("/mcmp/backtrack", s.mcmp.backtrack);
  s.mcmp.max_backtracks = static_cast<int>(r.integer_or("/mcmp/max_backtracks", s.mcmp.max_backtracks));
  s.mcmp.blocker_scale = r.number_or("/mcmp/blocker_scale", s.mcmp.blocker_scale);
  s.mcmp.batch = r.integer_or("/mcmp/batch", s.mcmp.batch);
  s.mcmp.max_m = r.integer_or("/mcmp/max_m", s.mcmp.max_m);
  s.mcmp.confidence_z = r.number_or("/mcmp/confidence_z", s.mcmp.confidence_z);
  s.mcmp.rel_tol = r.number_or("/mcmp/rel_tol", s.mcmp.rel_tol);

  // Semantic checks, re-reported against the source lines.
  try {
    s.validate();
  } catch (const ScenarioError& e) {
    std::string what = e.what();
    const std::string prefix = e.pointer() + ": ";
    if (what.rfind(prefix, 0) == 0) what = what.substr(prefix.size());
    r.fail(e.pointer(), what);
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path + ": cannot open scenario file", "", 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

std::string serialize_scenario(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["dynamics"] = s.dynamics == Dynamics::single_integrator ? "single_integrator" : "double_integrator";
  j["dimension"] = s.dimension;
  j["dt"] = s.dt;
  j["speed"] = s.speed;
  j["noise"] = {{"process", to_json(s.process_noise)}, {"measurement", to_json(s.measurement_noise)}};
  if (s.measurement_matrix.size() > 0) j["measurement_matrix"] = to_json(s.measurement_matrix);
  j["cost"] = {{"Q", to_json(s.Q)}, {"R", to_json(s.R)}, {"F", to_json(s.F)}};
  j["initial_covariance"] = to_json(s.initial_covariance);
  j["bounds"] = {{"lower", to_json(s.bounds.lower)}, {"upper", to_json(s.bounds.upper)}};
  j["start"] = to_json(s.start);
  if (s.goal.shape == GoalRegion::Shape::ball) {
    j["goal"] = {{"type", "ball"}, {"center", to_json(s.goal.center)}, {"radius", s.goal.radius}};
  } else {
    j["goal"] = {{"type", "box"}, {"lower", to_json(s.goal.lower)}, {"upper", to_json(s.goal.upper)}};
  }
  json obs = json::array();
  for (const ObstacleSpec& o : s.obstacles) {
    switch (o.kind) {
      case ObstacleSpec::Kind::box:
        obs.push_back({{"type", "box"}, {"lower", to_json(o.lower)}, {"upper", to_json(o.upper)}});
        break;
      case ObstacleSpec::Kind::vertices: {
        json vs = json::array();
        for (const VectorXd& v : o.vertices) vs.push_back(to_json(v));
        obs.push_back({{"type", "vertices"}, {"vertices", vs}});
        break;
      }
      case ObstacleSpec::Kind::halfspaces: {
        json hs = json::array();
        for (const Halfspace& h : o.faces) hs.push_back({{"normal", to_json(h.normal)}, {"offset", h.offset}});
        obs.push_back({{"type", "halfspaces"}, {"halfspaces", hs}});
        break;
      }
    }
  }
  j["obstacles"] = obs;
  j["alpha"] = s.alpha;
  j["seed"] = s.seed;
  if (!s.nominal_path.empty()) {
    json np = json::array();
    for (const VectorXd& v : s.nominal_path) np.push_back(to_json(v));
    j["nominal_path"] = np;
  }
  json pl = {{"nodes", s.planner.nodes},
             {"seed", s.planner.seed},
             {"resolution", s.planner.resolution},
             {"time_weight", s.planner.time_weight},
             {"velocity_bound", s.planner.velocity_bound},
             {"radius_scale", s.planner.radius_scale},
             {"smoothing", s.planner.smoothing}};
  if (s.planner.control_weight.size() > 0) pl["control_weight"] = to_json(s.planner.control_weight);
  j["planner"] = pl;
  j["mcmp"] = {{"inflation_min", s.mcmp.inflation_min}, {"inflation_max", s.mcmp.inflation_max},
               {"bisection_steps", s.mcmp.bisection_steps}, {"backtrack", s.mcmp.backtrack},
               {"max_backtracks", s.mcmp.max_backtracks}, {"blocker_scale", s.mcmp.blocker_scale},
               {"batch", s.mcmp.batch}, {"max_m", s.mcmp.max_m},
               {"confidence_z", s.mcmp.confidence_z}, {"rel_tol", s.mcmp.rel_tol}};
  return j.dump(2) + "\n";
}

PlannedPath scenario_nominal_path(const Scenario& s) {
  if (s.nominal_path.empty()) throw std::invalid_argument("scenario has no nominal_path");
  const SteeringModel model = s.steering_model();
  if (s.dynamics == Dynamics::single_integrator) {
    PlannedPath p;
    p.states = s.nominal_path;
    p.cost = path_length(p.states);
    p.feasible = true;
    return p;
  }
  return connect_states(model, s.nominal_path);
}

PathProblem make_path_problem(const Scenario& s, NominalTrajectory nominal, double dt_override) {
  const DiscreteLQGSystem sys = s.discrete_system(dt_override);
  TrackingCost cost = s.tracking_cost();
  // Q and R are cost rates; the per-step weights scale with dt.
  cost.Q *= sys.dt;
  cost.R *= sys.dt;
  return PathProblem::build(std::move(nominal), sys, cost, s.initial_covariance, s.workspace());
}

PathProblem make_path_problem(const Scenario& s, const PlannedPath& path, double dt_override) {
  const DiscreteLQGSystem sys = s.discrete_system(dt_override);
  return make_path_problem(s, time_parameterize(path, s.steering_model(), sys, s.speed), dt_override);
}

}  // namespace mcmp
