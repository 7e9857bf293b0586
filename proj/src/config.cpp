#include "deepc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace deepc {

namespace {

using nlohmann::json;

class Section
{
public:
  Section(const json & node, std::string path, std::initializer_list<const char *> keys) : node_(node), path_(std::move(path))
  {
    if (!node_.is_object()) { throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object"); }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto & item : node_.items()) {
      if (!allowed.count(item.key())) { throw ValidationError(field(item.key()), "unknown key"); }
    }
  }

  std::string field(const std::string & key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const char * key) const { return node_.contains(key); }
  const json & at(const char * key) const { return node_.at(key); }

  void number(const char * key, double & out) const
  {
    if (!has(key)) { return; }
    const auto & v = at(key);
    if (!v.is_number()) { throw ValidationError(field(key), "expected a number"); }
    out = v.get<double>();
  }

  void integer(const char * key, int & out) const
  {
    if (!has(key)) { return; }
    const auto & v = at(key);
    if (!v.is_number_integer()) { throw ValidationError(field(key), "expected an integer"); }
    const auto x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ValidationError(field(key), "integer out of range");
    }
    out = static_cast<int>(x);
  }

  void seed(const char * key, std::uint64_t & out) const
  {
    if (!has(key)) { return; }
    const auto & v = at(key);
    if (!v.is_number_unsigned()) { throw ValidationError(field(key), "expected a non-negative integer"); }
    out = v.get<std::uint64_t>();
  }

  void string(const char * key, std::string & out) const
  {
    if (!has(key)) { return; }
    const auto & v = at(key);
    if (!v.is_string()) { throw ValidationError(field(key), "expected a string"); }
    out = v.get<std::string>();
  }

  void list(const char * key, std::vector<double> & out) const
  {
    if (!has(key)) { return; }
    out = to_list(at(key), field(key));
  }

  void matrix(const char * key, RowMatrix & out) const
  {
    if (!has(key)) { return; }
    const auto & v = at(key);
    if (!v.is_array()) { throw ValidationError(field(key), "expected a list of rows"); }
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) { out.push_back(to_list(v[i], field(key) + "[" + std::to_string(i) + "]")); }
  }

  static std::vector<double> to_list(const json & v, const std::string & name)
  {
    if (v.is_number()) { return {v.get<double>()}; }
    if (!v.is_array()) { throw ValidationError(name, "expected a number or a list of numbers"); }
    std::vector<double> out;
    for (const auto & x : v) {
      if (!x.is_number()) { throw ValidationError(name, "expected a list of numbers"); }
      out.push_back(x.get<double>());
    }
    return out;
  }

private:
  const json & node_;
  std::string path_;
};

int line_of(const std::string & text, std::size_t byte)
{
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

void check(bool ok, const std::string & field, const std::string & what)
{
  if (!ok) { throw ValidationError(field, what); }
}

void check_matrix(const RowMatrix & m, const std::string & field, std::size_t rows, std::size_t cols)
{
  check(m.size() == rows, field, "expected " + std::to_string(rows) + " rows");
  for (const auto & r : m) { check(r.size() == cols, field, "expected " + std::to_string(cols) + " columns"); }
}

void check_channels(const std::vector<double> & v, std::size_t n, const std::string & field)
{
  check(v.size() == 1 || v.size() == n, field, "expected 1 or " + std::to_string(n) + " entries");
  for (double x : v) { check(!std::isnan(x), field, "NaN entry"); }
}

std::size_t cols_of(const RowMatrix & m) { return m.empty() ? 0 : m.front().size(); }

}  // namespace

void validate_config(const ExperimentConfig & cfg)
{
  std::size_t nx = 4, nu = 2, ny = 4;
  const auto & pl = cfg.plant;
  check(pl.type == "masses" || pl.type == "continuous" || pl.type == "discrete", "plant.type",
        "expected masses, continuous or discrete");
  check(pl.delta > 0.0 && std::isfinite(pl.delta), "plant.delta", "must be positive");
  if (pl.type != "masses") {
    nx = pl.A.size();
    check(nx > 0, "plant.A", "must be non-empty");
    check_matrix(pl.A, "plant.A", nx, nx);
    nu = cols_of(pl.B);
    check(nu > 0, "plant.B", "must be non-empty");
    check_matrix(pl.B, "plant.B", nx, nu);
    ny = pl.C.size();
    check(ny > 0, "plant.C", "must be non-empty");
    check_matrix(pl.C, "plant.C", ny, nx);
  }

  const auto & d = cfg.dpc;
  check(d.sigma >= 1, "dpc.sigma", "must be at least 1");
  check(d.ell >= 1, "dpc.ell", "must be at least 1");
  check(d.ng >= 1, "dpc.ng", "must be at least 1");
  check(d.lambda_g >= 0.0 && std::isfinite(d.lambda_g), "dpc.lambda_g", "must be non-negative");
  check(d.lambda_s >= 0.0 && std::isfinite(d.lambda_s), "dpc.lambda_s", "must be non-negative");
  check_channels(d.q_weights, ny, "dpc.q_weights");
  check_channels(d.r_weights, nu, "dpc.r_weights");
  for (double w : d.q_weights) { check(w >= 0.0, "dpc.q_weights", "weights must be non-negative"); }
  for (double w : d.r_weights) { check(w >= 0.0, "dpc.r_weights", "weights must be non-negative"); }
  check_channels(d.u_lower, nu, "dpc.u_lower");
  check_channels(d.u_upper, nu, "dpc.u_upper");
  check_channels(d.y_lower, ny, "dpc.y_lower");
  check_channels(d.y_upper, ny, "dpc.y_upper");
  for (std::size_t i = 0; i < nu; ++i) {
    check(d.u_lower[d.u_lower.size() == 1 ? 0 : i] <= d.u_upper[d.u_upper.size() == 1 ? 0 : i], "dpc.u_lower",
          "exceeds dpc.u_upper");
  }
  for (std::size_t i = 0; i < ny; ++i) {
    check(d.y_lower[d.y_lower.size() == 1 ? 0 : i] <= d.y_upper[d.y_upper.size() == 1 ? 0 : i], "dpc.y_lower",
          "exceeds dpc.y_upper");
  }

  const auto & o = cfg.offline;
  check(o.amplitude >= 0.0 && std::isfinite(o.amplitude), "offline.amplitude", "must be non-negative");

  const auto & r = cfg.reference;
  check(r.type == "setpoint" || r.type == "sinusoid", "reference.type", "expected setpoint or sinusoid");
  check_channels(r.offset, ny, "reference.offset");
  check_channels(r.amplitude, ny, "reference.amplitude");
  check_channels(r.phase, ny, "reference.phase");
  check(std::isfinite(r.omega), "reference.omega", "must be finite");
  if (r.u_equilibrium) {
    check(r.type == "setpoint", "reference.u", "the equilibrium input needs a setpoint reference");
  } else {
    check_channels(r.u, nu, "reference.u");
  }

  const auto & a = cfg.attack;
  check(a.mode == "none" || a.mode == "random" || a.mode == "algorithm1" || a.mode == "oracle", "attack.mode",
        "expected none, random, algorithm1 or oracle");
  check(a.rho >= 0.0 && std::isfinite(a.rho), "attack.rho", "must be non-negative");
  check_channels(a.target_amplitude, nu, "attack.target_amplitude");
  check_channels(a.target_phase, nu, "attack.target_phase");
  check(std::isfinite(a.target_omega), "attack.target_omega", "must be finite");
  check(a.oracle_samples >= 1, "attack.oracle_samples", "must be at least 1");

  const auto & run = cfg.run;
  check(run.steps > d.sigma, "run.steps", "must exceed dpc.sigma");
  check(run.replan_interval >= 1, "run.replan_interval", "must be at least 1");
  check(run.replan_interval <= d.ell, "run.replan_interval", "must not exceed dpc.ell");
  check(run.x0.empty() || run.x0.size() == nx, "run.x0", "expected " + std::to_string(nx) + " entries");
  check(run.tol > 0.0, "run.tol", "must be positive");
  check(run.max_iter >= 1, "run.max_iter", "must be at least 1");
  check(run.solver == "interior-point" || run.solver == "pipg", "run.solver", "expected interior-point or pipg");
  check(run.metric_begin >= 0, "run.metric_begin", "must be non-negative");
  check(run.metric_end == -1 || (run.metric_end > run.metric_begin && run.metric_end <= run.steps), "run.metric_end",
        "must be -1 or in (metric_begin, steps]");
  check(run.metric_begin < (run.metric_end == -1 ? run.steps : run.metric_end), "run.metric_begin",
        "window is empty");
}

ExperimentConfig parse_config(const std::string & text)
{
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error & e) {
    const int line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("line " + std::to_string(line) + ": " + e.what(), line);
  }

  ExperimentConfig cfg;
  const Section top(root, "", {"plant", "dpc", "offline", "reference", "attack", "run"});

  if (top.has("plant")) {
    const Section s(top.at("plant"), "plant", {"type", "delta", "A", "B", "C"});
    s.string("type", cfg.plant.type);
    s.number("delta", cfg.plant.delta);
    s.matrix("A", cfg.plant.A);
    s.matrix("B", cfg.plant.B);
    s.matrix("C", cfg.plant.C);
  }
  if (top.has("dpc")) {
    const Section s(top.at("dpc"), "dpc",
                    {"sigma", "ell", "ng", "lambda_g", "lambda_s", "q_weights", "r_weights", "u_lower", "u_upper",
                     "y_lower", "y_upper"});
    auto & d = cfg.dpc;
    s.integer("sigma", d.sigma);
    s.integer("ell", d.ell);
    s.integer("ng", d.ng);
    s.number("lambda_g", d.lambda_g);
    s.number("lambda_s", d.lambda_s);
    s.list("q_weights", d.q_weights);
    s.list("r_weights", d.r_weights);
    s.list("u_lower", d.u_lower);
    s.list("u_upper", d.u_upper);
    s.list("y_lower", d.y_lower);
    s.list("y_upper", d.y_upper);
  }
  if (top.has("offline")) {
    const Section s(top.at("offline"), "offline", {"amplitude", "seed"});
    s.number("amplitude", cfg.offline.amplitude);
    s.seed("seed", cfg.offline.seed);
  }
  if (top.has("reference")) {
    const Section s(top.at("reference"), "reference", {"type", "offset", "amplitude", "omega", "phase", "u"});
    auto & r = cfg.reference;
    s.string("type", r.type);
    s.list("offset", r.offset);
    s.list("amplitude", r.amplitude);
    s.number("omega", r.omega);
    s.list("phase", r.phase);
    if (s.has("u")) {
      const auto & u = s.at("u");
      if (u.is_string()) {
        if (u.get<std::string>() != "equilibrium") { throw ValidationError("reference.u", "expected \"equilibrium\" or a list"); }
        r.u_equilibrium = true;
        r.u.clear();
      } else {
        r.u_equilibrium = false;
        r.u             = Section::to_list(u, "reference.u");
      }
    }
  }
  if (top.has("attack")) {
    const Section s(top.at("attack"), "attack",
                    {"mode", "rho", "target_amplitude", "target_omega", "target_phase", "seed", "oracle_samples"});
    auto & a = cfg.attack;
    s.string("mode", a.mode);
    s.number("rho", a.rho);
    s.list("target_amplitude", a.target_amplitude);
    s.number("target_omega", a.target_omega);
    s.list("target_phase", a.target_phase);
    s.seed("seed", a.seed);
    s.integer("oracle_samples", a.oracle_samples);
  }
  if (top.has("run")) {
    const Section s(top.at("run"), "run",
                    {"steps", "replan_interval", "x0", "tol", "max_iter", "solver", "metric_begin", "metric_end", "out"});
    auto & r = cfg.run;
    s.integer("steps", r.steps);
    s.integer("replan_interval", r.replan_interval);
    s.list("x0", r.x0);
    s.number("tol", r.tol);
    s.integer("max_iter", r.max_iter);
    s.string("solver", r.solver);
    s.integer("metric_begin", r.metric_begin);
    s.integer("metric_end", r.metric_end);
    s.string("out", r.out);
  }

  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw std::runtime_error("cannot open config file " + path.string()); }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig & cfg)
{
  json root;
  auto & p = root["plant"];
  p["type"]  = cfg.plant.type;
  p["delta"] = cfg.plant.delta;
  if (cfg.plant.type != "masses") {
    p["A"] = cfg.plant.A;
    p["B"] = cfg.plant.B;
    p["C"] = cfg.plant.C;
  }

  const auto & d = cfg.dpc;
  root["dpc"]    = {{"sigma", d.sigma},         {"ell", d.ell},           {"ng", d.ng},
                    {"lambda_g", d.lambda_g},   {"lambda_s", d.lambda_s}, {"q_weights", d.q_weights},
                    {"r_weights", d.r_weights}, {"u_lower", d.u_lower},   {"u_upper", d.u_upper},
                    {"y_lower", d.y_lower},     {"y_upper", d.y_upper}};
  root["offline"] = {{"amplitude", cfg.offline.amplitude}, {"seed", cfg.offline.seed}};

  const auto & r   = cfg.reference;
  root["reference"] = {{"type", r.type},   {"offset", r.offset}, {"amplitude", r.amplitude},
                       {"omega", r.omega}, {"phase", r.phase}};
  if (r.u_equilibrium) {
    root["reference"]["u"] = "equilibrium";
  } else {
    root["reference"]["u"] = r.u;
  }

  const auto & a = cfg.attack;
  root["attack"] = {{"mode", a.mode},
                    {"rho", a.rho},
                    {"target_amplitude", a.target_amplitude},
                    {"target_omega", a.target_omega},
                    {"target_phase", a.target_phase},
                    {"seed", a.seed},
                    {"oracle_samples", a.oracle_samples}};

  const auto & run = cfg.run;
  root["run"] = {{"steps", run.steps},
                 {"replan_interval", run.replan_interval},
                 {"x0", run.x0},
                 {"tol", run.tol},
                 {"max_iter", run.max_iter},
                 {"solver", run.solver},
                 {"metric_begin", run.metric_begin},
                 {"metric_end", run.metric_end},
                 {"out", run.out}};
  return root.dump(2) + "\n";
}

}  // namespace deepc
