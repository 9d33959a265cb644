#pragma once

// Experiment configuration shared by the CLI and the tests.
//
// The file is JSON with the sections problem, grid, activation, constraints,
// homotopy and certify. Every key is optional; unknown sections or keys are
// rejected. After the file is read, environment variables named
// FRACCTL_<SECTION>_<KEY> (upper case) override single keys; their value is
// parsed as JSON when possible and taken as a string otherwise.

#include <fracctl/stationarity.hpp>

#include <json.hpp>

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <string>

namespace fracctl {

struct Config {
  // problem
  Vec y0 = Vec::Ones(2);
  Vec target = (Vec(2) << 2.0, 0.5).finished();
  Vec weight = Vec::Ones(2);
  // grid
  double final_time = 1.0;
  int steps = 128;
  double gamma = 0.5;
  // activation
  std::string activation = "relu";
  double activation_param = 0.0;
  // constraints
  Vec lower = Vec::Constant(2, -1.0);
  Vec upper = Vec::Constant(2, 1.0);
  // homotopy / certify
  HomotopyConfig homotopy;
  CertifyTolerances certify;

  Index dim() const { return y0.size(); }
  TimeGrid grid() const { return TimeGrid(final_time, steps, gamma); }
  Activation make_activation() const { return Activation::from_name(activation, activation_param); }
  ControlProblem problem() const {
    const TimeGrid g = grid();
    return {g, y0, QuadraticTerminalCost{target, weight},
            BoxConstraint::constant(lower, upper, g.nodes())};
  }
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"problem", {"y0", "target", "weight"}},
      {"grid", {"final_time", "steps", "gamma"}},
      {"activation", {"name", "param"}},
      {"constraints", {"lower", "upper"}},
      {"homotopy",
       {"eps0", "eps_factor", "stages", "stage_tolerance", "max_iterations", "armijo_c",
        "armijo_backtrack", "armijo_max_backtracks", "lr_exponent"}},
      {"certify",
       {"samples", "kappa", "seed", "adjoint_relative", "grad_a", "inclusion", "sign", "vi",
        "b_stationarity"}},
  };
  return schema;
}

inline Vec json_vector(const nlohmann::json& v, Index n, const std::string& what) {
  if (v.is_number()) return Vec::Constant(n, v.get<double>());
  if (!v.is_array()) throw ConfigError(what + ": expected a number or an array");
  Vec out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(what + ": non-numeric entry");
    out(static_cast<Index>(i)) = v[i].get<double>();
  }
  return out;
}

inline std::string upper_case(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

/// Build a Config from parsed JSON plus environment overrides.
inline Config config_from_json(nlohmann::json doc, const char* const* envp = nullptr) {
  using nlohmann::json;
  if (doc.is_null()) doc = json::object();
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  const auto& schema = detail::config_schema();
  for (const auto& [section, body] : doc.items()) {
    const auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError("config: unknown section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      if (!it->second.count(key)) {
        throw ConfigError("config: unknown key '" + section + "." + key + "'");
      }
    }
  }
  for (const auto& [section, keys] : schema) {
    for (const auto& key : keys) {
      const std::string var =
          "FRACCTL_" + detail::upper_case(section) + "_" + detail::upper_case(key);
      const char* raw = std::getenv(var.c_str());
      if (envp != nullptr) {
        raw = nullptr;
        for (auto e = envp; *e != nullptr; ++e) {
          const std::string entry(*e);
          if (entry.rfind(var + "=", 0) == 0) raw = *e + var.size() + 1;
        }
      }
      if (raw == nullptr) continue;
      json parsed = json::parse(raw, nullptr, false);
      doc[section][key] = parsed.is_discarded() ? json(std::string(raw)) : parsed;
    }
  }

  Config c;
  auto get = [&](const char* section, const char* key) -> const json* {
    const auto s = doc.find(section);
    if (s == doc.end()) return nullptr;
    const auto k = s->find(key);
    return k == s->end() ? nullptr : &*k;
  };
  auto number = [&](const char* section, const char* key, auto& out) {
    if (const json* v = get(section, key)) {
      if (!v->is_number()) {
        throw ConfigError(std::string("config: ") + section + "." + key + " must be a number");
      }
      out = v->get<std::decay_t<decltype(out)>>();
    }
  };
  try {
    if (const json* v = get("problem", "y0")) c.y0 = detail::json_vector(*v, 1, "problem.y0");
    const Index n = c.y0.size();
    c.target = Vec::Constant(n, 0.0);
    if (n == 2 && !get("problem", "target")) c.target << 2.0, 0.5;
    c.weight = Vec::Ones(n);
    c.lower = Vec::Constant(n, -1.0);
    c.upper = Vec::Constant(n, 1.0);
    if (const json* v = get("problem", "target")) c.target = detail::json_vector(*v, n, "problem.target");
    if (const json* v = get("problem", "weight")) c.weight = detail::json_vector(*v, n, "problem.weight");
    number("grid", "final_time", c.final_time);
    number("grid", "steps", c.steps);
    number("grid", "gamma", c.gamma);
    if (const json* v = get("activation", "name")) {
      if (!v->is_string()) throw ConfigError("config: activation.name must be a string");
      c.activation = v->get<std::string>();
    }
    number("activation", "param", c.activation_param);
    auto bound = [&](const char* key, Vec& out) {
      if (const json* v = get("constraints", key)) {
        if (v->is_string()) {
          const std::string s = v->get<std::string>();
          const double inf = std::numeric_limits<double>::infinity();
          if (s == "inf" || s == "+inf") out = Vec::Constant(n, inf);
          else if (s == "-inf") out = Vec::Constant(n, -inf);
          else throw ConfigError(std::string("config: constraints.") + key + ": bad value " + s);
        } else {
          out = detail::json_vector(*v, n, std::string("constraints.") + key);
        }
      }
    };
    bound("lower", c.lower);
    bound("upper", c.upper);
    auto& h = c.homotopy;
    number("homotopy", "eps0", h.eps0);
    number("homotopy", "eps_factor", h.eps_factor);
    number("homotopy", "stages", h.stages);
    number("homotopy", "stage_tolerance", h.stage_tolerance);
    number("homotopy", "max_iterations", h.max_iterations);
    number("homotopy", "armijo_c", h.armijo.c);
    number("homotopy", "armijo_backtrack", h.armijo.backtrack);
    number("homotopy", "armijo_max_backtracks", h.armijo.max_backtracks);
    number("homotopy", "lr_exponent", h.lr_exponent);
    auto& t = c.certify;
    number("certify", "samples", t.samples);
    number("certify", "kappa", t.kappa);
    number("certify", "seed", t.seed);
    number("certify", "adjoint_relative", t.adjoint_relative);
    number("certify", "grad_a", t.grad_a);
    number("certify", "inclusion", t.inclusion);
    number("certify", "sign", t.sign);
    number("certify", "vi", t.vi);
    number("certify", "b_stationarity", t.b_stationarity);
    t.lr_exponent = h.lr_exponent;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const Index n = c.y0.size();
  if (n == 0) throw ConfigError("config: problem.y0 must not be empty");
  if (c.target.size() != n || c.weight.size() != n || c.lower.size() != n || c.upper.size() != n) {
    throw ConfigError("config: vector lengths must match problem.y0");
  }
  try {
    (void)c.grid();
    (void)c.make_activation();
    c.homotopy.validate();
    BoxConstraint::constant(c.lower, c.upper, 2);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.steps < 2) throw ConfigError("config: grid.steps must be at least 2");
  if (c.certify.samples < 1) throw ConfigError("config: certify.samples must be positive");
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(std::move(doc));
}

}  // namespace fracctl
