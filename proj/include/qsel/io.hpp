#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsel/greedy.hpp"

// JSON and CSV persistence for every pipeline stage. Write -> read -> write is
// byte-identical: keys are emitted sorted and doubles use the shortest round-trip
// form, so regenerated files can be compared with a plain byte diff.
//
// The problem file deliberately has no slot for the unknown operator; it lives in a
// separate oracle file that only the measurement stage reads.

namespace qsel {

using nlohmann::json;

namespace io {

inline json matrix_to_json(const Matrix& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json rr = json::array(), ri = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ri.push_back(m(r, c).imag());
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ri));
  }
  return json{{"re", std::move(re)}, {"im", std::move(im)}};
}

inline Matrix matrix_from_json(const json& j) {
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (re.size() != im.size() || re.empty())
    throw std::invalid_argument("matrix: re and im must have equal non-zero row counts");
  Matrix m(re.size(), re.at(0).size());
  for (size_t r = 0; r < re.size(); ++r) {
    if (re.at(r).size() != static_cast<size_t>(m.cols()) || im.at(r).size() != static_cast<size_t>(m.cols()))
      throw std::invalid_argument("matrix: ragged rows");
    for (size_t c = 0; c < re.at(r).size(); ++c)
      m(r, c) = Complex(re.at(r).at(c).get<double>(), im.at(r).at(c).get<double>());
  }
  return m;
}

inline json cvector_to_json(const Vector& v) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re.push_back(v[i].real());
    im.push_back(v[i].imag());
  }
  return json{{"re", std::move(re)}, {"im", std::move(im)}};
}

inline Vector cvector_from_json(const json& j) {
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (re.size() != im.size()) throw std::invalid_argument("vector: re and im lengths differ");
  Vector v(re.size());
  for (size_t i = 0; i < re.size(); ++i)
    v[i] = Complex(re.at(i).get<double>(), im.at(i).get<double>());
  return v;
}

inline json rvector_to_json(const RealVector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline RealVector rvector_from_json(const json& j) {
  RealVector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

inline const char* rule_name(UpdateRule r) {
  return r == UpdateRule::newton_step ? "newton" : "theta";
}

inline UpdateRule rule_from_name(const std::string& s) {
  if (s == "newton") return UpdateRule::newton_step;
  if (s == "theta") return UpdateRule::theta_implicit;
  throw std::invalid_argument("update rule must be 'newton' or 'theta', got '" + s + "'");
}

inline json monotonic_to_json(const MonotonicSettings& s) {
  return json{{"beta", s.beta},
              {"theta", s.theta},
              {"tol", s.tol},
              {"max_iters", s.max_iters},
              {"max_field_norm", s.max_field_norm},
              {"update_rule", rule_name(s.update_rule)}};
}

inline MonotonicSettings monotonic_from_json(const json& j) {
  MonotonicSettings s;
  s.beta = j.at("beta").get<double>();
  s.theta = j.at("theta").get<double>();
  s.tol = j.at("tol").get<double>();
  s.max_iters = j.at("max_iters").get<int>();
  s.max_field_norm = j.at("max_field_norm").get<double>();
  s.update_rule = rule_from_name(j.at("update_rule").get<std::string>());
  return s;
}

inline json multistart_to_json(const MultistartSettings& s) {
  return json{{"restarts", s.restarts},
              {"init_scale", s.init_scale},
              {"convergence_tol", s.convergence_tol},
              {"max_evals", s.max_evals},
              {"target_cost", s.target_cost},
              {"seed", s.seed}};
}

inline MultistartSettings multistart_from_json(const json& j) {
  MultistartSettings s;
  s.restarts = j.at("restarts").get<int>();
  s.init_scale = j.at("init_scale").get<double>();
  s.convergence_tol = j.at("convergence_tol").get<double>();
  s.max_evals = j.at("max_evals").get<int>();
  s.target_cost = j.at("target_cost").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline json trace_to_json(const OptimizerTrace& t) {
  return json{{"objective_history", t.objective_history},
              {"iterations", t.iterations},
              {"converged", t.converged},
              {"min_step_term", t.min_step_term}};
}

inline OptimizerTrace trace_from_json(const json& j) {
  OptimizerTrace t;
  t.objective_history = j.at("objective_history").get<std::vector<double>>();
  t.iterations = j.at("iterations").get<int>();
  t.converged = j.at("converged").get<bool>();
  t.min_step_term = j.at("min_step_term").get<double>();
  return t;
}

inline void require_format(const json& j, const std::string& expected) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != expected)
    throw std::invalid_argument("file is not a '" + expected + "' document");
  if (j.at("version").get<int>() != 1)
    throw std::invalid_argument("unsupported " + expected + " version");
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("cannot parse '" + path + "': " + e.what());
  }
}

// temp file plus rename, so readers never observe a half-written document
inline void write_json_atomic(const std::string& path, const json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write '" + tmp + "'");
    out << j.dump(2) << '\n';
    if (!out) throw std::invalid_argument("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace io

}  // namespace qsel
