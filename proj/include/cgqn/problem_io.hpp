#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "cgqn/problem.hpp"

namespace cgqn {

using json = nlohmann::ordered_json;

class ProblemFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rationals become "num/den" strings (integers without the "/1"); doubles
/// become JSON numbers, which the writer emits in shortest round-trip form.
template <Field T>
json scalar_to_json(const T& x) {
  if constexpr (is_exact_v<T>) {
    return x.get_str();
  } else {
    if (!std::isfinite(x)) return to_string(x);
    return x;
  }
}

template <Field T>
T scalar_from_json(const json& j) {
  try {
    if (j.is_string()) return parse_scalar<T>(j.get<std::string>());
    if (j.is_number_integer()) return parse_scalar<T>(j.dump());
    if (j.is_number_float()) {
      if constexpr (is_exact_v<T>) return parse_scalar<T>(j.dump());
      else return j.get<double>();
    }
  } catch (const ScalarParseError& e) {
    throw ProblemFileError(e.what());
  }
  throw ProblemFileError("expected a number or numeric string, got " + j.dump());
}

template <Field T>
json vector_to_json(const Vector<T>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(scalar_to_json(x));
  return a;
}

template <Field T>
Vector<T> vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ProblemFileError(std::string(what) + " must be an array");
  Vector<T> v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = scalar_from_json<T>(j[i]);
  return v;
}

template <Field T>
json matrix_to_json(const SymMatrix<T>& A) {
  json rows = json::array();
  for (std::size_t i = 0; i < A.size(); ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < A.size(); ++j) r.push_back(scalar_to_json(A(i, j)));
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Row-major square matrix. Rational files must be exactly symmetric; float
/// files may differ by rounding (1e-12 relative) and are averaged.
template <Field T>
SymMatrix<T> matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ProblemFileError(std::string(what) + " must be an array of rows");
  const std::size_t n = j.size();
  Matrix<T> m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_array() || j[i].size() != n) throw ProblemFileError(std::string(what) + " must be square");
    for (std::size_t k = 0; k < n; ++k) m(i, k) = scalar_from_json<T>(j[i][k]);
  }
  if constexpr (!is_exact_v<T>) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (std::fabs(m(a, b) - m(b, a)) > 1e-12 * std::max({1.0, std::fabs(m(a, b)), std::fabs(m(b, a))}))
          throw AsymmetricMatrixError(a, b);
  }
  return SymMatrix<T>(std::move(m));
}

template <Field T>
json problem_to_json(const QuadraticProblem<T>& p) {
  json j;
  j["scalar_mode"] = scalar_traits<T>::mode_name;
  j["n"] = p.dimension();
  j["H"] = matrix_to_json(p.hessian());
  j["c"] = vector_to_json(p.linear());
  j["x0"] = vector_to_json(p.start());
  return j;
}

/// Mode recorded in a problem document ("rational" or "float").
inline std::string problem_scalar_mode(const json& j) {
  if (!j.is_object() || !j.contains("scalar_mode") || !j["scalar_mode"].is_string())
    throw ProblemFileError("problem file needs a \"scalar_mode\" string");
  const auto mode = j["scalar_mode"].get<std::string>();
  if (mode != "rational" && mode != "float") throw ProblemFileError("unknown scalar_mode '" + mode + "'");
  return mode;
}

/// Throws ProblemFileError (malformed), AsymmetricMatrixError or
/// NotPositiveDefiniteError.
template <Field T>
QuadraticProblem<T> problem_from_json(const json& j) {
  problem_scalar_mode(j);
  for (const char* key : {"H", "c", "x0"})
    if (!j.contains(key)) throw ProblemFileError(std::string("problem file is missing \"") + key + "\"");
  SymMatrix<T> H = matrix_from_json<T>(j["H"], "H");
  if (H.size() == 0) throw ProblemFileError("problem dimension must be at least 1");
  if (j.contains("n") && (!j["n"].is_number_unsigned() || j["n"].get<std::size_t>() != H.size()))
    throw ProblemFileError("\"n\" does not match the size of H");
  Vector<T> c = vector_from_json<T>(j["c"], "c");
  Vector<T> x0 = vector_from_json<T>(j["x0"], "x0");
  if (c.size() != H.size() || x0.size() != H.size()) throw ProblemFileError("c and x0 must have length n");
  return QuadraticProblem<T>(std::move(H), std::move(c), std::move(x0));
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProblemFileError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ProblemFileError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ProblemFileError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ProblemFileError("write failed for '" + path + "'");
}

inline std::string serialize(const json& j) { return j.dump(2) + "\n"; }

}  // namespace cgqn
