// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON conversion for models, reference measures and paths.
//
// Model:  {"D": 2,
//          "terms": [{"p": 2, "C": [[...]]} | {"family": "sk" | "pure_p" | "bipartite" | "frobenius",
//                                               "beta": 1.0, "p": 3}],
//          "P1": {"atoms": [[...]], "weights": [...]} | {"family": "ising"}}
//         A bare {"family": ...} object is read as a single-term model.
// Path:   {"zetas": [0, 0.5], "values": [M0, M1]} where each M is a D x D
//         nested array, or a bare number when D = 1.

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "path.hpp"
#include "stats.hpp"

namespace hjparisi::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

inline Json to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json to_json(const SignedPiecewisePath& p) {
  Json values = Json::array();
  for (const auto& v : p.values()) values.push_back(to_json(v));
  return Json{{"zetas", p.zetas()}, {"values", values}};
}

inline Json to_json(const McEstimate& e) {
  return Json{{"estimate", e.mean}, {"stderr", e.std_error}, {"n", e.n_samples}, {"seed", e.seed}};
}

namespace detail {

[[noreturn]] inline void fail(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

inline double number(const Json& j, const std::string& what) {
  if (!j.is_number()) fail(what + " must be a number");
  return j.get<double>();
}

}  // namespace detail

/// A matrix from a nested array; a bare number is read as 1 x 1.
inline Mat mat_from_json(const Json& j, const std::string& what = "matrix") {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) detail::fail(what + " must be a non-empty nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) detail::fail(what + " rows must be non-empty arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) detail::fail(what + " is ragged");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = detail::number(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

inline Vec vec_from_json(const Json& j, const std::string& what = "vector") {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array() || j.empty()) detail::fail(what + " must be a non-empty array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = detail::number(j[i], what);
  return v;
}

namespace detail {

inline XiModel family_model(const Json& j, int dim_hint) {
  const std::string family = j.value("family", "");
  const double beta = j.contains("beta") ? number(j["beta"], "beta") : 1.0;
  if (family == "sk") return XiModel::sk(beta);
  if (family == "pure_p") {
    if (!j.contains("p") || !j["p"].is_number_integer()) fail("pure_p needs an integer p");
    return XiModel::pure_p(j["p"].get<int>(), beta);
  }
  if (family == "bipartite") return XiModel::bipartite(beta);
  if (family == "frobenius") return XiModel::frobenius_square(beta, j.value("dim", dim_hint > 0 ? dim_hint : 2));
  fail("unknown model family '" + family + "'");
}

}  // namespace detail

inline XiModel model_from_json(const Json& j) {
  if (!j.is_object()) detail::fail("model must be a JSON object");
  if (j.contains("family")) return detail::family_model(j, j.value("D", 0));
  if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty()) detail::fail("model needs a terms array");
  int dim = 0;
  if (j.contains("D")) {
    if (!j["D"].is_number_integer()) detail::fail("D must be an integer");
    dim = j["D"].get<int>();
  }
  std::vector<XiTerm> terms;
  for (const auto& t : j["terms"]) {
    if (!t.is_object()) detail::fail("each term must be an object");
    if (t.contains("family")) {
      const auto m = detail::family_model(t, dim);
      if (dim == 0) dim = m.dim();
      require(m.dim() == dim, ErrorCode::InvalidArgument, "term dimension differs from D");
      for (const auto& x : m.terms()) terms.push_back(x);
      continue;
    }
    if (!t.contains("p") || !t["p"].is_number_integer()) detail::fail("term needs an integer p");
    if (!t.contains("C")) detail::fail("term needs a coefficient matrix C");
    terms.push_back(XiTerm{t["p"].get<int>(), mat_from_json(t["C"], "C")});
  }
  if (dim == 0) detail::fail("D is required when no named family fixes it");
  return XiModel(dim, std::move(terms));
}

/// Reference measure from the model file; Ising by default.
inline ReferenceMeasure reference_from_json(const Json& j, int dim) {
  if (!j.contains("P1")) return ReferenceMeasure::ising(dim);
  const auto& r = j["P1"];
  if (r.is_object() && r.value("family", "") == "ising") return ReferenceMeasure::ising(dim);
  if (!r.is_object() || !r.contains("atoms") || !r.contains("weights")) detail::fail("P1 needs atoms and weights");
  std::vector<Vec> atoms;
  for (const auto& a : r["atoms"]) atoms.push_back(vec_from_json(a, "atom"));
  std::vector<double> weights;
  for (const auto& w : r["weights"]) weights.push_back(detail::number(w, "weight"));
  ReferenceMeasure out(std::move(atoms), std::move(weights));
  require(out.dim() == dim, ErrorCode::InvalidArgument, "P1 dimension differs from the model");
  return out;
}

inline Json model_to_json(const XiModel& m) {
  Json terms = Json::array();
  for (const auto& t : m.terms()) terms.push_back(Json{{"p", t.degree}, {"C", to_json(t.coeff)}});
  return Json{{"D", m.dim()}, {"terms", terms}};
}

inline Json reference_to_json(const ReferenceMeasure& p1) {
  Json atoms = Json::array();
  for (const auto& a : p1.atoms()) atoms.push_back(to_json(a));
  return Json{{"atoms", atoms}, {"weights", p1.weights()}};
}

inline SignedPiecewisePath signed_path_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("zetas") || !j.contains("values")) detail::fail("path needs zetas and values");
  std::vector<double> zetas;
  for (const auto& z : j["zetas"]) zetas.push_back(detail::number(z, "zeta"));
  std::vector<Mat> values;
  for (const auto& v : j["values"]) values.push_back(mat_from_json(v, "path value"));
  return {std::move(zetas), std::move(values)};
}

inline PiecewisePath path_from_json(const Json& j) { return PiecewisePath(signed_path_from_json(j)); }

inline Json read_json_file(const std::string& file) {
  std::ifstream in(file);
  require(static_cast<bool>(in), ErrorCode::InvalidArgument, "cannot open " + file);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    detail::fail(file + ": " + e.what());
  }
}

}  // namespace hjparisi::io
