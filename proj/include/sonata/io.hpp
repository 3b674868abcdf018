#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sonata/errors.hpp"
#include "sonata/network.hpp"
#include "sonata/problem.hpp"

namespace sonata {

using json = nlohmann::json;

inline json to_json(const Matrix& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (int j = 0; j < v.size(); ++j) a.push_back(v(j));
  return a;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("matrix must be a nonempty array of rows");
  const auto rows = static_cast<int>(j.size());
  const auto cols = static_cast<int>(j[0].size());
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) throw ConfigError("ragged matrix rows");
    for (int k = 0; k < cols; ++k) M(i, k) = j[i][k].get<double>();
  }
  return M;
}

inline Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("vector must be an array");
  Vector v(static_cast<int>(j.size()));
  for (int k = 0; k < v.size(); ++k) v(k) = j[k].get<double>();
  return v;
}

// Topology: adjacency list; weights: dense rows.
inline json to_json(const Topology& g) {
  json adj = json::array();
  for (const auto& nb : g.out_neighbors()) adj.push_back(nb);
  return {{"m", g.m}, {"directed", g.directed}, {"adjacency", adj}};
}

inline Topology topology_from_json(const json& j) {
  const int m = j.at("m").get<int>();
  const bool directed = j.value("directed", false);
  std::vector<Arc> arcs;
  const auto& adj = j.at("adjacency");
  if (static_cast<int>(adj.size()) != m) throw ConfigError("adjacency list length differs from m");
  for (int i = 0; i < m; ++i)
    for (const auto& k : adj[i]) arcs.emplace_back(i, k.get<int>());
  return make_topology(m, std::move(arcs), directed);
}

inline json to_json(const MixingMatrix& W) { return {{"rho", W.rho}, {"weights", to_json(W.W)}}; }

inline MixingMatrix mixing_matrix_from_json(const json& j) { return make_mixing_matrix(matrix_from_json(j.at("weights"))); }

inline json nonsmooth_to_json(const NonsmoothTerm& g) {
  switch (g.kind) {
    case NonsmoothTerm::Kind::zero: return {{"kind", "zero"}};
    case NonsmoothTerm::Kind::l1: return {{"kind", "l1"}, {"weight", g.param}};
    case NonsmoothTerm::Kind::indicator_ball: return {{"kind", "indicator_ball"}, {"radius", g.param}};
  }
  return {};
}

inline NonsmoothTerm nonsmooth_from_json(const json& j) {
  const auto kind = j.value("kind", std::string("zero"));
  if (kind == "zero") return NonsmoothTerm::zero();
  if (kind == "l1") return NonsmoothTerm::l1(j.at("weight").get<double>());
  if (kind == "indicator_ball") return NonsmoothTerm::indicator_ball(j.at("radius").get<double>());
  throw ConfigError("unknown nonsmooth term: " + kind);
}

inline json constraint_to_json(const ConstraintSet& K) {
  switch (K.kind) {
    case ConstraintSet::Kind::all_space: return {{"kind", "all_space"}};
    case ConstraintSet::Kind::ball: return {{"kind", "ball"}, {"radius", K.radius}};
    case ConstraintSet::Kind::box: return {{"kind", "box"}, {"lo", to_json(K.lo)}, {"hi", to_json(K.hi)}};
  }
  return {};
}

inline ConstraintSet constraint_from_json(const json& j) {
  const auto kind = j.value("kind", std::string("all_space"));
  if (kind == "all_space") return ConstraintSet::all_space();
  if (kind == "ball") return ConstraintSet::ball(j.at("radius").get<double>());
  if (kind == "box") return ConstraintSet::box(vector_from_json(j.at("lo")), vector_from_json(j.at("hi")));
  throw ConfigError("unknown constraint set: " + kind);
}

// Quadratic problems only: each loss is stored as (H, g, c).
inline json to_json(const CompositeProblem& p) {
  if (!p.quadratic()) throw CapabilityError("only quadratic problems are serializable");
  json losses = json::array();
  for (const auto& f : p.losses) {
    const auto& q = static_cast<const QuadraticLoss&>(*f);
    losses.push_back({{"H", to_json(q.H())}, {"g", to_json(q.g())}, {"c", q.c()}});
  }
  return {{"losses", losses}, {"G", nonsmooth_to_json(p.g)}, {"K", constraint_to_json(p.K)}};
}

inline CompositeProblem problem_from_json(const json& j) {
  std::vector<std::shared_ptr<const SmoothLoss>> losses;
  for (const auto& l : j.at("losses"))
    losses.push_back(std::make_shared<QuadraticLoss>(matrix_from_json(l.at("H")), vector_from_json(l.at("g")),
                                                     l.value("c", 0.0)));
  return make_problem(std::move(losses), nonsmooth_from_json(j.value("G", json::object())),
                      constraint_from_json(j.value("K", json::object())));
}

// One CSV per agent, one sample per row: a_1, ..., a_d, b.
inline std::pair<Matrix, Vector> load_agent_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        row.clear();
        break;  // header line
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty() || rows[0].size() < 2) throw ConfigError("dataset file has no numeric rows: " + path);
  const auto n = static_cast<int>(rows.size());
  const auto d = static_cast<int>(rows[0].size()) - 1;
  Matrix A(n, d);
  Vector b(n);
  for (int k = 0; k < n; ++k) {
    if (static_cast<int>(rows[k].size()) != d + 1) throw ConfigError("ragged dataset rows in " + path);
    for (int j = 0; j < d; ++j) A(k, j) = rows[k][j];
    b(k) = rows[k][d];
  }
  return {A, b};
}

inline RidgeData load_ridge_data(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("dataset needs at least one agent file");
  RidgeData data;
  for (const auto& path : paths) {
    auto [A, b] = load_agent_csv(path);
    if (!data.A.empty() && (A.rows() != data.A[0].rows() || A.cols() != data.A[0].cols()))
      throw ConfigError("agent datasets must share n and d");
    data.A.push_back(std::move(A));
    data.b.push_back(std::move(b));
  }
  data.m = static_cast<int>(paths.size());
  data.n = static_cast<int>(data.A[0].rows());
  data.d = static_cast<int>(data.A[0].cols());
  return data;
}

}  // namespace sonata
