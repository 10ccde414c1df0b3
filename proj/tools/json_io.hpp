#pragma once

// JSON encodings shared by the command-line tool: matrices as {"dim", "rows"}, loop
// descriptors, holonomy samples, and verdicts.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kahler/prober.hpp"

namespace kahler::io {

using nlohmann::json;

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(std::move(row));
  }
  return {{"dim", m.rows()}, {"rows", std::move(rows)}};
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

[[noreturn]] inline void parse_fail(const std::string& what) { fail(ErrorCode::ParseError, what); }

inline Vec vec_from_json(const json& j) {
  if (!j.is_array()) parse_fail("expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) parse_fail("expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Mat matrix_from_json(const json& j) {
  if (!j.is_object() || !j.contains("rows")) parse_fail("matrix must be an object with \"rows\"");
  const json& rows = j.at("rows");
  if (!rows.is_array() || rows.empty()) parse_fail("matrix rows must be a nonempty array");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) parse_fail("matrix must be square");
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!row[static_cast<std::size_t>(k)].is_number()) parse_fail("matrix entries must be numbers");
      m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  if (j.contains("dim") && j.at("dim") != n) parse_fail("matrix \"dim\" disagrees with its rows");
  return m;
}

inline json to_json(const LoopSpec& spec) {
  return std::visit(
      [](const auto& loop) -> json {
        using T = std::decay_t<decltype(loop)>;
        if constexpr (std::is_same_v<T, RectangleLoop>) {
          return {{"kind", "rectangle"}, {"base", to_json(loop.base)}, {"axis_a", loop.axis_a}, {"axis_b", loop.axis_b},
                  {"side_a", loop.side_a}, {"side_b", loop.side_b}};
        } else if constexpr (std::is_same_v<T, FourierLoop>) {
          json s = json::array(), c = json::array();
          for (Eigen::Index k = 0; k < loop.sin_coeff.rows(); ++k) {
            s.push_back(to_json(Vec(loop.sin_coeff.row(k).transpose())));
            c.push_back(to_json(Vec(loop.cos_coeff.row(k).transpose())));
          }
          return {{"kind", "fourier"}, {"base", to_json(loop.base)}, {"sin", s}, {"cos", c}};
        } else {
          json v = json::array();
          for (const auto& x : loop.vertices) v.push_back(to_json(x));
          return {{"kind", "polygon"}, {"vertices", v}};
        }
      },
      spec);
}

inline LoopSpec loop_spec_from_json(const json& j) {
  const std::string kind = j.value("kind", "");
  if (kind == "rectangle")
    return RectangleLoop{vec_from_json(j.at("base")), j.at("axis_a").get<int>(), j.at("axis_b").get<int>(), j.at("side_a").get<double>(),
                         j.at("side_b").get<double>()};
  if (kind == "fourier") {
    FourierLoop f;
    f.base = vec_from_json(j.at("base"));
    const auto& s = j.at("sin");
    const auto& c = j.at("cos");
    if (s.size() != c.size()) parse_fail("fourier loop needs matching sin and cos rows");
    f.sin_coeff.resize(static_cast<Eigen::Index>(s.size()), f.base.size());
    f.cos_coeff.resize(static_cast<Eigen::Index>(c.size()), f.base.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
      f.sin_coeff.row(static_cast<Eigen::Index>(k)) = vec_from_json(s[k]).transpose();
      f.cos_coeff.row(static_cast<Eigen::Index>(k)) = vec_from_json(c[k]).transpose();
    }
    return f;
  }
  if (kind == "polygon") {
    PolygonLoop p;
    for (const auto& v : j.at("vertices")) p.vertices.push_back(vec_from_json(v));
    return p;
  }
  parse_fail("unknown loop kind '" + kind + "'");
}

inline json to_json(const DeltaConstant& d) {
  return {{"n", d.n}, {"delta", d.delta}, {"epsilon_used", d.epsilon_used}, {"inj_used", d.inj_used}};
}

inline json samples_to_json(const std::vector<HolonomySample>& samples) {
  json a = json::array();
  for (const auto& s : samples)
    a.push_back({{"word", s.word},
                 {"matrix", to_json(s.matrix)},
                 {"ode_steps", s.ode_steps},
                 {"orthogonality_defect", number(s.orthogonality_defect)}});
  return a;
}

inline json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    parse_fail(path + ": " + e.what());
  }
}

}  // namespace kahler::io
