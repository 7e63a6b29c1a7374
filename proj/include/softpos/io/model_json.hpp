#pragma once

// JSON documents exchanged between CLI stages: identified models and LQG
// designs. Matrices are arrays of rows.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "softpos/errors.hpp"
#include "softpos/linalg.hpp"
#include "softpos/lqg.hpp"
#include "softpos/state_space.hpp"

namespace softpos::io {

using Json = nlohmann::json;

inline constexpr const char* kModelFormat = "softpos.statespace/1";
inline constexpr const char* kDesignFormat = "softpos.lqg/1";

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw InvalidInput(path + ": expected an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InvalidInput(path + "[" + std::to_string(i) + "]: rows must be arrays of equal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw InvalidInput(path + ": non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

inline Json model_to_json(const StateSpaceModel& m) {
  Json j;
  j["format"] = kModelFormat;
  j["Ts"] = m.Ts;
  j["order"] = m.states();
  j["A"] = matrix_to_json(m.A);
  j["B"] = matrix_to_json(m.B);
  j["C"] = matrix_to_json(m.C);
  j["D"] = matrix_to_json(m.D);
  j["K"] = matrix_to_json(m.K);
  return j;
}

inline StateSpaceModel model_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != kModelFormat) {
    throw InvalidInput(std::string("model document: expected format '") + kModelFormat + "'");
  }
  StateSpaceModel m;
  for (const char* key : {"Ts", "A", "B", "C", "D", "K"}) {
    if (!j.contains(key)) throw InvalidInput(std::string("model document: missing key '") + key + "'");
  }
  if (!j["Ts"].is_number()) throw InvalidInput("model document: Ts must be a number");
  m.Ts = j["Ts"].get<double>();
  m.A = matrix_from_json(j["A"], "$.A");
  m.B = matrix_from_json(j["B"], "$.B");
  m.C = matrix_from_json(j["C"], "$.C");
  m.D = matrix_from_json(j["D"], "$.D");
  m.K = matrix_from_json(j["K"], "$.K");
  m.validate();
  return m;
}

inline Json design_to_json(const lqg::LqgDesign& d, const lqg::LqWeights& w) {
  Json j;
  j["format"] = kDesignFormat;
  j["Q"] = matrix_to_json(w.Q);
  j["R"] = matrix_to_json(w.R);
  j["N"] = matrix_to_json(w.cross(d.P.rows(), w.R.rows()));
  j["Qe"] = matrix_to_json(d.Qe);
  j["Re"] = matrix_to_json(d.Re);
  j["P"] = matrix_to_json(d.P);
  j["Sigma"] = matrix_to_json(d.Sigma);
  j["Kopt"] = matrix_to_json(d.Kopt);
  j["Kobs"] = matrix_to_json(d.Kobs);
  j["Nr"] = matrix_to_json(d.Nr);
  j["control_residual"] = d.control_residual;
  j["observer_residual"] = d.observer_residual;
  j["regulator_spectral_radius"] = d.regulator_spectral_radius;
  j["observer_spectral_radius"] = d.observer_spectral_radius;
  j["control_iterations"] = d.control_iterations;
  j["observer_iterations"] = d.observer_iterations;
  j["stable"] = d.stable();
  return j;
}

inline lqg::LqgDesign design_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != kDesignFormat) {
    throw InvalidInput(std::string("design document: expected format '") + kDesignFormat + "'");
  }
  for (const char* key : {"P", "Sigma", "Kopt", "Kobs", "Nr", "Qe", "Re"}) {
    if (!j.contains(key)) throw InvalidInput(std::string("design document: missing key '") + key + "'");
  }
  lqg::LqgDesign d;
  d.P = matrix_from_json(j["P"], "$.P");
  d.Sigma = matrix_from_json(j["Sigma"], "$.Sigma");
  d.Kopt = matrix_from_json(j["Kopt"], "$.Kopt");
  d.Kobs = matrix_from_json(j["Kobs"], "$.Kobs");
  d.Nr = matrix_from_json(j["Nr"], "$.Nr");
  d.Qe = matrix_from_json(j["Qe"], "$.Qe");
  d.Re = matrix_from_json(j["Re"], "$.Re");
  d.control_residual = j.value("control_residual", 0.0);
  d.observer_residual = j.value("observer_residual", 0.0);
  d.regulator_spectral_radius = j.value("regulator_spectral_radius", 0.0);
  d.observer_spectral_radius = j.value("observer_spectral_radius", 0.0);
  d.control_iterations = j.value("control_iterations", 0);
  d.observer_iterations = j.value("observer_iterations", 0);
  return d;
}

/// Recomputes the stability figures of a loaded design against its model so
/// a hand-edited file cannot smuggle in an unstable loop.
inline void check_design(const StateSpaceModel& model, lqg::LqgDesign& d) {
  const auto n = model.states();
  if (d.Kopt.rows() != model.inputs() || d.Kopt.cols() != n || d.Kobs.rows() != n ||
      d.Kobs.cols() != model.outputs() || d.Nr.rows() != model.inputs() || d.Nr.cols() != model.outputs()) {
    throw InvalidInput("design document: gain dimensions do not match the model");
  }
  d.regulator_spectral_radius = linalg::spectral_radius(model.A - model.B * d.Kopt);
  d.observer_spectral_radius = linalg::spectral_radius(model.A - d.Kobs * model.C);
}

inline Json read_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw InvalidInput(path + ": malformed JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidInput("cannot write " + path);
  f << j.dump(2) << '\n';
  if (!f) throw InvalidInput("error writing " + path);
}

}  // namespace softpos::io
