#pragma once

#include "dlmc/errors.hpp"
#include "dlmc/flow.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace dlmc {

// Flow files are JSON:
//   {"format": "dlmc-flow", "version": 1, "dim": d,
//    "affine": {"shift": [d], "chol": [[d] x d]},          lower-triangular rows
//    "layers": [{"directions": [[d] x K],
//                "splines": [{"x": [...], "y": [...], "d": [...]} x K]}]}
// Numbers are written with round-trip precision, so reading back gives a
// bitwise-identical model.

inline constexpr int flow_format_version = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto r = j[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != cols) throw DataError("flow file: matrix row has wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = r[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace detail

inline nlohmann::json flow_to_json(const FlowModel& m) {
  nlohmann::json j;
  j["format"] = "dlmc-flow";
  j["version"] = flow_format_version;
  j["dim"] = m.dim();
  const Eigen::VectorXd& s = m.affine().shift;
  j["affine"]["shift"] = std::vector<double>(s.data(), s.data() + s.size());
  j["affine"]["chol"] = detail::matrix_to_json(m.affine().chol);
  nlohmann::json layers = nlohmann::json::array();
  for (const SlicedLayer& l : m.layers()) {
    nlohmann::json lj;
    lj["directions"] = detail::matrix_to_json(l.directions);
    nlohmann::json sp = nlohmann::json::array();
    for (const auto& f : l.maps) sp.push_back({{"x", f.knots_x()}, {"y", f.knots_y()}, {"d", f.knot_derivatives()}});
    lj["splines"] = sp;
    layers.push_back(lj);
  }
  j["layers"] = layers;
  return j;
}

inline FlowModel flow_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dlmc-flow") throw DataError("not a dlmc flow file");
    if (j.at("version").get<int>() != flow_format_version) throw DataError("unsupported flow file version");
    const int d = j.at("dim").get<int>();
    if (d < 1) throw DataError("flow file: bad dimension");
    const auto shift = j.at("affine").at("shift").get<std::vector<double>>();
    if (static_cast<int>(shift.size()) != d) throw DataError("flow file: shift has wrong length");
    Eigen::MatrixXd chol = detail::matrix_from_json(j.at("affine").at("chol"), d);
    if (chol.rows() != d) throw DataError("flow file: cholesky factor has wrong shape");
    AffineLayer a = AffineLayer::from_cholesky(Eigen::Map<const Eigen::VectorXd>(shift.data(), d), chol);
    std::vector<SlicedLayer> layers;
    for (const auto& lj : j.at("layers")) {
      SlicedLayer l;
      l.directions = detail::matrix_from_json(lj.at("directions"), d);
      for (const auto& sj : lj.at("splines"))
        l.maps.emplace_back(sj.at("x").get<std::vector<double>>(), sj.at("y").get<std::vector<double>>(),
                            sj.at("d").get<std::vector<double>>());
      if (l.size() != l.directions.rows()) throw DataError("flow file: spline count does not match directions");
      layers.push_back(std::move(l));
    }
    return FlowModel(std::move(a), std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("flow file: ") + e.what());
  }
}

inline void save_flow(const FlowModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << flow_to_json(m).dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline FlowModel load_flow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return flow_from_json(j);
}

}  // namespace dlmc
