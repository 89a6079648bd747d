#pragma once

#include "dlmc/diagnostics.hpp"
#include "dlmc/errors.hpp"
#include "dlmc/log.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace dlmc {

// ---------------------------------------------------------------------------
// German credit data

struct CreditData {
  Eigen::MatrixXd features;  // standardized, rows x 24
  Eigen::VectorXd labels;    // 0 = good, 1 = bad
};

inline constexpr int german_credit_rows = 1000;
inline constexpr int german_credit_bad = 300;

/// Reads the numeric German credit file: `expected_rows` rows of 25
/// whitespace-separated integers (24 features, label in {1, 2}). Features are
/// standardized per column with divisor max(std, 1e-12).
inline CreditData load_german_credit(const std::string& path, int expected_rows = german_credit_rows) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  constexpr int cols = 25;
  std::vector<std::array<long long, cols>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::array<long long, cols> r{};
    std::string tok;
    int c = 0;
    while (ls >> tok) {
      if (c >= cols) throw DataError(path + ":" + std::to_string(lineno) + ": more than 25 columns");
      long long v = 0;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size())
        throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric token '" + tok + "'");
      r[static_cast<std::size_t>(c++)] = v;
    }
    if (c != cols)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 25 columns, found " + std::to_string(c));
    if (r[cols - 1] != 1 && r[cols - 1] != 2)
      throw DataError(path + ":" + std::to_string(lineno) + ": label must be 1 or 2");
    rows.push_back(r);
    if (static_cast<int>(rows.size()) > expected_rows)
      throw DataError(path + ":" + std::to_string(lineno) + ": more than " + std::to_string(expected_rows) + " rows");
  }
  if (static_cast<int>(rows.size()) != expected_rows)
    throw DataError(path + ": expected " + std::to_string(expected_rows) + " rows, found " +
                    std::to_string(rows.size()) + " (last line " + std::to_string(lineno) + ")");

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  CreditData out;
  out.features.resize(n, cols - 1);
  out.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < cols - 1; ++j) out.features(i, j) = static_cast<double>(rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    out.labels(i) = rows[static_cast<std::size_t>(i)][cols - 1] == 2 ? 1.0 : 0.0;
  }
  if (expected_rows == german_credit_rows && out.labels.sum() != german_credit_bad)
    throw DataError(path + ": expected 300 bad-credit labels, found " + std::to_string(static_cast<long long>(out.labels.sum())));
  for (int j = 0; j < cols - 1; ++j) {
    auto col = out.features.col(j);
    const double mu = col.mean();
    col.array() -= mu;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    if (sd < 1e-12) log(LogLevel::warning, path + ": feature column " + std::to_string(j + 1) + " is constant");
    col /= std::max(sd, 1e-12);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// JSON has no infinity; non-finite reals are written as strings
inline nlohmann::json real_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double real_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-infinity") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  throw DataError("expected a real number, got " + j.dump());
}

}  // namespace detail

inline nlohmann::json reference_to_json(const ReferenceMoments& r) {
  nlohmann::json j;
  j["target"] = r.target;
  j["space"] = r.space;
  j["provenance"] = to_string(r.provenance);
  j["mean"] = detail::vector_json(r.mean);
  j["second_moment"] = detail::vector_json(r.second_moment);
  j["mean_stderr"] = detail::vector_json(r.mean_stderr);
  j["second_moment_stderr"] = detail::vector_json(r.second_moment_stderr);
  if (r.grid_resolution > 0) j["grid_resolution"] = r.grid_resolution;
  if (r.chain_steps > 0) j["chain_steps"] = r.chain_steps;
  j["notes"] = r.notes;
  return j;
}

inline ReferenceMoments reference_from_json(const nlohmann::json& j) {
  try {
    ReferenceMoments r;
    r.target = j.at("target").get<std::string>();
    r.space = j.value("space", std::string("constrained"));
    r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    r.mean = detail::vector_from_json(j.at("mean"));
    r.second_moment = detail::vector_from_json(j.at("second_moment"));
    const Eigen::Index d = r.second_moment.size();
    r.mean_stderr = j.contains("mean_stderr") ? detail::vector_from_json(j["mean_stderr"]) : Eigen::VectorXd::Zero(d);
    r.second_moment_stderr = j.contains("second_moment_stderr") ? detail::vector_from_json(j["second_moment_stderr"])
                                                                : Eigen::VectorXd::Zero(d);
    r.grid_resolution = j.value("grid_resolution", 0);
    r.chain_steps = j.value("chain_steps", 0LL);
    r.notes = j.value("notes", std::string());
    if (r.mean.size() != d || r.mean_stderr.size() != d || r.second_moment_stderr.size() != d)
      throw DataError("reference moments: vector lengths differ");
    if (r.provenance == ReferenceProvenance::quadrature_oracle && r.grid_resolution <= 0)
      throw DataError("reference moments: quadrature oracle without grid resolution");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("reference moments: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Files

/// Writes `content` to `path` through a temporary file in the same directory
/// followed by a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline ReferenceMoments load_reference(const std::filesystem::path& path) {
  return reference_from_json(read_json_file(path));
}

inline void save_reference(const ReferenceMoments& r, const std::filesystem::path& path) {
  write_file_atomic(path, reference_to_json(r).dump(1) + "\n");
}

/// Creates `dir` if needed and checks that a file can be created in it.
inline void ensure_writable_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  const std::filesystem::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw std::runtime_error("output directory is not writable: " + dir.string());
  }
  std::filesystem::remove(probe, ec);
}

}  // namespace dlmc
