#pragma once

// File formats: numeric CSV samples, FIM / weight JSON, experiment configs.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fimest/crlb.hpp"
#include "fimest/emst.hpp"
#include "fimest/error.hpp"
#include "fimest/experiments.hpp"
#include "fimest/fim.hpp"

namespace fimest::io {

using nlohmann::json;

/// Rows are observations, columns dimensions. Blank lines are skipped;
/// `skip_header` drops the first line.
inline RowMatrix parse_csv_matrix(std::string_view text, bool skip_header = false, const std::string& name = "input") {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && skip_header) continue;
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    std::vector<double> row;
    std::size_t cpos = 0;
    while (true) {
      std::size_t cend = line.find(',', cpos);
      if (cend == std::string_view::npos) cend = line.size();
      std::string_view field = line.substr(cpos, cend - cpos);
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
      double v = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        throw Error(ErrorCode::ParseError,
                    name + ":" + std::to_string(line_no) + ": not a number: '" + std::string(field) + "'");
      }
      row.push_back(v);
      if (cend == line.size()) break;
      cpos = cend + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorCode::ParseError, name + ":" + std::to_string(line_no) + ": " + std::to_string(row.size()) +
                                             " columns, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
    if (end == text.size()) break;
  }
  if (rows.empty()) throw Error(ErrorCode::ParseError, name + ": no data rows");
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RowMatrix read_csv_matrix(const std::string& path, bool skip_header = false) {
  return parse_csv_matrix(read_file(path), skip_header, path);
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Accepts a bare d x d array or an object with a "fim" member (the output
/// of `fimest fim`). The matrix must be symmetric to 1e-10 relative.
inline Eigen::MatrixXd fim_from_json(const json& doc) {
  const json& m = doc.is_object() && doc.contains("fim") ? doc.at("fim") : doc;
  if (!m.is_array() || m.empty()) throw Error(ErrorCode::ParseError, "FIM must be a nonempty array of rows");
  const auto d = m.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    if (!m[i].is_array() || m[i].size() != d) throw Error(ErrorCode::ParseError, "FIM must be square");
    for (std::size_t j = 0; j < d; ++j) {
      if (!m[i][j].is_number()) throw Error(ErrorCode::ParseError, "FIM entries must be numbers");
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j].get<double>();
    }
  }
  if (!out.allFinite()) throw Error(ErrorCode::ParseError, "FIM entries must be finite");
  const double scale = std::max(1.0, out.cwiseAbs().maxCoeff());
  if ((out - out.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorCode::ParseError, "FIM is not symmetric");
  }
  return 0.5 * (out + out.transpose());
}

inline WeightMatrix weights_from_json(const json& doc) {
  if (!doc.is_array() || doc.empty()) throw Error(ErrorCode::ParseError, "weights must be a nonempty array");
  WeightMatrix w;
  w.weights.resize(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number()) throw Error(ErrorCode::ParseError, "weights must be numbers");
    w.weights(static_cast<Eigen::Index>(i)) = doc[i].get<double>();
  }
  return w;
}

inline json fim_to_json(const FimEstimate& f) {
  return {{"method", to_string(f.method)},
          {"fim", matrix_to_json(f.f_mat)},
          {"f_vec", vector_to_json(f.f_vec)},
          {"residual_norm", f.residual_norm},
          {"min_eigenvalue", f.min_eigenvalue},
          {"iterations", f.iterations}};
}

/// Experiment config keys: dims, n_samples, sigma_u2, m_factor, runs,
/// master_seed, sigma, output. Unknown keys are rejected.
namespace detail {

inline std::size_t count_from_json(const json& v) {
  if (!v.is_number_unsigned()) throw Error(ErrorCode::ConfigError, "expected a nonnegative integer, got " + v.dump());
  return v.get<std::size_t>();
}

inline std::vector<std::size_t> counts_from_json(const json& v) {
  if (!v.is_array()) return {count_from_json(v)};
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(count_from_json(e));
  return out;
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const json& doc, std::string* output_path = nullptr) {
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  ExperimentConfig cfg;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "dims") {
        if (!value.is_array()) throw Error(ErrorCode::ConfigError, "dims must be an array");
        cfg.dims = detail::counts_from_json(value);
      } else if (key == "n_samples") {
        cfg.n_samples = detail::counts_from_json(value);
      } else if (key == "sigma_u2") {
        cfg.sigma_u2 = value.get<double>();
      } else if (key == "m_factor") {
        cfg.m_factor = detail::count_from_json(value);
      } else if (key == "runs") {
        cfg.runs = detail::count_from_json(value);
      } else if (key == "master_seed") {
        cfg.master_seed = detail::count_from_json(value);
      } else if (key == "sigma") {
        cfg.sigma = value.get<double>();
      } else if (key == "output") {
        if (output_path) *output_path = value.get<std::string>();
      } else {
        throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace fimest::io
