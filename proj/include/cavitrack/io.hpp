#pragma once

// CSV and JSON exchange formats. Numbers are written in the shortest form that
// round-trips, so identical values always produce identical bytes.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "cavitrack/assembly.hpp"
#include "cavitrack/collocation.hpp"
#include "cavitrack/errors.hpp"
#include "cavitrack/kl.hpp"

namespace cavitrack::io {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

/// Row-oriented CSV writer with a mandatory header.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out), columns_(header.size()) {
    write_row(header);
  }

  void row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_number(v));
    write_row(cells);
  }

  void row(const std::vector<std::string>& cells) { write_row(cells); }

 private:
  void write_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw IoError("csv: row width does not match the header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::ostream& out_;
  std::size_t columns_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_number(const std::string& s, int line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("csv line " + std::to_string(line) + ": '" + s + "' is not a number");
  return v;
}

}  // namespace detail

/// Observation matrix from CSV: a header with the N variable names, then one
/// row of N numbers per observation.
inline ObservationMatrix read_observations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("observations: empty input");
  ObservationMatrix obs;
  obs.names = detail::split_csv_line(line);
  const auto n = static_cast<Eigen::Index>(obs.names.size());
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != n)
      throw IoError("observations line " + std::to_string(lineno) + ": expected " + std::to_string(n) +
                    " values");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(detail::parse_number(c, lineno));
    rows.push_back(std::move(row));
  }
  obs.data.resize(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < n; ++j) obs.data(static_cast<Eigen::Index>(i), j) = rows[i][j];
  return obs;
}

inline ObservationMatrix read_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return read_observations(in);
}

inline void write_observations(std::ostream& out, const ObservationMatrix& obs) {
  std::vector<std::string> header = obs.names;
  if (header.empty())
    for (Eigen::Index j = 0; j < obs.variables(); ++j) header.push_back("x" + std::to_string(j + 1) + "_m");
  CsvWriter w(out, header);
  for (Eigen::Index i = 0; i < obs.samples(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(obs.variables()));
    for (Eigen::Index j = 0; j < obs.variables(); ++j) row[static_cast<std::size_t>(j)] = obs.data(i, j);
    w.row(row);
  }
}

/// Grid as CSV: one column per parameter and the weight.
inline void write_grid(std::ostream& out, const CollocationGrid& g) {
  std::vector<std::string> header;
  for (int d = 0; d < g.dimension(); ++d) header.push_back("delta_" + std::to_string(d + 1));
  header.emplace_back("weight");
  CsvWriter w(out, header);
  for (int k = 0; k < g.size(); ++k) {
    std::vector<double> row;
    for (int d = 0; d < g.dimension(); ++d) row.push_back(g.nodes(k, d));
    row.push_back(g.weights[static_cast<std::size_t>(k)]);
    w.row(row);
  }
}

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw IoError("expected a JSON array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw IoError("expected a JSON array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(i)].size()) != cols)
      throw IoError("ragged matrix in JSON");
    for (Eigen::Index k = 0; k < cols; ++k)
      m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline nlohmann::json kl_to_json(const KLModel& kl) {
  return {{"criterion", kl.criterion},
          {"truncation", kl.truncation()},
          {"total_variance_m2", kl.total_variance},
          {"mean_m", to_json(kl.mean)},
          {"modes", to_json(kl.modes)},
          {"variances_m2", to_json(kl.variances)},
          {"spectrum_m2", to_json(kl.full_spectrum)}};
}

inline KLModel kl_from_json(const nlohmann::json& j) {
  try {
    KLModel kl;
    kl.criterion = j.at("criterion").get<double>();
    kl.total_variance = j.at("total_variance_m2").get<double>();
    kl.mean = vector_from_json(j.at("mean_m"));
    kl.modes = matrix_from_json(j.at("modes"));
    kl.variances = vector_from_json(j.at("variances_m2"));
    kl.full_spectrum = vector_from_json(j.at("spectrum_m2"));
    if (kl.modes.rows() != kl.mean.size() || kl.modes.cols() != kl.variances.size())
      throw IoError("KL model: inconsistent dimensions");
    return kl;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("KL model: ") + e.what());
  }
}

/// Coordinate-list export of a sparse matrix (Matrix Market, general real).
inline void write_matrix_market(std::ostream& out, const SpMat& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  for (Eigen::Index c = 0; c < a.outerSize(); ++c)
    for (SpMat::InnerIterator it(a, c); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << format_number(it.value()) << '\n';
}

}  // namespace cavitrack::io
