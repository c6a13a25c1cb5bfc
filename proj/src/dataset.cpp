#include "gliv/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "gliv/error.hpp"

namespace gliv {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(
        start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line, const char* col) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ValidationError("line " + std::to_string(line) + ": column " + col +
                          " is not a finite number: '" + s + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.y.resize(m);
  out.x.resize(m, x.cols());
  out.t.resize(rows.size());
  out.z.resize(rows.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    const int r = rows[i];
    out.y(i) = y(r);
    out.x.row(i) = x.row(r);
    out.t[i] = t[r];
    out.z[i] = z[r];
  }
  return out;
}

void validate(const Dataset& data, const TypeConfig& config) {
  const auto n = data.size();
  if (n < 1) throw ValidationError("dataset is empty");
  if (static_cast<Eigen::Index>(data.t.size()) != n ||
      static_cast<Eigen::Index>(data.z.size()) != n || data.x.rows() != n) {
    throw ValidationError("dataset columns have inconsistent lengths");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.t[i] < 0 || data.t[i] >= config.n_treatments()) {
      throw ValidationError("row " + std::to_string(i + 1) +
                            ": treatment index out of range");
    }
    if (data.z[i] < 0 || data.z[i] >= config.n_instruments()) {
      throw ValidationError("row " + std::to_string(i + 1) +
                            ": instrument index out of range");
    }
    if (!std::isfinite(data.y(i))) {
      throw ValidationError("row " + std::to_string(i + 1) +
                            ": outcome is not finite");
    }
  }
  if (!data.x.allFinite()) throw ValidationError("covariates are not finite");
}

Dataset read_csv(std::istream& in, const TypeConfig& config) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("CSV is empty");
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "y" || header[1] != "t" ||
      header[2] != "z") {
    throw ValidationError("CSV header must start with y,t,z");
  }
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[3 + j] != "x" + std::to_string(j + 1)) {
      throw ValidationError("CSV covariate column " + std::to_string(j + 1) +
                            " must be named x" + std::to_string(j + 1));
    }
  }

  std::vector<double> ys;
  std::vector<int> ts;
  std::vector<int> zs;
  std::vector<double> xs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw ValidationError("line " + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(f.size()));
    }
    ys.push_back(parse_double(f[0], lineno, "y"));
    const auto t = config.find_treatment(f[1]);
    if (!t) {
      throw ValidationError("line " + std::to_string(lineno) +
                            ": unknown treatment label '" + f[1] + "'");
    }
    const auto z = config.find_instrument(f[2]);
    if (!z) {
      throw ValidationError("line " + std::to_string(lineno) +
                            ": unknown instrument label '" + f[2] + "'");
    }
    ts.push_back(*t);
    zs.push_back(*z);
    for (std::size_t j = 0; j < d; ++j) {
      xs.push_back(parse_double(f[3 + j], lineno, header[3 + j].c_str()));
    }
  }

  Dataset data;
  const auto n = static_cast<Eigen::Index>(ys.size());
  data.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  data.t = std::move(ts);
  data.z = std::move(zs);
  data.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                    Eigen::RowMajor>>(
      xs.data(), n, static_cast<Eigen::Index>(d));
  validate(data, config);
  return data;
}

Dataset read_csv_file(const std::string& path, const TypeConfig& config) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset '" + path + "'");
  return read_csv(in, config);
}

void write_csv(std::ostream& out, const Dataset& data,
               const TypeConfig& config) {
  out << "y,t,z";
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << format_double(data.y(i)) << ',' << config.treatment(data.t[i])
        << ',' << config.instrument(data.z[i]);
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      out << ',' << format_double(data.x(i, j));
    }
    out << '\n';
  }
}

}  // namespace gliv
