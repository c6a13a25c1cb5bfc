#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gliv/typeconfig.hpp"

namespace gliv {

// Observations (Y, T, Z, X). Treatment and instrument are stored as indices
// into the labels of the TypeConfig the dataset was read against.
struct Dataset {
  Eigen::VectorXd y;
  std::vector<int> t;
  std::vector<int> z;
  Eigen::MatrixXd x;  // n x d_X, d_X may be 0

  Eigen::Index size() const { return y.size(); }
  Eigen::Index dim() const { return x.cols(); }

  Dataset subset(std::span<const int> rows) const;
};

// Throws ValidationError on size mismatches, out-of-range labels,
// non-finite values or an empty table.
void validate(const Dataset& data, const TypeConfig& config);

// CSV with header `y,t,z,x1,...,xd`; labels must match the config.
Dataset read_csv(std::istream& in, const TypeConfig& config);
Dataset read_csv_file(const std::string& path, const TypeConfig& config);
void write_csv(std::ostream& out, const Dataset& data,
               const TypeConfig& config);

}  // namespace gliv
