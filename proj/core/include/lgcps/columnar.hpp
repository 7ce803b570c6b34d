#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "lgcps/sphere.hpp"

namespace lgcps {

/// One value column of a columnar file: a variable name plus an optional
/// pressure level written as `name@level=<mb>` in the header.
struct ColumnSpec {
  std::string variable;
  std::optional<double> level_mb;

  std::string header_token() const;
  static ColumnSpec parse(const std::string& token);
};

/// In-memory form of the columnar text format: one row per cell,
/// `lon,lat,<value columns...>`, "NA" for missing values.
struct ColumnarTable {
  std::vector<ColumnSpec> columns;
  std::vector<SpherePoint> coords;
  Eigen::MatrixXd values;  // rows x columns, NaN for NA

  Eigen::Index rows() const { return static_cast<Eigen::Index>(coords.size()); }
  /// Index of the column with this name (and level, if given); -1 if absent.
  Eigen::Index find_column(const std::string& variable,
                           std::optional<double> level_mb = std::nullopt) const;
};

ColumnarTable read_columnar(const std::string& path);
void write_columnar(const std::string& path, const ColumnarTable& table);

/// Lossless text for a double ("NA" for NaN); reads back bit-identical.
std::string format_value(double v);

}  // namespace lgcps
