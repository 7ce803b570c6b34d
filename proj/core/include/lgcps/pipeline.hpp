#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "lgcps/columnar.hpp"
#include "lgcps/config.hpp"
#include "lgcps/lgcp.hpp"
#include "lgcps/sphere.hpp"

namespace lgcps {

/// One gridded scalar field; NaN marks missing cells.
struct GriddedField {
  std::string name;
  std::optional<double> level_mb;
  Eigen::VectorXd values;
};

/// A vertical profile of one variable: r levels on a shared grid.
/// Levels are kept sorted by decreasing pressure (near-surface first).
struct ProfileStack {
  std::string variable;
  std::vector<double> levels_mb;
  Eigen::MatrixXd values;  // r x N, row per level

  int r() const { return static_cast<int>(levels_mb.size()); }
  Eigen::Index n_cells() const { return values.cols(); }
  Eigen::Index level_index(double level_mb) const;
};

struct EofResult {
  Eigen::MatrixXd loadings;             // r x k, unit-norm columns
  Eigen::MatrixXd pcs;                  // k x N projections of centered profiles
  Eigen::VectorXd explained_variance;   // top-k eigenvalues, nonincreasing
  Eigen::VectorXd eigenvalues_all;      // all r, for explained fractions
  bool degenerate_ties = false;
};

/// Verify a table's rows align one-to-one with the grid cells (same
/// order, centers within tolerance) and pull out one column.
GriddedField field_from_table(const ColumnarTable& table, const Grid& grid, Eigen::Index column);

/// Collect every `variable@level=` column of a table into a stack.
ProfileStack stack_from_table(const ColumnarTable& table, const Grid& grid,
                              const std::string& variable);

/// Zero-mean unit-sd (population) rescale over valid, non-missing cells.
/// Cells that are masked out or missing come back as NaN.
GriddedField standardize(const GriddedField& field, const std::vector<uint8_t>& valid);

/// Top-k EOFs of the level covariance over cells with complete profiles.
/// Loadings are unit norm, signed so the largest-magnitude entry is
/// positive; PCs are projections of the centered profiles (NaN where a
/// profile is incomplete).
EofResult compute_eofs(const ProfileStack& stack, int k);

struct ShearFields {
  GriddedField ls;   // low-level: 900 vs 700 mb wind difference magnitude
  GriddedField dp;   // deep: 900 vs 300 mb
  GriddedField dds;  // deep directional: u[300] - u[900]
};

/// Derive the three shear covariates from u and v profiles holding the
/// 900, 700 and 300 mb levels.
ShearFields shear_fields(const ProfileStack& u, const ProfileStack& v);

/// One event per cell with strictly positive rain, per type, restricted
/// to valid cells. Negative rain is an error.
std::vector<PointPattern> extract_events(const std::vector<GriddedField>& rain,
                                         const std::vector<uint8_t>& valid);

/// Fitted-ready dataset: the analysis grid compacted to valid cells,
/// standardized covariates, per-type patterns (event indices point into
/// the kept-cell list), and unit-cell integration weights.
struct PointPatternDataset {
  Grid grid;  // the full tiling the dataset was built on
  std::vector<Eigen::Index> kept;  // valid cell indices into grid.cells
  Eigen::VectorXd weights;         // per kept cell, sums to kept count
  CovariateMatrix covariates;      // kept x q, standardized
  std::vector<PointPattern> patterns;

  int p() const { return static_cast<int>(patterns.size()); }
  int q() const { return covariates.q(); }
  Eigen::Index n_cells() const { return static_cast<Eigen::Index>(kept.size()); }
  std::vector<SpherePoint> cell_centers() const;
  long total_events() const;
};

/// Build a dataset from the config's input manifest. Two modes:
///  - rain-pipeline mode (`rain` plus t/q/u/v profiles and lh): derives
///    the 17 standard covariates (3 EOF PCs per profile variable, three
///    shears, lh, lat) and extracts occurrence events;
///  - direct mode (`patterns`, optional `covariates`): loads events and
///    covariate columns as given.
PointPatternDataset assemble_dataset(const RunConfig& config);

/// Build a dataset from in-memory pieces (synthetic studies, tests).
PointPatternDataset make_dataset(const Grid& grid, const CovariateMatrix& covariates,
                                 std::vector<PointPattern> patterns);

}  // namespace lgcps
