#include "lgcps/pipeline.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace lgcps {

namespace {

bool missing(double v) { return std::isnan(v); }

void check_alignment(const ColumnarTable& table, const Grid& grid, const std::string& what) {
  if (table.rows() != grid.size())
    throw std::runtime_error(what + ": " + std::to_string(table.rows()) +
                             " rows but grid has " + std::to_string(grid.size()) + " cells");
  constexpr double tol = 1e-6;
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    const auto& center = grid.cells[static_cast<size_t>(r)].center;
    if (std::abs(normalize_lon(table.coords[r].lon - center.lon)) > tol ||
        std::abs(table.coords[r].lat - center.lat) > tol)
      throw std::runtime_error(what + ": row " + std::to_string(r + 2) +
                               " does not match grid cell center (" +
                               format_value(center.lon) + ", " + format_value(center.lat) + ")");
  }
}

}  // namespace

Eigen::Index ProfileStack::level_index(double level) const {
  for (size_t i = 0; i < levels_mb.size(); ++i)
    if (std::abs(levels_mb[i] - level) < 1e-6) return static_cast<Eigen::Index>(i);
  return -1;
}

GriddedField field_from_table(const ColumnarTable& table, const Grid& grid,
                              Eigen::Index column) {
  if (column < 0 || column >= static_cast<Eigen::Index>(table.columns.size()))
    throw std::out_of_range("field_from_table: no column " + std::to_string(column));
  check_alignment(table, grid, "field '" + table.columns[static_cast<size_t>(column)].variable + "'");
  GriddedField field;
  field.name = table.columns[static_cast<size_t>(column)].variable;
  field.level_mb = table.columns[static_cast<size_t>(column)].level_mb;
  field.values = table.values.col(column);
  return field;
}

ProfileStack stack_from_table(const ColumnarTable& table, const Grid& grid,
                              const std::string& variable) {
  check_alignment(table, grid, "profile '" + variable + "'");
  std::vector<std::pair<double, Eigen::Index>> levels;
  for (size_t c = 0; c < table.columns.size(); ++c)
    if (table.columns[c].variable == variable && table.columns[c].level_mb)
      levels.emplace_back(*table.columns[c].level_mb, static_cast<Eigen::Index>(c));
  if (levels.empty())
    throw std::runtime_error("profile '" + variable + "': no '" + variable +
                             "@level=' columns found");
  // near-surface (largest pressure) first
  std::sort(levels.begin(), levels.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  ProfileStack stack;
  stack.variable = variable;
  stack.values.resize(static_cast<Eigen::Index>(levels.size()), table.rows());
  for (size_t l = 0; l < levels.size(); ++l) {
    stack.levels_mb.push_back(levels[l].first);
    stack.values.row(static_cast<Eigen::Index>(l)) = table.values.col(levels[l].second).transpose();
  }
  return stack;
}

GriddedField standardize(const GriddedField& field, const std::vector<uint8_t>& valid) {
  const Eigen::Index n = field.values.size();
  if (static_cast<Eigen::Index>(valid.size()) != n)
    throw std::invalid_argument("standardize: mask length mismatch for '" + field.name + "'");

  double sum = 0.0;
  long count = 0;
  for (Eigen::Index k = 0; k < n; ++k)
    if (valid[static_cast<size_t>(k)] && !missing(field.values(k))) {
      sum += field.values(k);
      ++count;
    }
  if (count < 2)
    throw std::runtime_error("standardize: fewer than 2 valid cells for '" + field.name + "'");
  const double mean = sum / static_cast<double>(count);

  double ss = 0.0;
  for (Eigen::Index k = 0; k < n; ++k)
    if (valid[static_cast<size_t>(k)] && !missing(field.values(k))) {
      const double d = field.values(k) - mean;
      ss += d * d;
    }
  const double sd = std::sqrt(ss / static_cast<double>(count));  // population sd
  if (!(sd > 0.0))
    throw std::runtime_error("standardize: zero variance in '" + field.name + "'");

  GriddedField out = field;
  for (Eigen::Index k = 0; k < n; ++k)
    out.values(k) = (valid[static_cast<size_t>(k)] && !missing(field.values(k)))
                        ? (field.values(k) - mean) / sd
                        : std::numeric_limits<double>::quiet_NaN();
  return out;
}

EofResult compute_eofs(const ProfileStack& stack, int k) {
  const int r = stack.r();
  const Eigen::Index n = stack.n_cells();
  if (k < 1 || k > r)
    throw std::invalid_argument("compute_eofs: need 1 <= k <= r = " + std::to_string(r));

  std::vector<Eigen::Index> complete;
  for (Eigen::Index c = 0; c < n; ++c)
    if (stack.values.col(c).allFinite()) complete.push_back(c);
  if (static_cast<int>(complete.size()) < 2)
    throw std::runtime_error("compute_eofs: fewer than 2 complete profiles");

  Eigen::MatrixXd x(r, static_cast<Eigen::Index>(complete.size()));
  for (size_t i = 0; i < complete.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) = stack.values.col(complete[i]);
  const Eigen::VectorXd level_means = x.rowwise().mean();
  x.colwise() -= level_means;
  const Eigen::MatrixXd cov = x * x.transpose() / static_cast<double>(complete.size());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("compute_eofs: eigen-decomposition failed");
  if (!(es.eigenvalues().maxCoeff() > 0.0))
    throw std::runtime_error("compute_eofs: degenerate level covariance");

  EofResult result;
  result.loadings.resize(r, k);
  result.explained_variance.resize(k);
  result.eigenvalues_all = es.eigenvalues().reverse();
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd loading = es.eigenvectors().col(r - 1 - i);
    Eigen::Index argmax = 0;
    loading.cwiseAbs().maxCoeff(&argmax);
    if (loading(argmax) < 0.0) loading = -loading;
    result.loadings.col(i) = loading;
    result.explained_variance(i) = es.eigenvalues()(r - 1 - i);
  }
  for (int i = 0; i + 1 < r; ++i)
    if (std::abs(result.eigenvalues_all(i) - result.eigenvalues_all(i + 1)) <
        1e-12 * std::max(1.0, result.eigenvalues_all(0)))
      result.degenerate_ties = true;

  result.pcs.resize(k, n);
  result.pcs.setConstant(std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index c = 0; c < n; ++c) {
    if (!stack.values.col(c).allFinite()) continue;
    const Eigen::VectorXd centered = stack.values.col(c) - level_means;
    result.pcs.col(c) = result.loadings.transpose() * centered;
  }
  return result;
}

ShearFields shear_fields(const ProfileStack& u, const ProfileStack& v) {
  if (u.n_cells() != v.n_cells())
    throw std::invalid_argument("shear_fields: u and v grids differ");
  const double levels[3] = {900.0, 700.0, 300.0};
  Eigen::Index ui[3], vi[3];
  for (int l = 0; l < 3; ++l) {
    ui[l] = u.level_index(levels[l]);
    vi[l] = v.level_index(levels[l]);
    if (ui[l] < 0 || vi[l] < 0)
      throw std::runtime_error("shear_fields: missing " + format_value(levels[l]) +
                               " mb level in wind profiles");
  }
  const auto u900 = u.values.row(ui[0]).array(), u700 = u.values.row(ui[1]).array(),
             u300 = u.values.row(ui[2]).array();
  const auto v900 = v.values.row(vi[0]).array(), v700 = v.values.row(vi[1]).array(),
             v300 = v.values.row(vi[2]).array();

  ShearFields out;
  out.ls.name = "ls";
  out.ls.values = ((u900 - u700).square() + (v900 - v700).square()).sqrt().transpose();
  out.dp.name = "dp";
  out.dp.values = ((u900 - u300).square() + (v900 - v300).square()).sqrt().transpose();
  out.dds.name = "dds";
  out.dds.values = (u300 - u900).transpose();
  return out;
}

std::vector<PointPattern> extract_events(const std::vector<GriddedField>& rain,
                                         const std::vector<uint8_t>& valid) {
  std::vector<PointPattern> patterns;
  patterns.reserve(rain.size());
  for (size_t t = 0; t < rain.size(); ++t) {
    const auto& field = rain[t];
    if (static_cast<size_t>(field.values.size()) != valid.size())
      throw std::invalid_argument("extract_events: mask length mismatch for '" + field.name + "'");
    PointPattern pattern;
    pattern.type_id = static_cast<int>(t) + 1;
    for (Eigen::Index k = 0; k < field.values.size(); ++k) {
      const double v = field.values(k);
      if (missing(v) || !valid[static_cast<size_t>(k)]) continue;
      if (v < 0.0)
        throw std::runtime_error("extract_events: negative rain rate " + format_value(v) +
                                 " in '" + field.name + "' at cell " + std::to_string(k));
      if (v > 0.0) pattern.events.push_back(k);
    }
    patterns.push_back(std::move(pattern));
  }
  return patterns;
}

std::vector<SpherePoint> PointPatternDataset::cell_centers() const {
  std::vector<SpherePoint> centers;
  centers.reserve(kept.size());
  for (Eigen::Index k : kept) centers.push_back(grid.cells[static_cast<size_t>(k)].center);
  return centers;
}

long PointPatternDataset::total_events() const {
  long n = 0;
  for (const auto& pattern : patterns) n += pattern.n();
  return n;
}

namespace {

Eigen::VectorXd kept_weights(const Grid& grid, const std::vector<Eigen::Index>& kept) {
  double total = 0.0;
  for (Eigen::Index k : kept) total += grid.cells[static_cast<size_t>(k)].area_km2;
  if (!(total > 0.0)) throw std::runtime_error("dataset: nonpositive kept area");
  const double scale = static_cast<double>(kept.size()) / total;
  Eigen::VectorXd w(static_cast<Eigen::Index>(kept.size()));
  for (size_t i = 0; i < kept.size(); ++i)
    w(static_cast<Eigen::Index>(i)) = grid.cells[static_cast<size_t>(kept[i])].area_km2 * scale;
  return w;
}

const std::string& require_input(const RunConfig& config, const std::string& key) {
  const auto it = config.inputs.find(key);
  if (it == config.inputs.end())
    throw std::runtime_error("dataset: required input '" + key + "' missing from [inputs]");
  return it->second;
}

std::vector<uint8_t> load_mask(const RunConfig& config, const Grid& grid) {
  std::vector<uint8_t> valid(static_cast<size_t>(grid.size()), 1);
  const auto it = config.inputs.find("mask");
  if (it == config.inputs.end()) return valid;
  const ColumnarTable table = read_columnar(it->second);
  const Eigen::Index col = table.find_column("mask");
  if (col < 0) throw std::runtime_error(it->second + ": no 'mask' column");
  const GriddedField mask = field_from_table(table, grid, col);
  for (Eigen::Index k = 0; k < grid.size(); ++k)
    valid[static_cast<size_t>(k)] = (!missing(mask.values(k)) && mask.values(k) != 0.0) ? 1 : 0;
  return valid;
}

PointPatternDataset assemble_pipeline(const RunConfig& config) {
  const Grid grid = build_grid(config.region, config.resolution_deg);
  std::vector<uint8_t> valid = load_mask(config, grid);

  // rain occurrence fields, one per type
  const ColumnarTable rain_table = read_columnar(require_input(config, "rain"));
  if (static_cast<int>(config.rain_columns.size()) != config.types)
    throw std::runtime_error("dataset: rain_columns must list one column per type");
  std::vector<GriddedField> rain;
  for (const auto& name : config.rain_columns) {
    const Eigen::Index col = rain_table.find_column(name);
    if (col < 0)
      throw std::runtime_error(require_input(config, "rain") + ": no rain column '" + name + "'");
    rain.push_back(field_from_table(rain_table, grid, col));
  }

  // profile variables and their first-three EOF PCs
  std::vector<GriddedField> covariates;
  for (const std::string var : {"t", "q", "u", "v"}) {
    const ColumnarTable table = read_columnar(require_input(config, var + "_profile"));
    const ProfileStack stack = stack_from_table(table, grid, var);
    const EofResult eof = compute_eofs(stack, 3);
    for (int i = 0; i < 3; ++i) {
      GriddedField pc;
      pc.name = var + std::to_string(i + 1);
      pc.values = eof.pcs.row(i).transpose();
      covariates.push_back(std::move(pc));
    }
  }

  // shear covariates from the wind profiles
  {
    const ColumnarTable u_table = read_columnar(require_input(config, "u_profile"));
    const ColumnarTable v_table = read_columnar(require_input(config, "v_profile"));
    const ProfileStack u = stack_from_table(u_table, grid, "u");
    const ProfileStack v = stack_from_table(v_table, grid, "v");
    ShearFields shear = shear_fields(u, v);
    covariates.push_back(std::move(shear.ls));
    covariates.push_back(std::move(shear.dp));
    covariates.push_back(std::move(shear.dds));
  }

  // surface latent heat flux
  {
    const ColumnarTable table = read_columnar(require_input(config, "lh"));
    Eigen::Index col = table.find_column("lh");
    if (col < 0 && table.columns.size() == 1) col = 0;
    if (col < 0) throw std::runtime_error(require_input(config, "lh") + ": no 'lh' column");
    covariates.push_back(field_from_table(table, grid, col));
    covariates.back().name = "lh";
  }

  // latitude
  {
    GriddedField lat;
    lat.name = "lat";
    lat.values.resize(grid.size());
    for (Eigen::Index k = 0; k < grid.size(); ++k)
      lat.values(k) = grid.cells[static_cast<size_t>(k)].center.lat;
    covariates.push_back(std::move(lat));
  }

  // a cell is usable when masked in and every covariate and rain value is present
  for (const auto& field : covariates)
    for (Eigen::Index k = 0; k < grid.size(); ++k)
      if (missing(field.values(k))) valid[static_cast<size_t>(k)] = 0;
  for (const auto& field : rain)
    for (Eigen::Index k = 0; k < grid.size(); ++k)
      if (missing(field.values(k))) valid[static_cast<size_t>(k)] = 0;

  std::vector<Eigen::Index> kept;
  for (Eigen::Index k = 0; k < grid.size(); ++k)
    if (valid[static_cast<size_t>(k)]) kept.push_back(k);
  if (kept.size() < 2) throw std::runtime_error("dataset: fewer than 2 valid cells");

  PointPatternDataset data;
  data.grid = grid;
  data.kept = kept;
  data.weights = kept_weights(grid, kept);

  data.covariates.values.resize(static_cast<Eigen::Index>(kept.size()),
                                static_cast<Eigen::Index>(covariates.size()));
  for (size_t c = 0; c < covariates.size(); ++c) {
    const GriddedField standardized = standardize(covariates[c], valid);
    data.covariates.names.push_back(covariates[c].name);
    for (size_t i = 0; i < kept.size(); ++i)
      data.covariates.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          standardized.values(kept[i]);
  }

  // events, re-indexed to positions in the kept-cell list
  std::map<Eigen::Index, Eigen::Index> position;
  for (size_t i = 0; i < kept.size(); ++i) position[kept[i]] = static_cast<Eigen::Index>(i);
  data.patterns = extract_events(rain, valid);
  for (auto& pattern : data.patterns)
    for (auto& cell : pattern.events) cell = position.at(cell);
  return data;
}

PointPatternDataset assemble_direct(const RunConfig& config) {
  const Grid grid = build_grid(config.region, config.resolution_deg);
  std::vector<uint8_t> valid = load_mask(config, grid);

  CovariateMatrix covs;
  const auto cov_it = config.inputs.find("covariates");
  if (cov_it != config.inputs.end()) {
    const ColumnarTable table = read_columnar(cov_it->second);
    check_alignment(table, grid, "covariates");
    for (Eigen::Index c = 0; c < table.values.cols(); ++c)
      for (Eigen::Index k = 0; k < grid.size(); ++k)
        if (missing(table.values(k, c))) valid[static_cast<size_t>(k)] = 0;
    covs.values = table.values;
    for (const auto& col : table.columns) covs.names.push_back(col.header_token());
  }

  std::vector<Eigen::Index> kept;
  for (Eigen::Index k = 0; k < grid.size(); ++k)
    if (valid[static_cast<size_t>(k)]) kept.push_back(k);
  if (kept.size() < 2) throw std::runtime_error("dataset: fewer than 2 valid cells");

  PointPatternDataset data;
  data.grid = grid;
  data.kept = kept;
  data.weights = kept_weights(grid, kept);

  if (covs.values.size() > 0) {
    data.covariates.names = covs.names;
    data.covariates.values.resize(static_cast<Eigen::Index>(kept.size()), covs.values.cols());
    for (Eigen::Index c = 0; c < covs.values.cols(); ++c) {
      GriddedField field;
      field.name = covs.names[static_cast<size_t>(c)];
      field.values = covs.values.col(c);
      const GriddedField ready =
          config.standardize_covariates ? standardize(field, valid) : field;
      for (size_t i = 0; i < kept.size(); ++i)
        data.covariates.values(static_cast<Eigen::Index>(i), c) = ready.values(kept[i]);
    }
  } else {
    data.covariates.values.resize(static_cast<Eigen::Index>(kept.size()), 0);
  }

  // events file: type,lon,lat,count rows
  std::map<Eigen::Index, Eigen::Index> position;
  for (size_t i = 0; i < kept.size(); ++i) position[kept[i]] = static_cast<Eigen::Index>(i);
  data.patterns.resize(static_cast<size_t>(config.types));
  for (int t = 0; t < config.types; ++t) data.patterns[static_cast<size_t>(t)].type_id = t + 1;

  const std::string& path = require_input(config, "patterns");
  const ColumnarTable events = read_columnar(path);
  const Eigen::Index type_col = events.find_column("type");
  if (type_col < 0)
    throw std::runtime_error(path + ": pattern files need header lon,lat,type[,count]");
  const Eigen::Index count_col = events.find_column("count");
  for (Eigen::Index r = 0; r < events.rows(); ++r) {
    const int type = static_cast<int>(events.values(r, type_col));
    if (type < 1 || type > config.types)
      throw std::runtime_error(path + ": event row " + std::to_string(r + 2) +
                               " has type outside 1.." + std::to_string(config.types));
    // snap the event to its half-open grid cell
    const double dl = normalize_lon(events.coords[r].lon - grid.region.lon_min);
    const double lon_off = dl < 0.0 ? dl + 360.0 : dl;
    const long i = static_cast<long>(std::floor(lon_off / grid.resolution_deg + 1e-9));
    const long j = static_cast<long>(
        std::floor((events.coords[r].lat - grid.region.lat_min) / grid.resolution_deg + 1e-9));
    if (i < 0 || i >= grid.n_lon || j < 0 || j >= grid.n_lat)
      throw std::runtime_error(path + ": event row " + std::to_string(r + 2) +
                               " falls outside the region");
    const Eigen::Index cell = j * grid.n_lon + i;
    const auto pos = position.find(cell);
    if (pos == position.end())
      throw std::runtime_error(path + ": event row " + std::to_string(r + 2) +
                               " falls on a masked or incomplete cell");
    long count = 1;
    if (count_col >= 0) {
      const double c = events.values(r, count_col);
      if (missing(c) || c < 1 || c != std::floor(c))
        throw std::runtime_error(path + ": event row " + std::to_string(r + 2) +
                                 " has a bad count");
      count = static_cast<long>(c);
    }
    for (long c = 0; c < count; ++c)
      data.patterns[static_cast<size_t>(type - 1)].events.push_back(pos->second);
  }
  return data;
}

}  // namespace

PointPatternDataset assemble_dataset(const RunConfig& config) {
  if (config.inputs.count("rain")) return assemble_pipeline(config);
  if (config.inputs.count("patterns")) return assemble_direct(config);
  throw std::runtime_error("dataset: [inputs] must provide either 'rain' (pipeline mode) "
                           "or 'patterns' (direct mode)");
}

PointPatternDataset make_dataset(const Grid& grid, const CovariateMatrix& covariates,
                                 std::vector<PointPattern> patterns) {
  PointPatternDataset data;
  data.grid = grid;
  data.kept.resize(static_cast<size_t>(grid.size()));
  for (Eigen::Index k = 0; k < grid.size(); ++k) data.kept[static_cast<size_t>(k)] = k;
  data.weights = kept_weights(grid, data.kept);
  if (covariates.values.size() > 0 && covariates.n_cells() != grid.size())
    throw std::invalid_argument("make_dataset: covariate rows must match grid cells");
  data.covariates = covariates;
  if (data.covariates.values.size() == 0) data.covariates.values.resize(grid.size(), 0);
  for (const auto& pattern : patterns)
    for (Eigen::Index cell : pattern.events)
      if (cell < 0 || cell >= grid.size())
        throw std::out_of_range("make_dataset: event cell outside grid");
  data.patterns = std::move(patterns);
  return data;
}

}  // namespace lgcps
