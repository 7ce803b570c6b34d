#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "lgcps/columnar.hpp"
#include "lgcps/estimation.hpp"
#include "lgcps/fsa.hpp"
#include "lgcps/lgcp.hpp"
#include "lgcps/pipeline.hpp"
#include "lgcps/rng.hpp"

namespace lgcps::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

fs::path prepare_out_dir(const RunConfig& config) {
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  write_config(config, (dir / "config_effective.cfg").string());
  return dir;
}

std::vector<std::string> type_names(const RunConfig& config) {
  if (static_cast<int>(config.rain_columns.size()) == config.types) return config.rain_columns;
  std::vector<std::string> names;
  for (int t = 1; t <= config.types; ++t) names.push_back("type" + std::to_string(t));
  return names;
}

FitSettings fit_settings(const RunConfig& config) {
  FitSettings settings;
  settings.s = config.s;
  settings.seed = config.seed;
  settings.use_fsa = config.use_fsa;
  settings.m = config.m;
  settings.block_size = config.block_size;
  settings.nm.tol = config.nm_tol;
  settings.nm.max_iters = config.max_iters;
  settings.nm.init_step = config.init_step;
  settings.fixed = config.fixed;
  return settings;
}

ModelParams params_from_config(const RunConfig& config, const PointPatternDataset& data) {
  ModelParams params;
  params.cov = config.cov;
  require_valid(params.cov);
  if (config.has_eta()) {
    if (config.eta.cols() != data.q() + 1)
      throw std::runtime_error("model.eta has " + std::to_string(config.eta.cols()) +
                               " columns but the dataset provides q+1 = " +
                               std::to_string(data.q() + 1));
    params.eta = config.eta;
  } else {
    params.eta = poisson_initial_eta(data);
  }
  return params;
}

/// Simulation context: grid, optional covariates, mean surface.
struct SimContext {
  Grid grid;
  Eigen::VectorXd weights;
  CovariateMatrix covariates;
  Eigen::MatrixXd mean;  // p x N
  std::vector<SpherePoint> centers;
};

SimContext simulation_context(const RunConfig& config) {
  SimContext ctx;
  ctx.grid = build_grid(config.region, config.resolution_deg);
  const auto uw = ctx.grid.unit_weights();
  ctx.weights.resize(ctx.grid.size());
  for (Eigen::Index k = 0; k < ctx.grid.size(); ++k) ctx.weights(k) = uw[static_cast<size_t>(k)];

  if (const auto it = config.inputs.find("covariates"); it != config.inputs.end()) {
    const ColumnarTable table = read_columnar(it->second);
    if (table.rows() != ctx.grid.size())
      throw std::runtime_error(it->second + ": covariate rows do not match the grid");
    ctx.covariates.values = table.values;
    for (const auto& col : table.columns) ctx.covariates.names.push_back(col.header_token());
    if (config.standardize_covariates) {
      std::vector<uint8_t> valid(static_cast<size_t>(ctx.grid.size()), 1);
      for (Eigen::Index c = 0; c < ctx.covariates.values.cols(); ++c) {
        GriddedField field;
        field.name = ctx.covariates.names[static_cast<size_t>(c)];
        field.values = ctx.covariates.values.col(c);
        ctx.covariates.values.col(c) = standardize(field, valid).values;
      }
    }
  } else {
    ctx.covariates.values.resize(ctx.grid.size(), 0);
  }

  if (!config.has_eta())
    throw std::runtime_error("simulate needs model.eta (one row per type, intercept first)");
  if (config.eta.cols() != ctx.covariates.q() + 1)
    throw std::runtime_error("model.eta must have q+1 = " +
                             std::to_string(ctx.covariates.q() + 1) + " columns");
  ctx.mean = mean_surface(ctx.covariates, config.eta);
  ctx.centers.reserve(static_cast<size_t>(ctx.grid.size()));
  for (const auto& cell : ctx.grid.cells) ctx.centers.push_back(cell.center);
  return ctx;
}

std::unique_ptr<JointFieldSimulator> make_simulator(const RunConfig& config,
                                                    std::vector<SpherePoint> centers, int s) {
  if (config.use_fsa) {
    const auto knots = place_knots(config.region, config.m);
    return std::make_unique<FsaJointSimulator>(std::move(centers), knots, config.block_size,
                                               config.types, s, config.seed);
  }
  return std::make_unique<ExactJointSimulator>(std::move(centers), config.types, s, config.seed);
}

void write_table(const fs::path& path, const std::string& header,
                 const std::vector<std::string>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << header << "\n";
  for (const auto& row : rows) out << row << "\n";
}

}  // namespace

RunConfig Overrides::apply(RunConfig config) const {
  if (has_seed) config.seed = seed;
  if (!out_dir.empty()) config.out_dir = out_dir;
  for (const auto& item : fix) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--fix expects name=value, got '" + item + "'");
    config.fixed.emplace_back(item.substr(0, eq), std::stod(item.substr(eq + 1)));
  }
  return config;
}

int cmd_simulate(const RunConfig& config) {
  const auto start = Clock::now();
  SimContext ctx = simulation_context(config);
  const fs::path dir = prepare_out_dir(config);

  require_valid(config.cov);
  auto sim = make_simulator(config, ctx.centers, 1);
  sim->set_params(config.cov);

  IntensitySurface surface;
  surface.log_lambda = ctx.mean;
  for (int t = 0; t < config.types; ++t)
    surface.log_lambda.row(t) += sim->fields()[static_cast<size_t>(t)].row(0);
  surface.weights = ctx.weights;

  const auto patterns = simulate_pattern(surface, config.seed, config.occurrence_only);

  // latent log-intensity surfaces
  {
    ColumnarTable table;
    const auto names = type_names(config);
    for (int t = 0; t < config.types; ++t)
      table.columns.push_back(ColumnSpec{"y_" + names[static_cast<size_t>(t)], std::nullopt});
    table.coords = ctx.centers;
    table.values = surface.log_lambda.transpose();
    write_columnar((dir / "surface.csv").string(), table);
  }

  // events with per-cell counts
  {
    std::vector<std::string> rows;
    for (int t = 0; t < config.types; ++t) {
      std::map<Eigen::Index, long> counts;
      for (Eigen::Index cell : patterns[static_cast<size_t>(t)].events) ++counts[cell];
      for (const auto& [cell, count] : counts) {
        const auto& center = ctx.grid.cells[static_cast<size_t>(cell)].center;
        rows.push_back(format_value(center.lon) + "," + format_value(center.lat) + "," +
                       std::to_string(t + 1) + "," + std::to_string(count));
      }
    }
    write_table(dir / "patterns.csv", "lon,lat,type,count", rows);
  }

  const auto names = type_names(config);
  for (int t = 0; t < config.types; ++t)
    std::cout << "type " << (t + 1) << " (" << names[static_cast<size_t>(t)]
              << ") events = " << patterns[static_cast<size_t>(t)].n() << "\n";
  std::cout << "out = " << dir.string() << "\n";
  std::cout << "elapsed_ms = " << format_value(ms_since(start)) << "\n";
  return 0;
}

namespace {

void write_fit_outputs(const RunConfig& config, const PointPatternDataset& data,
                       const FitResult& result, const fs::path& dir) {
  const auto names = type_names(config);

  // eta table: predictors down the rows, one column per type
  {
    std::string header = "predictor";
    for (const auto& name : names) header += "," + name;
    std::vector<std::string> rows;
    std::vector<std::string> predictors{"intercept"};
    for (const auto& name : data.covariates.names) predictors.push_back(name);
    for (int c = 0; c < static_cast<int>(predictors.size()); ++c) {
      std::string row = predictors[static_cast<size_t>(c)];
      for (int t = 0; t < data.p(); ++t) row += "," + format_value(result.params.eta(t, c));
      rows.push_back(row);
    }
    write_table(dir / "eta_table.csv", header, rows);
  }

  // covariance table
  {
    std::vector<std::string> rows;
    rows.push_back("beta_km," + format_value(result.params.cov.beta_km));
    for (int i = 0; i < data.p(); ++i)
      for (int j = i + 1; j < data.p(); ++j)
        rows.push_back("rho_" + std::to_string(i + 1) + std::to_string(j + 1) + "," +
                       format_value(result.params.cov.rho(i, j)));
    for (int i = 0; i < data.p(); ++i)
      rows.push_back("sigma2_" + std::to_string(i + 1) + "," +
                     format_value(result.params.cov.sigma2(i)));
    write_table(dir / "cov_table.csv", "parameter,value", rows);
  }

  // optimizer trace
  {
    std::vector<std::string> rows;
    for (const auto& tp : result.trace)
      rows.push_back(std::to_string(tp.iteration) + "," + format_value(tp.value));
    write_table(dir / "trace.csv", "iteration,mc_loglik", rows);
  }

  std::ofstream out(dir / "report.txt");
  out << "lgcps fit report\n";
  out << "cells = " << data.n_cells() << "\n";
  out << "types = " << data.p() << "\n";
  out << "covariates = " << data.q() << "\n";
  out << "events_total = " << data.total_events() << "\n";
  out << "s = " << result.settings.s << "\n";
  out << "seed = " << result.settings.seed << "\n";
  out << "use_fsa = " << (result.settings.use_fsa ? "true" : "false") << "\n";
  out << "m = " << result.settings.m << "\n";
  out << "block_size = " << result.settings.block_size << "\n";
  out << "iterations = " << result.iterations << "\n";
  out << "evaluations = " << result.evaluations << "\n";
  out << "converged = " << (result.converged ? "true" : "false") << "\n";
  out << "final_mc_loglik = " << format_value(result.final_mc_loglik) << "\n";
  out << "beta_km = " << format_value(result.params.cov.beta_km) << "\n";
  for (int i = 0; i < data.p(); ++i)
    for (int j = i + 1; j < data.p(); ++j)
      out << "rho_" << (i + 1) << (j + 1) << " = " << format_value(result.params.cov.rho(i, j))
          << "\n";
  for (int i = 0; i < data.p(); ++i)
    out << "sigma2_" << (i + 1) << " = " << format_value(result.params.cov.sigma2(i)) << "\n";
}

}  // namespace

int cmd_fit(const RunConfig& config) {
  const auto start = Clock::now();
  const PointPatternDataset data = assemble_dataset(config);
  const fs::path dir = prepare_out_dir(config);
  const ModelParams init = params_from_config(config, data);

  const FitResult result = fit(data, init, fit_settings(config));
  write_fit_outputs(config, data, result, dir);

  std::cout << "converged = " << (result.converged ? "true" : "false") << "\n";
  std::cout << "iterations = " << result.iterations << "\n";
  std::cout << "final_mc_loglik = " << format_value(result.final_mc_loglik) << "\n";
  std::cout << "beta_km = " << format_value(result.params.cov.beta_km) << "\n";
  std::cout << "out = " << dir.string() << "\n";
  std::cout << "elapsed_ms = " << format_value(ms_since(start)) << "\n";
  if (!result.converged)
    std::cout << "warning: optimizer stopped at the iteration cap; partial result written\n";
  return 0;
}

int cmd_loglik(const RunConfig& config) {
  const auto start = Clock::now();
  const PointPatternDataset data = assemble_dataset(config);
  const fs::path dir = prepare_out_dir(config);
  const ModelParams params = params_from_config(config, data);

  McObjective objective(data, fit_settings(config));
  const double value = objective(params);
  const double elapsed = ms_since(start);

  std::ofstream out(dir / "loglik.txt");
  out << "mc_loglik = " << format_value(value) << "\n";
  out << "s = " << config.s << "\n";
  out << "seed = " << config.seed << "\n";

  std::cout << "mc_loglik = " << format_value(value) << "\n";
  std::cout << "s = " << config.s << "\n";
  std::cout << "seed = " << config.seed << "\n";
  std::cout << "elapsed_ms = " << format_value(elapsed) << "\n";
  return 0;
}

int cmd_profile(const RunConfig& config) {
  if (config.profile_parameter.empty() || config.profile_values.empty())
    throw std::runtime_error("profile needs [profile] parameter and values");
  const PointPatternDataset data = assemble_dataset(config);
  const fs::path dir = prepare_out_dir(config);
  const ModelParams params = params_from_config(config, data);

  const auto points = profile(data, params, config.profile_parameter, config.profile_values,
                              fit_settings(config));

  std::vector<std::string> rows;
  for (const auto& point : points) {
    rows.push_back(format_value(point.value) + "," + format_value(point.loglik) + "," +
                   (point.ok ? "ok" : "error"));
    std::cout << config.profile_parameter << " = " << format_value(point.value)
              << " mc_loglik = " << format_value(point.loglik)
              << (point.ok ? "" : (" error: " + point.error)) << "\n";
  }
  write_table(dir / "profile.csv", "value,mc_loglik,status", rows);
  return 0;
}

int cmd_eof(const RunConfig& config) {
  const std::string key = config.eof_variable + "_profile";
  const auto it = config.inputs.find(key);
  if (it == config.inputs.end())
    throw std::runtime_error("eof needs [inputs] " + key + " pointing at a profile file");
  const Grid grid = build_grid(config.region, config.resolution_deg);
  const ColumnarTable table = read_columnar(it->second);
  const ProfileStack stack = stack_from_table(table, grid, config.eof_variable);
  const EofResult eof = compute_eofs(stack, config.eof_k);
  const fs::path dir = prepare_out_dir(config);

  {
    std::string header = "level_mb";
    for (int i = 1; i <= config.eof_k; ++i) header += ",eof" + std::to_string(i);
    std::vector<std::string> rows;
    for (int l = 0; l < stack.r(); ++l) {
      std::string row = format_value(stack.levels_mb[static_cast<size_t>(l)]);
      for (int i = 0; i < config.eof_k; ++i) row += "," + format_value(eof.loadings(l, i));
      rows.push_back(row);
    }
    write_table(dir / "eof_loadings.csv", header, rows);
  }
  {
    ColumnarTable pcs;
    for (int i = 1; i <= config.eof_k; ++i)
      pcs.columns.push_back(ColumnSpec{config.eof_variable + std::to_string(i), std::nullopt});
    for (const auto& cell : grid.cells) pcs.coords.push_back(cell.center);
    pcs.values = eof.pcs.transpose();
    write_columnar((dir / "eof_pcs.csv").string(), pcs);
  }

  std::vector<std::string> rows;
  const double total = eof.eigenvalues_all.sum();
  for (int i = 0; i < config.eof_k; ++i)
    rows.push_back(std::to_string(i + 1) + "," + format_value(eof.explained_variance(i)) + "," +
                   format_value(eof.explained_variance(i) / total));
  write_table(dir / "eof_explained.csv", "component,variance,fraction", rows);

  for (int i = 0; i < config.eof_k; ++i)
    std::cout << "eof " << (i + 1)
              << " explained = " << format_value(100.0 * eof.explained_variance(i) / total)
              << "%\n";
  if (eof.degenerate_ties) std::cout << "warning: tied eigenvalues; ordering is by sign rule\n";
  return 0;
}

int cmd_shear(const RunConfig& config) {
  const auto u_it = config.inputs.find("u_profile");
  const auto v_it = config.inputs.find("v_profile");
  if (u_it == config.inputs.end() || v_it == config.inputs.end())
    throw std::runtime_error("shear needs [inputs] u_profile and v_profile");
  const Grid grid = build_grid(config.region, config.resolution_deg);
  const ProfileStack u = stack_from_table(read_columnar(u_it->second), grid, "u");
  const ProfileStack v = stack_from_table(read_columnar(v_it->second), grid, "v");
  const ShearFields shear = shear_fields(u, v);
  const fs::path dir = prepare_out_dir(config);

  ColumnarTable table;
  table.columns = {ColumnSpec{"ls", std::nullopt}, ColumnSpec{"dp", std::nullopt},
                   ColumnSpec{"dds", std::nullopt}};
  for (const auto& cell : grid.cells) table.coords.push_back(cell.center);
  table.values.resize(grid.size(), 3);
  table.values.col(0) = shear.ls.values;
  table.values.col(1) = shear.dp.values;
  table.values.col(2) = shear.dds.values;
  write_columnar((dir / "shear.csv").string(), table);

  std::cout << "ls mean = " << format_value(shear.ls.values.mean()) << "\n";
  std::cout << "dp mean = " << format_value(shear.dp.values.mean()) << "\n";
  std::cout << "dds mean = " << format_value(shear.dds.values.mean()) << "\n";
  std::cout << "out = " << dir.string() << "\n";
  return 0;
}

int cmd_validate_fsa(const RunConfig& config) {
  // deterministic scatter of points over the configured region
  CounterRng rng(config.check_seed, stream_id(RngStream::generic, 15));
  std::vector<SpherePoint> locs;
  locs.reserve(static_cast<size_t>(config.check_n));
  for (int i = 0; i < config.check_n; ++i) {
    const double u = rng.uniform(static_cast<uint32_t>(i), 0);
    const double v = rng.uniform(static_cast<uint32_t>(i), 1);
    locs.emplace_back(config.region.lon_min + u * config.region.lon_extent(),
                      config.region.lat_min + v * config.region.lat_extent());
  }
  const auto knots = place_knots(config.region, config.check_m);
  const double sigma2 = config.cov.sigma2(0);
  const double beta = config.cov.beta_km;
  const RadialCovFn covfn = [=](double d) { return sigma2 * std::exp(-d / beta); };

  Eigen::MatrixXd sigma(config.check_n, config.check_n);
  for (int i = 0; i < config.check_n; ++i)
    for (int j = 0; j < config.check_n; ++j)
      sigma(i, j) = covfn(great_circle_distance(locs[static_cast<size_t>(i)],
                                                locs[static_cast<size_t>(j)]));

  const auto t_build = Clock::now();
  const FsaDecomposition fsa = build_fsa(locs, knots, config.check_block, covfn);
  const double build_ms = ms_since(t_build);

  const Eigen::MatrixXd w = implied_cov(fsa);
  const double frob = (w - sigma).norm() / sigma.norm();
  const double diag = (w - sigma).diagonal().cwiseAbs().maxCoeff();

  const auto t_sim = Clock::now();
  const int s = std::min(config.s, 2000);
  simulate_fields(fsa, s, config.seed);
  const double simulate_ms = ms_since(t_sim);

  const fs::path dir = prepare_out_dir(config);
  std::ofstream file(dir / "validate_fsa.txt");
  for (std::ostream* os :
       {static_cast<std::ostream*>(&file), static_cast<std::ostream*>(&std::cout)}) {
    *os << "n = " << config.check_n << "\n";
    *os << "m = " << config.check_m << "\n";
    *os << "block_size = " << config.check_block << "\n";
    *os << "frobenius_rel_error = " << format_value(frob) << "\n";
    *os << "diag_max_error = " << format_value(diag) << "\n";
    *os << "build_ms = " << format_value(build_ms) << "\n";
    *os << "simulate_ms = " << format_value(simulate_ms) << " (s = " << s << ")\n";
  }
  return 0;
}

}  // namespace lgcps::cli
