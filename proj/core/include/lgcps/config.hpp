#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lgcps/covariance.hpp"
#include "lgcps/sphere.hpp"

namespace lgcps {

/// Run settings read from the flat key-value config file. Every field
/// has a concrete default; serialize_config writes the fully resolved
/// state back out, so re-running from the echoed file reproduces the run.
struct RunConfig {
  // [region]
  Region region{-180.0, 180.0, -35.0, 35.0};
  double resolution_deg = 0.5;

  // [model]
  int types = 3;
  int s = 10000;
  uint64_t seed = 1;
  bool use_fsa = false;
  int m = 100;
  int block_size = 100;
  bool occurrence_only = false;
  MultiMaternParams cov = MultiMaternParams::identity(3);
  Eigen::MatrixXd eta;  // 0x0 when not given

  // [fit]
  double nm_tol = 1e-4;
  int max_iters = 2000;
  double init_step = 0.25;
  std::vector<std::pair<std::string, double>> fixed;

  // [profile]
  std::string profile_parameter;
  std::vector<double> profile_values;

  // [inputs]
  std::map<std::string, std::string> inputs;
  std::vector<std::string> rain_columns{"str", "dc", "sc"};
  bool standardize_covariates = true;

  // [eof]
  std::string eof_variable = "t";
  int eof_k = 3;

  // [fsa_check]
  int check_n = 40;
  int check_m = 5;
  int check_block = 10;
  uint64_t check_seed = 7;

  // [output]
  std::string out_dir = "out";

  bool has_eta() const { return eta.size() > 0; }
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
std::string serialize_config(const RunConfig& config);
void write_config(const RunConfig& config, const std::string& path);

}  // namespace lgcps
