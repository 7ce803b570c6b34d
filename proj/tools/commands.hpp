#pragma once

#include <string>
#include <vector>

#include "lgcps/config.hpp"

namespace lgcps::cli {

/// Command-line overrides applied on top of the config file.
struct Overrides {
  bool has_seed = false;
  uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> fix;

  RunConfig apply(RunConfig config) const;
};

int cmd_simulate(const RunConfig& config);
int cmd_fit(const RunConfig& config);
int cmd_loglik(const RunConfig& config);
int cmd_profile(const RunConfig& config);
int cmd_eof(const RunConfig& config);
int cmd_shear(const RunConfig& config);
int cmd_validate_fsa(const RunConfig& config);

}  // namespace lgcps::cli
