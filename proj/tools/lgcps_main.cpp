#include <CLI11.hpp>
#include <functional>
#include <iostream>

#include "commands.hpp"
#include "lgcps/config.hpp"

namespace {

struct SubcommandArgs {
  std::string config_path;
  lgcps::cli::Overrides overrides;
};

void add_common_options(CLI::App* cmd, SubcommandArgs& args, bool with_fix) {
  cmd->add_option("--config", args.config_path, "run configuration file")->required();
  cmd->add_option("--seed", args.overrides.seed, "override the config seed")
      ->each([&args](const std::string&) { args.overrides.has_seed = true; });
  cmd->add_option("--out", args.overrides.out_dir, "override the output directory");
  if (with_fix)
    cmd->add_option("--fix", args.overrides.fix,
                    "pin a parameter during fitting, e.g. --fix beta=1465.57");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multivariate log-Gaussian Cox process modeling on the sphere"};
  app.require_subcommand(1);

  struct Entry {
    CLI::App* cmd;
    SubcommandArgs args;
    std::function<int(const lgcps::RunConfig&)> run;
  };
  std::vector<std::unique_ptr<Entry>> entries;

  auto add = [&](const std::string& name, const std::string& help, bool with_fix,
                 std::function<int(const lgcps::RunConfig&)> run) {
    auto entry = std::make_unique<Entry>();
    entry->cmd = app.add_subcommand(name, help);
    entry->run = std::move(run);
    add_common_options(entry->cmd, entry->args, with_fix);
    entries.push_back(std::move(entry));
  };

  add("simulate", "draw latent intensity surfaces and point patterns", false,
      lgcps::cli::cmd_simulate);
  add("fit", "maximum Monte Carlo likelihood fit", true, lgcps::cli::cmd_fit);
  add("loglik", "evaluate the Monte Carlo log-likelihood once", false, lgcps::cli::cmd_loglik);
  add("profile", "objective slice over one parameter", false, lgcps::cli::cmd_profile);
  add("eof", "vertical-profile EOF decomposition", false, lgcps::cli::cmd_eof);
  add("shear", "derive the ls/dp/dds wind shear covariates", false, lgcps::cli::cmd_shear);
  add("validate-fsa", "covariance approximation quality report", false,
      lgcps::cli::cmd_validate_fsa);

  CLI11_PARSE(app, argc, argv);

  for (const auto& entry : entries) {
    if (!entry->cmd->parsed()) continue;
    try {
      const lgcps::RunConfig config =
          entry->args.overrides.apply(lgcps::load_config(entry->args.config_path));
      return entry->run(config);
    } catch (const std::exception& e) {
      std::cerr << "error: " << entry->cmd->get_name() << ": " << e.what() << std::endl;
      return 1;
    }
  }
  return 1;
}
