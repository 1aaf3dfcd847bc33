#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "causalcollab/eval_harness.hpp"
#include "causalcollab/g_engine.hpp"
#include "causalcollab/json_io.hpp"
#include "causalcollab/nuisance.hpp"
#include "causalcollab/scm_sim.hpp"
#include "causalcollab/style_embed.hpp"

namespace causalcollab {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumerical = 4,
  kExitProvenance = 5,
};

/// Every parameter block the commands consume. Section seeds not set
/// explicitly inherit the global seed; eval seeds default to seed, seed+1,
/// seed+2.
struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out = "out";
  std::string log_level = "info";
  int threads = 1;
  std::string observational;   // empty: <out>/obs.jsonl
  std::string counterfactual;  // empty: <out>/cf.jsonl
  std::string fit_embedding = "cvae";
  ScmConfig scm;
  CvaeConfig cvae;
  PcaConfig pca;
  OutcomeConfig outcome;
  TransitionConfig transition;
  GEstimateConfig gestimate;
  EvalConfig eval;
  std::vector<BaselineSpec> methods = all_baselines();
  std::string sweep_axis = "alpha";
  std::vector<double> sweep_values{0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5};

  std::filesystem::path observational_path() const;
  std::filesystem::path counterfactual_path() const;

  Json to_json() const;
};

/// Layers defaults, the optional config file and `section.key=value`
/// overrides (values parsed as JSON, falling back to strings). Unknown
/// sections or keys raise ConfigError.
RunConfig resolve_config(const Json* file, const std::vector<std::pair<std::string, std::string>>& overrides,
                         std::uint64_t default_seed);

/// Runs the command line in-process; results go to `out`, logs to stderr.
int run_cli(const std::vector<std::string>& args, std::ostream& out);

}  // namespace causalcollab
