#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "causalcollab/dataset.hpp"
#include "causalcollab/g_engine.hpp"
#include "causalcollab/json_io.hpp"
#include "causalcollab/nuisance.hpp"
#include "causalcollab/scm_sim.hpp"
#include "causalcollab/style_embed.hpp"

namespace causalcollab {

enum class Adjustment { none, g_estimation };
enum class Embedding { none, pca, cvae };

std::string to_string(Adjustment a);
std::string to_string(Embedding e);
Adjustment adjustment_from_string(const std::string& s);
Embedding embedding_from_string(const std::string& s);

struct BaselineSpec {
  Adjustment adjustment = Adjustment::none;
  Embedding embedding = Embedding::none;

  /// Table row label, e.g. "No Adjustment", "+PCA", "G-E+CVAE".
  std::string name() const;
  auto operator<=>(const BaselineSpec&) const = default;
};

/// The six rows in table order.
std::vector<BaselineSpec> all_baselines();

struct PcaConfig {
  int K = 50;
  Json to_json() const;
  static PcaConfig from_json(const Json& j);
};

struct EvalConfig {
  int folds = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  CvaeConfig cvae;
  PcaConfig pca;
  OutcomeConfig outcome;
  TransitionConfig transition;
  GEstimateConfig gestimate;
  int threads = 1;

  void validate() const;
  /// Fitting and estimation blocks are owned by their sections; this holds
  /// folds and seeds only.
  Json to_json() const;
  static EvalConfig from_json(const Json& j);  // folds, seeds
};

struct EvalRow {
  std::optional<double> axis_value;
  BaselineSpec spec;
  Split split = Split::observational;
  int fold = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double constant_mse = 0.0;  // mean training label as the predictor, same held-out set
};

struct MethodSummary {
  std::optional<double> axis_value;
  BaselineSpec spec;
  double obs_mean = 0.0, obs_sd = 0.0;
  double cf_mean = 0.0, cf_sd = 0.0;
  double gap_mean = 0.0, gap_sd = 0.0;  // counterfactual minus observational
  double constant_obs_mean = 0.0;
};

struct EvalReport {
  std::optional<std::string> axis;
  std::vector<EvalRow> rows;
  Json provenance = Json::object();

  /// Per (axis value, spec): mean and sd over seeds of the fold-averaged MSE.
  std::vector<MethodSummary> summarize() const;
  const MethodSummary& find(const std::vector<MethodSummary>& s, const BaselineSpec& spec,
                            std::optional<double> axis_value = std::nullopt) const;
};

/// Mean squared difference between predicted probabilities and realized labels.
double brier_score(const Eigen::VectorXd& p, const Dataset& ds);

/// Fold of every trajectory: rank of a seed-keyed hash of its id, modulo folds.
std::vector<int> assign_folds(const Dataset& ds, int folds, std::uint64_t seed);

/// Reuses encoder and transition fits across calls whose training vectors
/// and configuration coincide (outcomes never enter these fits).
class FitCache {
 public:
  std::shared_ptr<const StyleEncoder> encoder(const std::string& key) const;
  void put(const std::string& key, std::shared_ptr<const StyleEncoder> v);
  std::shared_ptr<const TransitionModel> transition(const std::string& key) const;
  void put(const std::string& key, std::shared_ptr<const TransitionModel> v);

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const StyleEncoder>> encoders_;
  std::map<std::string, std::shared_ptr<const TransitionModel>> transitions_;
};

/// SHA-256 over the raw context and action bytes, in order.
std::string vectors_digest(const Dataset& ds);

/// Cross-validated Brier scores for each spec on both held-out splits. Every
/// fit sees observational training folds only.
EvalReport run_eval(const Dataset& obs, const Dataset& cf, const std::vector<BaselineSpec>& specs,
                    const EvalConfig& cfg, std::optional<double> axis_value = std::nullopt,
                    FitCache* cache = nullptr);

EvalReport run_baseline(const Dataset& obs, const Dataset& cf, const BaselineSpec& spec, const EvalConfig& cfg);

enum class SweepAxis { alpha, sigma, latent_dim };
std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

/// Regenerates data per value (alpha, sigma) or refits encoders with K set to
/// each value (latent_dim).
EvalReport run_sweep(SweepAxis axis, const std::vector<double>& values, const ScmConfig& base,
                     const EvalConfig& cfg, const std::vector<BaselineSpec>& specs);

/// Long-format CSV: axis_value, adjustment, embedding, split, fold, seed, mse.
std::string results_csv(const EvalReport& report);
Json summary_json(const EvalReport& report);
/// Line plot of counterfactual (solid) and observational (dashed) MSE per
/// method against the sweep axis.
std::string sweep_svg(const EvalReport& report);

}  // namespace causalcollab
