#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causalcollab/dataset.hpp"
#include "causalcollab/json_io.hpp"
#include "causalcollab/nn.hpp"
#include "causalcollab/random.hpp"
#include "causalcollab/style_embed.hpp"

namespace causalcollab {

/// Outcome feature vector: [act_1..act_T | l_1..l_T | a_1..a_{T-1}], where
/// act_t is either the raw action or its encoded style and the trailing raw
/// previous-action block is present only when prev_raw is set.
struct FeatureLayout {
  int T = 0;
  int act_dim = 0;
  int d = 0;
  bool prev_raw = false;

  int dim() const { return T * act_dim + T * d + (prev_raw ? (T - 1) * d : 0); }
  int act_offset(int t) const { return (t - 1) * act_dim; }       // 1-based t
  int l_offset(int t) const { return T * act_dim + (t - 1) * d; }  // 1-based t
  int prev_offset() const { return T * act_dim + T * d; }
  /// Transition input for step t >= 2: [act_1..act_{t-1} | l_1..l_{t-1}].
  int transition_input_dim(int t) const { return (t - 1) * (act_dim + d); }

  Json to_json() const;
  static FeatureLayout from_json(const Json& j);
  bool operator==(const FeatureLayout&) const = default;
};

/// Per step act features (act_dim x n): raw actions, or encoded styles.
std::vector<Eigen::MatrixXd> action_features(const Dataset& ds, const StyleEncoder* encoder);

/// dim x n design matrix for the outcome model.
Eigen::MatrixXd outcome_design(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act, const FeatureLayout& layout);

Eigen::VectorXd assemble_features(const FeatureLayout& layout, std::span<const Eigen::VectorXd> act,
                                  std::span<const Eigen::VectorXd> l, std::span<const Eigen::VectorXd> prev);

enum class OutcomeKind { logistic, additive };
std::string to_string(OutcomeKind k);
OutcomeKind outcome_kind_from_string(const std::string& s);

struct OutcomeConfig {
  OutcomeKind kind = OutcomeKind::logistic;
  double lambda = 1.0;
  int max_iter = 20000;
  double tol = 1e-8;
  // additive networks
  int hidden = 64;
  int epochs = 200;
  double lr = 1e-3;
  int batch = 64;
  std::uint64_t seed = 7;

  void validate() const;
  Json to_json() const;
  static OutcomeConfig from_json(const Json& j);
};

struct OutcomeModel {
  OutcomeKind kind = OutcomeKind::logistic;
  FeatureLayout layout;
  // logistic: sigmoid(w^T phi + b)
  Eigen::VectorXd w;
  double b = 0.0;
  // additive: sigmoid(b1(act) + b2(l) + b3(prev raw)); b3 empty when T = 1
  Mlp b1, b2, b3;
  Standardizer s1, s2, s3;
  OutcomeConfig config;
  Json provenance = Json::object();

  double predict(const Eigen::Ref<const Eigen::VectorXd>& phi) const;
  /// Column-wise predictions for a dim x n matrix.
  Eigen::VectorXd predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& phi) const;
  /// Pre-sigmoid score.
  Eigen::VectorXd score_batch(const Eigen::Ref<const Eigen::MatrixXd>& phi) const;

  Json to_json() const;
  static OutcomeModel from_json(const Json& j);
};

/// Fits on a dim x n design with labels in {0,1}. The additive kind requires
/// layout.prev_raw whenever T > 1.
OutcomeModel fit_outcome(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FeatureLayout& layout,
                         const OutcomeConfig& cfg);

/// Builds features from an observational dataset and fits. The additive kind
/// switches on the raw previous-action block.
OutcomeModel fit_outcome(const Dataset& ds, const StyleEncoder* encoder, const OutcomeConfig& cfg);

/// sum_i [log(1 + e^{t_i}) - y_i t_i] + lambda/2 (|w|^2 + b^2), t = X^T w + b.
/// grad (size dim + 1, bias last) is overwritten when non-null.
double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                          double lambda, Eigen::VectorXd* grad);

/// Mean log-loss of an additive model; grad is the concatenation of the
/// b1, b2, b3 parameter gradients.
double additive_loss(const OutcomeModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::VectorXd* grad);

struct TransitionConfig {
  int epochs = 1000;
  double lr = 1e-5;
  int hidden = 128;
  int batch = 64;
  std::uint64_t seed = 7;

  void validate() const;
  Json to_json() const;
  static TransitionConfig from_json(const Json& j);
};

/// L_t | history ~ N(mu_t([act_<t | l_<t]), I_d) for t = 2..T.
struct TransitionModel {
  FeatureLayout layout;
  std::vector<Mlp> nets;  // index t - 2
  std::vector<Standardizer> inputs;
  TransitionConfig config;
  Json provenance = Json::object();

  int d() const { return layout.d; }
  Eigen::MatrixXd mean_batch(int t, const Eigen::Ref<const Eigen::MatrixXd>& cond) const;
  Eigen::VectorXd mean(int t, const Eigen::Ref<const Eigen::VectorXd>& cond) const;
  /// n2 independent draws as columns.
  Eigen::MatrixXd sample(int t, const Eigen::Ref<const Eigen::VectorXd>& cond, int n2, Rng& rng) const;

  Json to_json() const;
  static TransitionModel from_json(const Json& j);
};

/// Transition input for step t from per-step act features and contexts.
Eigen::MatrixXd transition_inputs(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act, int t);

TransitionModel fit_transition(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act, const TransitionConfig& cfg);
TransitionModel fit_transition(const Dataset& ds, const StyleEncoder* encoder, const TransitionConfig& cfg);

/// Mean over entries of (mu(X) - Y)^2 for one transition network on
/// already-standardized inputs; grad is added into when non-null.
double transition_loss(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, Eigen::VectorXd* grad);

}  // namespace causalcollab
