#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "causalcollab/dataset.hpp"
#include "causalcollab/json_io.hpp"

namespace causalcollab {

/// Linear-logit sequential simulator with an alpha-split confounder.
///
/// Per trajectory: X ~ Bernoulli(1/2); L_1 = shift * (2X - 1) * u_X + N(0, I_d);
/// a style coefficient s ~ N(0, style_sd^2 I_K) shared by all steps;
/// A_t = L_t + U s + sigma * N(0, I_d);
/// L_{t+1} = context_carry * L_t + action_carry * (A_t - L_t) + N(0, I_d);
/// logit P(Y=1) = c(X) + theta^T s, with c(X) = +/-c chosen so that
/// P(Y=1 | X=1) = 1 - alpha exactly in expectation (reversed for the
/// counterfactual split). U (d x K) and u_X are orthonormal and seed-derived.
struct ScmConfig {
  int T = 2;
  int d = 32;
  double alpha = 0.2;
  double sigma_noise = 1.0;
  int n = 1250;
  std::uint64_t seed = 7;
  std::vector<double> theta;  // empty: default pattern truncated to style_dim
  int style_dim = 4;
  double style_sd = 4.0;
  double confounder_shift = 2.0;
  double context_carry = 0.5;
  double action_carry = 0.3;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  Eigen::VectorXd resolved_theta() const;

  Json to_json() const;
  /// Unknown keys are rejected.
  static ScmConfig from_json(const Json& j);
};

struct SimulatorTruth {
  Eigen::MatrixXd style_basis;           // U, d x K
  Eigen::VectorXd confounder_direction;  // u_X
  Eigen::VectorXd theta;
  double intercept = 0.0;                // c; +/-inf when alpha is 0 or 1
  Eigen::MatrixXd styles_observational;  // n x K
  Eigen::MatrixXd styles_counterfactual;
  std::vector<int> x;                    // shared by both splits

  /// True P(Y=1) for a trajectory with confounder x and style s.
  double outcome_probability(int x_value, const Eigen::VectorXd& s, Split split) const;
};

struct SyntheticData {
  Dataset observational;
  Dataset counterfactual;
  SimulatorTruth truth;
};

/// Paired observational/counterfactual datasets. Trajectory i in both splits
/// shares its id, X and L_1; styles, action noise, later contexts and the
/// outcome are drawn from split-specific substreams. Vectors do not depend on
/// alpha, only outcomes do.
SyntheticData generate_synthetic(const ScmConfig& cfg);

/// Solves E[sigmoid(c + tau * G)] = p for c, G ~ N(0, 1).
double calibrate_intercept(double p, double tau);

/// E[sigmoid(c + tau * G)], G ~ N(0, 1).
double expected_sigmoid(double c, double tau);

double sigmoid(double x);

}  // namespace causalcollab
