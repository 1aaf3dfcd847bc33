#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "causalcollab/dataset.hpp"
#include "causalcollab/json_io.hpp"
#include "causalcollab/nn.hpp"

namespace causalcollab {

struct CvaeConfig {
  int K = 50;
  int epochs = 500;
  double lr = 1e-4;
  double beta = 1.0;
  double sigma2 = 1.0;
  int hidden = 128;
  int batch = 64;
  std::uint64_t seed = 7;
  bool shared_across_steps = true;
  bool full_history = true;
  bool linear_decoder = false;

  void validate() const;
  Json to_json() const;
  static CvaeConfig from_json(const Json& j);
};

/// Conditional VAE with a fixed-variance Gaussian posterior N(mu(x), sigma2 I)
/// and prior N(0, sigma2 I). The encoder mean is the style map.
struct CvaeParams {
  CvaeConfig config;
  int T = 0;
  int d = 0;
  int K = 0;
  // One entry when shared across steps, otherwise one per step.
  std::vector<Mlp> encoders;
  std::vector<Mlp> decoders;
  std::vector<Standardizer> encoder_inputs;
  std::vector<Standardizer> decoder_conditions;
  std::vector<double> elbo_trace;  // entry 0 is before the first update
  int best_epoch = 0;

  double best_elbo() const;
};

struct PcaParams {
  int T = 0;
  int d = 0;
  int K = 0;
  std::vector<Eigen::MatrixXd> loadings;     // per step, d x K, orthonormal columns
  std::vector<Eigen::VectorXd> means;        // per step, d
  std::vector<Eigen::VectorXd> eigenvalues;  // per step, K, non-increasing
};

/// z_t = M^T (a_t - l_t) with a fixed d x K matrix.
struct LinearStyleMap {
  Eigen::MatrixXd M;
};

using StyleEncoder = std::variant<CvaeParams, PcaParams, LinearStyleMap>;

/// Fits on every step of every trajectory. K >= d is clamped to d - 1 with a
/// warning. Throws NumericalError naming the epoch on divergence and
/// LeakageError when handed counterfactual data.
CvaeParams fit_cvae(const Dataset& ds, const CvaeConfig& cfg);

/// Per-step principal subspaces of the centered actions. A rank below K
/// yields a rank-truncated fit and a warning.
PcaParams fit_pca(const Dataset& ds, int K);

int style_dim(const StyleEncoder& enc);
std::string encoder_kind(const StyleEncoder& enc);

/// f_t for 1-based t.
Eigen::VectorXd encode_style(const StyleEncoder& enc, const Trajectory& traj, int t);

/// Per step, the K x n matrix of encoded styles.
std::vector<Eigen::MatrixXd> encode_dataset(const StyleEncoder& enc, const Dataset& ds);

Json encoder_to_json(const StyleEncoder& enc);
StyleEncoder encoder_from_json(const Json& j);

/// CVAE input layout helpers (1-based t). The encoder sees the action and
/// context histories, the decoder the earlier actions and the contexts.
Eigen::VectorXd cvae_encoder_input(const CvaeConfig& cfg, int T, const Trajectory& traj, int t);
Eigen::VectorXd cvae_decoder_condition(const CvaeConfig& cfg, int T, const Trajectory& traj, int t);

struct CvaeLoss {
  double loss = 0.0;            // mean negative ELBO over the batch
  double reconstruction = 0.0;  // mean log-likelihood term
  double kl = 0.0;              // mean KL term
};

/// Reparameterized objective for one batch. enc_in and dec_cond are already
/// standardized; eps is K x n standard normal. Gradients of the mean loss are
/// added into g_enc / g_dec when non-null.
CvaeLoss cvae_loss(const Mlp& enc, const Mlp& dec, const Eigen::MatrixXd& enc_in, const Eigen::MatrixXd& dec_cond,
                   const Eigen::MatrixXd& target, const Eigen::MatrixXd& eps, double sigma2, double beta,
                   Eigen::VectorXd* g_enc, Eigen::VectorXd* g_dec);

/// Principal angles (radians, ascending) between the column spaces of A and B.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace causalcollab
