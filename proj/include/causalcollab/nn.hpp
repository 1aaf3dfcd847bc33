#pragma once

#include <vector>

#include <Eigen/Dense>

#include "causalcollab/json_io.hpp"
#include "causalcollab/random.hpp"

namespace causalcollab {

inline constexpr double kLeakySlope = 0.01;

/// Fully connected network with leaky-rectifier hidden activations and a
/// linear output layer. Samples are columns. Parameters live in one flat
/// vector laid out layer by layer as [W (column-major), b].
class Mlp {
 public:
  Mlp() = default;
  /// sizes = {input, hidden..., output}; He-normal weights, zero biases.
  Mlp(std::vector<int> sizes, Rng& rng);
  static Mlp zeros(std::vector<int> sizes);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  bool empty() const { return sizes_.empty(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Tape& tape) const;

  /// Adds dLoss/dparams into grad (size params().size()) given dLoss/doutput;
  /// returns dLoss/dinput.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::Ref<const Eigen::MatrixXd>& d_out,
                           Eigen::VectorXd& grad) const;

  Json to_json() const;
  static Mlp from_json(const Json& j);

 private:
  std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  std::size_t bias_offset(int layer) const;
  void layout();

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  Eigen::VectorXd params_;
};

/// Adam moment updates for minimization.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// Per-feature affine standardization fitted on columns-as-samples data.
/// Constant features keep unit scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::Ref<const Eigen::MatrixXd>& x);
  static Standardizer identity(int dim);
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Json to_json() const;
  static Standardizer from_json(const Json& j);
};

/// Deterministic minibatch order for one epoch.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

/// Columns selected by index.
Eigen::MatrixXd gather_columns(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<std::size_t>& idx,
                               std::size_t begin, std::size_t end);

}  // namespace causalcollab
