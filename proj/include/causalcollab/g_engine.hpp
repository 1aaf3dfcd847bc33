#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "causalcollab/dataset.hpp"
#include "causalcollab/json_io.hpp"
#include "causalcollab/nuisance.hpp"
#include "causalcollab/random.hpp"

namespace causalcollab {

/// P(Y = 1 | phi) for columns of a feature matrix laid out per FeatureLayout.
class OutcomePredictor {
 public:
  virtual ~OutcomePredictor() = default;
  virtual Eigen::VectorXd predict_batch(const Eigen::MatrixXd& phi) const = 0;
};

class FittedOutcome final : public OutcomePredictor {
 public:
  explicit FittedOutcome(const OutcomeModel& m) : m_(m) {}
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& phi) const override { return m_.predict_batch(phi); }

 private:
  const OutcomeModel& m_;
};

class ConstantOutcome final : public OutcomePredictor {
 public:
  explicit ConstantOutcome(double p) : p_(p) {}
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& phi) const override {
    return Eigen::VectorXd::Constant(phi.cols(), p_);
  }

 private:
  double p_;
};

class FunctionOutcome final : public OutcomePredictor {
 public:
  explicit FunctionOutcome(std::function<double(const Eigen::VectorXd&)> f) : f_(std::move(f)) {}
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& phi) const override;

 private:
  std::function<double(const Eigen::VectorXd&)> f_;
};

/// Draws L_t given the history input [act_<t | l_<t]. Sampling is split into
/// a deterministic location and a noise draw so shifted evaluations can reuse
/// the same noise.
class TransitionSampler {
 public:
  virtual ~TransitionSampler() = default;
  virtual int noise_dim() const = 0;
  virtual void draw_noise(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const = 0;
  /// Location parameters, one column per input column.
  virtual Eigen::MatrixXd location(int t, const Eigen::MatrixXd& cond) const = 0;
  virtual Eigen::VectorXd realize(const Eigen::VectorXd& location, const Eigen::VectorXd& noise) const = 0;
};

/// N(mu_t(cond), I_d).
class GaussianTransition final : public TransitionSampler {
 public:
  explicit GaussianTransition(const TransitionModel& m) : m_(m) {}
  int noise_dim() const override { return m_.d(); }
  void draw_noise(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const override;
  Eigen::MatrixXd location(int t, const Eigen::MatrixXd& cond) const override { return m_.mean_batch(t, cond); }
  Eigen::VectorXd realize(const Eigen::VectorXd& location, const Eigen::VectorXd& noise) const override {
    return location + noise;
  }

 private:
  const TransitionModel& m_;
};

/// One-hot draws from a categorical law; the location is the probability
/// vector and the noise a single uniform.
class CategoricalTransition final : public TransitionSampler {
 public:
  explicit CategoricalTransition(std::function<Eigen::VectorXd(int t, const Eigen::VectorXd& cond)> probs)
      : probs_(std::move(probs)) {}
  int noise_dim() const override { return 1; }
  void draw_noise(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const override;
  Eigen::MatrixXd location(int t, const Eigen::MatrixXd& cond) const override;
  Eigen::VectorXd realize(const Eigen::VectorXd& location, const Eigen::VectorXd& noise) const override;

 private:
  std::function<Eigen::VectorXd(int, const Eigen::VectorXd&)> probs_;
};

/// Empirical (or weighted) law of L_1.
class L1Pool {
 public:
  explicit L1Pool(Eigen::MatrixXd vectors);  // d x m, uniform weights
  L1Pool(Eigen::MatrixXd vectors, const Eigen::VectorXd& weights);
  static L1Pool from_dataset(const Dataset& ds);

  std::size_t size() const { return static_cast<std::size_t>(vectors_.cols()); }
  int d() const { return static_cast<int>(vectors_.rows()); }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  std::size_t draw(Rng& rng) const;

 private:
  Eigen::MatrixXd vectors_;
  std::vector<double> cumulative_;  // empty for uniform
};

/// The treatment held fixed by an intervention: per-step act features and,
/// when the layout uses them, the raw previous actions. key selects the
/// random substreams of this unit.
struct EvaluationUnit {
  std::vector<Eigen::VectorXd> act;
  std::vector<Eigen::VectorXd> prev_raw;
  std::uint64_t key = 0;
};

std::vector<EvaluationUnit> make_units(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act,
                                       const FeatureLayout& layout);

struct GEstimateConfig {
  int n1 = 50;
  int n2 = 50;
  std::optional<double> delta;              // default: 0.05 x sd of the styles along u
  std::optional<Eigen::VectorXd> direction;  // default: per-coordinate sweep
  std::uint64_t seed = 7;
  bool common_random_numbers = true;
  int threads = 1;

  void validate() const;
  Json to_json() const;
  static GEstimateConfig from_json(const Json& j);
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sd of the per-l_1 means over sqrt(n1)
};

/// Monte Carlo plug-in of the g-formula for one fixed treatment: n1 draws of
/// l_1 from the pool, n2 forward draws of l_2..l_T per l_1, outcome averaged.
/// Cell (j, k) uses substream (seed, unit.key, j), so the result does not
/// depend on threading and equal keys give common random numbers.
McEstimate g_formula_mc(const OutcomePredictor& outcome, const TransitionSampler* transition, const L1Pool& pool,
                        const EvaluationUnit& unit, const FeatureLayout& layout, const GEstimateConfig& cfg);

/// Same Monte Carlo pattern with raw actions as the treatment.
McEstimate classical_gformula_mc(const OutcomePredictor& outcome, const TransitionSampler* transition,
                                 const L1Pool& pool, const std::vector<Eigen::VectorXd>& actions,
                                 const FeatureLayout& layout, const GEstimateConfig& cfg, std::uint64_t key = 0);

struct IseEstimate {
  Eigen::MatrixXd directions;  // K x m, one column per direction
  Eigen::VectorXd value;       // per direction
  Eigen::VectorXd std_error;   // trajectory-level jackknife
  Eigen::VectorXd delta;       // per direction
  double base = 0.0;           // E[Y(f)]
  Eigen::VectorXd shifted;     // E[Y(f + delta u)] per direction
  double noise_floor = 0.0;
  GEstimateConfig config;

  Json to_json() const;
};

/// ISE along each direction by central differences: every step's style is
/// shifted by +/- delta/2 along u and the two plug-in estimates are averaged
/// over evaluation units.
IseEstimate ise_estimate(const OutcomePredictor& outcome, const TransitionSampler* transition, const L1Pool& pool,
                         const std::vector<EvaluationUnit>& units, const FeatureLayout& layout,
                         const GEstimateConfig& cfg);

}  // namespace causalcollab
