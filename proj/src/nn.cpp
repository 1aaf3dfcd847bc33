#include "causalcollab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "causalcollab/errors.hpp"

namespace causalcollab {

namespace {

Eigen::MatrixXd leaky(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
}

}  // namespace

void Mlp::layout() {
  if (sizes_.size() < 2) throw std::invalid_argument("network needs at least an input and an output size");
  for (int s : sizes_)
    if (s < 0) throw std::invalid_argument("layer sizes must be non-negative");
  offsets_.clear();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]) +
           static_cast<std::size_t>(sizes_[l + 1]);
  }
  offsets_.push_back(off);
}

std::size_t Mlp::bias_offset(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return offsets_[l] + static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]);
}

Mlp Mlp::zeros(std::vector<int> sizes) {
  Mlp m;
  m.sizes_ = std::move(sizes);
  m.layout();
  m.params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.offsets_.back()));
  return m;
}

Mlp::Mlp(std::vector<int> sizes, Rng& rng) {
  *this = zeros(std::move(sizes));
  for (int l = 0; l < layer_count(); ++l) {
    const int fan_in = sizes_[static_cast<std::size_t>(l)];
    const double gain = l + 1 < layer_count() ? std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope)) : 1.0;
    const double sd = fan_in > 0 ? gain / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    auto w = weight(l);
    fill_standard_normal(rng, w);
    w *= sd;
  }
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int layer) {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(int layer) {
  return {params_.data() + bias_offset(layer), sizes_[static_cast<std::size_t>(layer) + 1]};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  return {params_.data() + bias_offset(layer), sizes_[static_cast<std::size_t>(layer) + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != input_dim())
    throw DimensionError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
  Eigen::MatrixXd h = x;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    h = l + 1 < layer_count() ? leaky(z) : std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Tape& tape) const {
  if (x.rows() != input_dim())
    throw DimensionError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
  tape.inputs.assign(static_cast<std::size_t>(layer_count()), {});
  tape.pre.assign(static_cast<std::size_t>(layer_count()), {});
  Eigen::MatrixXd h = x;
  for (int l = 0; l < layer_count(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    tape.inputs[li] = h;
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    tape.pre[li] = z;
    h = l + 1 < layer_count() ? leaky(z) : std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::Ref<const Eigen::MatrixXd>& d_out,
                              Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = d_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    if (l + 1 < layer_count())
      delta = delta.cwiseProduct(tape.pre[li].unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + weight_offset(l), sizes_[li + 1], sizes_[li]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset(l), sizes_[li + 1]);
    gw.noalias() += delta * tape.inputs[li].transpose();
    gb += delta.rowwise().sum();
    delta = weight(l).transpose() * delta;
  }
  return delta;
}

Json Mlp::to_json() const {
  Json j = Json::object();
  j["sizes"] = sizes_;
  j["params"] = vector_to_json(params_);
  return j;
}

Mlp Mlp::from_json(const Json& j) {
  Mlp m = zeros(j.at("sizes").get<std::vector<int>>());
  Eigen::VectorXd p = vector_from_json(j.at("params"));
  if (p.size() != m.params_.size()) throw DimensionError("network parameter count does not match its sizes");
  m.params_ = std::move(p);
  return m;
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (m_.size() != params.size()) {
    m_ = Eigen::VectorXd::Zero(params.size());
    v_ = Eigen::VectorXd::Zero(params.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Standardizer Standardizer::fit(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.cols());
  s.mean = x.rowwise().mean();
  s.scale = Eigen::VectorXd::Ones(x.rows());
  if (x.cols() > 1) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double var = (x.row(r).array() - s.mean[r]).square().sum() / n;
      if (var > 1e-24) s.scale[r] = std::sqrt(var);
    }
  }
  return s;
}

Standardizer Standardizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Eigen::MatrixXd Standardizer::apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != mean.size()) throw DimensionError("standardizer dimension mismatch");
  return (x.colwise() - mean).array().colwise() / scale.array();
}

Json Standardizer::to_json() const {
  Json j = Json::object();
  j["mean"] = vector_to_json(mean);
  j["scale"] = vector_to_json(scale);
  return j;
}

Standardizer Standardizer::from_json(const Json& j) {
  Standardizer s{vector_from_json(j.at("mean")), vector_from_json(j.at("scale"))};
  if (s.mean.size() != s.scale.size()) throw DimensionError("standardizer mean/scale length mismatch");
  return s;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

Eigen::MatrixXd gather_columns(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<std::size_t>& idx,
                               std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) out.col(static_cast<Eigen::Index>(k - begin)) = x.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

}  // namespace causalcollab
