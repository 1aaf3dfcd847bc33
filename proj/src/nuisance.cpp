#include "causalcollab/nuisance.hpp"

#include <algorithm>
#include <cmath>

#include "causalcollab/errors.hpp"
#include "causalcollab/log.hpp"
#include "causalcollab/scm_sim.hpp"

namespace causalcollab {

namespace {

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

template <class F>
void read_keys(const Json& j, const std::string& section, F&& assign) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (auto& [k, v] : j.items()) {
    try {
      if (!assign(k, v)) throw ConfigError(section + "." + k + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section + "." + k + ": wrong type: " + e.what());
    }
  }
}

Eigen::MatrixXd block_rows(const Eigen::Ref<const Eigen::MatrixXd>& X, int offset, int rows) {
  return X.middleRows(offset, rows);
}

}  // namespace

Json FeatureLayout::to_json() const {
  Json j = Json::object();
  j["T"] = T;
  j["act_dim"] = act_dim;
  j["d"] = d;
  j["prev_raw"] = prev_raw;
  return j;
}

FeatureLayout FeatureLayout::from_json(const Json& j) {
  FeatureLayout l;
  l.T = j.at("T").get<int>();
  l.act_dim = j.at("act_dim").get<int>();
  l.d = j.at("d").get<int>();
  l.prev_raw = j.at("prev_raw").get<bool>();
  return l;
}

std::vector<Eigen::MatrixXd> action_features(const Dataset& ds, const StyleEncoder* encoder) {
  if (encoder) return encode_dataset(*encoder, ds);
  std::vector<Eigen::MatrixXd> out;
  const auto n = static_cast<Eigen::Index>(ds.size());
  for (int t = 0; t < ds.T(); ++t) {
    Eigen::MatrixXd a(ds.d(), n);
    for (Eigen::Index i = 0; i < n; ++i) a.col(i) = ds[static_cast<std::size_t>(i)].steps[static_cast<std::size_t>(t)].a;
    out.push_back(std::move(a));
  }
  return out;
}

Eigen::MatrixXd outcome_design(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act, const FeatureLayout& layout) {
  if (static_cast<int>(act.size()) != layout.T || ds.T() != layout.T || ds.d() != layout.d)
    throw DimensionError("outcome features do not match the dataset");
  const auto n = static_cast<Eigen::Index>(ds.size());
  Eigen::MatrixXd X(layout.dim(), n);
  for (int t = 1; t <= layout.T; ++t) {
    const auto& A = act[static_cast<std::size_t>(t - 1)];
    if (A.rows() != layout.act_dim || A.cols() != n) throw DimensionError("act feature block has the wrong shape");
    X.middleRows(layout.act_offset(t), layout.act_dim) = A;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& tr = ds[static_cast<std::size_t>(i)];
      X.col(i).segment(layout.l_offset(t), layout.d) = tr.steps[static_cast<std::size_t>(t - 1)].l;
      if (layout.prev_raw && t < layout.T)
        X.col(i).segment(layout.prev_offset() + (t - 1) * layout.d, layout.d) = tr.steps[static_cast<std::size_t>(t - 1)].a;
    }
  }
  return X;
}

Eigen::VectorXd assemble_features(const FeatureLayout& layout, std::span<const Eigen::VectorXd> act,
                                  std::span<const Eigen::VectorXd> l, std::span<const Eigen::VectorXd> prev) {
  if (static_cast<int>(act.size()) != layout.T || static_cast<int>(l.size()) != layout.T)
    throw DimensionError("feature assembly needs T act and context blocks");
  Eigen::VectorXd phi(layout.dim());
  for (int t = 1; t <= layout.T; ++t) {
    const auto& a = act[static_cast<std::size_t>(t - 1)];
    const auto& c = l[static_cast<std::size_t>(t - 1)];
    if (a.size() != layout.act_dim || c.size() != layout.d) throw DimensionError("feature block has the wrong length");
    phi.segment(layout.act_offset(t), layout.act_dim) = a;
    phi.segment(layout.l_offset(t), layout.d) = c;
  }
  if (layout.prev_raw) {
    if (static_cast<int>(prev.size()) != layout.T - 1) throw DimensionError("feature assembly needs T-1 raw previous actions");
    for (int t = 1; t < layout.T; ++t) {
      if (prev[static_cast<std::size_t>(t - 1)].size() != layout.d) throw DimensionError("raw action has the wrong length");
      phi.segment(layout.prev_offset() + (t - 1) * layout.d, layout.d) = prev[static_cast<std::size_t>(t - 1)];
    }
  }
  return phi;
}

std::string to_string(OutcomeKind k) { return k == OutcomeKind::logistic ? "logistic" : "additive"; }

OutcomeKind outcome_kind_from_string(const std::string& s) {
  if (s == "logistic") return OutcomeKind::logistic;
  if (s == "additive") return OutcomeKind::additive;
  throw ConfigError("outcome.kind: expected 'logistic' or 'additive', got '" + s + "'");
}

void OutcomeConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("outcome.lambda: must be a finite value > 0");
  if (max_iter < 1) throw ConfigError("outcome.max_iter: must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("outcome.tol: must be > 0");
  if (hidden < 1) throw ConfigError("outcome.hidden: must be >= 1");
  if (epochs < 1) throw ConfigError("outcome.epochs: must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("outcome.lr: must be a finite value > 0");
  if (batch < 1) throw ConfigError("outcome.batch: must be >= 1");
}

Json OutcomeConfig::to_json() const {
  Json j = Json::object();
  j["kind"] = to_string(kind);
  j["lambda"] = lambda;
  j["max_iter"] = max_iter;
  j["tol"] = tol;
  j["hidden"] = hidden;
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["batch"] = batch;
  j["seed"] = seed;
  return j;
}

OutcomeConfig OutcomeConfig::from_json(const Json& j) {
  OutcomeConfig c;
  read_keys(j, "outcome", [&](const std::string& k, const Json& v) {
    if (k == "kind") c.kind = outcome_kind_from_string(v.get<std::string>());
    else if (k == "lambda") c.lambda = v.get<double>();
    else if (k == "max_iter") c.max_iter = v.get<int>();
    else if (k == "tol") c.tol = v.get<double>();
    else if (k == "hidden") c.hidden = v.get<int>();
    else if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "lr") c.lr = v.get<double>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });
  return c;
}

Eigen::VectorXd OutcomeModel::score_batch(const Eigen::Ref<const Eigen::MatrixXd>& phi) const {
  if (phi.rows() != layout.dim())
    throw DimensionError("outcome features have " + std::to_string(phi.rows()) + " entries, model expects " +
                         std::to_string(layout.dim()));
  if (kind == OutcomeKind::logistic) return (w.transpose() * phi).transpose().array() + b;
  const int na = layout.T * layout.act_dim, nl = layout.T * layout.d;
  Eigen::VectorXd s = b1.forward(s1.apply(block_rows(phi, 0, na))).row(0).transpose();
  s += b2.forward(s2.apply(block_rows(phi, na, nl))).row(0).transpose();
  if (!b3.empty()) s += b3.forward(s3.apply(block_rows(phi, layout.prev_offset(), (layout.T - 1) * layout.d))).row(0).transpose();
  return s;
}

Eigen::VectorXd OutcomeModel::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& phi) const {
  return score_batch(phi).unaryExpr([](double t) { return sigmoid(t); });
}

double OutcomeModel::predict(const Eigen::Ref<const Eigen::VectorXd>& phi) const { return predict_batch(phi)[0]; }

Json OutcomeModel::to_json() const {
  Json j = Json::object();
  j["kind"] = to_string(kind);
  j["layout"] = layout.to_json();
  j["config"] = config.to_json();
  if (kind == OutcomeKind::logistic) {
    j["w"] = vector_to_json(w);
    j["b"] = b;
  } else {
    j["b1"] = {{"input", s1.to_json()}, {"net", b1.to_json()}};
    j["b2"] = {{"input", s2.to_json()}, {"net", b2.to_json()}};
    if (!b3.empty()) j["b3"] = {{"input", s3.to_json()}, {"net", b3.to_json()}};
  }
  j["provenance"] = provenance;
  return j;
}

OutcomeModel OutcomeModel::from_json(const Json& j) {
  OutcomeModel m;
  m.kind = outcome_kind_from_string(j.at("kind").get<std::string>());
  m.layout = FeatureLayout::from_json(j.at("layout"));
  m.config = OutcomeConfig::from_json(j.at("config"));
  if (m.kind == OutcomeKind::logistic) {
    m.w = vector_from_json(j.at("w"));
    m.b = j.at("b").get<double>();
    if (m.w.size() != m.layout.dim()) throw DimensionError("logistic weights do not match the feature layout");
  } else {
    m.s1 = Standardizer::from_json(j.at("b1").at("input"));
    m.b1 = Mlp::from_json(j.at("b1").at("net"));
    m.s2 = Standardizer::from_json(j.at("b2").at("input"));
    m.b2 = Mlp::from_json(j.at("b2").at("net"));
    if (j.contains("b3")) {
      m.s3 = Standardizer::from_json(j.at("b3").at("input"));
      m.b3 = Mlp::from_json(j.at("b3").at("net"));
    }
  }
  if (j.contains("provenance")) m.provenance = j.at("provenance");
  return m;
}

double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                          double lambda, Eigen::VectorXd* grad) {
  const Eigen::VectorXd t = (X.transpose() * w).array() + b;
  double f = 0.5 * lambda * (w.squaredNorm() + b * b);
  for (Eigen::Index i = 0; i < t.size(); ++i) f += softplus(t[i]) - y[i] * t[i];
  if (grad) {
    const Eigen::VectorXd r = t.unaryExpr([](double v) { return sigmoid(v); }) - y;
    grad->resize(w.size() + 1);
    grad->head(w.size()) = X * r + lambda * w;
    (*grad)[w.size()] = r.sum() + lambda * b;
  }
  return f;
}

namespace {

constexpr Eigen::Index kNewtonMaxDim = 2048;

void fit_logistic(OutcomeModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const OutcomeConfig& cfg) {
  const Eigen::Index p = X.rows();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1), g, g_new;
  auto obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd* gr) {
    return logistic_objective(X, y, th.head(p), th[p], cfg.lambda, gr);
  };
  double f = obj(theta, &g);
  bool converged = false;
  int it = 0;
  if (p + 1 <= kNewtonMaxDim) {
    Eigen::MatrixXd Xa(p + 1, X.cols());
    Xa.topRows(p) = X;
    Xa.row(p).setOnes();
    for (; it < cfg.max_iter; ++it) {
      if (g.lpNorm<Eigen::Infinity>() <= cfg.tol * (1.0 + std::abs(f))) {
        converged = true;
        break;
      }
      const Eigen::VectorXd t = Xa.transpose() * theta;
      Eigen::VectorXd wts(t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double q = sigmoid(t[i]);
        wts[i] = q * (1.0 - q);
      }
      Eigen::MatrixXd H = Eigen::MatrixXd::Identity(p + 1, p + 1) * cfg.lambda;
      H.selfadjointView<Eigen::Lower>().rankUpdate(Xa * wts.cwiseSqrt().asDiagonal());
      const Eigen::VectorXd dir = H.selfadjointView<Eigen::Lower>().llt().solve(-g);
      const double slope = g.dot(dir);
      if (!(slope < 0.0)) {
        converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * cfg.tol * (1.0 + std::abs(f));
        break;
      }
      double step = 1.0, f_new = 0.0;
      Eigen::VectorXd cand;
      int halvings = 0;
      while (true) {
        cand = theta + step * dir;
        f_new = obj(cand, &g_new);
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) break;
        step *= 0.5;
        if (++halvings > 60) break;
      }
      if (halvings > 60) {
        converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * cfg.tol * (1.0 + std::abs(f));
        break;
      }
      theta = std::move(cand);
      f = f_new;
      g = g_new;
    }
  }
  double step = 1.0 / std::max(1.0, g.norm());
  for (; !converged && it < cfg.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= cfg.tol * (1.0 + std::abs(f))) {
      converged = true;
      break;
    }
    const double gg = g.squaredNorm();
    Eigen::VectorXd cand;
    double f_new = 0.0;
    int halvings = 0;
    while (true) {
      cand = theta - step * g;
      f_new = obj(cand, &g_new);
      if (std::isfinite(f_new) && f_new <= f - 1e-4 * step * gg) break;
      step *= 0.5;
      if (++halvings > 60) break;
    }
    if (halvings > 60) {
      converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * cfg.tol * (1.0 + std::abs(f));
      break;
    }
    const Eigen::VectorXd s = cand - theta;
    const Eigen::VectorXd yk = g_new - g;
    const double sy = s.dot(yk);
    theta = std::move(cand);
    f = f_new;
    g = g_new;
    step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;
  }
  if (!std::isfinite(f)) throw NumericalError("logistic regression objective is not finite");
  if (!converged) log_warn("logistic_not_converged", {{"iterations", it}, {"grad_inf", g.lpNorm<Eigen::Infinity>()}});
  m.w = theta.head(p);
  m.b = theta[p];
  const Eigen::VectorXd t = (X.transpose() * m.w).array() + m.b;
  bool separated = true;
  for (Eigen::Index i = 0; i < t.size() && separated; ++i) separated = (2.0 * y[i] - 1.0) * t[i] > 0.0;
  if (separated && t.size() > 0)
    log_warn("logistic_separable", {{"message", "training data are linearly separated; weights are bounded only by the L2 penalty"},
                                    {"weight_norm", m.w.norm()}});
}

}  // namespace

double additive_loss(const OutcomeModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::VectorXd* grad) {
  const auto& L = m.layout;
  const int na = L.T * L.act_dim, nl = L.T * L.d, np = (L.T - 1) * L.d;
  const auto n = static_cast<double>(X.cols());
  Mlp::Tape t1, t2, t3;
  const Eigen::MatrixXd x1 = m.s1.apply(X.middleRows(0, na));
  const Eigen::MatrixXd x2 = m.s2.apply(X.middleRows(na, nl));
  Eigen::RowVectorXd s = m.b1.forward(x1, t1).row(0) + m.b2.forward(x2, t2).row(0);
  Eigen::MatrixXd x3;
  if (!m.b3.empty()) {
    x3 = m.s3.apply(X.middleRows(L.prev_offset(), np));
    s += m.b3.forward(x3, t3).row(0);
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) loss += softplus(s[i]) - y[i] * s[i];
  loss /= n;
  if (grad) {
    Eigen::MatrixXd ds(1, s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) ds(0, i) = (sigmoid(s[i]) - y[i]) / n;
    Eigen::VectorXd g1 = Eigen::VectorXd::Zero(m.b1.params().size());
    Eigen::VectorXd g2 = Eigen::VectorXd::Zero(m.b2.params().size());
    Eigen::VectorXd g3 = Eigen::VectorXd::Zero(m.b3.empty() ? 0 : m.b3.params().size());
    m.b1.backward(t1, ds, g1);
    m.b2.backward(t2, ds, g2);
    if (!m.b3.empty()) m.b3.backward(t3, ds, g3);
    grad->resize(g1.size() + g2.size() + g3.size());
    *grad << g1, g2, g3;
  }
  return loss;
}

namespace {

void fit_additive(OutcomeModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const OutcomeConfig& cfg) {
  const auto& L = m.layout;
  if (L.T > 1 && !L.prev_raw) throw ConfigError("outcome.kind: the additive model needs the raw previous-action block");
  const int na = L.T * L.act_dim, nl = L.T * L.d, np = (L.T - 1) * L.d;
  Rng init = make_rng(cfg.seed, {hash_key("additive-init")});
  m.s1 = Standardizer::fit(X.middleRows(0, na));
  m.s2 = Standardizer::fit(X.middleRows(na, nl));
  m.b1 = Mlp({na, cfg.hidden, 1}, init);
  m.b2 = Mlp({nl, cfg.hidden, 1}, init);
  if (np > 0) {
    m.s3 = Standardizer::fit(X.middleRows(L.prev_offset(), np));
    m.b3 = Mlp({np, cfg.hidden, 1}, init);
  }
  const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
  m.b1.bias(m.b1.layer_count() - 1)[0] = std::log(ybar / (1.0 - ybar));

  Adam a1(cfg.lr), a2(cfg.lr), a3(cfg.lr);
  Rng shuffle = make_rng(cfg.seed, {hash_key("additive-shuffle")});
  const auto N = static_cast<std::size_t>(X.cols());
  const std::size_t bs = N < 256 ? N : static_cast<std::size_t>(cfg.batch);
  const auto n1 = m.b1.params().size(), n2 = m.b2.params().size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(N, shuffle);
    for (std::size_t start = 0; start < N; start += bs) {
      const std::size_t end = std::min(N, start + bs);
      const Eigen::MatrixXd xb = gather_columns(X, order, start, end);
      Eigen::VectorXd yb(static_cast<Eigen::Index>(end - start));
      for (std::size_t k = start; k < end; ++k) yb[static_cast<Eigen::Index>(k - start)] = y[static_cast<Eigen::Index>(order[k])];
      Eigen::VectorXd g;
      const double loss = additive_loss(m, xb, yb, &g);
      if (!std::isfinite(loss) || !g.allFinite())
        throw NumericalError("additive outcome model diverged at epoch " + std::to_string(epoch));
      Eigen::VectorXd g1 = g.head(n1), g2 = g.segment(n1, n2);
      a1.step(m.b1.params(), g1);
      a2.step(m.b2.params(), g2);
      if (!m.b3.empty()) {
        Eigen::VectorXd g3 = g.tail(g.size() - n1 - n2);
        a3.step(m.b3.params(), g3);
      }
    }
  }
}

}  // namespace

OutcomeModel fit_outcome(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FeatureLayout& layout,
                         const OutcomeConfig& cfg) {
  cfg.validate();
  if (X.rows() != layout.dim()) throw DimensionError("design matrix rows do not match the feature layout");
  if (X.cols() != y.size() || X.cols() == 0) throw DimensionError("design matrix and labels disagree in length");
  if (!X.allFinite()) throw NumericalError("outcome features contain non-finite values");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0) throw std::invalid_argument("outcome labels must be 0 or 1");
  OutcomeModel m;
  m.kind = cfg.kind;
  m.layout = layout;
  m.config = cfg;
  if (cfg.kind == OutcomeKind::logistic)
    fit_logistic(m, X, y, cfg);
  else
    fit_additive(m, X, y, cfg);
  return m;
}

OutcomeModel fit_outcome(const Dataset& ds, const StyleEncoder* encoder, const OutcomeConfig& cfg) {
  require_observational(ds, "fit_outcome");
  const auto act = action_features(ds, encoder);
  FeatureLayout layout{ds.T(), static_cast<int>(act.front().rows()), ds.d(), cfg.kind == OutcomeKind::additive};
  Eigen::VectorXd y(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) y[static_cast<Eigen::Index>(i)] = ds[i].y;
  OutcomeModel m = fit_outcome(outcome_design(ds, act, layout), y, layout, cfg);
  m.provenance = {{"dataset_digest", ds.digest()}, {"seed", cfg.seed}};
  return m;
}

void TransitionConfig::validate() const {
  if (epochs < 1) throw ConfigError("transition.epochs: must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("transition.lr: must be a finite value > 0");
  if (hidden < 1) throw ConfigError("transition.hidden: must be >= 1");
  if (batch < 1) throw ConfigError("transition.batch: must be >= 1");
}

Json TransitionConfig::to_json() const {
  Json j = Json::object();
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["hidden"] = hidden;
  j["batch"] = batch;
  j["seed"] = seed;
  return j;
}

TransitionConfig TransitionConfig::from_json(const Json& j) {
  TransitionConfig c;
  read_keys(j, "transition", [&](const std::string& k, const Json& v) {
    if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "lr") c.lr = v.get<double>();
    else if (k == "hidden") c.hidden = v.get<int>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });
  return c;
}

Eigen::MatrixXd TransitionModel::mean_batch(int t, const Eigen::Ref<const Eigen::MatrixXd>& cond) const {
  if (t < 2 || t > layout.T) throw std::invalid_argument("transition step must lie in [2, T]");
  const auto k = static_cast<std::size_t>(t - 2);
  if (cond.rows() != layout.transition_input_dim(t)) throw DimensionError("transition input has the wrong length");
  return nets[k].forward(inputs[k].apply(cond));
}

Eigen::VectorXd TransitionModel::mean(int t, const Eigen::Ref<const Eigen::VectorXd>& cond) const {
  return mean_batch(t, cond).col(0);
}

Eigen::MatrixXd TransitionModel::sample(int t, const Eigen::Ref<const Eigen::VectorXd>& cond, int n2, Rng& rng) const {
  if (n2 < 1) throw std::invalid_argument("n2 must be >= 1");
  const Eigen::VectorXd mu = mean(t, cond);
  Eigen::MatrixXd out(mu.size(), n2);
  fill_standard_normal(rng, out);
  out.colwise() += mu;
  return out;
}

Json TransitionModel::to_json() const {
  Json j = Json::object();
  j["kind"] = "gaussian-mlp";
  j["layout"] = layout.to_json();
  j["config"] = config.to_json();
  Json steps = Json::array();
  for (std::size_t k = 0; k < nets.size(); ++k) steps.push_back({{"input", inputs[k].to_json()}, {"net", nets[k].to_json()}});
  j["steps"] = steps;
  j["provenance"] = provenance;
  return j;
}

TransitionModel TransitionModel::from_json(const Json& j) {
  TransitionModel m;
  m.layout = FeatureLayout::from_json(j.at("layout"));
  m.config = TransitionConfig::from_json(j.at("config"));
  for (const auto& s : j.at("steps")) {
    m.inputs.push_back(Standardizer::from_json(s.at("input")));
    m.nets.push_back(Mlp::from_json(s.at("net")));
  }
  if (static_cast<int>(m.nets.size()) != m.layout.T - 1) throw DimensionError("transition document needs T-1 networks");
  if (j.contains("provenance")) m.provenance = j.at("provenance");
  return m;
}

Eigen::MatrixXd transition_inputs(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act, int t) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  const auto ad = static_cast<Eigen::Index>(act.front().rows());
  const int d = ds.d();
  Eigen::MatrixXd X((t - 1) * (ad + d), n);
  for (int s = 1; s < t; ++s) {
    X.middleRows((s - 1) * ad, ad) = act[static_cast<std::size_t>(s - 1)];
    for (Eigen::Index i = 0; i < n; ++i)
      X.col(i).segment((t - 1) * ad + (s - 1) * d, d) = ds[static_cast<std::size_t>(i)].steps[static_cast<std::size_t>(s - 1)].l;
  }
  return X;
}

double transition_loss(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, Eigen::VectorXd* grad) {
  Mlp::Tape tape;
  const Eigen::MatrixXd r = net.forward(X, tape) - Y;
  const auto count = static_cast<double>(r.size());
  if (grad) net.backward(tape, (2.0 / count) * r, *grad);
  return r.squaredNorm() / count;
}

TransitionModel fit_transition(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act, const TransitionConfig& cfg) {
  cfg.validate();
  require_observational(ds, "fit_transition");
  if (ds.T() < 2) throw ConfigError("transition: needs T >= 2");
  TransitionModel m;
  m.config = cfg;
  m.layout = FeatureLayout{ds.T(), static_cast<int>(act.front().rows()), ds.d(), false};
  const auto n = static_cast<Eigen::Index>(ds.size());
  for (int t = 2; t <= ds.T(); ++t) {
    const Eigen::MatrixXd raw = transition_inputs(ds, act, t);
    Eigen::MatrixXd Y(ds.d(), n);
    for (Eigen::Index i = 0; i < n; ++i) Y.col(i) = ds[static_cast<std::size_t>(i)].steps[static_cast<std::size_t>(t - 1)].l;
    m.inputs.push_back(Standardizer::fit(raw));
    const Eigen::MatrixXd X = m.inputs.back().apply(raw);
    Rng init = make_rng(cfg.seed, {hash_key("transition-init"), static_cast<std::uint64_t>(t)});
    Mlp net({static_cast<int>(X.rows()), cfg.hidden, cfg.hidden, ds.d()}, init);
    net.bias(net.layer_count() - 1) = Y.rowwise().mean();
    Adam adam(cfg.lr);
    Rng shuffle = make_rng(cfg.seed, {hash_key("transition-shuffle"), static_cast<std::uint64_t>(t)});
    const auto N = static_cast<std::size_t>(n);
    const std::size_t bs = N < 256 ? N : static_cast<std::size_t>(cfg.batch);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const auto order = shuffled_indices(N, shuffle);
      for (std::size_t start = 0; start < N; start += bs) {
        const std::size_t end = std::min(N, start + bs);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(net.params().size());
        const double loss = transition_loss(net, gather_columns(X, order, start, end), gather_columns(Y, order, start, end), &g);
        if (!std::isfinite(loss) || !g.allFinite())
          throw NumericalError("transition model diverged at epoch " + std::to_string(epoch));
        adam.step(net.params(), g);
      }
    }
    log_info("transition_fit", {{"step", t}, {"train_mse", transition_loss(net, X, Y, nullptr)}});
    m.nets.push_back(std::move(net));
  }
  return m;
}

TransitionModel fit_transition(const Dataset& ds, const StyleEncoder* encoder, const TransitionConfig& cfg) {
  require_observational(ds, "fit_transition");
  TransitionModel m = fit_transition(ds, action_features(ds, encoder), cfg);
  m.provenance = {{"dataset_digest", ds.digest()}, {"seed", cfg.seed}};
  return m;
}

}  // namespace causalcollab
