#include "causalcollab/g_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "causalcollab/errors.hpp"
#include "causalcollab/log.hpp"

namespace causalcollab {

Eigen::VectorXd FunctionOutcome::predict_batch(const Eigen::MatrixXd& phi) const {
  Eigen::VectorXd out(phi.cols());
  for (Eigen::Index i = 0; i < phi.cols(); ++i) out[i] = f_(phi.col(i));
  return out;
}

void GaussianTransition::draw_noise(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = dist(rng);
}

void CategoricalTransition::draw_noise(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const { out[0] = uniform01(rng); }

Eigen::MatrixXd CategoricalTransition::location(int t, const Eigen::MatrixXd& cond) const {
  Eigen::MatrixXd out;
  for (Eigen::Index i = 0; i < cond.cols(); ++i) {
    const Eigen::VectorXd p = probs_(t, cond.col(i));
    if (i == 0) out.resize(p.size(), cond.cols());
    out.col(i) = p;
  }
  return out;
}

Eigen::VectorXd CategoricalTransition::realize(const Eigen::VectorXd& location, const Eigen::VectorXd& noise) const {
  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(location.size());
  double acc = 0.0;
  Eigen::Index pick = -1;
  for (Eigen::Index v = 0; v < location.size(); ++v) {
    if (location[v] <= 0.0) continue;
    acc += location[v];
    pick = v;
    if (noise[0] < acc) break;
  }
  if (pick < 0) throw NumericalError("categorical transition has no positive probability");
  onehot[pick] = 1.0;
  return onehot;
}

L1Pool::L1Pool(Eigen::MatrixXd vectors) : vectors_(std::move(vectors)) {
  if (vectors_.cols() == 0) throw std::invalid_argument("L1 pool is empty");
}

L1Pool::L1Pool(Eigen::MatrixXd vectors, const Eigen::VectorXd& weights) : L1Pool(std::move(vectors)) {
  if (weights.size() != vectors_.cols()) throw DimensionError("L1 pool weights do not match the vectors");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw std::invalid_argument("L1 pool weights must be non-negative");
    acc += weights[i];
    cumulative_.push_back(acc);
  }
  if (!(acc > 0.0)) throw std::invalid_argument("L1 pool weights sum to zero");
}

L1Pool L1Pool::from_dataset(const Dataset& ds) {
  require_observational(ds, "L1 pool");
  Eigen::MatrixXd v(ds.d(), static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) v.col(static_cast<Eigen::Index>(i)) = ds[i].steps.front().l;
  return L1Pool(std::move(v));
}

std::size_t L1Pool::draw(Rng& rng) const {
  const double u = uniform01(rng);
  if (cumulative_.empty()) return std::min(size() - 1, static_cast<std::size_t>(u * static_cast<double>(size())));
  const double target = u * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  const std::size_t idx = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative_.begin(), static_cast<std::ptrdiff_t>(size()) - 1));
  return idx;
}

std::vector<EvaluationUnit> make_units(const Dataset& ds, const std::vector<Eigen::MatrixXd>& act,
                                       const FeatureLayout& layout) {
  if (static_cast<int>(act.size()) != ds.T()) throw DimensionError("act features need one block per step");
  std::vector<EvaluationUnit> units(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& u = units[i];
    for (int t = 0; t < ds.T(); ++t) {
      u.act.push_back(act[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(i)));
      if (layout.prev_raw && t + 1 < ds.T()) u.prev_raw.push_back(ds[i].steps[static_cast<std::size_t>(t)].a);
    }
    u.key = hash_key(ds[i].id);
  }
  return units;
}

void GEstimateConfig::validate() const {
  if (n1 < 1) throw ConfigError("gestimate.n1: must be >= 1");
  if (n2 < 1) throw ConfigError("gestimate.n2: must be >= 1");
  if (delta && !(*delta > 0.0 && std::isfinite(*delta))) throw ConfigError("gestimate.delta: must be a finite value > 0");
  if (direction) {
    if (direction->size() == 0 || !direction->allFinite()) throw ConfigError("gestimate.direction: must be a finite vector");
    if (std::abs(direction->norm() - 1.0) > 1e-9) throw ConfigError("gestimate.direction: must have unit norm");
  }
}

Json GEstimateConfig::to_json() const {
  Json j = Json::object();
  j["n1"] = n1;
  j["n2"] = n2;
  j["delta"] = delta ? Json(*delta) : Json(nullptr);
  j["direction"] = direction ? vector_to_json(*direction) : Json("per-coordinate");
  j["seed"] = seed;
  j["common_random_numbers"] = common_random_numbers;
  return j;
}

GEstimateConfig GEstimateConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("gestimate: expected an object");
  GEstimateConfig c;
  for (auto& [k, v] : j.items()) {
    try {
      if (k == "n1") c.n1 = v.get<int>();
      else if (k == "n2") c.n2 = v.get<int>();
      else if (k == "delta") c.delta = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (k == "direction") {
        if (v.is_string()) {
          if (v.get<std::string>() != "per-coordinate")
            throw ConfigError("gestimate.direction: expected 'per-coordinate' or a vector");
          c.direction.reset();
        } else {
          c.direction = vector_from_json(v);
        }
      } else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "common_random_numbers") c.common_random_numbers = v.get<bool>();
      else throw ConfigError("gestimate." + k + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("gestimate." + k + ": wrong type: " + e.what());
    }
  }
  return c;
}

namespace {

void check_unit(const EvaluationUnit& unit, const FeatureLayout& layout) {
  if (static_cast<int>(unit.act.size()) != layout.T) throw DimensionError("treatment needs one act block per step");
  for (const auto& a : unit.act)
    if (a.size() != layout.act_dim) throw DimensionError("act block length does not match the feature layout");
  if (layout.prev_raw && static_cast<int>(unit.prev_raw.size()) != layout.T - 1)
    throw DimensionError("treatment needs T-1 raw previous actions");
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

McEstimate g_formula_mc(const OutcomePredictor& outcome, const TransitionSampler* transition, const L1Pool& pool,
                        const EvaluationUnit& unit, const FeatureLayout& layout, const GEstimateConfig& cfg) {
  if (cfg.n1 < 1 || cfg.n2 < 1) throw ConfigError("gestimate: n1 and n2 must be >= 1");
  check_unit(unit, layout);
  if (pool.d() != layout.d) throw DimensionError("L1 pool dimension does not match the feature layout");
  const int T = layout.T;
  if (T > 1 && !transition) throw std::invalid_argument("g-formula with T > 1 needs a transition model");
  const auto n1 = static_cast<Eigen::Index>(cfg.n1);
  const auto n2 = static_cast<Eigen::Index>(T > 1 ? cfg.n2 : 1);
  const int d = layout.d, ad = layout.act_dim;

  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(n1));
  // contexts[t] is d x (n1 * n2); column j * n2 + k.
  std::vector<Eigen::MatrixXd> contexts(static_cast<std::size_t>(T), Eigen::MatrixXd(d, n1 * n2));
  for (Eigen::Index j = 0; j < n1; ++j) {
    rngs.push_back(make_rng(cfg.seed, {unit.key, static_cast<std::uint64_t>(j)}));
    const std::size_t idx = pool.draw(rngs.back());
    contexts[0].middleCols(j * n2, n2).colwise() = pool.vectors().col(static_cast<Eigen::Index>(idx));
  }
  for (int t = 2; t <= T; ++t) {
    const int in_dim = layout.transition_input_dim(t);
    Eigen::MatrixXd loc;
    if (t == 2) {
      Eigen::MatrixXd cond(in_dim, n1);
      for (Eigen::Index j = 0; j < n1; ++j) {
        cond.col(j).head(ad) = unit.act[0];
        cond.col(j).segment(ad, d) = contexts[0].col(j * n2);
      }
      const Eigen::MatrixXd per_j = transition->location(t, cond);
      loc.resize(per_j.rows(), n1 * n2);
      for (Eigen::Index j = 0; j < n1; ++j) loc.middleCols(j * n2, n2).colwise() = per_j.col(j);
    } else {
      Eigen::MatrixXd cond(in_dim, n1 * n2);
      for (int s = 1; s < t; ++s) {
        cond.middleRows((s - 1) * ad, ad).colwise() = unit.act[static_cast<std::size_t>(s - 1)];
        cond.middleRows((t - 1) * ad + (s - 1) * d, d) = contexts[static_cast<std::size_t>(s - 1)];
      }
      loc = transition->location(t, cond);
    }
    Eigen::VectorXd noise(transition->noise_dim());
    auto& ctx = contexts[static_cast<std::size_t>(t - 1)];
    for (Eigen::Index j = 0; j < n1; ++j)
      for (Eigen::Index k = 0; k < n2; ++k) {
        transition->draw_noise(rngs[static_cast<std::size_t>(j)], noise);
        const Eigen::VectorXd l = transition->realize(loc.col(j * n2 + k), noise);
        if (l.size() != d) throw DimensionError("transition draw has the wrong dimension");
        ctx.col(j * n2 + k) = l;
      }
  }

  Eigen::MatrixXd phi(layout.dim(), n1 * n2);
  for (int t = 1; t <= T; ++t) {
    phi.middleRows(layout.act_offset(t), ad).colwise() = unit.act[static_cast<std::size_t>(t - 1)];
    phi.middleRows(layout.l_offset(t), d) = contexts[static_cast<std::size_t>(t - 1)];
    if (layout.prev_raw && t < T)
      phi.middleRows(layout.prev_offset() + (t - 1) * d, d).colwise() = unit.prev_raw[static_cast<std::size_t>(t - 1)];
  }
  const Eigen::VectorXd p = outcome.predict_batch(phi);
  std::vector<double> group(static_cast<std::size_t>(n1));
  double total = 0.0;
  for (Eigen::Index j = 0; j < n1; ++j) {
    group[static_cast<std::size_t>(j)] = p.segment(j * n2, n2).mean();
    total += group[static_cast<std::size_t>(j)];
  }
  McEstimate est;
  est.mean = total / static_cast<double>(n1);
  est.std_error = sample_sd(group) / std::sqrt(static_cast<double>(n1));
  return est;
}

McEstimate classical_gformula_mc(const OutcomePredictor& outcome, const TransitionSampler* transition,
                                 const L1Pool& pool, const std::vector<Eigen::VectorXd>& actions,
                                 const FeatureLayout& layout, const GEstimateConfig& cfg, std::uint64_t key) {
  if (layout.act_dim != layout.d) throw DimensionError("classical g-formula needs raw actions as act features");
  EvaluationUnit unit;
  unit.act = actions;
  if (layout.prev_raw) unit.prev_raw.assign(actions.begin(), actions.end() - (actions.empty() ? 0 : 1));
  unit.key = key;
  return g_formula_mc(outcome, transition, pool, unit, layout, cfg);
}

Json IseEstimate::to_json() const {
  Json j = Json::object();
  j["value"] = vector_to_json(value);
  j["stderr"] = vector_to_json(std_error);
  j["base"] = base;
  j["shifted"] = vector_to_json(shifted);
  j["n1"] = config.n1;
  j["n2"] = config.n2;
  j["delta"] = vector_to_json(delta);
  j["direction"] = config.direction ? vector_to_json(*config.direction) : Json("per-coordinate");
  j["seed"] = config.seed;
  j["common_random_numbers"] = config.common_random_numbers;
  j["noise_floor"] = noise_floor;
  return j;
}

IseEstimate ise_estimate(const OutcomePredictor& outcome, const TransitionSampler* transition, const L1Pool& pool,
                         const std::vector<EvaluationUnit>& units, const FeatureLayout& layout,
                         const GEstimateConfig& cfg) {
  cfg.validate();
  if (units.empty()) throw std::invalid_argument("ISE needs at least one evaluation unit");
  for (const auto& u : units) check_unit(u, layout);
  const int K = layout.act_dim, T = layout.T;
  IseEstimate est;
  est.config = cfg;
  if (cfg.direction) {
    if (cfg.direction->size() != K) throw DimensionError("direction length does not match the style dimension");
    est.directions = *cfg.direction;
  } else {
    est.directions = Eigen::MatrixXd::Identity(K, K);
  }
  const Eigen::Index m = est.directions.cols();
  const std::size_t N = units.size();

  est.delta.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    if (cfg.delta) {
      est.delta[c] = *cfg.delta;
      continue;
    }
    double s = 0.0, s2 = 0.0, cnt = 0.0;
    for (const auto& u : units)
      for (const auto& a : u.act) {
        const double v = est.directions.col(c).dot(a);
        s += v;
        s2 += v * v;
        cnt += 1.0;
      }
    const double var = std::max(0.0, s2 / cnt - (s / cnt) * (s / cnt));
    est.delta[c] = var > 0.0 ? 0.05 * std::sqrt(var) : 0.05;
    if (!(var > 0.0)) log_warn("ise_constant_styles", {{"direction", c}, {"delta", est.delta[c]}});
  }

  auto shifted_unit = [&](const EvaluationUnit& u, const Eigen::VectorXd& offset, std::uint64_t variant) {
    EvaluationUnit s = u;
    for (int t = 0; t < T; ++t) s.act[static_cast<std::size_t>(t)] += offset;
    if (!cfg.common_random_numbers && variant) s.key = mix64(u.key ^ mix64(variant));
    return s;
  };

  std::vector<double> base(N);
  Eigen::MatrixXd diff(static_cast<Eigen::Index>(N), m), shifted(static_cast<Eigen::Index>(N), m);
  Eigen::MatrixXd f_plus(static_cast<Eigen::Index>(N), m);
  parallel_for(N, cfg.threads, [&](std::size_t i) {
    const auto& u = units[i];
    base[i] = g_formula_mc(outcome, transition, pool, u, layout, cfg).mean;
    for (Eigen::Index c = 0; c < m; ++c) {
      const Eigen::VectorXd dir = est.directions.col(c);
      const double h = est.delta[c];
      const double plus = g_formula_mc(outcome, transition, pool, shifted_unit(u, 0.5 * h * dir, 1 + 3 * c), layout, cfg).mean;
      const double minus = g_formula_mc(outcome, transition, pool, shifted_unit(u, -0.5 * h * dir, 2 + 3 * c), layout, cfg).mean;
      const auto ii = static_cast<Eigen::Index>(i);
      diff(ii, c) = (plus - minus) / h;
      f_plus(ii, c) = plus;
      shifted(ii, c) = g_formula_mc(outcome, transition, pool, shifted_unit(u, h * dir, 3 + 3 * c), layout, cfg).mean;
    }
  });

  double bsum = 0.0;
  for (double b : base) bsum += b;
  est.base = bsum / static_cast<double>(N);
  est.value = diff.colwise().mean().transpose();
  est.shifted = shifted.colwise().mean().transpose();
  est.std_error.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    if (N < 2) {
      est.std_error[c] = 0.0;
      continue;
    }
    const double total = diff.col(c).sum();
    const auto n = static_cast<double>(N);
    Eigen::VectorXd loo = (total - diff.col(c).array()) / (n - 1.0);
    const double mean_loo = loo.mean();
    est.std_error[c] = std::sqrt((n - 1.0) / n * (loo.array() - mean_loo).square().sum());
  }
  const double scale = std::max(std::abs(est.base), f_plus.cwiseAbs().maxCoeff());
  est.noise_floor = 4.0 * std::numeric_limits<double>::epsilon() * scale / est.delta.minCoeff();
  const bool any_difference = (diff.array() != 0.0).any();
  for (Eigen::Index c = 0; c < m; ++c)
    if (any_difference && est.noise_floor > 1e-3 * (std::abs(est.value[c]) + est.std_error[c])) {
      log_warn("ise_below_noise_floor",
               {{"direction", c}, {"delta", est.delta[c]}, {"noise_floor", est.noise_floor}, {"value", est.value[c]}});
      break;
    }
  return est;
}

}  // namespace causalcollab
