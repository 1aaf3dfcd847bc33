#include "causalcollab/scm_sim.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "causalcollab/errors.hpp"
#include "causalcollab/random.hpp"

namespace causalcollab {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double expected_sigmoid(double c, double tau) {
  if (std::isinf(c)) return c > 0 ? 1.0 : 0.0;
  if (tau == 0.0) return sigmoid(c);
  // Trapezoid rule on a smooth, rapidly decaying integrand converges geometrically.
  constexpr int half = 4000;
  constexpr double h = 12.0 / half;
  double acc = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double g = k * h;
    const double w = (k == -half || k == half) ? 0.5 : 1.0;
    acc += w * sigmoid(c + tau * g) * std::exp(-0.5 * g * g);
  }
  return acc * h / std::sqrt(2.0 * std::numbers::pi);
}

double calibrate_intercept(double p, double tau) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("target probability outside [0, 1]");
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (tau == 0.0) return std::log(p / (1.0 - p));
  double lo = -1.0, hi = 1.0;
  while (expected_sigmoid(lo, tau) > p) lo *= 2.0;
  while (expected_sigmoid(hi, tau) < p) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_sigmoid(mid, tau) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

const std::vector<double> kDefaultTheta{1.0, -0.8, 0.6, 0.0};

void fail(const std::string& field, const std::string& msg) { throw ConfigError("scm." + field + ": " + msg); }

}  // namespace

void ScmConfig::validate() const {
  if (T < 1) fail("T", "must be >= 1");
  if (d < 1) fail("d", "must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha", "must lie in [0, 1]");
  if (!(sigma_noise >= 0.0) || !std::isfinite(sigma_noise)) fail("sigma", "must be a finite value >= 0");
  if (n < 1) fail("n", "must be >= 1");
  if (style_dim < 1) fail("style_dim", "must be >= 1");
  if (style_dim > d) fail("style_dim", "must be <= d");
  if (!theta.empty() && static_cast<int>(theta.size()) != style_dim)
    fail("theta", "length must equal style_dim");
  for (double v : theta)
    if (!std::isfinite(v)) fail("theta", "entries must be finite");
  if (!(style_sd >= 0.0) || !std::isfinite(style_sd)) fail("style_sd", "must be a finite value >= 0");
  if (!std::isfinite(confounder_shift)) fail("confounder_shift", "must be finite");
  if (!std::isfinite(context_carry)) fail("context_carry", "must be finite");
  if (!std::isfinite(action_carry)) fail("action_carry", "must be finite");
}

Eigen::VectorXd ScmConfig::resolved_theta() const {
  Eigen::VectorXd th = Eigen::VectorXd::Zero(style_dim);
  if (!theta.empty()) {
    for (int k = 0; k < style_dim; ++k) th[k] = theta[static_cast<std::size_t>(k)];
  } else {
    for (int k = 0; k < style_dim && k < static_cast<int>(kDefaultTheta.size()); ++k)
      th[k] = kDefaultTheta[static_cast<std::size_t>(k)];
  }
  return th;
}

Json ScmConfig::to_json() const {
  Json j;
  j["T"] = T;
  j["d"] = d;
  j["alpha"] = alpha;
  j["sigma"] = sigma_noise;
  j["n"] = n;
  j["seed"] = seed;
  j["style_dim"] = style_dim;
  j["theta"] = vector_to_json(resolved_theta());
  j["style_sd"] = style_sd;
  j["confounder_shift"] = confounder_shift;
  j["context_carry"] = context_carry;
  j["action_carry"] = action_carry;
  return j;
}

ScmConfig ScmConfig::from_json(const Json& j) {
  static const std::unordered_set<std::string> known{"T", "d", "alpha", "sigma", "n", "seed", "style_dim", "theta",
                                                     "style_sd", "confounder_shift", "context_carry",
                                                     "action_carry"};
  if (!j.is_object()) throw ConfigError("scm: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("scm." + it.key() + ": unknown key");
  ScmConfig c;
  auto get_num = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) fail(key, "expected a number");
    using T = std::remove_reference_t<decltype(dst)>;
    if constexpr (std::is_integral_v<T>) {
      if (!j[key].is_number_integer()) fail(key, "expected an integer");
      dst = j[key].get<T>();
    } else {
      dst = j[key].get<double>();
    }
  };
  get_num("T", c.T);
  get_num("d", c.d);
  get_num("alpha", c.alpha);
  get_num("sigma", c.sigma_noise);
  get_num("n", c.n);
  get_num("seed", c.seed);
  get_num("style_dim", c.style_dim);
  get_num("style_sd", c.style_sd);
  get_num("confounder_shift", c.confounder_shift);
  get_num("context_carry", c.context_carry);
  get_num("action_carry", c.action_carry);
  if (j.contains("theta") && !j["theta"].is_null()) {
    if (!j["theta"].is_array()) fail("theta", "expected an array of numbers");
    c.theta.clear();
    for (const auto& v : j["theta"]) {
      if (!v.is_number()) fail("theta", "expected an array of numbers");
      c.theta.push_back(v.get<double>());
    }
  }
  return c;
}

double SimulatorTruth::outcome_probability(int x_value, const Eigen::VectorXd& s, Split split) const {
  const double sign = (x_value == 1 ? 1.0 : -1.0) * (split == Split::observational ? 1.0 : -1.0);
  if (std::isinf(intercept)) return sign * intercept > 0 ? 1.0 : 0.0;
  return sigmoid(sign * intercept + theta.dot(s));
}

SyntheticData generate_synthetic(const ScmConfig& cfg) {
  cfg.validate();
  const int d = cfg.d, K = cfg.style_dim, T = cfg.T, n = cfg.n;

  SimulatorTruth truth;
  truth.theta = cfg.resolved_theta();
  {
    Rng rng = make_rng(cfg.seed, {0x6261736973ULL});  // "basis"
    const int cols = std::min(K + 1, d);
    Eigen::MatrixXd g(d, cols);
    fill_standard_normal(rng, g);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, cols);
    truth.style_basis = q.leftCols(K);
    if (K + 1 <= d) {
      truth.confounder_direction = q.col(K);
    } else {
      Eigen::VectorXd u(d);
      fill_standard_normal(rng, u);
      truth.confounder_direction = u.normalized();
    }
  }
  const double tau = cfg.style_sd * truth.theta.norm();
  truth.intercept = calibrate_intercept(1.0 - cfg.alpha, tau);
  truth.styles_observational.resize(n, K);
  truth.styles_counterfactual.resize(n, K);
  truth.x.resize(static_cast<std::size_t>(n));

  DatasetMeta meta;
  meta.T = T;
  meta.d = d;
  meta.alpha = cfg.alpha;
  meta.sigma = cfg.sigma_noise;
  meta.seed = static_cast<std::int64_t>(cfg.seed);
  meta.source = "scm-sim";

  std::vector<Trajectory> obs, cf;
  obs.reserve(static_cast<std::size_t>(n));
  cf.reserve(static_cast<std::size_t>(n));
  char idbuf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(idbuf, sizeof idbuf, "t%05d", i + 1);
    Rng shared = make_rng(cfg.seed, {1, static_cast<std::uint64_t>(i)});
    const int x = uniform01(shared) < 0.5 ? 1 : 0;
    Eigen::VectorXd l1(d);
    fill_standard_normal(shared, l1);
    l1 += cfg.confounder_shift * (2.0 * x - 1.0) * truth.confounder_direction;
    truth.x[static_cast<std::size_t>(i)] = x;

    for (Split split : {Split::observational, Split::counterfactual}) {
      const std::uint64_t tag = split == Split::observational ? 0 : 1;
      Rng rng = make_rng(cfg.seed, {2, static_cast<std::uint64_t>(i), tag});
      Eigen::VectorXd s(K);
      fill_standard_normal(rng, s);
      s *= cfg.style_sd;
      const Eigen::VectorXd shift = truth.style_basis * s;

      Trajectory tr;
      tr.id = idbuf;
      tr.split = split;
      tr.x = x;
      Eigen::VectorXd l = l1;
      Eigen::VectorXd noise(d);
      for (int t = 0; t < T; ++t) {
        if (t > 0) {
          const Step& prev = tr.steps.back();
          fill_standard_normal(rng, noise);
          l = cfg.context_carry * prev.l + cfg.action_carry * (prev.a - prev.l) + noise;
        }
        fill_standard_normal(rng, noise);
        Step st;
        st.l = l;
        st.a = l + shift + cfg.sigma_noise * noise;
        tr.steps.push_back(std::move(st));
      }
      Rng outcome_rng = make_rng(cfg.seed, {3, static_cast<std::uint64_t>(i), tag});
      const double p = truth.outcome_probability(x, s, split);
      tr.y = uniform01(outcome_rng) < p ? 1 : 0;
      (split == Split::observational ? truth.styles_observational : truth.styles_counterfactual).row(i) =
          s.transpose();
      (split == Split::observational ? obs : cf).push_back(std::move(tr));
    }
  }
  return SyntheticData{Dataset(meta, std::move(obs)), Dataset(meta, std::move(cf)), std::move(truth)};
}

}  // namespace causalcollab
