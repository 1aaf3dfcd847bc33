#include <cmath>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "causalcollab/errors.hpp"
#include "causalcollab/eval_harness.hpp"
#include "doctest.h"

using namespace causalcollab;

namespace {

EvalConfig fast_config() {
  EvalConfig cfg;
  cfg.folds = 2;
  cfg.seeds = {1};
  cfg.cvae.K = 4;
  cfg.cvae.epochs = 5;
  cfg.cvae.lr = 1e-3;
  cfg.pca.K = 4;
  cfg.transition.epochs = 5;
  cfg.transition.lr = 1e-3;
  cfg.gestimate.n1 = cfg.gestimate.n2 = 8;
  return cfg;
}

SyntheticData small_data(double alpha, int n = 240) {
  ScmConfig s;
  s.n = n;
  s.d = 8;
  s.alpha = alpha;
  return generate_synthetic(s);
}

}  // namespace

TEST_CASE("six baselines in table order") {
  const auto b = all_baselines();
  REQUIRE(b.size() == 6);
  const char* names[] = {"No Adjustment", "+PCA", "+CVAE", "G-E", "G-E+PCA", "G-E+CVAE"};
  for (int i = 0; i < 6; ++i) CHECK(b[static_cast<std::size_t>(i)].name() == names[i]);
  CHECK(std::set<BaselineSpec>(b.begin(), b.end()).size() == 6);
}

TEST_CASE("Brier score of a perfect predictor is zero and of a constant is p(1-p) at the mean") {
  const Dataset ds = oracle::random_dataset(200, 1, 2, 5);
  Eigen::VectorXd y(200);
  for (std::size_t i = 0; i < 200; ++i) y[static_cast<Eigen::Index>(i)] = ds[i].y;
  CHECK(brier_score(y, ds) == 0.0);
  const double p = y.mean();
  CHECK(brier_score(Eigen::VectorXd::Constant(200, p), ds) == doctest::Approx(p * (1 - p)).epsilon(1e-12));
}

TEST_CASE("folds are a deterministic, balanced function of id and seed") {
  const Dataset ds = oracle::random_dataset(103, 1, 2, 3);
  const auto a = assign_folds(ds, 5, 1), b = assign_folds(ds, 5, 1), c = assign_folds(ds, 5, 2);
  CHECK(a == b);
  CHECK(a != c);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int f : a) ++counts[f];
  for (int k : counts) CHECK(std::abs(k - 103 / 5) <= 1);
  std::vector<std::size_t> rev(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) rev[i] = ds.size() - 1 - i;
  const auto r = assign_folds(ds.subset(rev), 5, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(r[i] == a[rev[i]]);
}

TEST_CASE("counterfactual trajectories never reach a fit") {
  const auto data = small_data(0.2, 40);
  const auto cfg = fast_config();
  CHECK_THROWS_AS(run_eval(data.counterfactual, data.counterfactual, {BaselineSpec{}}, cfg), ConfigError);
  CHECK_THROWS_AS(run_eval(data.observational, data.observational, {BaselineSpec{}}, cfg), ConfigError);
  CHECK_THROWS_AS(fit_pca(data.counterfactual, 2), LeakageError);
  ScmConfig other;
  other.n = 40;
  other.d = 8;
  other.alpha = 0.3;
  CHECK_THROWS_AS(run_eval(data.observational, generate_synthetic(other).counterfactual, {BaselineSpec{}}, cfg), ConfigError);
}

TEST_CASE("constant-baseline column matches an independent computation") {
  const auto data = small_data(0.2);
  const auto cfg = fast_config();
  const EvalReport rep = run_eval(data.observational, data.counterfactual, {BaselineSpec{}}, cfg);
  const auto fo = assign_folds(data.observational, 2, 1), fc = assign_folds(data.counterfactual, 2, 1);
  for (const auto& row : rep.rows) {
    double sy = 0, n = 0;
    for (std::size_t i = 0; i < fo.size(); ++i)
      if (fo[i] != row.fold) sy += data.observational[i].y, n += 1;
    const double p = sy / n;
    const auto& ds = row.split == Split::observational ? data.observational : data.counterfactual;
    const auto& folds = row.split == Split::observational ? fo : fc;
    double s = 0, m = 0;
    for (std::size_t i = 0; i < folds.size(); ++i)
      if (folds[i] == row.fold) s += (p - ds[i].y) * (p - ds[i].y), m += 1;
    CHECK(row.constant_mse == doctest::Approx(s / m).epsilon(1e-12));
  }
}

TEST_CASE("full baseline matrix: shape, reproducibility and the sanity floor") {
  const auto data = small_data(0.2);
  auto cfg = fast_config();
  cfg.seeds = {1, 2};
  const EvalReport a = run_eval(data.observational, data.counterfactual, all_baselines(), cfg);
  CHECK(a.rows.size() == 6 * 2 * 2 * 2);
  cfg.threads = 3;
  const EvalReport b = run_eval(data.observational, data.counterfactual, all_baselines(), cfg);
  CHECK(results_csv(a) == results_csv(b));
  CHECK(dump_json(summary_json(a)) == dump_json(summary_json(b)));
  const auto summary = a.summarize();
  CHECK(summary.size() == 6);
  for (const auto& m : summary) {
    CHECK(m.obs_mean >= 0.0);
    CHECK(m.cf_mean >= 0.0);
    CHECK(m.obs_sd >= 0.0);
    CHECK(m.obs_mean <= m.constant_obs_mean + 0.02);
  }
  std::istringstream csv(results_csv(a));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "axis_value,adjustment,embedding,split,fold,seed,mse");
  const Json j = summary_json(a);
  CHECK(j.at("points").at(0).at("methods").size() == 6);
  CHECK(j.at("provenance").at("observational_digest") == data.observational.digest());
}

TEST_CASE("unadjusted predictions degrade on the counterfactual split under strong confounding") {
  const auto data = small_data(0.0, 400);
  const auto cfg = fast_config();
  const EvalReport rep = run_eval(data.observational, data.counterfactual, {BaselineSpec{}}, cfg);
  const auto s = rep.summarize();
  CHECK(s[0].cf_mean > s[0].obs_mean + 0.3);
}

TEST_CASE("sweeps regenerate data per value and validate their values") {
  ScmConfig base;
  base.n = 120;
  base.d = 8;
  auto cfg = fast_config();
  const EvalReport rep = run_sweep(SweepAxis::alpha, {0.1, 0.5}, base, cfg, {BaselineSpec{}});
  CHECK(rep.rows.size() == 2 * 2 * 2);
  const auto s = rep.summarize();
  CHECK(s.size() == 2);
  CHECK(*s[0].axis_value == 0.1);
  CHECK(rep.provenance.at("points").size() == 2);
  CHECK_THROWS_AS(run_sweep(SweepAxis::alpha, {1.5}, base, cfg, {BaselineSpec{}}), ConfigError);
  CHECK_THROWS_AS(run_sweep(SweepAxis::alpha, {}, base, cfg, {BaselineSpec{}}), ConfigError);
  CHECK_THROWS_AS(run_sweep(SweepAxis::latent_dim, {0}, base, cfg, {BaselineSpec{}}), ConfigError);
  const EvalReport lat = run_sweep(SweepAxis::latent_dim, {2, 4}, base, cfg, {BaselineSpec{Adjustment::none, Embedding::pca}});
  CHECK(lat.summarize().size() == 2);
  const std::string svg = sweep_svg(lat);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}
