#include <algorithm>
#include <cmath>

#include "../support/oracles.hpp"
#include "causalcollab/errors.hpp"
#include "causalcollab/nuisance.hpp"
#include "causalcollab/scm_sim.hpp"
#include "doctest.h"

using namespace causalcollab;

namespace {

// Ridge-penalized logistic regression by iteratively reweighted least squares
// on the intercept-augmented design.
Eigen::VectorXd irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  const auto p = X.rows() + 1, n = X.cols();
  Eigen::MatrixXd Z(n, p);
  Z.leftCols(p - 1) = X.transpose();
  Z.col(p - 1).setOnes();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = Z * beta;
    const Eigen::VectorXd mu = eta.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    const Eigen::VectorXd z = eta.array() + (y - mu).array() / w.array();
    Eigen::MatrixXd A = Z.transpose() * w.asDiagonal() * Z;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd next = A.ldlt().solve(Z.transpose() * (w.array() * z.array()).matrix());
    if ((next - beta).norm() < 1e-14 * (1 + beta.norm())) return next;
    beta = next;
  }
  return beta;
}

struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Problem logistic_problem(int p, int n, std::uint64_t seed) {
  Rng rng(seed);
  Problem pr{Eigen::MatrixXd(p, n), Eigen::VectorXd(n)};
  fill_standard_normal(rng, pr.X);
  Eigen::VectorXd w(p);
  fill_standard_normal(rng, w);
  for (int i = 0; i < n; ++i) pr.y[i] = uniform01(rng) < sigmoid(w.dot(pr.X.col(i)) + 0.3) ? 1.0 : 0.0;
  return pr;
}

double auc(const Eigen::VectorXd& score, const Eigen::VectorXd& y) {
  double pairs = 0, wins = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    for (Eigen::Index j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST_CASE("logistic fit agrees with IRLS") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Problem pr = logistic_problem(5, 300, seed);
    const FeatureLayout L{1, 2, 3, false};
    const OutcomeModel m = fit_outcome(pr.X, pr.y, L, OutcomeConfig{});
    const Eigen::VectorXd ref = irls(pr.X, pr.y, 1.0);
    CHECK((m.w - ref.head(5)).norm() < 1e-6);
    CHECK(std::abs(m.b - ref[5]) < 1e-6);
  }
}

TEST_CASE("logistic objective gradient matches central differences") {
  const Problem pr = logistic_problem(4, 50, 9);
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd th(5);
    fill_standard_normal(rng, th);
    Eigen::VectorXd g;
    logistic_objective(pr.X, pr.y, th.head(4), th[4], 0.7, &g);
    auto f = [&](const Eigen::VectorXd& v) { return logistic_objective(pr.X, pr.y, v.head(4), v[4], 0.7, nullptr); };
    CHECK(oracle::relative_error(g, oracle::numeric_gradient(f, th)) < 1e-7);
  }
}

TEST_CASE("constant labels are fitted by the penalized intercept") {
  Problem pr = logistic_problem(3, 100, 5);
  pr.y.setZero();
  const OutcomeModel m = fit_outcome(pr.X, pr.y, FeatureLayout{1, 1, 2, false}, OutcomeConfig{});
  const Eigen::VectorXd ref = irls(pr.X, pr.y, 1.0);
  CHECK(std::abs(m.b - ref[3]) < 1e-6);
  CHECK(m.predict_batch(pr.X).maxCoeff() < 0.1);
}

TEST_CASE("shuffled labels give chance-level held-out AUC") {
  const Problem all = logistic_problem(6, 800, 21);
  const Problem train{all.X.leftCols(400), all.y.head(400)}, test{all.X.rightCols(400), all.y.tail(400)};
  Eigen::VectorXd y = train.y;
  Rng rng(3);
  std::shuffle(y.data(), y.data() + y.size(), rng);
  const OutcomeModel m = fit_outcome(train.X, y, FeatureLayout{1, 3, 3, false}, OutcomeConfig{});
  CHECK(std::abs(auc(m.predict_batch(test.X), test.y) - 0.5) < 0.1);
  const OutcomeModel good = fit_outcome(train.X, train.y, FeatureLayout{1, 3, 3, false}, OutcomeConfig{});
  CHECK(auc(good.predict_batch(test.X), test.y) > 0.7);
}

TEST_CASE("additive model gradients match central differences") {
  const FeatureLayout L{2, 2, 3, true};
  Rng rng(6);
  Eigen::MatrixXd X(L.dim(), 12);
  fill_standard_normal(rng, X);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) y[i] = i % 3 == 0;
  OutcomeConfig cfg;
  cfg.kind = OutcomeKind::additive;
  cfg.epochs = 1;
  cfg.hidden = 5;
  OutcomeModel m = fit_outcome(X, y, L, cfg);
  for (int trial = 0; trial < 5; ++trial) {
    for (Mlp* net : {&m.b1, &m.b2, &m.b3}) fill_standard_normal(rng, net->params());
    Eigen::VectorXd g;
    additive_loss(m, X, y, &g);
    const auto n1 = m.b1.params().size(), n2 = m.b2.params().size(), n3 = m.b3.params().size();
    Eigen::VectorXd all(n1 + n2 + n3);
    all << m.b1.params(), m.b2.params(), m.b3.params();
    auto f = [&](const Eigen::VectorXd& v) {
      OutcomeModel c = m;
      c.b1.params() = v.head(n1);
      c.b2.params() = v.segment(n1, n2);
      c.b3.params() = v.tail(n3);
      return additive_loss(c, X, y, nullptr);
    };
    CHECK(oracle::relative_error(g, oracle::numeric_gradient(f, all)) < 1e-6);
  }
}

TEST_CASE("an additive model with a zeroed style block ignores the style features") {
  const FeatureLayout L{2, 2, 3, true};
  Rng rng(7);
  Eigen::MatrixXd X(L.dim(), 40);
  fill_standard_normal(rng, X);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) y[i] = X(0, i) > 0;
  OutcomeConfig cfg;
  cfg.kind = OutcomeKind::additive;
  cfg.epochs = 20;
  OutcomeModel m = fit_outcome(X, y, L, cfg);
  m.b1.params().setZero();
  Eigen::MatrixXd X2 = X;
  X2.topRows(4).setRandom();
  CHECK((m.predict_batch(X) - m.predict_batch(X2)).norm() == 0.0);
  const OutcomeModel back = OutcomeModel::from_json(m.to_json());
  CHECK((back.predict_batch(X) - m.predict_batch(X)).norm() == 0.0);
  cfg.kind = OutcomeKind::additive;
  CHECK_THROWS_AS(fit_outcome(X.topRows(FeatureLayout{2, 2, 3, false}.dim()), y, FeatureLayout{2, 2, 3, false}, cfg),
                  ConfigError);
}

TEST_CASE("transition network gradients match central differences") {
  Rng rng(13);
  const Mlp net({5, 8, 8, 3}, rng);
  Eigen::MatrixXd X(5, 9), Y(3, 9);
  fill_standard_normal(rng, X);
  fill_standard_normal(rng, Y);
  Eigen::VectorXd g;
  transition_loss(net, X, Y, &g);
  auto f = [&](const Eigen::VectorXd& p) {
    Mlp m = net;
    m.params() = p;
    return transition_loss(m, X, Y, nullptr);
  };
  CHECK(oracle::relative_error(g, oracle::numeric_gradient(f, net.params())) < 1e-6);
}

namespace {

Dataset linear_transition_data(int n, int d, const Eigen::MatrixXd& M, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trajectory> trs;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    tr.id = std::to_string(i);
    Step s1, s2;
    s1.l.resize(d);
    s1.a.resize(d);
    fill_standard_normal(rng, s1.l);
    fill_standard_normal(rng, s1.a);
    Eigen::VectorXd in(2 * d), e(d);
    in << s1.a, s1.l;
    fill_standard_normal(rng, e);
    s2.l = M * in + e;
    s2.a = s2.l;
    tr.steps = {s1, s2};
    trs.push_back(tr);
  }
  return Dataset({2, d, {}, {}, {}, "unit"}, trs);
}

}  // namespace

TEST_CASE("transition model recovers a linear mean and a constant one") {
  const int d = 3;
  Rng rng(17);
  Eigen::MatrixXd M(d, 2 * d);
  fill_standard_normal(rng, M);
  M *= 0.5;
  const Dataset ds = linear_transition_data(4000, d, M, 1);
  TransitionConfig cfg;
  cfg.epochs = 30;
  cfg.lr = 1e-3;
  cfg.hidden = 32;
  const TransitionModel tm = fit_transition(ds, nullptr, cfg);
  double err = 0;
  Rng trng(2);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd in(2 * d);
    fill_standard_normal(trng, in);
    err += (tm.mean(2, in) - M * in).squaredNorm() / (200.0 * d);
  }
  CHECK(err < 0.08);
  const Dataset flat = linear_transition_data(500, d, Eigen::MatrixXd::Zero(d, 2 * d), 3);
  cfg.epochs = 10;
  const TransitionModel tc = fit_transition(flat, nullptr, cfg);
  Eigen::VectorXd in = Eigen::VectorXd::Zero(2 * d);
  CHECK(tc.mean(2, in).norm() < 0.3);
}

TEST_CASE("transition draws have the fitted mean and unit covariance") {
  const Dataset ds = oracle::random_dataset(50, 2, 3, 4);
  TransitionConfig cfg;
  cfg.epochs = 5;
  const TransitionModel tm = fit_transition(ds, nullptr, cfg);
  const TransitionModel back = TransitionModel::from_json(tm.to_json());
  Eigen::VectorXd cond(6);
  cond << 0.1, -0.2, 0.3, 1.0, 0.5, -1.0;
  CHECK(back.mean(2, cond) == tm.mean(2, cond));
  Rng rng(8);
  const int n = 40000;
  const Eigen::MatrixXd s = tm.sample(2, cond, n, rng);
  const Eigen::VectorXd m = s.rowwise().mean();
  CHECK((m - tm.mean(2, cond)).cwiseAbs().maxCoeff() < 4.5 / std::sqrt(n));
  const Eigen::MatrixXd c = s.colwise() - m;
  CHECK((c * c.transpose() / (n - 1) - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.04);
}

TEST_CASE("feature layout offsets and design matrix") {
  const FeatureLayout L{2, 2, 3, true};
  CHECK(L.dim() == 4 + 6 + 3);
  CHECK(L.l_offset(2) == 7);
  CHECK(L.prev_offset() == 10);
  CHECK(FeatureLayout::from_json(L.to_json()) == L);
  const Dataset ds = oracle::random_dataset(4, 2, 3, 1);
  const auto act = action_features(ds, nullptr);
  const Eigen::MatrixXd X = outcome_design(ds, act, FeatureLayout{2, 3, 3, true});
  CHECK(X.col(1).segment(0, 3) == ds[1].steps[0].a);
  CHECK(X.col(1).segment(6, 3) == ds[1].steps[0].l);
  CHECK(X.col(1).segment(12, 3) == ds[1].steps[0].a);
}
