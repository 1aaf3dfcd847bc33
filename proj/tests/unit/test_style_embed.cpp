#include <cmath>

#include "../support/oracles.hpp"
#include "causalcollab/errors.hpp"
#include "causalcollab/nn.hpp"
#include "causalcollab/style_embed.hpp"
#include "doctest.h"

using namespace causalcollab;

TEST_CASE("network gradients match central differences") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Mlp net({4, 7, 6, 3}, rng);
    Eigen::MatrixXd x(4, 5), w(3, 5);
    fill_standard_normal(rng, x);
    fill_standard_normal(rng, w);
    auto loss = [&](const Eigen::VectorXd& p) {
      Mlp m = net;
      m.params() = p;
      return (m.forward(x).array() * w.array()).sum();
    };
    Mlp::Tape tape;
    net.forward(x, tape);
    Eigen::VectorXd g;
    const Eigen::MatrixXd dx = net.backward(tape, w, g);
    CHECK(oracle::relative_error(g, oracle::numeric_gradient(loss, net.params())) < 1e-6);
    Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    auto loss_x = [&](const Eigen::VectorXd& v) {
      return (net.forward(Eigen::Map<const Eigen::MatrixXd>(v.data(), 4, 5)).array() * w.array()).sum();
    };
    CHECK(oracle::relative_error(Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size()),
                                 oracle::numeric_gradient(loss_x, xv)) < 1e-6);
  }
}

TEST_CASE("network JSON round trip and leaky slope") {
  Rng rng(1);
  const Mlp net({2, 3, 1}, rng);
  const Mlp back = Mlp::from_json(net.to_json());
  CHECK(back.params() == net.params());
  Mlp z = Mlp::zeros({1, 1, 1});
  z.weight(0)(0, 0) = 1.0;
  z.weight(1)(0, 0) = 1.0;
  Eigen::MatrixXd x(1, 2);
  x << -2.0, 3.0;
  const Eigen::MatrixXd y = z.forward(x);
  CHECK(y(0, 0) == doctest::Approx(-2.0 * kLeakySlope));
  CHECK(y(0, 1) == doctest::Approx(3.0));
}

TEST_CASE("Adam minimizes a quadratic") {
  Adam opt(0.05);
  Eigen::VectorXd p(2);
  p << 3.0, -2.0;
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * (p - Eigen::Vector2d(1.0, 0.5)));
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("CVAE objective gradients match central differences") {
  Rng rng(8);
  for (bool linear : {false, true}) {
    const int din = 6, dc = 5, K = 2, d = 4, n = 7;
    const Mlp enc({din, 9, K}, rng);
    const Mlp dec = linear ? Mlp({dc + K, d}, rng) : Mlp({dc + K, 9, d}, rng);
    Eigen::MatrixXd xe(din, n), xc(dc, n), y(d, n), eps(K, n);
    for (auto* m : {&xe, &xc, &y, &eps}) fill_standard_normal(rng, *m);
    const double sigma2 = 0.7, beta = 1.3;
    Eigen::VectorXd ge = Eigen::VectorXd::Zero(enc.params().size()), gd = Eigen::VectorXd::Zero(dec.params().size());
    cvae_loss(enc, dec, xe, xc, y, eps, sigma2, beta, &ge, &gd);
    auto f_enc = [&](const Eigen::VectorXd& p) {
      Mlp e = enc;
      e.params() = p;
      return cvae_loss(e, dec, xe, xc, y, eps, sigma2, beta, nullptr, nullptr).loss;
    };
    auto f_dec = [&](const Eigen::VectorXd& p) {
      Mlp e = dec;
      e.params() = p;
      return cvae_loss(enc, e, xe, xc, y, eps, sigma2, beta, nullptr, nullptr).loss;
    };
    CHECK(oracle::relative_error(ge, oracle::numeric_gradient(f_enc, enc.params())) < 1e-6);
    CHECK(oracle::relative_error(gd, oracle::numeric_gradient(f_dec, dec.params())) < 1e-6);
  }
}

TEST_CASE("CVAE objective terms match the Gaussian closed form") {
  const int K = 2, d = 3, n = 4;
  const Mlp enc = Mlp::zeros({5, 4, K}), dec = Mlp::zeros({2 + K, d});
  Eigen::MatrixXd xe = Eigen::MatrixXd::Ones(5, n), xc = Eigen::MatrixXd::Ones(2, n), y(d, n), eps(K, n);
  Rng rng(2);
  fill_standard_normal(rng, y);
  fill_standard_normal(rng, eps);
  const double sigma2 = 2.0;
  const CvaeLoss l = cvae_loss(enc, dec, xe, xc, y, eps, sigma2, 1.0, nullptr, nullptr);
  CHECK(l.kl == 0.0);
  const double expect = -y.squaredNorm() / n / (2 * sigma2) - 0.5 * d * std::log(2 * 3.14159265358979323846 * sigma2);
  CHECK(l.reconstruction == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("a zero-weight encoder maps every input to its bias") {
  const Dataset ds = oracle::random_dataset(10, 2, 4, 3);
  CvaeConfig cfg;
  cfg.K = 2;
  cfg.epochs = 1;
  CvaeParams p = fit_cvae(ds, cfg);
  Mlp& enc = p.encoders[0];
  enc.params().setZero();
  enc.bias(enc.layer_count() - 1) << 0.25, -1.5;
  const StyleEncoder e = p;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (int t = 1; t <= 2; ++t) {
      const Eigen::VectorXd z = encode_style(e, ds[i], t);
      CHECK(z[0] == 0.25);
      CHECK(z[1] == -1.5);
    }
}

TEST_CASE("CVAE training keeps the best ELBO and is deterministic") {
  const Dataset ds = oracle::random_dataset(64, 2, 6, 4);
  CvaeConfig cfg;
  cfg.K = 2;
  cfg.epochs = 50;
  cfg.lr = 1e-3;
  const CvaeParams a = fit_cvae(ds, cfg);
  CHECK(a.elbo_trace.size() == 51);
  CHECK(a.best_elbo() >= a.elbo_trace.front());
  for (double v : a.elbo_trace) CHECK(std::isfinite(v));
  const CvaeParams b = fit_cvae(ds, cfg);
  CHECK(dump_json(encoder_to_json(StyleEncoder(a))) == dump_json(encoder_to_json(StyleEncoder(b))));
  cfg.seed = 8;
  CHECK(dump_json(encoder_to_json(StyleEncoder(fit_cvae(ds, cfg)))) != dump_json(encoder_to_json(StyleEncoder(a))));
  cfg.shared_across_steps = false;
  CHECK(fit_cvae(ds, cfg).encoders.size() == 2);
}

TEST_CASE("CVAE refuses counterfactual data and clamps K") {
  CvaeConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(fit_cvae(oracle::random_dataset(8, 1, 3, 1, Split::counterfactual), cfg), LeakageError);
  cfg.K = 10;
  CHECK(fit_cvae(oracle::random_dataset(8, 1, 3, 1), cfg).K == 2);
  CvaeConfig bad;
  bad.sigma2 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("encoding is pure and round-trips through JSON") {
  const Dataset ds = oracle::random_dataset(30, 2, 5, 6);
  CvaeConfig cfg;
  cfg.K = 3;
  cfg.epochs = 3;
  for (const StyleEncoder& e : {StyleEncoder(fit_cvae(ds, cfg)), StyleEncoder(fit_pca(ds, 3))}) {
    const StyleEncoder back = encoder_from_json(encoder_to_json(e));
    for (std::size_t i = 0; i < 5; ++i) {
      const Eigen::VectorXd z = encode_style(e, ds[i], 2);
      CHECK(z == encode_style(e, ds[i], 2));
      CHECK(z == encode_style(back, ds[i], 2));
    }
    CHECK_THROWS(encode_style(e, ds[0], 3));
  }
}

TEST_CASE("linear-decoder CVAE recovers the conditional PPCA subspace") {
  const Dataset ds = oracle::conditional_ppca_dataset(200, 8, 2, 3.0, 11);
  CvaeConfig cfg;
  cfg.K = 2;
  cfg.linear_decoder = true;
  cfg.epochs = 400;
  cfg.lr = 1e-2;
  const CvaeParams p = fit_cvae(ds, cfg);
  const Mlp& dec = p.decoders[0];
  const Eigen::MatrixXd Wz = dec.weight(0).rightCols(2);
  CHECK(oracle::largest_angle_degrees(Wz, oracle::conditional_ppca_subspace(ds, 2)) < 10.0);
}

TEST_CASE("PCA matches a dense eigensolver") {
  Rng rng(10);
  Eigen::MatrixXd X(10, 5);
  fill_standard_normal(rng, X);
  std::vector<Trajectory> trs;
  for (int i = 0; i < 10; ++i) {
    Trajectory tr;
    tr.id = std::to_string(i);
    tr.steps.push_back({Eigen::VectorXd::Zero(5), X.row(i).transpose()});
    trs.push_back(tr);
  }
  const Dataset ds({1, 5, {}, {}, {}, "unit"}, trs);
  const PcaParams p = fit_pca(ds, 3);
  const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C.transpose() * C / 9.0);
  const Eigen::MatrixXd top = es.eigenvectors().rightCols(3);
  CHECK(principal_angles(p.loadings[0], top).maxCoeff() < 1e-8);
  CHECK(oracle::largest_angle_degrees(p.loadings[0], top) < 1e-4);
  CHECK((p.loadings[0].transpose() * p.loadings[0] - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-10);
  for (int k = 0; k < 3; ++k) CHECK(p.eigenvalues[0][k] == doctest::Approx(es.eigenvalues()[4 - k]).epsilon(1e-10));
}

TEST_CASE("PCA on an affine K-subspace reconstructs exactly, and K = d always does") {
  Rng rng(12);
  const int d = 6, K = 2, n = 40;
  Eigen::MatrixXd B(d, K);
  fill_standard_normal(rng, B);
  Eigen::VectorXd m(d);
  fill_standard_normal(rng, m);
  std::vector<Trajectory> trs;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd s(K);
    fill_standard_normal(rng, s);
    Trajectory tr;
    tr.id = std::to_string(i);
    tr.steps.push_back({Eigen::VectorXd::Zero(d), m + B * s});
    trs.push_back(tr);
  }
  const Dataset ds({1, d, {}, {}, {}, "unit"}, trs);
  for (int k : {K, d}) {
    const PcaParams p = fit_pca(ds, k);
    double mse = 0.0;
    for (const auto& tr : ds.trajectories()) {
      const Eigen::VectorXd c = tr.steps[0].a - p.means[0];
      mse += (p.loadings[0] * (p.loadings[0].transpose() * c) - c).squaredNorm() / (n * d);
    }
    CHECK(mse < 1e-16);
  }
  const PcaParams wide = fit_pca(ds, 4);
  CHECK(wide.K == K);
}

TEST_CASE("PCA with canonical loadings reads off coordinates") {
  PcaParams p;
  p.T = 1;
  p.d = 4;
  p.K = 2;
  p.loadings.push_back(Eigen::MatrixXd::Identity(4, 2));
  p.means.push_back(Eigen::VectorXd::Zero(4));
  p.eigenvalues.push_back(Eigen::Vector2d(1, 1));
  Trajectory tr;
  tr.steps.push_back({Eigen::VectorXd::Zero(4), Eigen::Vector4d(1, 2, 3, 4)});
  const Eigen::VectorXd z = encode_style(StyleEncoder(p), tr, 1);
  CHECK(z == Eigen::Vector2d(1, 2));
}

TEST_CASE("principal angles of known planes") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 1), B = Eigen::MatrixXd::Zero(3, 1);
  A(0, 0) = 1;
  B(0, 0) = std::cos(0.3);
  B(1, 0) = std::sin(0.3);
  CHECK(principal_angles(A, B)[0] == doctest::Approx(0.3).epsilon(1e-14));
  B(0, 0) = 1;
  B(1, 0) = 1e-9;
  CHECK(principal_angles(A, B)[0] == doctest::Approx(1e-9).epsilon(1e-6));
}
