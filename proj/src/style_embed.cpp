#include "causalcollab/style_embed.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "causalcollab/errors.hpp"
#include "causalcollab/log.hpp"
#include "causalcollab/random.hpp"

namespace causalcollab {

namespace {

void fail(const std::string& field, const std::string& msg) { throw ConfigError("cvae." + field + ": " + msg); }

template <class... F>
struct Overloaded : F... {
  using F::operator()...;
};

void check_step(const Trajectory& traj, int T, int d, int t) {
  if (t < 1 || t > T) throw std::invalid_argument("step index " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  if (static_cast<int>(traj.steps.size()) != T)
    throw DimensionError("trajectory '" + traj.id + "' has " + std::to_string(traj.steps.size()) + " steps, expected " + std::to_string(T));
  for (int s = 0; s < t; ++s) {
    const Step& st = traj.steps[static_cast<std::size_t>(s)];
    if (st.a.size() != d || st.l.size() != d)
      throw DimensionError("trajectory '" + traj.id + "' step " + std::to_string(s + 1) + " has dimension " +
                           std::to_string(st.a.size()) + ", encoder expects " + std::to_string(d));
  }
}

int encoder_input_dim(const CvaeConfig& cfg, int T, int d) { return (cfg.full_history ? 2 * T * d : 2 * d) + T; }
int decoder_condition_dim(const CvaeConfig& cfg, int T, int d) {
  return (cfg.full_history ? (2 * T - 1) * d : 2 * d) + T;
}

}  // namespace

void CvaeConfig::validate() const {
  if (K < 1) fail("K", "must be >= 1");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be a finite value > 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) fail("beta", "must be a finite value >= 0");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) fail("sigma2", "must be a finite value > 0");
  if (hidden < 1) fail("hidden", "must be >= 1");
  if (batch < 1) fail("batch", "must be >= 1");
}

Json CvaeConfig::to_json() const {
  Json j = Json::object();
  j["K"] = K;
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["beta"] = beta;
  j["sigma2"] = sigma2;
  j["hidden"] = hidden;
  j["batch"] = batch;
  j["seed"] = seed;
  j["shared_across_steps"] = shared_across_steps;
  j["full_history"] = full_history;
  j["linear_decoder"] = linear_decoder;
  return j;
}

CvaeConfig CvaeConfig::from_json(const Json& j) {
  CvaeConfig c;
  for (auto& [k, v] : j.items()) {
    try {
      if (k == "K") c.K = v.get<int>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "beta") c.beta = v.get<double>();
      else if (k == "sigma2") c.sigma2 = v.get<double>();
      else if (k == "hidden") c.hidden = v.get<int>();
      else if (k == "batch") c.batch = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "shared_across_steps") c.shared_across_steps = v.get<bool>();
      else if (k == "full_history") c.full_history = v.get<bool>();
      else if (k == "linear_decoder") c.linear_decoder = v.get<bool>();
      else fail(k, "unknown key");
    } catch (const nlohmann::json::exception& e) {
      fail(k, std::string("wrong type: ") + e.what());
    }
  }
  return c;
}

double CvaeParams::best_elbo() const {
  return elbo_trace.empty() ? -std::numeric_limits<double>::infinity()
                            : elbo_trace[static_cast<std::size_t>(best_epoch)];
}

Eigen::VectorXd cvae_encoder_input(const CvaeConfig& cfg, int T, const Trajectory& traj, int t) {
  const int d = static_cast<int>(traj.steps.front().a.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(encoder_input_dim(cfg, T, d));
  if (cfg.full_history) {
    for (int s = 0; s < t; ++s) {
      x.segment(s * d, d) = traj.steps[static_cast<std::size_t>(s)].a;
      x.segment((T + s) * d, d) = traj.steps[static_cast<std::size_t>(s)].l;
    }
    x[2 * T * d + t - 1] = 1.0;
  } else {
    x.segment(0, d) = traj.steps[static_cast<std::size_t>(t - 1)].a;
    x.segment(d, d) = traj.steps[static_cast<std::size_t>(t - 1)].l;
    x[2 * d + t - 1] = 1.0;
  }
  return x;
}

Eigen::VectorXd cvae_decoder_condition(const CvaeConfig& cfg, int T, const Trajectory& traj, int t) {
  const int d = static_cast<int>(traj.steps.front().a.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(decoder_condition_dim(cfg, T, d));
  if (cfg.full_history) {
    for (int s = 0; s + 1 < t; ++s) x.segment(s * d, d) = traj.steps[static_cast<std::size_t>(s)].a;
    for (int s = 0; s < t; ++s) x.segment((T - 1 + s) * d, d) = traj.steps[static_cast<std::size_t>(s)].l;
    x[(2 * T - 1) * d + t - 1] = 1.0;
  } else {
    if (t > 1) x.segment(0, d) = traj.steps[static_cast<std::size_t>(t - 2)].a;
    x.segment(d, d) = traj.steps[static_cast<std::size_t>(t - 1)].l;
    x[2 * d + t - 1] = 1.0;
  }
  return x;
}

CvaeLoss cvae_loss(const Mlp& enc, const Mlp& dec, const Eigen::MatrixXd& enc_in, const Eigen::MatrixXd& dec_cond,
                   const Eigen::MatrixXd& target, const Eigen::MatrixXd& eps, double sigma2, double beta,
                   Eigen::VectorXd* g_enc, Eigen::VectorXd* g_dec) {
  const auto n = static_cast<double>(enc_in.cols());
  const auto K = static_cast<Eigen::Index>(enc.output_dim());
  const auto d = static_cast<double>(target.rows());
  Mlp::Tape te, td;
  const Eigen::MatrixXd mu = enc.forward(enc_in, te);
  Eigen::MatrixXd dec_in(dec_cond.rows() + K, dec_cond.cols());
  dec_in.topRows(dec_cond.rows()) = dec_cond;
  dec_in.bottomRows(K) = mu + std::sqrt(sigma2) * eps;
  const Eigen::MatrixXd h = dec.forward(dec_in, td);
  const Eigen::MatrixXd r = h - target;

  CvaeLoss out;
  const double sq = r.squaredNorm() / n;
  out.reconstruction = -sq / (2.0 * sigma2) - 0.5 * d * std::log(2.0 * std::numbers::pi * sigma2);
  out.kl = mu.squaredNorm() / n / (2.0 * sigma2);
  out.loss = -out.reconstruction + beta * out.kl;

  if (g_enc || g_dec) {
    Eigen::VectorXd scratch;
    Eigen::VectorXd& gd = g_dec ? *g_dec : scratch;
    const Eigen::MatrixXd d_in = dec.backward(td, r / (sigma2 * n), gd);
    if (g_enc) {
      const Eigen::MatrixXd d_mu = d_in.bottomRows(K) + (beta / (sigma2 * n)) * mu;
      enc.backward(te, d_mu, *g_enc);
    }
  }
  return out;
}

CvaeParams fit_cvae(const Dataset& ds, const CvaeConfig& cfg_in) {
  cfg_in.validate();
  require_observational(ds, "fit_cvae");
  CvaeConfig cfg = cfg_in;
  const int T = ds.T(), d = ds.d();
  if (d < 2) throw ConfigError("cvae.K: latent dimension must be below d, impossible for d = 1");
  if (cfg.K >= d) {
    log_warn("cvae_latent_clamped", {{"requested", cfg.K}, {"used", d - 1}, {"d", d}});
    cfg.K = d - 1;
  }
  const int K = cfg.K;
  const int G = cfg.shared_across_steps ? 1 : T;
  const auto n = ds.size();

  CvaeParams p;
  p.config = cfg;
  p.T = T;
  p.d = d;
  p.K = K;

  struct Group {
    Eigen::MatrixXd enc_in, dec_cond, target, eval_eps;
    std::unique_ptr<Adam> adam_enc, adam_dec;
  };
  std::vector<Group> groups(static_cast<std::size_t>(G));
  std::size_t total = 0;
  for (int g = 0; g < G; ++g) {
    auto& gr = groups[static_cast<std::size_t>(g)];
    std::vector<int> steps;
    if (cfg.shared_across_steps)
      for (int t = 1; t <= T; ++t) steps.push_back(t);
    else
      steps.push_back(g + 1);
    const auto N = static_cast<Eigen::Index>(n * steps.size());
    Eigen::MatrixXd enc_raw(encoder_input_dim(cfg, T, d), N), cond_raw(decoder_condition_dim(cfg, T, d), N);
    gr.target.resize(d, N);
    Eigen::Index col = 0;
    for (int t : steps)
      for (std::size_t i = 0; i < n; ++i, ++col) {
        enc_raw.col(col) = cvae_encoder_input(cfg, T, ds[i], t);
        cond_raw.col(col) = cvae_decoder_condition(cfg, T, ds[i], t);
        gr.target.col(col) = ds[i].steps[static_cast<std::size_t>(t - 1)].a;
      }
    p.encoder_inputs.push_back(Standardizer::fit(enc_raw));
    p.decoder_conditions.push_back(Standardizer::fit(cond_raw));
    gr.enc_in = p.encoder_inputs.back().apply(enc_raw);
    gr.dec_cond = p.decoder_conditions.back().apply(cond_raw);

    Rng init = make_rng(cfg.seed, {hash_key("cvae-init"), static_cast<std::uint64_t>(g)});
    p.encoders.emplace_back(std::vector<int>{static_cast<int>(gr.enc_in.rows()), cfg.hidden, K}, init);
    const int dec_in = static_cast<int>(gr.dec_cond.rows()) + K;
    p.decoders.emplace_back(cfg.linear_decoder ? std::vector<int>{dec_in, d} : std::vector<int>{dec_in, cfg.hidden, d},
                            init);
    Mlp& dec = p.decoders.back();
    dec.bias(dec.layer_count() - 1) = gr.target.rowwise().mean();

    Rng eval_rng = make_rng(cfg.seed, {hash_key("cvae-eval"), static_cast<std::uint64_t>(g)});
    gr.eval_eps.resize(K, N);
    fill_standard_normal(eval_rng, gr.eval_eps);
    gr.adam_enc = std::make_unique<Adam>(cfg.lr);
    gr.adam_dec = std::make_unique<Adam>(cfg.lr);
    total += static_cast<std::size_t>(N);
  }

  auto evaluate = [&]() {
    double elbo = 0.0;
    for (int g = 0; g < G; ++g) {
      const auto& gr = groups[static_cast<std::size_t>(g)];
      const CvaeLoss l = cvae_loss(p.encoders[static_cast<std::size_t>(g)], p.decoders[static_cast<std::size_t>(g)],
                                   gr.enc_in, gr.dec_cond, gr.target, gr.eval_eps, cfg.sigma2, cfg.beta, nullptr, nullptr);
      elbo -= l.loss * static_cast<double>(gr.enc_in.cols()) / static_cast<double>(total);
    }
    return elbo;
  };

  p.elbo_trace.push_back(evaluate());
  if (!std::isfinite(p.elbo_trace.back())) throw NumericalError("CVAE objective is not finite at initialization");
  std::vector<Mlp> best_enc = p.encoders, best_dec = p.decoders;

  Rng shuffle_rng = make_rng(cfg.seed, {hash_key("cvae-shuffle")});
  Rng noise_rng = make_rng(cfg.seed, {hash_key("cvae-noise")});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int g = 0; g < G; ++g) {
      auto& gr = groups[static_cast<std::size_t>(g)];
      Mlp& enc = p.encoders[static_cast<std::size_t>(g)];
      Mlp& dec = p.decoders[static_cast<std::size_t>(g)];
      const auto N = static_cast<std::size_t>(gr.enc_in.cols());
      const std::size_t bs = N < 256 ? N : static_cast<std::size_t>(cfg.batch);
      const auto order = shuffled_indices(N, shuffle_rng);
      for (std::size_t start = 0; start < N; start += bs) {
        const std::size_t end = std::min(N, start + bs);
        const Eigen::MatrixXd xe = gather_columns(gr.enc_in, order, start, end);
        const Eigen::MatrixXd xc = gather_columns(gr.dec_cond, order, start, end);
        const Eigen::MatrixXd y = gather_columns(gr.target, order, start, end);
        Eigen::MatrixXd eps(K, static_cast<Eigen::Index>(end - start));
        fill_standard_normal(noise_rng, eps);
        Eigen::VectorXd ge = Eigen::VectorXd::Zero(enc.params().size());
        Eigen::VectorXd gd = Eigen::VectorXd::Zero(dec.params().size());
        const CvaeLoss l = cvae_loss(enc, dec, xe, xc, y, eps, cfg.sigma2, cfg.beta, &ge, &gd);
        if (!std::isfinite(l.loss) || !ge.allFinite() || !gd.allFinite())
          throw NumericalError("CVAE training diverged at epoch " + std::to_string(epoch));
        gr.adam_enc->step(enc.params(), ge);
        gr.adam_dec->step(dec.params(), gd);
      }
    }
    const double elbo = evaluate();
    if (!std::isfinite(elbo)) throw NumericalError("CVAE training diverged at epoch " + std::to_string(epoch));
    p.elbo_trace.push_back(elbo);
    if (elbo > p.elbo_trace[static_cast<std::size_t>(p.best_epoch)]) {
      p.best_epoch = epoch;
      best_enc = p.encoders;
      best_dec = p.decoders;
    }
  }
  p.encoders = std::move(best_enc);
  p.decoders = std::move(best_dec);
  log_info("cvae_fit", {{"epochs", cfg.epochs}, {"best_epoch", p.best_epoch}, {"best_elbo", p.best_elbo()}, {"K", K}});
  return p;
}

PcaParams fit_pca(const Dataset& ds, int K) {
  require_observational(ds, "fit_pca");
  const int T = ds.T(), d = ds.d();
  const auto n = static_cast<Eigen::Index>(ds.size());
  if (K < 1 || K > d) throw ConfigError("pca.K: must lie in [1, d]");
  if (n < K) throw ConfigError("pca.K: needs at least K trajectories per step");
  PcaParams p;
  p.T = T;
  p.d = d;
  std::vector<Eigen::MatrixXd> V;
  std::vector<Eigen::VectorXd> ev;
  int rank_min = K;
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd A(n, d);
    for (Eigen::Index i = 0; i < n; ++i) A.row(i) = ds[static_cast<std::size_t>(i)].steps[static_cast<std::size_t>(t)].a.transpose();
    const Eigen::VectorXd mean = A.colwise().mean().transpose();
    A.rowwise() -= mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double tol = static_cast<double>(std::max<Eigen::Index>(n, d)) * std::numeric_limits<double>::epsilon() *
                       (s.size() ? s[0] : 0.0);
    int rank = 0;
    while (rank < s.size() && s[rank] > tol) ++rank;
    rank_min = std::min(rank_min, rank);
    p.means.push_back(mean);
    V.push_back(svd.matrixV());
    ev.push_back(s.cwiseAbs2() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
  }
  if (rank_min < K) {
    log_warn("pca_rank_truncated", {{"requested", K}, {"rank", rank_min}});
    if (rank_min == 0) throw NumericalError("PCA: action covariance is zero");
  }
  p.K = rank_min;
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd W = V[static_cast<std::size_t>(t)].leftCols(p.K);
    for (Eigen::Index k = 0; k < W.cols(); ++k) {
      Eigen::Index imax = 0;
      W.col(k).cwiseAbs().maxCoeff(&imax);
      if (W(imax, k) < 0) W.col(k) *= -1.0;
    }
    p.loadings.push_back(std::move(W));
    p.eigenvalues.push_back(ev[static_cast<std::size_t>(t)].head(p.K));
  }
  return p;
}

int style_dim(const StyleEncoder& enc) {
  return std::visit(Overloaded{[](const CvaeParams& p) { return p.K; }, [](const PcaParams& p) { return p.K; },
                               [](const LinearStyleMap& m) { return static_cast<int>(m.M.cols()); }},
                    enc);
}

std::string encoder_kind(const StyleEncoder& enc) {
  return std::visit(Overloaded{[](const CvaeParams&) { return std::string("cvae"); },
                               [](const PcaParams&) { return std::string("pca"); },
                               [](const LinearStyleMap&) { return std::string("linear"); }},
                    enc);
}

Eigen::VectorXd encode_style(const StyleEncoder& enc, const Trajectory& traj, int t) {
  return std::visit(
      Overloaded{
          [&](const CvaeParams& p) -> Eigen::VectorXd {
            check_step(traj, p.T, p.d, t);
            const std::size_t g = p.config.shared_across_steps ? 0 : static_cast<std::size_t>(t - 1);
            const Eigen::MatrixXd x = p.encoder_inputs[g].apply(cvae_encoder_input(p.config, p.T, traj, t));
            return p.encoders[g].forward(x).col(0);
          },
          [&](const PcaParams& p) -> Eigen::VectorXd {
            check_step(traj, p.T, p.d, t);
            const auto s = static_cast<std::size_t>(t - 1);
            return p.loadings[s].transpose() * (traj.steps[s].a - p.means[s]);
          },
          [&](const LinearStyleMap& m) -> Eigen::VectorXd {
            check_step(traj, static_cast<int>(traj.steps.size()), static_cast<int>(m.M.rows()), t);
            const Step& st = traj.steps[static_cast<std::size_t>(t - 1)];
            return m.M.transpose() * (st.a - st.l);
          }},
      enc);
}

std::vector<Eigen::MatrixXd> encode_dataset(const StyleEncoder& enc, const Dataset& ds) {
  const int T = ds.T();
  const auto n = static_cast<Eigen::Index>(ds.size());
  std::vector<Eigen::MatrixXd> out;
  if (const auto* p = std::get_if<CvaeParams>(&enc)) {
    if (p->T != T || p->d != ds.d()) throw DimensionError("CVAE was fitted for different T or d");
    for (int t = 1; t <= T; ++t) {
      const std::size_t g = p->config.shared_across_steps ? 0 : static_cast<std::size_t>(t - 1);
      Eigen::MatrixXd x(p->encoder_inputs[g].mean.size(), n);
      for (Eigen::Index i = 0; i < n; ++i) x.col(i) = cvae_encoder_input(p->config, T, ds[static_cast<std::size_t>(i)], t);
      out.push_back(p->encoders[g].forward(p->encoder_inputs[g].apply(x)));
    }
    return out;
  }
  for (int t = 1; t <= T; ++t) {
    Eigen::MatrixXd z(style_dim(enc), n);
    for (Eigen::Index i = 0; i < n; ++i) z.col(i) = encode_style(enc, ds[static_cast<std::size_t>(i)], t);
    out.push_back(std::move(z));
  }
  return out;
}

Json encoder_to_json(const StyleEncoder& enc) {
  return std::visit(
      Overloaded{[](const CvaeParams& p) {
                   Json j = Json::object();
                   j["kind"] = "cvae";
                   j["K"] = p.K;
                   j["T"] = p.T;
                   j["d"] = p.d;
                   j["config"] = p.config.to_json();
                   j["best_epoch"] = p.best_epoch;
                   j["elbo_trace"] = p.elbo_trace;
                   Json e = Json::array(), dd = Json::array(), si = Json::array(), sc = Json::array();
                   for (const auto& m : p.encoders) e.push_back(m.to_json());
                   for (const auto& m : p.decoders) dd.push_back(m.to_json());
                   for (const auto& s : p.encoder_inputs) si.push_back(s.to_json());
                   for (const auto& s : p.decoder_conditions) sc.push_back(s.to_json());
                   j["encoder_inputs"] = si;
                   j["decoder_conditions"] = sc;
                   j["encoders"] = e;
                   j["decoders"] = dd;
                   return j;
                 },
                 [](const PcaParams& p) {
                   Json j = Json::object();
                   j["kind"] = "pca";
                   j["K"] = p.K;
                   j["T"] = p.T;
                   j["d"] = p.d;
                   Json w = Json::array(), m = Json::array(), ev = Json::array();
                   for (const auto& x : p.loadings) w.push_back(matrix_to_json(x));
                   for (const auto& x : p.means) m.push_back(vector_to_json(x));
                   for (const auto& x : p.eigenvalues) ev.push_back(vector_to_json(x));
                   j["loadings"] = w;
                   j["means"] = m;
                   j["eigenvalues"] = ev;
                   return j;
                 },
                 [](const LinearStyleMap& m) {
                   Json j = Json::object();
                   j["kind"] = "linear";
                   j["K"] = m.M.cols();
                   j["d"] = m.M.rows();
                   j["M"] = matrix_to_json(m.M);
                   return j;
                 }},
      enc);
}

StyleEncoder encoder_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "cvae") {
    CvaeParams p;
    p.K = j.at("K").get<int>();
    p.T = j.at("T").get<int>();
    p.d = j.at("d").get<int>();
    p.config = CvaeConfig::from_json(j.at("config"));
    p.best_epoch = j.at("best_epoch").get<int>();
    p.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    for (const auto& x : j.at("encoder_inputs")) p.encoder_inputs.push_back(Standardizer::from_json(x));
    for (const auto& x : j.at("decoder_conditions")) p.decoder_conditions.push_back(Standardizer::from_json(x));
    for (const auto& x : j.at("encoders")) p.encoders.push_back(Mlp::from_json(x));
    for (const auto& x : j.at("decoders")) p.decoders.push_back(Mlp::from_json(x));
    const std::size_t G = p.config.shared_across_steps ? 1 : static_cast<std::size_t>(p.T);
    if (p.encoders.size() != G || p.decoders.size() != G || p.encoder_inputs.size() != G || p.decoder_conditions.size() != G)
      throw DimensionError("CVAE document has the wrong number of networks");
    for (const auto& e : p.encoders)
      if (e.output_dim() != p.K) throw DimensionError("CVAE encoder output does not match K");
    return p;
  }
  if (kind == "pca") {
    PcaParams p;
    p.K = j.at("K").get<int>();
    p.T = j.at("T").get<int>();
    p.d = j.at("d").get<int>();
    for (const auto& x : j.at("loadings")) p.loadings.push_back(matrix_from_json(x));
    for (const auto& x : j.at("means")) p.means.push_back(vector_from_json(x));
    for (const auto& x : j.at("eigenvalues")) p.eigenvalues.push_back(vector_from_json(x));
    if (static_cast<int>(p.loadings.size()) != p.T || static_cast<int>(p.means.size()) != p.T)
      throw DimensionError("PCA document has the wrong number of steps");
    for (const auto& w : p.loadings)
      if (w.rows() != p.d || w.cols() != p.K) throw DimensionError("PCA loading has the wrong shape");
    return p;
  }
  if (kind == "linear") return LinearStyleMap{matrix_from_json(j.at("M"))};
  throw SchemaError(0, "kind", "unknown encoder kind '" + kind + "'");
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows()) throw DimensionError("principal angles need subspaces of the same ambient space");
  const Eigen::MatrixXd Qa = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
  const Eigen::MatrixXd Qb = Eigen::HouseholderQR<Eigen::MatrixXd>(B).householderQ() * Eigen::MatrixXd::Identity(B.rows(), B.cols());
  const Eigen::MatrixXd C = Qa.transpose() * Qb;
  // Cosines lose resolution near zero angle, sines near a right angle; pair both.
  Eigen::VectorXd cosines = Eigen::JacobiSVD<Eigen::MatrixXd>(C).singularValues();
  Eigen::VectorXd sines = Eigen::JacobiSVD<Eigen::MatrixXd>(Qb - Qa * C).singularValues();
  std::sort(sines.data(), sines.data() + sines.size());
  const Eigen::Index m = std::min(cosines.size(), sines.size());
  Eigen::VectorXd angles(m);
  for (Eigen::Index i = 0; i < m; ++i) angles[i] = std::atan2(std::clamp(sines[i], 0.0, 1.0), std::clamp(cosines[i], 0.0, 1.0));
  std::sort(angles.data(), angles.data() + angles.size());
  return angles;
}

}  // namespace causalcollab
