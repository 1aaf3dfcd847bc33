#include "causalcollab/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "causalcollab/digest.hpp"
#include "causalcollab/errors.hpp"
#include "causalcollab/log.hpp"
#include "causalcollab/random.hpp"

namespace causalcollab {

std::string to_string(Adjustment a) { return a == Adjustment::none ? "none" : "g_estimation"; }

std::string to_string(Embedding e) {
  switch (e) {
    case Embedding::none: return "none";
    case Embedding::pca: return "pca";
    case Embedding::cvae: return "cvae";
  }
  return "none";
}

Adjustment adjustment_from_string(const std::string& s) {
  if (s == "none") return Adjustment::none;
  if (s == "g_estimation") return Adjustment::g_estimation;
  throw ConfigError("eval.adjustment: expected 'none' or 'g_estimation', got '" + s + "'");
}

Embedding embedding_from_string(const std::string& s) {
  if (s == "none") return Embedding::none;
  if (s == "pca") return Embedding::pca;
  if (s == "cvae") return Embedding::cvae;
  throw ConfigError("eval.embedding: expected 'none', 'pca' or 'cvae', got '" + s + "'");
}

std::string BaselineSpec::name() const {
  std::string emb = embedding == Embedding::pca ? "PCA" : embedding == Embedding::cvae ? "CVAE" : "";
  if (adjustment == Adjustment::none) return emb.empty() ? "No Adjustment" : "+" + emb;
  return emb.empty() ? "G-E" : "G-E+" + emb;
}

std::vector<BaselineSpec> all_baselines() {
  std::vector<BaselineSpec> out;
  for (auto a : {Adjustment::none, Adjustment::g_estimation})
    for (auto e : {Embedding::none, Embedding::pca, Embedding::cvae}) out.push_back({a, e});
  return out;
}

Json PcaConfig::to_json() const { return Json{{"K", K}}; }

PcaConfig PcaConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("pca: expected an object");
  PcaConfig c;
  for (auto& [k, v] : j.items()) {
    if (k != "K") throw ConfigError("pca." + k + ": unknown key");
    if (!v.is_number_integer()) throw ConfigError("pca.K: expected an integer");
    c.K = v.get<int>();
  }
  return c;
}

void EvalConfig::validate() const {
  if (folds < 2) throw ConfigError("eval.folds: must be >= 2");
  if (seeds.empty()) throw ConfigError("eval.seeds: must not be empty");
  if (pca.K < 1) throw ConfigError("pca.K: must be >= 1");
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  cvae.validate();
  outcome.validate();
  transition.validate();
  gestimate.validate();
}

Json EvalConfig::to_json() const {
  Json j = Json::object();
  j["folds"] = folds;
  j["seeds"] = seeds;
  return j;
}

EvalConfig EvalConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("eval: expected an object");
  EvalConfig c;
  for (auto& [k, v] : j.items()) {
    try {
      if (k == "folds") c.folds = v.get<int>();
      else if (k == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
      else throw ConfigError("eval." + k + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("eval." + k + ": wrong type: " + e.what());
    }
  }
  return c;
}

std::vector<MethodSummary> EvalReport::summarize() const {
  struct Acc {
    std::map<std::uint64_t, std::array<double, 5>> per_seed;  // obs sum, obs n, cf sum, cf n, const obs sum
  };
  std::vector<std::pair<std::pair<std::optional<double>, BaselineSpec>, Acc>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.axis_value, r.spec);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.push_back({key, Acc{}});
      it = std::prev(groups.end());
    }
    auto& a = it->second.per_seed[r.seed];
    if (r.split == Split::observational) {
      a[0] += r.mse;
      a[1] += 1.0;
      a[4] += r.constant_mse;
    } else {
      a[2] += r.mse;
      a[3] += 1.0;
    }
  }
  auto mean_sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::make_pair(m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0);
  };
  std::vector<MethodSummary> out;
  for (const auto& [key, acc] : groups) {
    std::vector<double> obs, cf, gap, cst;
    for (const auto& [seed, a] : acc.per_seed) {
      const double o = a[1] > 0 ? a[0] / a[1] : std::nan("");
      const double c = a[3] > 0 ? a[2] / a[3] : std::nan("");
      obs.push_back(o);
      cf.push_back(c);
      gap.push_back(c - o);
      cst.push_back(a[1] > 0 ? a[4] / a[1] : std::nan(""));
    }
    MethodSummary s;
    s.axis_value = key.first;
    s.spec = key.second;
    std::tie(s.obs_mean, s.obs_sd) = mean_sd(obs);
    std::tie(s.cf_mean, s.cf_sd) = mean_sd(cf);
    std::tie(s.gap_mean, s.gap_sd) = mean_sd(gap);
    s.constant_obs_mean = mean_sd(cst).first;
    out.push_back(s);
  }
  return out;
}

const MethodSummary& EvalReport::find(const std::vector<MethodSummary>& s, const BaselineSpec& spec,
                                      std::optional<double> axis_value) const {
  for (const auto& m : s)
    if (m.spec == spec && m.axis_value == axis_value) return m;
  throw std::out_of_range("no summary for " + spec.name());
}

std::vector<int> assign_folds(const Dataset& ds, int folds, std::uint64_t seed) {
  if (folds < 1) throw ConfigError("eval.folds: must be >= 1");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) keyed.emplace_back(derive_seed(seed, {hash_key(ds[i].id)}), i);
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : ds[a.second].id < ds[b.second].id;
  });
  std::vector<int> fold(ds.size());
  for (std::size_t r = 0; r < keyed.size(); ++r) fold[keyed[r].second] = static_cast<int>(r % static_cast<std::size_t>(folds));
  return fold;
}

std::shared_ptr<const StyleEncoder> FitCache::encoder(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = encoders_.find(key);
  return it == encoders_.end() ? nullptr : it->second;
}
void FitCache::put(const std::string& key, std::shared_ptr<const StyleEncoder> v) {
  std::lock_guard lock(mu_);
  encoders_.emplace(key, std::move(v));
}
std::shared_ptr<const TransitionModel> FitCache::transition(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = transitions_.find(key);
  return it == transitions_.end() ? nullptr : it->second;
}
void FitCache::put(const std::string& key, std::shared_ptr<const TransitionModel> v) {
  std::lock_guard lock(mu_);
  transitions_.emplace(key, std::move(v));
}

std::string vectors_digest(const Dataset& ds) {
  std::string bytes;
  bytes.reserve(ds.size() * static_cast<std::size_t>(ds.T() * ds.d() * 2) * sizeof(double));
  auto append = [&](const Eigen::VectorXd& v) {
    bytes.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  };
  for (const auto& tr : ds.trajectories())
    for (const auto& st : tr.steps) {
      append(st.l);
      append(st.a);
    }
  return sha256_hex(bytes);
}

namespace {

void check_pair(const Dataset& obs, const Dataset& cf) {
  const auto& a = obs.meta();
  const auto& b = cf.meta();
  auto mismatch = [](const std::string& field) { throw ConfigError("eval: meta mismatch between splits in '" + field + "'"); };
  if (a.T != b.T) mismatch("T");
  if (a.d != b.d) mismatch("d");
  if (a.alpha && b.alpha && *a.alpha != *b.alpha) mismatch("alpha");
  if (a.sigma && b.sigma && *a.sigma != *b.sigma) mismatch("sigma");
  if (a.seed && b.seed && *a.seed != *b.seed) mismatch("seed");
  if (!obs.all_in_split(Split::observational)) throw ConfigError("eval: observational file holds counterfactual records");
  if (!cf.all_in_split(Split::counterfactual)) throw ConfigError("eval: counterfactual file holds observational records");
}

double constant_brier(double p, const Dataset& ds) {
  return brier_score(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ds.size()), p), ds);
}

std::vector<std::size_t> where(const std::vector<int>& fold, bool equal, int f) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if ((fold[i] == f) == equal) idx.push_back(i);
  return idx;
}

}  // namespace

EvalReport run_eval(const Dataset& obs, const Dataset& cf, const std::vector<BaselineSpec>& specs,
                    const EvalConfig& cfg, std::optional<double> axis_value, FitCache* cache) {
  cfg.validate();
  check_pair(obs, cf);
  if (specs.empty()) throw ConfigError("eval: no baselines selected");
  FitCache local;
  FitCache& fits = cache ? *cache : local;
  const int F = cfg.folds;
  const std::size_t S = cfg.seeds.size();

  std::vector<std::vector<int>> folds_obs(S), folds_cf(S);
  for (std::size_t s = 0; s < S; ++s) {
    folds_obs[s] = assign_folds(obs, F, cfg.seeds[s]);
    folds_cf[s] = assign_folds(cf, F, cfg.seeds[s]);
  }
  std::set<Embedding> embeddings;
  for (const auto& sp : specs) embeddings.insert(sp.embedding);

  std::vector<std::vector<EvalRow>> cell_rows(S * static_cast<std::size_t>(F));
  parallel_for(cell_rows.size(), cfg.threads, [&](std::size_t cell) {
    const std::size_t s = cell / static_cast<std::size_t>(F);
    const int f = static_cast<int>(cell % static_cast<std::size_t>(F));
    const std::uint64_t seed = cfg.seeds[s];
    const std::uint64_t cell_seed = derive_seed(seed, {static_cast<std::uint64_t>(f)});
    const auto tr_idx = where(folds_obs[s], false, f);
    const auto te_obs_idx = where(folds_obs[s], true, f);
    const auto te_cf_idx = where(folds_cf[s], true, f);
    if (tr_idx.empty() || te_obs_idx.empty() || te_cf_idx.empty())
      throw ConfigError("eval.folds: fold " + std::to_string(f) + " leaves an empty training or held-out set");
    const Dataset train = obs.subset(tr_idx);
    require_observational(train, "eval training fold");
    const Dataset held[2] = {obs.subset(te_obs_idx), cf.subset(te_cf_idx)};
    const std::string vdig = vectors_digest(train);

    Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) y[static_cast<Eigen::Index>(i)] = train[i].y;
    const double ybar = y.mean();
    const double const_mse[2] = {constant_brier(ybar, held[0]), constant_brier(ybar, held[1])};

    std::map<BaselineSpec, std::array<double, 2>> mse;
    for (Embedding emb : embeddings) {
      std::shared_ptr<const StyleEncoder> enc;
      std::string enc_key = "none";
      if (emb == Embedding::pca) {
        const int K = std::min(cfg.pca.K, train.d());
        enc_key = "pca|" + vdig + "|" + std::to_string(K);
        enc = fits.encoder(enc_key);
        if (!enc) {
          enc = std::make_shared<const StyleEncoder>(fit_pca(train, K));
          fits.put(enc_key, enc);
        }
      } else if (emb == Embedding::cvae) {
        CvaeConfig c = cfg.cvae;
        c.seed = derive_seed(cell_seed, {hash_key("cvae")});
        enc_key = "cvae|" + vdig + "|" + dump_json(c.to_json());
        enc = fits.encoder(enc_key);
        if (!enc) {
          enc = std::make_shared<const StyleEncoder>(fit_cvae(train, c));
          fits.put(enc_key, enc);
        }
      }
      const auto act_train = action_features(train, enc.get());
      const FeatureLayout layout{train.T(), static_cast<int>(act_train.front().rows()), train.d(),
                                 cfg.outcome.kind == OutcomeKind::additive};
      OutcomeConfig oc = cfg.outcome;
      oc.seed = derive_seed(cell_seed, {hash_key("outcome"), static_cast<std::uint64_t>(emb)});
      const OutcomeModel outcome = fit_outcome(outcome_design(train, act_train, layout), y, layout, oc);

      bool need_ge = false, need_none = false;
      for (const auto& sp : specs)
        if (sp.embedding == emb) (sp.adjustment == Adjustment::g_estimation ? need_ge : need_none) = true;

      std::shared_ptr<const TransitionModel> transition;
      if (need_ge && train.T() > 1) {
        TransitionConfig tc = cfg.transition;
        tc.seed = derive_seed(cell_seed, {hash_key("transition"), static_cast<std::uint64_t>(emb)});
        const std::string key = "transition|" + vdig + "|" + enc_key + "|" + dump_json(tc.to_json());
        transition = fits.transition(key);
        if (!transition) {
          transition = std::make_shared<const TransitionModel>(fit_transition(train, act_train, tc));
          fits.put(key, transition);
        }
      }
      const L1Pool pool = L1Pool::from_dataset(train);
      const FittedOutcome predictor(outcome);
      std::optional<GaussianTransition> sampler;
      if (transition) sampler.emplace(*transition);
      GEstimateConfig gc = cfg.gestimate;
      gc.seed = derive_seed(cell_seed, {hash_key("gestimate")});

      for (int split = 0; split < 2; ++split) {
        const Dataset& ds = held[split];
        const auto act = action_features(ds, enc.get());
        if (need_none)
          mse[{Adjustment::none, emb}][static_cast<std::size_t>(split)] =
              brier_score(outcome.predict_batch(outcome_design(ds, act, layout)), ds);
        if (need_ge) {
          const auto units = make_units(ds, act, layout);
          Eigen::VectorXd p(static_cast<Eigen::Index>(units.size()));
          for (std::size_t i = 0; i < units.size(); ++i)
            p[static_cast<Eigen::Index>(i)] =
                g_formula_mc(predictor, sampler ? &*sampler : nullptr, pool, units[i], layout, gc).mean;
          mse[{Adjustment::g_estimation, emb}][static_cast<std::size_t>(split)] = brier_score(p, ds);
        }
      }
    }
    auto& rows = cell_rows[cell];
    for (const auto& sp : specs)
      for (int split = 0; split < 2; ++split)
        rows.push_back(EvalRow{axis_value, sp, split == 0 ? Split::observational : Split::counterfactual, f, seed,
                               mse.at(sp)[static_cast<std::size_t>(split)], const_mse[split]});
  });

  EvalReport report;
  // Order: spec, seed, fold, split.
  for (const auto& sp : specs)
    for (std::size_t s = 0; s < S; ++s)
      for (int f = 0; f < F; ++f)
        for (const auto& r : cell_rows[s * static_cast<std::size_t>(F) + static_cast<std::size_t>(f)])
          if (r.spec == sp) report.rows.push_back(r);
  Json js = Json::array();
  for (const auto& sp : specs) js.push_back(sp.name());
  report.provenance = {{"observational_digest", obs.digest()},
                       {"counterfactual_digest", cf.digest()},
                       {"methods", js},
                       {"eval", cfg.to_json()},
                       {"cvae", cfg.cvae.to_json()},
                       {"pca", cfg.pca.to_json()},
                       {"outcome", cfg.outcome.to_json()},
                       {"transition", cfg.transition.to_json()},
                       {"gestimate", cfg.gestimate.to_json()}};
  return report;
}

EvalReport run_baseline(const Dataset& obs, const Dataset& cf, const BaselineSpec& spec, const EvalConfig& cfg) {
  return run_eval(obs, cf, {spec}, cfg);
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::alpha: return "alpha";
    case SweepAxis::sigma: return "sigma";
    case SweepAxis::latent_dim: return "latent_dim";
  }
  return "alpha";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "alpha") return SweepAxis::alpha;
  if (s == "sigma") return SweepAxis::sigma;
  if (s == "latent_dim") return SweepAxis::latent_dim;
  throw ConfigError("sweep.axis: expected 'alpha', 'sigma' or 'latent_dim', got '" + s + "'");
}

EvalReport run_sweep(SweepAxis axis, const std::vector<double>& values, const ScmConfig& base, const EvalConfig& cfg,
                     const std::vector<BaselineSpec>& specs) {
  if (values.empty()) throw ConfigError("sweep.values: must not be empty");
  base.validate();
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("sweep.values: entries must be finite");
    if (axis == SweepAxis::alpha && !(v >= 0.0 && v <= 1.0)) throw ConfigError("sweep.values: alpha must lie in [0, 1]");
    if (axis == SweepAxis::sigma && !(v >= 0.0)) throw ConfigError("sweep.values: sigma must be >= 0");
    if (axis == SweepAxis::latent_dim && (v < 1.0 || v != std::floor(v)))
      throw ConfigError("sweep.values: latent_dim entries must be positive integers");
  }
  EvalReport report;
  report.axis = to_string(axis);
  FitCache cache;
  std::optional<SyntheticData> fixed;
  if (axis == SweepAxis::latent_dim) fixed = generate_synthetic(base);
  Json points = Json::array();
  for (double v : values) {
    EvalConfig c = cfg;
    std::optional<SyntheticData> data;
    if (axis == SweepAxis::latent_dim) {
      c.cvae.K = static_cast<int>(v);
      c.pca.K = static_cast<int>(v);
    } else {
      ScmConfig sc = base;
      (axis == SweepAxis::alpha ? sc.alpha : sc.sigma_noise) = v;
      data = generate_synthetic(sc);
    }
    const SyntheticData& d = data ? *data : *fixed;
    log_info("sweep_point", {{"axis", to_string(axis)}, {"value", v}});
    EvalReport r = run_eval(d.observational, d.counterfactual, specs, c, v, &cache);
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    points.push_back({{"value", v},
                      {"observational_digest", d.observational.digest()},
                      {"counterfactual_digest", d.counterfactual.digest()}});
    if (report.provenance.empty()) report.provenance = r.provenance;
  }
  report.provenance.erase("observational_digest");
  report.provenance.erase("counterfactual_digest");
  report.provenance["axis"] = to_string(axis);
  report.provenance["scm"] = base.to_json();
  report.provenance["points"] = points;
  return report;
}

double brier_score(const Eigen::VectorXd& p, const Dataset& ds) {
  if (p.size() != static_cast<Eigen::Index>(ds.size())) throw DimensionError("one prediction per trajectory is required");
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = p[static_cast<Eigen::Index>(i)] - ds[i].y;
    s += r * r;
  }
  return s / static_cast<double>(ds.size());
}

}  // namespace causalcollab
