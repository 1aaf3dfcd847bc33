#include "causalcollab/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "causalcollab/digest.hpp"
#include "causalcollab/errors.hpp"
#include "causalcollab/log.hpp"

namespace causalcollab {

namespace {

const std::vector<std::string> kSections{"global", "data", "fit", "scm", "cvae", "pca", "outcome",
                                         "transition", "gestimate", "eval", "sweep"};
const std::vector<std::string> kSeededSections{"scm", "cvae", "outcome", "transition", "gestimate"};

std::string method_key(const BaselineSpec& s) { return s.name(); }

BaselineSpec method_from_string(const std::string& name) {
  for (const auto& s : all_baselines())
    if (s.name() == name) return s;
  throw ConfigError("eval.methods: unknown method '" + name + "'");
}

template <class T>
T get_as(const Json& v, const std::string& field) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(field + ": wrong type");
  }
}

Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return Json(text);
  }
}

}  // namespace

std::filesystem::path RunConfig::observational_path() const {
  return observational.empty() ? out / "obs.jsonl" : std::filesystem::path(observational);
}

std::filesystem::path RunConfig::counterfactual_path() const {
  return counterfactual.empty() ? out / "cf.jsonl" : std::filesystem::path(counterfactual);
}

Json RunConfig::to_json() const {
  Json j = Json::object();
  j["global"] = {{"seed", seed}, {"out", out.string()}, {"log_level", log_level}, {"threads", threads}};
  j["data"] = {{"observational", observational.empty() ? Json(nullptr) : Json(observational)},
               {"counterfactual", counterfactual.empty() ? Json(nullptr) : Json(counterfactual)}};
  j["fit"] = {{"embedding", fit_embedding}};
  j["scm"] = scm.to_json();
  j["cvae"] = cvae.to_json();
  j["pca"] = pca.to_json();
  j["outcome"] = outcome.to_json();
  j["transition"] = transition.to_json();
  j["gestimate"] = gestimate.to_json();
  Json ev = eval.to_json();
  Json ms = Json::array();
  for (const auto& m : methods) ms.push_back(method_key(m));
  ev["methods"] = ms;
  j["eval"] = ev;
  j["sweep"] = {{"axis", sweep_axis}, {"values", sweep_values}};
  return j;
}

RunConfig resolve_config(const Json* file, const std::vector<std::pair<std::string, std::string>>& overrides,
                         std::uint64_t default_seed) {
  RunConfig defaults;
  defaults.seed = default_seed;
  Json merged = defaults.to_json();
  merged["scm"]["theta"] = nullptr;
  std::set<std::string> explicit_keys;

  auto assign = [&](const std::string& section, const std::string& key, const Json& value) {
    if (std::find(kSections.begin(), kSections.end(), section) == kSections.end())
      throw ConfigError(section + ": unknown section");
    merged[section][key] = value;
    explicit_keys.insert(section + "." + key);
  };
  if (file) {
    if (!file->is_object()) throw ConfigError("config: expected a JSON object of sections");
    for (auto& [section, body] : file->items()) {
      if (!body.is_object()) throw ConfigError(section + ": expected an object");
      for (auto& [key, value] : body.items()) assign(section, key, value);
    }
  }
  for (const auto& [path, text] : overrides) {
    const auto dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
      throw ConfigError("override '" + path + "': expected section.key=value");
    assign(path.substr(0, dot), path.substr(dot + 1), parse_override_value(text));
  }

  const auto G = get_as<std::uint64_t>(merged["global"]["seed"], "global.seed");
  for (const auto& sec : kSeededSections)
    if (!explicit_keys.count(sec + ".seed")) merged[sec]["seed"] = G;
  if (!explicit_keys.count("eval.seeds")) merged["eval"]["seeds"] = {G, G + 1, G + 2};

  RunConfig c;
  for (auto& [key, v] : merged["global"].items()) {
    if (key == "seed") c.seed = get_as<std::uint64_t>(v, "global.seed");
    else if (key == "out") c.out = get_as<std::string>(v, "global.out");
    else if (key == "log_level") c.log_level = get_as<std::string>(v, "global.log_level");
    else if (key == "threads") c.threads = get_as<int>(v, "global.threads");
    else throw ConfigError("global." + key + ": unknown key");
  }
  for (auto& [key, v] : merged["data"].items()) {
    std::string& dst = key == "observational" ? c.observational : key == "counterfactual" ? c.counterfactual
                                                                                          : throw ConfigError("data." + key + ": unknown key");
    dst = v.is_null() ? std::string() : get_as<std::string>(v, "data." + key);
  }
  for (auto& [key, v] : merged["fit"].items()) {
    if (key != "embedding") throw ConfigError("fit." + key + ": unknown key");
    c.fit_embedding = get_as<std::string>(v, "fit.embedding");
  }
  c.scm = ScmConfig::from_json(merged["scm"]);
  c.cvae = CvaeConfig::from_json(merged["cvae"]);
  c.pca = PcaConfig::from_json(merged["pca"]);
  c.outcome = OutcomeConfig::from_json(merged["outcome"]);
  c.transition = TransitionConfig::from_json(merged["transition"]);
  c.gestimate = GEstimateConfig::from_json(merged["gestimate"]);
  Json ev = merged["eval"];
  if (ev.contains("methods")) {
    const Json ms = ev["methods"];
    ev.erase("methods");
    if (!ms.is_array() || ms.empty()) throw ConfigError("eval.methods: expected a non-empty list of method names");
    c.methods.clear();
    for (const auto& m : ms) c.methods.push_back(method_from_string(get_as<std::string>(m, "eval.methods")));
  }
  c.eval = EvalConfig::from_json(ev);
  for (auto& [key, v] : merged["sweep"].items()) {
    if (key == "axis") c.sweep_axis = get_as<std::string>(v, "sweep.axis");
    else if (key == "values") c.sweep_values = get_as<std::vector<double>>(v, "sweep.values");
    else throw ConfigError("sweep." + key + ": unknown key");
  }

  c.scm.validate();
  if (c.threads < 1) throw ConfigError("global.threads: must be >= 1");
  try {
    log_level_from_string(c.log_level);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("global.log_level: ") + e.what());
  }
  if (c.fit_embedding != "cvae" && c.fit_embedding != "pca" && c.fit_embedding != "none")
    throw ConfigError("fit.embedding: expected 'cvae', 'pca' or 'none'");
  sweep_axis_from_string(c.sweep_axis);
  c.eval.cvae = c.cvae;
  c.eval.pca = c.pca;
  c.eval.outcome = c.outcome;
  c.eval.transition = c.transition;
  c.eval.gestimate = c.gestimate;
  c.eval.threads = c.threads;
  c.gestimate.threads = c.threads;
  c.eval.validate();
  return c;
}

namespace {

Json provenance_block(const Dataset& ds, const std::filesystem::path& path, std::uint64_t seed, const Json& hyper) {
  return {{"dataset_digest", ds.digest()}, {"dataset_path", path.string()}, {"seed", seed}, {"hyper", hyper}};
}

void write_and_report(std::ostream& out, const std::filesystem::path& path, const Json& doc) {
  write_json_file(path, doc);
  out << dump_json({{"wrote", path.string()}, {"digest", file_digest(path)}}) << '\n';
}

Json truth_json(const SimulatorTruth& t) {
  Json j = Json::object();
  j["theta"] = vector_to_json(t.theta);
  j["intercept"] = std::isfinite(t.intercept) ? Json(t.intercept) : Json(nullptr);
  j["style_basis"] = matrix_to_json(t.style_basis);
  j["confounder_direction"] = vector_to_json(t.confounder_direction);
  return j;
}

int cmd_gen(const RunConfig& c, std::ostream& out) {
  const SyntheticData data = generate_synthetic(c.scm);
  const auto obs_path = c.observational_path(), cf_path = c.counterfactual_path();
  save_dataset(data.observational, obs_path);
  save_dataset(data.counterfactual, cf_path);
  Json manifest = Json::object();
  manifest["files"] = {{"observational", {{"path", obs_path.string()}, {"digest", file_digest(obs_path)}}},
                       {"counterfactual", {{"path", cf_path.string()}, {"digest", file_digest(cf_path)}}}};
  manifest["scm"] = c.scm.to_json();
  manifest["truth"] = truth_json(data.truth);
  write_and_report(out, c.out / "manifest.json", manifest);
  return kExitOk;
}

std::filesystem::path encoder_path(const RunConfig& c, const std::string& kind) { return c.out / (kind + ".json"); }

int cmd_fit(const RunConfig& c, std::ostream& out) {
  const auto path = c.observational_path();
  const Dataset obs = load_dataset(path);
  require_observational(obs, "fit");

  const CvaeParams cvae = fit_cvae(obs, c.cvae);
  Json jc = encoder_to_json(cvae);
  jc["provenance"] = provenance_block(obs, path, c.cvae.seed, c.cvae.to_json());
  write_and_report(out, encoder_path(c, "cvae"), jc);

  PcaConfig pc = c.pca;
  if (pc.K > obs.d()) {
    log_warn("pca_latent_clamped", {{"requested", pc.K}, {"used", obs.d()}});
    pc.K = obs.d();
  }
  const PcaParams pca = fit_pca(obs, pc.K);
  Json jp = encoder_to_json(pca);
  jp["provenance"] = provenance_block(obs, path, c.seed, pc.to_json());
  write_and_report(out, encoder_path(c, "pca"), jp);

  std::optional<StyleEncoder> enc;
  Json encoder_ref = nullptr;
  if (c.fit_embedding == "cvae") enc = cvae;
  if (c.fit_embedding == "pca") enc = pca;
  if (enc) encoder_ref = {{"kind", c.fit_embedding}, {"path", encoder_path(c, c.fit_embedding).string()},
                          {"digest", file_digest(encoder_path(c, c.fit_embedding))}};

  OutcomeModel outcome = fit_outcome(obs, enc ? &*enc : nullptr, c.outcome);
  outcome.provenance = provenance_block(obs, path, c.outcome.seed, c.outcome.to_json());
  outcome.provenance["encoder"] = encoder_ref;
  write_and_report(out, c.out / "outcome.json", outcome.to_json());

  if (obs.T() > 1) {
    TransitionModel tr = fit_transition(obs, enc ? &*enc : nullptr, c.transition);
    tr.provenance = provenance_block(obs, path, c.transition.seed, c.transition.to_json());
    tr.provenance["encoder"] = encoder_ref;
    write_and_report(out, c.out / "transition.json", tr.to_json());
  }
  return kExitOk;
}

void require_match(const std::string& what, const std::string& expected, const std::string& actual) {
  if (expected != actual)
    throw ProvenanceError(what + ": digest mismatch (recorded " + expected + ", found " + actual + ")");
}

std::optional<StyleEncoder> load_recorded_encoder(const Json& prov) {
  const Json& ref = prov.at("encoder");
  if (ref.is_null()) return std::nullopt;
  const std::filesystem::path p = ref.at("path").get<std::string>();
  require_match("encoder " + p.string(), ref.at("digest").get<std::string>(), file_digest(p));
  return encoder_from_json(read_json_file(p));
}

int cmd_estimate(const RunConfig& c, std::ostream& out) {
  const auto path = c.observational_path();
  const Dataset obs = load_dataset(path);
  require_observational(obs, "estimate");
  const auto outcome_path = c.out / "outcome.json";
  const OutcomeModel outcome = OutcomeModel::from_json(read_json_file(outcome_path));
  require_match("outcome model vs " + path.string(), outcome.provenance.at("dataset_digest").get<std::string>(), obs.digest());
  const std::optional<StyleEncoder> enc = load_recorded_encoder(outcome.provenance);

  Json digests = {{"outcome", file_digest(outcome_path)}};
  std::optional<TransitionModel> tr;
  if (obs.T() > 1) {
    const auto tpath = c.out / "transition.json";
    tr = TransitionModel::from_json(read_json_file(tpath));
    require_match("transition model vs " + path.string(), tr->provenance.at("dataset_digest").get<std::string>(), obs.digest());
    if (dump_json(tr->provenance.at("encoder")) != dump_json(outcome.provenance.at("encoder")))
      throw ProvenanceError("transition and outcome models were fitted with different encoders");
    digests["transition"] = file_digest(tpath);
  }
  if (enc) digests["encoder"] = outcome.provenance.at("encoder").at("digest");

  const auto act = action_features(obs, enc ? &*enc : nullptr);
  if (static_cast<int>(act.front().rows()) != outcome.layout.act_dim) throw DimensionError("encoder and outcome model disagree on K");
  const auto units = make_units(obs, act, outcome.layout);
  const L1Pool pool = L1Pool::from_dataset(obs);
  const FittedOutcome predictor(outcome);
  std::optional<GaussianTransition> sampler;
  if (tr) sampler.emplace(*tr);
  const IseEstimate est = ise_estimate(predictor, sampler ? &*sampler : nullptr, pool, units, outcome.layout, c.gestimate);
  Json doc = est.to_json();
  doc["embedding"] = enc ? Json(encoder_kind(*enc)) : Json("none");
  doc["dataset_digest"] = obs.digest();
  doc["dataset_path"] = path.string();
  doc["model_digests"] = digests;
  write_and_report(out, c.out / "estimate.json", doc);
  return kExitOk;
}

void write_report(std::ostream& out, const RunConfig& c, const EvalReport& report, const std::string& stem, bool svg) {
  const auto csv = c.out / (stem + ".csv");
  write_text_file(csv, results_csv(report));
  out << dump_json({{"wrote", csv.string()}, {"digest", file_digest(csv)}}) << '\n';
  write_and_report(out, c.out / (stem + ".json"), summary_json(report));
  if (svg) {
    const auto p = c.out / (stem + ".svg");
    write_text_file(p, sweep_svg(report));
    out << dump_json({{"wrote", p.string()}, {"digest", file_digest(p)}}) << '\n';
  }
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const Dataset obs = load_dataset(c.observational_path());
  const Dataset cf = load_dataset(c.counterfactual_path());
  EvalReport report = run_eval(obs, cf, c.methods, c.eval);
  report.provenance["observational_path"] = c.observational_path().string();
  report.provenance["counterfactual_path"] = c.counterfactual_path().string();
  write_report(out, c, report, "eval", false);
  return kExitOk;
}

int cmd_sweep(const RunConfig& c, std::ostream& out) {
  const SweepAxis axis = sweep_axis_from_string(c.sweep_axis);
  const EvalReport report = run_sweep(axis, c.sweep_values, c.scm, c.eval, c.methods);
  write_report(out, c, report, "sweep_" + c.sweep_axis, true);
  return kExitOk;
}

int cmd_verify(const RunConfig& c, std::ostream& out) {
  Json checks = Json::array();
  std::vector<std::string> failures;
  auto check = [&](const std::string& what, const std::string& expected, const std::string& actual) {
    const bool ok = expected == actual;
    checks.push_back({{"check", what}, {"ok", ok}});
    if (!ok) failures.push_back(what);
  };
  auto exists = [](const std::filesystem::path& p) { return std::filesystem::exists(p); };

  const auto manifest = c.out / "manifest.json";
  if (exists(manifest)) {
    const Json m = read_json_file(manifest);
    for (auto& [name, f] : m.at("files").items()) {
      const std::filesystem::path p = f.at("path").get<std::string>();
      check("manifest:" + name, f.at("digest").get<std::string>(), exists(p) ? file_digest(p) : "missing");
    }
  }
  for (const char* name : {"cvae", "pca", "outcome", "transition"}) {
    const auto p = c.out / (std::string(name) + ".json");
    if (!exists(p)) continue;
    const Json m = read_json_file(p);
    const Json& prov = m.at("provenance");
    const std::filesystem::path dp = prov.at("dataset_path").get<std::string>();
    check(std::string(name) + ":dataset", prov.at("dataset_digest").get<std::string>(),
          exists(dp) ? load_dataset(dp).digest() : "missing");
    if (prov.contains("encoder") && !prov.at("encoder").is_null()) {
      const std::filesystem::path ep = prov.at("encoder").at("path").get<std::string>();
      check(std::string(name) + ":encoder", prov.at("encoder").at("digest").get<std::string>(),
            exists(ep) ? file_digest(ep) : "missing");
    }
  }
  const auto est = c.out / "estimate.json";
  if (exists(est)) {
    const Json e = read_json_file(est);
    for (auto& [name, dg] : e.at("model_digests").items()) {
      const auto p = name == "encoder" ? c.out / (e.at("embedding").get<std::string>() + ".json") : c.out / (name + ".json");
      check("estimate:" + name, dg.get<std::string>(), exists(p) ? file_digest(p) : "missing");
    }
    const std::filesystem::path dp = e.at("dataset_path").get<std::string>();
    check("estimate:dataset", e.at("dataset_digest").get<std::string>(), exists(dp) ? load_dataset(dp).digest() : "missing");
  }
  const auto ev = c.out / "eval.json";
  if (exists(ev)) {
    const Json e = read_json_file(ev);
    const Json& prov = e.at("provenance");
    for (const char* split : {"observational", "counterfactual"}) {
      const std::filesystem::path dp = prov.at(std::string(split) + "_path").get<std::string>();
      check(std::string("eval:") + split, prov.at(std::string(split) + "_digest").get<std::string>(),
            exists(dp) ? load_dataset(dp).digest() : "missing");
    }
  }
  out << dump_json_pretty({{"checks", checks}, {"ok", failures.empty()}}) << '\n';
  if (!failures.empty()) {
    std::string joined;
    for (const auto& f : failures) joined += (joined.empty() ? "" : ", ") + f;
    throw ProvenanceError("verification failed: " + joined);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"causalcollab: incremental stylistic effects of sequential vector-valued treatments"};
  app.require_subcommand(1);
  app.allow_extras();
  std::string config_path, out_dir, log_level;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out", out_dir, "output directory (global.out)");
  app.add_option("--seed", seed, "global seed (global.seed)");
  app.add_option("--threads", threads, "worker cap; results do not depend on it");
  app.add_option("--log-level", log_level, "debug, info, warn, error or off");
  app.add_flag("--print-config", print_config, "print the resolved config and exit");

  std::optional<double> alpha, sigma;
  std::optional<int> n, T, d;
  auto* gen = app.add_subcommand("gen", "generate paired observational/counterfactual datasets");
  gen->add_option("--alpha", alpha);
  gen->add_option("--sigma", sigma);
  gen->add_option("--n", n);
  gen->add_option("--T", T);
  gen->add_option("--d", d);
  std::vector<CLI::App*> subs{gen,
                              app.add_subcommand("fit", "fit style encoders, outcome and transition models"),
                              app.add_subcommand("estimate", "estimate the ISE with the fitted models"),
                              app.add_subcommand("eval", "cross-validated baseline comparison"),
                              app.add_subcommand("sweep", "evaluation across alpha, sigma or latent_dim"),
                              app.add_subcommand("verify", "re-check the digest chain of the output directory"),
                              app.add_subcommand("print-config", "print the resolved config")};
  for (auto* s : subs) {
    s->allow_extras();
    s->fallthrough();
  }

  std::vector<std::string> argv_store{"causalcollab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    std::ostringstream err;
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    std::cerr << err.str();
    return kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!log_level.empty()) set_log_level(log_level_from_string(log_level));
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& extra : app.remaining(true)) {
      if (extra.rfind("--", 0) != 0 || extra.find('=') == std::string::npos)
        throw ConfigError("unrecognized argument '" + extra + "' (overrides take the form --section.key=value)");
      const auto eq = extra.find('=');
      overrides.emplace_back(extra.substr(2, eq - 2), extra.substr(eq + 1));
    }
    auto shorthand = [&](const char* key, const auto& v) {
      if (v) overrides.emplace_back(key, dump_json(Json(*v)));
    };
    shorthand("scm.alpha", alpha);
    shorthand("scm.sigma", sigma);
    shorthand("scm.n", n);
    shorthand("scm.T", T);
    shorthand("scm.d", d);
    shorthand("global.seed", seed);
    shorthand("global.threads", threads);
    if (!out_dir.empty()) overrides.emplace_back("global.out", dump_json(Json(out_dir)));
    if (!log_level.empty()) overrides.emplace_back("global.log_level", dump_json(Json(log_level)));

    std::uint64_t default_seed = 7;
    if (const char* env = std::getenv("CAUSALCOLLAB_SEED")) {
      try {
        std::size_t used = 0;
        default_seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("CAUSALCOLLAB_SEED: expected an unsigned integer, got '") + env + "'");
      }
    }
    Json file;
    if (!config_path.empty()) {
      try {
        file = read_json_file(config_path);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + config_path + ": " + e.what());
      }
    }
    const RunConfig cfg = resolve_config(config_path.empty() ? nullptr : &file, overrides, default_seed);
    const std::string name = sub->get_name();
    if (print_config || name == "print-config") {
      out << dump_json_pretty(cfg.to_json()) << '\n';
      return kExitOk;
    }
    set_log_level(log_level_from_string(cfg.log_level));
    log_info("command", {{"name", name}});
    if (name == "gen") return cmd_gen(cfg, out);
    if (name == "fit") return cmd_fit(cfg, out);
    if (name == "estimate") return cmd_estimate(cfg, out);
    if (name == "eval") return cmd_eval(cfg, out);
    if (name == "sweep") return cmd_sweep(cfg, out);
    if (name == "verify") return cmd_verify(cfg, out);
    throw ConfigError("unknown command '" + name + "'");
  } catch (const ConfigError& e) {
    log_event(LogLevel::error, "config_error", {{"message", e.what()}});
    return kExitConfig;
  } catch (const IoError& e) {
    log_event(LogLevel::error, "io_error", {{"message", e.what()}});
    return kExitIo;
  } catch (const SchemaError& e) {
    log_event(LogLevel::error, "schema_error", {{"message", e.what()}, {"line", e.line()}, {"field", e.field()}});
    return kExitIo;
  } catch (const DimensionError& e) {
    log_event(LogLevel::error, "dimension_error", {{"message", e.what()}});
    return kExitIo;
  } catch (const NumericalError& e) {
    log_event(LogLevel::error, "numerical_error", {{"message", e.what()}});
    return kExitNumerical;
  } catch (const PositivityError& e) {
    log_event(LogLevel::error, "positivity_error", {{"message", e.what()}});
    return kExitNumerical;
  } catch (const ProvenanceError& e) {
    log_event(LogLevel::error, "provenance_error", {{"message", e.what()}});
    return kExitProvenance;
  } catch (const LeakageError& e) {
    log_event(LogLevel::error, "leakage_error", {{"message", e.what()}});
    return kExitProvenance;
  } catch (const nlohmann::json::exception& e) {
    log_event(LogLevel::error, "io_error", {{"message", std::string("malformed JSON document: ") + e.what()}});
    return kExitIo;
  } catch (const std::exception& e) {
    log_event(LogLevel::error, "failure", {{"message", e.what()}});
    return kExitFailure;
  }
}

}  // namespace causalcollab
