#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "causalcollab/cli.hpp"
#include "causalcollab/digest.hpp"
#include "causalcollab/log.hpp"
#include "doctest.h"

using namespace causalcollab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("causalcollab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string out;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "--log-level=off");
  std::ostringstream os;
  const int code = run_cli(args, os);
  set_log_level(LogLevel::error);
  return {code, os.str()};
}

// Small enough to keep the full gen/fit/estimate chain under a second.
std::vector<std::string> small(const fs::path& dir) {
  return {"--out", dir.string(), "--scm.n=80", "--scm.d=6", "--scm.T=2", "--cvae.K=2", "--cvae.epochs=3",
          "--pca.K=2", "--transition.epochs=3", "--transition.hidden=8", "--gestimate.n1=6", "--gestimate.n2=6"};
}

std::vector<std::string> with(std::vector<std::string> a, std::initializer_list<std::string> more) {
  a.insert(a.begin(), more.begin(), more.end());
  return a;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("gen is reproducible") {
  const auto a = fresh_dir("gen_a");
  REQUIRE(cli(with(small(a), {"gen"})).code == 0);
  const std::string first = slurp(a / "manifest.json");
  const std::string obs = slurp(a / "obs.jsonl");
  REQUIRE(cli(with(small(a), {"gen"})).code == 0);
  CHECK(slurp(a / "manifest.json") == first);
  CHECK(slurp(a / "obs.jsonl") == obs);
  const Json m = read_json_file(a / "manifest.json");
  CHECK(m.at("files").at("observational").at("digest") == file_digest(a / "obs.jsonl"));
  CHECK(m.at("scm").at("seed") == 7);
}

TEST_CASE("configuration errors exit 2") {
  const auto d = fresh_dir("cfg");
  CHECK(cli({"--out", d.string(), "gen", "--alpha", "1.5"}).code == kExitConfig);
  CHECK(cli({"--out", d.string(), "gen", "--scm.alpha=-0.1"}).code == kExitConfig);
  CHECK(cli({"--out", d.string(), "gen", "--nosuch.key=1"}).code == kExitConfig);
  CHECK(cli({"--out", d.string(), "gen", "--scm.nosuch=1"}).code == kExitConfig);
  CHECK(cli({"--out", d.string(), "gen", "stray"}).code == kExitConfig);
  CHECK(cli({"--out", d.string(), "fit", "--fit.embedding=lda"}).code == kExitConfig);
  CHECK(cli({"--out", d.string(), "--threads", "0", "gen"}).code == kExitConfig);
  CHECK(cli({"--out", d.string(), "--config", (d / "missing.json").string(), "gen"}).code != kExitOk);
  CHECK(cli({"--out", d.string()}).code == kExitConfig);
  CHECK(fs::is_empty(d));
}

TEST_CASE("missing inputs exit 3") {
  const auto d = fresh_dir("io");
  CHECK(cli({"--out", d.string(), "fit"}).code == kExitIo);
  CHECK(cli({"--out", d.string(), "eval"}).code == kExitIo);
}

TEST_CASE("print-config resolves seed inheritance without side effects") {
  const auto d = fresh_dir("print") / "not_created";
  const Run r = cli({"--out", d.string(), "--seed", "11", "--cvae.seed=3", "print-config"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j.at("global").at("seed") == 11);
  CHECK(j.at("scm").at("seed") == 11);
  CHECK(j.at("transition").at("seed") == 11);
  CHECK(j.at("cvae").at("seed") == 3);
  CHECK(j.at("eval").at("seeds") == Json::array({11, 12, 13}));
  CHECK_FALSE(fs::exists(d));

  const Run flag = cli({"--out", d.string(), "--print-config", "gen", "--alpha", "0.25"});
  REQUIRE(flag.code == 0);
  CHECK(Json::parse(flag.out).at("scm").at("alpha") == 0.25);
  CHECK_FALSE(fs::exists(d));
}

TEST_CASE("config file sections sit between defaults and overrides") {
  const auto d = fresh_dir("file");
  {
    std::ofstream f(d / "c.json");
    f << R"({"global": {"seed": 5}, "scm": {"alpha": 0.4, "n": 33}})";
  }
  const Run r = cli({"--config", (d / "c.json").string(), "--scm.n=44", "print-config"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j.at("scm").at("alpha") == 0.4);
  CHECK(j.at("scm").at("n") == 44);
  CHECK(j.at("scm").at("seed") == 5);
  {
    std::ofstream f(d / "bad.json");
    f << R"({"scm": {"alpha": "high"}})";
  }
  CHECK(cli({"--config", (d / "bad.json").string(), "print-config"}).code == kExitConfig);
}

TEST_CASE("gen, fit, estimate and verify chain with provenance") {
  const auto d = fresh_dir("chain");
  const auto base = small(d);
  REQUIRE(cli(with(base, {"gen"})).code == 0);
  REQUIRE(cli(with(base, {"fit"})).code == 0);
  for (const char* f : {"cvae.json", "pca.json", "outcome.json", "transition.json"}) CHECK(fs::exists(d / f));
  const std::string outcome = slurp(d / "outcome.json"), transition = slurp(d / "transition.json");

  REQUIRE(cli(with(base, {"estimate"})).code == 0);
  const std::string est1 = slurp(d / "estimate.json");
  const Json e = Json::parse(est1);
  CHECK(e.at("value").size() == 2);
  CHECK(e.at("embedding") == "cvae");
  CHECK(e.at("model_digests").at("outcome") == file_digest(d / "outcome.json"));

  SUBCASE("refitting and re-estimating are deterministic across thread counts") {
    REQUIRE(cli(with(base, {"--threads", "3", "fit"})).code == 0);
    CHECK(slurp(d / "outcome.json") == outcome);
    CHECK(slurp(d / "transition.json") == transition);
    REQUIRE(cli(with(base, {"--threads", "3", "estimate"})).code == 0);
    CHECK(slurp(d / "estimate.json") == est1);
    const Run v = cli(with(base, {"verify"}));
    CHECK(v.code == 0);
    CHECK(Json::parse(v.out).at("ok") == true);
  }

  SUBCASE("a flat outcome model yields zero effect") {
    Json m = read_json_file(d / "outcome.json");
    for (auto& w : m.at("w")) w = 0.0;
    m["b"] = 0.3;
    std::ofstream(d / "outcome.json") << dump_json(m);
    REQUIRE(cli(with(base, {"estimate"})).code == 0);
    for (const auto& v : read_json_file(d / "estimate.json").at("value")) CHECK(v.get<double>() == 0.0);
  }

  SUBCASE("an edited dataset is refused") {
    std::string obs = slurp(d / "obs.jsonl");
    const auto pos = obs.find("\"y\":");
    REQUIRE(pos != std::string::npos);
    char& c = obs[pos + 4];
    c = c == '0' ? '1' : '0';
    std::ofstream(d / "obs.jsonl", std::ios::binary) << obs;
    CHECK(cli(with(base, {"estimate"})).code == kExitProvenance);
    const Run v = cli(with(base, {"verify"}));
    CHECK(v.code == kExitProvenance);
    CHECK(Json::parse(v.out).at("ok") == false);
  }

  SUBCASE("an edited encoder is refused") {
    std::ofstream(d / "cvae.json", std::ios::app) << "\n";
    CHECK(cli(with(base, {"estimate"})).code == kExitProvenance);
  }

  SUBCASE("models fitted on another dataset are refused") {
    REQUIRE(cli(with(base, {"--scm.alpha=0.3", "gen"})).code == 0);
    CHECK(cli(with(base, {"estimate"})).code == kExitProvenance);
  }
}

TEST_CASE("estimate without an embedding") {
  const auto d = fresh_dir("none");
  const auto base = with(small(d), {"--fit.embedding=none"});
  REQUIRE(cli(with(base, {"gen"})).code == 0);
  REQUIRE(cli(with(base, {"fit"})).code == 0);
  REQUIRE(cli(with(base, {"estimate"})).code == 0);
  const Json e = read_json_file(d / "estimate.json");
  CHECK(e.at("embedding") == "none");
  CHECK(e.at("value").size() == 6);
}

TEST_CASE("eval and sweep write their reports") {
  const auto d = fresh_dir("eval");
  const auto base = with(small(d), {"--eval.folds=2", "--eval.seeds=[1]", "--eval.methods=[\"No Adjustment\",\"+PCA\"]"});
  REQUIRE(cli(with(base, {"gen"})).code == 0);
  REQUIRE(cli(with(base, {"eval"})).code == 0);
  const Json j = read_json_file(d / "eval.json");
  CHECK(j.at("points").at(0).at("methods").size() == 2);
  CHECK(cli(with(base, {"verify"})).code == 0);
  REQUIRE(cli(with(base, {"--sweep.axis=sigma", "--sweep.values=[0.5,1.0]", "sweep"})).code == 0);
  CHECK(fs::exists(d / "sweep_sigma.csv"));
  CHECK(fs::exists(d / "sweep_sigma.svg"));
  CHECK(read_json_file(d / "sweep_sigma.json").at("points").size() == 2);
}

TEST_CASE("installed binary honours the exit-code contract") {
  const fs::path exe = CAUSALCOLLAB_CLI_PATH;
  REQUIRE(fs::exists(exe));
  const auto d = fresh_dir("binary");
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + exe.string() + "\" --log-level=off --out \"" + d.string() + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  CHECK(run("gen --n 20 --d 4") == 0);
  CHECK(fs::exists(d / "obs.jsonl"));
  CHECK(run("gen --alpha 1.5") == 2);
  CHECK(run("--help") == 0);
}
