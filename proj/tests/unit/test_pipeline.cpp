#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stigma/common/encoding.hpp"
#include "stigma/common/error.hpp"
#include "stigma/pipeline/config.hpp"
#include "stigma/pipeline/stages.hpp"

using namespace stigma;
using namespace stigma::pipeline;
namespace fs = std::filesystem;

namespace {

const char* kSmall[] = {
    "synth.n_workers=60",        "synth.n_comments=400",    "synth.n_wild_comments=120",
    "model.epochs=3",            "model.joint_epochs=1",    "model.deep_widths=16,16",
    "jury.n_juries=200",         "jury.thresholds=0.5,0.9", "model.variants=content,full",
};

const char* kChain[] = {"synth", "clean",      "split",      "featurize", "train", "eval",
                        "jury-sweep", "wild-label", "dla", "agreement", "report"};

RunContext small_context(const fs::path& out, std::size_t threads, std::uint64_t seed = 3) {
  RunContext ctx;
  for (const char* s : kSmall) ctx.config.set(s);
  ctx.config.set("run.seed", std::to_string(seed));
  ctx.out = out;
  ctx.threads = threads;
  fs::remove_all(out);
  return ctx;
}

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / ("stigma_pipeline_" + name);
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    out[e.path().filename().string()] = read_text_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("config defaults, overrides and errors") {
  auto c = Config::defaults();
  CHECK(c.get_size("jury.jury_size") == 12);
  CHECK(c.get_double("model.lr") == 1e-5);
  CHECK(c.get_size_list("model.deep_widths") == std::vector<std::size_t>{768, 768, 768});
  CHECK(c.get_list("jury.thresholds").empty());
  c.set("jury.n_juries = 50");
  CHECK(c.get_size("jury.n_juries") == 50);
  CHECK_THROWS_AS(c.set("jury.bogus=1"), ConfigError);
  CHECK_THROWS_AS(c.set("nosection=1"), ConfigError);
  CHECK_THROWS_AS(c.set("no equals sign"), ConfigError);
  c.set("model.lr=fast");
  CHECK_THROWS_AS(c.get_double("model.lr"), ConfigError);
  c.set("model.epochs=-3");
  CHECK_THROWS_AS(c.get_size("model.epochs"), ConfigError);

  c.merge_ini("[run]\nseed = 17\n[split]\ntrain_frac=0.75\n", "inline");
  CHECK(c.master_seed() == 17);
  CHECK(c.get_double("split.train_frac") == 0.75);
  CHECK_THROWS_AS(c.merge_ini("[split]\nmystery=1\n", "inline"), ConfigError);
  CHECK_THROWS_AS(Config::load("/nonexistent/stigma.ini"), ConfigError);

  auto round = Config::defaults();
  round.merge_ini(c.to_ini(), "round trip");
  CHECK(round.to_ini() == c.to_ini());
}

TEST_CASE("stage names") {
  CHECK(is_stage("train"));
  CHECK(is_stage("jury-sweep"));
  CHECK_FALSE(is_stage("bogus"));
  RunContext ctx;
  ctx.out = scratch("unknown");
  CHECK_THROWS(run_stage("bogus", ctx));
}

TEST_CASE("missing input names the path") {
  auto ctx = small_context(scratch("missing"), 1);
  fs::create_directories(ctx.out);
  try {
    run_stage("split", ctx);
    FAIL("split ran without inputs");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("workers_clean.csv") != std::string::npos);
  }
  ctx.config.set("paths.workers", "/nonexistent/workers.csv");
  CHECK_THROWS_WITH_AS(run_stage("clean", ctx), doctest::Contains("/nonexistent/workers.csv"),
                       IoError);
}

TEST_CASE("small synthetic pipeline is deterministic across thread counts") {
  const auto a = small_context(scratch("a"), 1);
  const auto b = small_context(scratch("b"), 4);
  for (const char* stage : kChain) {
    run_stage(stage, a);
    run_stage(stage, b);
  }
  const auto bytes_a = directory_bytes(a.out);
  const auto bytes_b = directory_bytes(b.out);
  CHECK(bytes_a.size() == bytes_b.size());
  for (const auto& [name, content] : bytes_a) {
    INFO(name);
    REQUIRE(bytes_b.count(name) == 1);
    CHECK(bytes_b.at(name) == content);
  }

  const auto eval = bytes_a.at("eval.csv");
  CHECK(eval.rfind("model,accuracy,f1,auc\n", 0) == 0);
  CHECK(eval.find("dcn_content+group+person") != std::string::npos);

  const auto report = nlohmann::json::parse(bytes_a.at("report.json"));
  CHECK(report.at("chain_ok").get<bool>());

  const auto manifest = nlohmann::json::parse(bytes_a.at("manifest_train.json"));
  CHECK(manifest.at("stage") == "train");
  CHECK(manifest.at("master_seed") == 3);
  CHECK(manifest.at("outputs").size() >= 2);

  // A different seed changes the artifacts.
  auto c = small_context(scratch("c"), 1, 4);
  run_stage("synth", c);
  CHECK(read_text_file(c.out / "annotations.csv") != bytes_a.at("annotations.csv"));

  // Tampering with an upstream artifact breaks the recorded hash chain.
  {
    std::ofstream(a.out / "split.csv", std::ios::app) << "tampered,train\n";
  }
  run_stage("report", a);
  const auto tampered = nlohmann::json::parse(read_text_file(a.out / "report.json"));
  CHECK_FALSE(tampered.at("chain_ok").get<bool>());

  for (const auto& dir : {a.out, b.out, c.out}) fs::remove_all(dir);
}
