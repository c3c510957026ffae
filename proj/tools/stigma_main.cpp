#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "stigma/common/error.hpp"
#include "stigma/pipeline/config.hpp"
#include "stigma/pipeline/stages.hpp"
#include "stigma/version.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kDataError = 1;
constexpr int kConfigError = 2;

const char* stage_help(std::string_view stage) {
  if (stage == "filter-corpus") return "Keyword/exclusion filter and random sample of a comment JSONL";
  if (stage == "disambiguate") return "Rater agreement and per-keyword retention for ambiguous terms";
  if (stage == "clean") return "Quality-control funnel over workers and annotations";
  if (stage == "split") return "Comment-level train/test split";
  if (stage == "featurize") return "Unigram and dictionary features; embedding table check";
  if (stage == "train") return "Train the annotator-level DCN variants";
  if (stage == "eval") return "Test-split accuracy, F1 and AUC for baselines and DCNs";
  if (stage == "jury-sweep") return "Percent stigmatizing by jury composition and verdict threshold";
  if (stage == "wild-label") return "Label comments with single-stratum juries";
  if (stage == "dla") return "Differential language analysis of agree/disagree sets";
  if (stage == "agreement") return "Krippendorff's alpha, label-rate t-tests, demographics";
  if (stage == "synth") return "Generate a synthetic annotator population and embeddings";
  return "Check the manifest hash chain and summarize artifacts";
}

// First bare word on the command line that is not an option value.
std::string first_word(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == "--config" || a == "--out" || a == "--threads" || a == "--seed" || a == "--set") {
      ++i;
    } else if (!a.starts_with("-")) {
      return std::string(a);
    }
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annotator-level stigma classification pipeline"};
  app.set_version_flag("--version", stigma::kVersion);
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool quiet = false;
  bool print_config = false;
  app.add_option("--config", config_path,
                 std::string("INI config file (default: $") + stigma::pipeline::kConfigEnv + ")");
  app.add_option("--out", out_dir, "Artifact directory")->capture_default_str();
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Master seed (overrides run.seed)");
  app.add_option("--set", overrides, "Override section.key=value (repeatable)");
  app.add_flag("--quiet", quiet, "No progress output");
  app.add_flag("--print-config", print_config, "Print the effective config and exit");

  for (auto stage : stigma::pipeline::kStages) {
    app.add_subcommand(std::string(stage), stage_help(stage));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto word = first_word(argc, argv);
    if (!word.empty() && !stigma::pipeline::is_stage(word)) {
      std::cerr << "error: unknown subcommand '" << word << "'\n\n" << app.help();
    } else {
      std::cerr << "error: " << e.what() << "\n\n" << app.help();
    }
    return kConfigError;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  stigma::pipeline::RunContext ctx;
  try {
    if (config_path.empty()) {
      if (const char* env = std::getenv(stigma::pipeline::kConfigEnv); env && *env) {
        config_path = env;
      }
    }
    ctx.config = config_path.empty() ? stigma::pipeline::Config::defaults()
                                     : stigma::pipeline::Config::load(config_path);
    for (const auto& o : overrides) ctx.config.set(o);
    if (seed) ctx.config.set("run.seed", std::to_string(*seed));
    if (print_config) {
      std::cout << ctx.config.to_ini();
      return kOk;
    }
    ctx.out = out_dir;
    ctx.threads = threads;
    ctx.log = quiet ? nullptr : &std::cerr;
    stigma::pipeline::run_stage(stage, ctx);
  } catch (const stigma::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}
