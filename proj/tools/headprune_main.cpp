#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "headprune/common.hpp"
#include "headprune/runner.hpp"

using namespace headprune;

namespace {

// exit codes: 0 success, 2 invalid spec/arguments, 3 missing artifact,
// 4 numeric failure, 1 anything else
constexpr int kOk = 0;
constexpr int kUnexpected = 1;
constexpr int kInvalid = 2;
constexpr int kMissing = 3;
constexpr int kNumeric = 4;

void print_record(const RunRecord& record, const std::string& out_dir) {
  std::printf("%s finished in %.0f ms (spec %s, seed %llu)\n", record.command.c_str(),
              record.wall_ms, record.spec_hash.c_str(),
              static_cast<unsigned long long>(record.seed));
  const Json& payload = record.payload;
  if (record.command == "eval") {
    std::printf("  %s %s: precision=%.6f recall=%.6f f1=%.6f support=%llu\n",
                payload.at("language").get<std::string>().c_str(),
                payload.at("split").get<std::string>().c_str(),
                payload.at("precision").get<double>(), payload.at("recall").get<double>(),
                payload.at("f1").get<double>(),
                static_cast<unsigned long long>(payload.at("support").get<size_t>()));
  }
  if (payload.contains("sweep")) {
    const Json& sweep = payload.at("sweep");
    std::printf("  best k=%llu score=%.6f (%s)\n",
                static_cast<unsigned long long>(sweep.at("best_k").get<size_t>()),
                sweep.at("best_score").get<double>(),
                sweep.at("ranking_provenance").get<std::string>().c_str());
  }
  if (payload.contains("winner")) {
    std::printf("  winner=%s total_trainings=%llu\n",
                payload.at("winner").get<std::string>().c_str(),
                static_cast<unsigned long long>(payload.at("total_trainings").get<size_t>()));
  }
  for (const std::string& out : record.outputs) {
    std::printf("  wrote %s/%s\n", out_dir.c_str(), out.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-ranked attention-head pruning for cross-lingual tagging"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);

  std::string spec_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;
  bool force = false;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate the synthetic language corpora"},
      {"train", "fine-tune on the configured training split and save a checkpoint"},
      {"rank", "fine-tune per source language and rank head importance"},
      {"correlate", "cross-language rank correlation table of stored rankings"},
      {"sweep", "prune-and-retrain sweep over the lowest-ranked heads"},
      {"baseline-max", "sweep that prunes the highest-ranked heads first"},
      {"baseline-rand", "sweep over a seeded random head order"},
      {"multi-source", "merge or select rankings across source languages, then sweep"},
      {"subsample-study", "target train-size study with and without pruning"},
      {"report", "render score tables or correlation matrices from stored results"},
      {"eval", "evaluate the stored train checkpoint on one language split"},
  };
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--spec", spec_path, "run spec JSON file")->required();
    sub->add_option("--seed", seed, "override the spec seed");
    sub->add_option("--out", out_dir, "artifact directory")->capture_default_str();
    sub->add_flag("--force", force, "rerun past the idempotence guard");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;  // --help/--version exit clean
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunnerOptions options;
    options.out_dir = out_dir;
    options.seed_override = seed;
    options.force = force;
    Runner runner(load_run_spec(spec_path), std::move(options));
    print_record(runner.run(command), out_dir);
    return kOk;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissing;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
}
