#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "headprune/artifact.hpp"
#include "headprune/corpus.hpp"
#include "headprune/protocol.hpp"

namespace headprune {

// One synthetic language in the run's roster. A language without its own
// grammar_seed shares the run-wide grammar (same latent tag skeletons); a
// language with one is drawn from an unrelated grammar and serves as the
// independent control in correlation studies.
struct LanguageSpec {
  LanguageProfile profile;
  std::optional<uint64_t> grammar_seed;
};

struct ReportSpec {
  std::string kind = "scores";      // "scores" | "correlation"
  std::string format = "markdown";  // "markdown" | "csv"
  std::string group_by = "target";  // "target" | "source" | "k"
};

struct EvalSpec {
  std::string language;  // empty: the experiment's target language
  std::string split = "test";
};

// A full run description: the language roster plus the core experiment spec
// and the per-command knobs. This is what a spec file on disk parses into.
struct RunSpec {
  std::vector<LanguageSpec> languages;
  ExperimentSpec experiment;
  std::string ranking_language;        // empty: first source language
  uint64_t random_sample_seed = 42;    // head-order seed for baseline-rand
  std::string merge_heuristic = "md";  // "md" | "sd" | "ec" for multi-source
  std::vector<int> subsample_tenths;   // default 1..9
  ReportSpec report;
  EvalSpec eval;

  void validate() const;  // roster/knob checks; experiment.validate() runs too
  std::string resolved_ranking_language() const;
  std::string resolved_eval_language() const;
  uint64_t hash() const;  // covers roster + experiment + knobs (not report/eval)
  std::string hash_hex() const;
  // Covers only what determines generated corpus bytes (task, seed, roster):
  // experiment variants over the same data share one corpora directory.
  uint64_t data_hash() const;
  std::string data_hash_hex() const;
};

RunSpec parse_run_spec(const Json& doc);
RunSpec load_run_spec(const std::string& path);

// What one command run produced. The deterministic half (everything except
// wall_ms) is appended to results.jsonl, where reruns of the same spec yield
// byte-identical lines; wall_ms goes to runs.jsonl alongside.
struct RunRecord {
  std::string command;
  std::string spec_hash;
  uint64_t seed = 0;
  std::vector<std::string> inputs;   // artifacts read, out-dir relative
  std::vector<std::string> outputs;  // artifacts written, out-dir relative
  Json payload;                      // command-specific summary, deterministic
  double wall_ms = 0.0;              // never serialized into results.jsonl
  Json timing_detail;                // per-step wall times; runs.jsonl only
  std::string toolkit_version = kToolkitVersion;
};

std::string record_to_json(const RunRecord& record);   // one results.jsonl line
RunRecord record_from_json(const std::string& line);   // wall_ms comes back 0

// Parsed results.jsonl; an absent file reads as an empty log.
std::vector<RunRecord> read_results_log(const std::string& out_dir);

struct RunnerOptions {
  std::string out_dir = "out";
  std::optional<uint64_t> seed_override;  // CLI --seed, replaces the spec seed
  bool force = false;                     // rerun past the idempotence guard
};

// Executes commands against an artifact directory:
//
//   corpora/<code>.{train,dev,test}.conll + <code>.meta.json   (gen-data)
//   checkpoints/train-<hash>.ckpt                              (train)
//   checkpoints/rank-<lang>-<hash>.ckpt                        (rank)
//   importance/rank-<lang>-<hash>.json                         (rank)
//   correlations/corr-<hash>.csv                               (correlate)
//   sweeps/sweep-<kind>-<hash>.json                            (sweeps)
//   reports/...                                                (report, study)
//   results.jsonl / runs.jsonl                                 (every command)
//
// <hash> is the run-spec hash after CLI overrides, so distinct configurations
// never collide. A command whose record already exists for this hash refuses
// to rerun without force; report and eval are exempt because they are pure
// readers of existing artifacts. Every output path in a record exists on disk
// by the time the record is appended.
class Runner {
 public:
  Runner(RunSpec spec, RunnerOptions options);

  RunRecord run(const std::string& command);  // dispatch by CLI command name

  RunRecord gen_data();
  RunRecord train();
  RunRecord rank();
  RunRecord correlate();
  RunRecord sweep();
  RunRecord baseline_max();
  RunRecord baseline_rand();
  RunRecord multi_source();
  RunRecord subsample_study();
  RunRecord report();
  RunRecord eval();

  const RunSpec& spec() const { return spec_; }
  const std::string& spec_hash() const { return spec_hash_; }

 private:
  void guard(const std::string& command) const;
  RunRecord finish(const std::string& command, const std::function<void(RunRecord&)>& body);
  RunRecord commit(RunRecord record, double wall_ms) const;
  std::string abs_path(const std::string& rel) const;
  void write_artifact(const std::string& rel, const std::string& content) const;
  std::vector<Corpus> load_roster(std::vector<std::string>* inputs) const;
  ExperimentContext make_context(std::vector<std::string>* inputs) const;
  HeadImportance load_ranking_artifact(const std::string& language, const ModelConfig& model,
                                       std::vector<std::string>* inputs) const;
  RunRecord run_one_sweep(const std::string& command);

  RunSpec spec_;
  RunnerOptions options_;
  std::string spec_hash_;
};

}  // namespace headprune
