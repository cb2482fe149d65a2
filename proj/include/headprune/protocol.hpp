#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "headprune/batching.hpp"
#include "headprune/corpus.hpp"
#include "headprune/encoder.hpp"
#include "headprune/importance.hpp"
#include "headprune/metrics.hpp"

namespace headprune {

// Transfer settings: cross-lingual trains on source languages only and tests
// on the target; multi-lingual appends the target train set to the sources.
enum class Setting { cross_lingual, multi_lingual };

std::string setting_name(Setting setting);
Setting parse_setting(const std::string& name);

struct TrainConfig {
  size_t epochs = 3;
  double lr = 5e-5;
  size_t batch_size = 16;

  void validate() const;
};

// One experiment: who is source and target, under which setting, with which
// model and pruning budget. vocab_size and num_labels of the embedded model
// config may stay zero, meaning "derive from the participating corpora".
struct ExperimentSpec {
  TaskKind task = TaskKind::span;
  std::vector<std::string> source_languages;  // order matters and is hashed
  std::string target_language;
  Setting setting = Setting::cross_lingual;
  ModelConfig model;
  TrainConfig train;
  size_t prune_limit = 12;
  uint64_t seed = 42;
  bool early_stop_on_drop = false;

  void validate() const;  // throws listing every violation
  uint64_t hash() const;  // canonical content hash of every field above
  std::string hash_hex() const;
};

const Corpus& find_language(const std::vector<Corpus>& corpora, const std::string& code);

// A spec bound to its data products: the corpora for every participating
// language, the shared vocabulary/label map built over all of them, and the
// model config with the data-dependent fields resolved.
struct ExperimentContext {
  ExperimentSpec spec;
  std::vector<Corpus> corpora;
  Vocab vocab;
  LabelMap labels;
  ModelConfig model;

  static ExperimentContext make(ExperimentSpec spec, std::vector<Corpus> corpora);

  // source train splits in spec order; multi-lingual appends target train last
  std::vector<Sentence> training_sentences() const;
  const Corpus& target() const { return find_language(corpora, spec.target_language); }
};

// The first k prunable heads in ranking order. A candidate whose layer is
// down to one active head is skipped (pruning it would collapse the layer to
// its residual) and logged; the plan for k is always a prefix of the plan for
// k+1 because skips depend only on the heads already taken.
struct PrunePlan {
  std::vector<std::pair<size_t, size_t>> heads;    // in prune order
  std::vector<std::pair<size_t, size_t>> skipped;  // in encounter order

  size_t k() const { return heads.size(); }
  HeadMask mask(size_t num_layers, size_t num_heads) const;
};

PrunePlan make_prune_plan(const HeadRanking& ranking, size_t k, size_t num_layers,
                          size_t num_heads);

// Fresh model from ctx.model (same seed, same init every call), fine-tuned on
// `train` in sentence order with sequential fixed-size batches. Masked heads
// never participate. A non-finite loss aborts with NumericError.
EncoderModel train_model(const ExperimentContext& ctx, const std::vector<Sentence>& train,
                         const HeadMask& mask, LoaderJournal* journal = nullptr,
                         const std::string& journal_tag = "");

std::vector<std::vector<std::string>> predict_tags(const EncoderModel& model,
                                                   const HeadMask& mask,
                                                   const std::vector<Sentence>& sentences,
                                                   const Vocab& vocab, const LabelMap& labels,
                                                   size_t batch_size);

EvalResult evaluate_model(const EncoderModel& model, const HeadMask& mask,
                          const std::vector<Sentence>& sentences, const Vocab& vocab,
                          const LabelMap& labels, TaskKind task, size_t batch_size);

struct RankPipelineResult {
  EncoderModel model;
  HeadImportance importance;
  std::string provenance;  // "lang=<code> task=<kind> epochs=<n>[ untrained]"
};

// The ranking pipeline: fine-tune a fresh model on one source language's
// train split, re-run it over that language's dev split accumulating |gate
// gradient|, normalize into the importance matrix. epochs=0 is allowed (the
// importance of an untrained model) and tagged in the provenance.
RankPipelineResult rank_pipeline(const ExperimentContext& ctx,
                                 const std::string& source_language);

struct SweepPoint {
  size_t k = 0;
  double score = 0.0;  // target-test F1 under the spec's setting
  std::vector<std::pair<size_t, size_t>> pruned;
};

struct SweepResult {
  std::string sweep_kind;          // "ranked" | "max" | "random"
  std::string ranking_provenance;  // which heuristic/language produced the order
  Setting setting = Setting::cross_lingual;
  std::vector<SweepPoint> per_k_scores;  // k = 0.. (truncated by early stop)
  size_t best_k = 0;
  double best_score = 0.0;
  std::vector<std::pair<size_t, size_t>> pruned_at_best;
  std::vector<std::pair<size_t, size_t>> skipped_candidates;
  size_t trainings = 0;  // fine-tunes consumed; the EC-vs-MD/SD cost figure
  bool early_stopped = false;
  // Wall time per sweep point (train + eval). Diagnostic only: deliberately
  // absent from sweep_to_json so serialized sweeps stay machine-independent.
  std::vector<double> per_k_wall_ms;
};

// For k = 0..prune_limit: fresh model, k-prefix prune plan as the head mask,
// fine-tune on the setting's training set, evaluate on target test. Reports
// the best k (ties -> smallest k). With early_stop_on_drop set, the sweep
// records the first k that scores below k-1 and stops there.
SweepResult prune_sweep(const ExperimentContext& ctx, const HeadRanking& ranking,
                        const std::string& ranking_provenance,
                        LoaderJournal* journal = nullptr);

// Same sweep walking the ranking from the top: prunes the highest-importance
// heads first (the damage baseline).
SweepResult baseline_max_prune(const ExperimentContext& ctx, const HeadImportance& importance,
                               LoaderJournal* journal = nullptr);

// Same sweep over a seeded uniform-without-replacement head order; draws that
// would empty a layer are rejected and redrawn.
SweepResult baseline_random_prune(const ExperimentContext& ctx, uint64_t sample_seed = 42,
                                  LoaderJournal* journal = nullptr);

// Multi-source merges: MD averages the fractional-rank matrices elementwise
// and re-ranks; SD sums the score matrices elementwise and ranks. Both keep
// rank_heads' coordinate-order tie policy.
HeadRanking merge_rankings_md(const std::vector<HeadImportance>& matrices);
HeadRanking merge_rankings_sd(const std::vector<HeadImportance>& matrices);

struct EcSelection {
  std::string language;  // winner; score ties -> lexicographically smallest
  SweepResult sweep;
  size_t total_trainings = 0;  // summed over every candidate sweep
};

// EC: run a full sweep per source language and keep the best one.
EcSelection select_rankings_ec(
    const std::vector<std::pair<std::string, SweepResult>>& per_language);

// Stable structured form of a sweep (no wall-clock content, so records of
// identical runs are byte-identical).
std::string sweep_to_json(const SweepResult& result);
SweepResult sweep_from_json(const std::string& text);

}  // namespace headprune
