#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "headprune/batching.hpp"
#include "headprune/corpus.hpp"
#include "headprune/encoder.hpp"

namespace headprune {

// Accumulated |gate gradient| per head, layer-normalized and min-max scaled
// into [0,1]; the unit the pruning protocol ranks and prunes by.
struct HeadImportance {
  std::vector<std::vector<double>> scores;  // L x H, every entry in [0,1]
  bool degenerate = false;  // all raw scores equal; every entry forced to 0.5
  std::string language_code;
  TaskKind task_kind = TaskKind::span;
  std::string model_config_hash;  // hex; ties the scores to the model that made them
  size_t dev_sentence_count = 0;
  uint64_t seed = 0;

  size_t num_layers() const { return scores.size(); }
  size_t num_heads() const { return scores.empty() ? 0 : scores[0].size(); }
};

struct HeadRanking {
  std::vector<std::pair<size_t, size_t>> order;  // (layer, head), ascending importance
  std::string tie_policy_tag;
};

struct CorrelationResult {
  double rho = 0.0;
  std::pair<std::string, std::string> languages;
  size_t n = 0;  // heads compared
};

// Re-runs the fine-tuned model over dev in corpus order with backward passes
// but no parameter updates, summing |gate gradient| per head across batches.
// Parameter values are untouched; any parameter gradients are dropped.
std::vector<std::vector<double>> accumulate_head_gradients(EncoderModel& model,
                                                           const std::vector<Sentence>& dev,
                                                           const Vocab& vocab,
                                                           const LabelMap& labels,
                                                           size_t batch_size);

// Divides each layer row by its Euclidean norm (zero rows stay zero), then
// min-max scales the whole matrix into [0,1]. An all-equal matrix has no
// spread left to scale; it comes back flat 0.5 and flagged degenerate.
HeadImportance normalize_scores(const std::vector<std::vector<double>>& raw);

// Ascending by score; ties fall back to (layer, head) coordinate order.
HeadRanking rank_heads(const HeadImportance& importance);

// Average (fractional) ranks, 1-based: a run of equal values spans sorted
// positions [i+1, j+1] and every member gets the midpoint rank.
std::vector<double> fractional_ranks(const std::vector<double>& values);

// Spearman rank correlation: fractional (average) ranks of both vectors, then
// Pearson correlation of the rank vectors. A constant vector carries no
// ordering to correlate, so its rho is reported as 0.
double spearman_rho_flat(const std::vector<double>& a, const std::vector<double>& b);
// same, over row-major flattened score matrices
CorrelationResult spearman_rho(const HeadImportance& a, const HeadImportance& b);

struct CorrelationTable {
  std::vector<std::string> languages;
  std::vector<std::vector<double>> rho;  // symmetric, unit diagonal
};

CorrelationTable correlation_table(const std::vector<HeadImportance>& matrices);

// CSV with language codes as row and column headers, fixed 6-decimal cells;
// parse(render(t)) then render again is byte-stable.
std::string correlation_csv(const CorrelationTable& table);
CorrelationTable parse_correlation_csv(const std::string& text);

void save_importance(const HeadImportance& m, const std::string& path);
HeadImportance load_importance(const std::string& path);

}  // namespace headprune
