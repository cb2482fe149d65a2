#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headprune/common.hpp"

namespace headprune {

enum class TaskKind { pos, span };

std::string task_kind_name(TaskKind task);
TaskKind parse_task_kind(const std::string& name);

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  bool operator==(const Sentence&) const = default;
};

// Language-tagged dataset. Immutable by convention after construction; the
// transforms below return fresh copies.
struct Corpus {
  std::string language_code;
  TaskKind task_kind = TaskKind::span;
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
  std::vector<Sentence> test;
  std::vector<std::string> label_inventory;  // sorted, unique

  const std::vector<Sentence>& split(const std::string& name) const;
};

struct ConllFile {
  std::vector<Sentence> sentences;
  size_t repair_count = 0;  // orphan I-X tags promoted to B-X
};

// Two-column (token, tag) text, blank line between sentences. For span tasks
// malformed BIO is repaired in place and counted rather than rejected.
ConllFile load_conll(const std::string& path, TaskKind task);
void save_conll(const std::vector<Sentence>& sentences, const std::string& path);

// Directory layout: <lang>.train.conll / <lang>.dev.conll / <lang>.test.conll
// plus a <lang>.meta.json sidecar carrying task kind, labels and seed.
Corpus load_corpus(const std::string& dir, const std::string& language_code);
void save_corpus(const Corpus& corpus, const std::string& dir, uint64_t generation_seed);

// Checks sentence shape, label-inventory coverage and (span) BIO validity.
void validate_corpus(const Corpus& corpus);

std::vector<std::string> collect_label_inventory(const Corpus& corpus);

// B-X / I-X types outside `keep` collapse to MISC; O is untouched.
extern const std::vector<std::string> kDefaultEntityTypes;  // LOC, MISC, ORG, PER
Corpus harmonize_span_labels(const Corpus& corpus,
                             const std::vector<std::string>& keep = kDefaultEntityTypes);

// The 17-tag part-of-speech inventory used by the synthetic POS grammar.
extern const std::vector<std::string> kPosTags;

struct PermutationSpec {
  // tokens (grouped so spans stay contiguous) are block-reversed within
  // windows of this many units; 0 or 1 means the order is untouched
  size_t window = 0;
};

struct SizeSpec {
  size_t train = 0;
  size_t dev = 0;
  size_t test = 0;
};

struct LanguageProfile {
  std::string language_code;
  uint64_t vocab_seed = 0;
  PermutationSpec permutation;
  double noise_rate = 0.0;  // per-token chance of an off-grammar word; [0, 0.5)
  SizeSpec sizes;
};

// All generated corpora share one latent tagging grammar drawn from
// master_seed: sentence i of a split has the same tag/concept skeleton in
// every language, and each language renders concepts through its own
// disjoint vocabulary, local word-order permutation and emission noise.
// Languages from different master_seeds share nothing but the task shape.
std::vector<Corpus> synth_generate(const std::vector<LanguageProfile>& profiles, TaskKind task,
                                   uint64_t master_seed);

// Seeded partition of 0..n-1 into 10 near-equal disjoint chunks; the chunk
// list is what subsample_train concatenates, so k tenths nest inside k+1.
std::vector<std::vector<size_t>> subsample_partition(size_t n, uint64_t seed);

Corpus subsample_train(const Corpus& corpus, int tenths, uint64_t seed);

}  // namespace headprune
