#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "headprune/corpus.hpp"
#include "headprune/encoder.hpp"

namespace headprune {

// Shared token vocabulary: the union of every participating corpus's train
// split, sorted, with pad and unk reserved (the desk-scale stand-in for one
// multilingual subword vocabulary).
struct Vocab {
  std::vector<std::string> id_to_token;  // [0] = <pad>, [1] = <unk>
  std::unordered_map<std::string, int> token_to_id;

  int id(const std::string& token) const;  // unk for unseen tokens
  size_t size() const { return id_to_token.size(); }
};

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;

Vocab build_vocab(const std::vector<const Corpus*>& corpora);

struct LabelMap {
  std::vector<std::string> labels;  // sorted union of inventories
  std::unordered_map<std::string, int> to_id;

  int id(const std::string& label) const;  // throws on unknown label
  const std::string& name(int id) const;
  size_t size() const { return labels.size(); }
};

LabelMap build_label_map(const std::vector<const Corpus*>& corpora);

// content identity used by the loader journal (data-hygiene assertions)
uint64_t sentence_hash(const Sentence& s);

struct JournalEntry {
  std::string tag;  // e.g. "aa.train"
  uint64_t content_hash;
};
using LoaderJournal = std::vector<JournalEntry>;

// Sequential fixed-size batching, no shuffling: sentence order is the batch
// order. Each batch pads to its own longest sentence. When a journal is
// given, every sentence entering a batch is recorded under `tag`.
std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, const Vocab& vocab,
                                const LabelMap& labels, size_t batch_size, size_t max_len,
                                LoaderJournal* journal = nullptr, const std::string& tag = "");

}  // namespace headprune
