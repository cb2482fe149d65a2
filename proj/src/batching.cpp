#include "headprune/batching.hpp"

#include <algorithm>
#include <set>

#include "headprune/hash.hpp"

namespace headprune {

int Vocab::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnkId : it->second;
}

Vocab build_vocab(const std::vector<const Corpus*>& corpora) {
  std::set<std::string> types;
  for (const Corpus* c : corpora) {
    for (const Sentence& s : c->train) types.insert(s.tokens.begin(), s.tokens.end());
  }
  Vocab v;
  v.id_to_token = {"<pad>", "<unk>"};
  for (const std::string& t : types) v.id_to_token.push_back(t);
  for (size_t i = 0; i < v.id_to_token.size(); ++i) {
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  }
  return v;
}

int LabelMap::id(const std::string& label) const {
  auto it = to_id.find(label);
  if (it == to_id.end()) throw ValidationError("unknown label: " + label);
  return it->second;
}

const std::string& LabelMap::name(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= labels.size()) {
    throw ValidationError("label id " + std::to_string(id) + " out of range");
  }
  return labels[static_cast<size_t>(id)];
}

LabelMap build_label_map(const std::vector<const Corpus*>& corpora) {
  std::set<std::string> all;
  for (const Corpus* c : corpora) {
    all.insert(c->label_inventory.begin(), c->label_inventory.end());
  }
  LabelMap m;
  m.labels.assign(all.begin(), all.end());
  for (size_t i = 0; i < m.labels.size(); ++i) m.to_id[m.labels[i]] = static_cast<int>(i);
  return m;
}

uint64_t sentence_hash(const Sentence& s) {
  uint64_t h = fnv1a64("sentence");
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    h = fnv1a64(s.tokens[i], h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(s.tags[i], h);
    h = fnv1a64("\x1e", h);
  }
  return h;
}

std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, const Vocab& vocab,
                                const LabelMap& labels, size_t batch_size, size_t max_len,
                                LoaderJournal* journal, const std::string& tag) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  std::vector<Batch> out;
  for (size_t start = 0; start < sentences.size(); start += batch_size) {
    const size_t end = std::min(start + batch_size, sentences.size());
    size_t seq_len = 1;
    for (size_t i = start; i < end; ++i) {
      if (sentences[i].tokens.size() > max_len) {
        throw ValidationError("sentence of " + std::to_string(sentences[i].tokens.size()) +
                              " tokens exceeds the model maximum of " + std::to_string(max_len));
      }
      seq_len = std::max(seq_len, sentences[i].tokens.size());
    }
    Batch b;
    b.batch_size = end - start;
    b.seq_len = seq_len;
    b.token_ids.assign(b.batch_size * seq_len, kPadId);
    b.gold_labels.assign(b.batch_size * seq_len, kIgnoreLabel);
    b.real.assign(b.batch_size * seq_len, 0);
    for (size_t i = start; i < end; ++i) {
      const Sentence& s = sentences[i];
      const size_t row = (i - start) * seq_len;
      for (size_t t = 0; t < s.tokens.size(); ++t) {
        b.token_ids[row + t] = vocab.id(s.tokens[t]);
        b.gold_labels[row + t] = labels.id(s.tags[t]);
        b.real[row + t] = 1;
      }
      if (journal != nullptr) journal->push_back({tag, sentence_hash(s)});
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace headprune
