#pragma once

#include <functional>
#include <vector>

#include "headprune/batching.hpp"
#include "headprune/corpus.hpp"
#include "headprune/encoder.hpp"

namespace headprune::oracle {

struct PruneTableRow {
  bool unpruned = false;
  size_t layer = 0;
  size_t head = 0;
  double score = 0.0;  // target-test F1 after training with this head removed
};

// Brute-force reference for single-head pruning: trains one fresh model per
// candidate head removal (plus the unpruned row) with its own training loop
// and scores each on `test`. Deliberately tiny: at most 4 heads total and 200
// training sentences, anything larger is a budget error. `init_hook`, when
// set, runs on every freshly constructed model before training (used to build
// models with exchangeable heads).
std::vector<PruneTableRow> exhaustive_prune(
    const ModelConfig& config, const std::vector<Sentence>& train,
    const std::vector<Sentence>& test, const Vocab& vocab, const LabelMap& labels, TaskKind task,
    size_t epochs, double lr, size_t batch_size,
    const std::function<void(EncoderModel&)>& init_hook = nullptr);

}  // namespace headprune::oracle
