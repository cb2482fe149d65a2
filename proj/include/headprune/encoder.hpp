#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "headprune/graph.hpp"

namespace headprune {

struct ModelConfig {
  size_t num_layers = 4;
  size_t num_heads = 4;
  size_t model_dim = 64;
  size_t feedforward_dim = 128;
  size_t vocab_size = 2;
  size_t max_sequence_length = 64;
  size_t num_labels = 2;
  uint64_t seed = 0;

  void validate() const;              // throws listing every violation
  size_t head_dim() const { return model_dim / num_heads; }
  uint64_t hash() const;              // canonical content hash
  std::string hash_hex() const;
};

// Which heads participate. Pruning never empties a layer: the attention
// sublayer would collapse to its residual, which the protocol forbids.
struct HeadMask {
  size_t num_layers = 0;
  size_t num_heads = 0;
  std::vector<uint8_t> active;  // row-major L x H

  static HeadMask all_active(size_t layers, size_t heads);
  bool is_active(size_t layer, size_t head) const;
  void deactivate(size_t layer, size_t head);
  size_t active_in_layer(size_t layer) const;
  void validate() const;  // at least one active head per layer
};

// One padded training/eval batch, row-major batch_size x seq_len.
struct Batch {
  size_t batch_size = 0;
  size_t seq_len = 0;
  std::vector<int> token_ids;
  std::vector<int> gold_labels;  // kIgnoreLabel at padding
  std::vector<uint8_t> real;     // 1 = real token, 0 = padding
};

inline constexpr int kIgnoreLabel = -1;

// Post-norm transformer encoder for token classification. Every head owns a
// scalar gate fixed at 1.0 whose gradient measures the head's contribution;
// the boolean mask multiplies downstream of the gate, so pruned heads
// contribute nothing forward and get exactly-zero gate gradients backward.
class EncoderModel {
 public:
  explicit EncoderModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // logits, shape (batch, seq, labels)
  Tensor forward(Graph& g, const Batch& batch, const HeadMask& mask) const;

  // trainable weights for the optimizer; gates are deliberately absent so
  // their value stays exactly 1.0
  std::vector<Tensor> parameters() const;
  // every tensor in checkpoint order, gates included
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;

  const Tensor& gate(size_t layer, size_t head) const;
  // |gate gradient| per head; throws if backward has not populated them
  std::vector<std::vector<double>> head_gate_grads() const;
  void clear_gate_grads();

 private:
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_gamma, ln1_beta;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    Tensor ln2_gamma, ln2_beta;
    std::vector<Tensor> gates;
  };

  ModelConfig config_;
  Tensor tok_emb_, pos_emb_;
  Tensor emb_ln_gamma_, emb_ln_beta_;
  std::vector<Layer> layers_;
  Tensor cls_w_, cls_b_;
};

// Single-file binary checkpoint: magic+version, the config, then each named
// tensor as (name, shape, raw little-endian f64). Loading rebuilds the model
// and validates every shape against the stored config.
void save_checkpoint(const EncoderModel& model, const std::string& path);
EncoderModel load_checkpoint(const std::string& path);

}  // namespace headprune
