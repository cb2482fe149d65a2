#include "headprune/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "headprune/hash.hpp"
#include "headprune/rng.hpp"

namespace headprune {

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  std::vector<std::string> problems;
  if (num_layers < 1) problems.push_back("num_layers must be >= 1");
  if (num_heads < 1) problems.push_back("num_heads must be >= 1");
  if (num_heads >= 1 && model_dim % num_heads != 0) {
    problems.push_back("model_dim " + std::to_string(model_dim) + " not divisible by num_heads " +
                       std::to_string(num_heads));
  }
  if (model_dim < 1) problems.push_back("model_dim must be >= 1");
  if (feedforward_dim < 1) problems.push_back("feedforward_dim must be >= 1");
  if (vocab_size < 2) problems.push_back("vocab_size must be >= 2 (pad + unk)");
  if (max_sequence_length < 1) problems.push_back("max_sequence_length must be >= 1");
  if (num_labels < 2) problems.push_back("num_labels must be >= 2");
  if (!problems.empty()) {
    std::string msg = "model config invalid:";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
}

uint64_t ModelConfig::hash() const {
  std::ostringstream os;
  os << "L=" << num_layers << ",H=" << num_heads << ",d=" << model_dim
     << ",ff=" << feedforward_dim << ",vocab=" << vocab_size << ",max=" << max_sequence_length
     << ",labels=" << num_labels << ",seed=" << seed;
  return fnv1a64(os.str());
}

std::string ModelConfig::hash_hex() const { return to_hex(hash()); }

// ---------------------------------------------------------------------------
// HeadMask

HeadMask HeadMask::all_active(size_t layers, size_t heads) {
  HeadMask m;
  m.num_layers = layers;
  m.num_heads = heads;
  m.active.assign(layers * heads, 1);
  return m;
}

namespace {

size_t mask_index(const HeadMask& m, size_t layer, size_t head) {
  if (layer >= m.num_layers || head >= m.num_heads) {
    throw ShapeError("head mask: (" + std::to_string(layer) + "," + std::to_string(head) +
                     ") outside " + std::to_string(m.num_layers) + "x" +
                     std::to_string(m.num_heads));
  }
  return layer * m.num_heads + head;
}

}  // namespace

bool HeadMask::is_active(size_t layer, size_t head) const {
  return active[mask_index(*this, layer, head)] != 0;
}

void HeadMask::deactivate(size_t layer, size_t head) {
  active[mask_index(*this, layer, head)] = 0;
}

size_t HeadMask::active_in_layer(size_t layer) const {
  size_t n = 0;
  for (size_t h = 0; h < num_heads; ++h) n += is_active(layer, h) ? 1 : 0;
  return n;
}

void HeadMask::validate() const {
  if (active.size() != num_layers * num_heads) {
    throw ShapeError("head mask: expected " + std::to_string(num_layers * num_heads) +
                     " bits, got " + std::to_string(active.size()));
  }
  for (size_t l = 0; l < num_layers; ++l) {
    if (active_in_layer(l) == 0) {
      throw ValidationError("head mask: layer " + std::to_string(l) + " has no active heads");
    }
  }
}

// ---------------------------------------------------------------------------
// Model construction

namespace {

Tensor init_normal(uint64_t seed, const std::string& name, Shape shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  Rng rng(derive_seed(seed, name));
  for (double& v : t.values_mut()) v = stddev * rng.normal();
  return t;
}

Tensor init_const(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

constexpr double kInitStd = 0.02;

}  // namespace

EncoderModel::EncoderModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const size_t d = config_.model_dim;
  const size_t ff = config_.feedforward_dim;
  const uint64_t s = config_.seed;

  tok_emb_ = init_normal(s, "tok_emb", {config_.vocab_size, d}, kInitStd);
  pos_emb_ = init_normal(s, "pos_emb", {config_.max_sequence_length, d}, kInitStd);
  emb_ln_gamma_ = init_const({d}, 1.0);
  emb_ln_beta_ = init_const({d}, 0.0);

  layers_.resize(config_.num_layers);
  for (size_t l = 0; l < config_.num_layers; ++l) {
    Layer& L = layers_[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    L.wq = init_normal(s, p + "wq", {d, d}, kInitStd);
    L.bq = init_const({d}, 0.0);
    L.wk = init_normal(s, p + "wk", {d, d}, kInitStd);
    L.bk = init_const({d}, 0.0);
    L.wv = init_normal(s, p + "wv", {d, d}, kInitStd);
    L.bv = init_const({d}, 0.0);
    L.wo = init_normal(s, p + "wo", {d, d}, kInitStd);
    L.bo = init_const({d}, 0.0);
    L.ln1_gamma = init_const({d}, 1.0);
    L.ln1_beta = init_const({d}, 0.0);
    L.ff_w1 = init_normal(s, p + "ff_w1", {d, ff}, kInitStd);
    L.ff_b1 = init_const({ff}, 0.0);
    L.ff_w2 = init_normal(s, p + "ff_w2", {ff, d}, kInitStd);
    L.ff_b2 = init_const({d}, 0.0);
    L.ln2_gamma = init_const({d}, 1.0);
    L.ln2_beta = init_const({d}, 0.0);
    for (size_t h = 0; h < config_.num_heads; ++h) {
      L.gates.push_back(Tensor::scalar(1.0, true));
    }
  }
  cls_w_ = init_normal(s, "cls_w", {d, config_.num_labels}, kInitStd);
  cls_b_ = init_const({config_.num_labels}, 0.0);
}

std::vector<Tensor> EncoderModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_tensors()) {
    if (name.find(".gate") == std::string::npos) out.push_back(t);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> EncoderModel::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_emb", tok_emb_);
  out.emplace_back("pos_emb", pos_emb_);
  out.emplace_back("emb_ln.gamma", emb_ln_gamma_);
  out.emplace_back("emb_ln.beta", emb_ln_beta_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.emplace_back(p + "wq", L.wq);
    out.emplace_back(p + "bq", L.bq);
    out.emplace_back(p + "wk", L.wk);
    out.emplace_back(p + "bk", L.bk);
    out.emplace_back(p + "wv", L.wv);
    out.emplace_back(p + "bv", L.bv);
    out.emplace_back(p + "wo", L.wo);
    out.emplace_back(p + "bo", L.bo);
    out.emplace_back(p + "ln1.gamma", L.ln1_gamma);
    out.emplace_back(p + "ln1.beta", L.ln1_beta);
    out.emplace_back(p + "ff_w1", L.ff_w1);
    out.emplace_back(p + "ff_b1", L.ff_b1);
    out.emplace_back(p + "ff_w2", L.ff_w2);
    out.emplace_back(p + "ff_b2", L.ff_b2);
    out.emplace_back(p + "ln2.gamma", L.ln2_gamma);
    out.emplace_back(p + "ln2.beta", L.ln2_beta);
    for (size_t h = 0; h < L.gates.size(); ++h) {
      out.emplace_back(p + "gate" + std::to_string(h), L.gates[h]);
    }
  }
  out.emplace_back("cls_w", cls_w_);
  out.emplace_back("cls_b", cls_b_);
  return out;
}

const Tensor& EncoderModel::gate(size_t layer, size_t head) const {
  return layers_.at(layer).gates.at(head);
}

std::vector<std::vector<double>> EncoderModel::head_gate_grads() const {
  std::vector<std::vector<double>> out(config_.num_layers,
                                       std::vector<double>(config_.num_heads, 0.0));
  for (size_t l = 0; l < config_.num_layers; ++l) {
    for (size_t h = 0; h < config_.num_heads; ++h) {
      const Tensor& gate = layers_[l].gates[h];
      if (!gate.has_grad()) {
        throw ValidationError("head_gate_grads: gate (" + std::to_string(l) + "," +
                              std::to_string(h) + ") has no gradient; run backward first");
      }
      out[l][h] = std::abs(gate.grad()[0]);
    }
  }
  return out;
}

void EncoderModel::clear_gate_grads() {
  for (Layer& L : layers_) {
    for (Tensor& gate : L.gates) gate.drop_grad();
  }
}

// ---------------------------------------------------------------------------
// Forward

Tensor EncoderModel::forward(Graph& g, const Batch& batch, const HeadMask& mask) const {
  const size_t B = batch.batch_size;
  const size_t T = batch.seq_len;
  const size_t d = config_.model_dim;
  const size_t H = config_.num_heads;
  const size_t dh = config_.head_dim();

  if (B < 1 || T < 1) throw ShapeError("forward: empty batch");
  if (T > config_.max_sequence_length) {
    throw ValidationError("forward: sequence length " + std::to_string(T) + " exceeds maximum " +
                          std::to_string(config_.max_sequence_length));
  }
  if (batch.token_ids.size() != B * T || batch.real.size() != B * T) {
    throw ShapeError("forward: batch arrays do not match batch_size x seq_len");
  }
  for (int id : batch.token_ids) {
    if (id < 0 || static_cast<size_t>(id) >= config_.vocab_size) {
      throw ValidationError("forward: token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(config_.vocab_size));
    }
  }
  if (mask.num_layers != config_.num_layers || mask.num_heads != H) {
    throw ShapeError("forward: head mask is " + std::to_string(mask.num_layers) + "x" +
                     std::to_string(mask.num_heads) + ", model wants " +
                     std::to_string(config_.num_layers) + "x" + std::to_string(H));
  }
  mask.validate();

  std::vector<int> pos_ids(B * T);
  for (size_t b = 0; b < B; ++b) {
    for (size_t t = 0; t < T; ++t) pos_ids[b * T + t] = static_cast<int>(t);
  }

  // additive attention bias: padded keys get -1e9 before the softmax, so
  // padding is never attended; padded queries only feed padded positions,
  // which the loss ignores
  Tensor attn_bias = Tensor::zeros({B, T, T});
  {
    std::span<double> bias = attn_bias.values_mut();
    for (size_t b = 0; b < B; ++b) {
      for (size_t i = 0; i < T; ++i) {
        for (size_t j = 0; j < T; ++j) {
          if (!batch.real[b * T + j]) bias[(b * T + i) * T + j] = -1e9;
        }
      }
    }
  }

  Tensor x = g.add(g.embedding_lookup(tok_emb_, batch.token_ids, {B, T}),
                   g.embedding_lookup(pos_emb_, pos_ids, {B, T}));
  x = g.add(g.multiply(g.layer_norm_rows(x), emb_ln_gamma_), emb_ln_beta_);

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (size_t l = 0; l < config_.num_layers; ++l) {
    const Layer& L = layers_[l];
    Tensor q = g.add(g.matmul(x, L.wq), L.bq);
    Tensor k = g.add(g.matmul(x, L.wk), L.bk);
    Tensor v = g.add(g.matmul(x, L.wv), L.bv);

    std::vector<Tensor> heads;
    for (size_t h = 0; h < H; ++h) {
      Tensor ctx;
      if (mask.is_active(l, h)) {
        Tensor qh = g.slice_last_dim(q, h * dh, dh);
        Tensor kh = g.slice_last_dim(k, h * dh, dh);
        Tensor vh = g.slice_last_dim(v, h * dh, dh);
        Tensor scores = g.add(g.scale(g.matmul(qh, kh, /*transpose_b=*/true), inv_sqrt_dh),
                              attn_bias);
        ctx = g.matmul(g.softmax_rows(scores), vh);
      } else {
        // pruned head: zero context, but the gate stays in the graph so its
        // gradient is exactly zero rather than undefined
        ctx = Tensor::zeros({B, T, dh});
      }
      heads.push_back(g.scale(ctx, L.gates[h]));
    }
    Tensor attn_out = g.add(g.matmul(g.concat_last_dim(heads), L.wo), L.bo);
    x = g.add(x, attn_out);
    x = g.add(g.multiply(g.layer_norm_rows(x), L.ln1_gamma), L.ln1_beta);

    Tensor ffn = g.gelu(g.add(g.matmul(x, L.ff_w1), L.ff_b1));
    ffn = g.add(g.matmul(ffn, L.ff_w2), L.ff_b2);
    x = g.add(x, ffn);
    x = g.add(g.multiply(g.layer_norm_rows(x), L.ln2_gamma), L.ln2_beta);
  }
  (void)d;
  return g.add(g.matmul(x, cls_w_), cls_b_);
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'P', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T take(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in.good()) throw ValidationError("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const EncoderModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const ModelConfig& c = model.config();
  for (uint64_t field : {static_cast<uint64_t>(c.num_layers), static_cast<uint64_t>(c.num_heads),
                         static_cast<uint64_t>(c.model_dim),
                         static_cast<uint64_t>(c.feedforward_dim),
                         static_cast<uint64_t>(c.vocab_size),
                         static_cast<uint64_t>(c.max_sequence_length),
                         static_cast<uint64_t>(c.num_labels), c.seed}) {
    put(out, field);
  }
  auto named = model.named_tensors();
  put(out, static_cast<uint64_t>(named.size()));
  for (const auto& [name, t] : named) {
    put(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<uint32_t>(t.shape().size()));
    for (size_t dim : t.shape()) put(out, static_cast<uint64_t>(dim));
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out.good()) throw Error("short write to " + path);
}

EncoderModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("checkpoint: cannot open " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in.good() || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ValidationError("checkpoint: " + path + " has the wrong magic/version header");
  }
  ModelConfig c;
  c.num_layers = take<uint64_t>(in, "config");
  c.num_heads = take<uint64_t>(in, "config");
  c.model_dim = take<uint64_t>(in, "config");
  c.feedforward_dim = take<uint64_t>(in, "config");
  c.vocab_size = take<uint64_t>(in, "config");
  c.max_sequence_length = take<uint64_t>(in, "config");
  c.num_labels = take<uint64_t>(in, "config");
  c.seed = take<uint64_t>(in, "config");
  c.validate();

  EncoderModel model(c);
  auto named = model.named_tensors();
  const uint64_t count = take<uint64_t>(in, "tensor count");
  if (count != named.size()) {
    throw ValidationError("checkpoint: holds " + std::to_string(count) + " tensors, config needs " +
                          std::to_string(named.size()));
  }
  for (auto& [name, t] : named) {
    const uint32_t name_len = take<uint32_t>(in, "tensor name");
    std::string stored(name_len, '\0');
    in.read(stored.data(), name_len);
    if (!in.good() || stored != name) {
      throw ValidationError("checkpoint: expected tensor " + name + ", found " + stored);
    }
    const uint32_t ndim = take<uint32_t>(in, name + " rank");
    if (ndim != t.shape().size()) {
      throw ValidationError("checkpoint: " + name + " rank mismatch");
    }
    for (size_t dim : t.shape()) {
      if (take<uint64_t>(in, name + " shape") != dim) {
        throw ValidationError("checkpoint: " + name + " shape does not match config");
      }
    }
    in.read(reinterpret_cast<char*>(t.values_mut().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in.good()) throw ValidationError("checkpoint: truncated in " + name + " data");
    if (name.find(".gate") != std::string::npos && t.values()[0] != 1.0) {
      throw ValidationError("checkpoint: " + name + " is " + std::to_string(t.values()[0]) +
                            ", gates must be exactly 1.0");
    }
  }
  return model;
}

}  // namespace headprune
