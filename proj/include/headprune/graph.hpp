#pragma once

#include <functional>
#include <vector>

#include "headprune/tensor.hpp"

namespace headprune {

// Reverse-mode tape. Ops append nodes in construction order, which is already
// a topological order, so backward() is a single reverse sweep. Gradients
// accumulate additively across fan-out; values are never written by backward.
//
// A Graph built with recording=false runs the same forwards without taping
// (used for evaluation passes).
class Graph {
 public:
  explicit Graph(bool recording = true);

  // out = a @ b. a is (..., m, k); b is (k, n) broadcast over a's leading
  // dims, or (..., k, n) with matching leading dims. With transpose_b, b is
  // (n, k) / (..., n, k).
  Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

  // same shape, or b's shape a trailing suffix of a's (bias-style broadcast)
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor multiply(const Tensor& a, const Tensor& b);

  // rows of `table` gathered by id; output shape = id_shape + (embed_dim)
  Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, const Shape& id_shape);

  Tensor softmax_rows(const Tensor& x);
  // normalizes each row to mean 0 / variance 1 (epsilon inside the sqrt);
  // affine re-scale is composed from multiply/add by the caller
  Tensor layer_norm_rows(const Tensor& x);
  Tensor gelu(const Tensor& x);

  Tensor concat_last_dim(const std::vector<Tensor>& parts);
  Tensor slice_last_dim(const Tensor& x, size_t offset, size_t len);

  Tensor scale(const Tensor& x, const Tensor& scalar);  // scalar is a () tensor
  Tensor scale(const Tensor& x, double c);

  // sums every entry into a () scalar (loss plumbing)
  Tensor reduce_sum(const Tensor& x);

  // mean negative log-likelihood over rows whose gold label != ignore_index
  Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& gold, int ignore_index);

  void backward(const Tensor& loss);

  bool recording() const { return recording_; }
  size_t node_count() const { return nodes_.size(); }

  static constexpr double kLayerNormEps = 1e-5;

 private:
  struct Node {
    int64_t id;
    std::function<void()> backward_fn;
  };

  int64_t register_tensor(const Tensor& t);
  Tensor make_output(Shape shape, bool requires_grad);
  void record(const Tensor& out, std::function<void()> backward_fn);
  bool wants_grad(const Tensor& t) const { return recording_ && t.requires_grad(); }

  std::vector<Node> nodes_;
  bool recording_;
  uint64_t serial_;
  int64_t next_id_ = 0;
};

}  // namespace headprune
