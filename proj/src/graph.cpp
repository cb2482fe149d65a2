#include "headprune/graph.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#include "headprune/kernels.hpp"

namespace headprune {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

std::atomic<uint64_t> g_graph_serial{1};

size_t lead_count(const Shape& s, size_t trailing) {
  size_t n = 1;
  for (size_t i = 0; i + trailing < s.size(); ++i) n *= s[i];
  return n;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  for (size_t i = 0; i < small.size(); ++i) {
    if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
  }
  return true;
}

bool same_lead(const Shape& a, const Shape& b, size_t trailing) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i + trailing < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Graph::Graph(bool recording)
    : recording_(recording), serial_(g_graph_serial.fetch_add(1, std::memory_order_relaxed)) {}

int64_t Graph::register_tensor(const Tensor& t) {
  auto* impl = t.impl_.get();
  if (impl->graph_serial != serial_) {
    impl->graph_serial = serial_;
    impl->node_id = next_id_++;
  }
  return impl->node_id;
}

Tensor Graph::make_output(Shape shape, bool requires_grad) {
  Tensor out = Tensor::zeros(std::move(shape), requires_grad && recording_);
  register_tensor(out);
  return out;
}

void Graph::record(const Tensor& out, std::function<void()> backward_fn) {
  if (!recording_ || !out.requires_grad()) return;
  // skip nodes whose output never received a gradient (dead branches)
  Tensor o = out;
  nodes_.push_back(Node{out.node_id(), [o, fn = std::move(backward_fn)]() mutable {
                          if (o.has_grad()) fn();
                        }});
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1 || !loss.shape().empty()) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (loss.impl_->graph_serial != serial_) {
    throw Error("backward: loss was not produced by this graph");
  }
  Tensor l = loss;
  l.grad_mut()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward_fn();
  }
}

// ---------------------------------------------------------------------------
// matmul

Tensor Graph::matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw ShapeError("matmul: operands need >= 2 dims, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const size_t m = a.shape()[a.ndim() - 2];
  const size_t k = a.shape()[a.ndim() - 1];
  const size_t bk = transpose_b ? b.shape()[b.ndim() - 1] : b.shape()[b.ndim() - 2];
  const size_t n = transpose_b ? b.shape()[b.ndim() - 2] : b.shape()[b.ndim() - 1];
  const bool b_broadcast = b.ndim() == 2 && a.ndim() > 2;
  if (bk != k || (!b_broadcast && !same_lead(a.shape(), b.shape(), 2))) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     (transpose_b ? " x T" : " x ") + shape_str(b.shape()));
  }

  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  const size_t slabs = lead_count(a.shape(), 2);
  Tensor out = make_output(std::move(out_shape),
                           a.requires_grad() || b.requires_grad());

  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = out.values_mut().data();
  const size_t b_stride = b_broadcast ? 0 : k * n;

  for (size_t s = 0; s < slabs; ++s) {
    const double* As = A + s * m * k;
    const double* Bs = B + s * b_stride;
    double* Cs = C + s * m * n;
    if (!transpose_b) {
      for (size_t i = 0; i < m; ++i) {
        for (size_t p = 0; p < k; ++p) {
          K().axpy(As[i * k + p], Bs + p * n, Cs + i * n, n);
        }
      }
    } else {
      for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
          Cs[i * n + j] = K().dot(As + i * k, Bs + j * k, k);
        }
      }
    }
  }

  record(out, [this, a = a, b = b, out, m, k, n, slabs, b_stride, transpose_b]() mutable {
    std::span<const double> dC = out.grad();
    const double* A = a.values().data();
    const double* B = b.values().data();
    const bool need_a = wants_grad(a);
    const bool need_b = wants_grad(b);
    double* dA = need_a ? a.grad_mut().data() : nullptr;
    double* dB = need_b ? b.grad_mut().data() : nullptr;
    for (size_t s = 0; s < slabs; ++s) {
      const double* As = A + s * m * k;
      const double* Bs = B + s * b_stride;
      const double* dCs = dC.data() + s * m * n;
      double* dAs = need_a ? dA + s * m * k : nullptr;
      double* dBs = need_b ? dB + s * b_stride : nullptr;
      if (!transpose_b) {
        if (need_a) {
          for (size_t i = 0; i < m; ++i)
            for (size_t p = 0; p < k; ++p)
              dAs[i * k + p] += K().dot(dCs + i * n, Bs + p * n, n);
        }
        if (need_b) {
          for (size_t i = 0; i < m; ++i)
            for (size_t p = 0; p < k; ++p)
              K().axpy(As[i * k + p], dCs + i * n, dBs + p * n, n);
        }
      } else {
        if (need_a) {
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j)
              K().axpy(dCs[i * n + j], Bs + j * k, dAs + i * k, k);
        }
        if (need_b) {
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j)
              K().axpy(dCs[i * n + j], As + i * k, dBs + j * k, k);
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// add / multiply (same shape or trailing-suffix broadcast of b)

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  if (!is_suffix(b.shape(), a.shape())) {
    throw ShapeError("add: shape " + shape_str(b.shape()) + " is not broadcastable to " +
                     shape_str(a.shape()));
  }
  const size_t bn = b.size();
  const size_t slabs = bn == 0 ? 0 : a.size() / std::max<size_t>(bn, 1);
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  double* op = out.values_mut().data();
  for (size_t s = 0; s < slabs; ++s) K().add(ap + s * bn, bp, op + s * bn, bn);

  record(out, [this, a = a, b = b, out, bn, slabs]() mutable {
    std::span<const double> dout = out.grad();
    if (wants_grad(a)) K().axpy(1.0, dout.data(), a.grad_mut().data(), a.size());
    if (wants_grad(b)) {
      double* db = b.grad_mut().data();
      for (size_t s = 0; s < slabs; ++s) K().axpy(1.0, dout.data() + s * bn, db, bn);
    }
  });
  return out;
}

Tensor Graph::multiply(const Tensor& a, const Tensor& b) {
  if (!is_suffix(b.shape(), a.shape())) {
    throw ShapeError("multiply: shape " + shape_str(b.shape()) + " is not broadcastable to " +
                     shape_str(a.shape()));
  }
  const size_t bn = b.size();
  const size_t slabs = bn == 0 ? 0 : a.size() / std::max<size_t>(bn, 1);
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  double* op = out.values_mut().data();
  for (size_t s = 0; s < slabs; ++s) K().mul(ap + s * bn, bp, op + s * bn, bn);

  record(out, [this, a = a, b = b, out, bn, slabs]() mutable {
    std::span<const double> dout = out.grad();
    const double* ap = a.values().data();
    const double* bp = b.values().data();
    std::vector<double> tmp(bn);
    if (wants_grad(a)) {
      double* da = a.grad_mut().data();
      for (size_t s = 0; s < slabs; ++s) {
        K().mul(dout.data() + s * bn, bp, tmp.data(), bn);
        K().axpy(1.0, tmp.data(), da + s * bn, bn);
      }
    }
    if (wants_grad(b)) {
      double* db = b.grad_mut().data();
      for (size_t s = 0; s < slabs; ++s) {
        K().mul(dout.data() + s * bn, ap + s * bn, tmp.data(), bn);
        K().axpy(1.0, tmp.data(), db, bn);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// embedding_lookup

Tensor Graph::embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                               const Shape& id_shape) {
  if (table.ndim() != 2) {
    throw ShapeError("embedding_lookup: table must be 2-d, got " + shape_str(table.shape()));
  }
  if (ids.size() != shape_size(id_shape)) {
    throw ShapeError("embedding_lookup: id count " + std::to_string(ids.size()) +
                     " does not match id shape " + shape_str(id_shape));
  }
  const size_t vocab = table.shape()[0];
  const size_t dim = table.shape()[1];
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= vocab) {
      throw ShapeError("embedding_lookup: id " + std::to_string(id) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
  }
  Shape out_shape = id_shape;
  out_shape.push_back(dim);
  Tensor out = make_output(std::move(out_shape), table.requires_grad());
  double* op = out.values_mut().data();
  const double* tp = table.values().data();
  for (size_t i = 0; i < ids.size(); ++i) {
    std::memcpy(op + i * dim, tp + static_cast<size_t>(ids[i]) * dim, dim * sizeof(double));
  }

  record(out, [this, table = table, out, ids, dim]() mutable {
    if (!wants_grad(table)) return;
    std::span<const double> dout = out.grad();
    double* dt = table.grad_mut().data();
    for (size_t i = 0; i < ids.size(); ++i) {
      K().axpy(1.0, dout.data() + i * dim, dt + static_cast<size_t>(ids[i]) * dim, dim);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// softmax_rows

Tensor Graph::softmax_rows(const Tensor& x) {
  if (x.ndim() < 1 || x.shape().back() < 1) {
    throw ShapeError("softmax_rows: need a non-empty last dim, got " + shape_str(x.shape()));
  }
  const size_t d = x.shape().back();
  const size_t rows = lead_count(x.shape(), 1);
  Tensor out = make_output(x.shape(), x.requires_grad());
  const double* xp = x.values().data();
  double* yp = out.values_mut().data();
  std::vector<double> shifted(d);
  for (size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double* yrow = yp + r * d;
    double mx = K().reduce_max(row, d);
    K().shift_store(row, -mx, shifted.data(), d);
    for (size_t j = 0; j < d; ++j) yrow[j] = std::exp(shifted[j]);
    double sum = K().reduce_sum(yrow, d);
    K().scale_store(1.0 / sum, yrow, yrow, d);
  }

  record(out, [this, x = x, out, d, rows]() mutable {
    if (!wants_grad(x)) return;
    std::span<const double> dy = out.grad();
    const double* yp = out.values().data();
    double* dx = x.grad_mut().data();
    std::vector<double> tmp(d);
    for (size_t r = 0; r < rows; ++r) {
      const double* yrow = yp + r * d;
      const double* dyrow = dy.data() + r * d;
      double t = K().dot(dyrow, yrow, d);
      K().shift_store(dyrow, -t, tmp.data(), d);
      K().mul(tmp.data(), yrow, tmp.data(), d);
      K().axpy(1.0, tmp.data(), dx + r * d, d);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// layer_norm_rows

Tensor Graph::layer_norm_rows(const Tensor& x) {
  if (x.ndim() < 1 || x.shape().back() < 2) {
    throw ShapeError("layer_norm_rows: last dim must be >= 2, got " + shape_str(x.shape()));
  }
  const size_t d = x.shape().back();
  const size_t rows = lead_count(x.shape(), 1);
  Tensor out = make_output(x.shape(), x.requires_grad());
  const double* xp = x.values().data();
  double* yp = out.values_mut().data();
  std::vector<double> inv_std(rows);
  const double dn = static_cast<double>(d);
  for (size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double* yrow = yp + r * d;
    double mean = K().reduce_sum(row, d) / dn;
    K().shift_store(row, -mean, yrow, d);
    double var = K().dot(yrow, yrow, d) / dn;
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = inv;
    K().scale_store(inv, yrow, yrow, d);
  }

  record(out, [this, x = x, out, d, rows, inv_std = std::move(inv_std)]() mutable {
    if (!wants_grad(x)) return;
    std::span<const double> dy = out.grad();
    const double* yp = out.values().data();
    double* dx = x.grad_mut().data();
    const double dn = static_cast<double>(d);
    std::vector<double> tmp(d);
    for (size_t r = 0; r < rows; ++r) {
      const double* yrow = yp + r * d;
      const double* dyrow = dy.data() + r * d;
      double s1 = K().reduce_sum(dyrow, d) / dn;
      double s2 = K().dot(dyrow, yrow, d) / dn;
      K().shift_store(dyrow, -s1, tmp.data(), d);
      K().axpy(-s2, yrow, tmp.data(), d);
      K().axpy(inv_std[r], tmp.data(), dx + r * d, d);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// gelu (exact erf form)

Tensor Graph::gelu(const Tensor& x) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  const double* xp = x.values().data();
  double* yp = out.values_mut().data();
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) {
    yp[i] = 0.5 * xp[i] * (1.0 + std::erf(xp[i] * kInvSqrt2));
  }

  record(out, [this, x = x, out, n]() mutable {
    if (!wants_grad(x)) return;
    std::span<const double> dy = out.grad();
    const double* xp = x.values().data();
    double* dx = x.grad_mut().data();
    for (size_t i = 0; i < n; ++i) {
      double cdf = 0.5 * (1.0 + std::erf(xp[i] * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * xp[i] * xp[i]);
      dx[i] += dy[i] * (cdf + xp[i] * pdf);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// concat_last_dim / slice_last_dim

Tensor Graph::concat_last_dim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_last_dim: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  size_t total = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    if (p.ndim() < 1 || !same_lead(p.shape(), parts[0].shape(), 1) ||
        p.ndim() != parts[0].ndim()) {
      throw ShapeError("concat_last_dim: leading dims differ: " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    }
    total += p.shape().back();
    any_grad = any_grad || p.requires_grad();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  const size_t rows = shape_size(lead);
  Tensor out = make_output(std::move(out_shape), any_grad);
  double* op = out.values_mut().data();
  size_t offset = 0;
  for (const Tensor& p : parts) {
    const size_t pd = p.shape().back();
    const double* pp = p.values().data();
    for (size_t r = 0; r < rows; ++r) {
      std::memcpy(op + r * total + offset, pp + r * pd, pd * sizeof(double));
    }
    offset += pd;
  }

  record(out, [this, parts = parts, out, rows, total]() mutable {
    std::span<const double> dout = out.grad();
    size_t offset = 0;
    for (Tensor& p : parts) {
      const size_t pd = p.shape().back();
      if (wants_grad(p)) {
        double* dp = p.grad_mut().data();
        for (size_t r = 0; r < rows; ++r) {
          K().axpy(1.0, dout.data() + r * total + offset, dp + r * pd, pd);
        }
      }
      offset += pd;
    }
  });
  return out;
}

Tensor Graph::slice_last_dim(const Tensor& x, size_t offset, size_t len) {
  if (x.ndim() < 1 || offset + len > x.shape().back()) {
    throw ShapeError("slice_last_dim: range [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") outside last dim of " +
                     shape_str(x.shape()));
  }
  const size_t d = x.shape().back();
  const size_t rows = lead_count(x.shape(), 1);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.push_back(len);
  Tensor out = make_output(std::move(out_shape), x.requires_grad());
  const double* xp = x.values().data();
  double* op = out.values_mut().data();
  for (size_t r = 0; r < rows; ++r) {
    std::memcpy(op + r * len, xp + r * d + offset, len * sizeof(double));
  }

  record(out, [this, x = x, out, offset, len, d, rows]() mutable {
    if (!wants_grad(x)) return;
    std::span<const double> dout = out.grad();
    double* dx = x.grad_mut().data();
    for (size_t r = 0; r < rows; ++r) {
      K().axpy(1.0, dout.data() + r * len, dx + r * d + offset, len);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// scale

Tensor Graph::scale(const Tensor& x, const Tensor& scalar) {
  if (scalar.size() != 1 || !scalar.shape().empty()) {
    throw ShapeError("scale: multiplier must be a scalar tensor, got " +
                     shape_str(scalar.shape()));
  }
  Tensor out = make_output(x.shape(), x.requires_grad() || scalar.requires_grad());
  K().scale_store(scalar.item(), x.values().data(), out.values_mut().data(), x.size());

  record(out, [this, x = x, scalar = scalar, out]() mutable {
    std::span<const double> dout = out.grad();
    if (wants_grad(x)) {
      K().axpy(scalar.item(), dout.data(), x.grad_mut().data(), x.size());
    }
    if (wants_grad(scalar)) {
      scalar.grad_mut()[0] += K().dot(dout.data(), x.values().data(), x.size());
    }
  });
  return out;
}

Tensor Graph::scale(const Tensor& x, double c) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  K().scale_store(c, x.values().data(), out.values_mut().data(), x.size());
  record(out, [this, x = x, out, c]() mutable {
    if (!wants_grad(x)) return;
    K().axpy(c, out.grad().data(), x.grad_mut().data(), x.size());
  });
  return out;
}

Tensor Graph::reduce_sum(const Tensor& x) {
  Tensor out = make_output({}, x.requires_grad());
  out.values_mut()[0] = K().reduce_sum(x.values().data(), x.size());
  record(out, [this, x = x, out]() mutable {
    if (!wants_grad(x)) return;
    const double g = out.grad()[0];
    double* dx = x.grad_mut().data();
    for (size_t i = 0; i < x.size(); ++i) dx[i] += g;
  });
  return out;
}

// ---------------------------------------------------------------------------
// cross_entropy_loss

Tensor Graph::cross_entropy_loss(const Tensor& logits, const std::vector<int>& gold,
                                 int ignore_index) {
  if (logits.ndim() < 2) {
    throw ShapeError("cross_entropy_loss: logits need >= 2 dims, got " +
                     shape_str(logits.shape()));
  }
  const size_t labels = logits.shape().back();
  const size_t rows = lead_count(logits.shape(), 1);
  if (gold.size() != rows) {
    throw ShapeError("cross_entropy_loss: " + std::to_string(gold.size()) + " gold ids for " +
                     std::to_string(rows) + " positions");
  }
  for (int g : gold) {
    if (g != ignore_index && (g < 0 || static_cast<size_t>(g) >= labels)) {
      throw ShapeError("cross_entropy_loss: gold id " + std::to_string(g) + " outside [0," +
                       std::to_string(labels) + ")");
    }
  }

  const double* lp = logits.values().data();
  // cache the softmax rows for backward
  auto probs = std::make_shared<std::vector<double>>(rows * labels);
  std::vector<double> shifted(labels);
  size_t live = 0;
  double nll = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    if (gold[r] == ignore_index) continue;
    const double* row = lp + r * labels;
    double* prow = probs->data() + r * labels;
    double mx = K().reduce_max(row, labels);
    K().shift_store(row, -mx, shifted.data(), labels);
    for (size_t j = 0; j < labels; ++j) prow[j] = std::exp(shifted[j]);
    double sum = K().reduce_sum(prow, labels);
    K().scale_store(1.0 / sum, prow, prow, labels);
    nll -= shifted[static_cast<size_t>(gold[r])] - std::log(sum);
    ++live;
  }
  if (live == 0) throw ValidationError("cross_entropy_loss: empty loss support");

  Tensor out = make_output({}, logits.requires_grad());
  out.values_mut()[0] = nll / static_cast<double>(live);

  record(out, [this, logits = logits, out, gold, ignore_index, probs, labels, rows, live]() mutable {
    if (!wants_grad(logits)) return;
    const double g = out.grad()[0] / static_cast<double>(live);
    double* dl = logits.grad_mut().data();
    for (size_t r = 0; r < rows; ++r) {
      if (gold[r] == ignore_index) continue;
      const double* prow = probs->data() + r * labels;
      double* drow = dl + r * labels;
      K().axpy(g, prow, drow, labels);
      drow[static_cast<size_t>(gold[r])] -= g;
    }
  });
  return out;
}

}  // namespace headprune
