#include "headprune/importance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "headprune/artifact.hpp"
#include "headprune/graph.hpp"

namespace headprune {

std::vector<std::vector<double>> accumulate_head_gradients(EncoderModel& model,
                                                           const std::vector<Sentence>& dev,
                                                           const Vocab& vocab,
                                                           const LabelMap& labels,
                                                           size_t batch_size) {
  if (dev.empty()) throw ValidationError("accumulate_head_gradients: empty dev split");
  const ModelConfig& c = model.config();
  const HeadMask full = HeadMask::all_active(c.num_layers, c.num_heads);
  std::vector<std::vector<double>> acc(c.num_layers, std::vector<double>(c.num_heads, 0.0));

  for (const Batch& batch : make_batches(dev, vocab, labels, batch_size,
                                         c.max_sequence_length)) {
    Graph g;
    Tensor loss =
        g.cross_entropy_loss(model.forward(g, batch, full), batch.gold_labels, kIgnoreLabel);
    g.backward(loss);
    auto grads = model.head_gate_grads();
    for (size_t l = 0; l < c.num_layers; ++l) {
      for (size_t h = 0; h < c.num_heads; ++h) acc[l][h] += grads[l][h];
    }
    model.clear_gate_grads();
    for (Tensor& p : model.parameters()) p.drop_grad();
  }
  return acc;
}

HeadImportance normalize_scores(const std::vector<std::vector<double>>& raw) {
  if (raw.empty() || raw[0].empty()) throw ValidationError("normalize_scores: empty matrix");
  for (const auto& row : raw) {
    if (row.size() != raw[0].size()) throw ValidationError("normalize_scores: ragged matrix");
    for (double v : row) {
      if (!(v >= 0.0)) {  // also rejects NaN
        throw ValidationError("normalize_scores: entry " + std::to_string(v) +
                              " is negative; raw scores are accumulated absolute values");
      }
    }
  }

  HeadImportance out;
  out.scores = raw;
  for (auto& row : out.scores) {
    double sq = 0.0;
    for (double v : row) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > 0.0) {
      for (double& v : row) v /= norm;
    }
  }

  double lo = out.scores[0][0], hi = out.scores[0][0];
  for (const auto& row : out.scores) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) {
    out.degenerate = true;
    for (auto& row : out.scores) {
      for (double& v : row) v = 0.5;
    }
  } else {
    for (auto& row : out.scores) {
      for (double& v : row) v = (v - lo) / (hi - lo);
    }
  }
  return out;
}

HeadRanking rank_heads(const HeadImportance& importance) {
  const size_t L = importance.num_layers(), H = importance.num_heads();
  if (L == 0 || H == 0) throw ValidationError("rank_heads: empty importance matrix");
  HeadRanking r;
  r.tie_policy_tag = "ties-by-layer-then-head";
  r.order.reserve(L * H);
  for (size_t l = 0; l < L; ++l) {
    for (size_t h = 0; h < H; ++h) r.order.emplace_back(l, h);
  }
  std::stable_sort(r.order.begin(), r.order.end(), [&](const auto& a, const auto& b) {
    return importance.scores[a.first][a.second] < importance.scores[b.first][b.second];
  });
  return r;
}

// average (fractional) ranks: a run of equal values spans sorted positions
// [i+1, j+1] and every member gets the midpoint rank
std::vector<double> fractional_ranks(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho_flat(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ValidationError("spearman_rho: length mismatch, " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw ValidationError("spearman_rho: empty input");

  const size_t n = a.size();
  const std::vector<double> ra = fractional_ranks(a), rb = fractional_ranks(b);
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = ra[i] - ma, db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

CorrelationResult spearman_rho(const HeadImportance& a, const HeadImportance& b) {
  if (a.num_layers() != b.num_layers() || a.num_heads() != b.num_heads()) {
    throw ValidationError("spearman_rho: " + a.language_code + " is " +
                          std::to_string(a.num_layers()) + "x" + std::to_string(a.num_heads()) +
                          " but " + b.language_code + " is " + std::to_string(b.num_layers()) +
                          "x" + std::to_string(b.num_heads()));
  }
  std::vector<double> fa, fb;
  for (const auto& row : a.scores) fa.insert(fa.end(), row.begin(), row.end());
  for (const auto& row : b.scores) fb.insert(fb.end(), row.begin(), row.end());

  CorrelationResult r;
  r.rho = spearman_rho_flat(fa, fb);
  r.languages = {a.language_code, b.language_code};
  r.n = fa.size();
  return r;
}

CorrelationTable correlation_table(const std::vector<HeadImportance>& matrices) {
  if (matrices.size() < 2) {
    throw ValidationError("correlation_table: need at least two matrices");
  }
  const size_t n = matrices.size();
  CorrelationTable t;
  t.languages.reserve(n);
  for (const auto& m : matrices) t.languages.push_back(m.language_code);
  t.rho.assign(n, std::vector<double>(n, 1.0));  // self-correlation is 1 by definition
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double r = spearman_rho(matrices[i], matrices[j]).rho;
      t.rho[i][j] = r;
      t.rho[j][i] = r;
    }
  }
  return t;
}

std::string correlation_csv(const CorrelationTable& table) {
  std::ostringstream out;
  out << "language";
  for (const auto& code : table.languages) out << ',' << code;
  out << '\n';
  char cell[32];
  for (size_t i = 0; i < table.languages.size(); ++i) {
    out << table.languages[i];
    for (size_t j = 0; j < table.languages.size(); ++j) {
      std::snprintf(cell, sizeof(cell), "%.6f", table.rho[i][j]);
      out << ',' << cell;
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

CorrelationTable parse_correlation_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("correlation csv: empty document");
  auto header = split_csv_row(line);
  if (header.size() < 3 || header[0] != "language") {
    throw ValidationError("correlation csv: header must be language,<code>,<code>,...");
  }

  CorrelationTable t;
  t.languages.assign(header.begin() + 1, header.end());
  const size_t n = t.languages.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_row(line);
    if (fields.size() != n + 1) {
      throw ValidationError("correlation csv: row '" + fields[0] + "' has " +
                            std::to_string(fields.size() - 1) + " cells, expected " +
                            std::to_string(n));
    }
    const size_t row = t.rho.size();
    if (row >= n || fields[0] != t.languages[row]) {
      throw ValidationError("correlation csv: row order must mirror the header");
    }
    std::vector<double> values;
    for (size_t j = 1; j < fields.size(); ++j) {
      try {
        values.push_back(std::stod(fields[j]));
      } catch (const std::exception&) {
        throw ValidationError("correlation csv: cell '" + fields[j] + "' is not a number");
      }
    }
    t.rho.push_back(std::move(values));
  }
  if (t.rho.size() != n) {
    throw ValidationError("correlation csv: " + std::to_string(t.rho.size()) + " rows for " +
                          std::to_string(n) + " languages");
  }
  return t;
}

void save_importance(const HeadImportance& m, const std::string& path) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["language_code"] = m.language_code;
  j["task_kind"] = task_kind_name(m.task_kind);
  j["model_config_hash"] = m.model_config_hash;
  j["num_layers"] = m.num_layers();
  j["num_heads"] = m.num_heads();
  std::vector<double> flat;
  for (const auto& row : m.scores) flat.insert(flat.end(), row.begin(), row.end());
  j["scores"] = flat;  // row-major
  j["dev_sentence_count"] = m.dev_sentence_count;
  j["seed"] = m.seed;
  j["degenerate"] = m.degenerate;
  write_text_file(path, j.dump(2) + "\n");
}

HeadImportance load_importance(const std::string& path) {
  const Json j = read_json_file(path, "importance file");
  check_format_version(j, "importance file");
  return extract_fields("importance file " + path, [&] {
    HeadImportance m;
    m.language_code = j.at("language_code").get<std::string>();
    m.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
    m.model_config_hash = j.at("model_config_hash").get<std::string>();
    const size_t L = j.at("num_layers").get<size_t>();
    const size_t H = j.at("num_heads").get<size_t>();
    const auto flat = j.at("scores").get<std::vector<double>>();
    if (L == 0 || H == 0 || flat.size() != L * H) {
      throw ValidationError("importance file: " + std::to_string(flat.size()) +
                            " scores do not fill " + std::to_string(L) + "x" +
                            std::to_string(H));
    }
    for (double v : flat) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError("importance file: score " + std::to_string(v) +
                              " outside [0,1]");
      }
    }
    m.scores.assign(L, std::vector<double>(H, 0.0));
    for (size_t l = 0; l < L; ++l) {
      for (size_t h = 0; h < H; ++h) m.scores[l][h] = flat[l * H + h];
    }
    m.dev_sentence_count = j.at("dev_sentence_count").get<size_t>();
    m.seed = j.at("seed").get<uint64_t>();
    m.degenerate = j.value("degenerate", false);
    return m;
  });
}

}  // namespace headprune
