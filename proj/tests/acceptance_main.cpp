// Release gate: one self-contained check per acceptance criterion, each
// printed as a single PASS/FAIL line with its measured evidence. The numeric
// checks carry pinned tolerances; the behavioural ones run the real pipeline
// (synthetic corpora, ranking, sweeps, runner artifacts) end to end. The
// directional checks (criteria 6-8) share one multi-seed suite computation.
//
// Usage: acceptance [num_suite_seeds]   (default 5; fewer is a quick probe
// with reduced statistical confidence, the release gate runs the default)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "headprune/batching.hpp"
#include "headprune/common.hpp"
#include "headprune/corpus.hpp"
#include "headprune/encoder.hpp"
#include "headprune/graph.hpp"
#include "headprune/importance.hpp"
#include "headprune/metrics.hpp"
#include "headprune/protocol.hpp"
#include "headprune/rng.hpp"
#include "headprune/runner.hpp"
#include "oracles/grad_check.hpp"
#include "oracles/naive_spans.hpp"
#include "oracles/rank_correlation.hpp"
#include "support/random_graphs.hpp"
#include "support/temp_dir.hpp"

namespace headprune {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("acceptance: cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

LanguageProfile profile(std::string code, uint64_t vocab_seed, size_t window, double noise,
                        size_t train, size_t dev, size_t test) {
  LanguageProfile p;
  p.language_code = std::move(code);
  p.vocab_seed = vocab_seed;
  p.permutation.window = window;
  p.noise_rate = noise;
  p.sizes = {train, dev, test};
  return p;
}

// ---------------------------------------------------------------------------
// 1. autodiff gradients vs central finite differences, small graphs plus one
//    full encoder forward+loss

CriterionResult gradient_correctness() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    auto c = testsupport::make_random_graph_case(seed);
    worst = std::max(worst, oracle::grad_check(c.build, c.params, 1e-4).max_rel_err);
  }

  ModelConfig cfg;
  cfg.num_layers = 4;
  cfg.num_heads = 4;
  cfg.model_dim = 32;
  cfg.feedforward_dim = 64;
  cfg.vocab_size = 64;
  cfg.max_sequence_length = 16;
  cfg.num_labels = 9;
  cfg.seed = 7;
  EncoderModel model(cfg);

  Batch batch;
  batch.batch_size = 2;
  batch.seq_len = 12;
  Rng rng(404);
  for (size_t i = 0; i < batch.batch_size * batch.seq_len; ++i) {
    const bool pad = i >= 20;  // second row ends early so padding is exercised
    batch.token_ids.push_back(pad ? kPadId : static_cast<int>(2 + rng.index(62)));
    batch.gold_labels.push_back(pad ? kIgnoreLabel : static_cast<int>(rng.index(9)));
    batch.real.push_back(pad ? 0 : 1);
  }

  const HeadMask full = HeadMask::all_active(cfg.num_layers, cfg.num_heads);
  auto build = [&](Graph& g) {
    return g.cross_entropy_loss(model.forward(g, batch, full), batch.gold_labels, kIgnoreLabel);
  };
  // two sampled entries per tensor keeps the finite-difference pass tractable
  // while still touching every weight matrix in the encoder
  auto report = oracle::grad_check(build, model.parameters(), 1e-4, 2, 99);
  worst = std::max(worst, report.max_rel_err);

  const double secs = seconds_since(start);
  return {worst < 1e-3 && secs < 60.0,
          format("max rel err %.2e over 20 graphs + one 4-layer/4-head encoder", worst)};
}

// ---------------------------------------------------------------------------
// 2. accumulated |gate gradient| over a dev set vs the finite-difference gate
//    oracle, per head

CriterionResult gate_gradient_oracle() {
  const auto start = Clock::now();
  auto corpora = synth_generate({profile("fa", 501, 0, 0.0, 48, 10, 8),
                                 profile("fb", 502, 2, 0.02, 8, 4, 4)},
                                TaskKind::span, 2024);

  ExperimentSpec spec;
  spec.task = TaskKind::span;
  spec.source_languages = {"fa"};
  spec.target_language = "fb";
  spec.model.num_layers = 4;
  spec.model.num_heads = 4;
  spec.model.model_dim = 32;
  spec.model.feedforward_dim = 64;
  spec.model.vocab_size = 0;
  spec.model.max_sequence_length = 32;
  spec.model.num_labels = 0;
  spec.model.seed = 11;
  spec.train = {3, 5e-3, 8};
  spec.prune_limit = 4;
  spec.seed = 17;
  auto ctx = ExperimentContext::make(spec, std::move(corpora));

  const HeadMask full = HeadMask::all_active(4, 4);
  EncoderModel model = train_model(ctx, ctx.training_sentences(), full);
  const std::vector<Sentence>& dev = find_language(ctx.corpora, "fa").dev;
  const auto accumulated = accumulate_head_gradients(model, dev, ctx.vocab, ctx.labels, 8);

  const auto batches =
      make_batches(dev, ctx.vocab, ctx.labels, 8, ctx.model.max_sequence_length);
  auto loss_of = [&](const Batch& b) {
    Graph g;
    return g.cross_entropy_loss(model.forward(g, b, full), b.gold_labels, kIgnoreLabel).item();
  };

  const double eps = 1e-4;
  double worst = 0.0;
  for (size_t l = 0; l < 4; ++l) {
    for (size_t h = 0; h < 4; ++h) {
      Tensor gate = model.gate(l, h);  // shared handle; perturbed in place
      double fd = 0.0;
      for (const Batch& b : batches) {
        gate.values_mut()[0] = 1.0 + eps;
        const double up = loss_of(b);
        gate.values_mut()[0] = 1.0 - eps;
        const double down = loss_of(b);
        gate.values_mut()[0] = 1.0;
        fd += std::abs((up - down) / (2.0 * eps));
      }
      worst = std::max(worst, std::abs(accumulated[l][h] - fd) / std::max(fd, 1e-8));
    }
  }

  const double secs = seconds_since(start);
  return {worst < 1e-2 && secs < 60.0,
          format("16 heads over a 10-sentence dev set, max rel deviation %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 3. normalization contract: range, exact extremes, positive-scale invariance

CriterionResult normalization_contract() {
  Rng rng(0xC3);
  double worst_drift = 0.0;
  size_t degenerate_seen = 0;
  for (size_t iter = 0; iter < 1000; ++iter) {
    const size_t layers = 1 + rng.index(6);
    const size_t heads = 1 + rng.index(8);
    std::vector<std::vector<double>> raw(layers, std::vector<double>(heads));
    if (iter % 50 == 7) {
      // all-equal (including all-zero) matrices must come back flat and flagged
      const double fill = iter % 100 == 7 ? 0.0 : rng.uniform();
      for (auto& row : raw) std::fill(row.begin(), row.end(), fill);
    } else {
      for (auto& row : raw) {
        for (double& v : row) v = rng.uniform() * std::pow(10.0, rng.uniform(-3.0, 3.0));
      }
    }

    const HeadImportance m = normalize_scores(raw);
    double lo = 2.0, hi = -1.0;
    for (const auto& row : m.scores) {
      for (double v : row) {
        if (!(v >= 0.0 && v <= 1.0)) return {false, "entry outside [0,1]"};
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (m.degenerate) {
      ++degenerate_seen;
      if (lo != 0.5 || hi != 0.5) return {false, "degenerate matrix not flat 0.5"};
    } else if (lo != 0.0 || hi != 1.0) {
      return {false, format("extremes %.17g..%.17g instead of exactly 0..1", lo, hi)};
    }

    // scaling every raw score by one positive constant must not move anything
    const double scale = std::pow(10.0, rng.uniform(-4.0, 4.0));
    auto scaled = raw;
    for (auto& row : scaled) {
      for (double& v : row) v *= scale;
    }
    const HeadImportance ms = normalize_scores(scaled);
    if (ms.degenerate != m.degenerate) return {false, "scale flipped the degenerate flag"};
    for (size_t l = 0; l < layers; ++l) {
      for (size_t h = 0; h < heads; ++h) {
        worst_drift = std::max(worst_drift, std::abs(ms.scores[l][h] - m.scores[l][h]));
      }
    }
  }
  return {worst_drift <= 1e-12 && degenerate_seen > 0,
          format("1000 matrices (%zu degenerate), worst scale-invariance drift %.1e",
                 degenerate_seen, worst_drift)};
}

// ---------------------------------------------------------------------------
// 4. Spearman vs the brute-force counting-rank oracle, exact

CriterionResult spearman_oracle() {
  std::vector<double> reference = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> perm = reference;
  size_t permutations = 0;
  do {
    if (spearman_rho_flat(perm, reference) != oracle::naive_spearman(perm, reference)) {
      return {false, format("mismatch on permutation #%zu", permutations)};
    }
    ++permutations;
  } while (std::next_permutation(perm.begin(), perm.end()));

  Rng rng(0xC4);
  for (size_t iter = 0; iter < 1000; ++iter) {
    const size_t n = 3 + rng.index(10);
    std::vector<double> a(n), b(n);
    // values from a four-symbol alphabet force heavy ties in both vectors
    for (double& v : a) v = static_cast<double>(rng.index(4));
    for (double& v : b) v = static_cast<double>(rng.index(4));
    if (spearman_rho_flat(a, b) != oracle::naive_spearman(a, b)) {
      return {false, format("mismatch on tied vector #%zu", iter)};
    }
  }

  if (spearman_rho_flat({1, 2, 3}, {1, 3, 2}) != 0.5) {
    return {false, "hand case (1,2,3) vs (1,3,2) is not 0.5"};
  }
  return {true, format("%zu permutations + 1000 tied vectors, all exact", permutations)};
}

// ---------------------------------------------------------------------------
// 5. span F1 vs the naive state-machine scorer, exact

CriterionResult span_f1_oracle() {
  static const std::vector<std::string> alphabet = {
      "O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-MISC", "I-MISC"};
  Rng rng(0xC5);
  for (size_t iter = 0; iter < 100; ++iter) {
    const size_t sentences = 1 + rng.index(6);
    std::vector<Sentence> gold;
    std::vector<std::vector<std::string>> gold_tags, pred_tags;
    for (size_t s = 0; s < sentences; ++s) {
      const size_t len = 1 + rng.index(12);
      std::vector<std::string> g(len), p(len);
      for (auto& t : g) t = alphabet[rng.index(alphabet.size())];
      for (auto& t : p) t = alphabet[rng.index(alphabet.size())];
      Sentence sent;
      sent.tokens.assign(len, "w");
      sent.tags = g;
      gold.push_back(std::move(sent));
      gold_tags.push_back(std::move(g));
      pred_tags.push_back(std::move(p));
    }
    const EvalResult r = span_f1(gold, pred_tags);
    const oracle::NaiveScores o = oracle::naive_span_scores(gold_tags, pred_tags);
    if (r.precision != o.precision || r.recall != o.recall || r.f1 != o.f1 ||
        r.support != o.gold_spans) {
      return {false, format("mismatch on random corpus #%zu", iter)};
    }
  }

  // hand cases: exact scores, including the zero-prediction convention
  std::vector<Sentence> gold(1);
  gold[0].tokens = {"w", "w", "w", "w"};
  gold[0].tags = {"B-PER", "I-PER", "O", "B-LOC"};
  if (span_f1(gold, {{"B-PER", "I-PER", "O", "B-LOC"}}).f1 != 1.0) {
    return {false, "perfect prediction is not F1 1.0"};
  }
  if (span_f1(gold, {{"B-PER", "O", "O", "B-LOC"}}).f1 != 0.5) {
    return {false, "boundary mismatch hand case is not F1 0.5"};
  }
  if (span_f1(gold, {{"B-ORG", "I-ORG", "O", "O"}}).f1 != 0.0) {
    return {false, "type mismatch hand case is not F1 0.0"};
  }
  const EvalResult none = span_f1(gold, {{"O", "O", "O", "O"}});
  if (none.precision != 0.0 || none.recall != 0.0 || none.f1 != 0.0) {
    return {false, "no-prediction hand case is not all-zero"};
  }
  return {true, "100 random tag corpora + hand cases, all exact"};
}

// ---------------------------------------------------------------------------
// 6-8. the multi-seed synthetic suite: three languages on one shared grammar
// (aa plain; bb, cc with local word-order windows and emission noise) plus an
// independent-grammar control dd. Per seed: rank on aa, sweep ranked/max/
// random cross-lingually onto bb, and rank bb, cc, dd for the agreement
// check. Criteria 6-8 read different slices of the same computation.

struct SuiteData {
  bool ready = false;
  std::string error;
  size_t seeds = 0;
  double suite_seconds = 0.0;  // generation + ranking + the three sweeps
  std::vector<double> ranked_best, max_best, rand_best;
  std::vector<double> unpruned, pruned_best;
  std::vector<double> shared_rho, control_rho;  // per-seed pairwise means
};

void compute_suite(SuiteData& d, size_t num_seeds) {
  for (uint64_t seed = 1; seed <= num_seeds; ++seed) {
    const auto t0 = Clock::now();
    auto shared = synth_generate({profile("aa", derive_seed(seed, "suite.vocab", 0), 0, 0.0,
                                          480, 64, 128),
                                  profile("bb", derive_seed(seed, "suite.vocab", 1), 2, 0.02,
                                          480, 64, 128),
                                  profile("cc", derive_seed(seed, "suite.vocab", 2), 2, 0.02,
                                          480, 64, 128)},
                                 TaskKind::span, derive_seed(seed, "suite.grammar.shared"));

    ExperimentSpec spec;
    spec.task = TaskKind::span;
    spec.source_languages = {"aa"};
    spec.target_language = "bb";
    spec.setting = Setting::cross_lingual;
    spec.model.num_layers = 4;
    spec.model.num_heads = 4;
    spec.model.model_dim = 32;
    spec.model.feedforward_dim = 64;
    spec.model.vocab_size = 0;
    spec.model.max_sequence_length = 32;
    spec.model.num_labels = 0;
    spec.model.seed = derive_seed(seed, "suite.model");
    spec.train = {30, 5e-3, 16};
    spec.prune_limit = 4;
    spec.seed = seed;

    const Corpus& aa = find_language(shared, "aa");
    const Corpus& bb = find_language(shared, "bb");
    const Corpus& cc = find_language(shared, "cc");
    auto ctx = ExperimentContext::make(spec, {aa, bb});

    const RankPipelineResult rp = rank_pipeline(ctx, "aa");
    const SweepResult ranked = prune_sweep(ctx, rank_heads(rp.importance), rp.provenance);
    const SweepResult maxp = baseline_max_prune(ctx, rp.importance);
    const SweepResult randp = baseline_random_prune(ctx, 42);
    d.suite_seconds += seconds_since(t0);

    d.ranked_best.push_back(ranked.best_score);
    d.max_best.push_back(maxp.best_score);
    d.rand_best.push_back(randp.best_score);
    if (ranked.per_k_scores.empty() || ranked.per_k_scores[0].k != 0) {
      throw Error("suite: ranked sweep is missing its unpruned point");
    }
    d.unpruned.push_back(ranked.per_k_scores[0].score);
    double best_pruned = 0.0;
    bool have_pruned = false;
    for (const SweepPoint& p : ranked.per_k_scores) {
      if (p.k == 0) continue;
      best_pruned = have_pruned ? std::max(best_pruned, p.score) : p.score;
      have_pruned = true;
    }
    if (!have_pruned) throw Error("suite: ranked sweep produced no pruned points");
    d.pruned_best.push_back(best_pruned);

    // agreement block: rank the other shared languages and the control; the
    // control shares aa's plain surface shape but not the grammar
    auto control = synth_generate({profile("dd", derive_seed(seed, "suite.vocab", 3), 0, 0.0,
                                           480, 64, 8),
                                   profile("ee", derive_seed(seed, "suite.vocab", 4), 0, 0.0,
                                           8, 4, 4)},
                                  TaskKind::span, derive_seed(seed, "suite.grammar.control"));
    auto rank_only = [&](const Corpus& src, const Corpus& other) {
      ExperimentSpec s = spec;
      s.source_languages = {src.language_code};
      s.target_language = other.language_code;
      auto c = ExperimentContext::make(s, {src, other});
      return rank_pipeline(c, src.language_code).importance;
    };
    const HeadImportance& imp_aa = rp.importance;
    const HeadImportance imp_bb = rank_only(bb, aa);
    const HeadImportance imp_cc = rank_only(cc, aa);
    const HeadImportance imp_dd =
        rank_only(find_language(control, "dd"), find_language(control, "ee"));

    d.shared_rho.push_back(mean({spearman_rho(imp_aa, imp_bb).rho,
                                 spearman_rho(imp_aa, imp_cc).rho,
                                 spearman_rho(imp_bb, imp_cc).rho}));
    d.control_rho.push_back(mean({spearman_rho(imp_aa, imp_dd).rho,
                                  spearman_rho(imp_bb, imp_dd).rho,
                                  spearman_rho(imp_cc, imp_dd).rho}));
  }
  d.seeds = num_seeds;
  d.ready = true;
}

SuiteData& suite(size_t num_seeds) {
  static SuiteData d;
  if (!d.ready && d.error.empty()) {
    try {
      compute_suite(d, num_seeds);
    } catch (const std::exception& e) {
      d.error = e.what();
    }
  }
  return d;
}

CriterionResult low_rank_pruning_beats_baselines(size_t num_seeds) {
  SuiteData& d = suite(num_seeds);
  if (!d.ready) return {false, "suite failed: " + d.error};
  const double ranked = median(d.ranked_best);
  const double maxp = median(d.max_best);
  const double randp = median(d.rand_best);
  const bool pass = ranked >= maxp && ranked >= randp && d.suite_seconds < 600.0;
  return {pass, format("median best F1 low-rank %.4f vs high-rank %.4f vs random %.4f; "
                       "suite %.0f s over %zu seeds",
                       ranked, maxp, randp, d.suite_seconds, d.seeds)};
}

CriterionResult pruning_preserves_transfer(size_t num_seeds) {
  SuiteData& d = suite(num_seeds);
  if (!d.ready) return {false, "suite failed: " + d.error};
  const double un = median(d.unpruned);
  const double pruned = median(d.pruned_best);
  return {pruned >= un - 0.005,
          format("median target F1 unpruned %.4f, best pruned %.4f (margin 0.005)", un, pruned)};
}

CriterionResult rankings_agree_across_languages(size_t num_seeds) {
  SuiteData& d = suite(num_seeds);
  if (!d.ready) return {false, "suite failed: " + d.error};
  const double shared = mean(d.shared_rho);
  const double control = mean(d.control_rho);
  return {shared > 0.0 && shared > control,
          format("mean pairwise rho %.3f within the shared grammar vs %.3f against the "
                 "control, %zu seeds",
                 shared, control, d.seeds)};
}

// ---------------------------------------------------------------------------
// 9. best-candidate selection returns exactly the best per-source sweep

CriterionResult best_candidate_selection_is_exact() {
  auto corpora = synth_generate({profile("pp", 601, 0, 0.0, 24, 8, 12),
                                 profile("qq", 602, 2, 0.02, 24, 8, 12),
                                 profile("rr", 603, 0, 0.0, 24, 8, 12)},
                                TaskKind::span, 77);

  ExperimentSpec spec;
  spec.task = TaskKind::span;
  spec.source_languages = {"pp", "qq"};
  spec.target_language = "rr";
  spec.model.num_layers = 2;
  spec.model.num_heads = 2;
  spec.model.model_dim = 16;
  spec.model.feedforward_dim = 32;
  spec.model.vocab_size = 0;
  spec.model.max_sequence_length = 32;
  spec.model.num_labels = 0;
  spec.model.seed = 5;
  spec.train = {2, 5e-3, 8};
  spec.prune_limit = 2;
  spec.seed = 9;
  auto ctx = ExperimentContext::make(spec, std::move(corpora));

  std::vector<std::pair<std::string, SweepResult>> per_language;
  size_t trainings = 0;
  double best = 0.0;
  for (const std::string& lang : spec.source_languages) {
    const RankPipelineResult rp = rank_pipeline(ctx, lang);
    SweepResult sweep = prune_sweep(ctx, rank_heads(rp.importance), rp.provenance);
    trainings += sweep.trainings;
    best = per_language.empty() ? sweep.best_score : std::max(best, sweep.best_score);
    per_language.emplace_back(lang, std::move(sweep));
  }

  const EcSelection ec = select_rankings_ec(per_language);
  const bool pass = ec.sweep.best_score == best && ec.total_trainings == trainings;
  return {pass, format("winner %s best F1 %.4f equals the per-source maximum; %zu trainings "
                       "accounted",
                       ec.language.c_str(), ec.sweep.best_score, ec.total_trainings)};
}

// ---------------------------------------------------------------------------
// 10. subsample partitions: disjoint, exhaustive, near-equal, nested; and the
//     study emits exactly two curves with one point per requested tenth

CriterionResult subsample_structure() {
  for (size_t n : {size_t{10}, size_t{50}, size_t{1000}}) {
    const auto parts = subsample_partition(n, 3);
    if (parts.size() != 10) return {false, format("n=%zu: %zu chunks", n, parts.size())};
    std::vector<char> seen(n, 0);
    for (const auto& chunk : parts) {
      if (chunk.size() < n / 10 || chunk.size() > (n + 9) / 10) {
        return {false, format("n=%zu: chunk of %zu is not near-equal", n, chunk.size())};
      }
      for (size_t idx : chunk) {
        if (idx >= n || seen[idx]) return {false, format("n=%zu: overlap or range", n)};
        seen[idx] = 1;
      }
    }
    if (std::count(seen.begin(), seen.end(), 1) != static_cast<long>(n)) {
      return {false, format("n=%zu: partition is not exhaustive", n)};
    }
  }

  // nesting on a real corpus: each tenth's sentences contain the previous
  auto corpora = synth_generate({profile("gg", 611, 0, 0.0, 50, 4, 4),
                                 profile("hh", 612, 0, 0.0, 8, 4, 4)},
                                TaskKind::span, 31);
  const Corpus& gg = find_language(corpora, "gg");
  std::vector<uint64_t> previous;
  for (int k = 1; k <= 9; ++k) {
    const Corpus sub = subsample_train(gg, k, 12345);
    std::vector<uint64_t> hashes;
    for (const Sentence& s : sub.train) hashes.push_back(sentence_hash(s));
    std::sort(hashes.begin(), hashes.end());
    if (!std::includes(hashes.begin(), hashes.end(), previous.begin(), previous.end())) {
      return {false, format("tenths %d does not contain tenths %d", k, k - 1)};
    }
    previous = std::move(hashes);
  }

  // the staged-data study through the runner: |tenths| rows, each carrying
  // both the unpruned and the best-pruned score (the two curves)
  testing::TempDir tmp;
  RunSpec rs;
  rs.languages.push_back({profile("pp", 701, 0, 0.0, 30, 6, 8), std::nullopt});
  rs.languages.push_back({profile("qq", 702, 2, 0.02, 30, 6, 8), std::nullopt});
  rs.experiment.task = TaskKind::span;
  rs.experiment.source_languages = {"pp"};
  rs.experiment.target_language = "qq";
  rs.experiment.setting = Setting::multi_lingual;
  rs.experiment.model.num_layers = 2;
  rs.experiment.model.num_heads = 2;
  rs.experiment.model.model_dim = 16;
  rs.experiment.model.feedforward_dim = 32;
  rs.experiment.model.vocab_size = 0;
  rs.experiment.model.max_sequence_length = 32;
  rs.experiment.model.num_labels = 0;
  rs.experiment.model.seed = 5;
  rs.experiment.train = {2, 5e-3, 8};
  rs.experiment.prune_limit = 1;
  rs.experiment.seed = 13;
  rs.subsample_tenths = {1, 2, 3};

  RunnerOptions options;
  options.out_dir = tmp.file("out");
  Runner runner(rs, options);
  runner.run("gen-data");
  runner.run("rank");
  const RunRecord record = runner.run("subsample-study");
  const Json rows = record.payload.at("rows");
  if (rows.size() != 3) return {false, format("study emitted %zu rows, expected 3", rows.size())};
  for (const Json& row : rows) {
    if (!row.contains("unpruned_f1") || !row.contains("pruned_best_f1")) {
      return {false, "study row is missing one of the two curves"};
    }
  }
  return {true, "partitions of 10/50/1000 disjoint+nested; study emitted 2 curves x 3 tenths"};
}

// ---------------------------------------------------------------------------
// 11. rerunning the same spec and seed reproduces every byte

CriterionResult byte_identical_reruns() {
  RunSpec rs;
  rs.languages.push_back({profile("pp", 801, 0, 0.0, 24, 8, 12), std::nullopt});
  rs.languages.push_back({profile("qq", 802, 2, 0.02, 24, 8, 12), std::nullopt});
  rs.experiment.task = TaskKind::span;
  rs.experiment.source_languages = {"pp"};
  rs.experiment.target_language = "qq";
  rs.experiment.setting = Setting::cross_lingual;
  rs.experiment.model.num_layers = 2;
  rs.experiment.model.num_heads = 2;
  rs.experiment.model.model_dim = 16;
  rs.experiment.model.feedforward_dim = 32;
  rs.experiment.model.vocab_size = 0;
  rs.experiment.model.max_sequence_length = 32;
  rs.experiment.model.num_labels = 0;
  rs.experiment.model.seed = 5;
  rs.experiment.train = {2, 5e-3, 8};
  rs.experiment.prune_limit = 2;
  rs.experiment.seed = 21;

  testing::TempDir tmp;
  std::string spec_hash;
  for (const char* leaf : {"a", "b"}) {
    RunnerOptions options;
    options.out_dir = tmp.file(leaf);
    Runner runner(rs, options);
    spec_hash = runner.spec_hash();
    runner.run("gen-data");
    runner.run("rank");
    runner.run("sweep");
  }

  const std::string log_a = read_file(tmp.file("a") + "/results.jsonl");
  const std::string log_b = read_file(tmp.file("b") + "/results.jsonl");
  if (log_a != log_b) return {false, "results logs differ between reruns"};
  const std::string imp_rel = "/importance/rank-pp-" + spec_hash + ".json";
  if (read_file(tmp.file("a") + imp_rel) != read_file(tmp.file("b") + imp_rel)) {
    return {false, "importance artifacts differ between reruns"};
  }
  const std::string sweep_rel = "/sweeps/sweep-ranked-" + spec_hash + ".json";
  if (read_file(tmp.file("a") + sweep_rel) != read_file(tmp.file("b") + sweep_rel)) {
    return {false, "sweep artifacts differ between reruns"};
  }
  return {true, format("results log (%zu bytes), importance and sweep artifacts byte-identical",
                       log_a.size())};
}

}  // namespace
}  // namespace headprune

int main(int argc, char** argv) {
  using namespace headprune;
  size_t num_seeds = 5;
  if (argc > 1) {
    const long parsed = std::atol(argv[1]);
    if (parsed < 1) {
      std::fprintf(stderr, "usage: %s [num_suite_seeds >= 1]\n", argv[0]);
      return 2;
    }
    num_seeds = static_cast<size_t>(parsed);
  }

  const std::vector<std::pair<std::string, std::function<CriterionResult()>>> criteria = {
      {"autodiff gradients match central differences", gradient_correctness},
      {"accumulated gate gradients match the finite-difference oracle", gate_gradient_oracle},
      {"importance normalization: range, extremes, scale invariance", normalization_contract},
      {"spearman agrees exactly with the brute-force ranks", spearman_oracle},
      {"span F1 agrees exactly with the naive scorer", span_f1_oracle},
      {"pruning lowest-ranked heads beats high-rank and random pruning",
       [&] { return low_rank_pruning_beats_baselines(num_seeds); }},
      {"pruning a few heads preserves cross-lingual transfer",
       [&] { return pruning_preserves_transfer(num_seeds); }},
      {"head rankings agree across languages sharing a grammar",
       [&] { return rankings_agree_across_languages(num_seeds); }},
      {"best-candidate selection returns the per-source maximum exactly",
       best_candidate_selection_is_exact},
      {"subsample partitions are disjoint, exhaustive and nested", subsample_structure},
      {"identical spec and seed reproduce byte-identical artifacts", byte_identical_reruns},
  };

  std::printf("acceptance gate: %zu criteria, suite over %zu seed(s)\n", criteria.size(),
              num_seeds);
  size_t failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    CriterionResult r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    if (!r.pass) ++failures;
    std::printf("[%2zu/%zu] %s  %s — %s (%.1f s)\n", i + 1, criteria.size(),
                r.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), r.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
  }

  if (failures == 0) {
    std::printf("acceptance gate: all %zu criteria passed\n", criteria.size());
    return 0;
  }
  std::printf("acceptance gate: %zu of %zu criteria FAILED\n", failures, criteria.size());
  return 1;
}
