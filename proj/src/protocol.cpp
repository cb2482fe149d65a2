#include "headprune/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "headprune/artifact.hpp"
#include "headprune/graph.hpp"
#include "headprune/hash.hpp"
#include "headprune/optimizer.hpp"
#include "headprune/rng.hpp"

namespace headprune {

// ---------------------------------------------------------------------------
// Setting / TrainConfig / ExperimentSpec

std::string setting_name(Setting setting) {
  return setting == Setting::cross_lingual ? "cross_lingual" : "multi_lingual";
}

Setting parse_setting(const std::string& name) {
  if (name == "cross_lingual") return Setting::cross_lingual;
  if (name == "multi_lingual") return Setting::multi_lingual;
  throw ValidationError("unknown setting '" + name +
                        "' (expected cross_lingual or multi_lingual)");
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(lr > 0.0) || !std::isfinite(lr)) problems.push_back("lr must be finite and > 0");
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (!problems.empty()) {
    std::string msg = "train config invalid:";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
}

void ExperimentSpec::validate() const {
  std::vector<std::string> problems;
  if (source_languages.empty()) problems.push_back("at least one source language required");
  std::set<std::string> seen;
  for (const std::string& code : source_languages) {
    if (code.empty()) problems.push_back("empty source language code");
    if (!seen.insert(code).second) problems.push_back("duplicate source language '" + code + "'");
  }
  if (target_language.empty()) {
    problems.push_back("target language required");
  } else if (seen.count(target_language) > 0) {
    // in either setting the target train split must enter training at most
    // once (and under cross-lingual not at all), so the target cannot double
    // as a source
    problems.push_back("target language '" + target_language + "' also listed as a source");
  }
  if (model.num_layers >= 1 && model.num_heads >= 1) {
    const size_t prunable = model.num_layers * model.num_heads - model.num_layers;
    if (prune_limit > prunable) {
      problems.push_back("prune_limit " + std::to_string(prune_limit) + " exceeds " +
                         std::to_string(prunable) + " prunable heads (a layer must keep one)");
    }
  }
  try {
    train.validate();
  } catch (const ValidationError& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) {
    std::string msg = "experiment spec invalid:";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
}

uint64_t ExperimentSpec::hash() const {
  std::ostringstream os;
  os << "task=" << task_kind_name(task) << ";sources=";
  for (size_t i = 0; i < source_languages.size(); ++i) {
    if (i > 0) os << ",";
    os << source_languages[i];
  }
  os << ";target=" << target_language << ";setting=" << setting_name(setting)
     << ";model=" << model.hash_hex() << ";epochs=" << train.epochs;
  char lr_buf[40];
  std::snprintf(lr_buf, sizeof lr_buf, "%.17g", train.lr);
  os << ";lr=" << lr_buf << ";batch=" << train.batch_size << ";limit=" << prune_limit
     << ";seed=" << seed << ";early_stop=" << (early_stop_on_drop ? 1 : 0);
  return fnv1a64(os.str());
}

std::string ExperimentSpec::hash_hex() const { return to_hex(hash()); }

// ---------------------------------------------------------------------------
// ExperimentContext

const Corpus& find_language(const std::vector<Corpus>& corpora, const std::string& code) {
  for (const Corpus& c : corpora) {
    if (c.language_code == code) return c;
  }
  throw MissingArtifactError("no corpus for language '" + code + "'");
}

ExperimentContext ExperimentContext::make(ExperimentSpec spec, std::vector<Corpus> corpora) {
  spec.validate();
  ExperimentContext ctx;
  ctx.spec = std::move(spec);
  ctx.corpora = std::move(corpora);
  for (const std::string& code : ctx.spec.source_languages) find_language(ctx.corpora, code);
  find_language(ctx.corpora, ctx.spec.target_language);
  for (const Corpus& c : ctx.corpora) {
    if (c.task_kind != ctx.spec.task) {
      throw ValidationError("corpus '" + c.language_code + "' is a " +
                            task_kind_name(c.task_kind) + " corpus but the spec task is " +
                            task_kind_name(ctx.spec.task));
    }
  }

  // one shared vocabulary and label space over every registered language (the
  // stand-in for a single pretrained multilingual vocabulary)
  std::vector<const Corpus*> all;
  all.reserve(ctx.corpora.size());
  for (const Corpus& c : ctx.corpora) all.push_back(&c);
  ctx.vocab = build_vocab(all);
  ctx.labels = build_label_map(all);

  ctx.model = ctx.spec.model;
  if (ctx.model.vocab_size == 0) {
    ctx.model.vocab_size = ctx.vocab.size();
  } else if (ctx.model.vocab_size != ctx.vocab.size()) {
    throw ValidationError("spec fixes vocab_size=" + std::to_string(ctx.model.vocab_size) +
                          " but the corpora produce " + std::to_string(ctx.vocab.size()));
  }
  if (ctx.model.num_labels == 0) {
    ctx.model.num_labels = ctx.labels.size();
  } else if (ctx.model.num_labels != ctx.labels.size()) {
    throw ValidationError("spec fixes num_labels=" + std::to_string(ctx.model.num_labels) +
                          " but the corpora produce " + std::to_string(ctx.labels.size()));
  }
  ctx.model.validate();
  return ctx;
}

std::vector<Sentence> ExperimentContext::training_sentences() const {
  std::vector<Sentence> out;
  for (const std::string& code : spec.source_languages) {
    const Corpus& c = find_language(corpora, code);
    out.insert(out.end(), c.train.begin(), c.train.end());
  }
  if (spec.setting == Setting::multi_lingual) {
    const Corpus& t = target();
    out.insert(out.end(), t.train.begin(), t.train.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// PrunePlan

HeadMask PrunePlan::mask(size_t num_layers, size_t num_heads) const {
  HeadMask m = HeadMask::all_active(num_layers, num_heads);
  for (const auto& [l, h] : heads) m.deactivate(l, h);
  m.validate();
  return m;
}

namespace {

// Greedy prefix walk shared by every sweep: take heads in `order` until k are
// taken, skipping any whose layer is already down to its last active head.
PrunePlan plan_from_order(const std::vector<std::pair<size_t, size_t>>& order, size_t k,
                          size_t num_layers, size_t num_heads) {
  std::set<std::pair<size_t, size_t>> seen;
  for (const auto& [l, h] : order) {
    if (l >= num_layers || h >= num_heads) {
      throw ShapeError("prune order names head (" + std::to_string(l) + "," + std::to_string(h) +
                       ") outside " + std::to_string(num_layers) + "x" +
                       std::to_string(num_heads));
    }
    if (!seen.insert({l, h}).second) {
      throw ShapeError("prune order repeats head (" + std::to_string(l) + "," +
                       std::to_string(h) + ")");
    }
  }
  PrunePlan plan;
  std::vector<size_t> active(num_layers, num_heads);
  for (const auto& head : order) {
    if (plan.heads.size() == k) break;
    if (active[head.first] <= 1) {
      plan.skipped.push_back(head);
      continue;
    }
    --active[head.first];
    plan.heads.push_back(head);
  }
  if (plan.heads.size() < k) {
    throw ValidationError("cannot prune " + std::to_string(k) + " heads: only " +
                          std::to_string(plan.heads.size()) +
                          " candidates remain after layer-emptiness skips");
  }
  return plan;
}

}  // namespace

PrunePlan make_prune_plan(const HeadRanking& ranking, size_t k, size_t num_layers,
                          size_t num_heads) {
  return plan_from_order(ranking.order, k, num_layers, num_heads);
}

// ---------------------------------------------------------------------------
// Training and evaluation

EncoderModel train_model(const ExperimentContext& ctx, const std::vector<Sentence>& train,
                         const HeadMask& mask, LoaderJournal* journal,
                         const std::string& journal_tag) {
  EncoderModel model(ctx.model);
  if (ctx.spec.train.epochs == 0) return model;
  if (train.empty()) throw ValidationError("training set is empty");

  const auto batches = make_batches(train, ctx.vocab, ctx.labels, ctx.spec.train.batch_size,
                                    ctx.model.max_sequence_length, journal, journal_tag);
  AdamOptimizer::Config oc;
  oc.lr = ctx.spec.train.lr;
  AdamOptimizer opt(model.parameters(), oc);
  for (size_t epoch = 0; epoch < ctx.spec.train.epochs; ++epoch) {
    for (size_t i = 0; i < batches.size(); ++i) {
      Graph g;
      Tensor loss = g.cross_entropy_loss(model.forward(g, batches[i], mask),
                                         batches[i].gold_labels, kIgnoreLabel);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(i + 1));
      }
      g.backward(loss);
      opt.step();
    }
  }
  // training is not a ranking pass; leave no gate gradients behind
  model.clear_gate_grads();
  return model;
}

std::vector<std::vector<std::string>> predict_tags(const EncoderModel& model,
                                                   const HeadMask& mask,
                                                   const std::vector<Sentence>& sentences,
                                                   const Vocab& vocab, const LabelMap& labels,
                                                   size_t batch_size) {
  std::vector<std::vector<std::string>> out;
  out.reserve(sentences.size());
  const size_t num_labels = labels.size();
  for (const Batch& b : make_batches(sentences, vocab, labels, batch_size,
                                     model.config().max_sequence_length)) {
    Graph g(false);
    Tensor logits = model.forward(g, b, mask);
    const auto& v = logits.values();
    for (size_t r = 0; r < b.batch_size; ++r) {
      std::vector<std::string> tags;
      for (size_t t = 0; t < b.seq_len; ++t) {
        if (!b.real[r * b.seq_len + t]) continue;
        const size_t base = (r * b.seq_len + t) * num_labels;
        size_t best = 0;
        for (size_t c = 1; c < num_labels; ++c) {
          if (v[base + c] > v[base + best]) best = c;
        }
        tags.push_back(labels.name(static_cast<int>(best)));
      }
      out.push_back(std::move(tags));
    }
  }
  return out;
}

EvalResult evaluate_model(const EncoderModel& model, const HeadMask& mask,
                          const std::vector<Sentence>& sentences, const Vocab& vocab,
                          const LabelMap& labels, TaskKind task, size_t batch_size) {
  return evaluate(task, sentences, predict_tags(model, mask, sentences, vocab, labels, batch_size));
}

// ---------------------------------------------------------------------------
// Ranking pipeline

RankPipelineResult rank_pipeline(const ExperimentContext& ctx,
                                 const std::string& source_language) {
  const auto& sources = ctx.spec.source_languages;
  if (std::find(sources.begin(), sources.end(), source_language) == sources.end()) {
    throw ValidationError("ranking language '" + source_language +
                          "' is not a source language of this experiment");
  }
  const Corpus& source = find_language(ctx.corpora, source_language);
  if (source.train.empty()) {
    throw MissingArtifactError("language '" + source_language + "' has no train split");
  }
  if (source.dev.empty()) {
    throw MissingArtifactError("language '" + source_language + "' has no dev split");
  }

  const HeadMask full = HeadMask::all_active(ctx.model.num_layers, ctx.model.num_heads);
  EncoderModel model = train_model(ctx, source.train, full);
  HeadImportance importance = normalize_scores(
      accumulate_head_gradients(model, source.dev, ctx.vocab, ctx.labels,
                                ctx.spec.train.batch_size));
  importance.language_code = source_language;
  importance.task_kind = ctx.spec.task;
  importance.model_config_hash = ctx.model.hash_hex();
  importance.dev_sentence_count = source.dev.size();
  importance.seed = ctx.spec.seed;

  std::string provenance = "lang=" + source_language + " task=" + task_kind_name(ctx.spec.task) +
                           " epochs=" + std::to_string(ctx.spec.train.epochs);
  if (ctx.spec.train.epochs == 0) provenance += " untrained";
  return {std::move(model), std::move(importance), std::move(provenance)};
}

// ---------------------------------------------------------------------------
// Prune sweeps

namespace {

SweepResult run_sweep(const ExperimentContext& ctx,
                      const std::vector<std::pair<size_t, size_t>>& order,
                      std::vector<std::pair<size_t, size_t>> pre_skipped,
                      const std::string& kind, const std::string& provenance,
                      LoaderJournal* journal) {
  const Corpus& target = ctx.target();
  if (target.test.empty()) {
    throw MissingArtifactError("target language '" + target.language_code +
                               "' has no test split");
  }
  const PrunePlan full_plan =
      plan_from_order(order, ctx.spec.prune_limit, ctx.model.num_layers, ctx.model.num_heads);
  const std::vector<Sentence> train = ctx.training_sentences();

  SweepResult result;
  result.sweep_kind = kind;
  result.ranking_provenance = provenance;
  result.setting = ctx.spec.setting;
  result.skipped_candidates = std::move(pre_skipped);
  result.skipped_candidates.insert(result.skipped_candidates.end(), full_plan.skipped.begin(),
                                   full_plan.skipped.end());

  for (size_t k = 0; k <= ctx.spec.prune_limit; ++k) {
    PrunePlan plan;
    plan.heads.assign(full_plan.heads.begin(),
                      full_plan.heads.begin() + static_cast<ptrdiff_t>(k));
    const HeadMask mask = plan.mask(ctx.model.num_layers, ctx.model.num_heads);
    const std::string tag = kind + ".k" + std::to_string(k) + ".train";
    const auto started = std::chrono::steady_clock::now();
    EncoderModel model = train_model(ctx, train, mask, journal, tag);
    const EvalResult eval = evaluate_model(model, mask, target.test, ctx.vocab, ctx.labels,
                                           ctx.spec.task, ctx.spec.train.batch_size);
    result.per_k_wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
            .count());
    result.per_k_scores.push_back({k, eval.f1, plan.heads});
    if (ctx.spec.early_stop_on_drop && k > 0 &&
        eval.f1 < result.per_k_scores[k - 1].score) {
      result.early_stopped = true;
      break;
    }
  }

  result.trainings = result.per_k_scores.size();
  result.best_k = 0;
  result.best_score = result.per_k_scores[0].score;
  for (const SweepPoint& p : result.per_k_scores) {
    if (p.score > result.best_score) {
      result.best_score = p.score;
      result.best_k = p.k;
    }
  }
  result.pruned_at_best = result.per_k_scores[result.best_k].pruned;
  return result;
}

}  // namespace

SweepResult prune_sweep(const ExperimentContext& ctx, const HeadRanking& ranking,
                        const std::string& ranking_provenance, LoaderJournal* journal) {
  return run_sweep(ctx, ranking.order, {}, "ranked", ranking_provenance, journal);
}

SweepResult baseline_max_prune(const ExperimentContext& ctx, const HeadImportance& importance,
                               LoaderJournal* journal) {
  std::vector<std::pair<size_t, size_t>> order;
  for (size_t l = 0; l < importance.num_layers(); ++l) {
    for (size_t h = 0; h < importance.num_heads(); ++h) order.emplace_back(l, h);
  }
  // descending importance; equal scores keep coordinate order, so k=1 prunes
  // the first argmax of the matrix
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    return importance.scores[a.first][a.second] > importance.scores[b.first][b.second];
  });
  const std::string provenance = "max lang=" +
                                 (importance.language_code.empty() ? std::string("?")
                                                                   : importance.language_code);
  return run_sweep(ctx, order, {}, "max", provenance, journal);
}

SweepResult baseline_random_prune(const ExperimentContext& ctx, uint64_t sample_seed,
                                  LoaderJournal* journal) {
  const size_t L = ctx.model.num_layers, H = ctx.model.num_heads;
  std::vector<std::pair<size_t, size_t>> pool;
  for (size_t l = 0; l < L; ++l) {
    for (size_t h = 0; h < H; ++h) pool.emplace_back(l, h);
  }
  Rng rng(derive_seed(sample_seed, "random-prune"));
  std::vector<std::pair<size_t, size_t>> order;
  std::vector<std::pair<size_t, size_t>> rejected;
  std::vector<size_t> active(L, H);
  while (order.size() < ctx.spec.prune_limit && !pool.empty()) {
    const size_t pick = rng.index(pool.size());
    const auto head = pool[pick];
    pool.erase(pool.begin() + static_cast<ptrdiff_t>(pick));
    if (active[head.first] <= 1) {
      rejected.push_back(head);  // redraw; this head can never become legal
      continue;
    }
    --active[head.first];
    order.push_back(head);
  }
  return run_sweep(ctx, order, std::move(rejected), "random",
                   "random seed=" + std::to_string(sample_seed), journal);
}

// ---------------------------------------------------------------------------
// Multi-source heuristics

namespace {

void check_same_dims(const std::vector<HeadImportance>& matrices) {
  if (matrices.empty()) throw ValidationError("no importance matrices to merge");
  const size_t L = matrices[0].num_layers(), H = matrices[0].num_heads();
  if (L == 0 || H == 0) throw ShapeError("importance matrix is empty");
  for (const HeadImportance& m : matrices) {
    if (m.num_layers() != L || m.num_heads() != H) {
      throw ShapeError("importance dimensions disagree: " + std::to_string(L) + "x" +
                       std::to_string(H) + " vs " + std::to_string(m.num_layers()) + "x" +
                       std::to_string(m.num_heads()));
    }
  }
}

std::vector<double> flatten(const HeadImportance& m) {
  std::vector<double> flat;
  flat.reserve(m.num_layers() * m.num_heads());
  for (const auto& row : m.scores) flat.insert(flat.end(), row.begin(), row.end());
  return flat;
}

HeadRanking rank_merged(const std::vector<double>& merged, size_t L, size_t H,
                        const std::string& tag) {
  HeadImportance wrapper;
  wrapper.scores.assign(L, std::vector<double>(H));
  for (size_t l = 0; l < L; ++l) {
    for (size_t h = 0; h < H; ++h) wrapper.scores[l][h] = merged[l * H + h];
  }
  HeadRanking ranking = rank_heads(wrapper);
  ranking.tie_policy_tag = tag + "; " + ranking.tie_policy_tag;
  return ranking;
}

}  // namespace

HeadRanking merge_rankings_md(const std::vector<HeadImportance>& matrices) {
  check_same_dims(matrices);
  const size_t L = matrices[0].num_layers(), H = matrices[0].num_heads();
  std::vector<double> mean_rank(L * H, 0.0);
  for (const HeadImportance& m : matrices) {
    const std::vector<double> ranks = fractional_ranks(flatten(m));
    for (size_t i = 0; i < ranks.size(); ++i) mean_rank[i] += ranks[i];
  }
  for (double& v : mean_rank) v /= static_cast<double>(matrices.size());
  return rank_merged(mean_rank, L, H, "md rank-average");
}

HeadRanking merge_rankings_sd(const std::vector<HeadImportance>& matrices) {
  check_same_dims(matrices);
  const size_t L = matrices[0].num_layers(), H = matrices[0].num_heads();
  std::vector<double> sum(L * H, 0.0);
  for (const HeadImportance& m : matrices) {
    const std::vector<double> flat = flatten(m);
    for (size_t i = 0; i < flat.size(); ++i) sum[i] += flat[i];
  }
  return rank_merged(sum, L, H, "sd score-sum");
}

EcSelection select_rankings_ec(
    const std::vector<std::pair<std::string, SweepResult>>& per_language) {
  if (per_language.empty()) throw ValidationError("no per-language sweeps to select from");
  size_t winner = 0;
  size_t total = 0;
  for (size_t i = 0; i < per_language.size(); ++i) {
    total += per_language[i].second.trainings;
    const bool better = per_language[i].second.best_score > per_language[winner].second.best_score;
    const bool tie_smaller =
        per_language[i].second.best_score == per_language[winner].second.best_score &&
        per_language[i].first < per_language[winner].first;
    if (better || tie_smaller) winner = i;
  }
  return {per_language[winner].first, per_language[winner].second, total};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

Json heads_to_json(const std::vector<std::pair<size_t, size_t>>& heads) {
  Json arr = Json::array();
  for (const auto& [l, h] : heads) arr.push_back(Json::array({l, h}));
  return arr;
}

std::vector<std::pair<size_t, size_t>> heads_from_json(const Json& arr) {
  std::vector<std::pair<size_t, size_t>> heads;
  for (const Json& item : arr) {
    if (!item.is_array() || item.size() != 2) {
      throw ValidationError("sweep record: head entry is not a [layer, head] pair");
    }
    heads.emplace_back(item[0].get<size_t>(), item[1].get<size_t>());
  }
  return heads;
}

}  // namespace

std::string sweep_to_json(const SweepResult& result) {
  Json doc;
  doc["format_version"] = kFormatVersion;
  doc["sweep_kind"] = result.sweep_kind;
  doc["ranking_provenance"] = result.ranking_provenance;
  doc["setting"] = setting_name(result.setting);
  Json points = Json::array();
  for (const SweepPoint& p : result.per_k_scores) {
    Json point;
    point["k"] = p.k;
    point["score"] = p.score;
    point["pruned"] = heads_to_json(p.pruned);
    points.push_back(std::move(point));
  }
  doc["per_k_scores"] = std::move(points);
  doc["best_k"] = result.best_k;
  doc["best_score"] = result.best_score;
  doc["pruned_at_best"] = heads_to_json(result.pruned_at_best);
  doc["skipped_candidates"] = heads_to_json(result.skipped_candidates);
  doc["trainings"] = result.trainings;
  doc["early_stopped"] = result.early_stopped;
  return doc.dump();
}

SweepResult sweep_from_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("sweep record: ") + e.what());
  }
  check_format_version(doc, "sweep record");
  return extract_fields("sweep record", [&] {
    SweepResult r;
    r.sweep_kind = doc.at("sweep_kind").get<std::string>();
    r.ranking_provenance = doc.at("ranking_provenance").get<std::string>();
    r.setting = parse_setting(doc.at("setting").get<std::string>());
    for (const Json& point : doc.at("per_k_scores")) {
      SweepPoint p;
      p.k = point.at("k").get<size_t>();
      p.score = point.at("score").get<double>();
      p.pruned = heads_from_json(point.at("pruned"));
      r.per_k_scores.push_back(std::move(p));
    }
    r.best_k = doc.at("best_k").get<size_t>();
    r.best_score = doc.at("best_score").get<double>();
    r.pruned_at_best = heads_from_json(doc.at("pruned_at_best"));
    r.skipped_candidates = heads_from_json(doc.at("skipped_candidates"));
    r.trainings = doc.at("trainings").get<size_t>();
    r.early_stopped = doc.at("early_stopped").get<bool>();
    return r;
  });
}

}  // namespace headprune
