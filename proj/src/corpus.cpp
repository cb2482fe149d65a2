#include "headprune/corpus.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "headprune/artifact.hpp"
#include "headprune/rng.hpp"

namespace headprune {

const std::vector<std::string> kDefaultEntityTypes = {"LOC", "MISC", "ORG", "PER"};

const std::vector<std::string> kPosTags = {
    "ADJ",  "ADP",   "ADV",  "AUX",  "CCONJ", "DET",  "INTJ", "NOUN", "NUM",
    "PART", "PRON",  "PROPN", "PUNCT", "SCONJ", "SYM",  "VERB", "X"};

std::string task_kind_name(TaskKind task) { return task == TaskKind::pos ? "pos" : "span"; }

TaskKind parse_task_kind(const std::string& name) {
  if (name == "pos") return TaskKind::pos;
  if (name == "span") return TaskKind::span;
  throw ValidationError("unknown task kind: " + name + " (expected pos or span)");
}

const std::vector<Sentence>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ValidationError("unknown split: " + name);
}

// ---------------------------------------------------------------------------
// BIO helpers

namespace {

bool bio_shape_ok(const std::string& tag) {
  if (tag == "O") return true;
  return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

std::string bio_type(const std::string& tag) { return tag.substr(2); }

// promotes orphan I-X to B-X in place, returns repairs made
size_t repair_bio(std::vector<std::string>& tags) {
  size_t repairs = 0;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].empty() || tags[i][0] != 'I') continue;
    bool ok = i > 0 && (tags[i - 1] == "B" + tags[i].substr(1) || tags[i - 1] == tags[i]);
    if (!ok) {
      tags[i][0] = 'B';
      ++repairs;
    }
  }
  return repairs;
}

void check_bio(const std::vector<std::string>& tags, const std::string& where) {
  for (size_t i = 0; i < tags.size(); ++i) {
    if (!bio_shape_ok(tags[i])) {
      throw ValidationError(where + ": tag '" + tags[i] + "' is not O/B-X/I-X");
    }
    if (tags[i][0] == 'I') {
      bool ok = i > 0 && (tags[i - 1] == "B" + tags[i].substr(1) || tags[i - 1] == tags[i]);
      if (!ok) throw ValidationError(where + ": orphan " + tags[i] + " at position " +
                                     std::to_string(i));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// CoNLL IO

ConllFile load_conll(const std::string& path, TaskKind task) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("corpus: cannot open " + path);

  ConllFile out;
  Sentence current;
  std::string line;
  size_t line_no = 0;
  auto flush = [&]() {
    if (current.tokens.empty()) return;
    if (task == TaskKind::span) {
      for (const std::string& t : current.tags) {
        if (!bio_shape_ok(t)) {
          throw ValidationError(path + ": tag '" + t + "' is not O/B-X/I-X (sentence ending near line " +
                                std::to_string(line_no) + ")");
        }
      }
      out.repair_count += repair_bio(current.tags);
    }
    out.sentences.push_back(std::move(current));
    current = Sentence{};
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    std::istringstream fields(line);
    std::string token, tag, extra;
    fields >> token >> tag;
    if (tag.empty() || (fields >> extra && !extra.empty())) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected exactly two columns (token, tag)");
    }
    current.tokens.push_back(std::move(token));
    current.tags.push_back(std::move(tag));
  }
  flush();
  if (out.sentences.empty()) throw ValidationError(path + ": no sentences");
  return out;
}

void save_conll(const std::vector<Sentence>& sentences, const std::string& path) {
  std::ostringstream buf;
  for (const Sentence& s : sentences) {
    for (size_t i = 0; i < s.tokens.size(); ++i) {
      buf << s.tokens[i] << '\t' << s.tags[i] << '\n';
    }
    buf << '\n';
  }
  write_text_file(path, buf.str());
}

Corpus load_corpus(const std::string& dir, const std::string& language_code) {
  const std::string stem = dir + "/" + language_code;
  Json meta = read_json_file(stem + ".meta.json", "corpus metadata");
  check_format_version(meta, "corpus metadata");
  Corpus c;
  c.language_code = meta.at("language_code").get<std::string>();
  if (c.language_code != language_code) {
    throw ValidationError("corpus metadata: language_code " + c.language_code +
                          " does not match file stem " + language_code);
  }
  c.task_kind = parse_task_kind(meta.at("task_kind").get<std::string>());
  c.label_inventory = meta.at("label_inventory").get<std::vector<std::string>>();
  c.train = load_conll(stem + ".train.conll", c.task_kind).sentences;
  c.dev = load_conll(stem + ".dev.conll", c.task_kind).sentences;
  c.test = load_conll(stem + ".test.conll", c.task_kind).sentences;
  validate_corpus(c);
  return c;
}

void save_corpus(const Corpus& corpus, const std::string& dir, uint64_t generation_seed) {
  std::filesystem::create_directories(dir);
  const std::string stem = dir + "/" + corpus.language_code;
  save_conll(corpus.train, stem + ".train.conll");
  save_conll(corpus.dev, stem + ".dev.conll");
  save_conll(corpus.test, stem + ".test.conll");
  Json meta;
  meta["format_version"] = kFormatVersion;
  meta["language_code"] = corpus.language_code;
  meta["task_kind"] = task_kind_name(corpus.task_kind);
  meta["label_inventory"] = corpus.label_inventory;
  meta["generation_seed"] = generation_seed;
  write_text_file(stem + ".meta.json", meta.dump(2) + "\n");
}

void validate_corpus(const Corpus& corpus) {
  std::set<std::string> inventory(corpus.label_inventory.begin(), corpus.label_inventory.end());
  const std::array<std::pair<const char*, const std::vector<Sentence>*>, 3> splits = {
      {{"train", &corpus.train}, {"dev", &corpus.dev}, {"test", &corpus.test}}};
  for (const auto& [name, sentences] : splits) {
    for (size_t i = 0; i < sentences->size(); ++i) {
      const Sentence& s = (*sentences)[i];
      const std::string where =
          corpus.language_code + "." + name + "[" + std::to_string(i) + "]";
      if (s.tokens.empty() || s.tokens.size() != s.tags.size()) {
        throw ValidationError(where + ": needs equal nonzero token and tag counts");
      }
      for (const std::string& t : s.tags) {
        if (!inventory.count(t)) {
          throw ValidationError(where + ": tag '" + t + "' missing from label inventory");
        }
      }
      if (corpus.task_kind == TaskKind::span) check_bio(s.tags, where);
    }
  }
}

std::vector<std::string> collect_label_inventory(const Corpus& corpus) {
  std::set<std::string> labels;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const Sentence& s : *split) labels.insert(s.tags.begin(), s.tags.end());
  }
  return {labels.begin(), labels.end()};
}

Corpus harmonize_span_labels(const Corpus& corpus, const std::vector<std::string>& keep) {
  if (corpus.task_kind != TaskKind::span) {
    throw ValidationError("harmonize_span_labels: corpus " + corpus.language_code +
                          " is not a span task");
  }
  std::set<std::string> kept(keep.begin(), keep.end());
  Corpus out = corpus;
  for (auto* split : {&out.train, &out.dev, &out.test}) {
    for (Sentence& s : *split) {
      for (std::string& t : s.tags) {
        if (t != "O" && !kept.count(bio_type(t))) t = t.substr(0, 2) + "MISC";
      }
    }
  }
  out.label_inventory = collect_label_inventory(out);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation
//
// One latent grammar (drawn from master_seed) emits, per sentence index, a
// sequence of units: either a single filler token or an entity span bundled
// with its trigger token. The trigger concept determines the entity type, and
// entity tokens are mostly drawn from a pool shared between types, so a tagger
// must read context rather than the entity word itself. Languages re-render
// the identical skeletons through disjoint vocabularies, then block-reverse
// unit order inside fixed windows and add per-token emission noise.

namespace {

struct Unit {
  std::vector<int> concepts;
  std::vector<std::string> tags;
};

// concept id layout for span grammars
constexpr int kTriggerBase = 0;    // 4 types x 3 slots
constexpr int kSharedBase = 12;    // 10 shared (ambiguous) entity concepts
constexpr int kTypedBase = 22;     // 4 types x 4 slots
constexpr int kFillerBase = 38;    // 20 filler concepts
constexpr int kSpanConceptCount = 58;

constexpr int kPosConceptCount = 60;
constexpr int kPosPoolSize = 5;

// entity-pool concepts render as open-class names: each occurrence draws a
// fresh surface variant, so taggers must read context (the trigger), not the
// word — which is also the only rule that survives crossing languages
constexpr size_t kEntityVariants = 30;

struct SpanGrammar {
  double p_entity;
  double ambiguity;
  double p_len2;
  double p_len3;
  bool trigger_after;
  std::vector<std::string> anchors;  // per concept; empty = language-specific word
};

struct PosGrammar {
  std::vector<std::vector<double>> transitions;  // 17 x 17, row-normalized
  std::vector<std::array<int, kPosPoolSize>> pools;
  std::vector<std::string> anchors;
};

// Anchored concepts render with one shared surface form in every language of
// a grammar family — the stand-in for international vocabulary and shared
// subwords, and the only lexical bridge a cross-lingual model gets. Content
// words always carry a language prefix, so the two name spaces never collide.
std::string anchor_form(uint64_t grammar_seed, int concept_id) {
  const uint64_t compact =
      derive_seed(grammar_seed, "anchor-form", static_cast<uint64_t>(concept_id)) %
      (26ull * 26 * 26 * 26);
  return "a" + to_base26(compact);
}

SpanGrammar make_span_grammar(uint64_t grammar_seed) {
  Rng rng(grammar_seed);
  SpanGrammar g;
  g.p_entity = 0.30 + 0.15 * rng.uniform();
  g.ambiguity = 0.55 + 0.30 * rng.uniform();
  g.p_len2 = 0.35 + 0.30 * rng.uniform();
  g.p_len3 = 0.30;
  g.trigger_after = rng.uniform() < 0.5;
  // triggers must transfer lexically (they carry the entity type); entity
  // words never do (the tagger has to read context); fillers are mixed
  g.anchors.assign(kSpanConceptCount, "");
  for (int c = 0; c < kSpanConceptCount; ++c) {
    const bool trigger = c < kSharedBase;
    const bool filler = c >= kFillerBase;
    if (trigger || (filler && rng.uniform() < 0.7)) {
      g.anchors[static_cast<size_t>(c)] = anchor_form(grammar_seed, c);
    }
  }
  return g;
}

PosGrammar make_pos_grammar(uint64_t grammar_seed) {
  Rng rng(grammar_seed);
  PosGrammar g;
  const size_t n = kPosTags.size();
  g.transitions.assign(n, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i) {
    double total = 0;
    for (size_t j = 0; j < n; ++j) {
      double u = rng.uniform();
      g.transitions[i][j] = u * u * u + 0.02;  // sharp rows: few likely successors
      total += g.transitions[i][j];
    }
    for (size_t j = 0; j < n; ++j) g.transitions[i][j] /= total;
  }
  g.pools.resize(n);
  for (size_t i = 0; i < n; ++i) {
    for (int s = 0; s < kPosPoolSize; ++s) {
      g.pools[i][static_cast<size_t>(s)] = static_cast<int>(rng.index(kPosConceptCount));
    }
  }
  g.anchors.assign(kPosConceptCount, "");
  for (int c = 0; c < kPosConceptCount; ++c) {
    if (rng.uniform() < 0.35) g.anchors[static_cast<size_t>(c)] = anchor_form(grammar_seed, c);
  }
  return g;
}

std::vector<Unit> span_skeleton(const SpanGrammar& g, Rng& rng) {
  const size_t target = 6 + rng.index(7);
  std::vector<Unit> units;
  size_t emitted = 0;
  while (emitted < target) {
    if (rng.uniform() < g.p_entity && emitted + 2 <= target) {
      const size_t type = rng.index(kDefaultEntityTypes.size());
      size_t len = 1;
      if (rng.uniform() < g.p_len2) ++len;
      if (len == 2 && rng.uniform() < g.p_len3) ++len;
      len = std::min(len, target - emitted - 1);
      Unit u;
      const int trigger = kTriggerBase + static_cast<int>(type) * 3 +
                          static_cast<int>(rng.index(3));
      std::vector<int> entity;
      std::vector<std::string> entity_tags;
      for (size_t e = 0; e < len; ++e) {
        int concept_id = rng.uniform() < g.ambiguity
                          ? kSharedBase + static_cast<int>(rng.index(10))
                          : kTypedBase + static_cast<int>(type) * 4 +
                                static_cast<int>(rng.index(4));
        entity.push_back(concept_id);
        entity_tags.push_back((e == 0 ? "B-" : "I-") + kDefaultEntityTypes[type]);
      }
      if (g.trigger_after) {
        u.concepts = entity;
        u.tags = entity_tags;
        u.concepts.push_back(trigger);
        u.tags.push_back("O");
      } else {
        u.concepts.push_back(trigger);
        u.tags.push_back("O");
        u.concepts.insert(u.concepts.end(), entity.begin(), entity.end());
        u.tags.insert(u.tags.end(), entity_tags.begin(), entity_tags.end());
      }
      emitted += u.concepts.size();
      units.push_back(std::move(u));
    } else {
      Unit u;
      u.concepts.push_back(kFillerBase + static_cast<int>(rng.index(20)));
      u.tags.push_back("O");
      units.push_back(std::move(u));
      ++emitted;
    }
  }
  return units;
}

std::vector<Unit> pos_skeleton(const PosGrammar& g, Rng& rng) {
  const size_t target = 6 + rng.index(7);
  std::vector<Unit> units;
  size_t tag = rng.index(kPosTags.size());
  for (size_t i = 0; i < target; ++i) {
    Unit u;
    u.concepts.push_back(g.pools[tag][rng.index(kPosPoolSize)]);
    u.tags.push_back(kPosTags[tag]);
    units.push_back(std::move(u));
    tag = rng.categorical(g.transitions[tag]);
  }
  return units;
}

Sentence render_sentence(std::vector<Unit> units, const LanguageProfile& profile, Rng& lang_rng,
                         const std::vector<std::string>& anchors, TaskKind task) {
  const int concept_count = static_cast<int>(anchors.size());
  for (Unit& u : units) {
    for (int& concept_id : u.concepts) {
      if (lang_rng.uniform() < profile.noise_rate) {
        concept_id = static_cast<int>(lang_rng.index(static_cast<size_t>(concept_count)));
      }
    }
  }
  const size_t w = profile.permutation.window;
  if (w > 1) {
    for (size_t start = 0; start < units.size(); start += w) {
      size_t end = std::min(start + w, units.size());
      std::reverse(units.begin() + static_cast<ptrdiff_t>(start),
                   units.begin() + static_cast<ptrdiff_t>(end));
    }
  }
  Sentence s;
  const std::string prefix = to_base26(profile.vocab_seed) + "_";
  for (const Unit& u : units) {
    for (size_t i = 0; i < u.concepts.size(); ++i) {
      const int c = u.concepts[i];
      const auto& anchor = anchors[static_cast<size_t>(c)];
      const bool open_class = task == TaskKind::span && c >= kSharedBase && c < kFillerBase;
      std::string word;
      if (!anchor.empty()) {
        word = anchor;
      } else if (open_class) {
        word = prefix + to_base26(static_cast<uint64_t>(c)) + "~" +
               to_base26(lang_rng.index(kEntityVariants));
      } else {
        word = prefix + to_base26(static_cast<uint64_t>(c));
      }
      s.tokens.push_back(std::move(word));
      s.tags.push_back(u.tags[i]);
    }
  }
  return s;
}

}  // namespace

std::vector<Corpus> synth_generate(const std::vector<LanguageProfile>& profiles, TaskKind task,
                                   uint64_t master_seed) {
  if (profiles.size() < 2) {
    throw ValidationError("synth_generate: need at least two language profiles");
  }
  {
    std::set<std::string> codes;
    for (const LanguageProfile& p : profiles) {
      if (!codes.insert(p.language_code).second) {
        throw ValidationError("synth_generate: duplicate language code " + p.language_code);
      }
      if (p.noise_rate < 0.0 || p.noise_rate >= 0.5) {
        throw ValidationError("synth_generate: " + p.language_code + " noise rate " +
                              std::to_string(p.noise_rate) + " outside [0, 0.5)");
      }
    }
  }

  const uint64_t grammar_seed = derive_seed(master_seed, "grammar");
  SpanGrammar span_g{};
  PosGrammar pos_g;
  if (task == TaskKind::span) {
    span_g = make_span_grammar(grammar_seed);
  } else {
    pos_g = make_pos_grammar(grammar_seed);
  }
  const std::vector<std::string>& anchors =
      task == TaskKind::span ? span_g.anchors : pos_g.anchors;

  std::vector<Corpus> out;
  for (const LanguageProfile& profile : profiles) {
    Corpus c;
    c.language_code = profile.language_code;
    c.task_kind = task;
    const std::array<std::pair<std::vector<Sentence>*, size_t>, 3> splits = {
        {{&c.train, profile.sizes.train}, {&c.dev, profile.sizes.dev},
         {&c.test, profile.sizes.test}}};
    for (size_t split_id = 0; split_id < splits.size(); ++split_id) {
      auto [sentences, count] = splits[split_id];
      Rng lang_rng(derive_seed(master_seed, "render", fnv1a64(profile.language_code), split_id));
      for (size_t i = 0; i < count; ++i) {
        // one skeleton stream per (split, index): every language sees the
        // same latent sentence and renders it its own way
        Rng skeleton_rng(derive_seed(grammar_seed, "skeleton", split_id, i));
        std::vector<Unit> units = task == TaskKind::span ? span_skeleton(span_g, skeleton_rng)
                                                         : pos_skeleton(pos_g, skeleton_rng);
        sentences->push_back(render_sentence(std::move(units), profile, lang_rng, anchors, task));
      }
    }
    c.label_inventory = collect_label_inventory(c);
    validate_corpus(c);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subsampling

std::vector<std::vector<size_t>> subsample_partition(size_t n, uint64_t seed) {
  if (n < 10) {
    throw ValidationError("subsample: train size " + std::to_string(n) + " < 10");
  }
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<size_t>> chunks(10);
  const size_t base = n / 10;
  const size_t extra = n % 10;
  size_t cursor = 0;
  for (size_t c = 0; c < 10; ++c) {
    size_t len = base + (c < extra ? 1 : 0);
    chunks[c].assign(order.begin() + static_cast<ptrdiff_t>(cursor),
                     order.begin() + static_cast<ptrdiff_t>(cursor + len));
    cursor += len;
  }
  return chunks;
}

Corpus subsample_train(const Corpus& corpus, int tenths, uint64_t seed) {
  if (tenths < 1 || tenths > 9) {
    throw ValidationError("subsample: tenths must lie in [1, 9], got " + std::to_string(tenths) +
                          " (0 and 10 are the plain cross-lingual / fully multi-lingual runs)");
  }
  auto chunks = subsample_partition(corpus.train.size(), seed);
  Corpus out = corpus;
  out.train.clear();
  for (int c = 0; c < tenths; ++c) {
    for (size_t idx : chunks[static_cast<size_t>(c)]) out.train.push_back(corpus.train[idx]);
  }
  return out;
}

}  // namespace headprune
