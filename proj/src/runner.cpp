#include "headprune/runner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "headprune/hash.hpp"
#include "headprune/rng.hpp"

namespace headprune {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + path);
  out << line << '\n';
  if (!out.good()) throw Error("short write to " + path);
}

std::vector<int> resolved_tenths(const RunSpec& spec) {
  if (!spec.subsample_tenths.empty()) return spec.subsample_tenths;
  return {1, 2, 3, 4, 5, 6, 7, 8, 9};
}

const std::array<const char*, 4> kCorpusExtensions = {".train.conll", ".dev.conll", ".test.conll",
                                                      ".meta.json"};

}  // namespace

// ---------------------------------------------------------------------------
// Spec parsing

namespace {

LanguageSpec parse_language_spec(const Json& entry) {
  return extract_fields("run spec language", [&] {
    LanguageSpec lang;
    lang.profile.language_code = entry.at("code").get<std::string>();
    lang.profile.vocab_seed = entry.contains("vocab_seed")
                                  ? entry.at("vocab_seed").get<uint64_t>()
                                  : fnv1a64(lang.profile.language_code);
    lang.profile.permutation.window = entry.value("window", size_t{0});
    lang.profile.noise_rate = entry.value("noise", 0.0);
    const Json& sizes = entry.at("sizes");
    lang.profile.sizes.train = sizes.at("train").get<size_t>();
    lang.profile.sizes.dev = sizes.at("dev").get<size_t>();
    lang.profile.sizes.test = sizes.at("test").get<size_t>();
    if (entry.contains("grammar_seed")) lang.grammar_seed = entry.at("grammar_seed").get<uint64_t>();
    return lang;
  });
}

ModelConfig parse_model_spec(const Json& entry) {
  return extract_fields("run spec model", [&] {
    ModelConfig m;
    m.num_layers = entry.at("num_layers").get<size_t>();
    m.num_heads = entry.at("num_heads").get<size_t>();
    m.model_dim = entry.at("model_dim").get<size_t>();
    m.feedforward_dim = entry.at("feedforward_dim").get<size_t>();
    m.max_sequence_length = entry.at("max_sequence_length").get<size_t>();
    m.vocab_size = entry.value("vocab_size", size_t{0});  // 0: derive from the corpora
    m.num_labels = entry.value("num_labels", size_t{0});
    m.seed = entry.value("seed", uint64_t{0});
    return m;
  });
}

}  // namespace

RunSpec parse_run_spec(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("run spec: document is not a JSON object");
  if (doc.contains("format_version")) check_format_version(doc, "run spec");
  return extract_fields("run spec", [&] {
    RunSpec spec;
    for (const Json& entry : doc.at("languages")) {
      spec.languages.push_back(parse_language_spec(entry));
    }
    spec.experiment.task = parse_task_kind(doc.value("task", std::string("span")));
    spec.experiment.source_languages = doc.at("source_languages").get<std::vector<std::string>>();
    spec.experiment.target_language = doc.at("target_language").get<std::string>();
    spec.experiment.setting = parse_setting(doc.value("setting", std::string("cross_lingual")));
    spec.experiment.model = parse_model_spec(doc.at("model"));
    if (doc.contains("train")) {
      const Json& train = doc.at("train");
      spec.experiment.train.epochs = train.value("epochs", spec.experiment.train.epochs);
      spec.experiment.train.lr = train.value("lr", spec.experiment.train.lr);
      spec.experiment.train.batch_size = train.value("batch_size", spec.experiment.train.batch_size);
    }
    spec.experiment.prune_limit = doc.value("prune_limit", spec.experiment.prune_limit);
    spec.experiment.seed = doc.value("seed", spec.experiment.seed);
    spec.experiment.early_stop_on_drop = doc.value("early_stop_on_drop", false);
    spec.ranking_language = doc.value("ranking_language", std::string());
    spec.random_sample_seed = doc.value("random_sample_seed", uint64_t{42});
    spec.merge_heuristic = doc.value("merge_heuristic", std::string("md"));
    if (doc.contains("subsample_tenths")) {
      spec.subsample_tenths = doc.at("subsample_tenths").get<std::vector<int>>();
    }
    if (doc.contains("report")) {
      const Json& report = doc.at("report");
      spec.report.kind = report.value("kind", spec.report.kind);
      spec.report.format = report.value("format", spec.report.format);
      spec.report.group_by = report.value("group_by", spec.report.group_by);
    }
    if (doc.contains("eval")) {
      const Json& eval = doc.at("eval");
      spec.eval.language = eval.value("language", std::string());
      spec.eval.split = eval.value("split", spec.eval.split);
    }
    return spec;
  });
}

RunSpec load_run_spec(const std::string& path) {
  return parse_run_spec(read_json_file(path, "run spec"));
}

std::string RunSpec::resolved_ranking_language() const {
  if (!ranking_language.empty()) return ranking_language;
  return experiment.source_languages.empty() ? std::string() : experiment.source_languages.front();
}

std::string RunSpec::resolved_eval_language() const {
  return eval.language.empty() ? experiment.target_language : eval.language;
}

void RunSpec::validate() const {
  experiment.validate();
  std::vector<std::string> problems;
  if (languages.empty()) problems.push_back("languages: at least one language profile is required");
  std::set<std::string> roster;
  for (const LanguageSpec& lang : languages) {
    if (lang.profile.language_code.empty()) {
      problems.push_back("languages: empty language code");
    } else if (!roster.insert(lang.profile.language_code).second) {
      problems.push_back("languages: duplicate code " + lang.profile.language_code);
    }
  }
  auto require_known = [&](const std::string& code, const std::string& role) {
    if (!code.empty() && roster.count(code) == 0) {
      problems.push_back(role + ": language " + code + " is not in the roster");
    }
  };
  for (const std::string& code : experiment.source_languages) {
    require_known(code, "source_languages");
  }
  require_known(experiment.target_language, "target_language");
  const std::string ranking = resolved_ranking_language();
  require_known(ranking, "ranking_language");
  if (!ranking.empty() &&
      std::find(experiment.source_languages.begin(), experiment.source_languages.end(), ranking) ==
          experiment.source_languages.end()) {
    problems.push_back("ranking_language: " + ranking + " is not a source language");
  }
  require_known(resolved_eval_language(), "eval.language");
  if (merge_heuristic != "md" && merge_heuristic != "sd" && merge_heuristic != "ec") {
    problems.push_back("merge_heuristic: expected md, sd or ec, got '" + merge_heuristic + "'");
  }
  int previous = 0;
  for (int tenths : subsample_tenths) {
    if (tenths < 1 || tenths > 9) {
      problems.push_back("subsample_tenths: " + std::to_string(tenths) + " is outside 1..9");
    } else if (tenths <= previous) {
      problems.push_back("subsample_tenths: values must be strictly increasing");
    }
    previous = tenths;
  }
  if (report.kind != "scores" && report.kind != "correlation") {
    problems.push_back("report.kind: expected scores or correlation, got '" + report.kind + "'");
  }
  if (report.format != "markdown" && report.format != "csv") {
    problems.push_back("report.format: expected markdown or csv, got '" + report.format + "'");
  }
  if (report.group_by != "target" && report.group_by != "source" && report.group_by != "k") {
    problems.push_back("report.group_by: expected target, source or k, got '" + report.group_by +
                       "'");
  }
  if (eval.split != "train" && eval.split != "dev" && eval.split != "test") {
    problems.push_back("eval.split: expected train, dev or test, got '" + eval.split + "'");
  }
  if (!problems.empty()) {
    std::string message = "run spec invalid:";
    for (const std::string& p : problems) message += "\n  - " + p;
    throw ValidationError(message);
  }
}

namespace {

std::string roster_canonical(const RunSpec& spec) {
  std::ostringstream s;
  for (const LanguageSpec& lang : spec.languages) {
    const LanguageProfile& p = lang.profile;
    char noise[32];
    std::snprintf(noise, sizeof(noise), "%.17g", p.noise_rate);
    s << ";lang=" << p.language_code << ':' << p.vocab_seed << ':' << p.permutation.window << ':'
      << noise << ':' << p.sizes.train << '/' << p.sizes.dev << '/' << p.sizes.test << ':';
    if (lang.grammar_seed) {
      s << *lang.grammar_seed;
    } else {
      s << "shared";
    }
  }
  return s.str();
}

}  // namespace

uint64_t RunSpec::hash() const {
  std::ostringstream s;
  s << "experiment=" << experiment.hash_hex();
  s << roster_canonical(*this);
  s << ";ranking=" << resolved_ranking_language();
  s << ";sample_seed=" << random_sample_seed;
  s << ";merge=" << merge_heuristic;
  s << ";tenths=";
  for (int tenths : resolved_tenths(*this)) s << tenths << ',';
  return fnv1a64(s.str());
}

std::string RunSpec::hash_hex() const { return to_hex(hash()); }

uint64_t RunSpec::data_hash() const {
  std::ostringstream s;
  s << "task=" << task_kind_name(experiment.task);
  s << ";seed=" << experiment.seed;
  s << roster_canonical(*this);
  return fnv1a64(s.str());
}

std::string RunSpec::data_hash_hex() const { return to_hex(data_hash()); }

// ---------------------------------------------------------------------------
// Records

std::string record_to_json(const RunRecord& record) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["command"] = record.command;
  j["spec_hash"] = record.spec_hash;
  j["seed"] = record.seed;
  j["toolkit_version"] = record.toolkit_version;
  j["inputs"] = record.inputs;
  j["outputs"] = record.outputs;
  j["payload"] = record.payload.is_null() ? Json::object() : record.payload;
  return j.dump();
}

RunRecord record_from_json(const std::string& line) {
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded()) throw ValidationError("results log: line is not valid JSON");
  check_format_version(j, "results log record");
  return extract_fields("results log record", [&] {
    RunRecord record;
    record.command = j.at("command").get<std::string>();
    record.spec_hash = j.at("spec_hash").get<std::string>();
    record.seed = j.at("seed").get<uint64_t>();
    record.toolkit_version = j.at("toolkit_version").get<std::string>();
    record.inputs = j.at("inputs").get<std::vector<std::string>>();
    record.outputs = j.at("outputs").get<std::vector<std::string>>();
    record.payload = j.at("payload");
    return record;
  });
}

std::vector<RunRecord> read_results_log(const std::string& out_dir) {
  const std::string path = out_dir + "/results.jsonl";
  if (!fs::exists(path)) return {};
  std::istringstream in(read_text_file(path, "results log"));
  std::vector<RunRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(record_from_json(line));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Runner plumbing

Runner::Runner(RunSpec spec, RunnerOptions options)
    : spec_(std::move(spec)), options_(std::move(options)) {
  if (options_.seed_override) spec_.experiment.seed = *options_.seed_override;
  spec_.validate();
  spec_hash_ = spec_.hash_hex();
}

RunRecord Runner::run(const std::string& command) {
  if (command == "gen-data") return gen_data();
  if (command == "train") return train();
  if (command == "rank") return rank();
  if (command == "correlate") return correlate();
  if (command == "sweep") return sweep();
  if (command == "baseline-max") return baseline_max();
  if (command == "baseline-rand") return baseline_rand();
  if (command == "multi-source") return multi_source();
  if (command == "subsample-study") return subsample_study();
  if (command == "report") return report();
  if (command == "eval") return eval();
  throw ValidationError("unknown command '" + command + "'");
}

void Runner::guard(const std::string& command) const {
  if (options_.force) return;
  if (command == "report" || command == "eval") return;  // pure readers
  for (const RunRecord& record : read_results_log(options_.out_dir)) {
    if (record.command == command && record.spec_hash == spec_hash_) {
      throw ValidationError(command + " is already recorded for spec " + spec_hash_ + " in " +
                            options_.out_dir + "/results.jsonl; pass --force to rerun");
    }
  }
}

RunRecord Runner::finish(const std::string& command,
                         const std::function<void(RunRecord&)>& body) {
  guard(command);
  const auto started = Clock::now();
  RunRecord record;
  record.command = command;
  record.spec_hash = spec_hash_;
  record.seed = spec_.experiment.seed;
  body(record);
  return commit(std::move(record), ms_since(started));
}

RunRecord Runner::commit(RunRecord record, double wall_ms) const {
  record.wall_ms = wall_ms;
  for (const std::string& out : record.outputs) {
    if (!fs::exists(abs_path(out))) {
      throw Error(record.command + " record references a missing output: " + out);
    }
  }
  fs::create_directories(options_.out_dir);
  append_line(options_.out_dir + "/results.jsonl", record_to_json(record));
  Json timing;
  timing["format_version"] = kFormatVersion;
  timing["command"] = record.command;
  timing["spec_hash"] = record.spec_hash;
  timing["seed"] = record.seed;
  timing["wall_ms"] = record.wall_ms;
  if (!record.timing_detail.is_null()) timing["detail"] = record.timing_detail;
  timing["toolkit_version"] = record.toolkit_version;
  append_line(options_.out_dir + "/runs.jsonl", timing.dump());
  return record;
}

std::string Runner::abs_path(const std::string& rel) const {
  return options_.out_dir + "/" + rel;
}

void Runner::write_artifact(const std::string& rel, const std::string& content) const {
  const fs::path full = fs::path(options_.out_dir) / rel;
  fs::create_directories(full.parent_path());
  write_text_file(full.string(), content);
}

std::vector<Corpus> Runner::load_roster(std::vector<std::string>* inputs) const {
  std::vector<Corpus> corpora;
  const std::string rel_dir = "corpora/" + spec_.data_hash_hex();
  for (const LanguageSpec& lang : spec_.languages) {
    const std::string& code = lang.profile.language_code;
    try {
      corpora.push_back(load_corpus(abs_path(rel_dir), code));
    } catch (const MissingArtifactError& e) {
      throw MissingArtifactError(std::string(e.what()) + " (run gen-data first)");
    }
    if (inputs) {
      for (const char* ext : kCorpusExtensions) inputs->push_back(rel_dir + "/" + code + ext);
    }
  }
  return corpora;
}

ExperimentContext Runner::make_context(std::vector<std::string>* inputs) const {
  return ExperimentContext::make(spec_.experiment, load_roster(inputs));
}

HeadImportance Runner::load_ranking_artifact(const std::string& language, const ModelConfig& model,
                                             std::vector<std::string>* inputs) const {
  const std::string rel = "importance/rank-" + language + "-" + spec_hash_ + ".json";
  HeadImportance importance;
  try {
    importance = load_importance(abs_path(rel));
  } catch (const MissingArtifactError& e) {
    throw MissingArtifactError(std::string(e.what()) + " (run rank first)");
  }
  if (importance.language_code != language) {
    throw ValidationError("importance artifact " + rel + " belongs to language " +
                          importance.language_code + ", expected " + language);
  }
  if (importance.model_config_hash != model.hash_hex()) {
    throw ValidationError("importance artifact " + rel +
                          " was produced by a different model configuration");
  }
  if (importance.task_kind != spec_.experiment.task) {
    throw ValidationError("importance artifact " + rel + " belongs to task " +
                          task_kind_name(importance.task_kind) + ", expected " +
                          task_kind_name(spec_.experiment.task));
  }
  if (inputs) inputs->push_back(rel);
  return importance;
}

// ---------------------------------------------------------------------------
// Commands

RunRecord Runner::gen_data() {
  return finish("gen-data", [&](RunRecord& record) {
    // Group roster languages by effective grammar seed, in first-appearance
    // order: every group shares one latent grammar, distinct groups share
    // nothing but the task shape.
    std::vector<std::pair<uint64_t, std::vector<size_t>>> groups;
    for (size_t i = 0; i < spec_.languages.size(); ++i) {
      const uint64_t seed = spec_.languages[i].grammar_seed.value_or(spec_.experiment.seed);
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const auto& g) { return g.first == seed; });
      if (it == groups.end()) {
        groups.push_back({seed, {i}});
      } else {
        it->second.push_back(i);
      }
    }
    std::map<std::string, Corpus> generated;
    for (const auto& [seed, members] : groups) {
      std::vector<LanguageProfile> profiles;
      for (size_t i : members) profiles.push_back(spec_.languages[i].profile);
      if (profiles.size() == 1) {
        // the generator defines a grammar across at least two languages; give
        // a lone language a throwaway companion and drop it afterwards
        LanguageProfile shadow;
        shadow.language_code = profiles[0].language_code + "~shadow";
        shadow.vocab_seed = fnv1a64(shadow.language_code);
        shadow.sizes = {2, 1, 1};
        profiles.push_back(shadow);
      }
      const std::vector<Corpus> corpora = synth_generate(profiles, spec_.experiment.task, seed);
      for (size_t i : members) {
        const std::string& code = spec_.languages[i].profile.language_code;
        generated.insert({code, find_language(corpora, code)});
      }
    }
    const std::string rel_dir = "corpora/" + spec_.data_hash_hex();
    Json rows = Json::array();
    for (const LanguageSpec& lang : spec_.languages) {
      const std::string& code = lang.profile.language_code;
      const Corpus& corpus = generated.at(code);
      save_corpus(corpus, abs_path(rel_dir), lang.grammar_seed.value_or(spec_.experiment.seed));
      for (const char* ext : kCorpusExtensions) {
        record.outputs.push_back(rel_dir + "/" + code + ext);
      }
      Json row;
      row["code"] = code;
      row["grammar"] = lang.grammar_seed ? "own" : "shared";
      row["train"] = corpus.train.size();
      row["dev"] = corpus.dev.size();
      row["test"] = corpus.test.size();
      rows.push_back(row);
    }
    record.payload["languages"] = rows;
  });
}

RunRecord Runner::train() {
  return finish("train", [&](RunRecord& record) {
    ExperimentContext ctx = make_context(&record.inputs);
    const HeadMask mask = HeadMask::all_active(ctx.model.num_layers, ctx.model.num_heads);
    const std::vector<Sentence> train_set = ctx.training_sentences();
    EncoderModel model = train_model(ctx, train_set, mask);
    const std::string rel = "checkpoints/train-" + spec_hash_ + ".ckpt";
    fs::create_directories(fs::path(abs_path(rel)).parent_path());
    save_checkpoint(model, abs_path(rel));
    record.outputs.push_back(rel);
    record.payload["train_sentences"] = train_set.size();
    record.payload["model_config_hash"] = ctx.model.hash_hex();
  });
}

RunRecord Runner::rank() {
  return finish("rank", [&](RunRecord& record) {
    ExperimentContext ctx = make_context(&record.inputs);
    Json rows = Json::array();
    Json timing = Json::array();
    for (const std::string& lang : spec_.experiment.source_languages) {
      const auto started = Clock::now();
      const RankPipelineResult result = rank_pipeline(ctx, lang);
      const std::string imp_rel = "importance/rank-" + lang + "-" + spec_hash_ + ".json";
      const std::string ckpt_rel = "checkpoints/rank-" + lang + "-" + spec_hash_ + ".ckpt";
      fs::create_directories(fs::path(abs_path(imp_rel)).parent_path());
      fs::create_directories(fs::path(abs_path(ckpt_rel)).parent_path());
      save_importance(result.importance, abs_path(imp_rel));
      save_checkpoint(result.model, abs_path(ckpt_rel));
      record.outputs.push_back(imp_rel);
      record.outputs.push_back(ckpt_rel);
      Json row;
      row["language"] = lang;
      row["degenerate"] = result.importance.degenerate;
      row["provenance"] = result.provenance;
      rows.push_back(row);
      Json t;
      t["language"] = lang;
      t["wall_ms"] = ms_since(started);
      timing.push_back(t);
    }
    record.payload["rankings"] = rows;
    record.timing_detail["per_language"] = timing;
  });
}

RunRecord Runner::correlate() {
  return finish("correlate", [&](RunRecord& record) {
    if (spec_.experiment.source_languages.size() < 2) {
      throw ValidationError("correlate needs at least two source languages");
    }
    ExperimentContext ctx = make_context(&record.inputs);
    std::vector<HeadImportance> matrices;
    for (const std::string& lang : spec_.experiment.source_languages) {
      matrices.push_back(load_ranking_artifact(lang, ctx.model, &record.inputs));
    }
    const CorrelationTable table = correlation_table(matrices);
    const std::string rel = "correlations/corr-" + spec_hash_ + ".csv";
    write_artifact(rel, correlation_csv(table));
    record.outputs.push_back(rel);
    record.payload["languages"] = table.languages;
    record.payload["rho"] = table.rho;
  });
}

RunRecord Runner::run_one_sweep(const std::string& command) {
  return finish(command, [&](RunRecord& record) {
    ExperimentContext ctx = make_context(&record.inputs);
    SweepResult result;
    if (command == "sweep") {
      const std::string lang = spec_.resolved_ranking_language();
      const HeadImportance importance = load_ranking_artifact(lang, ctx.model, &record.inputs);
      std::string provenance = "lang=" + lang;
      if (importance.degenerate) provenance += " degenerate";
      result = prune_sweep(ctx, rank_heads(importance), provenance);
    } else if (command == "baseline-max") {
      const std::string lang = spec_.resolved_ranking_language();
      const HeadImportance importance = load_ranking_artifact(lang, ctx.model, &record.inputs);
      result = baseline_max_prune(ctx, importance);
    } else {
      result = baseline_random_prune(ctx, spec_.random_sample_seed);
    }
    const std::string rel = "sweeps/sweep-" + result.sweep_kind + "-" + spec_hash_ + ".json";
    write_artifact(rel, sweep_to_json(result) + "\n");
    record.outputs.push_back(rel);
    record.payload["task"] = task_kind_name(spec_.experiment.task);
    record.payload["sources"] = spec_.experiment.source_languages;
    record.payload["target"] = spec_.experiment.target_language;
    record.payload["sweep"] = Json::parse(sweep_to_json(result));
    record.timing_detail["per_k_wall_ms"] = result.per_k_wall_ms;
  });
}

RunRecord Runner::sweep() { return run_one_sweep("sweep"); }
RunRecord Runner::baseline_max() { return run_one_sweep("baseline-max"); }
RunRecord Runner::baseline_rand() { return run_one_sweep("baseline-rand"); }

RunRecord Runner::multi_source() {
  return finish("multi-source", [&](RunRecord& record) {
    const std::vector<std::string>& sources = spec_.experiment.source_languages;
    if (sources.size() < 2) {
      throw ValidationError("multi-source needs at least two source languages");
    }
    ExperimentContext ctx = make_context(&record.inputs);
    const std::string& heuristic = spec_.merge_heuristic;
    SweepResult result;
    if (heuristic == "ec") {
      std::vector<std::pair<std::string, SweepResult>> candidates;
      Json timing = Json::array();
      for (const std::string& lang : sources) {
        const auto started = Clock::now();
        const HeadImportance importance = load_ranking_artifact(lang, ctx.model, &record.inputs);
        candidates.emplace_back(lang, prune_sweep(ctx, rank_heads(importance), "lang=" + lang));
        Json t;
        t["language"] = lang;
        t["wall_ms"] = ms_since(started);
        timing.push_back(t);
      }
      EcSelection selection = select_rankings_ec(candidates);
      Json rows = Json::array();
      for (const auto& [lang, sweep] : candidates) {
        Json row;
        row["language"] = lang;
        row["best_k"] = sweep.best_k;
        row["best_score"] = sweep.best_score;
        row["trainings"] = sweep.trainings;
        rows.push_back(row);
      }
      record.payload["heuristic"] = "ec";
      record.payload["winner"] = selection.language;
      record.payload["total_trainings"] = selection.total_trainings;
      record.payload["candidates"] = rows;
      record.timing_detail["per_candidate"] = timing;
      result = std::move(selection.sweep);
    } else {
      std::vector<HeadImportance> matrices;
      for (const std::string& lang : sources) {
        matrices.push_back(load_ranking_artifact(lang, ctx.model, &record.inputs));
      }
      const HeadRanking ranking =
          heuristic == "md" ? merge_rankings_md(matrices) : merge_rankings_sd(matrices);
      result = prune_sweep(ctx, ranking, heuristic + "(" + join(sources, ",") + ")");
      record.payload["heuristic"] = heuristic;
      record.timing_detail["per_k_wall_ms"] = result.per_k_wall_ms;
    }
    const std::string rel = "sweeps/sweep-" + heuristic + "-" + spec_hash_ + ".json";
    write_artifact(rel, sweep_to_json(result) + "\n");
    record.outputs.push_back(rel);
    record.payload["task"] = task_kind_name(spec_.experiment.task);
    record.payload["sources"] = sources;
    record.payload["target"] = spec_.experiment.target_language;
    record.payload["sweep"] = Json::parse(sweep_to_json(result));
  });
}

RunRecord Runner::subsample_study() {
  return finish("subsample-study", [&](RunRecord& record) {
    if (spec_.experiment.setting != Setting::multi_lingual) {
      throw ValidationError(
          "subsample-study requires the multi_lingual setting (it subsamples the target train "
          "split)");
    }
    if (spec_.experiment.prune_limit == 0) {
      throw ValidationError("subsample-study needs prune_limit >= 1 to have a pruned curve");
    }
    ExperimentContext ctx = make_context(&record.inputs);
    const std::string ranking_lang = spec_.resolved_ranking_language();
    const HeadImportance importance = load_ranking_artifact(ranking_lang, ctx.model, &record.inputs);
    const HeadRanking ranking = rank_heads(importance);
    const HeadMask full_mask = HeadMask::all_active(ctx.model.num_layers, ctx.model.num_heads);
    const Corpus& target_full = ctx.target();
    const uint64_t partition_seed = derive_seed(spec_.experiment.seed, "subsample");

    // Content hashes that unambiguously identify target-train sentences; the
    // rare sentence whose rendering coincides with a source sentence is
    // excluded from the audit on both sides.
    std::set<uint64_t> source_hashes;
    for (const std::string& lang : spec_.experiment.source_languages) {
      for (const Sentence& s : find_language(ctx.corpora, lang).train) {
        source_hashes.insert(sentence_hash(s));
      }
    }
    auto target_only = [&](const std::vector<Sentence>& sentences) {
      std::set<uint64_t> hashes;
      for (const Sentence& s : sentences) {
        const uint64_t h = sentence_hash(s);
        if (source_hashes.count(h) == 0) hashes.insert(h);
      }
      return hashes;
    };
    const std::set<uint64_t> full_target_hashes = target_only(target_full.train);

    Json rows = Json::array();
    Json timing = Json::array();
    std::ostringstream csv;
    csv << "tenths,target_train_sentences,unpruned_f1,pruned_best_f1,pruned_best_k\n";
    std::set<uint64_t> previous;
    for (int tenths : resolved_tenths(spec_)) {
      const auto started = Clock::now();
      const Corpus target_t = subsample_train(target_full, tenths, partition_seed);
      ExperimentContext ctx_t = ctx;
      for (Corpus& c : ctx_t.corpora) {
        if (c.language_code == target_t.language_code) c.train = target_t.train;
      }
      LoaderJournal journal;
      EncoderModel unpruned =
          train_model(ctx_t, ctx_t.training_sentences(), full_mask, &journal,
                      "subsample.t" + std::to_string(tenths) + ".unpruned");
      const EvalResult un_eval =
          evaluate_model(unpruned, full_mask, target_full.test, ctx.vocab, ctx.labels,
                         spec_.experiment.task, spec_.experiment.train.batch_size);

      // Audit: exactly the subsampled tenth of the target train was consumed,
      // and each tenth nests inside the next.
      const std::set<uint64_t> expected = target_only(target_t.train);
      std::set<uint64_t> observed;
      for (const JournalEntry& e : journal) {
        if (full_target_hashes.count(e.content_hash) != 0) observed.insert(e.content_hash);
      }
      if (observed != expected) {
        throw Error("subsample audit failed at tenths=" + std::to_string(tenths) +
                    ": the training pass did not consume exactly the subsampled target train");
      }
      if (!std::includes(observed.begin(), observed.end(), previous.begin(), previous.end())) {
        throw Error("subsample audit failed at tenths=" + std::to_string(tenths) +
                    ": smaller subsamples must nest inside larger ones");
      }
      previous = observed;

      const SweepResult sweep = prune_sweep(
          ctx_t, ranking, "lang=" + ranking_lang + " tenths=" + std::to_string(tenths));
      double pruned_best = 0.0;
      size_t pruned_best_k = 0;
      bool have_pruned = false;
      for (const SweepPoint& p : sweep.per_k_scores) {
        if (p.k == 0) continue;
        if (!have_pruned || p.score > pruned_best) {
          pruned_best = p.score;
          pruned_best_k = p.k;
          have_pruned = true;
        }
      }
      if (!have_pruned) {
        throw Error("subsample-study: sweep at tenths=" + std::to_string(tenths) +
                    " produced no pruned points");
      }
      csv << tenths << ',' << target_t.train.size() << ',' << format_score(un_eval.f1) << ','
          << format_score(pruned_best) << ',' << pruned_best_k << '\n';
      Json row;
      row["tenths"] = tenths;
      row["target_train_sentences"] = target_t.train.size();
      row["unpruned_f1"] = un_eval.f1;
      row["pruned_best_f1"] = pruned_best;
      row["pruned_best_k"] = pruned_best_k;
      rows.push_back(row);
      Json t;
      t["tenths"] = tenths;
      t["wall_ms"] = ms_since(started);
      timing.push_back(t);
    }
    const std::string rel = "reports/subsample-" + spec_hash_ + ".csv";
    write_artifact(rel, csv.str());
    record.outputs.push_back(rel);
    record.payload["ranking_language"] = ranking_lang;
    record.payload["rows"] = rows;
    record.timing_detail["per_tenths"] = timing;
  });
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

struct ScorePair {
  bool present = false;
  double unpruned = 0.0;
  bool has_pruned = false;
  double pruned = 0.0;
};

ScorePair score_pair_from_sweep(const Json& sweep) {
  ScorePair out;
  out.present = true;
  for (const Json& point : sweep.at("per_k_scores")) {
    const size_t k = point.at("k").get<size_t>();
    const double score = point.at("score").get<double>();
    if (k == 0) {
      out.unpruned = score;
    } else if (!out.has_pruned || score > out.pruned) {
      out.pruned = score;
      out.has_pruned = true;
    }
  }
  return out;
}

struct ReportKey {
  std::string task;
  std::string sources;
  std::string target;
  std::string method;
  auto operator<=>(const ReportKey&) const = default;
};

// markdown cells for one setting: bold the winner of unpruned vs best-pruned
std::pair<std::string, std::string> markdown_cells(const ScorePair& pair) {
  if (!pair.present) return {"-", "-"};
  std::string unpruned = format_score(pair.unpruned);
  if (!pair.has_pruned) return {unpruned, "-"};
  std::string pruned = format_score(pair.pruned);
  if (pair.pruned > pair.unpruned) {
    pruned = "**" + pruned + "**";
  } else if (pair.unpruned > pair.pruned) {
    unpruned = "**" + unpruned + "**";
  }
  return {unpruned, pruned};
}

std::string csv_winner(const ScorePair& pair) {
  if (!pair.present || !pair.has_pruned) return "-";
  if (pair.pruned > pair.unpruned) return "pruned";
  if (pair.unpruned > pair.pruned) return "unpruned";
  return "tie";
}

}  // namespace

RunRecord Runner::report() {
  return finish("report", [&](RunRecord& record) {
    if (spec_.report.kind == "correlation") {
      const std::string rel_in = "correlations/corr-" + spec_hash_ + ".csv";
      std::string text;
      try {
        text = read_text_file(abs_path(rel_in), "correlation artifact");
      } catch (const MissingArtifactError& e) {
        throw MissingArtifactError(std::string(e.what()) + " (run correlate first)");
      }
      record.inputs.push_back(rel_in);
      const CorrelationTable table = parse_correlation_csv(text);
      std::string rel_out;
      if (spec_.report.format == "csv") {
        const std::string rendered = correlation_csv(table);
        if (rendered != text) {
          throw ValidationError("correlation artifact " + rel_in + " is not in canonical form");
        }
        rel_out = "reports/correlation-" + spec_hash_ + ".csv";
        write_artifact(rel_out, rendered);
      } else {
        std::ostringstream md;
        md << "| language |";
        for (const std::string& lang : table.languages) md << ' ' << lang << " |";
        md << '\n' << "|---|";
        for (size_t i = 0; i < table.languages.size(); ++i) md << "---|";
        md << '\n';
        for (size_t i = 0; i < table.languages.size(); ++i) {
          md << "| " << table.languages[i] << " |";
          for (double rho : table.rho[i]) md << ' ' << format_score(rho) << " |";
          md << '\n';
        }
        rel_out = "reports/correlation-" + spec_hash_ + ".md";
        write_artifact(rel_out, md.str());
      }
      record.outputs.push_back(rel_out);
      record.payload["kind"] = "correlation";
      record.payload["format"] = spec_.report.format;
      record.payload["languages"] = table.languages;
      return;
    }

    const std::string log_rel = "results.jsonl";
    if (!fs::exists(abs_path(log_rel))) {
      throw MissingArtifactError("no results log at " + abs_path(log_rel));
    }
    record.inputs.push_back(log_rel);
    const std::set<std::string> sweep_commands = {"sweep", "baseline-max", "baseline-rand",
                                                  "multi-source"};
    // latest record wins per (key, setting), so a --force rerun supersedes
    std::map<ReportKey, std::array<Json, 2>> cells;
    for (const RunRecord& r : read_results_log(options_.out_dir)) {
      if (sweep_commands.count(r.command) == 0) continue;
      const Json& payload = r.payload;
      if (!payload.contains("sweep")) continue;
      const Json& sweep = payload.at("sweep");
      ReportKey key;
      key.task = payload.at("task").get<std::string>();
      key.sources = join(payload.at("sources").get<std::vector<std::string>>(), "+");
      key.target = payload.at("target").get<std::string>();
      key.method = r.command == "multi-source" ? payload.at("heuristic").get<std::string>()
                                               : sweep.at("sweep_kind").get<std::string>();
      const size_t idx = sweep.at("setting").get<std::string>() == "multi_lingual" ? 1 : 0;
      cells[key][idx] = sweep;
    }
    if (cells.empty()) {
      throw ValidationError("report found no sweep records in " + abs_path(log_rel));
    }

    std::vector<ReportKey> keys;
    for (const auto& [key, unused] : cells) keys.push_back(key);
    if (spec_.report.group_by == "target") {
      std::sort(keys.begin(), keys.end(), [](const ReportKey& a, const ReportKey& b) {
        return std::tie(a.task, a.target, a.sources, a.method) <
               std::tie(b.task, b.target, b.sources, b.method);
      });
    }  // "source" and "k" keep the natural (task, sources, target, method) order

    std::ostringstream out;
    size_t row_count = 0;
    const bool markdown = spec_.report.format == "markdown";
    if (spec_.report.group_by == "k") {
      if (markdown) {
        out << "| task | sources | target | method | setting | k | score |\n";
        out << "|---|---|---|---|---|---|---|\n";
      } else {
        out << "task,sources,target,method,setting,k,score\n";
      }
      for (const ReportKey& key : keys) {
        for (const Json& sweep : cells.at(key)) {
          if (sweep.is_null()) continue;
          const std::string setting = sweep.at("setting").get<std::string>();
          for (const Json& point : sweep.at("per_k_scores")) {
            const size_t k = point.at("k").get<size_t>();
            const std::string score = format_score(point.at("score").get<double>());
            if (markdown) {
              out << "| " << key.task << " | " << key.sources << " | " << key.target << " | "
                  << key.method << " | " << setting << " | " << k << " | " << score << " |\n";
            } else {
              out << key.task << ',' << key.sources << ',' << key.target << ',' << key.method
                  << ',' << setting << ',' << k << ',' << score << '\n';
            }
            ++row_count;
          }
        }
      }
    } else {
      if (markdown) {
        out << "| task | sources | target | method | cross-lingual unpruned | cross-lingual "
               "pruned | multi-lingual unpruned | multi-lingual pruned |\n";
        out << "|---|---|---|---|---|---|---|---|\n";
      } else {
        out << "task,sources,target,method,cross_lingual_unpruned,cross_lingual_pruned,"
               "cross_lingual_better,multi_lingual_unpruned,multi_lingual_pruned,multi_lingual_"
               "better\n";
      }
      for (const ReportKey& key : keys) {
        const std::array<Json, 2>& pair = cells.at(key);
        std::array<ScorePair, 2> scores;
        for (size_t i = 0; i < 2; ++i) {
          if (!pair[i].is_null()) scores[i] = score_pair_from_sweep(pair[i]);
        }
        if (markdown) {
          const auto [cross_up, cross_pr] = markdown_cells(scores[0]);
          const auto [multi_up, multi_pr] = markdown_cells(scores[1]);
          out << "| " << key.task << " | " << key.sources << " | " << key.target << " | "
              << key.method << " | " << cross_up << " | " << cross_pr << " | " << multi_up
              << " | " << multi_pr << " |\n";
        } else {
          auto csv_cell = [](const ScorePair& s, bool pruned) -> std::string {
            if (!s.present) return "";
            if (pruned) return s.has_pruned ? format_score(s.pruned) : "";
            return format_score(s.unpruned);
          };
          out << key.task << ',' << key.sources << ',' << key.target << ',' << key.method << ','
              << csv_cell(scores[0], false) << ',' << csv_cell(scores[0], true) << ','
              << csv_winner(scores[0]) << ',' << csv_cell(scores[1], false) << ','
              << csv_cell(scores[1], true) << ',' << csv_winner(scores[1]) << '\n';
        }
        ++row_count;
      }
    }

    const std::string rel_out =
        "reports/report-" + spec_hash_ + (markdown ? ".md" : ".csv");
    write_artifact(rel_out, out.str());
    record.outputs.push_back(rel_out);
    record.payload["kind"] = "scores";
    record.payload["format"] = spec_.report.format;
    record.payload["group_by"] = spec_.report.group_by;
    record.payload["rows"] = row_count;
  });
}

RunRecord Runner::eval() {
  return finish("eval", [&](RunRecord& record) {
    ExperimentContext ctx = make_context(&record.inputs);
    const std::string rel = "checkpoints/train-" + spec_hash_ + ".ckpt";
    EncoderModel model = [&] {
      try {
        return load_checkpoint(abs_path(rel));
      } catch (const MissingArtifactError& e) {
        throw MissingArtifactError(std::string(e.what()) + " (run train first)");
      }
    }();
    record.inputs.push_back(rel);
    if (model.config().hash_hex() != ctx.model.hash_hex()) {
      throw ValidationError("checkpoint " + rel +
                            " was produced by a different model configuration");
    }
    const std::string lang = spec_.resolved_eval_language();
    const std::vector<Sentence>& sentences =
        find_language(ctx.corpora, lang).split(spec_.eval.split);
    const HeadMask mask = HeadMask::all_active(ctx.model.num_layers, ctx.model.num_heads);
    const EvalResult result = evaluate_model(model, mask, sentences, ctx.vocab, ctx.labels,
                                             spec_.experiment.task,
                                             spec_.experiment.train.batch_size);
    record.payload["language"] = lang;
    record.payload["split"] = spec_.eval.split;
    record.payload["precision"] = result.precision;
    record.payload["recall"] = result.recall;
    record.payload["f1"] = result.f1;
    record.payload["support"] = result.support;
  });
}

}  // namespace headprune
