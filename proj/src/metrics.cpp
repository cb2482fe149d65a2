#include "headprune/metrics.hpp"

#include <algorithm>
#include <cstdio>

namespace headprune {

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  size_t i = 0;
  while (i < tags.size()) {
    const std::string& t = tags[i];
    if (t == "O") {
      ++i;
      continue;
    }
    if (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-') {
      throw ValidationError("extract_spans: tag '" + t + "' is not O/B-X/I-X");
    }
    // B-X opens a span; orphan I-X opens one too
    const std::string type = t.substr(2);
    size_t start = i;
    ++i;
    while (i < tags.size() && tags[i] == "I-" + type) ++i;
    spans.push_back(Span{start, i, type});
  }
  return spans;
}

namespace {

void check_alignment(const std::vector<Sentence>& gold,
                     const std::vector<std::vector<std::string>>& predicted) {
  if (gold.size() != predicted.size()) {
    throw ValidationError("evaluation: " + std::to_string(predicted.size()) +
                          " predictions for " + std::to_string(gold.size()) + " sentences");
  }
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].tags.size() != predicted[i].size()) {
      throw ValidationError("evaluation: sentence " + std::to_string(i) + " has " +
                            std::to_string(gold[i].tags.size()) + " gold tags but " +
                            std::to_string(predicted[i].size()) + " predictions");
    }
  }
}

EvalResult from_counts(size_t tp, size_t pred_total, size_t gold_total, TaskKind task) {
  EvalResult r;
  r.task_kind = task;
  r.support = gold_total;
  r.precision = pred_total > 0 ? static_cast<double>(tp) / static_cast<double>(pred_total) : 0.0;
  r.recall = gold_total > 0 ? static_cast<double>(tp) / static_cast<double>(gold_total) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

}  // namespace

EvalResult span_f1(const std::vector<Sentence>& gold,
                   const std::vector<std::vector<std::string>>& predicted) {
  check_alignment(gold, predicted);
  size_t tp = 0, pred_total = 0, gold_total = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    std::vector<Span> g = extract_spans(gold[i].tags);
    std::vector<Span> p = extract_spans(predicted[i]);
    pred_total += p.size();
    gold_total += g.size();
    // spans from one sentence never repeat (distinct starts), so set
    // intersection is a sorted merge
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    std::vector<Span> hit;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(hit));
    tp += hit.size();
  }
  return from_counts(tp, pred_total, gold_total, TaskKind::span);
}

EvalResult token_f1(const std::vector<Sentence>& gold,
                    const std::vector<std::vector<std::string>>& predicted) {
  check_alignment(gold, predicted);
  size_t tp = 0, total = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    for (size_t j = 0; j < gold[i].tags.size(); ++j) {
      tp += gold[i].tags[j] == predicted[i][j] ? 1 : 0;
      ++total;
    }
  }
  return from_counts(tp, total, total, TaskKind::pos);
}

EvalResult evaluate(TaskKind task, const std::vector<Sentence>& gold,
                    const std::vector<std::vector<std::string>>& predicted) {
  return task == TaskKind::span ? span_f1(gold, predicted) : token_f1(gold, predicted);
}

std::string eval_csv_line(const EvalResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%zu", task_kind_name(r.task_kind).c_str(),
                r.precision, r.recall, r.f1, r.support);
  return buf;
}

}  // namespace headprune
