#pragma once

#include <string>
#include <vector>

namespace headprune::oracle {

// Brute-force span scorer, written independently of the metrics module: an
// explicit state machine walks the tags, and matching is a quadratic scan
// with used-flags instead of set intersection.
struct NaiveScores {
  size_t tp = 0;
  size_t pred_spans = 0;
  size_t gold_spans = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct NaiveSpan {
  size_t start = 0;
  size_t end = 0;
  std::string type;
};

inline std::vector<NaiveSpan> naive_extract(const std::vector<std::string>& tags) {
  std::vector<NaiveSpan> spans;
  bool open = false;
  NaiveSpan cur;
  auto close = [&](size_t end) {
    if (open) {
      cur.end = end;
      spans.push_back(cur);
      open = false;
    }
  };
  for (size_t i = 0; i < tags.size(); ++i) {
    const std::string& t = tags[i];
    if (t == "O") {
      close(i);
    } else if (t[0] == 'B') {
      close(i);
      open = true;
      cur.start = i;
      cur.type = t.substr(2);
    } else {  // I-X continues a same-type span, otherwise opens one (orphan)
      if (!open || cur.type != t.substr(2)) {
        close(i);
        open = true;
        cur.start = i;
        cur.type = t.substr(2);
      }
    }
  }
  close(tags.size());
  return spans;
}

inline NaiveScores naive_span_scores(const std::vector<std::vector<std::string>>& gold,
                                     const std::vector<std::vector<std::string>>& pred) {
  NaiveScores s;
  for (size_t i = 0; i < gold.size(); ++i) {
    auto g = naive_extract(gold[i]);
    auto p = naive_extract(pred[i]);
    s.gold_spans += g.size();
    s.pred_spans += p.size();
    std::vector<bool> used(p.size(), false);
    for (const NaiveSpan& gs : g) {
      for (size_t j = 0; j < p.size(); ++j) {
        if (!used[j] && p[j].start == gs.start && p[j].end == gs.end && p[j].type == gs.type) {
          used[j] = true;
          ++s.tp;
          break;
        }
      }
    }
  }
  s.precision = s.pred_spans > 0 ? static_cast<double>(s.tp) / static_cast<double>(s.pred_spans) : 0.0;
  s.recall = s.gold_spans > 0 ? static_cast<double>(s.tp) / static_cast<double>(s.gold_spans) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
  return s;
}

}  // namespace headprune::oracle
