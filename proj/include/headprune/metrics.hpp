#pragma once

#include <string>
#include <vector>

#include "headprune/corpus.hpp"

namespace headprune {

struct Span {
  size_t start;
  size_t end;  // exclusive
  std::string type;
  auto operator<=>(const Span&) const = default;
};

// Maximal well-formed BIO spans; orphan I-X opens a new span (same reading as
// the corpus repair rule).
std::vector<Span> extract_spans(const std::vector<std::string>& tags);

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t support = 0;  // gold spans for span tasks, tokens for pos
  TaskKind task_kind = TaskKind::span;
};

// Micro-averaged exact-match span F1: a predicted span is a true positive iff
// start, end and type all match a gold span.
EvalResult span_f1(const std::vector<Sentence>& gold,
                   const std::vector<std::vector<std::string>>& predicted);

// Micro token F1. With every token labeled and one prediction per token this
// equals accuracy, which is how the POS scores here should be read.
EvalResult token_f1(const std::vector<Sentence>& gold,
                    const std::vector<std::vector<std::string>>& predicted);

EvalResult evaluate(TaskKind task, const std::vector<Sentence>& gold,
                    const std::vector<std::vector<std::string>>& predicted);

std::string eval_csv_line(const EvalResult& r);  // task,precision,recall,f1,support

}  // namespace headprune
