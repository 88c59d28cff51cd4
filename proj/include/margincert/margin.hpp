#pragma once

// Classification margins. The decision margin is the gap between the top
// logit and the runner-up; the label margin replaces the argmax class by the
// ground-truth class and goes negative on misclassified samples.

#include <optional>
#include <stdexcept>

#include "margincert/common.hpp"

namespace margincert {

namespace detail {

// Lowest index attaining the maximum; deterministic tie-breaking.
inline int argmax_lowest(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Lowest-index maximizer over all entries except `skip`.
inline int argmax_excluding(const Vec& v, int skip) {
  int best = -1;
  for (int i = 0; i < v.size(); ++i) {
    if (i == skip) continue;
    if (best < 0 || v[i] > v[best]) best = i;
  }
  return best;
}

inline void check_class_index(const Vec& logits, int c) {
  if (c < 0 || c >= logits.size())
    throw std::invalid_argument("class index out of range");
}

}  // namespace detail

struct DecisionMargin {
  double margin = 0.0;   // top logit minus runner-up; 0 on ties
  int decided_class = 0; // lowest tied index wins
};

inline DecisionMargin decision_margin(const Vec& logits) {
  if (logits.size() < 2)
    throw std::invalid_argument("decision margin needs at least 2 classes");
  int best = detail::argmax_lowest(logits);
  int second = detail::argmax_excluding(logits, best);
  return {logits[best] - logits[second], best};
}

inline double label_margin(const Vec& logits, int true_class) {
  if (logits.size() < 2)
    throw std::invalid_argument("label margin needs at least 2 classes");
  detail::check_class_index(logits, true_class);
  int rival = detail::argmax_excluding(logits, true_class);
  return logits[true_class] - logits[rival];
}

// Per-sample margin state carried through constraint-weight training.
struct MarginRecord {
  int sample_id = 0;
  double decision_margin = 0.0;
  double label_margin = 0.0;
  int decided_class = 0;
  std::optional<int> true_class;
  double lambda = 1.0;  // constraint weight, >= 0
};

inline MarginRecord make_margin_record(int sample_id, const Vec& logits,
                                       std::optional<int> true_class,
                                       double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  MarginRecord r;
  r.sample_id = sample_id;
  auto dm = decision_margin(logits);
  r.decision_margin = dm.margin;
  r.decided_class = dm.decided_class;
  r.true_class = true_class;
  r.label_margin = true_class ? label_margin(logits, *true_class) : dm.margin;
  r.lambda = lambda;
  return r;
}

}  // namespace margincert
