#pragma once

// Constraint-weight training: drive every training sample's label margin to
// at least mu. Outer loop grows per-sample weights lambda_x while the
// sample's margin constraint is violated; the inner step is a fixed budget
// of minibatch SGD epochs so the outer loop stays finite.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "margincert/dataset.hpp"
#include "margincert/losses.hpp"
#include "margincert/model.hpp"

namespace margincert {

struct UpdateRule {
  enum class Kind {
    multiplicative,          // lambda <- delta * lambda on violation
    additive,                // lambda <- lambda + step on violation
    decrease_on_satisfied,   // multiplicative growth, plus decay on satisfied
    violation_proportional,  // lambda <- lambda + scale * max(0, mu - margin)
  };
  Kind kind = Kind::multiplicative;
  double step = 0.0;    // additive
  double factor = 0.0;  // decrease_on_satisfied, in (0,1)
  double scale = 0.0;   // violation_proportional

  static UpdateRule multiplicative() { return {Kind::multiplicative, 0, 0, 0}; }
  static UpdateRule additive(double step) { return {Kind::additive, step, 0, 0}; }
  static UpdateRule decrease_on_satisfied(double factor) {
    return {Kind::decrease_on_satisfied, 0, factor, 0};
  }
  static UpdateRule violation_proportional(double scale) {
    return {Kind::violation_proportional, 0, 0, scale};
  }

  void validate(double delta) const {
    switch (kind) {
      case Kind::multiplicative:
      case Kind::decrease_on_satisfied:
        if (!(delta > 1.0)) throw std::invalid_argument("delta must be > 1");
        if (kind == Kind::decrease_on_satisfied && !(factor > 0.0 && factor < 1.0))
          throw std::invalid_argument("decrease factor must be in (0,1)");
        break;
      case Kind::additive:
        if (!(step > 0.0)) throw std::invalid_argument("additive step must be > 0");
        break;
      case Kind::violation_proportional:
        if (!(scale > 0.0)) throw std::invalid_argument("scale must be > 0");
        break;
    }
  }
};

struct DualConfig {
  double mu = 1.0;           // target label margin
  double delta = 2.0;        // multiplicative weight growth, > 1
  double lambda_init = 1.0;
  int max_outer_iters = 50;
  int inner_epochs = 1;
  double lr = 1e-4;
  int batch_size = 32;
  LossKind loss_kind = LossKind::dual;
  UpdateRule update_rule{};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be > 0");
    if (!(lambda_init > 0.0)) throw std::invalid_argument("lambda_init must be > 0");
    if (max_outer_iters <= 0) throw std::invalid_argument("max_outer_iters must be > 0");
    if (inner_epochs <= 0) throw std::invalid_argument("inner_epochs must be > 0");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be > 0");
    update_rule.validate(delta);
  }

  // Floor for the decrease variant; prevents weight extinction.
  double lambda_floor() const { return lambda_init * 1e-6; }
};

enum class Termination { all_satisfied, max_iters };

inline const char* to_string(Termination t) {
  return t == Termination::all_satisfied ? "all_satisfied" : "max_iters";
}

struct OuterIteration {
  int violated = 0;
  double min_label_margin = 0.0;
  double mean_loss = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double lambda_mean = 0.0;
};

struct TrainHistory {
  std::vector<OuterIteration> iterations;
  Termination termination = Termination::max_iters;
};

// Violated sample ids: label_margin < mu, strictly, so margins meeting mu
// exactly count as satisfied. Ids are row indices into the dataset.
inline std::vector<int> check_constraints(const Model& model, const Dataset& data,
                                          double mu) {
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  std::vector<int> violated;
  for (int i = 0; i < data.size(); ++i) {
    const Vec logits = forward(model, data.features.row(i).transpose());
    if (label_margin(logits, data.labels[i]) < mu) violated.push_back(i);
  }
  return violated;
}

// Applies one weight update. `records` must carry fresh label margins
// (the violation_proportional rule scales by the degree of violation).
inline void update_weights(std::vector<MarginRecord>& records,
                           const std::vector<int>& violated_ids,
                           const UpdateRule& rule, double delta, double mu,
                           double lambda_floor) {
  rule.validate(delta);
  std::unordered_set<int> violated(violated_ids.begin(), violated_ids.end());
  for (auto& r : records) {
    const bool is_violated = violated.count(r.sample_id) > 0;
    switch (rule.kind) {
      case UpdateRule::Kind::multiplicative:
        if (is_violated) r.lambda *= delta;
        break;
      case UpdateRule::Kind::additive:
        if (is_violated) r.lambda += rule.step;
        break;
      case UpdateRule::Kind::decrease_on_satisfied:
        if (is_violated)
          r.lambda *= delta;
        else
          r.lambda = std::max(lambda_floor, rule.factor * r.lambda);
        break;
      case UpdateRule::Kind::violation_proportional:
        if (is_violated) r.lambda += rule.scale * std::max(0.0, mu - r.label_margin);
        break;
    }
    if (r.lambda < 0.0) throw std::logic_error("negative lambda after update");
  }
}

struct TrainResult {
  TrainHistory history;
  std::vector<MarginRecord> records;  // final per-sample margins and lambdas
};

namespace detail {

struct EvalPass {
  std::vector<int> violated;
  double min_label_margin = 0.0;
  double mean_loss = 0.0;
};

inline EvalPass evaluate_constraints(const Model& model, const Dataset& data,
                                     const DualConfig& cfg,
                                     const std::vector<double>& mu_per_sample,
                                     std::vector<MarginRecord>& records) {
  EvalPass ev;
  ev.min_label_margin = std::numeric_limits<double>::infinity();
  double loss_sum = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    const Vec logits = forward(model, data.features.row(i).transpose());
    const int y = data.labels[i];
    const double lm = label_margin(logits, y);
    auto dm = decision_margin(logits);
    records[i].decision_margin = dm.margin;
    records[i].decided_class = dm.decided_class;
    records[i].label_margin = lm;
    const double mu_i = mu_per_sample.empty() ? cfg.mu : mu_per_sample[i];
    if (lm < mu_i) ev.violated.push_back(i);
    ev.min_label_margin = std::min(ev.min_label_margin, lm);
    loss_sum += loss_value(cfg.loss_kind, logits, y, mu_i, records[i].lambda);
  }
  ev.mean_loss = loss_sum / data.size();
  return ev;
}

inline OuterIteration history_row(const EvalPass& ev,
                                  const std::vector<MarginRecord>& records) {
  OuterIteration row;
  row.violated = static_cast<int>(ev.violated.size());
  row.min_label_margin = ev.min_label_margin;
  row.mean_loss = ev.mean_loss;
  row.lambda_min = std::numeric_limits<double>::infinity();
  row.lambda_max = 0.0;
  double sum = 0.0;
  for (const auto& r : records) {
    row.lambda_min = std::min(row.lambda_min, r.lambda);
    row.lambda_max = std::max(row.lambda_max, r.lambda);
    sum += r.lambda;
  }
  row.lambda_mean = sum / records.size();
  return row;
}

// One epoch of minibatch SGD on the lambda-weighted per-sample losses.
// Batch gradient is the batch mean; the remainder is kept as a short batch.
inline void sgd_epoch(Model& model, const Dataset& data, const DualConfig& cfg,
                      const std::vector<double>& mu_per_sample,
                      const std::vector<MarginRecord>& records,
                      std::vector<int>& order, std::mt19937_64& rng) {
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    GradientTape batch = GradientTape::zeros_like(model);
    for (std::size_t k = start; k < end; ++k) {
      const int i = order[k];
      const ForwardTrace trace = forward_trace(model, data.features.row(i).transpose());
      const double mu_i = mu_per_sample.empty() ? cfg.mu : mu_per_sample[i];
      const Vec g = loss_grad(cfg.loss_kind, trace.logits, data.labels[i], mu_i,
                              records[i].lambda);
      batch.accumulate(backward(model, trace, g));
    }
    batch.scale(1.0 / static_cast<double>(end - start));
    sgd_step(model, batch, cfg.lr);
  }
}

}  // namespace detail

// The outer procedure. A satisfaction check runs before any training so an
// already-feasible model returns untouched; afterwards each outer iteration
// trains for inner_epochs, re-checks, and grows the weights of violated
// samples. Warm starts are expressed by passing a pretrained model.
// mu_per_sample optionally overrides the global mu per sample id.
inline TrainResult dual_train(Model& model, const Dataset& data,
                              const DualConfig& cfg,
                              const std::vector<double>& mu_per_sample = {}) {
  cfg.validate();
  model.validate();
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  if (!mu_per_sample.empty() &&
      mu_per_sample.size() != static_cast<std::size_t>(data.size()))
    throw std::invalid_argument("mu_per_sample size mismatch");

  TrainResult result;
  auto& records = result.records;
  records.reserve(data.size());
  for (int i = 0; i < data.size(); ++i) {
    MarginRecord r;
    r.sample_id = i;
    r.true_class = data.labels[i];
    r.lambda = cfg.lambda_init;
    records.push_back(r);
  }

  auto finish = [&](Termination t) {
    result.history.termination = t;
    return result;
  };

  auto ev = detail::evaluate_constraints(model, data, cfg, mu_per_sample, records);
  if (ev.violated.empty()) {
    result.history.iterations.push_back(detail::history_row(ev, records));
    return finish(Termination::all_satisfied);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int it = 0; it < cfg.max_outer_iters; ++it) {
    for (int e = 0; e < cfg.inner_epochs; ++e)
      detail::sgd_epoch(model, data, cfg, mu_per_sample, records, order, rng);
    ev = detail::evaluate_constraints(model, data, cfg, mu_per_sample, records);
    result.history.iterations.push_back(detail::history_row(ev, records));
    if (ev.violated.empty()) return finish(Termination::all_satisfied);
    if (it + 1 < cfg.max_outer_iters)
      update_weights(records, ev.violated, cfg.update_rule, cfg.delta, cfg.mu,
                     cfg.lambda_floor());
  }
  return finish(Termination::max_iters);
}

// Plain minibatch training on one objective with unit weights; used for
// cross-entropy baselines and pretraining.
inline void train_plain(Model& model, const Dataset& data, LossKind kind,
                        double mu, int epochs, double lr, int batch_size,
                        std::uint64_t seed) {
  if (epochs <= 0) throw std::invalid_argument("epochs must be > 0");
  DualConfig cfg;
  cfg.mu = mu > 0 ? mu : 1.0;
  cfg.loss_kind = kind;
  cfg.lr = lr;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.validate();
  model.validate();
  data.validate();
  std::vector<MarginRecord> records(data.size());
  for (int i = 0; i < data.size(); ++i) {
    records[i].sample_id = i;
    records[i].lambda = 1.0;
  }
  // softmax_margin with mu = 0 is standard cross-entropy; DualConfig
  // validation requires mu > 0, so the epoch loop gets mu directly.
  std::vector<double> mu_all(data.size(), mu);
  std::mt19937_64 rng(seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs; ++e)
    detail::sgd_epoch(model, data, cfg, mu_all, records, order, rng);
}

}  // namespace margincert
