#pragma once

// The four margin training objectives, per sample, at the logit level.
// Each loss has a value form and a d loss / d logits form; max terms use the
// lowest-index maximizer's one-hot subgradient at ties.
//
//   log_ratio(f, c; mu)        = -log( f_c / ((C-1) mu + sum_{i != c} f_i) )
//   softmax_margin(f, c; mu)   = -log( e^{f_c} / (e^{f_c} + sum_{i != c} e^{f_i + mu}) )
//   dual_normalized(f, c; mu, lambda)
//                              = lambda (max_{i != c} f_i + mu - f_c) / ((C-1) mu + sum_j f_j)
//   dual(f, c; mu, lambda)     = lambda (max_{i != c} f_i + mu - f_c)

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "margincert/margin.hpp"

namespace margincert {

enum class LossKind { dual, dual_normalized, log_ratio, softmax_margin };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::dual: return "dual";
    case LossKind::dual_normalized: return "dual_normalized";
    case LossKind::log_ratio: return "log_ratio";
    case LossKind::softmax_margin: return "softmax_margin";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "dual") return LossKind::dual;
  if (s == "dual_normalized") return LossKind::dual_normalized;
  if (s == "log_ratio") return LossKind::log_ratio;
  if (s == "softmax_margin") return LossKind::softmax_margin;
  throw std::invalid_argument("unknown loss kind: " + s);
}

// lambda is a multiplicative weight in both dual losses; log_ratio and
// softmax_margin ignore it (they carry no per-sample constraint weight).
inline bool loss_uses_lambda(LossKind k) {
  return k == LossKind::dual || k == LossKind::dual_normalized;
}

namespace detail {

inline void check_rectified(const Vec& logits) {
  for (int i = 0; i < logits.size(); ++i)
    if (logits[i] < 0.0)
      throw std::invalid_argument(
          "rectification violation: negative logit passed to log_ratio loss");
}

inline void check_mu_positive(double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
}

inline void check_lambda(double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
}

// Slope floor for d log_ratio / d f_c at f_c = 0; keeps tapes finite while
// the loss value itself is the +inf sentinel.
inline constexpr double kLogitSlopeFloor = 1e-12;

}  // namespace detail

// ---------------------------------------------------------------- log_ratio

inline double loss_log_ratio(const Vec& logits, int true_class, double mu) {
  detail::check_class_index(logits, true_class);
  detail::check_mu_positive(mu);
  detail::check_rectified(logits);
  const int c_count = static_cast<int>(logits.size());
  double denom = (c_count - 1) * mu;
  for (int i = 0; i < c_count; ++i)
    if (i != true_class) denom += logits[i];
  const double fc = logits[true_class];
  if (fc == 0.0) return std::numeric_limits<double>::infinity();
  return std::log(denom) - std::log(fc);
}

inline Vec loss_log_ratio_grad(const Vec& logits, int true_class, double mu) {
  detail::check_class_index(logits, true_class);
  detail::check_mu_positive(mu);
  detail::check_rectified(logits);
  const int c_count = static_cast<int>(logits.size());
  double denom = (c_count - 1) * mu;
  for (int i = 0; i < c_count; ++i)
    if (i != true_class) denom += logits[i];
  Vec g(c_count);
  for (int i = 0; i < c_count; ++i) g[i] = 1.0 / denom;
  g[true_class] = -1.0 / std::max(logits[true_class], detail::kLogitSlopeFloor);
  return g;
}

// ----------------------------------------------------------- softmax_margin

// Max-shifted with a log1p tail so tiny losses keep full precision.
inline double loss_softmax_margin(const Vec& logits, int true_class, double mu) {
  detail::check_class_index(logits, true_class);
  const int c_count = static_cast<int>(logits.size());
  auto term = [&](int i) { return i == true_class ? logits[i] : logits[i] + mu; };
  int top = 0;
  for (int i = 1; i < c_count; ++i)
    if (term(i) > term(top)) top = i;
  const double m = term(top);
  double rest = 0.0;
  for (int i = 0; i < c_count; ++i)
    if (i != top) rest += std::exp(term(i) - m);
  return (m - logits[true_class]) + std::log1p(rest);
}

inline Vec loss_softmax_margin_grad(const Vec& logits, int true_class, double mu) {
  detail::check_class_index(logits, true_class);
  const int c_count = static_cast<int>(logits.size());
  auto term = [&](int i) { return i == true_class ? logits[i] : logits[i] + mu; };
  double m = term(0);
  for (int i = 1; i < c_count; ++i) m = std::max(m, term(i));
  double z = 0.0;
  Vec g(c_count);
  for (int i = 0; i < c_count; ++i) {
    g[i] = std::exp(term(i) - m);
    z += g[i];
  }
  g /= z;  // softmax over the shifted terms
  g[true_class] -= 1.0;
  return g;
}

// Standard softmax cross-entropy; identical to softmax_margin at mu = 0.
inline double softmax_cross_entropy(const Vec& logits, int true_class) {
  return loss_softmax_margin(logits, true_class, 0.0);
}

inline Vec softmax_cross_entropy_grad(const Vec& logits, int true_class) {
  return loss_softmax_margin_grad(logits, true_class, 0.0);
}

// ---------------------------------------------------------- dual_normalized

inline double loss_dual_normalized(const Vec& logits, int true_class, double mu,
                                   double lambda) {
  detail::check_class_index(logits, true_class);
  detail::check_lambda(lambda);
  const int c_count = static_cast<int>(logits.size());
  const double denom = (c_count - 1) * mu + logits.sum();  // sum over all j
  if (!(denom > 0.0))
    throw std::invalid_argument("dual_normalized: nonpositive denominator");
  const int rival = detail::argmax_excluding(logits, true_class);
  return lambda * (logits[rival] + mu - logits[true_class]) / denom;
}

inline Vec loss_dual_normalized_grad(const Vec& logits, int true_class, double mu,
                                     double lambda) {
  detail::check_class_index(logits, true_class);
  detail::check_lambda(lambda);
  const int c_count = static_cast<int>(logits.size());
  const double denom = (c_count - 1) * mu + logits.sum();
  if (!(denom > 0.0))
    throw std::invalid_argument("dual_normalized: nonpositive denominator");
  const int rival = detail::argmax_excluding(logits, true_class);
  const double num = logits[rival] + mu - logits[true_class];
  Vec g(c_count);
  for (int i = 0; i < c_count; ++i) {
    double dnum = (i == rival ? 1.0 : 0.0) - (i == true_class ? 1.0 : 0.0);
    g[i] = lambda * (dnum * denom - num) / (denom * denom);
  }
  return g;
}

// ----------------------------------------------------------------- dual

inline double loss_dual(const Vec& logits, int true_class, double mu,
                        double lambda) {
  detail::check_class_index(logits, true_class);
  detail::check_lambda(lambda);
  const int rival = detail::argmax_excluding(logits, true_class);
  return lambda * (logits[rival] + mu - logits[true_class]);
}

inline Vec loss_dual_grad(const Vec& logits, int true_class, double mu,
                          double lambda) {
  (void)mu;
  detail::check_class_index(logits, true_class);
  detail::check_lambda(lambda);
  const int rival = detail::argmax_excluding(logits, true_class);
  Vec g = Vec::Zero(logits.size());
  g[rival] += lambda;
  g[true_class] -= lambda;
  return g;
}

// ------------------------------------------------------------- dispatchers

inline double loss_value(LossKind kind, const Vec& logits, int true_class,
                         double mu, double lambda) {
  switch (kind) {
    case LossKind::dual: return loss_dual(logits, true_class, mu, lambda);
    case LossKind::dual_normalized:
      return loss_dual_normalized(logits, true_class, mu, lambda);
    case LossKind::log_ratio: return loss_log_ratio(logits, true_class, mu);
    case LossKind::softmax_margin:
      return loss_softmax_margin(logits, true_class, mu);
  }
  throw std::logic_error("unreachable loss kind");
}

inline Vec loss_grad(LossKind kind, const Vec& logits, int true_class,
                     double mu, double lambda) {
  switch (kind) {
    case LossKind::dual: return loss_dual_grad(logits, true_class, mu, lambda);
    case LossKind::dual_normalized:
      return loss_dual_normalized_grad(logits, true_class, mu, lambda);
    case LossKind::log_ratio: return loss_log_ratio_grad(logits, true_class, mu);
    case LossKind::softmax_margin:
      return loss_softmax_margin_grad(logits, true_class, mu);
  }
  throw std::logic_error("unreachable loss kind");
}

}  // namespace margincert
