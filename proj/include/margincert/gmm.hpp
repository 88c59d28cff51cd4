#pragma once

// 1-D Gaussian mixtures over log-margins: EM fitting with seeded
// k-means++-style initialization, and BIC model order selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "margincert/common.hpp"

namespace margincert {

struct GmmComponent {
  double weight = 1.0;  // in [0,1], weights sum to 1
  double mean = 0.0;    // log-margin units
  double sigma = 1.0;   // > 0
};

struct GmmModel {
  std::vector<GmmComponent> components;
  int class_id = kPooledClass;  // class index, or kPooledClass
  int n_train = 0;
  double log_likelihood = 0.0;
  double bic = 0.0;
  std::vector<double> loglik_trace;  // per EM iteration; diagnostics only

  void validate() const {
    if (components.empty()) throw std::invalid_argument("GMM has no components");
    double wsum = 0.0;
    for (const auto& c : components) {
      if (!(c.sigma > 0.0)) throw std::invalid_argument("GMM sigma must be > 0");
      if (c.weight < 0.0) throw std::invalid_argument("GMM weight must be >= 0");
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
      throw std::invalid_argument("GMM weights must sum to 1");
  }
};

namespace detail {

// Sigma floor: 1e-4 * data std, or 1e-6 absolute when the data std is 0.
// Prevents EM singularities on clustered margins.
inline double sigma_floor(double data_std) {
  return data_std > 0.0 ? 1e-4 * data_std : 1e-6;
}

inline double log_normal_pdf(double x, double mean, double sigma) {
  static const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

inline double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// k-means++-style spread: first mean uniform, later means drawn with
// probability proportional to squared distance from the nearest chosen one.
inline std::vector<double> seed_means(const std::vector<double>& data, int k,
                                      std::mt19937_64& rng) {
  std::vector<double> means;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  means.push_back(data[pick(rng)]);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (static_cast<int>(means.size()) < k) {
    std::vector<double> d2(data.size());
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double m : means) best = std::min(best, (data[i] - m) * (data[i] - m));
      d2[i] = best;
      total += best;
    }
    if (total == 0.0) {
      means.push_back(data[pick(rng)]);
      continue;
    }
    double target = unif(rng) * total;
    std::size_t chosen = data.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      acc += d2[i];
      if (acc >= target) {
        chosen = i;
        break;
      }
    }
    means.push_back(data[chosen]);
  }
  return means;
}

}  // namespace detail

// Standard 1-D EM. Log-likelihood is nondecreasing per iteration; stops when
// the improvement falls below tol or after max_iters.
inline GmmModel fit_gmm_em(const std::vector<double>& data, int k,
                           std::uint64_t seed, double tol = 1e-8,
                           int max_iters = 500) {
  const int n = static_cast<int>(data.size());
  if (k < 1) throw std::invalid_argument("K must be >= 1");
  if (n < k) throw std::invalid_argument("K exceeds number of data points");
  for (double x : data)
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite datum");

  double mean = 0.0;
  for (double x : data) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : data) var += (x - mean) * (x - mean);
  var /= n;  // biased
  const double floor = detail::sigma_floor(std::sqrt(var));

  std::mt19937_64 rng(seed);
  GmmModel gmm;
  gmm.n_train = n;
  const double init_sigma = std::max(std::sqrt(var), floor);
  for (double m0 : detail::seed_means(data, k, rng))
    gmm.components.push_back({1.0 / k, m0, init_sigma});

  std::vector<double> terms(k);
  std::vector<std::vector<double>> resp(k, std::vector<double>(n));
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    // E-step; also the log-likelihood of the current parameters.
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j)
        terms[j] = (gmm.components[j].weight > 0.0
                        ? std::log(gmm.components[j].weight)
                        : -std::numeric_limits<double>::infinity()) +
                   detail::log_normal_pdf(data[i], gmm.components[j].mean,
                                          gmm.components[j].sigma);
      const double denom = detail::logsumexp(terms);
      ll += denom;
      for (int j = 0; j < k; ++j) resp[j][i] = std::exp(terms[j] - denom);
    }
    gmm.loglik_trace.push_back(ll);
    gmm.log_likelihood = ll;
    if (iter > 0 && ll - prev_ll < tol) break;
    prev_ll = ll;

    // M-step. A component with no responsibility mass keeps its parameters.
    for (int j = 0; j < k; ++j) {
      double rsum = 0.0, rx = 0.0;
      for (int i = 0; i < n; ++i) {
        rsum += resp[j][i];
        rx += resp[j][i] * data[i];
      }
      if (rsum <= 0.0) {
        gmm.components[j].weight = 0.0;
        continue;
      }
      const double mj = rx / rsum;
      double rvar = 0.0;
      for (int i = 0; i < n; ++i)
        rvar += resp[j][i] * (data[i] - mj) * (data[i] - mj);
      gmm.components[j].weight = rsum / n;
      gmm.components[j].mean = mj;
      gmm.components[j].sigma = std::max(std::sqrt(rvar / rsum), floor);
    }
    // Renormalize against drift so the weights stay a simplex point.
    double wsum = 0.0;
    for (const auto& c : gmm.components) wsum += c.weight;
    for (auto& c : gmm.components) c.weight /= wsum;
  }

  const int p = 3 * k - 1;  // K-1 free weights, K means, K sigmas
  gmm.bic = -2.0 * gmm.log_likelihood + p * std::log(static_cast<double>(n));
  return gmm;
}

// Fits K = 1..K_max with seeded restarts, keeps the best log-likelihood per
// K, and returns the BIC minimizer (ties break toward smaller K).
inline GmmModel select_order_bic(const std::vector<double>& data, int k_max,
                                 std::uint64_t seed, int restarts,
                                 double tol = 1e-8, int max_iters = 500) {
  if (k_max < 1) throw std::invalid_argument("K_max must be >= 1");
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (data.empty()) throw std::invalid_argument("empty data");

  GmmModel best;
  bool have_best = false;
  const int k_cap = std::min<int>(k_max, static_cast<int>(data.size()));
  for (int k = 1; k <= k_cap; ++k) {
    GmmModel best_k;
    for (int r = 0; r < restarts; ++r) {
      GmmModel cand = fit_gmm_em(
          data, k, derive_seed(seed, "em:" + std::to_string(k) + ":" + std::to_string(r)),
          tol, max_iters);
      if (r == 0 || cand.log_likelihood > best_k.log_likelihood) best_k = cand;
    }
    if (!have_best || best_k.bic < best.bic) {
      best = best_k;
      have_best = true;
    }
  }
  return best;
}

inline nlohmann::json gmm_to_json(const GmmModel& gmm) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : gmm.components)
    comps.push_back({{"w", c.weight}, {"m", c.mean}, {"sigma", c.sigma}});
  return {{"class_id", gmm.class_id},
          {"components", std::move(comps)},
          {"n_train", gmm.n_train},
          {"bic", gmm.bic},
          {"log_likelihood", gmm.log_likelihood}};
}

inline GmmModel gmm_from_json(const nlohmann::json& j) {
  GmmModel gmm;
  gmm.class_id = j.at("class_id").get<int>();
  gmm.n_train = j.at("n_train").get<int>();
  gmm.bic = j.at("bic").get<double>();
  gmm.log_likelihood = j.at("log_likelihood").get<double>();
  for (const auto& jc : j.at("components"))
    gmm.components.push_back({jc.at("w").get<double>(), jc.at("m").get<double>(),
                              jc.at("sigma").get<double>()});
  gmm.validate();
  return gmm;
}

}  // namespace margincert
