#pragma once

// Layer-composition upper bounds on the Lipschitz parameters of a dense
// stack, the two certified purity radii built from them, and a Monte-Carlo
// ball-purity check that probes the certificates empirically.
//
// For 1-Lipschitz activations (ReLU, identity):
//   L_2   <= prod_k sigma_max(W_k)
//   L_inf <= (prod_{k<last} sigma_max(W_k)) * max_i |row_i(W_last)|_2
// Biases and output rectification change neither bound.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "margincert/dataset.hpp"
#include "margincert/margin.hpp"
#include "margincert/model.hpp"

namespace margincert {

struct SpectralEstimate {
  double value = 0.0;
  int iters = 0;
  bool converged = false;
};

// Largest singular value via power iteration on M^T M. The Rayleigh
// estimate |M v| with |v| = 1 never exceeds sigma_max, so the caller can
// inflate by (1 + tol) to recover an upper bound within tolerance.
inline SpectralEstimate spectral_norm_detail(const Mat& m, int max_iters,
                                             double tol, std::uint64_t seed) {
  if (m.rows() == 0 || m.cols() == 0)
    throw std::invalid_argument("spectral norm of empty matrix");
  if (!m.allFinite())
    throw std::invalid_argument("spectral norm of non-finite matrix");
  if (max_iters <= 0) throw std::invalid_argument("max_iters must be > 0");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(m.cols());
  for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
  v.normalize();

  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    const Vec u = m * v;
    const double sigma = u.norm();
    if (sigma == 0.0) return {0.0, it, true};
    if (std::abs(sigma - prev) < tol * sigma) return {sigma, it, true};
    prev = sigma;
    v = m.transpose() * u;
    v.normalize();
  }
  return {prev, max_iters, false};
}

inline double spectral_norm(const Mat& m, int max_iters = 1000,
                            double tol = 1e-12, std::uint64_t seed = 0) {
  return spectral_norm_detail(m, max_iters, tol, seed).value;
}

struct LipschitzBound {
  std::vector<double> per_layer_spectral;  // raw power-iteration estimates
  double last_layer_maxrow = 0.0;          // exact l2->linf norm of last map
  double l_inf = 0.0;                      // composed linf/l2 upper bound
  double l_2 = 0.0;                        // composed l2/l2 upper bound
  int power_iters = 0;                     // iteration cap used
  double tol = 0.0;
  bool converged = false;  // all per-layer power iterations converged
};

inline LipschitzBound lipschitz_bounds(const Model& model, int max_iters = 1000,
                                       double tol = 1e-12,
                                       std::uint64_t seed = 0) {
  model.validate();
  for (const auto& l : model.layers)
    if (l.activation != Activation::relu && l.activation != Activation::identity)
      throw std::invalid_argument("unsupported activation for Lipschitz bounds");

  LipschitzBound b;
  b.power_iters = max_iters;
  b.tol = tol;
  b.converged = true;
  const std::size_t last = model.layers.size() - 1;
  double hidden_product = 1.0;  // inflated spectral norms of all but last
  double l2 = 1.0;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto est = spectral_norm_detail(
        model.layers[k].weights, max_iters, tol,
        derive_seed(seed, "spectral:" + std::to_string(k)));
    b.per_layer_spectral.push_back(est.value);
    b.converged = b.converged && est.converged;
    const double inflated = est.value * (1.0 + tol);
    l2 *= inflated;
    if (k < last) hidden_product *= inflated;
  }
  const Mat& w_last = model.layers[last].weights;
  double maxrow = 0.0;
  for (int r = 0; r < w_last.rows(); ++r)
    maxrow = std::max(maxrow, w_last.row(r).norm());
  b.last_layer_maxrow = maxrow;
  b.l_2 = l2;
  b.l_inf = hidden_product * maxrow;
  return b;
}

// Certified purity radius mu / (2 L_inf); requires rectified outputs.
// A zero margin certifies nothing; a zero Lipschitz bound means the network
// is constant, so any radius is pure.
inline double radius_thm1(double margin, double l_inf) {
  if (margin < 0.0) throw std::invalid_argument("margin must be >= 0");
  if (l_inf < 0.0) throw std::invalid_argument("L_inf must be >= 0");
  if (margin == 0.0) return 0.0;
  if (l_inf == 0.0) return std::numeric_limits<double>::infinity();
  return margin / (2.0 * l_inf);
}

// Alternative radius mu / (sqrt(2) L_2); no rectification requirement.
inline double radius_prop41(double margin, double l_2) {
  if (margin < 0.0) throw std::invalid_argument("margin must be >= 0");
  if (l_2 < 0.0) throw std::invalid_argument("L_2 must be >= 0");
  if (margin == 0.0) return 0.0;
  if (l_2 == 0.0) return std::numeric_limits<double>::infinity();
  return margin / (std::sqrt(2.0) * l_2);
}

// Samples the l2 ball uniformly (normalized Gaussian direction, radius
// scaled by U^{1/n}) and counts decisions that differ from the center's.
inline int mc_purity_check(const Model& model, const Vec& x, double radius,
                           int n_samples, std::uint64_t seed) {
  if (radius < 0.0) throw std::invalid_argument("radius must be >= 0");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  const int center_class = decision_margin(forward(model, x)).decided_class;
  if (radius == 0.0) return 0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double n = static_cast<double>(x.size());
  int violations = 0;
  Vec dir(x.size());
  for (int s = 0; s < n_samples; ++s) {
    double norm = 0.0;
    do {
      for (int i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
      norm = dir.norm();
    } while (norm == 0.0);
    const double r = radius * std::pow(unif(rng), 1.0 / n);
    const Vec y = x + (r / norm) * dir;
    if (decision_margin(forward(model, y)).decided_class != center_class)
      ++violations;
  }
  return violations;
}

struct CertificationRow {
  int sample_id = 0;
  double margin = 0.0;
  std::optional<double> radius_thm1;  // only for rectified models
  double radius_prop41 = 0.0;
  double radius_best = 0.0;
  std::optional<int> mc_violations;
};

struct CertificationReport {
  std::vector<CertificationRow> rows;
};

// Per-sample radii from both formulas; the optional Monte-Carlo column
// checks purity at radius_best, the strongest per-sample claim.
inline CertificationReport certify_dataset(const Model& model, const Dataset& data,
                                           const LipschitzBound& bound,
                                           std::optional<int> mc_samples = {},
                                           std::uint64_t mc_seed = 0) {
  model.validate();
  data.validate();
  CertificationReport report;
  report.rows.reserve(data.size());
  for (int i = 0; i < data.size(); ++i) {
    const Vec x = data.features.row(i).transpose();
    CertificationRow row;
    row.sample_id = i;
    row.margin = decision_margin(forward(model, x)).margin;
    row.radius_prop41 = radius_prop41(row.margin, bound.l_2);
    row.radius_best = row.radius_prop41;
    if (model.output_rectified) {
      row.radius_thm1 = radius_thm1(row.margin, bound.l_inf);
      row.radius_best = std::max(row.radius_best, *row.radius_thm1);
    }
    if (mc_samples && *mc_samples > 0 && std::isfinite(row.radius_best)) {
      row.mc_violations = mc_purity_check(
          model, x, row.radius_best, *mc_samples,
          derive_seed(mc_seed, "mc:" + std::to_string(i)));
    }
    report.rows.push_back(row);
  }
  return report;
}

namespace detail {

inline std::string csv_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline void write_certification_csv(const CertificationReport& report,
                                    std::ostream& out) {
  out << "sample_id,margin,radius_thm1,radius_prop41,radius_best,mc_violations\n";
  for (const auto& r : report.rows) {
    out << r.sample_id << ',' << detail::csv_double(r.margin) << ','
        << (r.radius_thm1 ? detail::csv_double(*r.radius_thm1) : "") << ','
        << detail::csv_double(r.radius_prop41) << ','
        << detail::csv_double(r.radius_best) << ','
        << (r.mc_violations ? std::to_string(*r.mc_violations) : "") << '\n';
  }
}

inline void write_certification_csv(const CertificationReport& report,
                                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_certification_csv(report, out);
}

}  // namespace margincert
