#pragma once

// Minimal dense feed-forward classifier: deterministic forward pass,
// reverse-mode gradients against cached activations, plain SGD.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "margincert/common.hpp"

namespace margincert {

enum class Activation { relu, identity };

inline const char* to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation: " + s);
}

// One dense layer, y = act(W x + b).
struct DenseLayer {
  Mat weights;  // out_dim x in_dim
  Vec bias;     // out_dim
  Activation activation = Activation::identity;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
  bool finite() const { return weights.allFinite() && bias.allFinite(); }
};

// Ordered stack of dense layers. With output_rectified set, a final
// elementwise max(0, .) keeps every logit nonnegative; it is a model flag,
// not an extra layer, so both rectified and unrectified configurations of
// the same stack are expressible.
struct Model {
  std::vector<DenseLayer> layers;
  int input_dim = 0;
  int num_classes = 0;
  bool output_rectified = false;

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("model has no layers");
    if (input_dim <= 0 || num_classes <= 0)
      throw std::invalid_argument("model dims must be positive");
    int prev = input_dim;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.in_dim() != prev)
        throw std::invalid_argument("layer " + std::to_string(k) +
                                    " input dim mismatch");
      if (l.bias.size() != l.out_dim())
        throw std::invalid_argument("layer " + std::to_string(k) +
                                    " bias dim mismatch");
      if (!l.finite())
        throw std::runtime_error("layer " + std::to_string(k) +
                                 " has non-finite parameters");
      prev = l.out_dim();
    }
    if (prev != num_classes)
      throw std::invalid_argument("last layer dim != num_classes");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }
};

// Cached activations of one forward pass; backward() consumes them.
struct ForwardTrace {
  Vec input;
  std::vector<Vec> pre;   // W a + b, per layer
  std::vector<Vec> post;  // activation(pre), per layer
  Vec logits;             // final output, after optional rectification
  bool valid = false;
};

namespace detail {

inline void check_input(const Model& m, const Vec& x) {
  if (x.size() != m.input_dim)
    throw std::invalid_argument("input dim " + std::to_string(x.size()) +
                                " != model input dim " +
                                std::to_string(m.input_dim));
  if (!x.allFinite()) throw std::invalid_argument("non-finite input");
  for (std::size_t k = 0; k < m.layers.size(); ++k)
    if (!m.layers[k].finite())
      throw std::runtime_error("corrupted model: non-finite parameters in layer " +
                               std::to_string(k));
}

inline Vec apply_activation(Activation a, const Vec& z) {
  if (a == Activation::relu) return z.cwiseMax(0.0);
  return z;
}

}  // namespace detail

inline ForwardTrace forward_trace(const Model& model, const Vec& x) {
  detail::check_input(model, x);
  ForwardTrace t;
  t.input = x;
  t.pre.reserve(model.layers.size());
  t.post.reserve(model.layers.size());
  Vec a = x;
  for (const auto& layer : model.layers) {
    Vec z = layer.weights * a + layer.bias;
    a = detail::apply_activation(layer.activation, z);
    t.pre.push_back(std::move(z));
    t.post.push_back(a);
  }
  t.logits = model.output_rectified ? Vec(a.cwiseMax(0.0)) : a;
  t.valid = true;
  return t;
}

inline Vec forward(const Model& model, const Vec& x) {
  return forward_trace(model, x).logits;
}

// Per-parameter gradient buffers mirroring the model, plus the input
// gradient (FGSM needs d loss / d x).
struct GradientTape {
  std::vector<Mat> d_weights;
  std::vector<Vec> d_bias;
  Vec d_input;

  static GradientTape zeros_like(const Model& m) {
    GradientTape t;
    t.d_weights.reserve(m.layers.size());
    t.d_bias.reserve(m.layers.size());
    for (const auto& l : m.layers) {
      t.d_weights.emplace_back(Mat::Zero(l.out_dim(), l.in_dim()));
      t.d_bias.emplace_back(Vec::Zero(l.out_dim()));
    }
    t.d_input = Vec::Zero(m.input_dim);
    return t;
  }

  void accumulate(const GradientTape& other) {
    if (other.d_weights.size() != d_weights.size())
      throw std::invalid_argument("tape shape mismatch");
    for (std::size_t k = 0; k < d_weights.size(); ++k) {
      d_weights[k] += other.d_weights[k];
      d_bias[k] += other.d_bias[k];
    }
    d_input += other.d_input;
  }

  void scale(double s) {
    for (auto& w : d_weights) w *= s;
    for (auto& b : d_bias) b *= s;
    d_input *= s;
  }

  bool finite() const {
    for (const auto& w : d_weights)
      if (!w.allFinite()) return false;
    for (const auto& b : d_bias)
      if (!b.allFinite()) return false;
    return d_input.allFinite();
  }
};

// Reverse-mode pass from d loss / d logits back to every parameter and the
// input. ReLU subgradient at 0 is 0, for the hidden activations and for the
// output rectification alike.
inline GradientTape backward(const Model& model, const ForwardTrace& trace,
                             const Vec& loss_grad_at_logits) {
  if (!trace.valid || trace.pre.size() != model.layers.size())
    throw std::logic_error("backward requires a cached forward pass for this model");
  if (loss_grad_at_logits.size() != model.num_classes)
    throw std::invalid_argument("loss gradient dim != num_classes");

  GradientTape tape;
  tape.d_weights.resize(model.layers.size());
  tape.d_bias.resize(model.layers.size());

  Vec g = loss_grad_at_logits;
  if (model.output_rectified) {
    const Vec& a_last = trace.post.back();
    for (int i = 0; i < g.size(); ++i)
      if (a_last[i] <= 0.0) g[i] = 0.0;
  }
  for (int k = static_cast<int>(model.layers.size()) - 1; k >= 0; --k) {
    const auto& layer = model.layers[k];
    Vec gz = g;
    if (layer.activation == Activation::relu) {
      const Vec& z = trace.pre[k];
      for (int i = 0; i < gz.size(); ++i)
        if (z[i] <= 0.0) gz[i] = 0.0;
    }
    const Vec& a_prev = (k == 0) ? trace.input : trace.post[k - 1];
    tape.d_weights[k] = gz * a_prev.transpose();
    tape.d_bias[k] = gz;
    g = layer.weights.transpose() * gz;
  }
  tape.d_input = g;
  return tape;
}

// theta <- theta - lr * grad. Rejects non-finite tapes so a corrupted step
// can never land in the parameters.
inline void sgd_step(Model& model, const GradientTape& tape, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (tape.d_weights.size() != model.layers.size())
    throw std::invalid_argument("tape does not match model shape");
  if (!tape.finite())
    throw std::runtime_error("sgd_step rejected: non-finite gradient");
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    model.layers[k].weights -= lr * tape.d_weights[k];
    model.layers[k].bias -= lr * tape.d_bias[k];
  }
}

// Content hash of the parameters (row-major traversal, raw double bytes).
inline std::uint64_t parameter_hash(const Model& model) {
  std::uint64_t h = fnv1a64(&model.input_dim, sizeof model.input_dim);
  h = fnv1a64(&model.num_classes, sizeof model.num_classes, h);
  unsigned char rect = model.output_rectified ? 1 : 0;
  h = fnv1a64(&rect, 1, h);
  for (const auto& l : model.layers) {
    unsigned char act = l.activation == Activation::relu ? 1 : 0;
    h = fnv1a64(&act, 1, h);
    for (int r = 0; r < l.weights.rows(); ++r)
      for (int c = 0; c < l.weights.cols(); ++c) {
        double v = l.weights(r, c);
        h = fnv1a64(&v, sizeof v, h);
      }
    for (int i = 0; i < l.bias.size(); ++i) {
      double v = l.bias[i];
      h = fnv1a64(&v, sizeof v, h);
    }
  }
  return h;
}

// Fully connected stack with ReLU hidden layers and an identity output
// layer. Weights are Xavier-uniform, biases zero.
inline Model make_mlp(int input_dim, const std::vector<int>& hidden_dims,
                      int num_classes, bool output_rectified,
                      std::uint64_t seed) {
  if (input_dim <= 0 || num_classes <= 0)
    throw std::invalid_argument("dims must be positive");
  std::mt19937_64 rng(seed);
  Model m;
  m.input_dim = input_dim;
  m.num_classes = num_classes;
  m.output_rectified = output_rectified;
  int prev = input_dim;
  std::vector<int> dims = hidden_dims;
  dims.push_back(num_classes);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    int out = dims[k];
    if (out <= 0) throw std::invalid_argument("layer dims must be positive");
    double limit = std::sqrt(6.0 / (prev + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer l;
    l.weights = Mat::NullaryExpr(out, prev, [&]() { return u(rng); });
    l.bias = Vec::Zero(out);
    l.activation = (k + 1 == dims.size()) ? Activation::identity : Activation::relu;
    m.layers.push_back(std::move(l));
    prev = out;
  }
  m.validate();
  return m;
}

}  // namespace margincert
