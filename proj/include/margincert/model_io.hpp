#pragma once

// Versioned JSON model format:
//   {format_version: 1, input_dim, num_classes, output_rectified,
//    layers: [{activation, weights: [[row]...], bias: [...]}]}
// Reals keep full round-trip precision, so serialize -> deserialize ->
// serialize is byte-identical.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "margincert/model.hpp"

namespace margincert {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const Model& model) {
  model.validate();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < l.weights.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < l.weights.cols(); ++c) row.push_back(l.weights(r, c));
      rows.push_back(std::move(row));
    }
    nlohmann::json bias = nlohmann::json::array();
    for (int i = 0; i < l.bias.size(); ++i) bias.push_back(l.bias[i]);
    layers.push_back({{"activation", to_string(l.activation)},
                      {"weights", std::move(rows)},
                      {"bias", std::move(bias)}});
  }
  return {{"format_version", kModelFormatVersion},
          {"input_dim", model.input_dim},
          {"num_classes", model.num_classes},
          {"output_rectified", model.output_rectified},
          {"layers", std::move(layers)}};
}

inline Model model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::runtime_error("model JSON: not an object");
  int version = j.value("format_version", -1);
  if (version != kModelFormatVersion)
    throw std::runtime_error("model JSON: unsupported format_version " +
                             std::to_string(version));
  Model m;
  m.input_dim = j.at("input_dim").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  m.output_rectified = j.at("output_rectified").get<bool>();
  for (const auto& jl : j.at("layers")) {
    DenseLayer l;
    l.activation = activation_from_string(jl.at("activation").get<std::string>());
    const auto& rows = jl.at("weights");
    if (!rows.is_array() || rows.empty())
      throw std::runtime_error("model JSON: empty weight matrix");
    const std::size_t out_dim = rows.size();
    const std::size_t in_dim = rows[0].size();
    if (in_dim == 0) throw std::runtime_error("model JSON: empty weight row");
    l.weights = Mat(out_dim, in_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
      if (rows[r].size() != in_dim)
        throw std::runtime_error("model JSON: ragged weight matrix");
      for (std::size_t c = 0; c < in_dim; ++c)
        l.weights(r, c) = rows[r][c].get<double>();
    }
    const auto& bias = jl.at("bias");
    l.bias = Vec(bias.size());
    for (std::size_t i = 0; i < bias.size(); ++i) l.bias[i] = bias[i].get<double>();
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

inline std::string serialize_model(const Model& model) {
  return model_to_json(model).dump(2) + "\n";
}

inline Model deserialize_model(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model JSON: malformed stream: ") + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model JSON: ") + e.what());
  }
}

inline void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << serialize_model(model);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace margincert
