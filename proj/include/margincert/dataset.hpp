#pragma once

// Labeled sample containers: seeded Gaussian blob generation, IDX image
// ingestion, and a versioned JSON container used to persist derived sets
// (e.g. adversarial samples) with provenance.

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "margincert/common.hpp"

namespace margincert {

enum class Split { train, heldout };

inline const char* to_string(Split s) {
  return s == Split::train ? "train" : "heldout";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "heldout") return Split::heldout;
  throw std::invalid_argument("unknown split tag: " + s);
}

struct Dataset {
  Mat features;               // n_samples x input_dim, row per sample
  std::vector<int> labels;    // in [0, num_classes)
  std::vector<Split> splits;  // partition tags
  int num_classes = 0;
  nlohmann::json provenance;  // generator + seeds, or source file hash

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }

  void validate() const {
    const auto n = static_cast<std::size_t>(features.rows());
    if (labels.size() != n || splits.size() != n)
      throw std::invalid_argument("dataset: labels/splits size mismatch");
    if (!features.allFinite())
      throw std::invalid_argument("dataset: non-finite features");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw std::invalid_argument("dataset: label out of range");
  }

  Dataset subset(Split tag) const {
    Dataset out;
    out.num_classes = num_classes;
    out.provenance = provenance;
    std::vector<int> rows;
    for (std::size_t i = 0; i < splits.size(); ++i)
      if (splits[i] == tag) rows.push_back(static_cast<int>(i));
    out.features = Mat(rows.size(), features.cols());
    out.labels.reserve(rows.size());
    out.splits.assign(rows.size(), tag);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.features.row(i) = features.row(rows[i]);
      out.labels.push_back(labels[rows[i]]);
    }
    return out;
  }
};

// Gaussian clusters around seeded standard-normal centers; fully
// deterministic in (centers_seed, sample_seed). All rows are tagged train;
// callers re-tag when assembling splits.
inline Dataset generate_blobs(int n_per_class, int num_classes, int dim,
                              std::uint64_t centers_seed, double noise_sigma,
                              std::uint64_t sample_seed) {
  if (n_per_class <= 0 || num_classes <= 0 || dim <= 0)
    throw std::invalid_argument("blob parameters must be positive");
  if (noise_sigma < 0.0)
    throw std::invalid_argument("noise_sigma must be >= 0");

  std::mt19937_64 crng(centers_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat centers(num_classes, dim);
  for (int c = 0; c < num_classes; ++c)
    for (int d = 0; d < dim; ++d) centers(c, d) = gauss(crng);

  std::mt19937_64 srng(sample_seed);
  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = Mat(n_per_class * num_classes, dim);
  ds.labels.reserve(ds.features.rows());
  ds.splits.assign(ds.features.rows(), Split::train);
  int row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (int d = 0; d < dim; ++d)
        ds.features(row, d) = centers(c, d) + noise_sigma * gauss(srng);
      ds.labels.push_back(c);
    }
  }
  ds.provenance = {{"generator", "blobs"},
                   {"n_per_class", n_per_class},
                   {"num_classes", num_classes},
                   {"dim", dim},
                   {"centers_seed", centers_seed},
                   {"noise_sigma", noise_sigma},
                   {"sample_seed", sample_seed}};
  return ds;
}

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("idx: truncated file " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string s = buf.str();
  return fnv1a64(s.data(), s.size());
}

}  // namespace detail

// IDX format (big-endian): images magic 0x00000803 with dims count x rows x
// cols and unsigned bytes scaled to [0,1]; labels magic 0x00000801.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path);
  if (detail::read_be_u32(img, images_path) != 0x00000803u)
    throw std::runtime_error("idx: bad magic in images file " + images_path);
  const std::uint32_t count = detail::read_be_u32(img, images_path);
  const std::uint32_t rows = detail::read_be_u32(img, images_path);
  const std::uint32_t cols = detail::read_be_u32(img, images_path);
  const std::size_t pixels = std::size_t(rows) * cols;
  std::vector<unsigned char> raw(std::size_t(count) * pixels);
  img.read(reinterpret_cast<char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(img.gcount()) != raw.size())
    throw std::runtime_error("idx: truncated file " + images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
  if (detail::read_be_u32(lab, labels_path) != 0x00000801u)
    throw std::runtime_error("idx: bad magic in labels file " + labels_path);
  const std::uint32_t label_count = detail::read_be_u32(lab, labels_path);
  if (label_count != count)
    throw std::runtime_error("idx: count mismatch: " + std::to_string(count) +
                             " images vs " + std::to_string(label_count) +
                             " labels");
  std::vector<unsigned char> ybytes(label_count);
  lab.read(reinterpret_cast<char*>(ybytes.data()),
           static_cast<std::streamsize>(ybytes.size()));
  if (static_cast<std::size_t>(lab.gcount()) != ybytes.size())
    throw std::runtime_error("idx: truncated file " + labels_path);

  Dataset ds;
  ds.features = Mat(count, pixels);
  ds.labels.reserve(count);
  ds.splits.assign(count, Split::train);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p)
      ds.features(i, p) = raw[i * pixels + p] / 255.0;
    ds.labels.push_back(ybytes[i]);
  }
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = max_label + 1;
  ds.provenance = {{"generator", "idx"},
                   {"images", images_path},
                   {"labels", labels_path},
                   {"images_hash", to_hex(detail::file_hash(images_path))},
                   {"labels_hash", to_hex(detail::file_hash(labels_path))}};
  return ds;
}

inline constexpr int kDatasetFormatVersion = 1;

inline nlohmann::json dataset_to_json(const Dataset& ds) {
  ds.validate();
  nlohmann::json feats = nlohmann::json::array();
  for (int i = 0; i < ds.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int d = 0; d < ds.dim(); ++d) row.push_back(ds.features(i, d));
    feats.push_back(std::move(row));
  }
  nlohmann::json splits = nlohmann::json::array();
  for (Split s : ds.splits) splits.push_back(to_string(s));
  return {{"format_version", kDatasetFormatVersion},
          {"num_classes", ds.num_classes},
          {"features", std::move(feats)},
          {"labels", ds.labels},
          {"splits", std::move(splits)},
          {"provenance", ds.provenance}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("format_version", -1) != kDatasetFormatVersion)
    throw std::runtime_error("dataset JSON: unsupported format_version");
  Dataset ds;
  ds.num_classes = j.at("num_classes").get<int>();
  const auto& feats = j.at("features");
  const std::size_t n = feats.size();
  const std::size_t d = n == 0 ? 0 : feats[0].size();
  ds.features = Mat(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (feats[i].size() != d)
      throw std::runtime_error("dataset JSON: ragged feature matrix");
    for (std::size_t k = 0; k < d; ++k) ds.features(i, k) = feats[i][k].get<double>();
  }
  ds.labels = j.at("labels").get<std::vector<int>>();
  for (const auto& s : j.at("splits"))
    ds.splits.push_back(split_from_string(s.get<std::string>()));
  ds.provenance = j.value("provenance", nlohmann::json::object());
  ds.validate();
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << dataset_to_json(ds).dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("dataset JSON: malformed: ") + e.what());
  }
  return dataset_from_json(j);
}

}  // namespace margincert
