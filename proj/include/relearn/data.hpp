#pragma once

// Dataset ingestion and construction: big-endian IDX image/label files, a
// procedurally generated separable fallback, subsampling, label-noise
// injection with group tags, and margin-based difficulty splits.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "relearn/models.hpp"
#include "relearn/param_store.hpp"
#include "relearn/rng.hpp"

namespace relearn {

struct LabeledDataset {
  Matrix inputs;    // n x d feature rows
  IntVector labels;
  IntVector group;  // size n when tagged, else empty
  int num_classes = 10;

  Eigen::Index size() const { return inputs.rows(); }
  bool has_groups() const { return group.size() == inputs.rows() && inputs.rows() > 0; }

  double group_accuracy(const MlpClassifier& model, int which) const {
    if (!has_groups()) throw std::invalid_argument("group_accuracy: dataset has no group tags");
    IntVector pred = model.predict(inputs);
    Eigen::Index hits = 0, total = 0;
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (group[i] != which) continue;
      ++total;
      if (pred[i] == labels[i]) ++hits;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }
};

inline LabeledDataset select_rows(const LabeledDataset& ds, const std::vector<int>& rows) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.inputs.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  bool groups = ds.has_groups();
  if (groups) out.group.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = ds.inputs.row(rows[i]);
    out.labels[static_cast<Eigen::Index>(i)] = ds.labels[rows[i]];
    if (groups) out.group[static_cast<Eigen::Index>(i)] = ds.group[rows[i]];
  }
  return out;
}

namespace detail {

inline std::uint32_t read_be_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error(std::string("idx: truncated file while reading ") + what);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace detail

// Big-endian IDX decoding: images carry magic 0x00000803 with count/rows/cols
// dimensions, labels carry magic 0x00000801. Pixel bytes are scaled to [0, 1].
inline LabeledDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open image file '" + images_path.string() + "'");
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open label file '" + labels_path.string() + "'");

  std::uint32_t img_magic = detail::read_be_u32(img, "image magic");
  if (img_magic != 0x00000803u)
    throw std::runtime_error("idx: wrong image magic (expected 0x00000803)");
  std::uint32_t n_img = detail::read_be_u32(img, "image count");
  std::uint32_t rows = detail::read_be_u32(img, "image rows");
  std::uint32_t cols = detail::read_be_u32(img, "image cols");

  std::uint32_t lab_magic = detail::read_be_u32(lab, "label magic");
  if (lab_magic != 0x00000801u)
    throw std::runtime_error("idx: wrong label magic (expected 0x00000801)");
  std::uint32_t n_lab = detail::read_be_u32(lab, "label count");

  if (n_img != n_lab) throw std::runtime_error("idx: image/label count mismatch");

  LabeledDataset ds;
  Eigen::Index dim = static_cast<Eigen::Index>(rows) * cols;
  ds.inputs.resize(static_cast<Eigen::Index>(n_img), dim);
  ds.labels.resize(static_cast<Eigen::Index>(n_img));
  std::vector<unsigned char> buf(static_cast<std::size_t>(dim));
  for (std::uint32_t i = 0; i < n_img; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!img) throw std::runtime_error("idx: truncated file while reading pixels");
    for (Eigen::Index j = 0; j < dim; ++j)
      ds.inputs(static_cast<Eigen::Index>(i), j) =
          static_cast<double>(buf[static_cast<std::size_t>(j)]) / 255.0;
    char c;
    lab.read(&c, 1);
    if (!lab) throw std::runtime_error("idx: truncated file while reading labels");
    ds.labels[static_cast<Eigen::Index>(i)] = static_cast<unsigned char>(c);
  }
  int max_label = 0;
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i)
    max_label = std::max(max_label, ds.labels[i]);
  ds.num_classes = std::max(10, max_label + 1);
  return ds;
}

// round(fraction * n) rows drawn without replacement, original order kept
inline LabeledDataset subsample(const LabeledDataset& ds, double fraction, RngStream& rng) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("subsample: fraction must lie in (0, 1]");
  int n = static_cast<int>(ds.size());
  int k = static_cast<int>(std::llround(fraction * n));
  return select_rows(ds, rng.sample_indices(n, k));
}

// round(fraction * n) rows chosen uniformly get labels redrawn uniformly over
// all classes (possibly unchanged) and group tag 1; the rest get tag 0.
inline LabeledDataset inject_label_noise(const LabeledDataset& ds, double fraction,
                                         RngStream& rng) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("inject_label_noise: fraction must lie in [0, 1]");
  LabeledDataset out = ds;
  out.group = IntVector::Zero(ds.size());
  int n = static_cast<int>(ds.size());
  int k = static_cast<int>(std::llround(fraction * n));
  for (int row : rng.sample_indices(n, k)) {
    out.labels[row] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(ds.num_classes)));
    out.group[row] = 1;
  }
  return out;
}

struct SynthConfig {
  int input_dim = 784;
  int classes = 10;
  double grid_spacing = 3.0;      // distance between neighboring class centers
  double within_scale = 0.06;     // per-dimension std of the within-class cloud
  double radius_fraction = 0.30;  // clip radius as a fraction of the min center gap
};

// Separable class clouds with a deliberately tight layout: class centers sit
// on a jittered grid spanned by two random directions, so neighboring
// classes nearly touch while distant ones stay far apart. Within-class
// variation is isotropic and norm-clipped below half the smallest center
// gap, keeping the rows of different classes linearly separable with a
// positive margin no matter how many are drawn.
inline std::pair<LabeledDataset, LabeledDataset> synth_digits_split(
    int train_per_class, int test_per_class, RngStream& rng, const SynthConfig& cfg = {}) {
  if (train_per_class < 0 || test_per_class < 0)
    throw std::invalid_argument("synth_digits: per-class counts must be non-negative");
  auto unit_vector = [&rng, &cfg]() {
    Vector v(cfg.input_dim);
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
    return Vector(v / v.norm());
  };
  Vector axis1 = unit_vector();
  Vector axis2 = unit_vector();
  int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.classes))));
  std::vector<Vector> centers;
  for (int c = 0; c < cfg.classes; ++c) {
    Vector center = Vector::Constant(cfg.input_dim, 0.5);
    center += cfg.grid_spacing * static_cast<double>(c % grid_cols) * axis1;
    center += cfg.grid_spacing * static_cast<double>(c / grid_cols) * axis2;
    for (Eigen::Index j = 0; j < center.size(); ++j)
      center[j] += 0.1 * cfg.grid_spacing / std::sqrt(static_cast<double>(cfg.input_dim)) *
                   rng.normal();
    centers.push_back(std::move(center));
  }
  double min_gap = std::numeric_limits<double>::max();
  for (int a = 0; a < cfg.classes; ++a)
    for (int b = a + 1; b < cfg.classes; ++b)
      min_gap = std::min(min_gap, (centers[static_cast<std::size_t>(a)] -
                                   centers[static_cast<std::size_t>(b)])
                                      .norm());
  double radius = cfg.radius_fraction * min_gap;

  auto draw = [&](int per_class) {
    LabeledDataset ds;
    ds.num_classes = cfg.classes;
    Eigen::Index n = static_cast<Eigen::Index>(per_class) * cfg.classes;
    ds.inputs.resize(n, cfg.input_dim);
    ds.labels.resize(n);
    Eigen::Index row = 0;
    for (int c = 0; c < cfg.classes; ++c) {
      for (int i = 0; i < per_class; ++i, ++row) {
        Vector offset(cfg.input_dim);
        for (Eigen::Index k = 0; k < offset.size(); ++k)
          offset[k] = cfg.within_scale * rng.normal();
        double norm = offset.norm();
        if (norm > radius) offset *= radius / norm;
        ds.inputs.row(row) = (centers[static_cast<std::size_t>(c)] + offset).transpose();
        ds.labels[row] = c;
      }
    }
    return ds;
  };
  LabeledDataset train = draw(train_per_class);
  LabeledDataset test = draw(test_per_class);
  return {std::move(train), std::move(test)};
}

inline LabeledDataset synth_digits(int n_per_class, RngStream& rng, const SynthConfig& cfg = {}) {
  return synth_digits_split(n_per_class, 0, rng, cfg).first;
}

// Tags the round(fraction * batch) rows with the smallest output margin as
// difficult (group 1); margin ties are broken toward the lower row index.
inline IntVector split_by_margin(const MlpClassifier& model, const Matrix& batch,
                                 double fraction) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("split_by_margin: fraction must lie in [0, 1]");
  Vector margins = model.margins(batch);
  int n = static_cast<int>(batch.rows());
  int k = static_cast<int>(std::llround(fraction * n));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return margins[a] < margins[b]; });
  IntVector tags = IntVector::Zero(n);
  for (int i = 0; i < k; ++i) tags[idx[static_cast<std::size_t>(i)]] = 1;
  return tags;
}

}  // namespace relearn
