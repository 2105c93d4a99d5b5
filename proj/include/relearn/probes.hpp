#pragma once

// Measurement machinery: copy-and-perturb group probes, topographic
// similarity of languages, leave-one-out KNN prediction depth, and the
// input-dimension to message-dimension mapping matrix.

#include <array>
#include <string>
#include <vector>

#include "relearn/agents.hpp"
#include "relearn/data.hpp"
#include "relearn/forgetting.hpp"
#include "relearn/language.hpp"
#include "relearn/models.hpp"

namespace relearn {

struct GroupAccuracyRecord {
  long step = 0;
  std::string op_name;
  double pre_acc_group0 = 0.0;
  double pre_acc_group1 = 0.0;
  double post_acc_group0 = 0.0;
  double post_acc_group1 = 0.0;
};

namespace detail {

// copies the model, forgets on the copy, and evaluates both; the probed
// model itself is never touched
template <class Model, class GroupEval>
GroupAccuracyRecord probe_with_copy_impl(const Model& model, ForgettingOp& op, RngStream& rng,
                                         GroupEval&& eval) {
  GroupAccuracyRecord rec;
  rec.op_name = op.name;
  std::tie(rec.pre_acc_group0, rec.pre_acc_group1) = eval(model);
  Model copy = model;
  apply_forgetting(copy.store(), op, copy.snapshots(), rng);
  std::tie(rec.post_acc_group0, rec.post_acc_group1) = eval(copy);
  return rec;
}

}  // namespace detail

inline GroupAccuracyRecord probe_with_copy(const MlpClassifier& model,
                                           const LabeledDataset& dataset, ForgettingOp& op,
                                           RngStream& rng) {
  if (!dataset.has_groups())
    throw std::invalid_argument("probe_with_copy: dataset has no group tags");
  bool seen0 = false, seen1 = false;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    seen0 = seen0 || dataset.group[i] == 0;
    seen1 = seen1 || dataset.group[i] == 1;
  }
  if (!seen0 || !seen1)
    throw std::invalid_argument("probe_with_copy: both groups must be present");
  return detail::probe_with_copy_impl(model, op, rng, [&](const MlpClassifier& m) {
    return std::pair<double, double>(dataset.group_accuracy(m, 0),
                                     dataset.group_accuracy(m, 1));
  });
}

inline GroupAccuracyRecord probe_with_copy(const SenderAgent& sender,
                                           const LanguageTable& mixed, ForgettingOp& op,
                                           RngStream& rng) {
  if (mixed.group.empty())
    throw std::invalid_argument("probe_with_copy: language table has no group tags");
  return detail::probe_with_copy_impl(sender, op, rng, [&](const SenderAgent& s) {
    return std::pair<double, double>(s.language_accuracy(mixed, 0),
                                     s.language_accuracy(mixed, 1));
  });
}

struct TopoResult {
  double rho = 0.0;
  bool degenerate = false;  // a constant distance vector makes rho undefined
};

namespace detail {

inline int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1 : 0;
  return d;
}

// average ranks, ties shared
inline std::vector<double> ranks(const std::vector<double>& xs) {
  std::vector<int> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return xs[static_cast<std::size_t>(a)] <
                                              xs[static_cast<std::size_t>(b)]; });
  std::vector<double> r(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           xs[static_cast<std::size_t>(order[j + 1])] ==
               xs[static_cast<std::size_t>(order[i])])
      ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[static_cast<std::size_t>(order[k])] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double n = static_cast<double>(a.size());
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

// Rank correlation between Hamming distances of all unordered object pairs
// and the Hamming distances of the corresponding message pairs.
inline TopoResult topographic_similarity(const std::vector<std::array<int, 2>>& objects,
                                         const std::vector<std::vector<int>>& messages,
                                         bool use_pearson = false) {
  if (objects.size() != messages.size())
    throw std::invalid_argument("topographic_similarity: length mismatch");
  if (objects.size() < 3)
    throw std::invalid_argument("topographic_similarity: need at least 3 items");
  std::vector<double> d_obj, d_msg;
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      int d = 0;
      d += objects[i][0] != objects[j][0] ? 1 : 0;
      d += objects[i][1] != objects[j][1] ? 1 : 0;
      d_obj.push_back(d);
      d_msg.push_back(detail::hamming(messages[i], messages[j]));
    }
  auto constant = [](const std::vector<double>& xs) {
    for (double x : xs)
      if (x != xs.front()) return false;
    return true;
  };
  if (constant(d_obj) || constant(d_msg)) return {0.0, true};
  if (use_pearson) return {detail::pearson(d_obj, d_msg), false};
  return {detail::pearson(detail::ranks(d_obj), detail::ranks(d_msg)), false};
}

inline TopoResult language_toposim(const LanguageTable& table, bool use_pearson = false) {
  std::vector<std::array<int, 2>> objects;
  for (int id = 0; id < table.space.size(); ++id) objects.push_back(table.space.attributes(id));
  return topographic_similarity(objects, table.messages, use_pearson);
}

inline TopoResult sender_toposim(const SenderAgent& sender, const ObjectSpace& space,
                                 bool use_pearson = false) {
  return language_toposim(sender.decode_language(space), use_pearson);
}

struct PredictionDepthResult {
  std::vector<double> probe_accuracy;  // per probe point, against true labels
  std::vector<int> depth;              // per example; probe count when never consistent
  double mean_depth = 0.0;
};

// Leave-one-out K-NN probes over per-layer activations (each hidden tanh
// output plus the softmax output). An example's depth is the earliest probe
// from which every deeper probe already reproduces the model's final
// prediction. Neighbor ties break toward the lower row index, vote ties
// toward the smaller label.
inline PredictionDepthResult knn_prediction_depth(const MlpClassifier& model,
                                                  const LabeledDataset& dataset, int k) {
  Eigen::Index n = dataset.size();
  if (k < 1 || k >= n)
    throw std::invalid_argument("knn_prediction_depth: K must lie in [1, n)");
  std::vector<Matrix> acts = model.probe_activations(dataset.inputs);
  IntVector final_pred = model.predict(dataset.inputs);
  int probes = static_cast<int>(acts.size());
  std::vector<IntVector> probe_pred;
  PredictionDepthResult res;
  for (const Matrix& a : acts) {
    Vector sq = a.rowwise().squaredNorm();
    Matrix gram = a * a.transpose();
    IntVector pred(n);
    std::vector<int> idx(static_cast<std::size_t>(n) - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      idx.clear();
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) idx.push_back(static_cast<int>(j));
      auto dist = [&](int j) { return sq[i] + sq[j] - 2.0 * gram(i, j); };
      std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a_, int b_) {
        double da = dist(a_), db = dist(b_);
        return da < db || (da == db && a_ < b_);
      });
      std::vector<int> votes(static_cast<std::size_t>(dataset.num_classes), 0);
      for (int t = 0; t < k; ++t) ++votes[static_cast<std::size_t>(
          dataset.labels[idx[static_cast<std::size_t>(t)]])];
      int best = 0;
      for (int c = 1; c < dataset.num_classes; ++c)
        if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
      pred[i] = best;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += pred[i] == dataset.labels[i] ? 1.0 : 0.0;
    res.probe_accuracy.push_back(acc / static_cast<double>(n));
    probe_pred.push_back(std::move(pred));
  }
  res.depth.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int d = probes;
    for (int p = probes - 1; p >= 0; --p) {
      if (probe_pred[static_cast<std::size_t>(p)][i] != final_pred[i]) break;
      d = p;
    }
    res.depth[static_cast<std::size_t>(i)] = d;
    total += d;
  }
  res.mean_depth = total / static_cast<double>(n);
  return res;
}

// Rows: each active input dimension (attribute-1 values then attribute-2
// values); columns: both positions' token probabilities, averaged over all
// values of the other attribute. Every row sums to the number of positions.
inline Matrix mapping_matrix(const SenderAgent& sender, const ObjectSpace& space) {
  const AgentConfig& cfg = sender.config();
  if (space.r1 != cfg.r1 || space.r2 != cfg.r2)
    throw std::invalid_argument("mapping_matrix: object space does not match sender");
  Matrix out = Matrix::Zero(space.r1 + space.r2, cfg.msg_len * cfg.vocab);
  for (int a1 = 0; a1 < space.r1; ++a1) {
    for (int a2 = 0; a2 < space.r2; ++a2) {
      Matrix d = sender.produce_distributions(space.object_id(a1, a2));
      Eigen::RowVectorXd flat(cfg.msg_len * cfg.vocab);
      for (int p = 0; p < cfg.msg_len; ++p)
        flat.segment(p * cfg.vocab, cfg.vocab) = d.row(p);
      out.row(a1) += flat / static_cast<double>(space.r2);
      out.row(space.r1 + a2) += flat / static_cast<double>(space.r1);
    }
  }
  return out;
}

inline void write_mapping_matrix_csv(const Matrix& m, const ObjectSpace& space, int vocab,
                                     const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_mapping_matrix_csv: cannot open '" + path.string() + "'");
  os << "input_dim";
  int positions = static_cast<int>(m.cols()) / vocab;
  for (int p = 0; p < positions; ++p)
    for (int v = 0; v < vocab; ++v) os << ",m" << (p + 1) << "_" << v;
  os << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r < space.r1)
      os << "a1_" << r;
    else
      os << "a2_" << (r - space.r1);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace relearn
