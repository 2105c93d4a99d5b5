#pragma once

// The image-style classifier: a tanh MLP over flat feature rows, backed by a
// ParameterStore with one layer index per affine layer.

#include <string>
#include <vector>

#include "relearn/autodiff.hpp"
#include "relearn/optim.hpp"
#include "relearn/param_store.hpp"

namespace relearn {

// largest minus second-largest logit; exact ties at the top give 0
inline double output_margin(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  if (logits.size() < 2)
    throw std::invalid_argument("output_margin: need at least two logits");
  double best = logits[0], second = logits[1];
  if (second > best) std::swap(best, second);
  for (int j = 2; j < logits.size(); ++j) {
    double v = logits[j];
    if (v > best) {
      second = best;
      best = v;
    } else if (v > second) {
      second = v;
    }
  }
  return best - second;
}

class MlpClassifier {
 public:
  MlpClassifier(std::vector<int> layer_sizes, RngStream& init_rng)
      : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2)
      throw std::invalid_argument("MlpClassifier: need at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      int in = sizes_[l], out = sizes_[l + 1];
      int w = store_.add("fc" + std::to_string(l) + ".weight", static_cast<int>(l),
                         static_cast<Eigen::Index>(in) * out, InitSpec::fan_in(in), init_rng);
      int b = store_.add("fc" + std::to_string(l) + ".bias", static_cast<int>(l), out,
                         InitSpec::constant(0.0), init_rng);
      wb_.push_back({w, b});
    }
    store_.finalize();
    snaps_.put(take_snapshot(store_, "init"));
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int affine_layer_count() const { return static_cast<int>(wb_.size()); }
  int num_classes() const { return sizes_.back(); }

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  SnapshotSet& snapshots() { return snaps_; }
  const SnapshotSet& snapshots() const { return snaps_; }

  // logits for a batch; hidden_out, when given, receives each tanh activation
  Var forward(Tape& t, const Matrix& inputs, std::vector<Var>* hidden_out = nullptr) const {
    if (inputs.cols() != sizes_.front())
      throw std::invalid_argument("MlpClassifier: input width mismatch");
    Var h = t.constant(inputs);
    auto& self = const_cast<MlpClassifier&>(*this);
    for (std::size_t l = 0; l < wb_.size(); ++l) {
      Var w = t.param(self.store_, wb_[l].first, sizes_[l], sizes_[l + 1]);
      Var b = t.param(self.store_, wb_[l].second, 1, sizes_[l + 1]);
      Var z = t.add_rowvec(t.matmul(h, w), b);
      if (l + 1 < wb_.size()) {
        h = t.tanh(z);
        if (hidden_out) hidden_out->push_back(h);
      } else {
        h = z;
      }
    }
    return h;
  }

  Matrix logits(const Matrix& inputs) const {
    Tape t;
    return t.value(forward(t, inputs));
  }

  // probe-point activations: each hidden tanh output, then the softmax output
  std::vector<Matrix> probe_activations(const Matrix& inputs) const {
    Tape t;
    std::vector<Var> hidden;
    Var out = forward(t, inputs, &hidden);
    std::vector<Matrix> acts;
    for (Var h : hidden) acts.push_back(t.value(h));
    acts.push_back(Tape::softmax_value(t.value(out)));
    return acts;
  }

  IntVector predict(const Matrix& inputs) const {
    Matrix z = logits(inputs);
    IntVector out(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) out[i] = argmax_row(z.row(i));
    return out;
  }

  double accuracy(const Matrix& inputs, const IntVector& labels) const {
    if (inputs.rows() != labels.size())
      throw std::invalid_argument("accuracy: row count mismatch");
    if (inputs.rows() == 0) return 0.0;
    IntVector pred = predict(inputs);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i)
      if (pred[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
  }

  Vector margins(const Matrix& inputs) const {
    Matrix z = logits(inputs);
    Vector m(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) m[i] = output_margin(z.row(i));
    return m;
  }

  void reinitialize(RngStream& rng) {
    store_.reinitialize(rng);
    snaps_.put(take_snapshot(store_, "init"));
  }

 private:
  std::vector<int> sizes_;
  ParameterStore store_;
  SnapshotSet snaps_;
  std::vector<std::pair<int, int>> wb_;
};

}  // namespace relearn
