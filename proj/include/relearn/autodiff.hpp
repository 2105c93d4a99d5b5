#pragma once

// Reverse-mode automatic differentiation over matrix-valued tape nodes.
// A Tape records one forward pass; backward() walks the tape in reverse and
// accumulates gradients into every bound ParameterStore entry. Tapes are
// never reused across forward passes.

#include <Eigen/Core>

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "relearn/param_store.hpp"

namespace relearn {

// ties keep the smallest index
inline int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

struct Var {
  int id = -1;
};

class Tape {
 public:
  Var constant(Matrix v) { return {push(std::move(v))}; }

  Var zeros(Eigen::Index rows, Eigen::Index cols) {
    return constant(Matrix::Zero(rows, cols));
  }

  // Leaf bound to a store entry; flat values are viewed column-major as
  // rows x cols. Gradients flow back into the entry's grad buffer.
  Var param(ParameterStore& store, int entry, Eigen::Index rows, Eigen::Index cols) {
    const auto& e = store.entry(entry);
    if (rows * cols != e.size())
      throw std::invalid_argument("Tape::param: shape does not match entry '" + e.name + "'");
    int id = push(Eigen::Map<const Matrix>(e.values.data(), rows, cols));
    nodes_[static_cast<std::size_t>(id)].store = &store;
    nodes_[static_cast<std::size_t>(id)].entry = entry;
    return {id};
  }

  Var param(ParameterStore& store, std::string_view name, Eigen::Index rows,
            Eigen::Index cols) {
    return param(store, store.find(name), rows, cols);
  }

  const Matrix& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  const Matrix& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }

  // Scalar loss only; detached parameters keep zero gradients.
  void backward(Var loss) {
    auto& ln = nodes_.at(static_cast<std::size_t>(loss.id));
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
      throw std::invalid_argument("Tape::backward: loss must be a 1x1 scalar");
    for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    ln.grad(0, 0) = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward) n.backward(*this, n.grad);
    }
    for (auto& n : nodes_) {
      if (n.store) {
        auto& e = n.store->entry(n.entry);
        e.grads += Eigen::Map<const Vector>(n.grad.data(), n.grad.size());
      }
    }
  }

  // ---- ops ----

  Var matmul(Var a, Var b) {
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dims differ");
    Matrix out(av.rows(), bv.cols());
    out.noalias() = av * bv;
    int id = push(std::move(out), [a, b](Tape& t, const Matrix& up) {
      t.g(a).noalias() += up * t.val(b).transpose();
      t.g(b).noalias() += t.val(a).transpose() * up;
    });
    return {id};
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    int id = push(val(a) + val(b), [a, b](Tape& t, const Matrix& up) {
      t.g(a) += up;
      t.g(b) += up;
    });
    return {id};
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    int id = push(val(a) - val(b), [a, b](Tape& t, const Matrix& up) {
      t.g(a) += up;
      t.g(b) -= up;
    });
    return {id};
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    int id = push(val(a).cwiseProduct(val(b)), [a, b](Tape& t, const Matrix& up) {
      t.g(a).array() += up.array() * t.val(b).array();
      t.g(b).array() += up.array() * t.val(a).array();
    });
    return {id};
  }

  Var scale(Var a, double c) {
    int id = push(val(a) * c, [a, c](Tape& t, const Matrix& up) { t.g(a) += c * up; });
    return {id};
  }

  // broadcasts a 1 x n row over every row of a
  Var add_rowvec(Var a, Var row) {
    const Matrix& rv = val(row);
    if (rv.rows() != 1 || rv.cols() != val(a).cols())
      throw std::invalid_argument("add_rowvec: row must be 1 x cols(a)");
    Matrix out = val(a);
    out.rowwise() += rv.row(0);
    int id = push(std::move(out), [a, row](Tape& t, const Matrix& up) {
      t.g(a) += up;
      t.g(row).row(0) += up.colwise().sum();
    });
    return {id};
  }

  Var repeat_row(Var row, Eigen::Index n) {
    const Matrix& rv = val(row);
    if (rv.rows() != 1) throw std::invalid_argument("repeat_row: input must be 1 x d");
    int id = push(rv.replicate(n, 1), [row](Tape& t, const Matrix& up) {
      t.g(row).row(0) += up.colwise().sum();
    });
    return {id};
  }

  Var tanh(Var a) {
    int id = push(val(a).array().tanh().matrix());
    nodes_.back().backward = [a, id](Tape& t, const Matrix& up) {
      const Matrix& y = t.val(Var{id});
      t.g(a).array() += up.array() * (1.0 - y.array().square());
    };
    return {id};
  }

  Var sigmoid(Var a) {
    Matrix y = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
    int id = push(std::move(y));
    nodes_.back().backward = [a, id](Tape& t, const Matrix& up) {
      const Matrix& y = t.val(Var{id});
      t.g(a).array() += up.array() * y.array() * (1.0 - y.array());
    };
    return {id};
  }

  Var relu(Var a) {
    int id = push(val(a).cwiseMax(0.0), [a](Tape& t, const Matrix& up) {
      t.g(a).array() += up.array() * (t.val(a).array() > 0.0).cast<double>();
    });
    return {id};
  }

  Var softmax_rows(Var a) {
    int id = push(softmax_value(val(a)));
    nodes_.back().backward = [a, id](Tape& t, const Matrix& up) {
      const Matrix& y = t.val(Var{id});
      Vector rowdot = (up.array() * y.array()).rowwise().sum();
      t.g(a).array() += y.array() * (up.array().colwise() - rowdot.array());
    };
    return {id};
  }

  // out.row(i) = table.row(ids[i])
  Var embedding(Var table, const IntVector& ids) {
    const Matrix& tv = val(table);
    check_ids(ids, tv.rows(), "embedding");
    Matrix out(ids.size(), tv.cols());
    for (Eigen::Index i = 0; i < ids.size(); ++i) out.row(i) = tv.row(ids[i]);
    int id = push(std::move(out), [table, ids](Tape& t, const Matrix& up) {
      Matrix& g = t.g(table);
      for (Eigen::Index i = 0; i < ids.size(); ++i) g.row(ids[i]) += up.row(i);
    });
    return {id};
  }

  // scores(i, j) = h.row(i) . table.row(ids(i, j))
  Var candidate_scores(Var h, Var table, const IntMatrix& ids) {
    const Matrix& hv = val(h);
    const Matrix& tv = val(table);
    if (hv.rows() != ids.rows())
      throw std::invalid_argument("candidate_scores: batch sizes differ");
    if (hv.cols() != tv.cols())
      throw std::invalid_argument("candidate_scores: embedding widths differ");
    for (Eigen::Index i = 0; i < ids.size(); ++i)
      if (ids(i) < 0 || ids(i) >= tv.rows())
        throw std::invalid_argument("candidate_scores: id out of range");
    Matrix out(ids.rows(), ids.cols());
    for (Eigen::Index i = 0; i < ids.rows(); ++i)
      for (Eigen::Index j = 0; j < ids.cols(); ++j)
        out(i, j) = hv.row(i).dot(tv.row(ids(i, j)));
    int id = push(std::move(out), [h, table, ids](Tape& t, const Matrix& up) {
      Matrix& gh = t.g(h);
      Matrix& gt = t.g(table);
      const Matrix& hv = t.val(h);
      const Matrix& tv = t.val(table);
      for (Eigen::Index i = 0; i < ids.rows(); ++i)
        for (Eigen::Index j = 0; j < ids.cols(); ++j) {
          gh.row(i) += up(i, j) * tv.row(ids(i, j));
          gt.row(ids(i, j)) += up(i, j) * hv.row(i);
        }
    });
    return {id};
  }

  // out(i, 0) = log softmax(logits.row(i))[ids[i]]
  Var gather_log_prob(Var logits, const IntVector& ids) {
    const Matrix& z = val(logits);
    check_ids(ids, z.cols(), "gather_log_prob");
    if (ids.size() != z.rows())
      throw std::invalid_argument("gather_log_prob: one id per row required");
    Matrix logp = log_softmax_value(z);
    Matrix out(z.rows(), 1);
    for (Eigen::Index i = 0; i < z.rows(); ++i) out(i, 0) = logp(i, ids[i]);
    Matrix probs = logp.array().exp();
    int id = push(std::move(out), [logits, ids, probs](Tape& t, const Matrix& up) {
      Matrix& g = t.g(logits);
      g.array() -= probs.array().colwise() * up.col(0).array();
      for (Eigen::Index i = 0; i < ids.size(); ++i) g(i, ids[i]) += up(i, 0);
    });
    return {id};
  }

  // out(i, 0) = entropy of softmax(logits.row(i))
  Var entropy_rows(Var logits) {
    Matrix logp = log_softmax_value(val(logits));
    Matrix probs = logp.array().exp();
    Matrix out = (-(probs.array() * logp.array()).rowwise().sum()).matrix();
    int id = push(std::move(out));
    nodes_.back().backward = [logits, logp, probs, id](Tape& t, const Matrix& up) {
      const Matrix& h = t.val(Var{id});
      // dH/dz = -p (log p + H), broadcast per row
      Matrix inner = logp.array().colwise() + h.col(0).array();
      t.g(logits).array() -=
          (probs.array() * inner.array()).colwise() * up.col(0).array();
    };
    return {id};
  }

  // mean over rows of -log softmax(logits.row(i))[labels[i]]
  Var cross_entropy_mean(Var logits, const IntVector& labels) {
    const Matrix& z = val(logits);
    if (labels.size() != z.rows())
      throw std::invalid_argument("cross_entropy_mean: one label per row required");
    check_ids(labels, z.cols(), "cross_entropy_mean");
    Matrix logp = log_softmax_value(z);
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) total -= logp(i, labels[i]);
    Matrix out(1, 1);
    out(0, 0) = total / static_cast<double>(z.rows());
    Matrix probs = logp.array().exp();
    int id = push(std::move(out), [logits, labels, probs](Tape& t, const Matrix& up) {
      double s = up(0, 0) / static_cast<double>(probs.rows());
      Matrix delta = probs;
      for (Eigen::Index i = 0; i < probs.rows(); ++i) delta(i, labels[i]) -= 1.0;
      t.g(logits) += s * delta;
    });
    return {id};
  }

  Var sum_all(Var a) {
    Matrix out(1, 1);
    out(0, 0) = val(a).sum();
    int id = push(std::move(out), [a](Tape& t, const Matrix& up) {
      t.g(a).array() += up(0, 0);
    });
    return {id};
  }

  Var mean_all(Var a) {
    double n = static_cast<double>(val(a).size());
    Matrix out(1, 1);
    out(0, 0) = val(a).sum() / n;
    int id = push(std::move(out), [a, n](Tape& t, const Matrix& up) {
      t.g(a).array() += up(0, 0) / n;
    });
    return {id};
  }

  // numerically stable row-wise helpers, usable without a tape
  static Matrix softmax_value(const Matrix& z) {
    Matrix shifted = z.colwise() - z.rowwise().maxCoeff();
    Matrix y = shifted.array().exp();
    Vector sums = y.rowwise().sum();
    y.array().colwise() /= sums.array();
    return y;
  }

  static Matrix log_softmax_value(const Matrix& z) {
    Vector mx = z.rowwise().maxCoeff();
    Matrix shifted = z.colwise() - mx;
    Vector lse = shifted.array().exp().rowwise().sum().log();
    return shifted.colwise() - lse;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, const Matrix&)> backward;
    ParameterStore* store = nullptr;
    int entry = -1;
  };

  int push(Matrix value, std::function<void(Tape&, const Matrix&)> back = nullptr) {
    Node n;
    n.value = std::move(value);
    n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Matrix& val(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  Matrix& g(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  static void check_ids(const IntVector& ids, Eigen::Index bound, const char* op) {
    for (Eigen::Index i = 0; i < ids.size(); ++i)
      if (ids[i] < 0 || ids[i] >= bound)
        throw std::invalid_argument(std::string(op) + ": index out of range");
  }

  std::vector<Node> nodes_;
};

}  // namespace relearn
