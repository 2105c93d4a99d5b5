#pragma once

// The two referential-game agents. The sender maps an attribute-pair object
// to a discrete message with a gated recurrent cell and per-position output
// heads; the receiver reads the message with its own recurrent cell and
// scores candidate objects against its final hidden state.

#include <array>
#include <string>
#include <vector>

#include "relearn/autodiff.hpp"
#include "relearn/language.hpp"
#include "relearn/param_store.hpp"

namespace relearn {

struct AgentConfig {
  int r1 = 4;
  int r2 = 8;
  int vocab = 8;
  int msg_len = 2;
  int hidden = 100;
  int embed = 32;

  int input_dim() const { return r1 + r2; }
  int object_count() const { return r1 * r2; }
  ObjectSpace space() const { return {r1, r2}; }

  void validate() const {
    if (r1 < 2 || r2 < 2 || vocab < 2 || msg_len < 1 || hidden < 1 || embed < 1)
      throw std::invalid_argument("AgentConfig: all dimensions must be positive");
  }
};

// Standard LSTM cell: input, forget, output gates plus candidate state.
// Gate order is fixed as (i, f, o, g); the forget-gate bias starts at 1.
struct LstmCell {
  int in_dim = 0;
  int hidden = 0;
  std::array<int, 4> wx{};
  std::array<int, 4> wh{};
  std::array<int, 4> b{};

  void register_params(ParameterStore& store, const std::string& prefix, int layer_index,
                       int in, int hid, RngStream& rng) {
    static constexpr std::array<const char*, 4> gate = {"i", "f", "o", "g"};
    in_dim = in;
    hidden = hid;
    for (int k = 0; k < 4; ++k) {
      wx[static_cast<std::size_t>(k)] =
          store.add(prefix + ".wx_" + gate[static_cast<std::size_t>(k)], layer_index,
                    static_cast<Eigen::Index>(in) * hid, InitSpec::fan_in(in), rng);
      wh[static_cast<std::size_t>(k)] =
          store.add(prefix + ".wh_" + gate[static_cast<std::size_t>(k)], layer_index,
                    static_cast<Eigen::Index>(hid) * hid, InitSpec::fan_in(hid), rng);
      double bias0 = (k == 1) ? 1.0 : 0.0;
      b[static_cast<std::size_t>(k)] =
          store.add(prefix + ".b_" + gate[static_cast<std::size_t>(k)], layer_index, hid,
                    InitSpec::constant(bias0), rng);
    }
  }

  struct Vars {
    std::array<Var, 4> wx, wh, b;
  };

  Vars vars(Tape& t, ParameterStore& store) const {
    Vars v;
    for (int k = 0; k < 4; ++k) {
      v.wx[static_cast<std::size_t>(k)] =
          t.param(store, wx[static_cast<std::size_t>(k)], in_dim, hidden);
      v.wh[static_cast<std::size_t>(k)] =
          t.param(store, wh[static_cast<std::size_t>(k)], hidden, hidden);
      v.b[static_cast<std::size_t>(k)] = t.param(store, b[static_cast<std::size_t>(k)], 1, hidden);
    }
    return v;
  }

  // returns (h', c')
  std::pair<Var, Var> step(Tape& t, const Vars& v, Var x, Var h, Var c) const {
    auto gate = [&](int k) {
      return t.add_rowvec(t.add(t.matmul(x, v.wx[static_cast<std::size_t>(k)]),
                                t.matmul(h, v.wh[static_cast<std::size_t>(k)])),
                          v.b[static_cast<std::size_t>(k)]);
    };
    Var i = t.sigmoid(gate(0));
    Var f = t.sigmoid(gate(1));
    Var o = t.sigmoid(gate(2));
    Var g = t.tanh(gate(3));
    Var c_next = t.add(t.mul(f, c), t.mul(i, g));
    Var h_next = t.mul(o, t.tanh(c_next));
    return {h_next, c_next};
  }
};

class SenderAgent {
 public:
  SenderAgent(AgentConfig cfg, RngStream& init_rng) : cfg_(cfg) {
    cfg_.validate();
    obj_w_ = store_.add("obj_proj.weight", 0,
                        static_cast<Eigen::Index>(cfg_.input_dim()) * cfg_.hidden,
                        InitSpec::fan_in(cfg_.input_dim()), init_rng);
    obj_b_ = store_.add("obj_proj.bias", 0, cfg_.hidden, InitSpec::constant(0.0), init_rng);
    start_ = store_.add("start_embed", 0, cfg_.embed, InitSpec::uniform(-1.0, 1.0), init_rng);
    tok_embed_ = store_.add("token_embed", 0,
                            static_cast<Eigen::Index>(cfg_.vocab) * cfg_.embed,
                            InitSpec::fan_in(cfg_.vocab), init_rng);
    cell_.register_params(store_, "lstm", 1, cfg_.embed, cfg_.hidden, init_rng);
    for (int p = 0; p < cfg_.msg_len; ++p) {
      int w = store_.add("head" + std::to_string(p) + ".weight", 2,
                         static_cast<Eigen::Index>(cfg_.hidden) * cfg_.vocab,
                         InitSpec::fan_in(cfg_.hidden), init_rng);
      int b = store_.add("head" + std::to_string(p) + ".bias", 2, cfg_.vocab,
                         InitSpec::constant(0.0), init_rng);
      heads_.push_back({w, b});
    }
    store_.finalize();
    snaps_.put(take_snapshot(store_, "init"));
  }

  const AgentConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  SnapshotSet& snapshots() { return snaps_; }
  const SnapshotSet& snapshots() const { return snaps_; }

  Matrix object_onehot(const IntVector& objects) const {
    Matrix x = Matrix::Zero(objects.size(), cfg_.input_dim());
    ObjectSpace space = cfg_.space();
    for (Eigen::Index i = 0; i < objects.size(); ++i) {
      auto [a1, a2] = space.attributes(objects[i]);
      x(i, a1) = 1.0;
      x(i, cfg_.r1 + a2) = 1.0;
    }
    return x;
  }

  struct BatchRollout {
    std::vector<Var> logits;        // per position, batch x vocab
    std::vector<IntVector> tokens;  // per position
  };

  // Autoregressive unroll; position p+1 consumes the embedding of position
  // p's realized token. With forced_tokens the realized tokens are given
  // (teacher forcing); otherwise they are greedy-decoded or sampled.
  BatchRollout unroll(Tape& t, const IntVector& objects,
                      const std::vector<IntVector>* forced_tokens,
                      RngStream* sampler) const {
    Eigen::Index batch = objects.size();
    if (batch == 0) throw std::invalid_argument("SenderAgent: empty batch");
    auto& self = const_cast<SenderAgent&>(*this);
    Var h = t.add_rowvec(t.matmul(t.constant(object_onehot(objects)),
                                  t.param(self.store_, obj_w_, cfg_.input_dim(), cfg_.hidden)),
                         t.param(self.store_, obj_b_, 1, cfg_.hidden));
    Var c = t.zeros(batch, cfg_.hidden);
    Var x = t.repeat_row(t.param(self.store_, start_, 1, cfg_.embed), batch);
    auto cv = cell_.vars(t, self.store_);
    BatchRollout out;
    for (int p = 0; p < cfg_.msg_len; ++p) {
      std::tie(h, c) = cell_.step(t, cv, x, h, c);
      Var logits = t.add_rowvec(
          t.matmul(h, t.param(self.store_, heads_[static_cast<std::size_t>(p)].first,
                              cfg_.hidden, cfg_.vocab)),
          t.param(self.store_, heads_[static_cast<std::size_t>(p)].second, 1, cfg_.vocab));
      IntVector tok(batch);
      if (forced_tokens) {
        tok = forced_tokens->at(static_cast<std::size_t>(p));
        for (Eigen::Index i = 0; i < batch; ++i)
          if (tok[i] < 0 || tok[i] >= cfg_.vocab)
            throw std::invalid_argument("SenderAgent: forced token out of vocab");
      } else {
        Matrix probs = Tape::softmax_value(t.value(logits));
        for (Eigen::Index i = 0; i < batch; ++i) {
          if (sampler) {
            Eigen::RowVectorXd row = probs.row(i);
            tok[i] = sampler->categorical(row.data(), cfg_.vocab);
          } else {
            tok[i] = argmax_row(t.value(logits).row(i));
          }
        }
      }
      out.logits.push_back(logits);
      out.tokens.push_back(tok);
      if (p + 1 < cfg_.msg_len)
        x = t.embedding(t.param(self.store_, tok_embed_, cfg_.vocab, cfg_.embed), tok);
    }
    return out;
  }

  std::vector<int> produce_greedy(int object) const {
    Tape t;
    IntVector obj(1);
    obj[0] = object;
    auto roll = unroll(t, obj, nullptr, nullptr);
    std::vector<int> msg;
    for (const auto& tok : roll.tokens) msg.push_back(tok[0]);
    return msg;
  }

  std::vector<int> produce_sample(int object, RngStream& rng) const {
    Tape t;
    IntVector obj(1);
    obj[0] = object;
    auto roll = unroll(t, obj, nullptr, &rng);
    std::vector<int> msg;
    for (const auto& tok : roll.tokens) msg.push_back(tok[0]);
    return msg;
  }

  // per-position token distributions; later positions condition on the
  // greedy token of the previous position
  Matrix produce_distributions(int object) const {
    Tape t;
    IntVector obj(1);
    obj[0] = object;
    auto roll = unroll(t, obj, nullptr, nullptr);
    Matrix out(cfg_.msg_len, cfg_.vocab);
    for (int p = 0; p < cfg_.msg_len; ++p)
      out.row(p) = Tape::softmax_value(t.value(roll.logits[static_cast<std::size_t>(p)])).row(0);
    return out;
  }

  // greedy message table over the whole object space
  LanguageTable decode_language(const ObjectSpace& space) const {
    LanguageTable t;
    t.kind = LanguageTable::Kind::Permuted;
    t.space = space;
    t.vocab = cfg_.vocab;
    Tape tape;
    IntVector objects(space.size());
    for (int i = 0; i < space.size(); ++i) objects[i] = i;
    auto roll = unroll(tape, objects, nullptr, nullptr);
    t.messages.resize(static_cast<std::size_t>(space.size()));
    for (int i = 0; i < space.size(); ++i) {
      std::vector<int> msg;
      for (const auto& tok : roll.tokens) msg.push_back(tok[i]);
      t.messages[static_cast<std::size_t>(i)] = std::move(msg);
    }
    return t;
  }

  // fraction of objects whose greedy message equals the table's; group < 0
  // scores all objects, otherwise only the table's matching group
  double language_accuracy(const LanguageTable& table, int group = -1) const {
    LanguageTable mine = decode_language(table.space);
    int total = 0, hits = 0;
    for (int o = 0; o < table.space.size(); ++o) {
      if (group >= 0 &&
          (table.group.empty() || table.group[static_cast<std::size_t>(o)] != group))
        continue;
      ++total;
      if (mine.messages[static_cast<std::size_t>(o)] ==
          table.messages[static_cast<std::size_t>(o)])
        ++hits;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  }

  void reinitialize(RngStream& rng) {
    store_.reinitialize(rng);
    snaps_.put(take_snapshot(store_, "init"));
  }

 private:
  AgentConfig cfg_;
  ParameterStore store_;
  SnapshotSet snaps_;
  int obj_w_ = -1, obj_b_ = -1, start_ = -1, tok_embed_ = -1;
  LstmCell cell_;
  std::vector<std::pair<int, int>> heads_;
};

class ReceiverAgent {
 public:
  ReceiverAgent(AgentConfig cfg, RngStream& init_rng) : cfg_(cfg) {
    cfg_.validate();
    tok_embed_ = store_.add("token_embed", 0,
                            static_cast<Eigen::Index>(cfg_.vocab) * cfg_.embed,
                            InitSpec::fan_in(cfg_.vocab), init_rng);
    cell_.register_params(store_, "lstm", 1, cfg_.embed, cfg_.hidden, init_rng);
    obj_embed_ = store_.add("object_embed", 2,
                            static_cast<Eigen::Index>(cfg_.object_count()) * cfg_.hidden,
                            InitSpec::fan_in(cfg_.object_count()), init_rng);
    store_.finalize();
    snaps_.put(take_snapshot(store_, "init"));
  }

  const AgentConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  SnapshotSet& snapshots() { return snaps_; }
  const SnapshotSet& snapshots() const { return snaps_; }

  // candidate score logits, batch x candidate-count
  Var score(Tape& t, const std::vector<IntVector>& message_tokens,
            const IntMatrix& candidate_ids) const {
    if (static_cast<int>(message_tokens.size()) != cfg_.msg_len)
      throw std::invalid_argument("ReceiverAgent: message length mismatch");
    if (candidate_ids.cols() < 1)
      throw std::invalid_argument("ReceiverAgent: empty candidate list");
    Eigen::Index batch = message_tokens.front().size();
    if (candidate_ids.rows() != batch)
      throw std::invalid_argument("ReceiverAgent: candidate batch mismatch");
    auto& self = const_cast<ReceiverAgent&>(*this);
    Var embed_table = t.param(self.store_, tok_embed_, cfg_.vocab, cfg_.embed);
    Var h = t.zeros(batch, cfg_.hidden);
    Var c = t.zeros(batch, cfg_.hidden);
    auto cv = cell_.vars(t, self.store_);
    for (int p = 0; p < cfg_.msg_len; ++p) {
      Var x = t.embedding(embed_table, message_tokens[static_cast<std::size_t>(p)]);
      std::tie(h, c) = cell_.step(t, cv, x, h, c);
    }
    Var obj_table = t.param(self.store_, obj_embed_, cfg_.object_count(), cfg_.hidden);
    return t.candidate_scores(h, obj_table, candidate_ids);
  }

  Vector select_distribution(const std::vector<int>& message,
                             const std::vector<int>& candidates) const {
    if (candidates.empty())
      throw std::invalid_argument("ReceiverAgent: empty candidate list");
    Tape t;
    std::vector<IntVector> toks;
    for (int tok : message) {
      IntVector v(1);
      v[0] = tok;
      toks.push_back(v);
    }
    IntMatrix ids(1, static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t j = 0; j < candidates.size(); ++j)
      ids(0, static_cast<Eigen::Index>(j)) = candidates[j];
    Var s = score(t, toks, ids);
    return Tape::softmax_value(t.value(s)).row(0).transpose();
  }

  int select_greedy(const std::vector<int>& message, const std::vector<int>& candidates) const {
    Vector d = select_distribution(message, candidates);
    return argmax_row(d.transpose());
  }

  void reinitialize(RngStream& rng) {
    store_.reinitialize(rng);
    snaps_.put(take_snapshot(store_, "init"));
  }

 private:
  AgentConfig cfg_;
  ParameterStore store_;
  SnapshotSet snaps_;
  int tok_embed_ = -1, obj_embed_ = -1;
  LstmCell cell_;
};

}  // namespace relearn
