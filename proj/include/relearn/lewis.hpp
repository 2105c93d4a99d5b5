#pragma once

// The referential game and its iterative training regimes. Agents train
// jointly with REINFORCE plus entropy regularization; regimes differ only in
// the forgetting step applied at generation boundaries: nothing, a full
// receiver reset, partial balanced forgetting of both agents, or the
// three-phase iterated-learning cycle.

#include <cmath>
#include <string>
#include <vector>

#include "relearn/agents.hpp"
#include "relearn/forgetting.hpp"
#include "relearn/language.hpp"
#include "relearn/metrics.hpp"
#include "relearn/optim.hpp"
#include "relearn/probes.hpp"
#include "relearn/rng.hpp"

namespace relearn {

enum class Regime { NoReset, ResetReceiver, Pbf, IteratedLearning };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::NoReset: return "no-reset";
    case Regime::ResetReceiver: return "reset-receiver";
    case Regime::Pbf: return "pbf";
    case Regime::IteratedLearning: return "iterated-learning";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "no-reset") return Regime::NoReset;
  if (s == "reset-receiver") return Regime::ResetReceiver;
  if (s == "pbf") return Regime::Pbf;
  if (s == "iterated-learning") return Regime::IteratedLearning;
  throw std::invalid_argument(
      "regime: unknown '" + s +
      "'; valid: no-reset, reset-receiver, pbf, iterated-learning");
}

struct GameConfig {
  int r1 = 4;
  int r2 = 8;
  int vocab = 8;
  int msg_len = 2;
  int hidden = 100;
  int embed = 32;
  int batch_size = 100;
  int candidates = 5;
  double lambda_sender = 0.1;
  double lambda_receiver = 0.1;
  double lr = 0.001;
  long iters_per_gen = 3000;
  int generations = 10;
  Regime regime = Regime::NoReset;
  bool baseline = true;  // subtract the batch mean reward
  long log_interval = 100;
  long imitation_iters = 800;
  long interaction_iters = 4000;
  double pbf_keep_fraction = 0.1;
  bool il_reset_receiver = true;

  AgentConfig agent_config() const { return {r1, r2, vocab, msg_len, hidden, embed}; }
  int object_count() const { return r1 * r2; }

  void validate() const {
    agent_config().validate();
    if (batch_size < 1 || iters_per_gen < 0 || generations < 1 || log_interval < 1 ||
        imitation_iters < 0 || interaction_iters < 0)
      throw std::invalid_argument("GameConfig: counts must be positive");
    if (candidates < 2 || candidates > object_count())
      throw std::invalid_argument("GameConfig: candidate count must lie in [2, object count]");
    if (lr <= 0.0) throw std::invalid_argument("GameConfig: lr must be positive");
    if (pbf_keep_fraction < 0.0 || pbf_keep_fraction > 1.0)
      throw std::invalid_argument("GameConfig: pbf_keep_fraction must lie in [0, 1]");
  }
};

struct Trajectory {
  int target = 0;
  std::vector<int> candidates;
  std::vector<int> message;
  int choice_slot = 0;    // index into candidates
  int chosen_object = 0;  // candidates[choice_slot]
  double reward = 0.0;    // 1 iff chosen_object == target
  std::vector<double> sender_logp;  // per position
  double receiver_logp = 0.0;
  double sender_entropy = 0.0;  // summed over positions
  double receiver_entropy = 0.0;
};

// Plays one batch with sampled messages and choices. Draw order from the
// stream: all targets, then per-game distractors and candidate shuffles,
// then sender tokens position-major in row order, then receiver choices in
// row order.
inline std::vector<Trajectory> play_batch(const SenderAgent& sender,
                                          const ReceiverAgent& receiver,
                                          const GameConfig& cfg, RngStream& rng) {
  cfg.validate();
  int n_obj = cfg.object_count();
  Eigen::Index batch = cfg.batch_size;
  IntVector targets(batch);
  for (Eigen::Index i = 0; i < batch; ++i)
    targets[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_obj)));
  IntMatrix cand(batch, cfg.candidates);
  for (Eigen::Index i = 0; i < batch; ++i) {
    std::vector<int> row = {targets[i]};
    for (int d : rng.sample_indices(n_obj - 1, cfg.candidates - 1))
      row.push_back(d >= targets[i] ? d + 1 : d);
    rng.shuffle(row);
    for (int j = 0; j < cfg.candidates; ++j) cand(i, j) = row[static_cast<std::size_t>(j)];
  }

  Tape t;
  auto roll = sender.unroll(t, targets, nullptr, &rng);
  Var scores = receiver.score(t, roll.tokens, cand);
  Matrix recv_logp = Tape::log_softmax_value(t.value(scores));
  Matrix recv_probs = recv_logp.array().exp();

  std::vector<Matrix> send_logp;
  for (Var v : roll.logits) send_logp.push_back(Tape::log_softmax_value(t.value(v)));

  std::vector<Trajectory> out(static_cast<std::size_t>(batch));
  for (Eigen::Index i = 0; i < batch; ++i) {
    Trajectory& tr = out[static_cast<std::size_t>(i)];
    tr.target = targets[i];
    for (int j = 0; j < cfg.candidates; ++j) tr.candidates.push_back(cand(i, j));
    for (int p = 0; p < cfg.msg_len; ++p) {
      int tok = roll.tokens[static_cast<std::size_t>(p)][i];
      tr.message.push_back(tok);
      tr.sender_logp.push_back(send_logp[static_cast<std::size_t>(p)](i, tok));
      const auto& lp = send_logp[static_cast<std::size_t>(p)];
      double h = 0.0;
      for (int v = 0; v < cfg.vocab; ++v) h -= std::exp(lp(i, v)) * lp(i, v);
      tr.sender_entropy += h;
    }
    Eigen::RowVectorXd probs_row = recv_probs.row(i);
    tr.choice_slot = rng.categorical(probs_row.data(), cfg.candidates);
    tr.chosen_object = cand(i, tr.choice_slot);
    tr.reward = tr.chosen_object == tr.target ? 1.0 : 0.0;
    tr.receiver_logp = recv_logp(i, tr.choice_slot);
    for (int j = 0; j < cfg.candidates; ++j)
      tr.receiver_entropy -= recv_probs(i, j) * recv_logp(i, j);
  }
  return out;
}

inline double mean_reward(const std::vector<Trajectory>& trajs) {
  double s = 0.0;
  for (const auto& t : trajs) s += t.reward;
  return trajs.empty() ? 0.0 : s / static_cast<double>(trajs.size());
}

struct SurrogateLosses {
  Var sender_loss;
  Var receiver_loss;
};

// Teacher-forced recomputation of the recorded trajectories. Minimizing the
// returned losses ascends R * log pi plus the entropy bonus; sender and
// receiver gradients are independent because sampled tokens do not carry
// gradients between the agents.
inline SurrogateLosses build_surrogate_losses(Tape& t, const std::vector<Trajectory>& trajs,
                                              const SenderAgent& sender,
                                              const ReceiverAgent& receiver,
                                              const GameConfig& cfg) {
  if (trajs.empty()) throw std::invalid_argument("build_surrogate_losses: empty batch");
  Eigen::Index batch = static_cast<Eigen::Index>(trajs.size());
  IntVector targets(batch);
  std::vector<IntVector> tokens(static_cast<std::size_t>(cfg.msg_len), IntVector(batch));
  IntMatrix cand(batch, cfg.candidates);
  IntVector slots(batch);
  Matrix adv(batch, 1);
  double base = 0.0;
  if (cfg.baseline) {
    for (const auto& tr : trajs) base += tr.reward;
    base /= static_cast<double>(trajs.size());
  }
  for (Eigen::Index i = 0; i < batch; ++i) {
    const Trajectory& tr = trajs[static_cast<std::size_t>(i)];
    targets[i] = tr.target;
    for (int p = 0; p < cfg.msg_len; ++p)
      tokens[static_cast<std::size_t>(p)][i] = tr.message[static_cast<std::size_t>(p)];
    for (int j = 0; j < cfg.candidates; ++j)
      cand(i, j) = tr.candidates[static_cast<std::size_t>(j)];
    slots[i] = tr.choice_slot;
    adv(i, 0) = tr.reward - base;
  }

  auto roll = sender.unroll(t, targets, &tokens, nullptr);
  Var logp_s = t.gather_log_prob(roll.logits[0], tokens[0]);
  Var ent_s = t.entropy_rows(roll.logits[0]);
  for (int p = 1; p < cfg.msg_len; ++p) {
    logp_s = t.add(logp_s, t.gather_log_prob(roll.logits[static_cast<std::size_t>(p)],
                                             tokens[static_cast<std::size_t>(p)]));
    ent_s = t.add(ent_s, t.entropy_rows(roll.logits[static_cast<std::size_t>(p)]));
  }
  Var scores = receiver.score(t, tokens, cand);
  Var logp_r = t.gather_log_prob(scores, slots);
  Var ent_r = t.entropy_rows(scores);

  Var advv = t.constant(adv);
  SurrogateLosses out;
  out.sender_loss = t.sub(t.scale(t.mean_all(t.mul(advv, logp_s)), -1.0),
                          t.scale(t.mean_all(ent_s), cfg.lambda_sender));
  out.receiver_loss = t.sub(t.scale(t.mean_all(t.mul(advv, logp_r)), -1.0),
                            t.scale(t.mean_all(ent_r), cfg.lambda_receiver));
  return out;
}

inline void reinforce_update(const std::vector<Trajectory>& trajs, SenderAgent& sender,
                             OptimizerState& sender_opt, ReceiverAgent& receiver,
                             OptimizerState& receiver_opt, const GameConfig& cfg) {
  Tape t;
  SurrogateLosses losses = build_surrogate_losses(t, trajs, sender, receiver, cfg);
  Var total = t.add(losses.sender_loss, losses.receiver_loss);
  sender.store().zero_grads();
  receiver.store().zero_grads();
  t.backward(total);
  adam_step(sender.store(), sender_opt, cfg.lr);
  adam_step(receiver.store(), receiver_opt, cfg.lr);
}

// One full-table supervised step (teacher forcing, cross-entropy averaged
// over positions); returns the loss value.
inline double sender_supervised_step(SenderAgent& sender, OptimizerState& opt,
                                     const LanguageTable& table, double lr) {
  Tape t;
  int n = table.space.size();
  IntVector objects(n);
  for (int i = 0; i < n; ++i) objects[i] = i;
  int msg_len = table.message_length();
  std::vector<IntVector> tokens(static_cast<std::size_t>(msg_len), IntVector(n));
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < msg_len; ++p)
      tokens[static_cast<std::size_t>(p)][i] =
          table.messages[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
  auto roll = sender.unroll(t, objects, &tokens, nullptr);
  Var loss = t.cross_entropy_mean(roll.logits[0], tokens[0]);
  for (int p = 1; p < msg_len; ++p)
    loss = t.add(loss, t.cross_entropy_mean(roll.logits[static_cast<std::size_t>(p)],
                                            tokens[static_cast<std::size_t>(p)]));
  loss = t.scale(loss, 1.0 / static_cast<double>(msg_len));
  sender.store().zero_grads();
  t.backward(loss);
  adam_step(sender.store(), opt, lr);
  return t.value(loss)(0, 0);
}

struct RegimeResult {
  MetricsLog log;
  std::vector<std::string> events;
  SenderAgent sender;
  ReceiverAgent receiver;
};

inline std::vector<std::string> regime_log_columns() {
  return {"generation", "phase",          "iteration",
          "mean_reward", "rho",            "sender_checksum",
          "receiver_checksum"};
}

// Executes the generation loop for the configured regime and logs reward,
// topographic similarity, and parameter checksums at every logging interval
// and phase boundary.
inline RegimeResult run_regime(const GameConfig& cfg, const Rng& rng) {
  cfg.validate();
  AgentConfig acfg = cfg.agent_config();
  ObjectSpace space = acfg.space();
  RngStream sender_init = rng.stream("init/sender");
  RngStream receiver_init = rng.stream("init/receiver");
  RngStream game = rng.stream("game");
  RngStream forgetting = rng.stream("forgetting");

  SenderAgent sender(acfg, sender_init);
  ReceiverAgent receiver(acfg, receiver_init);
  OptimizerState sender_opt = OptimizerState::adam(sender.store());
  OptimizerState receiver_opt = OptimizerState::adam(receiver.store());
  MetricsLog log(regime_log_columns());
  std::vector<std::string> events;
  long global_iter = 0;

  PresetParams pbf_params;
  pbf_params.pbf_keep_fraction = cfg.pbf_keep_fraction;
  ForgettingOp pbf_sender = preset("pbf", pbf_params);
  ForgettingOp pbf_receiver = preset("pbf", pbf_params);

  auto log_row = [&](int gen, const char* phase, double reward) {
    log.append({static_cast<std::int64_t>(gen), std::string(phase),
                static_cast<std::int64_t>(global_iter), reward,
                sender_toposim(sender, space).rho, sender.store().value_checksum(),
                receiver.store().value_checksum()});
  };

  auto run_joint = [&](int gen, const char* phase, long iters) {
    for (long it = 1; it <= iters; ++it) {
      auto trajs = play_batch(sender, receiver, cfg, game);
      reinforce_update(trajs, sender, sender_opt, receiver, receiver_opt, cfg);
      ++global_iter;
      if (it % cfg.log_interval == 0 || it == iters) log_row(gen, phase, mean_reward(trajs));
    }
  };

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    if (cfg.regime == Regime::IteratedLearning) {
      if (gen == 1) {
        run_joint(gen, "interact", cfg.interaction_iters);
        continue;
      }
      // transmit: decode the previous generation's sender on all objects
      LanguageTable temp = sender.decode_language(space);
      log_row(gen, "transmit", std::nan(""));
      // imitate: a fresh sender fits the decoded language under a fixed
      // iteration budget (the learning bottleneck)
      sender.reinitialize(forgetting);
      sender_opt.reset();
      events.push_back("forget_event: gen=" + std::to_string(gen) + " op=il-sender-reset");
      log_row(gen, "imitate", sender.language_accuracy(temp));
      for (long it = 1; it <= cfg.imitation_iters; ++it) {
        sender_supervised_step(sender, sender_opt, temp, cfg.lr);
        ++global_iter;
        if (it % cfg.log_interval == 0 || it == cfg.imitation_iters)
          log_row(gen, "imitate", sender.language_accuracy(temp));
      }
      if (cfg.il_reset_receiver) {
        receiver.reinitialize(forgetting);
        receiver_opt.reset();
        events.push_back("forget_event: gen=" + std::to_string(gen) + " op=il-receiver-reset");
      }
      run_joint(gen, "interact", cfg.interaction_iters);
      continue;
    }
    if (gen > 1) {
      switch (cfg.regime) {
        case Regime::NoReset:
          break;
        case Regime::ResetReceiver: {
          receiver.reinitialize(forgetting);
          receiver_opt.reset();
          events.push_back("forget_event: gen=" + std::to_string(gen) + " op=receiver-reset");
          break;
        }
        case Regime::Pbf: {
          Mask ms = apply_forgetting(sender.store(), pbf_sender, sender.snapshots(),
                                     forgetting, &sender_opt);
          events.push_back(describe_forgetting_event(pbf_sender, ms,
                                                     "gen=" + std::to_string(gen) + " agent=sender"));
          Mask mr = apply_forgetting(receiver.store(), pbf_receiver, receiver.snapshots(),
                                     forgetting, &receiver_opt);
          events.push_back(describe_forgetting_event(
              pbf_receiver, mr, "gen=" + std::to_string(gen) + " agent=receiver"));
          break;
        }
        default:
          break;
      }
    }
    run_joint(gen, "joint", cfg.iters_per_gen);
  }
  return {std::move(log), std::move(events), std::move(sender), std::move(receiver)};
}

}  // namespace relearn
