#pragma once

// Config-driven experiment recipes. Each recipe is a deterministic function
// of (config, seed) that writes CSV metrics, a final parameter snapshot, and
// a manifest naming every forgetting event it performed.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relearn/config.hpp"
#include "relearn/data.hpp"
#include "relearn/forgetting.hpp"
#include "relearn/lewis.hpp"
#include "relearn/metrics.hpp"
#include "relearn/models.hpp"
#include "relearn/probes.hpp"

namespace relearn {

inline constexpr const char* kVersionString = "relearn-0.1.0";

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::vector<std::filesystem::path> csv_files;
  std::filesystem::path snapshot_file;
  std::filesystem::path manifest_file;
  std::string status;
};

namespace detail {

struct RecipeOutput {
  std::vector<std::pair<std::string, MetricsLog>> logs;  // filename -> log
  Snapshot final_snapshot;
  std::vector<std::string> events;
  std::vector<std::string> notes;
};

inline std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<std::vector<int>> epoch_batches(int n, int batch_size, RngStream& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<std::vector<int>> out;
  for (int b = 0; b < n; b += batch_size) {
    out.emplace_back(idx.begin() + b, idx.begin() + std::min(n, b + batch_size));
  }
  return out;
}

inline double mlp_step(MlpClassifier& model, OptimizerState& opt, const Matrix& x,
                       const IntVector& y, double lr, double momentum, double weight_decay) {
  Tape t;
  Var loss = t.cross_entropy_mean(model.forward(t, x), y);
  model.store().zero_grads();
  t.backward(loss);
  sgd_momentum_step(model.store(), opt, lr, momentum, weight_decay);
  return t.value(loss)(0, 0);
}

struct ImageData {
  LabeledDataset train;
  LabeledDataset test;
  std::string note;
};

// Synthetic by default; dataset.source=idx reads IDX files from
// RELEARN_DATA_DIR and falls back to the synthetic generator when absent.
inline ImageData build_image_dataset(const ExperimentConfig& cfg, const Rng& rng) {
  ImageData data;
  if (cfg.get_string("dataset.source") == "idx") {
    const char* dir = std::getenv("RELEARN_DATA_DIR");
    if (dir) {
      namespace fs = std::filesystem;
      fs::path base(dir);
      fs::path train_img = base / "train-images-idx3-ubyte";
      fs::path train_lab = base / "train-labels-idx1-ubyte";
      if (fs::exists(train_img) && fs::exists(train_lab)) {
        data.train = load_idx(train_img, train_lab);
        fs::path test_img = base / "t10k-images-idx3-ubyte";
        fs::path test_lab = base / "t10k-labels-idx1-ubyte";
        if (fs::exists(test_img) && fs::exists(test_lab))
          data.test = load_idx(test_img, test_lab);
        return data;
      }
    }
    data.note = "dataset_note=idx files not found under RELEARN_DATA_DIR; substituted synthetic";
  }
  SynthConfig scfg;
  scfg.grid_spacing = cfg.get_double("dataset.synth_grid_spacing");
  scfg.within_scale = cfg.get_double("dataset.synth_within_scale");
  scfg.radius_fraction = cfg.get_double("dataset.synth_radius_fraction");
  RngStream synth = rng.stream("data/synth");
  auto [train, test] = synth_digits_split(static_cast<int>(cfg.get_long("dataset.synth_per_class")),
                                          static_cast<int>(cfg.get_long("dataset.synth_test_per_class")),
                                          synth, scfg);
  data.train = std::move(train);
  data.test = std::move(test);
  return data;
}

inline std::vector<ForgettingOp> parse_probe_ops(const std::string& list, double rate) {
  std::vector<ForgettingOp> ops;
  PresetParams p;
  p.rate = rate;
  for (const std::string& name : split_csv_list(list)) ops.push_back(preset(name, p));
  return ops;
}

inline bool op_snapshots_available(const ForgettingOp& op, const SnapshotSet& snaps) {
  for (const MaskAction* a : {&op.action1, &op.action0})
    if (a->kind == ActionKind::Rewind && !snaps.contains(a->snapshot_tag)) return false;
  if (op.criterion.kind == CriterionKind::WeightMagInit && !snaps.contains("init")) return false;
  return true;
}

// ---- sf-image-easyhard / sf-image-mislabel ----

inline RecipeOutput run_sf_image(const ExperimentConfig& cfg, const Rng& rng, bool mislabel) {
  RecipeOutput out;
  ImageData data = build_image_dataset(cfg, rng);
  if (!data.note.empty()) out.notes.push_back(data.note);
  RngStream sub = rng.stream("data/subsample");
  LabeledDataset train = subsample(data.train, cfg.get_double("dataset.subsample_fraction"), sub);
  if (mislabel) {
    RngStream noise = rng.stream("data/noise");
    train = inject_label_noise(train, cfg.get_double("dataset.noise_fraction"), noise);
  }

  RngStream init = rng.stream("init/mlp");
  MlpClassifier model({static_cast<int>(train.inputs.cols()),
                       static_cast<int>(cfg.get_long("mlp.hidden1")),
                       static_cast<int>(cfg.get_long("mlp.hidden2")), train.num_classes},
                      init);
  OptimizerState opt = OptimizerState::sgd_momentum(model.store());
  double lr = cfg.get_double("mlp.lr");
  double momentum = cfg.get_double("mlp.momentum");
  double wd = cfg.get_double("mlp.weight_decay");
  int batch_size = static_cast<int>(cfg.get_long("mlp.batch_size"));
  long max_epochs = cfg.get_long("mlp.max_epochs");
  double target = cfg.get_double("mlp.target_acc");
  long probe_interval = cfg.get_long("probe.interval");
  double margin_fraction = cfg.get_double("probe.margin_fraction");

  std::vector<ForgettingOp> ops =
      parse_probe_ops(cfg.get_string("probe.ops"), cfg.get_double("probe.rate"));
  RngStream probe_rng = rng.stream("probe/forgetting");
  RngStream order = rng.stream("train/order");

  MetricsLog probes({"step", "op", "scope", "pre_acc_group0", "pre_acc_group1",
                     "post_acc_group0", "post_acc_group1"});
  MetricsLog train_log({"epoch", "iteration", "loss", "acc_group0", "acc_group1"});

  auto probe_all = [&](long step, const LabeledDataset& ds, const char* scope) {
    for (ForgettingOp& op : ops) {
      if (!op_snapshots_available(op, model.snapshots())) continue;
      GroupAccuracyRecord rec = probe_with_copy(model, ds, op, probe_rng);
      probes.append({static_cast<std::int64_t>(step), op.name, std::string(scope),
                     rec.pre_acc_group0, rec.pre_acc_group1, rec.post_acc_group0,
                     rec.post_acc_group1});
    }
  };

  long iteration = 0;
  for (long epoch = 1; epoch <= max_epochs; ++epoch) {
    double loss_sum = 0.0;
    long loss_n = 0;
    for (const auto& batch : epoch_batches(static_cast<int>(train.size()), batch_size, order)) {
      ++iteration;
      if (iteration % probe_interval == 0) {
        if (mislabel) {
          probe_all(iteration, train, "full");
        } else {
          LabeledDataset view = select_rows(train, batch);
          view.group = split_by_margin(model, view.inputs, margin_fraction);
          probe_all(iteration, view, "batch");
        }
      }
      LabeledDataset view = select_rows(train, batch);
      loss_sum += mlp_step(model, opt, view.inputs, view.labels, lr, momentum, wd);
      ++loss_n;
    }
    if (epoch == 3)
      model.snapshots().put(take_snapshot(model.store(), "epoch-3"));
    double a0, a1;
    if (mislabel) {
      a0 = train.group_accuracy(model, 0);
      a1 = train.group_accuracy(model, 1);
    } else {
      a0 = a1 = model.accuracy(train.inputs, train.labels);
    }
    train_log.append({static_cast<std::int64_t>(epoch), static_cast<std::int64_t>(iteration),
                      loss_sum / static_cast<double>(loss_n), a0, a1});
    if (a0 >= target && a1 >= target) break;
  }

  // converged-model probes over the whole training set
  if (mislabel) {
    probe_all(iteration, train, "full");
  } else {
    LabeledDataset full = train;
    full.group = split_by_margin(model, full.inputs, margin_fraction);
    probe_all(iteration, full, "full");
  }

  out.logs.push_back({"probes.csv", std::move(probes)});
  out.logs.push_back({"train.csv", std::move(train_log)});
  out.final_snapshot = take_snapshot(model.store(), "final");
  return out;
}

// ---- sf-language ----

inline RecipeOutput run_sf_language(const ExperimentConfig& cfg, const Rng& rng,
                                    const std::filesystem::path& run_dir) {
  RecipeOutput out;
  ObjectSpace space{static_cast<int>(cfg.get_long("lewis.r1")),
                    static_cast<int>(cfg.get_long("lewis.r2"))};
  int vocab = static_cast<int>(cfg.get_long("lewis.vocab"));
  std::vector<int> s1, s2;
  for (int i = 0; i < space.r1; ++i) s1.push_back(i);
  for (int i = 0; i < space.r2; ++i) s2.push_back(i);
  LanguageTable comp = make_compositional_language(space, s1, s2, vocab);
  RngStream perm_rng = rng.stream("data/permute");
  LanguageTable perm = make_permuted_language(comp, perm_rng);
  RngStream mix_rng = rng.stream("data/mix");
  LanguageTable mixed = make_mixed_language(comp, perm, mix_rng);
  write_language_csv(mixed, run_dir / "language.csv");

  AgentConfig acfg{space.r1, space.r2, vocab, static_cast<int>(cfg.get_long("lewis.msg_len")),
                   static_cast<int>(cfg.get_long("lewis.hidden")),
                   static_cast<int>(cfg.get_long("lewis.embed"))};
  RngStream init = rng.stream("init/sender");
  SenderAgent sender(acfg, init);
  OptimizerState opt = OptimizerState::adam(sender.store());
  double lr = cfg.get_double("sflang.lr");
  long max_iters = cfg.get_long("sflang.max_iters");
  long probe_interval = cfg.get_long("probe.interval");

  PresetParams pp;
  pp.rate = cfg.get_double("sflang.rate");
  std::vector<ForgettingOp> ops = {preset("random-reinit", pp), preset("random-zero", pp),
                                   preset("same-weight-reinit", pp),
                                   preset("same-weight-zero", pp)};
  RngStream probe_rng = rng.stream("probe/forgetting");

  MetricsLog probes({"step", "op", "pre_acc_group0", "pre_acc_group1", "post_acc_group0",
                     "post_acc_group1"});
  MetricsLog train_log({"iteration", "loss", "acc_comp", "acc_perm"});

  auto probe_all = [&](long step) {
    for (ForgettingOp& op : ops) {
      GroupAccuracyRecord rec = probe_with_copy(sender, mixed, op, probe_rng);
      probes.append({static_cast<std::int64_t>(step), op.name, rec.pre_acc_group0,
                     rec.pre_acc_group1, rec.post_acc_group0, rec.post_acc_group1});
    }
  };

  for (long it = 1; it <= max_iters; ++it) {
    if (it % probe_interval == 0) probe_all(it);
    double loss = sender_supervised_step(sender, opt, mixed, lr);
    if (it % probe_interval == 0 || it == max_iters) {
      double ac = sender.language_accuracy(mixed, 0);
      double ap = sender.language_accuracy(mixed, 1);
      train_log.append({static_cast<std::int64_t>(it), loss, ac, ap});
      if (ac >= 1.0 && ap >= 1.0 && it >= probe_interval) break;
    }
  }
  probe_all(max_iters + 1);  // converged-model probes

  out.logs.push_back({"probes.csv", std::move(probes)});
  out.logs.push_back({"train.csv", std::move(train_log)});
  out.final_snapshot = take_snapshot(sender.store(), "final");
  return out;
}

// ---- lewis ----

inline GameConfig game_config_from(const ExperimentConfig& cfg) {
  GameConfig g;
  g.r1 = static_cast<int>(cfg.get_long("lewis.r1"));
  g.r2 = static_cast<int>(cfg.get_long("lewis.r2"));
  g.vocab = static_cast<int>(cfg.get_long("lewis.vocab"));
  g.msg_len = static_cast<int>(cfg.get_long("lewis.msg_len"));
  g.hidden = static_cast<int>(cfg.get_long("lewis.hidden"));
  g.embed = static_cast<int>(cfg.get_long("lewis.embed"));
  g.batch_size = static_cast<int>(cfg.get_long("lewis.batch_size"));
  g.candidates = static_cast<int>(cfg.get_long("lewis.candidates"));
  g.lambda_sender = cfg.get_double("lewis.lambda_s");
  g.lambda_receiver = cfg.get_double("lewis.lambda_r");
  g.lr = cfg.get_double("lewis.lr");
  g.iters_per_gen = cfg.get_long("lewis.iters_per_gen");
  g.generations = static_cast<int>(cfg.get_long("lewis.generations"));
  g.regime = regime_from_string(cfg.get_string("lewis.regime"));
  g.baseline = cfg.get_bool("lewis.baseline");
  g.log_interval = cfg.get_long("lewis.log_interval");
  g.imitation_iters = cfg.get_long("lewis.imitation_iters");
  g.interaction_iters = cfg.get_long("lewis.interaction_iters");
  g.pbf_keep_fraction = cfg.get_double("lewis.pbf_keep_fraction");
  g.il_reset_receiver = cfg.get_bool("lewis.il_reset_receiver");
  return g;
}

inline Snapshot merge_agent_snapshot(const SenderAgent& sender, const ReceiverAgent& receiver) {
  Snapshot snap;
  snap.tag = "final";
  auto add = [&snap](const ParameterStore& store, const std::string& prefix) {
    for (int i = 0; i < store.entry_count(); ++i) {
      snap.names.push_back(prefix + store.entry(i).name);
      snap.values.push_back(store.entry(i).values);
    }
  };
  add(sender.store(), "sender/");
  add(receiver.store(), "receiver/");
  return snap;
}

inline RecipeOutput run_lewis(const ExperimentConfig& cfg, const Rng& rng) {
  RecipeOutput out;
  GameConfig game = game_config_from(cfg);
  RegimeResult res = run_regime(game, rng);
  out.logs.push_back({"metrics.csv", std::move(res.log)});
  out.events = std::move(res.events);
  out.final_snapshot = merge_agent_snapshot(res.sender, res.receiver);
  return out;
}

// ---- llf-mlp ----

inline RecipeOutput run_llf_mlp(const ExperimentConfig& cfg, const Rng& rng) {
  RecipeOutput out;
  ImageData data = build_image_dataset(cfg, rng);
  if (!data.note.empty()) out.notes.push_back(data.note);
  RngStream sub = rng.stream("data/subsample");
  LabeledDataset train = subsample(data.train, cfg.get_double("dataset.subsample_fraction"), sub);

  double base_lr = cfg.get_double("gen.lr");
  double momentum = cfg.get_double("gen.momentum");
  double wd = cfg.get_double("gen.weight_decay");
  bool cosine = cfg.get_bool("gen.cosine");
  int batch_size = static_cast<int>(cfg.get_long("gen.batch_size"));
  long generations = cfg.get_long("gen.generations");
  long epochs_per_gen = cfg.get_long("gen.epochs_per_gen");

  MetricsLog log({"arm", "generation", "epoch", "iteration", "lr", "train_acc", "test_acc"});

  auto run_arm = [&](const std::string& arm, std::optional<ForgettingOp> op) {
    RngStream init = rng.stream("init/mlp");
    MlpClassifier model({static_cast<int>(train.inputs.cols()),
                         static_cast<int>(cfg.get_long("mlp.hidden1")),
                         static_cast<int>(cfg.get_long("mlp.hidden2")), train.num_classes},
                        init);
    RngStream order = rng.stream("train/order/" + arm);
    RngStream forget = rng.stream("forgetting/" + arm);
    OptimizerState opt = OptimizerState::sgd_momentum(model.store());
    long iteration = 0;
    // the long baseline runs one schedule over the whole budget
    long gens = op ? generations : 1;
    long epochs = op ? epochs_per_gen : generations * epochs_per_gen;
    for (long gen = 1; gen <= gens; ++gen) {
      if (op && gen > 1) {
        Mask m = apply_forgetting(model.store(), *op, model.snapshots(), forget, &opt);
        out.events.push_back(describe_forgetting_event(
            *op, m, "arm=" + arm + " gen=" + std::to_string(gen)));
      }
      for (long e = 0; e < epochs; ++e) {
        double lr = cosine ? cosine_lr(e, epochs, base_lr) : base_lr;
        for (const auto& batch :
             epoch_batches(static_cast<int>(train.size()), batch_size, order)) {
          ++iteration;
          LabeledDataset view = select_rows(train, batch);
          mlp_step(model, opt, view.inputs, view.labels, lr, momentum, wd);
        }
        log.append({arm, static_cast<std::int64_t>(gen), static_cast<std::int64_t>(e + 1),
                    static_cast<std::int64_t>(iteration), lr,
                    model.accuracy(train.inputs, train.labels),
                    data.test.size() > 0 ? model.accuracy(data.test.inputs, data.test.labels)
                                         : 0.0});
      }
    }
    return take_snapshot(model.store(), "final");
  };

  PresetParams ke;
  ke.rate = cfg.get_double("forget.ke_rate");
  PresetParams llf;
  llf.layer_threshold = static_cast<int>(cfg.get_long("forget.llf_threshold"));
  run_arm("long", std::nullopt);
  run_arm("ke-wels", preset("ke-wels", ke));
  Snapshot last = run_arm("llf", preset("llf", llf));

  out.logs.push_back({"llf.csv", std::move(log)});
  out.final_snapshot = std::move(last);
  return out;
}

// ---- freeze-ablation ----

inline RecipeOutput run_freeze_ablation(const ExperimentConfig& cfg, const Rng& rng) {
  RecipeOutput out;
  ImageData data = build_image_dataset(cfg, rng);
  if (!data.note.empty()) out.notes.push_back(data.note);
  RngStream sub = rng.stream("data/subsample");
  LabeledDataset train = subsample(data.train, cfg.get_double("dataset.subsample_fraction"), sub);

  double base_lr = cfg.get_double("gen.lr");
  double momentum = cfg.get_double("gen.momentum");
  double wd = cfg.get_double("gen.weight_decay");
  bool cosine = cfg.get_bool("gen.cosine");
  int batch_size = static_cast<int>(cfg.get_long("gen.batch_size"));
  long generations = cfg.get_long("gen.generations");
  long epochs_per_gen = cfg.get_long("gen.epochs_per_gen");
  int threshold = static_cast<int>(cfg.get_long("freeze.threshold"));

  MetricsLog log({"variant", "generation", "epoch", "iteration", "train_acc", "test_acc"});

  auto layer_mask = [](const ParameterStore& store, int from_layer, bool exempt_output) {
    Mask m = Mask::zeros_like(store);
    int last = store.layer_count() - 1;
    for (int e = 0; e < store.entry_count(); ++e) {
      int l = store.entry(e).layer_index;
      if (l >= from_layer && !(exempt_output && l == last))
        std::fill(m.blocks[static_cast<std::size_t>(e)].begin(),
                  m.blocks[static_cast<std::size_t>(e)].end(), std::uint8_t{1});
    }
    return m;
  };

  auto run_variant = [&](const std::string& variant) {
    RngStream init = rng.stream("init/mlp");
    MlpClassifier model({static_cast<int>(train.inputs.cols()),
                         static_cast<int>(cfg.get_long("mlp.hidden1")),
                         static_cast<int>(cfg.get_long("mlp.hidden2")), train.num_classes},
                        init);
    RngStream order = rng.stream("train/order/" + variant);
    RngStream forget = rng.stream("forgetting/" + variant);
    OptimizerState opt = OptimizerState::sgd_momentum(model.store());
    PresetParams reinit_all;
    reinit_all.layer_threshold = threshold;
    ForgettingOp reinit_later = preset("llf", reinit_all);
    PresetParams reinit_keep_out = reinit_all;
    reinit_keep_out.exempt_output_layer = true;
    ForgettingOp reinit_later_keep_out = preset("llf", reinit_keep_out);
    bool fixed_later_drawn = false;

    long iteration = 0;
    for (long gen = 1; gen <= generations; ++gen) {
      if (gen > 1) {
        opt.reset();
        if (variant == "freeze-early") {
          // early layers stay frozen; later layers (output included) restart
          Mask m = apply_forgetting(model.store(), reinit_later, model.snapshots(), forget);
          out.events.push_back(describe_forgetting_event(
              reinit_later, m, "variant=" + variant + " gen=" + std::to_string(gen)));
        } else if (variant == "freeze-later") {
          Mask m = apply_forgetting(model.store(), reinit_later_keep_out, model.snapshots(),
                                    forget);
          out.events.push_back(describe_forgetting_event(
              reinit_later_keep_out, m, "variant=" + variant + " gen=" + std::to_string(gen)));
          set_trainable(model.store(), layer_mask(model.store(), threshold, true), false);
        } else {  // freeze-fixed-later: the same redraw every generation
          if (!fixed_later_drawn) {
            Mask m = apply_forgetting(model.store(), reinit_later_keep_out, model.snapshots(),
                                      forget);
            model.snapshots().put(take_snapshot(model.store(), "fixed-later"));
            fixed_later_drawn = true;
            out.events.push_back(describe_forgetting_event(
                reinit_later_keep_out, m, "variant=" + variant + " gen=" + std::to_string(gen)));
          } else {
            restore(model.store(), model.snapshots().get("fixed-later"),
                    layer_mask(model.store(), threshold, true));
            out.events.push_back("forget_event: variant=" + variant + " gen=" +
                                 std::to_string(gen) + " op=restore-fixed-later");
          }
          set_trainable(model.store(), layer_mask(model.store(), threshold, true), false);
        }
        if (variant == "freeze-early" && gen == 2) {
          // freeze exactly the layers below the threshold, once
          Mask early = Mask::zeros_like(model.store());
          for (int e = 0; e < model.store().entry_count(); ++e)
            if (model.store().entry(e).layer_index < threshold)
              std::fill(early.blocks[static_cast<std::size_t>(e)].begin(),
                        early.blocks[static_cast<std::size_t>(e)].end(), std::uint8_t{1});
          set_trainable(model.store(), early, false);
        }
      }
      for (long e = 0; e < epochs_per_gen; ++e) {
        double lr = cosine ? cosine_lr(e, epochs_per_gen, base_lr) : base_lr;
        for (const auto& batch :
             epoch_batches(static_cast<int>(train.size()), batch_size, order)) {
          ++iteration;
          LabeledDataset view = select_rows(train, batch);
          mlp_step(model, opt, view.inputs, view.labels, lr, momentum, wd);
        }
        log.append({variant, static_cast<std::int64_t>(gen), static_cast<std::int64_t>(e + 1),
                    static_cast<std::int64_t>(iteration),
                    model.accuracy(train.inputs, train.labels),
                    data.test.size() > 0 ? model.accuracy(data.test.inputs, data.test.labels)
                                         : 0.0});
      }
    }
    return take_snapshot(model.store(), "final");
  };

  run_variant("freeze-early");
  run_variant("freeze-later");
  Snapshot last = run_variant("freeze-fixed-later");

  out.logs.push_back({"freeze.csv", std::move(log)});
  out.final_snapshot = std::move(last);
  return out;
}

// ---- validate-op ----

inline RecipeOutput run_validate_op(const ExperimentConfig& cfg, const Rng& rng) {
  RecipeOutput out;
  ImageData data = build_image_dataset(cfg, rng);
  if (!data.note.empty()) out.notes.push_back(data.note);
  RngStream sub = rng.stream("data/subsample");
  LabeledDataset train = subsample(data.train, cfg.get_double("dataset.subsample_fraction"), sub);

  RngStream init = rng.stream("init/mlp");
  MlpClassifier model({static_cast<int>(train.inputs.cols()),
                       static_cast<int>(cfg.get_long("mlp.hidden1")),
                       static_cast<int>(cfg.get_long("mlp.hidden2")), train.num_classes},
                      init);
  OptimizerState opt = OptimizerState::sgd_momentum(model.store());
  RngStream order = rng.stream("train/order");
  double lr = cfg.get_double("mlp.lr");
  double target = cfg.get_double("mlp.target_acc");
  int batch_size = static_cast<int>(cfg.get_long("mlp.batch_size"));
  for (long epoch = 1; epoch <= cfg.get_long("mlp.max_epochs"); ++epoch) {
    for (const auto& batch : epoch_batches(static_cast<int>(train.size()), batch_size, order)) {
      LabeledDataset view = select_rows(train, batch);
      mlp_step(model, opt, view.inputs, view.labels, lr, cfg.get_double("mlp.momentum"),
               cfg.get_double("mlp.weight_decay"));
    }
    if (model.accuracy(train.inputs, train.labels) >= target) break;
  }

  PresetParams pp;
  pp.rate = cfg.get_double("validate.rate");
  ForgettingOp identity_op;
  identity_op.name = "identity";
  identity_op.criterion = MaskCriterion::random(1.0);
  ForgettingOp ke = preset("ke-random-reinit", pp);
  ForgettingOp full_reinit;
  full_reinit.name = "full-reinit";
  full_reinit.criterion = MaskCriterion::random(0.0);
  full_reinit.action0 = MaskAction::reinitialize();

  RngStream val = rng.stream("validate");
  int n_chance = static_cast<int>(cfg.get_long("validate.n_chance"));
  int n_trials = static_cast<int>(cfg.get_long("validate.n_trials"));
  MetricsLog log({"op", "pre_acc", "post_acc_mean", "post_acc_std", "chance_mean",
                  "chance_std", "verdict"});
  for (ForgettingOp* op : {&identity_op, &ke, &full_reinit}) {
    ValidationReport r = validate_forgetting_op(*op, model, train, n_chance, n_trials, val);
    log.append({r.op_name, r.pre_acc, r.post_mean, r.post_std, r.chance_mean, r.chance_std,
                std::string(r.valid ? "valid" : "invalid")});
    out.events.push_back("validate: op=" + r.op_name +
                         " verdict=" + (r.valid ? "valid" : "invalid"));
  }
  out.logs.push_back({"validation.csv", std::move(log)});
  out.final_snapshot = take_snapshot(model.store(), "final");
  return out;
}

}  // namespace detail

// Runs the named recipe end to end. Output layout:
// <out>/<experiment>-<seed>/{config.echo, manifest.txt, *.csv, final.snap}
inline RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  auto t0 = std::chrono::steady_clock::now();
  RunArtifacts art;
  art.run_dir = cfg.out_dir / (std::string(to_string(cfg.experiment)) + "-" +
                               std::to_string(cfg.seed));
  fs::create_directories(art.run_dir);
  {
    std::ofstream echo(art.run_dir / "config.echo");
    echo << cfg.echo();
  }
  Rng rng(cfg.seed);
  detail::RecipeOutput res;
  art.status = "ok";
  try {
    switch (cfg.experiment) {
      case ExperimentKind::SfImageEasyHard:
        res = detail::run_sf_image(cfg, rng, false);
        break;
      case ExperimentKind::SfImageMislabel:
        res = detail::run_sf_image(cfg, rng, true);
        break;
      case ExperimentKind::SfLanguage:
        res = detail::run_sf_language(cfg, rng, art.run_dir);
        break;
      case ExperimentKind::Lewis:
        res = detail::run_lewis(cfg, rng);
        break;
      case ExperimentKind::LlfMlp:
        res = detail::run_llf_mlp(cfg, rng);
        break;
      case ExperimentKind::FreezeAblation:
        res = detail::run_freeze_ablation(cfg, rng);
        break;
      case ExperimentKind::ValidateOp:
        res = detail::run_validate_op(cfg, rng);
        break;
    }
  } catch (...) {
    // leave a manifest marking the partial run, then rethrow
    std::ofstream mf(art.run_dir / "manifest.txt");
    mf << "experiment=" << to_string(cfg.experiment) << "\nseed=" << cfg.seed
       << "\nversion=" << kVersionString << "\nstatus=failed\n";
    throw;
  }

  for (auto& [name, log] : res.logs) {
    fs::path p = art.run_dir / name;
    write_metrics(log, p);
    art.csv_files.push_back(p);
  }
  art.snapshot_file = art.run_dir / "final.snap";
  save_snapshot(res.final_snapshot, art.snapshot_file);

  auto t1 = std::chrono::steady_clock::now();
  art.manifest_file = art.run_dir / "manifest.txt";
  std::ofstream mf(art.manifest_file);
  mf << "experiment=" << to_string(cfg.experiment) << '\n';
  mf << "seed=" << cfg.seed << '\n';
  mf << "version=" << kVersionString << '\n';
  mf << "status=" << art.status << '\n';
  mf << "wall_time_s=" << std::chrono::duration<double>(t1 - t0).count() << '\n';
  for (const auto& note : res.notes) mf << note << '\n';
  for (const auto& ev : res.events) mf << ev << '\n';
  return art;
}

}  // namespace relearn
