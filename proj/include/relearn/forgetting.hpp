#pragma once

// Forgetting operations over parameter stores: a mask criterion selects
// which elements sit on which side of a binary mask, and two mask actions
// say what happens to each side. Applying an op realizes the update
//   theta <- m .* s1(theta) + (1 - m) .* s0(theta)
// Reinitialization draws happen entry-major in element order, only for
// elements whose action is Reinitialize, so a given rng stream replays the
// exact same values.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relearn/data.hpp"
#include "relearn/models.hpp"
#include "relearn/optim.hpp"
#include "relearn/param_store.hpp"
#include "relearn/rng.hpp"

namespace relearn {

enum class CriterionKind { Random, WeightMagInit, WeightMagFinal, LayerThreshold, Fixed };

struct MaskCriterion {
  CriterionKind kind = CriterionKind::Random;
  double keep_rate = 1.0;   // rate criteria: per-layer fraction of ones
  int layer_threshold = 0;  // LayerThreshold: ones exactly where layer < L
  Mask fixed;

  static MaskCriterion random(double keep) {
    check_rate(keep);
    MaskCriterion c;
    c.kind = CriterionKind::Random;
    c.keep_rate = keep;
    return c;
  }
  static MaskCriterion weight_mag_init(double keep) {
    check_rate(keep);
    MaskCriterion c;
    c.kind = CriterionKind::WeightMagInit;
    c.keep_rate = keep;
    return c;
  }
  static MaskCriterion weight_mag_final(double keep) {
    check_rate(keep);
    MaskCriterion c;
    c.kind = CriterionKind::WeightMagFinal;
    c.keep_rate = keep;
    return c;
  }
  static MaskCriterion layer_below(int level) {
    MaskCriterion c;
    c.kind = CriterionKind::LayerThreshold;
    c.layer_threshold = level;
    return c;
  }
  static MaskCriterion fixed_mask(Mask m) {
    MaskCriterion c;
    c.kind = CriterionKind::Fixed;
    c.fixed = std::move(m);
    return c;
  }

  static void check_rate(double r) {
    if (r < 0.0 || r > 1.0)
      throw std::invalid_argument("MaskCriterion: keep_rate must lie in [0, 1]");
  }
};

enum class ActionKind { Identity, Reinitialize, SetZero, Rewind };

struct MaskAction {
  ActionKind kind = ActionKind::Identity;
  std::string snapshot_tag;  // Rewind only

  static MaskAction identity() { return {}; }
  static MaskAction reinitialize() { return {ActionKind::Reinitialize, {}}; }
  static MaskAction set_zero() { return {ActionKind::SetZero, {}}; }
  static MaskAction rewind(std::string tag) { return {ActionKind::Rewind, std::move(tag)}; }
};

enum class MaskSchedule { Once, PerApplication };

struct ForgettingOp {
  std::string name = "custom";
  MaskCriterion criterion;
  MaskAction action1;  // elements with mask value 1
  MaskAction action0;  // elements with mask value 0
  MaskSchedule schedule = MaskSchedule::PerApplication;
  bool exempt_output_layer = false;
  std::optional<Mask> cached_mask;  // Once schedule, realized lazily

  bool is_identity() const {
    return action1.kind == ActionKind::Identity && action0.kind == ActionKind::Identity;
  }
};

namespace detail {

struct LayerSlot {
  int entry;
  Eigen::Index index;
};

inline std::vector<std::vector<LayerSlot>> layer_slots(const ParameterStore& store) {
  std::vector<std::vector<LayerSlot>> slots(static_cast<std::size_t>(store.layer_count()));
  for (int e = 0; e < store.entry_count(); ++e) {
    const auto& entry = store.entry(e);
    auto& layer = slots[static_cast<std::size_t>(entry.layer_index)];
    for (Eigen::Index i = 0; i < entry.size(); ++i) layer.push_back({e, i});
  }
  return slots;
}

inline int round_count(double rate, std::size_t n) {
  return static_cast<int>(std::llround(rate * static_cast<double>(n)));
}

}  // namespace detail

// Produces a binary mask aligned with the store. Rate criteria realize
// round(keep_rate * n_l) ones per layer; magnitude criteria give them to the
// largest-magnitude elements, ties broken toward the lower flat index.
inline Mask make_mask(const MaskCriterion& criterion, const ParameterStore& store,
                      const SnapshotSet& snapshots, RngStream& rng,
                      bool exempt_output_layer = false) {
  Mask mask = Mask::zeros_like(store);
  switch (criterion.kind) {
    case CriterionKind::Fixed: {
      if (!criterion.fixed.shape_matches(store))
        throw std::invalid_argument("make_mask: fixed mask shape mismatch");
      mask = criterion.fixed;
      break;
    }
    case CriterionKind::LayerThreshold: {
      if (criterion.layer_threshold < 0 || criterion.layer_threshold > store.layer_count())
        throw std::invalid_argument("make_mask: layer threshold out of range");
      for (int e = 0; e < store.entry_count(); ++e)
        if (store.entry(e).layer_index < criterion.layer_threshold)
          std::fill(mask.blocks[static_cast<std::size_t>(e)].begin(),
                    mask.blocks[static_cast<std::size_t>(e)].end(), std::uint8_t{1});
      break;
    }
    case CriterionKind::Random: {
      auto slots = detail::layer_slots(store);
      for (const auto& layer : slots) {
        int k = detail::round_count(criterion.keep_rate, layer.size());
        for (int pick : rng.sample_indices(static_cast<int>(layer.size()), k)) {
          const auto& s = layer[static_cast<std::size_t>(pick)];
          mask.blocks[static_cast<std::size_t>(s.entry)][static_cast<std::size_t>(s.index)] = 1;
        }
      }
      break;
    }
    case CriterionKind::WeightMagInit:
    case CriterionKind::WeightMagFinal: {
      const Snapshot* snap = nullptr;
      if (criterion.kind == CriterionKind::WeightMagInit) {
        snap = &snapshots.get("init");  // throws when missing
        check_snapshot_shape(store, *snap);
      }
      auto slots = detail::layer_slots(store);
      for (const auto& layer : slots) {
        int k = detail::round_count(criterion.keep_rate, layer.size());
        std::vector<int> order(layer.size());
        std::iota(order.begin(), order.end(), 0);
        auto magnitude = [&](int i) {
          const auto& s = layer[static_cast<std::size_t>(i)];
          double v = snap ? snap->values[static_cast<std::size_t>(s.entry)][s.index]
                          : store.entry(s.entry).values[s.index];
          return std::abs(v);
        };
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return magnitude(a) > magnitude(b); });
        for (int i = 0; i < k; ++i) {
          const auto& s = layer[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
          mask.blocks[static_cast<std::size_t>(s.entry)][static_cast<std::size_t>(s.index)] = 1;
        }
      }
      break;
    }
  }
  if (exempt_output_layer) {
    int last = store.layer_count() - 1;
    for (int e = 0; e < store.entry_count(); ++e)
      if (store.entry(e).layer_index == last)
        std::fill(mask.blocks[static_cast<std::size_t>(e)].begin(),
                  mask.blocks[static_cast<std::size_t>(e)].end(), std::uint8_t{1});
  }
  return mask;
}

// Applies the update rule in place and returns the realized mask. When an
// optimizer state is given, its buffers are discarded (momentum and moment
// estimates restart from zero after a forgetting event).
inline Mask apply_forgetting(ParameterStore& store, ForgettingOp& op,
                             const SnapshotSet& snapshots, RngStream& rng,
                             OptimizerState* opt = nullptr) {
  Mask mask;
  if (op.schedule == MaskSchedule::Once && op.cached_mask) {
    mask = *op.cached_mask;
  } else {
    mask = make_mask(op.criterion, store, snapshots, rng, op.exempt_output_layer);
    if (op.schedule == MaskSchedule::Once) op.cached_mask = mask;
  }

  const Snapshot* snap1 = op.action1.kind == ActionKind::Rewind
                              ? &snapshots.get(op.action1.snapshot_tag)
                              : nullptr;
  const Snapshot* snap0 = op.action0.kind == ActionKind::Rewind
                              ? &snapshots.get(op.action0.snapshot_tag)
                              : nullptr;
  if (snap1) check_snapshot_shape(store, *snap1);
  if (snap0) check_snapshot_shape(store, *snap0);

  for (int e = 0; e < store.entry_count(); ++e) {
    auto& entry = store.entry(e);
    const auto& bits = mask.blocks[static_cast<std::size_t>(e)];
    for (Eigen::Index i = 0; i < entry.size(); ++i) {
      bool one = bits[static_cast<std::size_t>(i)] != 0;
      const MaskAction& act = one ? op.action1 : op.action0;
      switch (act.kind) {
        case ActionKind::Identity:
          break;
        case ActionKind::SetZero:
          entry.values[i] = 0.0;
          break;
        case ActionKind::Rewind:
          entry.values[i] = (one ? snap1 : snap0)->values[static_cast<std::size_t>(e)][i];
          break;
        case ActionKind::Reinitialize:
          entry.values[i] = entry.init.draw(rng);
          break;
      }
    }
  }
  if (opt) opt->reset();
  return mask;
}

struct PresetParams {
  double rate = 0.5;               // keep fraction for rate criteria
  int layer_threshold = 0;         // llf
  std::string rewind_tag = "epoch-3";  // imp-rewind-late
  bool exempt_output_layer = false;
  double pbf_keep_fraction = 0.1;  // pbf: fraction kept (largest initial magnitude)
};

inline ForgettingOp preset(const std::string& name, const PresetParams& p = {}) {
  ForgettingOp op;
  op.name = name;
  op.exempt_output_layer = p.exempt_output_layer;
  if (name == "ke-random-reinit" || name == "random-reinit") {
    op.criterion = MaskCriterion::random(p.rate);
    op.action1 = MaskAction::identity();
    op.action0 = MaskAction::reinitialize();
    op.schedule = MaskSchedule::PerApplication;
  } else if (name == "random-zero") {
    op.criterion = MaskCriterion::random(p.rate);
    op.action1 = MaskAction::identity();
    op.action0 = MaskAction::set_zero();
    op.schedule = MaskSchedule::PerApplication;
  } else if (name == "imp-rewind") {
    op.criterion = MaskCriterion::weight_mag_final(p.rate);
    op.action1 = MaskAction::rewind("init");
    op.action0 = MaskAction::set_zero();
    op.schedule = MaskSchedule::PerApplication;
  } else if (name == "imp-rewind-late") {
    op.criterion = MaskCriterion::weight_mag_final(p.rate);
    op.action1 = MaskAction::rewind(p.rewind_tag);
    op.action0 = MaskAction::set_zero();
    op.schedule = MaskSchedule::PerApplication;
  } else if (name == "llf") {
    op.criterion = MaskCriterion::layer_below(p.layer_threshold);
    op.action1 = MaskAction::identity();
    op.action0 = MaskAction::reinitialize();
    op.schedule = MaskSchedule::Once;
  } else if (name == "ke-wels") {
    op.criterion = MaskCriterion::random(p.rate);
    op.action1 = MaskAction::identity();
    op.action0 = MaskAction::reinitialize();
    op.schedule = MaskSchedule::Once;
  } else if (name == "same-weight-reinit") {
    op.criterion = MaskCriterion::weight_mag_init(p.rate);
    op.action1 = MaskAction::identity();
    op.action0 = MaskAction::reinitialize();
    op.schedule = MaskSchedule::Once;
  } else if (name == "same-weight-zero") {
    op.criterion = MaskCriterion::weight_mag_init(p.rate);
    op.action1 = MaskAction::identity();
    op.action0 = MaskAction::set_zero();
    op.schedule = MaskSchedule::Once;
  } else if (name == "pbf") {
    op.criterion = MaskCriterion::weight_mag_init(p.pbf_keep_fraction);
    op.action1 = MaskAction::identity();
    op.action0 = MaskAction::reinitialize();
    op.schedule = MaskSchedule::Once;
  } else {
    throw std::invalid_argument(
        "preset: unknown name '" + name +
        "'; valid presets: ke-random-reinit, imp-rewind, imp-rewind-late, llf, ke-wels, "
        "same-weight-reinit, same-weight-zero, random-reinit, random-zero, pbf");
  }
  return op;
}

inline const char* to_string(CriterionKind k) {
  switch (k) {
    case CriterionKind::Random: return "random";
    case CriterionKind::WeightMagInit: return "weight-mag-init";
    case CriterionKind::WeightMagFinal: return "weight-mag-final";
    case CriterionKind::LayerThreshold: return "layer-threshold";
    case CriterionKind::Fixed: return "fixed";
  }
  return "?";
}

inline const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Identity: return "identity";
    case ActionKind::Reinitialize: return "reinitialize";
    case ActionKind::SetZero: return "set-zero";
    case ActionKind::Rewind: return "rewind";
  }
  return "?";
}

inline std::string describe_forgetting_event(const ForgettingOp& op, const Mask& mask,
                                             const std::string& context) {
  std::ostringstream os;
  os << "forget_event: " << context << " op=" << op.name
     << " criterion=" << to_string(op.criterion.kind);
  if (op.criterion.kind == CriterionKind::Random ||
      op.criterion.kind == CriterionKind::WeightMagInit ||
      op.criterion.kind == CriterionKind::WeightMagFinal)
    os << " keep_rate=" << op.criterion.keep_rate;
  if (op.criterion.kind == CriterionKind::LayerThreshold)
    os << " layer_threshold=" << op.criterion.layer_threshold;
  os << " schedule="
     << (op.schedule == MaskSchedule::Once ? "once" : "per-application")
     << " action1=" << to_string(op.action1.kind);
  if (op.action1.kind == ActionKind::Rewind) os << "(" << op.action1.snapshot_tag << ")";
  os << " action0=" << to_string(op.action0.kind);
  if (op.action0.kind == ActionKind::Rewind) os << "(" << op.action0.snapshot_tag << ")";
  if (op.exempt_output_layer) os << " exempt_output_layer=1";
  os << " mask_ones=" << mask.popcount() << " mask_total=" << mask.total();
  return os.str();
}

// Report for the operational two-criteria check: every trial must strictly
// reduce training accuracy, yet the mean post-forgetting accuracy must stay
// above the empirical chance band (mean + 3 sigma over fresh models).
struct ValidationReport {
  std::string op_name;
  double pre_acc = 0.0;
  std::vector<double> post_accs;
  std::vector<double> chance_accs;
  double post_mean = 0.0, post_std = 0.0;
  double chance_mean = 0.0, chance_std = 0.0;
  bool valid = false;
};

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

inline ValidationReport validate_forgetting_op(ForgettingOp& op, const MlpClassifier& model,
                                               const LabeledDataset& dataset,
                                               int n_chance_models, int n_trials,
                                               RngStream& rng) {
  if (n_chance_models < 2 || n_trials < 1)
    throw std::invalid_argument("validate_forgetting_op: need >= 2 chance models and >= 1 trial");
  ValidationReport report;
  report.op_name = op.name;
  report.pre_acc = model.accuracy(dataset.inputs, dataset.labels);
  for (int i = 0; i < n_chance_models; ++i) {
    MlpClassifier fresh(model.layer_sizes(), rng);
    report.chance_accs.push_back(fresh.accuracy(dataset.inputs, dataset.labels));
  }
  std::tie(report.chance_mean, report.chance_std) = mean_std(report.chance_accs);
  if (report.pre_acc <= report.chance_mean)
    throw std::invalid_argument("validate_forgetting_op: model is not above chance accuracy");
  for (int i = 0; i < n_trials; ++i) {
    MlpClassifier copy = model;
    apply_forgetting(copy.store(), op, copy.snapshots(), rng);
    report.post_accs.push_back(copy.accuracy(dataset.inputs, dataset.labels));
  }
  std::tie(report.post_mean, report.post_std) = mean_std(report.post_accs);
  bool decreases = true;
  for (double a : report.post_accs) decreases = decreases && a < report.pre_acc;
  bool above_chance = report.post_mean > report.chance_mean + 3.0 * report.chance_std;
  report.valid = decreases && above_chance;
  return report;
}

}  // namespace relearn
