#pragma once

// Named, layer-indexed flat parameter arrays with paired gradient buffers and
// per-element trainability flags, plus masks, snapshots and snapshot file IO.

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "relearn/rng.hpp"

namespace relearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using IntMatrix = Eigen::MatrixXi;

// How an entry's values are (re)drawn. Reinitialization during forgetting
// replays exactly this distribution.
struct InitSpec {
  enum class Kind { Uniform, Constant };
  Kind kind = Kind::Constant;
  double lo = 0.0;
  double hi = 0.0;
  double value = 0.0;

  static InitSpec uniform(double lo, double hi) {
    InitSpec s;
    s.kind = Kind::Uniform;
    s.lo = lo;
    s.hi = hi;
    return s;
  }
  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
  static InitSpec fan_in(int n) {
    double b = 1.0 / std::sqrt(static_cast<double>(n));
    return uniform(-b, b);
  }
  static InitSpec constant(double v) {
    InitSpec s;
    s.kind = Kind::Constant;
    s.value = v;
    return s;
  }

  double draw(RngStream& rng) const {
    return kind == Kind::Uniform ? rng.uniform_real(lo, hi) : value;
  }
};

struct ParamEntry {
  std::string name;
  int layer_index = 0;
  Vector values;
  Vector grads;
  std::vector<std::uint8_t> trainable;
  InitSpec init;

  Eigen::Index size() const { return values.size(); }
};

class ParameterStore {
 public:
  int add(std::string name, int layer_index, Eigen::Index size, InitSpec init,
          RngStream& rng) {
    if (finalized_) throw std::logic_error("ParameterStore: add after finalize");
    if (size <= 0) throw std::invalid_argument("ParameterStore: entry size must be positive");
    ParamEntry e;
    e.name = std::move(name);
    e.layer_index = layer_index;
    e.values.resize(size);
    for (Eigen::Index i = 0; i < size; ++i) e.values[i] = init.draw(rng);
    e.grads = Vector::Zero(size);
    e.trainable.assign(static_cast<std::size_t>(size), 1);
    e.init = init;
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  // Validates the layer indexing invariants and freezes the entry set.
  void finalize() {
    if (entries_.empty()) throw std::logic_error("ParameterStore: empty store");
    int prev = 0;
    for (const auto& e : entries_) {
      if (e.layer_index < prev)
        throw std::logic_error("ParameterStore: layer_index must be non-decreasing");
      if (e.layer_index > prev + 1)
        throw std::logic_error("ParameterStore: layer_index has gaps");
      prev = e.layer_index;
    }
    if (entries_.front().layer_index != 0)
      throw std::logic_error("ParameterStore: layers must start at 0");
    finalized_ = true;
  }

  int entry_count() const { return static_cast<int>(entries_.size()); }
  ParamEntry& entry(int i) { return entries_.at(static_cast<std::size_t>(i)); }
  const ParamEntry& entry(int i) const { return entries_.at(static_cast<std::size_t>(i)); }

  int find(std::string_view name) const {
    for (int i = 0; i < entry_count(); ++i)
      if (entries_[static_cast<std::size_t>(i)].name == name) return i;
    throw std::invalid_argument("ParameterStore: no entry named '" + std::string(name) + "'");
  }

  int layer_count() const {
    int m = 0;
    for (const auto& e : entries_) m = std::max(m, e.layer_index);
    return m + 1;
  }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& e : entries_) n += e.size();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.grads.setZero();
  }

  // Redraws every entry from its init spec, entry-major then element order.
  void reinitialize(RngStream& rng) {
    for (auto& e : entries_)
      for (Eigen::Index i = 0; i < e.size(); ++i) e.values[i] = e.init.draw(rng);
  }

  std::uint64_t value_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries_) {
      for (Eigen::Index i = 0; i < e.size(); ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(e.values[i]);
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xff;
          h *= 0x100000001b3ull;
        }
      }
    }
    return h;
  }

 private:
  std::vector<ParamEntry> entries_;
  bool finalized_ = false;
};

// Binary mask aligned element-for-element with a ParameterStore.
struct Mask {
  std::vector<std::vector<std::uint8_t>> blocks;

  static Mask filled_like(const ParameterStore& store, std::uint8_t v) {
    Mask m;
    m.blocks.reserve(static_cast<std::size_t>(store.entry_count()));
    for (int i = 0; i < store.entry_count(); ++i)
      m.blocks.emplace_back(static_cast<std::size_t>(store.entry(i).size()), v);
    return m;
  }
  static Mask zeros_like(const ParameterStore& store) { return filled_like(store, 0); }
  static Mask ones_like(const ParameterStore& store) { return filled_like(store, 1); }

  bool shape_matches(const ParameterStore& store) const {
    if (static_cast<int>(blocks.size()) != store.entry_count()) return false;
    for (int i = 0; i < store.entry_count(); ++i)
      if (static_cast<Eigen::Index>(blocks[static_cast<std::size_t>(i)].size()) !=
          store.entry(i).size())
        return false;
    return true;
  }

  Mask complement() const {
    Mask m = *this;
    for (auto& blk : m.blocks)
      for (auto& b : blk) b = b ? 0 : 1;
    return m;
  }

  std::int64_t popcount() const {
    std::int64_t n = 0;
    for (const auto& blk : blocks)
      for (auto b : blk) n += b ? 1 : 0;
    return n;
  }

  std::int64_t popcount_layer(const ParameterStore& store, int layer) const {
    std::int64_t n = 0;
    for (int i = 0; i < store.entry_count(); ++i)
      if (store.entry(i).layer_index == layer)
        for (auto b : blocks[static_cast<std::size_t>(i)]) n += b ? 1 : 0;
    return n;
  }

  std::int64_t total() const {
    std::int64_t n = 0;
    for (const auto& blk : blocks) n += static_cast<std::int64_t>(blk.size());
    return n;
  }
};

struct Snapshot {
  std::string tag;
  std::vector<std::string> names;
  std::vector<Vector> values;
};

inline Snapshot take_snapshot(const ParameterStore& store, std::string tag) {
  Snapshot s;
  s.tag = std::move(tag);
  for (int i = 0; i < store.entry_count(); ++i) {
    s.names.push_back(store.entry(i).name);
    s.values.push_back(store.entry(i).values);
  }
  return s;
}

inline void check_snapshot_shape(const ParameterStore& store, const Snapshot& snap) {
  if (static_cast<int>(snap.values.size()) != store.entry_count())
    throw std::invalid_argument("restore: snapshot entry count mismatch");
  for (int i = 0; i < store.entry_count(); ++i)
    if (snap.values[static_cast<std::size_t>(i)].size() != store.entry(i).size())
      throw std::invalid_argument("restore: snapshot element count mismatch");
}

// Elements where selection=1 take the snapshot's values; others are untouched.
inline void restore(ParameterStore& store, const Snapshot& snap, const Mask& selection) {
  check_snapshot_shape(store, snap);
  if (!selection.shape_matches(store))
    throw std::invalid_argument("restore: mask shape mismatch");
  for (int i = 0; i < store.entry_count(); ++i) {
    auto& e = store.entry(i);
    const auto& src = snap.values[static_cast<std::size_t>(i)];
    const auto& sel = selection.blocks[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < e.size(); ++j)
      if (sel[static_cast<std::size_t>(j)]) e.values[j] = src[j];
  }
}

inline void restore(ParameterStore& store, const Snapshot& snap) {
  restore(store, snap, Mask::ones_like(store));
}

inline void set_trainable(ParameterStore& store, const Mask& selection, bool trainable) {
  if (!selection.shape_matches(store))
    throw std::invalid_argument("set_trainable: mask shape mismatch");
  for (int i = 0; i < store.entry_count(); ++i) {
    auto& e = store.entry(i);
    const auto& sel = selection.blocks[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < e.size(); ++j)
      if (sel[static_cast<std::size_t>(j)])
        e.trainable[static_cast<std::size_t>(j)] = trainable ? 1 : 0;
  }
}

// Keyed snapshot storage; lookups by unknown tag are errors.
class SnapshotSet {
 public:
  void put(Snapshot s) {
    for (auto& existing : snaps_)
      if (existing.tag == s.tag) {
        existing = std::move(s);
        return;
      }
    snaps_.push_back(std::move(s));
  }

  const Snapshot& get(std::string_view tag) const {
    for (const auto& s : snaps_)
      if (s.tag == tag) return s;
    throw std::invalid_argument("SnapshotSet: unknown tag '" + std::string(tag) + "'");
  }

  bool contains(std::string_view tag) const {
    for (const auto& s : snaps_)
      if (s.tag == tag) return true;
    return false;
  }

 private:
  std::vector<Snapshot> snaps_;
};

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("snapshot: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline constexpr char kSnapshotMagic[8] = {'F', 'R', 'S', 'N', 'A', 'P', '0', '1'};

inline void save_snapshot(const Snapshot& snap, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("snapshot: cannot open '" + path.string() + "' for writing");
  os.write(kSnapshotMagic, 8);
  detail::put_u64_le(os, snap.values.size());
  for (std::size_t i = 0; i < snap.values.size(); ++i) {
    const std::string& name = i < snap.names.size() ? snap.names[i] : std::string();
    detail::put_u64_le(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Vector& v = snap.values[i];
    detail::put_u64_le(os, static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index j = 0; j < v.size(); ++j)
      detail::put_u64_le(os, std::bit_cast<std::uint64_t>(v[j]));
  }
  if (!os) throw std::runtime_error("snapshot: write failed for '" + path.string() + "'");
}

inline Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("snapshot: cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kSnapshotMagic))
    throw std::runtime_error("snapshot: bad magic in '" + path.string() + "'");
  Snapshot snap;
  std::uint64_t count = detail::get_u64_le(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t name_len = detail::get_u64_le(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is) throw std::runtime_error("snapshot: truncated file");
    std::uint64_t n = detail::get_u64_le(is);
    Vector v(static_cast<Eigen::Index>(n));
    for (std::uint64_t j = 0; j < n; ++j)
      v[static_cast<Eigen::Index>(j)] = std::bit_cast<double>(detail::get_u64_le(is));
    snap.names.push_back(std::move(name));
    snap.values.push_back(std::move(v));
  }
  return snap;
}

}  // namespace relearn
