#pragma once

// Deterministic counter-based random streams. Every consumer derives its own
// stream from (seed, label), so adding a new consumer never perturbs the
// draws seen by existing ones.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relearn {

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

inline std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label)
      : key_(detail::mix64(seed ^ detail::mix64(detail::hash_label(label)))) {}

  std::uint64_t next_u64() {
    return detail::mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_);
  }

  // in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_real(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // in [0, n); multiply-shift reduction
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Box-Muller; always consumes exactly two uniforms
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(i))]);
    }
  }

  // k distinct indices from [0, n), returned ascending
  std::vector<int> sample_indices(int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("sample_indices: k out of range");
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
  }

  // index sampled proportionally to probs[0..n)
  int categorical(const double* probs, int n) {
    if (n <= 0) throw std::invalid_argument("categorical: empty distribution");
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += probs[i];
    double u = uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Stream factory for one run. stream(label) is a pure function of
// (seed, label): requesting the same label twice restarts that stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  RngStream stream(std::string_view label) const { return RngStream(seed_, label); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
};

}  // namespace relearn
