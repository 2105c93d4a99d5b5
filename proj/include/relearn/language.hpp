#pragma once

// Attribute-pair object spaces and the candidate languages used by the
// referential-game experiments: compositional tables, their random
// permutations, and half/half mixtures.

#include <array>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "relearn/rng.hpp"

namespace relearn {

struct ObjectSpace {
  int r1 = 4;
  int r2 = 8;

  int size() const { return r1 * r2; }
  int object_id(int a1, int a2) const {
    if (a1 < 0 || a1 >= r1 || a2 < 0 || a2 >= r2)
      throw std::invalid_argument("ObjectSpace: attribute out of range");
    return a1 * r2 + a2;
  }
  std::array<int, 2> attributes(int id) const {
    if (id < 0 || id >= size()) throw std::invalid_argument("ObjectSpace: object id out of range");
    return {id / r2, id % r2};
  }
};

// Total mapping from objects to fixed-length symbol messages.
struct LanguageTable {
  enum class Kind { Compositional, Permuted, Mixed };
  Kind kind = Kind::Compositional;
  ObjectSpace space;
  int vocab = 8;
  std::vector<std::vector<int>> messages;  // indexed by object id
  std::vector<int> group;                  // per object; empty unless Mixed

  int message_length() const {
    return messages.empty() ? 0 : static_cast<int>(messages.front().size());
  }
};

// Position 1 carries attribute 1 through symbols1, position 2 carries
// attribute 2 through symbols2; both maps must be injective into the vocab.
inline LanguageTable make_compositional_language(const ObjectSpace& space,
                                                 const std::vector<int>& symbols1,
                                                 const std::vector<int>& symbols2,
                                                 int vocab = 8) {
  if (vocab < std::max(space.r1, space.r2))
    throw std::invalid_argument("make_compositional_language: vocab too small");
  if (static_cast<int>(symbols1.size()) != space.r1 ||
      static_cast<int>(symbols2.size()) != space.r2)
    throw std::invalid_argument("make_compositional_language: symbol map size mismatch");
  auto check_injective = [vocab](const std::vector<int>& syms) {
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (syms[i] < 0 || syms[i] >= vocab)
        throw std::invalid_argument("make_compositional_language: symbol out of vocab");
      for (std::size_t j = 0; j < i; ++j)
        if (syms[i] == syms[j])
          throw std::invalid_argument("make_compositional_language: symbol map not injective");
    }
  };
  check_injective(symbols1);
  check_injective(symbols2);
  LanguageTable t;
  t.kind = LanguageTable::Kind::Compositional;
  t.space = space;
  t.vocab = vocab;
  t.messages.resize(static_cast<std::size_t>(space.size()));
  for (int a1 = 0; a1 < space.r1; ++a1)
    for (int a2 = 0; a2 < space.r2; ++a2)
      t.messages[static_cast<std::size_t>(space.object_id(a1, a2))] = {
          symbols1[static_cast<std::size_t>(a1)], symbols2[static_cast<std::size_t>(a2)]};
  return t;
}

// Uniformly permutes the object -> message assignment; the message multiset
// is preserved and every object keeps a unique message.
inline LanguageTable make_permuted_language(const LanguageTable& comp, RngStream& rng) {
  if (comp.kind != LanguageTable::Kind::Compositional)
    throw std::invalid_argument("make_permuted_language: input must be compositional");
  std::vector<int> perm(comp.messages.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  rng.shuffle(perm);
  LanguageTable t = comp;
  t.kind = LanguageTable::Kind::Permuted;
  for (std::size_t i = 0; i < perm.size(); ++i)
    t.messages[i] = comp.messages[static_cast<std::size_t>(perm[i])];
  return t;
}

// Half the objects (chosen uniformly) keep comp's messages (group 0), the
// other half take perm's messages (group 1).
inline LanguageTable make_mixed_language(const LanguageTable& comp,
                                         const LanguageTable& perm, RngStream& rng) {
  if (comp.space.r1 != perm.space.r1 || comp.space.r2 != perm.space.r2)
    throw std::invalid_argument("make_mixed_language: object spaces differ");
  int n = comp.space.size();
  if (n % 2 != 0) throw std::invalid_argument("make_mixed_language: odd object count");
  std::vector<int> comp_objs = rng.sample_indices(n, n / 2);
  LanguageTable t = comp;
  t.kind = LanguageTable::Kind::Mixed;
  t.group.assign(static_cast<std::size_t>(n), 1);
  t.messages = perm.messages;
  for (int o : comp_objs) {
    t.messages[static_cast<std::size_t>(o)] = comp.messages[static_cast<std::size_t>(o)];
    t.group[static_cast<std::size_t>(o)] = 0;
  }
  return t;
}

// Canonical 8x4 example language: attribute 1 has 8 values mapped one-to-one
// onto the full vocabulary at position 1, attribute 2 has 4 values mapped
// onto symbols 0..3 at position 2.
inline LanguageTable example_compositional_language() {
  ObjectSpace space{8, 4};
  std::vector<int> s1 = {0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> s2 = {0, 1, 2, 3};
  return make_compositional_language(space, s1, s2, 8);
}

// One fixed realization of a permutation of the canonical language.
inline LanguageTable example_permuted_language() {
  LanguageTable t = example_compositional_language();
  t.kind = LanguageTable::Kind::Permuted;
  // rows: attribute-1 value 0..7, columns: attribute-2 value 0..3
  static constexpr int kMessages[8][4][2] = {
      {{7, 1}, {2, 2}, {7, 3}, {4, 0}},
      {{2, 0}, {1, 2}, {1, 1}, {4, 1}},
      {{1, 0}, {7, 0}, {0, 2}, {6, 2}},
      {{4, 2}, {3, 2}, {0, 1}, {6, 1}},
      {{0, 0}, {6, 0}, {0, 3}, {3, 3}},
      {{5, 3}, {4, 3}, {1, 3}, {5, 1}},
      {{5, 2}, {3, 0}, {5, 0}, {7, 2}},
      {{3, 1}, {6, 3}, {2, 1}, {2, 3}},
  };
  for (int a1 = 0; a1 < 8; ++a1)
    for (int a2 = 0; a2 < 4; ++a2)
      t.messages[static_cast<std::size_t>(t.space.object_id(a1, a2))] = {
          kMessages[a1][a2][0], kMessages[a1][a2][1]};
  return t;
}

inline void write_language_csv(const LanguageTable& t, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_language_csv: cannot open '" + path.string() + "'");
  os << "attr1,attr2,symbol1,symbol2,group\n";
  for (int id = 0; id < t.space.size(); ++id) {
    auto [a1, a2] = t.space.attributes(id);
    const auto& m = t.messages[static_cast<std::size_t>(id)];
    int g = t.group.empty() ? 0 : t.group[static_cast<std::size_t>(id)];
    os << a1 << ',' << a2 << ',' << m[0] << ',' << m[1] << ',' << g << '\n';
  }
}

}  // namespace relearn
