#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "relearn/data.hpp"
#include "relearn/language.hpp"
#include "relearn/probes.hpp"

using namespace relearn;

namespace {

namespace fs = std::filesystem;

void put_be_u32(std::ofstream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
               static_cast<char>(v >> 8), static_cast<char>(v)};
  os.write(b, 4);
}

struct IdxFixture {
  fs::path images;
  fs::path labels;

  IdxFixture(std::uint32_t img_magic, std::uint32_t n_img, std::uint32_t lab_magic,
             std::uint32_t n_lab, const std::vector<unsigned char>& label_bytes,
             std::uint32_t rows = 2, std::uint32_t cols = 2, bool truncate_pixels = false) {
    auto dir = fs::temp_directory_path();
    images = dir / "relearn_test_images.idx";
    labels = dir / "relearn_test_labels.idx";
    {
      std::ofstream os(images, std::ios::binary);
      put_be_u32(os, img_magic);
      put_be_u32(os, n_img);
      put_be_u32(os, rows);
      put_be_u32(os, cols);
      std::size_t n_pixels = static_cast<std::size_t>(n_img) * rows * cols;
      if (truncate_pixels && n_pixels > 0) n_pixels -= 1;
      for (std::size_t i = 0; i < n_pixels; ++i) {
        char c = static_cast<char>(i == 0 ? 255 : i % 7);
        os.write(&c, 1);
      }
    }
    {
      std::ofstream os(labels, std::ios::binary);
      put_be_u32(os, lab_magic);
      put_be_u32(os, n_lab);
      for (unsigned char c : label_bytes) os.write(reinterpret_cast<char*>(&c), 1);
    }
  }
  ~IdxFixture() {
    std::error_code ec;
    fs::remove(images, ec);
    fs::remove(labels, ec);
  }
};

}  // namespace

TEST_CASE("idx decoding") {
  SECTION("labels decode and pixel 255 becomes 1.0") {
    IdxFixture fx(0x803, 3, 0x801, 3, {7, 2, 1});
    LabeledDataset ds = load_idx(fx.images, fx.labels);
    REQUIRE(ds.size() == 3);
    REQUIRE(ds.labels[0] == 7);
    REQUIRE(ds.labels[1] == 2);
    REQUIRE(ds.labels[2] == 1);
    REQUIRE(ds.inputs(0, 0) == 1.0);
    REQUIRE(ds.inputs.cols() == 4);
  }
  SECTION("wrong magic values are distinct errors") {
    IdxFixture fx(0x804, 1, 0x801, 1, {0});
    REQUIRE_THROWS_WITH(load_idx(fx.images, fx.labels),
                        Catch::Matchers::ContainsSubstring("image magic"));
    IdxFixture fx2(0x803, 1, 0x802, 1, {0});
    REQUIRE_THROWS_WITH(load_idx(fx2.images, fx2.labels),
                        Catch::Matchers::ContainsSubstring("label magic"));
  }
  SECTION("count mismatch is an error") {
    IdxFixture fx(0x803, 2, 0x801, 3, {0, 1, 2});
    REQUIRE_THROWS_WITH(load_idx(fx.images, fx.labels),
                        Catch::Matchers::ContainsSubstring("count mismatch"));
  }
  SECTION("truncated pixel payload is an error") {
    IdxFixture fx(0x803, 2, 0x801, 2, {0, 1}, 2, 2, true);
    REQUIRE_THROWS_WITH(load_idx(fx.images, fx.labels),
                        Catch::Matchers::ContainsSubstring("truncated"));
  }
}

TEST_CASE("subsample") {
  Rng rng(71);
  auto mk = rng.stream("mk");
  LabeledDataset ds = synth_digits(600, mk);  // 6000 rows
  SECTION("fraction 1.0 is the identity") {
    auto s = rng.stream("sub");
    LabeledDataset out = subsample(ds, 1.0, s);
    REQUIRE(out.size() == ds.size());
    REQUIRE(out.inputs.isApprox(ds.inputs));
  }
  SECTION("fraction 0.1 of 6000 rows gives exactly 600 rows, order preserved") {
    auto s = rng.stream("sub");
    LabeledDataset out = subsample(ds, 0.1, s);
    REQUIRE(out.size() == 600);
    // order preserved: labels are non-decreasing because synth rows are class-major
    for (Eigen::Index i = 1; i < out.size(); ++i)
      REQUIRE(out.labels[i] >= out.labels[i - 1]);
  }
  SECTION("same seed twice gives the identical selection") {
    auto s1 = rng.stream("sub");
    auto s2 = rng.stream("sub");
    LabeledDataset a = subsample(ds, 0.25, s1);
    LabeledDataset b = subsample(ds, 0.25, s2);
    REQUIRE(a.labels == b.labels);
    REQUIRE(a.inputs.isApprox(b.inputs));
  }
  SECTION("fraction out of range") {
    auto s = rng.stream("sub");
    REQUIRE_THROWS_AS(subsample(ds, 0.0, s), std::invalid_argument);
    REQUIRE_THROWS_AS(subsample(ds, 1.5, s), std::invalid_argument);
  }
}

TEST_CASE("label noise injection") {
  Rng rng(73);
  auto mk = rng.stream("mk");
  LabeledDataset ds = synth_digits(60, mk);  // 600 rows
  SECTION("fraction 0 changes nothing and tags all zero") {
    auto s = rng.stream("noise");
    LabeledDataset out = inject_label_noise(ds, 0.0, s);
    REQUIRE(out.labels == ds.labels);
    REQUIRE(out.group.sum() == 0);
  }
  SECTION("fraction 0.1 on 600 rows tags exactly 60") {
    auto s = rng.stream("noise");
    LabeledDataset out = inject_label_noise(ds, 0.1, s);
    REQUIRE(out.group.sum() == 60);
    REQUIRE(out.inputs.isApprox(ds.inputs));  // inputs bit-identical
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (out.group[i] == 0) REQUIRE(out.labels[i] == ds.labels[i]);
  }
  SECTION("same seed twice gives identical tags and labels") {
    auto s1 = rng.stream("noise");
    auto s2 = rng.stream("noise");
    LabeledDataset a = inject_label_noise(ds, 0.2, s1);
    LabeledDataset b = inject_label_noise(ds, 0.2, s2);
    REQUIRE(a.labels == b.labels);
    REQUIRE(a.group == b.group);
  }
}

TEST_CASE("synthetic digits") {
  Rng rng(79);
  SECTION("row count and determinism") {
    auto s1 = rng.stream("synth");
    auto s2 = rng.stream("synth");
    LabeledDataset a = synth_digits(10, s1);
    REQUIRE(a.size() == 100);
    LabeledDataset b = synth_digits(10, s2);
    REQUIRE(a.inputs == b.inputs);
    REQUIRE(a.labels == b.labels);
  }
  SECTION("train and test splits share class structure") {
    auto s = rng.stream("synth");
    auto [train, test] = synth_digits_split(20, 10, s);
    REQUIRE(train.size() == 200);
    REQUIRE(test.size() == 100);
    // nearest-centroid classification of test points is perfect by construction
    std::vector<Vector> centroids(10, Vector::Zero(train.inputs.cols()));
    std::vector<int> counts(10, 0);
    for (Eigen::Index i = 0; i < train.size(); ++i) {
      centroids[static_cast<std::size_t>(train.labels[i])] += train.inputs.row(i).transpose();
      counts[static_cast<std::size_t>(train.labels[i])]++;
    }
    for (int c = 0; c < 10; ++c) centroids[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];
    for (Eigen::Index i = 0; i < test.size(); ++i) {
      int best = 0;
      double bd = 1e300;
      for (int c = 0; c < 10; ++c) {
        double d = (test.inputs.row(i).transpose() - centroids[static_cast<std::size_t>(c)]).norm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      REQUIRE(best == test.labels[i]);
    }
  }
  SECTION("a fresh mlp reaches 100% train accuracy within 50 epochs") {
    auto s = rng.stream("synth");
    LabeledDataset ds = synth_digits(10, s);
    auto init = rng.stream("init");
    MlpClassifier mlp({static_cast<int>(ds.inputs.cols()), 300, 100, 10}, init);
    OptimizerState opt = OptimizerState::sgd_momentum(mlp.store());
    auto order = rng.stream("order");
    double acc = 0.0;
    for (int epoch = 0; epoch < 50 && acc < 1.0; ++epoch) {
      std::vector<int> idx(static_cast<std::size_t>(ds.size()));
      std::iota(idx.begin(), idx.end(), 0);
      order.shuffle(idx);
      for (std::size_t b = 0; b < idx.size(); b += 50) {
        std::vector<int> batch(idx.begin() + static_cast<long>(b),
                               idx.begin() + static_cast<long>(std::min(b + 50, idx.size())));
        LabeledDataset view = select_rows(ds, batch);
        Tape t;
        Var loss = t.cross_entropy_mean(mlp.forward(t, view.inputs), view.labels);
        mlp.store().zero_grads();
        t.backward(loss);
        sgd_momentum_step(mlp.store(), opt, 0.1, 0.0, 0.0);
      }
      acc = mlp.accuracy(ds.inputs, ds.labels);
    }
    REQUIRE(acc == 1.0);
  }
}

TEST_CASE("compositional language construction") {
  LanguageTable t = example_compositional_language();
  SECTION("the canonical cell values") {
    REQUIRE(t.messages[static_cast<std::size_t>(t.space.object_id(0, 0))] ==
            std::vector<int>({0, 0}));
    REQUIRE(t.messages[static_cast<std::size_t>(t.space.object_id(3, 1))] ==
            std::vector<int>({3, 1}));
  }
  SECTION("all 32 messages are pairwise distinct") {
    for (std::size_t i = 0; i < t.messages.size(); ++i)
      for (std::size_t j = i + 1; j < t.messages.size(); ++j)
        REQUIRE(t.messages[i] != t.messages[j]);
  }
  SECTION("topographic similarity is exactly 1") {
    TopoResult r = language_toposim(t);
    REQUIRE_FALSE(r.degenerate);
    REQUIRE(r.rho == Catch::Approx(1.0).epsilon(1e-12));
  }
  SECTION("vocab too small is an error") {
    REQUIRE_THROWS_AS(
        make_compositional_language(ObjectSpace{8, 4}, {0, 1, 2, 3, 4, 5, 6, 7}, {0, 1, 2, 3}, 4),
        std::invalid_argument);
  }
  SECTION("non-injective maps are an error") {
    REQUIRE_THROWS_AS(
        make_compositional_language(ObjectSpace{4, 4}, {0, 1, 2, 2}, {0, 1, 2, 3}, 8),
        std::invalid_argument);
  }
}

TEST_CASE("permuted language") {
  LanguageTable comp = example_compositional_language();
  Rng rng(83);
  auto s = rng.stream("perm");
  LanguageTable perm = make_permuted_language(comp, s);
  SECTION("message multiset is identical") {
    auto sorted = [](std::vector<std::vector<int>> m) {
      std::sort(m.begin(), m.end());
      return m;
    };
    REQUIRE(sorted(comp.messages) == sorted(perm.messages));
  }
  SECTION("every object keeps a unique message") {
    for (std::size_t i = 0; i < perm.messages.size(); ++i)
      for (std::size_t j = i + 1; j < perm.messages.size(); ++j)
        REQUIRE(perm.messages[i] != perm.messages[j]);
  }
  SECTION("the canonical permuted realization") {
    LanguageTable fixed = example_permuted_language();
    REQUIRE(fixed.messages[static_cast<std::size_t>(fixed.space.object_id(0, 0))] ==
            std::vector<int>({7, 1}));
    // its message multiset matches the compositional one
    auto sorted = [](std::vector<std::vector<int>> m) {
      std::sort(m.begin(), m.end());
      return m;
    };
    REQUIRE(sorted(fixed.messages) == sorted(comp.messages));
  }
}

TEST_CASE("mixed language") {
  LanguageTable comp = example_compositional_language();
  Rng rng(89);
  auto p = rng.stream("perm");
  LanguageTable perm = make_permuted_language(comp, p);
  SECTION("group sizes are exactly half and half") {
    auto m = rng.stream("mix");
    LanguageTable mixed = make_mixed_language(comp, perm, m);
    int g0 = 0, g1 = 0;
    for (int g : mixed.group) (g == 0 ? g0 : g1)++;
    REQUIRE(g0 == 16);
    REQUIRE(g1 == 16);
    for (int o = 0; o < 32; ++o) {
      const auto& expect = mixed.group[static_cast<std::size_t>(o)] == 0
                               ? comp.messages[static_cast<std::size_t>(o)]
                               : perm.messages[static_cast<std::size_t>(o)];
      REQUIRE(mixed.messages[static_cast<std::size_t>(o)] == expect);
    }
  }
  SECTION("same seed twice gives the identical partition") {
    auto m1 = rng.stream("mix");
    auto m2 = rng.stream("mix");
    REQUIRE(make_mixed_language(comp, perm, m1).group ==
            make_mixed_language(comp, perm, m2).group);
  }
}

TEST_CASE("margin-based difficulty split") {
  Rng rng(97);
  auto init = rng.stream("init");
  MlpClassifier mlp({8, 6, 4}, init);
  auto data = rng.stream("data");
  Matrix x(100, 8);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = data.uniform();

  SECTION("fraction 0.1 on a batch of 100 tags exactly 10") {
    IntVector tags = split_by_margin(mlp, x, 0.1);
    REQUIRE(tags.sum() == 10);
  }
  SECTION("every tagged margin is <= every untagged margin") {
    IntVector tags = split_by_margin(mlp, x, 0.1);
    Vector margins = mlp.margins(x);
    double max_tagged = -1e300, min_untagged = 1e300;
    for (Eigen::Index i = 0; i < 100; ++i) {
      if (tags[i])
        max_tagged = std::max(max_tagged, margins[i]);
      else
        min_untagged = std::min(min_untagged, margins[i]);
    }
    REQUIRE(max_tagged <= min_untagged);
  }
  SECTION("duplicate margins break toward the lowest row index") {
    Matrix dup(4, 8);
    dup.row(0) = x.row(0);
    dup.row(1) = x.row(0);
    dup.row(2) = x.row(0);
    dup.row(3) = x.row(1);
    IntVector tags = split_by_margin(mlp, dup, 0.5);
    REQUIRE(tags.sum() == 2);
    Vector margins = mlp.margins(dup);
    // rows 0..2 share one margin; whichever group the duplicate belongs to,
    // the lower indices are tagged first
    if (margins[0] <= margins[3]) {
      REQUIRE(tags[0] == 1);
      REQUIRE(tags[1] == 1);
    }
  }
}
