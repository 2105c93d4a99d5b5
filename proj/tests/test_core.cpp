#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "relearn/autodiff.hpp"
#include "relearn/models.hpp"
#include "relearn/optim.hpp"
#include "relearn/param_store.hpp"
#include "relearn/rng.hpp"
#include "support/finite_diff.hpp"

using namespace relearn;

TEST_CASE("rng streams are deterministic and independent") {
  Rng rng(123);
  auto a1 = rng.stream("alpha");
  auto a2 = rng.stream("alpha");
  auto b = rng.stream("beta");
  std::vector<double> xs, ys, zs;
  for (int i = 0; i < 64; ++i) {
    xs.push_back(a1.uniform());
    ys.push_back(a2.uniform());
    zs.push_back(b.uniform());
  }
  REQUIRE(xs == ys);
  REQUIRE(xs != zs);
  for (double x : xs) {
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
}

TEST_CASE("rng helpers behave") {
  Rng rng(7);
  auto s = rng.stream("s");
  auto idx = s.sample_indices(100, 10);
  REQUIRE(idx.size() == 10);
  REQUIRE(std::is_sorted(idx.begin(), idx.end()));
  for (std::size_t i = 1; i < idx.size(); ++i) REQUIRE(idx[i] != idx[i - 1]);
  // uniform_int stays in range
  for (int i = 0; i < 1000; ++i) REQUIRE(s.uniform_int(13) < 13);
  // categorical on a point mass
  double p[3] = {0.0, 1.0, 0.0};
  for (int i = 0; i < 20; ++i) REQUIRE(s.categorical(p, 3) == 1);
  // normals have roughly unit scale
  double acc = 0.0, acc2 = 0.0;
  int n = 20000;
  for (int i = 0; i < n; ++i) {
    double z = s.normal();
    acc += z;
    acc2 += z * z;
  }
  REQUIRE(std::abs(acc / n) < 0.05);
  REQUIRE(std::abs(acc2 / n - 1.0) < 0.05);
}

TEST_CASE("parameter store validates layer indexing") {
  Rng rng(5);
  auto s = rng.stream("init");
  ParameterStore store;
  store.add("a", 0, 4, InitSpec::fan_in(4), s);
  store.add("b", 2, 4, InitSpec::fan_in(4), s);  // gap: layer 1 missing
  REQUIRE_THROWS_AS(store.finalize(), std::logic_error);

  ParameterStore ok;
  ok.add("a", 0, 4, InitSpec::fan_in(4), s);
  ok.add("a.bias", 0, 2, InitSpec::constant(0.0), s);
  ok.add("b", 1, 4, InitSpec::fan_in(4), s);
  REQUIRE_NOTHROW(ok.finalize());
  REQUIRE(ok.layer_count() == 2);
  REQUIRE(ok.total_size() == 10);
}

TEST_CASE("snapshot restore follows the selection mask") {
  Rng rng(11);
  auto s = rng.stream("init");
  ParameterStore store;
  store.add("w", 0, 16, InitSpec::uniform(-1, 1), s);
  store.finalize();
  Snapshot snap = take_snapshot(store, "init");

  // drift the values
  for (Eigen::Index i = 0; i < 16; ++i) store.entry(0).values[i] += 1.0 + i;

  SECTION("all-ones selection restores bit-identically") {
    restore(store, snap);
    for (Eigen::Index i = 0; i < 16; ++i)
      REQUIRE(store.entry(0).values[i] == snap.values[0][i]);
  }
  SECTION("all-zeros selection leaves the store unchanged") {
    Vector before = store.entry(0).values;
    restore(store, snap, Mask::zeros_like(store));
    for (Eigen::Index i = 0; i < 16; ++i) REQUIRE(store.entry(0).values[i] == before[i]);
  }
  SECTION("mixed selection equals elementwise select") {
    Vector current = store.entry(0).values;
    Mask sel = Mask::zeros_like(store);
    auto pick = rng.stream("mask");
    for (auto& bit : sel.blocks[0]) bit = pick.uniform() < 0.5 ? 1 : 0;
    restore(store, snap, sel);
    for (Eigen::Index i = 0; i < 16; ++i) {
      double expect = sel.blocks[0][static_cast<std::size_t>(i)] ? snap.values[0][i] : current[i];
      REQUIRE(store.entry(0).values[i] == expect);
    }
  }
}

TEST_CASE("snapshot file round trip is bit exact") {
  Rng rng(13);
  auto s = rng.stream("init");
  ParameterStore store;
  store.add("layer0.w", 0, 33, InitSpec::uniform(-2, 2), s);
  store.add("layer1.w", 1, 7, InitSpec::uniform(-2, 2), s);
  store.finalize();
  Snapshot snap = take_snapshot(store, "t");
  auto path = std::filesystem::temp_directory_path() / "relearn_test.snap";
  save_snapshot(snap, path);
  Snapshot back = load_snapshot(path);
  REQUIRE(back.names == snap.names);
  REQUIRE(back.values.size() == snap.values.size());
  for (std::size_t i = 0; i < snap.values.size(); ++i)
    for (Eigen::Index j = 0; j < snap.values[i].size(); ++j)
      REQUIRE(back.values[i][j] == snap.values[i][j]);
  std::filesystem::remove(path);

  // header is the fixed 8-byte magic
  save_snapshot(snap, path);
  std::ifstream is(path, std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  REQUIRE(std::string(magic, 8) == "FRSNAP01");
  std::filesystem::remove(path);
}

TEST_CASE("backward computes the chain rule on a linear map") {
  Rng rng(3);
  auto s = rng.stream("init");
  ParameterStore store;
  store.add("w", 0, 2, InitSpec::constant(0.0), s);
  store.entry(0).values << 1.0, 2.0;
  store.finalize();
  Tape t;
  Var w = t.param(store, 0, 1, 2);
  Matrix x(2, 1);
  x << 3.0, 4.0;
  Var y = t.matmul(w, t.constant(x));  // 1x1
  store.zero_grads();
  t.backward(y);
  REQUIRE(store.entry(0).grads[0] == Catch::Approx(3.0));
  REQUIRE(store.entry(0).grads[1] == Catch::Approx(4.0));
}

TEST_CASE("constant loss leaves all gradients zero") {
  Rng rng(3);
  auto s = rng.stream("init");
  ParameterStore store;
  store.add("w", 0, 8, InitSpec::uniform(-1, 1), s);
  store.finalize();
  Tape t;
  (void)t.param(store, 0, 2, 4);  // participates in no computation
  Var loss = t.constant(Matrix::Constant(1, 1, 5.0));
  store.zero_grads();
  t.backward(loss);
  for (Eigen::Index i = 0; i < 8; ++i) REQUIRE(store.entry(0).grads[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape t;
  Var v = t.constant(Matrix::Zero(2, 2));
  REQUIRE_THROWS_AS(t.backward(v), std::invalid_argument);
}

TEST_CASE("mlp gradients match central finite differences") {
  Rng rng(17);
  auto init = rng.stream("init");
  MlpClassifier mlp({784, 300, 100, 10}, init);
  auto data = rng.stream("data");
  Matrix x(8, 784);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = data.uniform();
  IntVector y(8);
  for (int i = 0; i < 8; ++i) y[i] = static_cast<int>(data.uniform_int(10));

  auto loss_value = [&]() {
    Tape t;
    return t.value(t.cross_entropy_mean(mlp.forward(t, x), y))(0, 0);
  };
  auto compute = [&]() {
    Tape t;
    Var loss = t.cross_entropy_mean(mlp.forward(t, x), y);
    mlp.store().zero_grads();
    t.backward(loss);
  };
  auto sample = rng.stream("sample");
  auto res = relearn::testing::gradient_check(mlp.store(), 200, 1e-4, sample, loss_value, compute);
  REQUIRE(res.checked == 200);
  REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("elementwise and reduction ops differentiate correctly") {
  Rng rng(23);
  auto init = rng.stream("init");
  ParameterStore store;
  store.add("a", 0, 12, InitSpec::uniform(-1.5, 1.5), init);
  store.add("b", 0, 12, InitSpec::uniform(-1.5, 1.5), init);
  store.finalize();

  auto build = [&](Tape& t) {
    Var a = t.param(store, 0, 3, 4);
    Var b = t.param(store, 1, 3, 4);
    Var h = t.mul(t.tanh(a), t.sigmoid(b));
    h = t.add(h, t.relu(t.sub(a, b)));
    h = t.add(h, t.scale(t.softmax_rows(a), 0.7));
    return t.mean_all(h);
  };
  auto loss_value = [&]() {
    Tape t;
    return t.value(build(t))(0, 0);
  };
  auto compute = [&]() {
    Tape t;
    Var loss = build(t);
    store.zero_grads();
    t.backward(loss);
  };
  auto sample = rng.stream("sample");
  auto res = relearn::testing::gradient_check(store, 24, 1e-5, sample, loss_value, compute);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("gather, entropy and embedding ops differentiate correctly") {
  Rng rng(29);
  auto init = rng.stream("init");
  ParameterStore store;
  store.add("logits_src", 0, 20, InitSpec::uniform(-2, 2), init);
  store.add("table", 0, 15, InitSpec::uniform(-1, 1), init);
  store.finalize();
  IntVector picks(4);
  picks << 0, 3, 2, 4;
  IntVector rows(4);
  rows << 2, 0, 1, 0;

  auto build = [&](Tape& t) {
    Var z = t.param(store, 0, 4, 5);
    Var table = t.param(store, 1, 3, 5);
    Var lp = t.gather_log_prob(z, picks);
    Var h = t.entropy_rows(z);
    Var emb = t.embedding(table, rows);
    Var s = t.add(t.sum_all(lp), t.sum_all(h));
    return t.add(s, t.mean_all(t.mul(emb, emb)));
  };
  auto loss_value = [&]() {
    Tape t;
    return t.value(build(t))(0, 0);
  };
  auto compute = [&]() {
    Tape t;
    Var loss = build(t);
    store.zero_grads();
    t.backward(loss);
  };
  auto sample = rng.stream("sample");
  auto res = relearn::testing::gradient_check(store, 35, 1e-5, sample, loss_value, compute);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("sgd momentum matches the stated recurrence") {
  Rng rng(1);
  auto s = rng.stream("init");

  SECTION("plain step") {
    ParameterStore store;
    store.add("p", 0, 1, InitSpec::constant(0.0), s);
    store.finalize();
    store.entry(0).grads[0] = 1.0;
    OptimizerState opt = OptimizerState::sgd_momentum(store);
    sgd_momentum_step(store, opt, 0.1, 0.0, 0.0);
    REQUIRE(store.entry(0).values[0] == Catch::Approx(-0.1));
  }
  SECTION("zero gradient leaves parameters bit-identical") {
    ParameterStore store;
    store.add("p", 0, 4, InitSpec::uniform(-1, 1), s);
    store.finalize();
    Vector before = store.entry(0).values;
    OptimizerState opt = OptimizerState::sgd_momentum(store);
    sgd_momentum_step(store, opt, 0.5, 0.9, 0.0);
    for (Eigen::Index i = 0; i < 4; ++i) REQUIRE(store.entry(0).values[i] == before[i]);
  }
  SECTION("two momentum steps unroll to -2.9") {
    // v1 = 1, p1 = -1; v2 = 0.9 + 1 = 1.9, p2 = -2.9
    ParameterStore store;
    store.add("p", 0, 1, InitSpec::constant(0.0), s);
    store.finalize();
    OptimizerState opt = OptimizerState::sgd_momentum(store);
    for (int step = 0; step < 2; ++step) {
      store.entry(0).grads[0] = 1.0;
      sgd_momentum_step(store, opt, 1.0, 0.9, 0.0);
    }
    REQUIRE(store.entry(0).values[0] == Catch::Approx(-2.9));
  }
  SECTION("lr must be positive") {
    ParameterStore store;
    store.add("p", 0, 1, InitSpec::constant(0.0), s);
    store.finalize();
    OptimizerState opt = OptimizerState::sgd_momentum(store);
    REQUIRE_THROWS_AS(sgd_momentum_step(store, opt, 0.0), std::invalid_argument);
  }
}

TEST_CASE("adam matches a hand-unrolled recurrence") {
  Rng rng(2);
  auto s = rng.stream("init");

  SECTION("first step moves by about lr against the gradient sign") {
    ParameterStore store;
    store.add("p", 0, 2, InitSpec::constant(0.0), s);
    store.finalize();
    store.entry(0).grads << 3.0, -0.25;
    OptimizerState opt = OptimizerState::adam(store);
    adam_step(store, opt, 0.001, 0.9, 0.999, 1e-12);
    REQUIRE(store.entry(0).values[0] == Catch::Approx(-0.001).epsilon(1e-6));
    REQUIRE(store.entry(0).values[1] == Catch::Approx(0.001).epsilon(1e-6));
  }
  SECTION("zero gradient with zero moments leaves parameters unchanged") {
    ParameterStore store;
    store.add("p", 0, 3, InitSpec::uniform(-1, 1), s);
    store.finalize();
    Vector before = store.entry(0).values;
    OptimizerState opt = OptimizerState::adam(store);
    adam_step(store, opt, 0.001);
    for (Eigen::Index i = 0; i < 3; ++i) REQUIRE(store.entry(0).values[i] == before[i]);
  }
  SECTION("two constant-gradient steps match the direct recurrence") {
    ParameterStore store;
    store.add("p", 0, 1, InitSpec::constant(0.0), s);
    store.finalize();
    OptimizerState opt = OptimizerState::adam(store);
    const double g = 2.0, lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double m = 0.0, v = 0.0, p = 0.0;
    for (int step = 1; step <= 2; ++step) {
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      double mhat = m / (1 - std::pow(b1, step));
      double vhat = v / (1 - std::pow(b2, step));
      p -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    for (int step = 0; step < 2; ++step) {
      store.entry(0).grads[0] = g;
      adam_step(store, opt, lr, b1, b2, eps);
    }
    REQUIRE(store.entry(0).values[0] == Catch::Approx(p).epsilon(1e-12));
  }
  SECTION("betas outside [0,1) are rejected") {
    ParameterStore store;
    store.add("p", 0, 1, InitSpec::constant(0.0), s);
    store.finalize();
    OptimizerState opt = OptimizerState::adam(store);
    REQUIRE_THROWS_AS(adam_step(store, opt, 0.001, 1.0, 0.999), std::invalid_argument);
    REQUIRE_THROWS_AS(adam_step(store, opt, 0.001, 0.9, -0.1), std::invalid_argument);
  }
}

TEST_CASE("cosine schedule endpoints") {
  REQUIRE(cosine_lr(0, 100, 0.3) == Catch::Approx(0.3));
  REQUIRE(cosine_lr(100, 100, 0.3) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(cosine_lr(50, 100, 0.3) == Catch::Approx(0.15));
  REQUIRE_THROWS_AS(cosine_lr(0, 0, 0.3), std::invalid_argument);
}

TEST_CASE("frozen elements stay bit-identical through optimizer steps") {
  Rng rng(31);
  auto init = rng.stream("init");
  MlpClassifier mlp({12, 8, 4}, init);
  auto data = rng.stream("data");
  Matrix x(16, 12);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = data.uniform();
  IntVector y(16);
  for (int i = 0; i < 16; ++i) y[i] = static_cast<int>(data.uniform_int(4));

  SECTION("freeze all: 100 steps leave the store bit-identical") {
    set_trainable(mlp.store(), Mask::ones_like(mlp.store()), false);
    std::uint64_t before = mlp.store().value_checksum();
    OptimizerState opt = OptimizerState::sgd_momentum(mlp.store());
    for (int i = 0; i < 100; ++i) {
      Tape t;
      Var loss = t.cross_entropy_mean(mlp.forward(t, x), y);
      mlp.store().zero_grads();
      t.backward(loss);
      sgd_momentum_step(mlp.store(), opt, 0.1);
    }
    REQUIRE(mlp.store().value_checksum() == before);
  }

  SECTION("freeze layers >= 1: only layer 0 changes") {
    Mask later = Mask::zeros_like(mlp.store());
    for (int e = 0; e < mlp.store().entry_count(); ++e)
      if (mlp.store().entry(e).layer_index >= 1)
        std::fill(later.blocks[static_cast<std::size_t>(e)].begin(),
                  later.blocks[static_cast<std::size_t>(e)].end(), std::uint8_t{1});
    set_trainable(mlp.store(), later, false);
    std::vector<Vector> before;
    for (int e = 0; e < mlp.store().entry_count(); ++e)
      before.push_back(mlp.store().entry(e).values);
    OptimizerState opt = OptimizerState::sgd_momentum(mlp.store());
    for (int i = 0; i < 10; ++i) {
      Tape t;
      Var loss = t.cross_entropy_mean(mlp.forward(t, x), y);
      mlp.store().zero_grads();
      t.backward(loss);
      sgd_momentum_step(mlp.store(), opt, 0.1);
    }
    for (int e = 0; e < mlp.store().entry_count(); ++e) {
      const auto& entry = mlp.store().entry(e);
      bool changed = false;
      for (Eigen::Index i = 0; i < entry.size(); ++i)
        changed = changed || entry.values[i] != before[static_cast<std::size_t>(e)][i];
      if (entry.layer_index >= 1)
        REQUIRE_FALSE(changed);
      else
        REQUIRE(changed);
    }
  }

  SECTION("freeze none matches the normal trajectory") {
    MlpClassifier twin = mlp;
    OptimizerState o1 = OptimizerState::sgd_momentum(mlp.store());
    OptimizerState o2 = OptimizerState::sgd_momentum(twin.store());
    for (int i = 0; i < 5; ++i) {
      for (auto* m : {&mlp, &twin}) {
        Tape t;
        Var loss = t.cross_entropy_mean(m->forward(t, x), y);
        m->store().zero_grads();
        t.backward(loss);
      }
      sgd_momentum_step(mlp.store(), o1, 0.1);
      sgd_momentum_step(twin.store(), o2, 0.1);
    }
    REQUIRE(mlp.store().value_checksum() == twin.store().value_checksum());
  }
}

TEST_CASE("identical seeds give bit-identical training trajectories") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    auto init = rng.stream("init");
    MlpClassifier mlp({10, 6, 3}, init);
    auto data = rng.stream("data");
    Matrix x(32, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = data.uniform();
    IntVector y(32);
    for (int i = 0; i < 32; ++i) y[i] = static_cast<int>(data.uniform_int(3));
    OptimizerState opt = OptimizerState::sgd_momentum(mlp.store());
    for (int i = 0; i < 20; ++i) {
      Tape t;
      Var loss = t.cross_entropy_mean(mlp.forward(t, x), y);
      mlp.store().zero_grads();
      t.backward(loss);
      sgd_momentum_step(mlp.store(), opt, 0.1, 0.9, 1e-4);
    }
    return mlp.store().value_checksum();
  };
  REQUIRE(run(99) == run(99));
  REQUIRE(run(99) != run(100));
}
