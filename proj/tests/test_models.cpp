#include <catch2/catch_amalgamated.hpp>

#include "relearn/agents.hpp"
#include "relearn/language.hpp"
#include "relearn/lewis.hpp"
#include "relearn/models.hpp"
#include "support/finite_diff.hpp"

using namespace relearn;

TEST_CASE("mlp forward shapes and zero case") {
  Rng rng(41);
  auto init = rng.stream("init");
  MlpClassifier mlp({6, 4, 10}, init);

  SECTION("zero weights and biases give all-zero logits") {
    for (int e = 0; e < mlp.store().entry_count(); ++e) mlp.store().entry(e).values.setZero();
    Matrix x = Matrix::Random(3, 6);
    Matrix z = mlp.logits(x);
    REQUIRE(z.rows() == 3);
    REQUIRE(z.cols() == 10);
    REQUIRE(z.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("a batch of n rows yields n logit rows") {
    Matrix x = Matrix::Random(17, 6);
    REQUIRE(mlp.logits(x).rows() == 17);
  }
  SECTION("input width mismatch is an error") {
    Matrix x = Matrix::Random(2, 5);
    REQUIRE_THROWS_AS(mlp.logits(x), std::invalid_argument);
  }
}

TEST_CASE("toy mlp matches hand-computed affine+tanh composition") {
  Rng rng(43);
  auto init = rng.stream("init");
  MlpClassifier mlp({2, 2, 2}, init);
  // fix explicit parameters (column-major within each entry)
  Matrix w0(2, 2), w1(2, 2);
  w0 << 0.3, -0.5, 0.8, 0.1;
  w1 << 1.0, 0.25, -0.75, 0.5;
  Eigen::RowVector2d b0(0.1, -0.2), b1(0.0, 0.05);
  mlp.store().entry(mlp.store().find("fc0.weight")).values =
      Eigen::Map<const Vector>(w0.data(), 4);
  mlp.store().entry(mlp.store().find("fc0.bias")).values =
      Eigen::Map<const Vector>(b0.data(), 2);
  mlp.store().entry(mlp.store().find("fc1.weight")).values =
      Eigen::Map<const Vector>(w1.data(), 4);
  mlp.store().entry(mlp.store().find("fc1.bias")).values =
      Eigen::Map<const Vector>(b1.data(), 2);

  Matrix x(1, 2);
  x << 0.7, -1.2;
  Matrix h = ((x * w0).rowwise() + b0).array().tanh();
  Matrix expect = (h * w1).rowwise() + b1;
  Matrix got = mlp.logits(x);
  REQUIRE(got(0, 0) == Catch::Approx(expect(0, 0)).epsilon(1e-12));
  REQUIRE(got(0, 1) == Catch::Approx(expect(0, 1)).epsilon(1e-12));
}

TEST_CASE("output margin") {
  Eigen::RowVectorXd a(3);
  a << 2.0, 0.5, 0.5;
  REQUIRE(output_margin(a) == Catch::Approx(1.5));
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Constant(5, 1.25);
  REQUIRE(output_margin(b) == 0.0);
  Eigen::RowVectorXd c(4);
  c << 3.0, 3.0, 1.0, 0.0;
  REQUIRE(output_margin(c) == 0.0);
  Eigen::RowVectorXd d(1);
  d << 1.0;
  REQUIRE_THROWS_AS(output_margin(d), std::invalid_argument);

  // invariant under permutations
  Eigen::RowVectorXd e(4);
  e << 0.1, -2.0, 4.0, 1.5;
  std::vector<int> perm = {2, 0, 3, 1};
  Eigen::RowVectorXd p(4);
  for (int i = 0; i < 4; ++i) p[i] = e[perm[static_cast<std::size_t>(i)]];
  REQUIRE(output_margin(e) == Catch::Approx(output_margin(p)));
}

TEST_CASE("sender distributions and sampling") {
  Rng rng(47);
  auto init = rng.stream("init");
  AgentConfig cfg{8, 4, 8, 2, 100, 32};
  SenderAgent sender(cfg, init);

  SECTION("distribution rows each sum to 1") {
    Matrix d = sender.produce_distributions(11);
    REQUIRE(d.rows() == 2);
    for (int p = 0; p < 2; ++p) {
      REQUIRE(std::abs(d.row(p).sum() - 1.0) < 1e-9);
      for (int v = 0; v < 8; ++v) REQUIRE(d(p, v) >= 0.0);
    }
  }
  SECTION("sampling with the same seed repeats exactly") {
    Rng seeds(1234);
    auto s1 = seeds.stream("sample");
    auto s2 = seeds.stream("sample");
    for (int o = 0; o < 5; ++o)
      REQUIRE(sender.produce_sample(o, s1) == sender.produce_sample(o, s2));
  }
  SECTION("greedy decoding is a pure function") {
    auto m1 = sender.produce_greedy(7);
    auto m2 = sender.produce_greedy(7);
    REQUIRE(m1 == m2);
    for (int tok : m1) {
      REQUIRE(tok >= 0);
      REQUIRE(tok < 8);
    }
  }
  SECTION("attribute out of range is an error") {
    REQUIRE_THROWS_AS(sender.produce_greedy(32), std::invalid_argument);
  }
}

TEST_CASE("sender trained on the example table reproduces it") {
  Rng rng(53);
  auto init = rng.stream("init");
  LanguageTable table = example_compositional_language();
  AgentConfig cfg{table.space.r1, table.space.r2, table.vocab, 2, 100, 32};
  SenderAgent sender(cfg, init);
  OptimizerState opt = OptimizerState::adam(sender.store());
  double acc = 0.0;
  for (int it = 0; it < 6000; ++it) {
    sender_supervised_step(sender, opt, table, 0.001);
    if (it % 100 == 99) {
      acc = sender.language_accuracy(table);
      if (acc >= 1.0) break;
    }
  }
  REQUIRE(acc >= 1.0);
  // attribute-1 value 0 with attribute-2 value 0 maps to symbols (0, 0)
  std::vector<int> msg = sender.produce_greedy(table.space.object_id(0, 0));
  REQUIRE(msg == std::vector<int>({0, 0}));
  // spot-check two more cells of the table
  REQUIRE(sender.produce_greedy(table.space.object_id(5, 2)) == std::vector<int>({5, 2}));
  REQUIRE(sender.produce_greedy(table.space.object_id(7, 3)) == std::vector<int>({7, 3}));
}

TEST_CASE("receiver distributions") {
  Rng rng(59);
  auto init = rng.stream("init");
  AgentConfig cfg{4, 8, 8, 2, 100, 32};
  ReceiverAgent recv(cfg, init);

  SECTION("two identical candidates split the probability exactly") {
    Vector d = recv.select_distribution({1, 2}, {9, 9});
    REQUIRE(d[0] == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(d[1] == Catch::Approx(0.5).epsilon(1e-12));
  }
  SECTION("distribution sums to 1") {
    Vector d = recv.select_distribution({0, 7}, {0, 5, 11, 30});
    REQUIRE(std::abs(d.sum() - 1.0) < 1e-9);
  }
  SECTION("empty candidate list is an error") {
    REQUIRE_THROWS_AS(recv.select_distribution({0, 1}, {}), std::invalid_argument);
  }
}

TEST_CASE("gradient checks pass end-to-end through both agents") {
  Rng rng(61);
  auto si = rng.stream("init/sender");
  auto ri = rng.stream("init/receiver");
  AgentConfig cfg{4, 8, 8, 2, 24, 12};
  SenderAgent sender(cfg, si);
  ReceiverAgent recv(cfg, ri);

  IntVector objects(6);
  objects << 0, 5, 9, 14, 21, 31;
  std::vector<IntVector> tokens(2, IntVector(6));
  tokens[0] << 0, 1, 2, 3, 4, 5;
  tokens[1] << 7, 6, 5, 4, 3, 2;
  IntMatrix cands(6, 3);
  cands << 0, 1, 2, 5, 6, 7, 9, 2, 4, 14, 0, 1, 21, 30, 3, 31, 8, 16;
  IntVector slots(6);
  slots << 0, 0, 0, 0, 0, 0;

  SECTION("sender") {
    auto build = [&](Tape& t) {
      auto roll = sender.unroll(t, objects, &tokens, nullptr);
      Var loss = t.cross_entropy_mean(roll.logits[0], tokens[0]);
      return t.add(loss, t.cross_entropy_mean(roll.logits[1], tokens[1]));
    };
    auto loss_value = [&]() {
      Tape t;
      return t.value(build(t))(0, 0);
    };
    auto compute = [&]() {
      Tape t;
      Var loss = build(t);
      sender.store().zero_grads();
      t.backward(loss);
    };
    auto sample = rng.stream("sample/s");
    auto res =
        relearn::testing::gradient_check(sender.store(), 120, 1e-5, sample, loss_value, compute);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("receiver") {
    auto build = [&](Tape& t) {
      Var scores = recv.score(t, tokens, cands);
      return t.cross_entropy_mean(scores, slots);
    };
    auto loss_value = [&]() {
      Tape t;
      return t.value(build(t))(0, 0);
    };
    auto compute = [&]() {
      Tape t;
      Var loss = build(t);
      recv.store().zero_grads();
      t.backward(loss);
    };
    auto sample = rng.stream("sample/r");
    auto res =
        relearn::testing::gradient_check(recv.store(), 120, 1e-5, sample, loss_value, compute);
    REQUIRE(res.max_rel_err < 1e-6);
  }
}
