#include <cmath>
#include <numeric>
#include <vector>

#include "../support/gradcheck.hpp"
#include "../support/layer_gradchecks.hpp"
#include "cfx/adam.hpp"
#include "cfx/error.hpp"
#include "cfx/ops.hpp"
#include "doctest.h"

using namespace cfx;
using namespace cfx::testing;
using ops::Padding;

namespace {

Var conv_stack_decoder(const Var& z, Rng& rng) {
  auto k = [&](Shape s) { return constant(random_tensor(std::move(s), rng)); };
  Var h = ops::relu(ops::conv_transpose2d(z, k({2, 2, 64, 64}), Var(), 2));
  h = ops::relu(ops::conv_transpose2d(h, k({2, 2, 32, 64}), Var(), 2));
  return ops::sigmoid(ops::conv_transpose2d(h, k({2, 2, 1, 32}), Var(), 1));
}

}  // namespace

TEST_CASE("conv2d shapes and hand values") {
  Rng rng(1);
  Var x = constant(random_tensor({1, 28, 28, 1}, rng));
  Var y = ops::conv2d(x, constant(random_tensor({2, 2, 1, 32}, rng)), constant(Tensor({32})), 1, Padding::Same);
  CHECK(y.shape() == Shape{1, 28, 28, 32});

  Var zero = ops::conv2d(constant(Tensor({2, 5, 5, 3})), constant(random_tensor({2, 2, 3, 4}, rng)),
                         constant(Tensor({4})), 1, Padding::Same);
  for (float v : zero.value().data()) CHECK(v == 0.0f);

  Var ones = ops::conv2d(constant(Tensor({1, 4, 4, 1}, 1.0f)), constant(Tensor({2, 2, 1, 1}, 1.0f)), Var(), 1,
                         Padding::Valid);
  REQUIRE(ones.shape() == Shape{1, 3, 3, 1});
  for (float v : ones.value().data()) CHECK(v == 4.0f);

  CHECK(ops::conv2d(constant(Tensor({1, 7, 5, 1})), constant(Tensor({2, 2, 1, 1})), Var(), 2, Padding::Same).shape() ==
        Shape{1, 4, 3, 1});
  CHECK(ops::conv2d(constant(Tensor({1, 7, 5, 1})), constant(Tensor({2, 2, 1, 1})), Var(), 2, Padding::Valid).shape() ==
        Shape{1, 3, 2, 1});
}

TEST_CASE("same padding puts the extra row and column at the bottom right") {
  // 3x3 ramp, 2x2 kernel picking the top-left tap: output (i,j) == x(i,j).
  Tensor x = Tensor::from({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k = Tensor::from({2, 2, 1, 1}, {1, 0, 0, 0});
  Var y = ops::conv2d(constant(x), constant(k), Var(), 1, Padding::Same);
  CHECK(y.value() == x);
}

TEST_CASE("conv2d rejects mismatched channels and oversized kernels") {
  CHECK_THROWS_AS(ops::conv2d(constant(Tensor({1, 4, 4, 2})), constant(Tensor({2, 2, 1, 1})), Var(), 1, Padding::Same),
                  DimensionError);
  CHECK_THROWS_AS(ops::conv2d(constant(Tensor({1, 2, 2, 1})), constant(Tensor({3, 3, 1, 1})), Var(), 1, Padding::Valid),
                  DimensionError);
  CHECK_THROWS_AS(ops::conv2d(constant(Tensor({1, 4, 4, 1})), constant(Tensor({2, 2, 1, 3})), constant(Tensor({2})), 1,
                              Padding::Same),
                  DimensionError);
}

TEST_CASE("maxpool2d values, shape and gradient routing") {
  CHECK(ops::maxpool2d(constant(Tensor({1, 28, 28, 3}))).shape() == Shape{1, 14, 14, 3});
  Var c = ops::maxpool2d(constant(Tensor({2, 4, 6, 1}, 0.7f)));
  for (float v : c.value().data()) CHECK(v == 0.7f);

  Var x = variable(Tensor::from({1, 2, 2, 1}, {1, 2, 3, 4}));
  Var y = ops::maxpool2d(x);
  CHECK(y.value().item() == 4.0f);
  backward(ops::sum(y));
  CHECK(x.grad() == Tensor::from({1, 2, 2, 1}, {0, 0, 0, 1}));

  Var tie = variable(Tensor({1, 2, 2, 1}, 5.0f));
  backward(ops::sum(ops::maxpool2d(tie)));
  CHECK(tie.grad() == Tensor::from({1, 2, 2, 1}, {1, 0, 0, 0}));

  CHECK_THROWS_AS(ops::maxpool2d(constant(Tensor({1, 3, 4, 1}))), DimensionError);
}

TEST_CASE("conv_transpose2d shapes and hand values") {
  Rng rng(2);
  Var out = conv_stack_decoder(constant(random_tensor({1, 7, 7, 64}, rng)), rng);
  CHECK(out.shape() == Shape{1, 28, 28, 1});

  Var zero = ops::conv_transpose2d(constant(Tensor({1, 3, 3, 2})), constant(random_tensor({2, 2, 4, 2}, rng)), Var(), 2);
  CHECK(zero.shape() == Shape{1, 6, 6, 4});
  for (float v : zero.value().data()) CHECK(v == 0.0f);

  Var block = ops::conv_transpose2d(constant(Tensor({1, 1, 1, 1}, 2.5f)), constant(Tensor({2, 2, 1, 1}, 1.0f)), Var(), 2);
  REQUIRE(block.shape() == Shape{1, 2, 2, 1});
  for (float v : block.value().data()) CHECK(v == 2.5f);

  CHECK_THROWS_AS(ops::conv_transpose2d(constant(Tensor({1, 2, 2, 1})), constant(Tensor({2, 2, 1, 1})), Var(), 3),
                  ConfigError);
}

TEST_CASE("dense hand values and bottleneck shape") {
  Var y = ops::dense(constant(Tensor::from({1, 2}, {1, 2})), constant(Tensor::from({2, 2}, {1, 0, 0, 1})),
                     constant(Tensor::from({2}, {1, 1})));
  CHECK(y.value() == Tensor::from({1, 2}, {2, 3}));

  Rng rng(3);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor eye({5, 5});
  for (int i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0f;
  CHECK(ops::dense(constant(x), constant(eye), constant(Tensor({5}))).value() == x);

  Var flat = ops::flatten(constant(Tensor({2, 7, 7, 64})));
  CHECK(flat.shape() == Shape{2, 3136});
  CHECK(ops::dense(flat, constant(Tensor({3136, 16})), constant(Tensor({16}))).shape() == Shape{2, 16});
  CHECK_THROWS_AS(ops::dense(constant(Tensor({1, 3})), constant(Tensor({4, 2})), Var()), DimensionError);
}

TEST_CASE("activations") {
  Var r = ops::relu(constant(Tensor::from({2}, {-3.5f, 2.0f})));
  CHECK(r.value() == Tensor::from({2}, {0.0f, 2.0f}));

  Var s = ops::softmax(constant(Tensor({1, 10})));
  for (float v : s.value().data()) CHECK(v == doctest::Approx(0.1f).epsilon(1e-6));

  Var t = ops::softmax(constant(Tensor::from({1, 2}, {std::log(2.0f), 0.0f})));
  CHECK(t.value()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  CHECK(t.value()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  Var sg = ops::sigmoid(constant(Tensor::from({3}, {-30.0f, 0.0f, 30.0f})));
  CHECK(sg.value()[1] == 0.5f);
  CHECK(sg.value()[0] >= 0.0f);
  CHECK(sg.value()[2] <= 1.0f);
}

TEST_CASE("softmax rows are positive and sum to one") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::int64_t rows = 1 + rng.below(5), k = 2 + rng.below(15);
    Var p = ops::softmax(constant(random_tensor({rows, k}, rng, -20.0f, 20.0f)));
    for (std::int64_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::int64_t j = 0; j < k; ++j) {
        CHECK(p.value()[r * k + j] > 0.0f);
        s += p.value()[r * k + j];
      }
      CHECK(std::abs(s - 1.0) <= 1e-5);
    }
  }
  Var big = ops::softmax(constant(Tensor::from({1, 3}, {1000.0f, 999.0f, -1000.0f})));
  CHECK(big.value().all_finite());
}

TEST_CASE("dropout identity cases and statistics") {
  Rng rng(4);
  Tensor x = random_tensor({4, 9}, rng);
  CHECK(ops::dropout(constant(x), 0.6f, false, rng).value() == x);
  CHECK(ops::dropout(constant(x), 0.0f, true, rng).value() == x);
  CHECK_THROWS_AS(ops::dropout(constant(x), 1.0f, true, rng), ConfigError);
  CHECK_THROWS_AS(ops::dropout(constant(x), -0.1f, true, rng), ConfigError);

  Rng stream(2024);
  Var y = ops::dropout(constant(Tensor({1000000}, 1.0f)), 0.3f, true, stream);
  double sum = 0.0;
  std::int64_t zeros = 0;
  for (float v : y.value().data()) {
    sum += v;
    zeros += v == 0.0f;
  }
  CHECK(std::abs(sum / 1e6 - 1.0) <= 0.01);
  CHECK(std::abs(double(zeros) / 1e6 - 0.3) <= 0.01 * 0.3);
}

TEST_CASE("loss hand values") {
  Tensor a = Tensor::from({2}, {1, -2});
  CHECK(ops::l1(constant(a)).value().item() == 3.0f);
  CHECK(ops::l2_sq(constant(a), constant(Tensor({2}))).value().item() == 5.0f);
  CHECK(ops::l2_sq(constant(a), constant(a)).value().item() == 0.0f);

  Tensor onehot = Tensor::from({2, 3}, {0, 1, 0, 1, 0, 0});
  CHECK(ops::categorical_cross_entropy(constant(onehot), constant(onehot)).value().item() <= 1e-5f);
  CHECK_THROWS_AS(ops::l2_sq(constant(Tensor({2})), constant(Tensor({3}))), DimensionError);
  CHECK_THROWS_AS(ops::categorical_cross_entropy(constant(Tensor({2, 3})), constant(Tensor({2, 4}))), DimensionError);

  Var rows = ops::row_l2_sq(constant(Tensor::from({2, 2}, {1, 1, 2, 0})), constant(Tensor({2, 2})));
  CHECK(rows.value() == Tensor::from({2}, {2, 4}));

  // p = [0.5, 0.3, 0.2], y = 1: margin 0.3 - 0.5 = -0.2, clamped at -kappa.
  Tensor p = Tensor::from({1, 3}, {0.5f, 0.3f, 0.2f});
  const std::vector<int> y{1};
  CHECK(ops::margin_hinge(constant(p), y, 1.0f).value().item() == doctest::Approx(-0.2));
  CHECK(ops::margin_hinge(constant(p), y, 0.1f).value().item() == doctest::Approx(-0.1));
}

TEST_CASE("backward hand gradients and contracts") {
  Parameter w("w", Tensor::from({1}, {3}));
  Parameter p("p", Tensor::from({2}, {1, 1}));
  backward(ops::l2_sq(w.var(), constant(Tensor({1}))));
  CHECK(w.grad() == Tensor::from({1}, {6}));
  CHECK((!p.has_grad() || p.grad() == Tensor({2})));

  Var v = variable(Tensor({3}));
  CHECK_THROWS_AS(backward(ops::scale(v, 2.0f)), ContractError);
}

TEST_CASE("frozen parameters accumulate nothing") {
  Parameter a("a", Tensor::from({1, 2}, {1, 2}));
  Parameter b("b", Tensor::from({2, 1}, {3, 4}));
  b.set_frozen(true);
  backward(ops::sum(ops::dense(a.var(), b.var(), Var())));
  CHECK(a.has_grad());
  CHECK(!b.has_grad());
  CHECK(a.grad() == Tensor::from({1, 2}, {3, 4}));
}

TEST_CASE("adam hand steps and frozen contract") {
  auto w = std::make_shared<Parameter>("w", Tensor::from({1}, {1}));
  backward(ops::sum(w->var()));
  AdamConfig cfg;
  cfg.learning_rate = 0.1f;
  adam_step({w}, cfg);
  CHECK(w->value().item() == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(!w->has_grad());

  auto still = std::make_shared<Parameter>("still", Tensor::from({2}, {0.25f, -1.5f}));
  backward(ops::scale(ops::sum(still->var()), 0.0f));
  const Tensor before = still->value();
  adam_step({still}, cfg);
  CHECK(still->value() == before);

  auto frozen = std::make_shared<Parameter>("frozen", Tensor::from({2}, {0.25f, -1.5f}));
  frozen->set_frozen(true);
  auto live = std::make_shared<Parameter>("live", Tensor::from({2}, {1, 1}));
  backward(ops::sum(ops::add(frozen->var(), live->var())));
  adam_step({frozen, live}, cfg);
  CHECK(frozen->value() == before);
  CHECK(frozen->adam().t == 0);

  auto missing = std::make_shared<Parameter>("missing", Tensor({1}));
  CHECK_THROWS_AS(adam_step({missing}, cfg), ContractError);

  AdamConfig bad;
  bad.beta1 = 1.0f;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training a composite graph leaves frozen bytes untouched") {
  Rng rng(11);
  auto k = std::make_shared<Parameter>("k", random_tensor({2, 2, 1, 3}, rng));
  auto d = std::make_shared<Parameter>("d", random_tensor({12, 2}, rng));
  k->set_frozen(true);
  const Tensor frozen_before = k->value();
  const Tensor x = random_tensor({2, 4, 4, 1}, rng);
  for (int step = 0; step < 20; ++step) {
    Var h = ops::maxpool2d(ops::relu(ops::conv2d(constant(x), k->var(), Var(), 1, Padding::Same)));
    backward(ops::sum(ops::softmax(ops::dense(ops::flatten(h), d->var(), Var()))));
    adam_step({k, d}, AdamConfig{});
  }
  CHECK(k->value() == frozen_before);
}

TEST_CASE("equal seeds give bit-identical parameters after training") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    auto w = std::make_shared<Parameter>("w", random_tensor({6, 3}, rng));
    auto b = std::make_shared<Parameter>("b", Tensor({3}));
    const Tensor x = random_tensor({8, 6}, rng);
    Tensor t({8, 3});
    for (int r = 0; r < 8; ++r) t[r * 3 + std::int64_t(rng.below(3))] = 1.0f;
    for (int step = 0; step < 25; ++step) {
      Var h = ops::dropout(constant(x), 0.3f, true, rng);
      backward(ops::categorical_cross_entropy(ops::softmax(ops::dense(h, w->var(), b->var())), constant(t)));
      adam_step({w, b}, AdamConfig{});
    }
    return std::make_pair(w->value(), b->value());
  };
  CHECK(run(99) == run(99));
  CHECK(run(99) != run(100));
}

TEST_CASE("every differentiable op matches finite differences over 100 seeds") {
  for (const auto& check : layer_checks()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) worst = std::max(worst, check.run(seed));
    INFO(check.name << " worst relative error " << worst);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("a small decoder composition matches finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 500);
    Var z = variable(random_tensor({1, 2}, rng));
    Var w = variable(random_tensor({2, 8}, rng));
    Var k = variable(random_tensor({2, 2, 1, 2}, rng));
    Var h = ops::reshape(ops::dense(z, w, Var()), Shape{1, 2, 2, 2});
    Var y = ops::sigmoid(ops::conv_transpose2d(h, k, Var(), 2));
    const Tensor target = random_tensor(y.shape(), rng, 0.0f, 1.0f);
    const std::vector<Var> in{z, w, k};
    const double err = detail::compare(in, y, target, [&](const auto& p) {
      const DVec hd = shadow::dense(DVec(p[0].begin(), p[0].end()), 1, 2, 8, p[1], {});
      return shadow::sigmoid(
          shadow::conv_transpose2d({1, 2, 2, 2, hd}, p[2], {}, 2, 2, 1, 2, Padding::Same).v);
    });
    CHECK(err < 1e-3);
  }
}
