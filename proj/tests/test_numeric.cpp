#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>

#include "oracles.h"
#include "seqattn/error.h"
#include "seqattn/gradcheck.h"
#include "seqattn/ops.h"
#include "seqattn/tensor.h"
#include "test_util.h"

using namespace seqattn;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  auto t = Tensor::create({2, 3});
  CHECK(t->size() == 6);
  CHECK(t->rank() == 2);
  CHECK_THROWS_AS(Tensor::create({0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, 2.0, 3.0}), DimensionError);
  auto hot = Tensor::one_hot(4, 2);
  CHECK(hot->data == std::vector<double>{0, 0, 1, 0});
}

TEST_CASE("mask validation") {
  Mask m(3, 5);
  m.validate(5);
  CHECK_THROWS_AS(Mask(0, 5).validate(5), MaskError);
  CHECK_THROWS_AS(Mask(6, 5).validate(5), MaskError);
  CHECK(Mask::full(4).is_full());
}

TEST_CASE("affine identity and hand case") {
  Tape tape;
  auto x = Tensor::from({2}, {1.0, 0.0});
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto y = affine(tape, x, eye);
  CHECK(y->data == std::vector<double>{1.0, 0.0});

  auto x2 = Tensor::from({2}, {1.0, 1.0});
  auto w = Tensor::from({1, 2}, {2.0, 3.0});
  auto b = Tensor::from({1}, {1.0});
  auto y2 = affine(tape, x2, w, b);
  CHECK(y2->data[0] == doctest::Approx(6.0));

  CHECK_THROWS_AS(affine(tape, Tensor::from({3}, {1, 2, 3}), eye), DimensionError);
}

TEST_CASE("affine matches direct summation") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    auto x = random_tensor({3, 4}, rng);
    auto w = random_tensor({5, 4}, rng);
    auto b = random_tensor({5}, rng);
    auto y = affine(tape, x, w, b);
    auto expect = oracle::affine(x->data, 3, 4, w->data, 5, b->data);
    CHECK(max_abs_diff(y->data, expect) <= 1e-12);
  }
}

TEST_CASE("conv1d_same identity and hand case") {
  Tape tape;
  auto x = Tensor::from({3, 1}, {0.2, 0.5, 0.3});
  auto ident = Tensor::from({1, 1, 1}, {1.0});
  auto y = conv1d_same(tape, x, ident);
  CHECK(max_abs_diff(y->data, {0.2, 0.5, 0.3}) == 0.0);

  auto x2 = Tensor::from({4, 1}, {0, 1, 0, 0});
  auto ones = Tensor::from({1, 3, 1}, {1, 1, 1});
  auto y2 = conv1d_same(tape, x2, ones);
  CHECK(max_abs_diff(y2->data, {1, 1, 1, 0}) == 0.0);

  auto even = Tensor::from({1, 2, 1}, {1, 1});
  CHECK_THROWS_AS(conv1d_same(tape, x2, even), ConfigError);
}

TEST_CASE("conv1d_same output length equals input length for every odd width") {
  Rng rng(11);
  const int steps = 6;
  auto x = random_tensor({steps, 2}, rng);
  for (int width = 1; width <= 2 * steps + 1; width += 2) {
    Tape tape;
    auto f = random_tensor({2, width, 3}, rng);
    auto y = conv1d_same(tape, x, f);
    CHECK(y->dim(0) == steps);
    CHECK(y->dim(1) == 3);
    auto expect = oracle::conv1d_same(x->data, steps, 2, f->data, width, 3);
    CHECK(max_abs_diff(y->data, expect) <= 1e-12);
  }
}

TEST_CASE("softmax_masked basics") {
  Tape tape;
  auto flat = Tensor::from({4}, {0, 0, 0, 0});
  auto u = softmax_masked(tape, flat, Mask::full(4));
  CHECK(max_abs_diff(u->data, {0.25, 0.25, 0.25, 0.25}) <= 1e-15);

  // shift invariance
  Rng rng(3);
  auto s = random_tensor({5}, rng);
  auto shifted = Tensor::create({5});
  for (int i = 0; i < 5; ++i) shifted->data[i] = s->data[i] + 7.5;
  auto a = softmax_masked(tape, s, Mask::full(5));
  auto b = softmax_masked(tape, shifted, Mask::full(5));
  CHECK(max_abs_diff(a->data, b->data) <= 1e-12);

  // masked tail is exactly zero; closed form over the two valid entries
  auto scores = Tensor::from({3}, {5, 1, 1});
  auto m = softmax_masked(tape, scores, Mask(2, 3));
  CHECK(m->data[2] == 0.0);
  CHECK(m->data[0] + m->data[1] == doctest::Approx(1.0).epsilon(1e-12));
  const double p0 = 1.0 / (1.0 + std::exp(-4.0));
  CHECK(m->data[0] == doctest::Approx(p0).epsilon(1e-12));

  CHECK_THROWS_AS(softmax_masked(tape, scores, Mask(0, 3)), MaskError);
}

TEST_CASE("activation values") {
  Tape tape;
  auto x = Tensor::from({4}, {-1.0, 0.0, 0.5, 2.0});
  auto lr = activation(tape, x, Act::LeakyRelu);
  CHECK(lr->data[0] == doctest::Approx(-0.01));
  CHECK(lr->data[1] == 0.0);
  CHECK(lr->data[2] == 0.5);
  CHECK(lr->data[3] == 2.0);
  auto th = activation(tape, Tensor::from({1}, {0.0}), Act::Tanh);
  CHECK(th->data[0] == 0.0);
  auto sg = activation(tape, Tensor::from({1}, {0.0}), Act::Sigmoid);
  CHECK(sg->data[0] == 0.5);
}

TEST_CASE("backward through a small composite") {
  // loss = sum((x W^T + b) .* (x W^T + b)) via emul + dot against ones
  Rng rng(5);
  auto x = random_tensor({3}, rng, true);
  auto w = random_tensor({2, 3}, rng, true);
  auto b = random_tensor({2}, rng, true);
  auto report = grad_check(
      [&](Tape& tape) {
        auto y = affine(tape, x, w, b);
        return dot(tape, y, y);
      },
      {x, w, b});
  CHECK(report.pass);
  CHECK(report.max_rel_error <= 1e-6);
}

TEST_CASE("grad_check quadratic closed form") {
  auto theta = Tensor::from({2}, {1.0, 2.0}, true);
  std::vector<double> seen_grad;
  auto report = grad_check(
      [&](Tape& tape) { return dot(tape, theta, theta); }, {theta}, 1e-5, 1e-8);
  CHECK(report.pass);
  CHECK(report.max_rel_error < 1e-8);

  // analytic gradient of sum(theta^2) is 2*theta
  Tape tape;
  auto loss = dot(tape, theta, theta);
  tape.backward(loss);
  CHECK(theta->grad[0] == doctest::Approx(2.0));
  CHECK(theta->grad[1] == doctest::Approx(4.0));
}

TEST_CASE("grad_check flags mismatches between analytic and numeric gradients") {
  // with a huge step the central difference of a curved function no longer
  // matches the analytic gradient, so the harness must report a failure
  auto theta = Tensor::from({3}, {0.4, -0.7, 1.2}, true);
  auto report = grad_check(
      [&](Tape& tape) {
        auto y = activation(tape, theta, Act::Tanh);
        return dot(tape, y, y);
      },
      {theta}, /*h=*/0.5);
  CHECK_FALSE(report.pass);
  CHECK(report.max_rel_error > 1e-2);
  CHECK(report.worst.index >= 0);
}

TEST_CASE("grad_check constant function reports zero gradient") {
  auto theta = Tensor::from({3}, {0.3, -0.2, 0.9}, true);
  auto report = grad_check(
      [&](Tape& tape) {
        (void)tape;
        return Tensor::scalar(4.25, true);
      },
      {theta});
  CHECK(report.pass);
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("per-op gradients against central differences") {
  Rng rng(23);
  auto x = random_tensor({4, 3}, rng, true);
  auto f = random_tensor({3, 5, 2}, rng, true);
  auto v = random_tensor({8}, rng, true);
  auto a = random_tensor({6}, rng, true);
  auto bso = random_tensor({6}, rng, true);

  SUBCASE("conv1d_same") {
    auto report = grad_check(
        [&](Tape& tape) {
          auto y = conv1d_same(tape, x, f);
          auto flat = reshape(tape, y, {8});
          return dot(tape, flat, flat);
        },
        {x, f});
    CHECK(report.pass);
  }
  SUBCASE("softmax_masked") {
    auto report = grad_check(
        [&](Tape& tape) {
          auto sm = softmax_masked(tape, v, Mask(6, 8));
          // weight the outputs so the gradient is not trivially zero
          auto w = Tensor::from({8}, {1, -2, 3, -1, 2, 0.5, 4, -3});
          return dot(tape, sm, w);
        },
        {v});
    CHECK(report.pass);
  }
  SUBCASE("activations") {
    for (Act kind : {Act::LeakyRelu, Act::Tanh, Act::Sigmoid}) {
      auto report = grad_check(
          [&](Tape& tape) {
            auto y = activation(tape, a, kind);
            return dot(tape, y, y);
          },
          {a});
      CHECK(report.pass);
    }
  }
  SUBCASE("emul add mix concat") {
    auto weights = random_tensor({2}, rng, true);
    auto report = grad_check(
        [&](Tape& tape) {
          auto m = mix(tape, {a, bso}, weights);
          auto e = emul(tape, m, add(tape, a, bso));
          auto c = concat_vec(tape, e, narrow0(tape, a, 1, 3));
          return dot(tape, c, c);
        },
        {a, bso, weights});
    CHECK(report.pass);
  }
  SUBCASE("attend_context and matvec") {
    auto hE = random_tensor({5, 3}, rng, true);
    auto al = testutil::random_alignment(5, rng, true);
    auto q = random_tensor({3}, rng, true);
    auto report = grad_check(
        [&](Tape& tape) {
          auto sc = matvec(tape, hE, q);
          auto sm = softmax_masked(tape, sc, Mask(4, 5));
          auto ctx = attend_context(tape, hE, sm);
          auto ctx2 = attend_context(tape, hE, al);
          return dot(tape, ctx, ctx2);
        },
        {hE, al, q});
    CHECK(report.pass);
  }
  SUBCASE("nll bce mse") {
    auto logits = random_tensor({5}, rng, true);
    auto probs = Tensor::from({3}, {0.3, 0.6, 0.9}, true);
    auto pred = random_tensor({2, 3}, rng, true);
    auto tgt = random_tensor({2, 3}, rng);
    auto report = grad_check(
        [&](Tape& tape) {
          auto l1 = nll_from_logits(tape, logits, 2);
          auto l2 = bce_sum(tape, probs, {1.0, 0.0, 1.0});
          auto l3 = mse_sum(tape, pred, tgt, 1);
          return add_all(tape, {l1, l2, l3});
        },
        {logits, probs, pred});
    CHECK(report.pass);
  }
}

TEST_CASE("gradient accumulation when a node is reused") {
  auto x = Tensor::from({2}, {0.5, -0.25}, true);
  Tape tape;
  auto y = emul(tape, x, x);               // x^2
  auto loss = dot(tape, y, Tensor::from({2}, {1.0, 1.0}));
  tape.backward(loss);
  CHECK(x->grad[0] == doctest::Approx(1.0));    // 2x
  CHECK(x->grad[1] == doctest::Approx(-0.5));
}

TEST_CASE("non-recording tape skips gradient work") {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  Tape tape(false);
  auto y = emul(tape, x, x);
  CHECK(tape.size() == 0);
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("nll_from_logits rejects out-of-vocabulary targets") {
  Tape tape;
  auto logits = Tensor::from({4}, {0, 0, 0, 0});
  CHECK_THROWS_AS(nll_from_logits(tape, logits, 4), DataError);
  CHECK_THROWS_AS(nll_from_logits(tape, logits, -1), DataError);
}

TEST_CASE("single precision rounds op results through float32") {
  set_default_precision(Precision::Single);
  Tape tape;
  auto a = Tensor::from({2}, {1.0 / 3.0, 2.0 / 3.0});
  auto b = Tensor::from({2}, {1.0 / 7.0, 1.0 / 9.0});
  auto y = add(tape, a, b);
  for (double v : y->data) {
    CHECK(v == static_cast<double>(static_cast<float>(v)));
  }
  set_default_precision(Precision::Double);
  auto z = add(tape, a, b);
  CHECK(z->data[0] != static_cast<double>(static_cast<float>(z->data[0])));
}

TEST_CASE("concurrent evaluation on disjoint tensors matches serial results") {
  const int workers = 4;
  std::vector<std::vector<double>> serial(workers), threaded(workers);
  auto job = [](std::uint64_t seed, std::vector<double>& out) {
    Rng rng(seed);
    auto hE = testutil::random_tensor({6, 4}, rng, true);
    auto q = testutil::random_tensor({4}, rng, true);
    Tape tape;
    auto align = softmax_masked(tape, matvec(tape, hE, q), Mask(5, 6));
    auto ctx = attend_context(tape, hE, align);
    auto loss = dot(tape, ctx, ctx);
    tape.backward(loss);
    out = ctx->data;
    out.insert(out.end(), q->grad.begin(), q->grad.end());
  };
  for (int w = 0; w < workers; ++w) job(1000 + w, serial[static_cast<std::size_t>(w)]);
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back(job, 1000 + w, std::ref(threaded[static_cast<std::size_t>(w)]));
  }
  for (auto& t : threads) t.join();
  for (int w = 0; w < workers; ++w) {
    CHECK(serial[static_cast<std::size_t>(w)] == threaded[static_cast<std::size_t>(w)]);
  }
}

TEST_CASE("rng determinism and serialization") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  auto state = a.serialize();
  double next = a.uniform();
  Rng c(0);
  c.deserialize(state);
  CHECK(c.uniform() == next);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}
