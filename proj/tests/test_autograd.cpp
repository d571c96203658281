#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "diffsae/autograd.hpp"
#include "diffsae/rng.hpp"

using namespace diffsae;

namespace {
Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, scale);
  return t;
}
}  // namespace

TEST_CASE("matmul against identity returns the other operand") {
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i * 3 + i) = 1.0;
  Rng rng(1);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor out = ag::matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out.at(i) == doctest::Approx(a.at(i)));
}

TEST_CASE("relu clamps negatives") {
  Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  Tensor y = ag::relu(x);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) == 2.0);
}

TEST_CASE("cross entropy of uniform logits is log V") {
  Tensor logits = Tensor::zeros({1, 8});
  Tensor loss = ag::softmax_xent(logits, {3}, {1.0});
  CHECK(loss.item() == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("d/dx x^2 at 3 is 6") {
  Tensor x = Tensor::param(Tensor::from({1}, {3.0}));
  Tensor y = ag::mul(x, x);
  ag::backward(y);
  CHECK((*x.grad)[0] == doctest::Approx(6.0));
}

TEST_CASE("relu gradient is zero in the dead region") {
  Tensor x = Tensor::param(Tensor::from({1}, {-1.0}));
  Tensor y = ag::relu(x);
  ag::backward(y);
  CHECK((*x.grad)[0] == 0.0);
}

TEST_CASE("matmul gradients match central finite differences") {
  Rng rng(42);
  Tensor a = Tensor::param(random_tensor({4, 4}, rng));
  Tensor b = Tensor::param(random_tensor({4, 4}, rng));
  auto loss_fn = [&] { return ag::sum_sq(ag::matmul(a, b)); };
  auto report = ag::finite_diff_check(loss_fn, {a, b}, 1e-5);
  CHECK(report.non_finite.empty());
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("finite differences are tight on a quadratic and exact on a linear loss") {
  Rng rng(7);
  Tensor w = Tensor::param(random_tensor({6}, rng));
  auto quad = [&] { return ag::sum_sq(w); };
  CHECK(ag::finite_diff_check(quad, {w}, 1e-5).max_rel_error < 1e-6);
  auto lin = [&] { return ag::sum(w); };
  CHECK(ag::finite_diff_check(lin, {w}, 1e-5).max_rel_error < 1e-9);
}

TEST_CASE("topk_keep matches a full-sort oracle and kills dropped gradients") {
  Rng rng(11);
  const std::size_t width = 23, k = 5;
  Tensor x = Tensor::param(random_tensor({2, width}, rng));
  Tensor y = ag::topk_keep(x, k);
  // Oracle: full sort by (value desc, index asc).
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<std::size_t> order(width);
    for (std::size_t i = 0; i < width; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (x.at(r * width + a) != x.at(r * width + b)) return x.at(r * width + a) > x.at(r * width + b);
      return a < b;
    });
    std::vector<bool> kept(width, false);
    for (std::size_t i = 0; i < k; ++i) kept[order[i]] = true;
    for (std::size_t i = 0; i < width; ++i)
      CHECK(y.at(r * width + i) == (kept[i] ? x.at(r * width + i) : 0.0));
  }
  ag::backward(ag::sum(y));
  std::size_t nonzero_grads = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if ((*x.grad)[i] != 0.0) ++nonzero_grads;
  }
  CHECK(nonzero_grads == 2 * k);  // dropped coordinates get exactly zero
}

TEST_CASE("topk_keep breaks ties toward the lowest index") {
  Tensor x = Tensor::from({1, 4}, {1.0, 5.0, 5.0, 5.0});
  Tensor y = ag::topk_keep(x, 2);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 5.0);
  CHECK(y.at(2) == 5.0);
  CHECK(y.at(3) == 0.0);
}

TEST_CASE("composite ops match finite differences") {
  Rng rng(23);
  const std::size_t n = 5, d = 8;
  Tensor x = Tensor::param(random_tensor({n, d}, rng));
  Tensor w = Tensor::param(random_tensor({d, d}, rng, 0.4));
  Tensor b = Tensor::param(random_tensor({d}, rng, 0.1));
  Tensor gain = Tensor::param(Tensor::full({d}, 1.0));
  Tensor bias = Tensor::param(Tensor::zeros({d}));

  SUBCASE("linear + relu + sum_sq") {
    auto loss = [&] { return ag::sum_sq(ag::relu(ag::linear(x, w, b))); };
    CHECK(ag::finite_diff_check(loss, {x, w, b}, 1e-5).max_rel_error < 1e-5);
  }
  SUBCASE("layer_norm") {
    auto loss = [&] { return ag::sum_sq(ag::layer_norm(x, gain, bias)); };
    CHECK(ag::finite_diff_check(loss, {x, gain, bias}, 1e-5).max_rel_error < 1e-4);
  }
  SUBCASE("attention") {
    Tensor q = Tensor::param(random_tensor({n, d}, rng, 0.5));
    Tensor k = Tensor::param(random_tensor({n, d}, rng, 0.5));
    Tensor v = Tensor::param(random_tensor({n, d}, rng, 0.5));
    auto loss = [&] { return ag::sum_sq(ag::attention(q, k, v, 2)); };
    CHECK(ag::finite_diff_check(loss, {q, k, v}, 1e-5).max_rel_error < 1e-4);
  }
  SUBCASE("softmax cross entropy with weights") {
    Tensor logits = Tensor::param(random_tensor({4, 9}, rng));
    std::vector<uint32_t> targets{1, 4, 0, 8};
    std::vector<double> weights{2.0, 0.0, 1.0, 0.5};
    auto loss = [&] { return ag::softmax_xent(logits, targets, weights); };
    CHECK(ag::finite_diff_check(loss, {logits}, 1e-5).max_rel_error < 1e-5);
  }
  SUBCASE("embedding gather") {
    Tensor table = Tensor::param(random_tensor({7, d}, rng));
    std::vector<uint32_t> ids{0, 3, 3, 6};
    auto loss = [&] { return ag::sum_sq(ag::embed(table, ids)); };
    CHECK(ag::finite_diff_check(loss, {table}, 1e-5).max_rel_error < 1e-6);
  }
  SUBCASE("slice_rows and add_rowvec") {
    auto loss = [&] { return ag::sum_sq(ag::add_rowvec(ag::slice_rows(x, 1, 3), b)); };
    CHECK(ag::finite_diff_check(loss, {x, b}, 1e-5).max_rel_error < 1e-6);
  }
}

TEST_CASE("shape mismatches are rejected with shapes named") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(ag::matmul(a, b),
                       doctest::Contains("[2x3]"), std::invalid_argument);
  CHECK_THROWS_AS(ag::add(a, b), std::invalid_argument);
}

TEST_CASE("backward before any forward is rejected") {
  Tensor plain = Tensor::zeros({3});
  CHECK_THROWS_AS(ag::backward(plain), std::logic_error);
}

TEST_CASE("backward seed must match output shape") {
  Tensor x = Tensor::param(Tensor::from({2}, {1.0, 2.0}));
  Tensor y = ag::scale(x, 2.0);
  Tensor bad_seed = Tensor::zeros({3});
  CHECK_THROWS_AS(ag::backward(y, &bad_seed), std::invalid_argument);
}

TEST_CASE("gradients accumulate across shared subexpressions exactly once per path") {
  Tensor x = Tensor::param(Tensor::from({1}, {2.0}));
  Tensor y = ag::mul(x, x);          // x^2
  Tensor z = ag::add(y, y);          // 2 x^2 -> dz/dx = 4x = 8
  ag::backward(z);
  CHECK((*x.grad)[0] == doctest::Approx(8.0));
}

TEST_CASE("forward is deterministic for identical inputs") {
  Rng rng(3);
  Tensor a = random_tensor({6, 6}, rng);
  Tensor b = random_tensor({6, 6}, rng);
  Tensor c1 = ag::matmul(a, b);
  Tensor c2 = ag::matmul(a, b);
  CHECK(*c1.data == *c2.data);
}

TEST_CASE("no-grad mode records no tape") {
  ag::NoGradGuard guard;
  Tensor x = Tensor::param(Tensor::from({1}, {1.0}));
  Tensor y = ag::scale(x, 3.0);
  CHECK_FALSE(static_cast<bool>(y.node));
  CHECK_FALSE(y.requires_grad);
}
