#include <doctest.h>

#include <vector>

#include "diffsae/kernels.hpp"
#include "diffsae/rng.hpp"

using namespace diffsae;

namespace {
std::vector<double> random_matrix(std::size_t n, Rng& rng) {
  std::vector<double> m(n);
  for (auto& v : m) v = rng.normal();
  return m;
}
}  // namespace

TEST_CASE("matmul serial and omp paths are bit-identical") {
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t m = 1 + rng.below(40), k = 1 + rng.below(40), n = 1 + rng.below(40);
    const auto a = random_matrix(m * k, rng);
    const auto b = random_matrix(k * n, rng);
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        // Same m/k/n geometry either way; the flags only change how the
        // operand buffers (both m*k and k*n elements) are read.
        std::vector<double> c_serial(m * n, 0.5), c_omp(m * n, 0.5);
        kernels::matmul_serial(a.data(), ta, b.data(), tb, c_serial.data(), m, k, n, false);
        kernels::matmul_omp(a.data(), ta, b.data(), tb, c_omp.data(), m, k, n, false);
        CHECK(c_serial == c_omp);
        kernels::matmul_serial(a.data(), ta, b.data(), tb, c_serial.data(), m, k, n, true);
        kernels::matmul_omp(a.data(), ta, b.data(), tb, c_omp.data(), m, k, n, true);
        CHECK(c_serial == c_omp);
      }
  }
}

TEST_CASE("matmul transpose flags agree with explicit transposition") {
  Rng rng(11);
  const std::size_t m = 5, k = 7, n = 3;
  const auto a = random_matrix(m * k, rng);
  const auto b = random_matrix(k * n, rng);
  std::vector<double> at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];

  std::vector<double> base(m * n), via_ta(m * n), via_tb(m * n);
  kernels::matmul(a.data(), false, b.data(), false, base.data(), m, k, n);
  kernels::matmul(at.data(), true, b.data(), false, via_ta.data(), m, k, n);
  kernels::matmul(a.data(), false, bt.data(), true, via_tb.data(), m, k, n);
  for (std::size_t i = 0; i < m * n; ++i) {
    CHECK(base[i] == doctest::Approx(via_ta[i]).epsilon(1e-12));
    CHECK(base[i] == doctest::Approx(via_tb[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul accumulate adds onto existing output") {
  Rng rng(3);
  const std::size_t m = 4, k = 6, n = 5;
  const auto a = random_matrix(m * k, rng);
  const auto b = random_matrix(k * n, rng);
  std::vector<double> fresh(m * n, 0.0), acc(m * n, 1.0);
  kernels::matmul(a.data(), false, b.data(), false, fresh.data(), m, k, n, false);
  kernels::matmul(a.data(), false, b.data(), false, acc.data(), m, k, n, true);
  for (std::size_t i = 0; i < m * n; ++i) CHECK(acc[i] == doctest::Approx(fresh[i] + 1.0));
}

TEST_CASE("softmax rows: serial matches omp and rows sum to one") {
  Rng rng(5);
  const std::size_t m = 33, n = 17;
  auto x = random_matrix(m * n, rng);
  auto y = x;
  kernels::softmax_rows_serial(x.data(), m, n);
  kernels::softmax_rows_omp(y.data(), m, n);
  CHECK(x == y);
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(x[i * n + j] >= 0.0);
      sum += x[i * n + j];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("parallel switch is honored") {
  const bool prev = kernels::parallel_enabled();
  kernels::set_parallel(false);
  CHECK_FALSE(kernels::parallel_enabled());
  kernels::set_parallel(prev);
}

TEST_CASE("axpy variants agree") {
  Rng rng(9);
  const auto x = random_matrix(1001, rng);
  std::vector<double> y1(1001, 0.25), y2(1001, 0.25);
  kernels::axpy_serial(1.5, x.data(), y1.data(), x.size());
  kernels::axpy_omp(1.5, x.data(), y2.data(), x.size());
  CHECK(y1 == y2);
}
