#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "diffsae/kernels.hpp"
#include "diffsae/rng.hpp"

// Times the serial reference against the OpenMP kernels on matmul shapes the
// training loop actually hits.

using namespace diffsae;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  const auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto end = Clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("threads available: %d\n\n", kernels::max_threads());
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial ms", "omp ms", "speedup");

  struct Shape {
    std::size_t m, k, n;
  };
  const Shape shapes[] = {{64, 64, 64}, {64, 64, 256}, {256, 64, 1024}, {512, 512, 512}};
  for (const auto& s : shapes) {
    std::vector<double> a(s.m * s.k), b(s.k * s.n), c(s.m * s.n);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const int reps = s.m * s.k * s.n > (1u << 24) ? 3 : 20;
    const double serial = time_ms(
        [&] { kernels::matmul_serial(a.data(), false, b.data(), false, c.data(), s.m, s.k, s.n, false); },
        reps);
    const double omp = time_ms(
        [&] { kernels::matmul_omp(a.data(), false, b.data(), false, c.data(), s.m, s.k, s.n, false); },
        reps);
    char label[64];
    std::snprintf(label, sizeof(label), "matmul %zux%zux%zu", s.m, s.k, s.n);
    std::printf("%-28s %12.3f %12.3f %7.2fx\n", label, serial, omp, serial / omp);
  }

  {
    const std::size_t m = 2048, n = 258;
    std::vector<double> x(m * n);
    for (auto& v : x) v = rng.normal();
    auto y = x;
    const double serial = time_ms([&] { kernels::softmax_rows_serial(y.data(), m, n); }, 20);
    const double omp = time_ms([&] { kernels::softmax_rows_omp(y.data(), m, n); }, 20);
    std::printf("%-28s %12.3f %12.3f %7.2fx\n", "softmax_rows 2048x258", serial, omp, serial / omp);
  }
  return 0;
}
