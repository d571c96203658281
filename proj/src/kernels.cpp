#include "diffsae/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace diffsae::kernels {

namespace {
std::atomic<bool> g_parallel{
#ifdef _OPENMP
    true
#else
    false
#endif
};

bool use_omp_here() {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed) && !omp_in_parallel();
#else
  return false;
#endif
}

inline double dot_row(const double* a, bool trans_a, const double* b, bool trans_b,
                      std::size_t i, std::size_t j, std::size_t m, std::size_t k, std::size_t n) {
  double acc = 0.0;
  if (!trans_a && !trans_b) {
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) acc += ai[p] * b[p * n + j];
  } else if (!trans_a && trans_b) {
    const double* ai = a + i * k;
    const double* bj = b + j * k;
    for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
  } else {
    const double* bj = b + j * k;
    for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
  }
  return acc;
}

inline void matmul_row(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
                       std::size_t i, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  double* ci = c + i * n;
  if (!trans_a && !trans_b) {
    // i-p-j order: streams b row-wise.
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot_row(a, trans_a, b, trans_b, i, j, m, k, n);
      if (accumulate)
        ci[j] += v;
      else
        ci[j] = v;
    }
  }
}

inline void softmax_row(double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul_serial(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
                   std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a, trans_a, b, trans_b, c, i, m, k, n, accumulate);
}

void matmul_omp(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
                std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i)
    matmul_row(a, trans_a, b, trans_b, c, static_cast<std::size_t>(i), m, k, n, accumulate);
#else
  matmul_serial(a, trans_a, b, trans_b, c, m, k, n, accumulate);
#endif
}

void matmul(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // Tiny products are not worth a fork/join.
  if (use_omp_here() && m >= 2 && m * k * n >= 32768)
    matmul_omp(a, trans_a, b, trans_b, c, m, k, n, accumulate);
  else
    matmul_serial(a, trans_a, b, trans_b, c, m, k, n, accumulate);
}

void softmax_rows_serial(double* x, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) softmax_row(x + i * n, n);
}

void softmax_rows_omp(double* x, std::size_t m, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i)
    softmax_row(x + static_cast<std::size_t>(i) * n, n);
#else
  softmax_rows_serial(x, m, n);
#endif
}

void softmax_rows(double* x, std::size_t m, std::size_t n) {
  if (use_omp_here() && m >= 8 && m * n >= 16384)
    softmax_rows_omp(x, m, n);
  else
    softmax_rows_serial(x, m, n);
}

void axpy_serial(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_omp(double alpha, const double* x, double* y, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] += alpha * x[i];
#else
  axpy_serial(alpha, x, y, n);
#endif
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  if (use_omp_here() && n >= 65536)
    axpy_omp(alpha, x, y, n);
  else
    axpy_serial(alpha, x, y, n);
}

}  // namespace diffsae::kernels
