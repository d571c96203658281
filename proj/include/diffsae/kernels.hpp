#pragma once

#include <cstddef>

namespace diffsae::kernels {

// Dense kernels come in two flavors: a serial reference and an OpenMP version
// parallelized over independent output rows. Both accumulate each output
// element in the same order, so results are bit-identical; tests assert that
// and the benchmark tool compares throughput.

// Global switch. Defaults to parallel when compiled with OpenMP; the OpenMP
// path falls back to serial when called from inside an active parallel region
// (batch-level parallelism already owns the threads then).
void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

// c[m x n] = a op b with optional transposes:
//   trans_a: a is stored [k x m] and used as a^T
//   trans_b: b is stored [n x k] and used as b^T
// accumulate=true adds into c instead of overwriting.
void matmul_serial(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
                   std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_omp(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
                std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// Row-wise softmax in place over an [m x n] matrix.
void softmax_rows_serial(double* x, std::size_t m, std::size_t n);
void softmax_rows_omp(double* x, std::size_t m, std::size_t n);
void softmax_rows(double* x, std::size_t m, std::size_t n);

// y[i] += alpha * x[i]
void axpy_serial(double alpha, const double* x, double* y, std::size_t n);
void axpy_omp(double alpha, const double* x, double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

}  // namespace diffsae::kernels
