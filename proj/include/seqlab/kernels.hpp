#pragma once

#include <cstddef>

// Dense double-precision inner loops behind the tensor ops. A scalar
// reference implementation is always available; an AVX2 variant is
// selected at runtime when the CPU supports it. The active table can be
// forced with the environment variable SEQLAB_KERNELS=scalar|avx2.
//
// Elementwise kernels and matmul preserve the scalar accumulation order
// per output element, so scalar and AVX2 results are bitwise identical.
// dot() reduces with lane-parallel partial sums and may differ from the
// scalar result in the last ulps.

namespace seqlab::kernels {

struct KernelTable {
    const char* name;
    // out[i] = a[i] + b[i]
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    // out[i] = a[i] - b[i]
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    // out[i] = a[i] * b[i]
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[i] = alpha * x[i]
    void (*scale)(double alpha, const double* x, double* out, std::size_t n);
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // c (m x n, row-major) = a (m x k) * b (k x n); c is overwritten
    void (*matmul)(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
};

// Runtime-selected table (cached after first call).
const KernelTable& active();

// Reference implementation, independent of dispatch.
const KernelTable& scalar();

// AVX2 implementation, or nullptr when the CPU (or build) lacks AVX2.
const KernelTable* avx2();

}  // namespace seqlab::kernels
