#include "seqlab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define SEQLAB_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#endif

namespace seqlab::kernels {

#ifdef SEQLAB_HAVE_AVX2_BUILD
namespace {

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        _mm256_storeu_pd(out + i, _mm256_add_pd(va, vb));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        _mm256_storeu_pd(out + i, _mm256_sub_pd(va, vb));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, vb));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

// mul+add rather than fma keeps the rounding identical to the scalar loop.
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vy = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, const double* x, double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) out[i] = alpha * x[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
    }
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    __m128d sum2 = _mm_add_pd(lo, hi);
    __m128d sum1 = _mm_add_sd(sum2, _mm_unpackhi_pd(sum2, sum2));
    double total = _mm_cvtsd_f64(sum1);
    for (; i < n; ++i) total += a[i] * b[i];
    return total;
}

void matmul_avx2(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const __m256d vaip = _mm256_set1_pd(arow[p]);
            const double* brow = b + p * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d vb = _mm256_loadu_pd(brow + j);
                __m256d vc = _mm256_loadu_pd(crow + j);
                _mm256_storeu_pd(crow + j,
                                 _mm256_add_pd(vc, _mm256_mul_pd(vaip, vb)));
            }
            for (; j < n; ++j) crow[j] += arow[p] * brow[j];
        }
    }
}

}  // namespace

const KernelTable* avx2() {
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    static const KernelTable table{
        "avx2",    add_avx2,   sub_avx2, mul_avx2,
        axpy_avx2, scale_avx2, dot_avx2, matmul_avx2,
    };
    return &table;
}

#else

const KernelTable* avx2() { return nullptr; }

#endif  // SEQLAB_HAVE_AVX2_BUILD

}  // namespace seqlab::kernels
