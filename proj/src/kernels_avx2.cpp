// AVX2 kernel variants. Compiled with -mavx2 for this translation unit only;
// kernels.cpp gates use behind a CPU check so the binary still runs on
// machines without AVX2.

#include "valr/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define VALR_HAVE_AVX2_BUILD 1
#include <immintrin.h>

#include <cstring>
#else
#define VALR_HAVE_AVX2_BUILD 0
#endif

namespace valr::kernels {

#if VALR_HAVE_AVX2_BUILD

namespace {

// Lanes carry independent j columns; mul and add kept separate (no FMA) so
// each c[i,j] sees the identical operation sequence as the scalar kernel.
void v_matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    const int n4 = n & ~3;
    for (int i = 0; i < m; ++i) {
        const double* arow = a + int64_t(i) * k;
        double* crow = c + int64_t(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + int64_t(kk) * n;
            const __m256d avv = _mm256_set1_pd(av);
            int j = 0;
            for (; j < n4; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                __m256d bv = _mm256_loadu_pd(brow + j);
                cv = _mm256_add_pd(cv, _mm256_mul_pd(avv, bv));
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void v_matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    std::memset(c, 0, sizeof(double) * size_t(m) * size_t(n));
    v_matmul_acc(a, b, c, m, k, n);
}

void v_add(const double* a, const double* b, double* dst, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* dst, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void v_mul(const double* a, const double* b, double* dst, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void v_scale(const double* a, double alpha, double* dst, int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), av));
    for (; i < n; ++i) dst[i] = a[i] * alpha;
}

void v_axpy(double alpha, const double* x, double* y, int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

const Table kAvx2 = {
    "avx2", v_matmul, v_matmul_acc, v_add, v_sub, v_mul, v_scale, v_axpy,
};

}  // namespace

const Table* avx2_table() {
    static const bool ok = __builtin_cpu_supports("avx2");
    return ok ? &kAvx2 : nullptr;
}

#else

const Table* avx2_table() { return nullptr; }

#endif

}  // namespace valr::kernels
