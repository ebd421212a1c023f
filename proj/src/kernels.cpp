#include "valr/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "valr/util.hpp"

namespace valr::kernels {

namespace {

// i-k-j order: every c[i,j] accumulates over ascending k. The AVX2 variant
// vectorizes the j loop and must preserve this order.
void s_matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + int64_t(i) * k;
        double* crow = c + int64_t(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + int64_t(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void s_matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    std::memset(c, 0, sizeof(double) * size_t(m) * size_t(n));
    s_matmul_acc(a, b, c, m, k, n);
}

void s_add(const double* a, const double* b, double* dst, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}
void s_sub(const double* a, const double* b, double* dst, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}
void s_mul(const double* a, const double* b, double* dst, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}
void s_scale(const double* a, double alpha, double* dst, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] = a[i] * alpha;
}
void s_axpy(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

const Table kScalar = {
    "scalar", s_matmul, s_matmul_acc, s_add, s_sub, s_mul, s_scale, s_axpy,
};

const Table& select() {
    const char* want = std::getenv("VALR_KERNELS");
    if (want) {
        std::string w(want);
        if (w == "scalar") return kScalar;
        if (w == "avx2") {
            const Table* t = avx2_table();
            if (!t) fail("VALR_KERNELS=avx2 requested but AVX2 is unavailable");
            return *t;
        }
        fail("unknown VALR_KERNELS value: " + w + " (expected scalar|avx2)");
    }
    if (const Table* t = avx2_table()) return *t;
    return kScalar;
}

}  // namespace

const Table& scalar_table() { return kScalar; }

const Table& active() {
    static const Table& t = select();
    return t;
}

}  // namespace valr::kernels
