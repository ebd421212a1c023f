#pragma once

#include <cstdint>

namespace valr::kernels {

// Hot f64 inner loops behind a runtime-dispatched table. Both variants keep
// the exact same accumulation order per output element (vector lanes span
// independent outputs, multiply and add stay separate instructions), so the
// scalar and AVX2 paths produce bitwise-identical results and the equivalence
// tests can assert exact equality.
struct Table {
    const char* name;
    // c = a[m x k] * b[k x n]
    void (*matmul)(const double* a, const double* b, double* c, int m, int k, int n);
    // c += a[m x k] * b[k x n]
    void (*matmul_acc)(const double* a, const double* b, double* c, int m, int k, int n);
    void (*add)(const double* a, const double* b, double* dst, int64_t n);
    void (*sub)(const double* a, const double* b, double* dst, int64_t n);
    void (*mul)(const double* a, const double* b, double* dst, int64_t n);
    void (*scale)(const double* a, double alpha, double* dst, int64_t n);
    void (*axpy)(double alpha, const double* x, double* y, int64_t n);  // y += alpha*x
};

const Table& scalar_table();
const Table* avx2_table();  // nullptr when the build or CPU lacks AVX2

// Selected once per process: VALR_KERNELS=scalar|avx2 overrides, otherwise
// the best supported variant wins.
const Table& active();

}  // namespace valr::kernels
