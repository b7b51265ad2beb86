#pragma once

#include <cstddef>
#include <string>

namespace aadv::kernels {

// Hot inner loops, dispatched at runtime. Every SIMD variant preserves the
// scalar variant's per-element operation order, so outputs are bit-identical
// across implementations (equivalence-tested in tests/test_kernels.cpp).
struct Table {
    const char* name;
    void (*add)(double* dst, const double* a, const double* b, std::size_t n);
    void (*sub)(double* dst, const double* a, const double* b, std::size_t n);
    void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
    void (*scale)(double* dst, const double* a, double s, std::size_t n);
    void (*relu)(double* dst, const double* a, std::size_t n);
    // dst += s * a
    void (*axpy)(double* dst, double s, const double* a, std::size_t n);
    // C[m x n] = A[m x k] * B[k x n]; accumulation over k in ascending order
    // for every output element.
    void (*matmul)(double* c, const double* a, const double* b,
                   std::size_t m, std::size_t k, std::size_t n);
};

const Table& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const Table& avx2_table();
#endif

/// Active table: best available for this CPU, overridable via AADV_KERNELS
/// (values: "scalar", "avx2"), read once at first use.
const Table& active();

} // namespace aadv::kernels
