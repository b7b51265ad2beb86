#if defined(__x86_64__) || defined(_M_X64)

#include "aadv/kernels.hpp"

#include <immintrin.h>

// Compiled with -mavx2 but without FMA contraction: each variant performs
// the same rounded mul/add sequence per element as the scalar kernel.

namespace aadv::kernels {

namespace {

void k_add(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void k_sub(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void k_mul(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void k_scale(double* dst, const double* a, double s, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
    for (; i < n; ++i) dst[i] = a[i] * s;
}

void k_relu(double* dst, const double* a, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    for (; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void k_axpy(double* dst, double s, const double* a, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(vs, _mm256_loadu_pd(a + i));
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), prod));
    }
    for (; i < n; ++i) dst[i] += s * a[i];
}

void k_matmul(double* c, const double* a, const double* b,
              std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            k_axpy(crow, aip, brow, n);
        }
    }
}

} // namespace

const Table& avx2_table() {
    static const Table t{"avx2", k_add, k_sub, k_mul, k_scale, k_relu, k_axpy, k_matmul};
    return t;
}

} // namespace aadv::kernels

#endif
