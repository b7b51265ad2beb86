#include "aadv/kernels.hpp"

namespace aadv::kernels {

namespace {

void k_add(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void k_sub(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void k_mul(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void k_scale(double* dst, const double* a, double s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * s;
}

void k_relu(double* dst, const double* a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void k_axpy(double* dst, double s, const double* a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += s * a[i];
}

void k_matmul(double* c, const double* a, const double* b,
              std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

} // namespace

const Table& scalar_table() {
    static const Table t{"scalar", k_add, k_sub, k_mul, k_scale, k_relu, k_axpy, k_matmul};
    return t;
}

} // namespace aadv::kernels
