#include "aadv/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace aadv::kernels {

namespace {

const Table& pick() {
    const char* force = std::getenv("AADV_KERNELS");
    if (force != nullptr) {
        if (std::strcmp(force, "scalar") == 0) return scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
        if (std::strcmp(force, "avx2") == 0) return avx2_table();
#endif
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2")) return avx2_table();
#endif
    return scalar_table();
}

} // namespace

const Table& active() {
    static const Table& t = pick();
    return t;
}

} // namespace aadv::kernels
