#pragma once

#include <cstdint>
#include <string_view>

namespace aadv {

/// Deterministic, platform-independent PRNG (xoshiro256** seeded via
/// splitmix64). std::mt19937 distributions are implementation-defined, which
/// would break the byte-identical-report guarantee across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n > 0. Unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Derive an independent stream seed from a global seed and a purpose
    /// tag (FNV-1a of the tag mixed through splitmix64). Adding draws to one
    /// stream never perturbs another.
    static std::uint64_t stream_seed(std::uint64_t global_seed, std::string_view purpose) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char ch : purpose) {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ull;
        }
        std::uint64_t x = global_seed ^ h;
        return splitmix64(x);
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
};

} // namespace aadv
