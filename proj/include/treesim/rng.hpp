#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace treesim {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

// Deterministic random stream (xoshiro256++ seeded via splitmix64).
//
// All sampling routines are hand-rolled on top of next_u64() so that a given
// (seed, label, index) triple produces identical draws on every platform;
// <random> distributions are implementation-defined and would break
// byte-stable reports.
//
// Stream derivation (documented contract, stable across thread counts):
//   child_key = splitmix64(splitmix64(key ^ fnv1a64(label)) + index)
class Rng {
public:
    explicit Rng(std::uint64_t key) : key_(key) {
        std::uint64_t sm = key;
        for (auto& w : s_) w = detail::splitmix64(sm);
    }

    std::uint64_t key() const { return key_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on [0,1), 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1]; safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double rate) {
        if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be > 0");
        return -std::log(uniform_pos()) / rate;
    }

    // Unbiased uniform on {0,...,n-1}.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("below: n must be > 0");
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Poi(mean) by uniform products, chunked so exp(-chunk) stays well away
    // from the denormal range. Exact for any mean >= 0; cost is O(mean), so
    // desk-scale means only.
    long poisson(double mean) {
        if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean must be >= 0");
        if (mean > 1e6) throw std::invalid_argument("poisson: mean too large for exact sampling");
        long total = 0;
        while (mean > 16.0) {
            total += poisson_chunk(16.0);
            mean -= 16.0;
        }
        return total + poisson_chunk(mean);
    }

    // Geometric starting at 0: P(k) = (1-s)^k s, s in (0,1].
    long geometric(double success) {
        if (!(success > 0.0) || success > 1.0)
            throw std::invalid_argument("geometric: success must be in (0,1]");
        if (success == 1.0) return 0;
        const double g = std::log1p(-success);
        return static_cast<long>(std::floor(std::log(uniform_pos()) / g));
    }

    // Independent child stream; see derivation contract above.
    Rng stream(std::string_view label, std::uint64_t index = 0) const {
        std::uint64_t k = key_ ^ detail::fnv1a64(label);
        std::uint64_t sm = k;
        k = detail::splitmix64(sm);
        sm = k + index;
        return Rng(detail::splitmix64(sm));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    long poisson_chunk(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        long k = 0;
        double prod = uniform_pos();
        while (prod > limit) {
            ++k;
            prod *= uniform_pos();
        }
        return k;
    }

    std::uint64_t key_;
    std::uint64_t s_[4];
};

} // namespace treesim
