#include "raci/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace raci {

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t stream_seed) {
    std::uint64_t sm = stream_seed;
    for (auto& word : s_) word = splitmix64_next(sm);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;  // xoshiro forbids the all-zero state
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RngStream::gaussian() {
    // u1 in (0, 1] so the log is finite
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    // rejection sampling keeps the distribution exactly uniform
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view purpose,
                                 std::string_view site_id, std::int64_t year) {
    unsigned char sep = 0x1f;
    unsigned char buf[8];
    std::memcpy(buf, &seed, 8);
    std::uint64_t h = fnv1a64(buf, 8);
    h = fnv1a64(&sep, 1, h);
    h = fnv1a64(purpose.data(), purpose.size(), h);
    h = fnv1a64(&sep, 1, h);
    h = fnv1a64(site_id.data(), site_id.size(), h);
    h = fnv1a64(&sep, 1, h);
    std::memcpy(buf, &year, 8);
    h = fnv1a64(buf, 8, h);
    return h;
}

}  // namespace raci
