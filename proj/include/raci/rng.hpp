#pragma once

#include <cstdint>
#include <string_view>

namespace raci {

// xoshiro256** with splitmix64 seeding. Every random draw in the project
// flows from a single 64-bit run seed through named streams so that results
// are reproducible regardless of evaluation order. Stream ids are derived as
//   fnv1a64(seed || 0x1f || purpose || 0x1f || site_id || 0x1f || year)
// and Gaussians use the cosine branch of Box-Muller (one value per draw,
// no cached state). The dataset manifest records these choices.

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t splitmix64_next(std::uint64_t& state);

class RngStream {
  public:
    explicit RngStream(std::uint64_t stream_seed);

    std::uint64_t next_u64();
    // uniform in [0, 1)
    double uniform();
    // uniform in [lo, hi)
    double uniform(double lo, double hi);
    // standard normal via Box-Muller (cosine branch)
    double gaussian();
    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n);

  private:
    std::uint64_t s_[4];
};

// Derives the seed for a named stream from the run seed.
std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view purpose,
                                 std::string_view site_id, std::int64_t year);

inline RngStream make_stream(std::uint64_t seed, std::string_view purpose,
                             std::string_view site_id = {}, std::int64_t year = 0) {
    return RngStream(derive_stream_seed(seed, purpose, site_id, year));
}

}  // namespace raci
