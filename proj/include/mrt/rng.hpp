#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace mrt {

/// xoshiro256++ generator. Each stream is seeded from a 64-bit key via
/// SplitMix64, so streams with distinct keys are statistically independent
/// and replaying a key reproduces the exact draw sequence.
class RngStream {
  public:
    RngStream() : RngStream(0) {}
    explicit RngStream(std::uint64_t key);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform01();
    double uniform(double lo, double hi);
    bool bernoulli(double p);
    /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
    double normal();
    double normal(double mean, double sd);
    /// Exact Poisson: sequential inversion for small rates, transformed
    /// rejection (PTRS) for lambda >= 10. Throws NumericalError for rates
    /// large enough to overflow the integer range.
    long poisson(double lambda);

  private:
    std::uint64_t s_[4];
};

/// Keyed substream derivation: mixes master seed, a textual label, and any
/// number of integer indices into a fresh 64-bit key. Adding new labels or
/// indices never perturbs the streams of existing ones.
std::uint64_t derive_key(std::uint64_t master, std::string_view label,
                         std::initializer_list<std::uint64_t> indices = {});

inline RngStream derive_stream(std::uint64_t master, std::string_view label,
                               std::initializer_list<std::uint64_t> indices = {}) {
    return RngStream(derive_key(master, label, indices));
}

} // namespace mrt
