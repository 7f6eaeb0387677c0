#include "mrt/rng.hpp"

#include "mrt/errors.hpp"

#include <cmath>
#include <numbers>

namespace mrt {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

RngStream::RngStream(std::uint64_t key) {
    std::uint64_t sm = key;
    for (auto& s : s_)
        s = splitmix64(sm);
    // all-zero state is the one fixed point of xoshiro; unreachable from
    // SplitMix64 in practice but cheap to rule out
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0)
        s_[0] = 1;
}

std::uint64_t RngStream::next_u64() {
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

double RngStream::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) {
    if (!(lo <= hi))
        throw InputError("uniform(lo, hi) requires lo <= hi");
    return lo + (hi - lo) * uniform01();
}

bool RngStream::bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw InputError("bernoulli probability must be in [0, 1]");
    return uniform01() < p;
}

double RngStream::normal() {
    // Box-Muller, cosine branch only so the uniform budget per draw is fixed.
    double u1 = 1.0 - uniform01(); // (0, 1]; keeps log finite
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::normal(double mean, double sd) {
    if (!(sd >= 0.0))
        throw InputError("normal standard deviation must be nonnegative");
    return mean + sd * normal();
}

long RngStream::poisson(double lambda) {
    if (!(lambda >= 0.0))
        throw InputError("poisson rate must be nonnegative");
    if (lambda == 0.0)
        return 0;
    if (lambda > 1e17)
        throw NumericalError("poisson rate too large to sample exactly");
    if (lambda < 10.0) {
        // sequential inversion
        double p = std::exp(-lambda);
        double cum = p;
        double u = uniform01();
        long k = 0;
        while (u > cum) {
            ++k;
            p *= lambda / static_cast<double>(k);
            cum += p;
            if (k > 10000) // cumulative probability has saturated numerically
                break;
        }
        return k;
    }
    // Hormann's PTRS transformed-rejection sampler, exact for lambda >= 10.
    const double b = 0.931 + 2.53 * std::sqrt(lambda);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_lambda = std::log(lambda);
    for (;;) {
        double u = uniform01() - 0.5;
        double v = uniform01();
        double us = 0.5 - std::abs(u);
        double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= v_r)
            return static_cast<long>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us))
            continue;
        double k = kf;
        double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
        double rhs = k * log_lambda - lambda - std::lgamma(k + 1.0);
        if (lhs <= rhs)
            return static_cast<long>(kf);
    }
}

std::uint64_t derive_key(std::uint64_t master, std::string_view label,
                         std::initializer_list<std::uint64_t> indices) {
    // FNV-1a over the label bytes, then SplitMix64 absorption of master and
    // indices. Not cryptographic; just a well-mixed deterministic hash.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = h;
    std::uint64_t key = splitmix64(state);
    state ^= master;
    key ^= splitmix64(state);
    for (std::uint64_t idx : indices) {
        state ^= idx + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2);
        key ^= splitmix64(state);
    }
    return key;
}

} // namespace mrt
