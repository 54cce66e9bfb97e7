// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace splatkit {

// Deterministic random stream. The engine is std::mt19937_64; the variate
// transforms are kept in-house so sequences are identical across standard
// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return std::ldexp(static_cast<double>(engine_() >> 11), -53); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t limit = max - max % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

    // Named substream derived from the base seed only; independent of how many
    // draws were taken from this stream.
    Rng fork(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
        for (const char c : label) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ull;
        }
        return Rng(mix(seed_ ^ h));
    }

    Rng fork(std::string_view label, std::uint64_t index) const {
        Rng child = fork(label);
        return Rng(mix(child.seed_ + 0x9e3779b97f4a7c15ull * (index + 1)));
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace splatkit
