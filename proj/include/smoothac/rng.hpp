#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "smoothac/tensor.hpp"

namespace smoothac {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child seed for a named stream: splitmix64(master ^ fnv1a(tag)).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(master ^ h);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(master + splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Tensor normal_tensor(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : t.data()) x = dist(rng);
    return t;
}

}  // namespace smoothac
