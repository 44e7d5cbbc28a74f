#pragma once

#include "pbc/common.hpp"

#include <algorithm>
#include <cstdint>
#include <random>

namespace pbc {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` under `seed`; streams never depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t index) { return Rng(derive_seed(seed, index)); }

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vector uniform_box(Rng& rng, int dim, double radius) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = radius > 0 ? uniform(rng, -radius, radius) : 0.0;
    return v;
}

/// Gaussian noise clipped coordinate-wise to [-clip, clip].
struct NoiseSpec {
    double std = 0.0;
    double clip = 1.0;

    /// Almost-sure bound on each coordinate; this is the sigma that certificates use.
    double bound() const { return std > 0 ? clip : 0.0; }
};

inline Vector clipped_gaussian(Rng& rng, int dim, const NoiseSpec& spec) {
    Vector v = Vector::Zero(dim);
    if (spec.std <= 0) return v;
    std::normal_distribution<double> normal(0.0, spec.std);
    for (int i = 0; i < dim; ++i) v(i) = std::clamp(normal(rng), -spec.clip, spec.clip);
    return v;
}

}  // namespace pbc
