#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace speccorr {

/// Seeded generator whose derived draws do not depend on the standard library's distributions,
/// so sequences are identical across toolchains.
class Rng
{
public:
    explicit Rng(std::uint64_t seed)
        : m_engine(seed)
    {}

    std::uint64_t bits() { return m_engine(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);

    /// k distinct indices from [0, n), uniform, ascending.
    std::vector<int> sample(int n, int k);

    /// k distinct indices drawn with probability proportional to `weights`, ascending.
    std::vector<int> weighted_sample(std::span<const double> weights, int k);

private:
    std::mt19937_64 m_engine;
};

/// Deterministic child seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace speccorr
