#include <speccorr/random.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace speccorr {

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n == 0) throw std::invalid_argument("empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = 0;
    do {
        x = m_engine();
    } while (x >= limit);
    return x % n;
}

std::vector<int> Rng::sample(int n, int k)
{
    k = std::clamp(k, 0, n);
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<int>(i + below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<int> Rng::weighted_sample(std::span<const double> weights, int k)
{
    const int n = static_cast<int>(weights.size());
    k = std::clamp(k, 0, n);
    // Efraimidis-Spirakis: keep the k largest u^(1/w)
    std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = uniform();
        const double w = weights[i];
        keys[i] = {w > 0.0 ? std::log(u > 0.0 ? u : 0x1.0p-60) / w : -std::numeric_limits<double>::infinity(), i};
    }
    std::partial_sort(keys.begin(), keys.begin() + k, keys.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<int> out(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) out[i] = keys[i].second;
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer over the combined value
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace speccorr
