#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace speccorr {

/// Point map X -> Y, possibly defined only on a subset of X.
struct Correspondence
{
    enum class Stage { Truth, SQCM, SKM, FSKM, ICP, External };

    std::vector<int> map;    ///< |X| entries; -1 outside the domain
    std::vector<int> domain; ///< ascending vertices of X where the map is defined
    Stage provenance = Stage::External;

    static Correspondence dense(std::vector<int> targets, Stage stage)
    {
        Correspondence c;
        c.domain.resize(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) c.domain[i] = static_cast<int>(i);
        c.map = std::move(targets);
        c.provenance = stage;
        return c;
    }

    /// `targets[k]` is the image of `vertices[k]`.
    static Correspondence partial(int num_x, const std::vector<int>& vertices, const std::vector<int>& targets, Stage stage)
    {
        if (vertices.size() != targets.size()) throw std::invalid_argument("domain and targets differ in size");
        Correspondence c;
        c.map.assign(static_cast<std::size_t>(num_x), -1);
        for (std::size_t k = 0; k < vertices.size(); ++k) c.map[vertices[k]] = targets[k];
        c.domain = vertices;
        std::sort(c.domain.begin(), c.domain.end());
        c.domain.erase(std::unique(c.domain.begin(), c.domain.end()), c.domain.end());
        c.provenance = stage;
        return c;
    }

    int num_x() const { return static_cast<int>(map.size()); }
    bool is_dense() const { return domain.size() == map.size(); }
    int operator[](int x) const { return map[x]; }

    /// Throws std::out_of_range when a target lies outside [0, num_y).
    void check(int num_y) const
    {
        for (int x : domain) {
            if (map[x] < 0 || map[x] >= num_y) {
                throw std::out_of_range("correspondence target out of range at vertex " + std::to_string(x));
            }
        }
    }
};

inline const char* stage_name(Correspondence::Stage s)
{
    switch (s) {
    case Correspondence::Stage::Truth: return "truth";
    case Correspondence::Stage::SQCM: return "sqcm";
    case Correspondence::Stage::SKM: return "skm";
    case Correspondence::Stage::FSKM: return "fskm";
    case Correspondence::Stage::ICP: return "icp";
    case Correspondence::Stage::External: return "external";
    }
    return "unknown";
}

} // namespace speccorr
