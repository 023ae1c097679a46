#pragma once

#include <speccorr/mesh.hpp>

#include <vector>

namespace speccorr {

struct DecimationResult
{
    TriangleMesh mesh;
    std::vector<int> vertex_map;     ///< original vertex -> decimated vertex it collapsed into
    std::vector<int> representative; ///< decimated vertex -> closest original vertex of its cluster
    bool stalled = false;            ///< no valid collapse remained before reaching the target
};

///
/// Quadric-error edge collapse with optimal vertex placement.
///
/// Boundary edges carry a perpendicular constraint quadric weighted x100. Collapses that break the
/// link condition, flip a face normal, create a sliver or pinch two boundary loops are skipped.
/// Throws std::invalid_argument unless 4 <= target_faces <= mesh.num_faces().
///
DecimationResult decimate(const TriangleMesh& mesh, int target_faces);

} // namespace speccorr
