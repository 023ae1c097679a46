#pragma once

#include <speccorr/mesh.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace speccorr {

/// Subdivided icosahedron projected to the sphere of the given radius. Level L has
/// 10 * 4^L + 2 vertices; the vertex set is symmetric under x -> -x.
TriangleMesh icosphere(int level, double radius = 1.0);

/// Unit square [0,1]^2 in the z = 0 plane split into n x n cells of two right triangles.
TriangleMesh square_grid(int n);

struct BlobParams
{
    int level = 4;
    Eigen::Vector3d axes{1.0, 0.75, 0.55};
    int bumps = 6;
    double amplitude = 0.25;
    double width = 0.45; ///< angular radius of a bump, radians
    std::uint64_t seed = 1;
    bool mirror_symmetric = false; ///< bumps placed in pairs reflected through x = 0
};

/// Radially bumped ellipsoid. Without mirror symmetry the shape has no intrinsic symmetries.
TriangleMesh blob(const BlobParams& params);

/// Vertex v -> vertex at the position reflected through x = 0. Throws Error when a vertex has no
/// mirror partner within 1e-9 of the bounding-box diagonal.
std::vector<int> mirror_map(const TriangleMesh& mesh);

/// Bends the mesh around an axis parallel to y at height z = radius. Arc length along x is kept
/// on the z = 0 sheet, so elongated shapes deform near-isometrically.
TriangleMesh bent(const TriangleMesh& mesh, double radius);

Eigen::Matrix3d random_rotation(std::uint64_t seed);

/// Uniform random permutation of [0, n).
std::vector<int> random_permutation(int n, std::uint64_t seed);

} // namespace speccorr
