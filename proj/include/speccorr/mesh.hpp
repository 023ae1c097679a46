#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace speccorr {

using VertexMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using FaceMatrix = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Optional per-vertex channels carried through I/O untouched.
struct VertexAttributes
{
    Eigen::MatrixXd colors;    ///< |V| x 3, components in [0, 1]; empty when absent
    Eigen::MatrixXd texcoords; ///< |V| x 2; empty when absent

    bool empty() const { return colors.size() == 0 && texcoords.size() == 0; }
};

///
/// Immutable, validated triangle mesh.
///
/// Construction checks that every face references three distinct in-range vertices, that no
/// face is degenerate (area below 1e-12 times the squared bounding-box diagonal) and that
/// adjacent faces agree on orientation (no directed edge is used twice).
///
class TriangleMesh
{
public:
    TriangleMesh() = default;
    TriangleMesh(VertexMatrix vertices, FaceMatrix faces, VertexAttributes attributes = {});

    int num_vertices() const { return static_cast<int>(m_vertices.rows()); }
    int num_faces() const { return static_cast<int>(m_faces.rows()); }

    const VertexMatrix& vertices() const { return m_vertices; }
    const FaceMatrix& faces() const { return m_faces; }
    const VertexAttributes& attributes() const { return m_attributes; }

    Eigen::Vector3d vertex(int v) const { return m_vertices.row(v).transpose(); }
    std::array<int, 3> face(int f) const { return {m_faces(f, 0), m_faces(f, 1), m_faces(f, 2)}; }

    double bounding_box_diagonal() const;

    /// FNV-1a hash over vertex coordinates and face indices (attributes excluded).
    std::uint64_t content_hash() const;

    /// Same connectivity with new positions; re-validated.
    TriangleMesh with_vertices(VertexMatrix vertices) const;
    TriangleMesh with_attributes(VertexAttributes attributes) const;

private:
    void validate() const;

    VertexMatrix m_vertices;
    FaceMatrix m_faces;
    VertexAttributes m_attributes;
};

/// Per-vertex lumped area weights (barycentric one-third rule).
using VertexMasses = Eigen::VectorXd;

Eigen::VectorXd face_areas(const TriangleMesh& mesh);
VertexMasses vertex_masses(const TriangleMesh& mesh);
double total_area(const TriangleMesh& mesh);

struct MeshNormals
{
    VertexMatrix face;   ///< unit normal per face, winding-order cross product
    VertexMatrix vertex; ///< area-weighted average of incident face normals, normalized
};

/// Throws MeshError on a zero-length face or vertex normal.
MeshNormals normals(const TriangleMesh& mesh);

///
/// Per-face linear operators taking the three corner values of a piecewise-linear scalar field
/// to its constant in-plane gradient.
///
class FaceBasisGradients
{
public:
    FaceBasisGradients() = default;
    explicit FaceBasisGradients(std::vector<Eigen::Matrix3d> operators)
        : m_operators(std::move(operators))
    {}

    int num_faces() const { return static_cast<int>(m_operators.size()); }

    /// Column k is the gradient of the hat function of corner k.
    const Eigen::Matrix3d& face_operator(int f) const { return m_operators[f]; }

    /// Gradient on face `f` of the field given by its three corner values.
    Eigen::Vector3d gradient(int f, const Eigen::Vector3d& corner_values) const
    {
        return m_operators[f] * corner_values;
    }

    /// Gradients of every column of `fields` (|V| x k). Result is |F| x 3k, laid out
    /// [g_0x g_0y g_0z g_1x ...] per face.
    Eigen::MatrixXd gradients(const TriangleMesh& mesh, const Eigen::MatrixXd& fields) const;

private:
    std::vector<Eigen::Matrix3d> m_operators;
};

FaceBasisGradients face_gradients(const TriangleMesh& mesh);

/// Unique undirected edges (a < b), sorted.
std::vector<std::array<int, 2>> unique_edges(const TriangleMesh& mesh);

/// Sorted neighbour lists per vertex.
std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh);

/// Number of connected components of the vertex-edge graph. Isolated vertices count.
int count_components(const TriangleMesh& mesh);

/// Rigid/similarity transform helper: x -> scale * R x + t.
TriangleMesh transformed(
    const TriangleMesh& mesh,
    const Eigen::Matrix3d& rotation,
    const Eigen::Vector3d& translation,
    double scale = 1.0);

///
/// Relabels vertices: new vertex `permutation[v]` is old vertex `v`. Faces and attributes follow.
///
TriangleMesh permuted(const TriangleMesh& mesh, std::span<const int> permutation);

} // namespace speccorr
