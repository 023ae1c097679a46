#include <speccorr/errors.hpp>
#include <speccorr/mesh.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <unordered_set>

namespace speccorr {

namespace {

std::uint64_t directed_key(int a, int b)
{
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

Eigen::Vector3d face_cross(const TriangleMesh& mesh, int f)
{
    const auto [i, j, k] = mesh.face(f);
    const Eigen::Vector3d pi = mesh.vertex(i);
    return (mesh.vertex(j) - pi).cross(mesh.vertex(k) - pi);
}

class UnionFind
{
public:
    explicit UnionFind(int n)
        : m_parent(n)
    {
        std::iota(m_parent.begin(), m_parent.end(), 0);
    }

    int find(int x)
    {
        while (m_parent[x] != x) {
            m_parent[x] = m_parent[m_parent[x]];
            x = m_parent[x];
        }
        return x;
    }

    void unite(int a, int b) { m_parent[find(a)] = find(b); }

private:
    std::vector<int> m_parent;
};

} // namespace

TriangleMesh::TriangleMesh(VertexMatrix vertices, FaceMatrix faces, VertexAttributes attributes)
    : m_vertices(std::move(vertices))
    , m_faces(std::move(faces))
    , m_attributes(std::move(attributes))
{
    validate();
}

void TriangleMesh::validate() const
{
    const int nv = num_vertices();
    const int nf = num_faces();
    if (nv == 0 || nf == 0) {
        throw MeshError(MeshError::Kind::Empty, 0, "mesh has no vertices or no faces");
    }
    if (m_attributes.colors.size() != 0 && m_attributes.colors.rows() != nv) {
        throw MeshError(MeshError::Kind::IndexOutOfRange, m_attributes.colors.rows(), "color channel size mismatch");
    }
    if (m_attributes.texcoords.size() != 0 && m_attributes.texcoords.rows() != nv) {
        throw MeshError(
            MeshError::Kind::IndexOutOfRange,
            m_attributes.texcoords.rows(),
            "texcoord channel size mismatch");
    }

    for (int f = 0; f < nf; ++f) {
        for (int c = 0; c < 3; ++c) {
            const int v = m_faces(f, c);
            if (v < 0 || v >= nv) {
                throw MeshError(MeshError::Kind::IndexOutOfRange, f, "face index out of range");
            }
        }
        if (m_faces(f, 0) == m_faces(f, 1) || m_faces(f, 1) == m_faces(f, 2) ||
            m_faces(f, 0) == m_faces(f, 2)) {
            throw MeshError(MeshError::Kind::RepeatedIndex, f, "face repeats a vertex");
        }
    }

    const double diag = bounding_box_diagonal();
    const double min_area = 1e-12 * diag * diag;
    for (int f = 0; f < nf; ++f) {
        if (0.5 * face_cross(*this, f).norm() < min_area) {
            throw MeshError(MeshError::Kind::DegenerateFace, f, "degenerate face");
        }
    }

    std::unordered_set<std::uint64_t> directed;
    directed.reserve(static_cast<std::size_t>(3 * nf));
    for (int f = 0; f < nf; ++f) {
        for (int c = 0; c < 3; ++c) {
            const int a = m_faces(f, c);
            const int b = m_faces(f, (c + 1) % 3);
            if (!directed.insert(directed_key(a, b)).second) {
                throw MeshError(
                    MeshError::Kind::InconsistentOrientation,
                    f,
                    "directed edge used twice (inconsistent orientation or non-manifold edge)");
            }
        }
    }
}

double TriangleMesh::bounding_box_diagonal() const
{
    if (m_vertices.rows() == 0) return 0.0;
    const Eigen::RowVector3d lo = m_vertices.colwise().minCoeff();
    const Eigen::RowVector3d hi = m_vertices.colwise().maxCoeff();
    return (hi - lo).norm();
}

std::uint64_t TriangleMesh::content_hash() const
{
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    const std::int64_t counts[2] = {m_vertices.rows(), m_faces.rows()};
    mix(counts, sizeof(counts));
    mix(m_vertices.data(), sizeof(double) * static_cast<std::size_t>(m_vertices.size()));
    mix(m_faces.data(), sizeof(int) * static_cast<std::size_t>(m_faces.size()));
    return h;
}

TriangleMesh TriangleMesh::with_vertices(VertexMatrix vertices) const
{
    return TriangleMesh(std::move(vertices), m_faces, m_attributes);
}

TriangleMesh TriangleMesh::with_attributes(VertexAttributes attributes) const
{
    return TriangleMesh(m_vertices, m_faces, std::move(attributes));
}

Eigen::VectorXd face_areas(const TriangleMesh& mesh)
{
    Eigen::VectorXd areas(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        areas[f] = 0.5 * face_cross(mesh, f).norm();
    }
    return areas;
}

VertexMasses vertex_masses(const TriangleMesh& mesh)
{
    VertexMasses masses = VertexMasses::Zero(mesh.num_vertices());
    const Eigen::VectorXd areas = face_areas(mesh);
    for (int f = 0; f < mesh.num_faces(); ++f) {
        for (int c = 0; c < 3; ++c) masses[mesh.faces()(f, c)] += areas[f] / 3.0;
    }
    return masses;
}

double total_area(const TriangleMesh& mesh)
{
    return face_areas(mesh).sum();
}

MeshNormals normals(const TriangleMesh& mesh)
{
    MeshNormals out;
    out.face.resize(mesh.num_faces(), 3);
    out.vertex = VertexMatrix::Zero(mesh.num_vertices(), 3);
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Eigen::Vector3d n = face_cross(mesh, f);
        const double len = n.norm();
        if (!(len > 0.0)) throw MeshError(MeshError::Kind::DegenerateFace, f, "zero-length face normal");
        out.face.row(f) = (n / len).transpose();
        // the raw cross product is already weighted by twice the face area
        for (int c = 0; c < 3; ++c) out.vertex.row(mesh.faces()(f, c)) += n.transpose();
    }
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const double len = out.vertex.row(v).norm();
        if (!(len > 0.0)) throw MeshError(MeshError::Kind::DegenerateFace, v, "zero-length vertex normal");
        out.vertex.row(v) /= len;
    }
    return out;
}

Eigen::MatrixXd FaceBasisGradients::gradients(const TriangleMesh& mesh, const Eigen::MatrixXd& fields) const
{
    const Eigen::Index k = fields.cols();
    Eigen::MatrixXd out(num_faces(), 3 * k);
    for (int f = 0; f < num_faces(); ++f) {
        const auto [a, b, c] = mesh.face(f);
        for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Vector3d vals(fields(a, j), fields(b, j), fields(c, j));
            out.block<1, 3>(f, 3 * j) = (m_operators[f] * vals).transpose();
        }
    }
    return out;
}

FaceBasisGradients face_gradients(const TriangleMesh& mesh)
{
    std::vector<Eigen::Matrix3d> ops(static_cast<std::size_t>(mesh.num_faces()));
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const auto [i, j, k] = mesh.face(f);
        const Eigen::Vector3d p[3] = {mesh.vertex(i), mesh.vertex(j), mesh.vertex(k)};
        const Eigen::Vector3d n = (p[1] - p[0]).cross(p[2] - p[0]);
        const double twice_area = n.norm();
        if (!(twice_area > 0.0)) throw MeshError(MeshError::Kind::DegenerateFace, f, "degenerate face");
        const Eigen::Vector3d unit = n / twice_area;
        Eigen::Matrix3d& op = ops[static_cast<std::size_t>(f)];
        for (int c = 0; c < 3; ++c) {
            // hat function of corner c rises perpendicular to the opposite edge
            const Eigen::Vector3d opposite = p[(c + 2) % 3] - p[(c + 1) % 3];
            op.col(c) = unit.cross(opposite) / twice_area;
        }
    }
    return FaceBasisGradients(std::move(ops));
}

std::vector<std::array<int, 2>> unique_edges(const TriangleMesh& mesh)
{
    std::vector<std::array<int, 2>> edges;
    edges.reserve(static_cast<std::size_t>(3 * mesh.num_faces()));
    for (int f = 0; f < mesh.num_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int a = mesh.faces()(f, c);
            int b = mesh.faces()(f, (c + 1) % 3);
            if (a > b) std::swap(a, b);
            edges.push_back({a, b});
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh)
{
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(mesh.num_vertices()));
    for (const auto& [a, b] : unique_edges(mesh)) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
}

int count_components(const TriangleMesh& mesh)
{
    UnionFind uf(mesh.num_vertices());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        uf.unite(mesh.faces()(f, 0), mesh.faces()(f, 1));
        uf.unite(mesh.faces()(f, 1), mesh.faces()(f, 2));
    }
    int count = 0;
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        if (uf.find(v) == v) ++count;
    }
    return count;
}

TriangleMesh transformed(
    const TriangleMesh& mesh,
    const Eigen::Matrix3d& rotation,
    const Eigen::Vector3d& translation,
    double scale)
{
    VertexMatrix v = (scale * (mesh.vertices() * rotation.transpose())).rowwise() + translation.transpose();
    return mesh.with_vertices(std::move(v));
}

TriangleMesh permuted(const TriangleMesh& mesh, std::span<const int> permutation)
{
    const int nv = mesh.num_vertices();
    VertexMatrix v(nv, 3);
    VertexAttributes attr;
    const auto& src = mesh.attributes();
    if (src.colors.size()) attr.colors.resize(nv, 3);
    if (src.texcoords.size()) attr.texcoords.resize(nv, 2);
    for (int i = 0; i < nv; ++i) {
        const int to = permutation[static_cast<std::size_t>(i)];
        v.row(to) = mesh.vertices().row(i);
        if (src.colors.size()) attr.colors.row(to) = src.colors.row(i);
        if (src.texcoords.size()) attr.texcoords.row(to) = src.texcoords.row(i);
    }
    FaceMatrix f = mesh.faces();
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = permutation[static_cast<std::size_t>(f.data()[i])];
    return TriangleMesh(std::move(v), std::move(f), std::move(attr));
}

} // namespace speccorr
