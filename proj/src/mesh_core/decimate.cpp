#include <speccorr/decimate.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace speccorr {

namespace {

using Quadric = Eigen::Matrix4d;

constexpr double kBoundaryWeight = 100.0;
constexpr double kMinNormalDot = 0.2;

Quadric plane_quadric(const Eigen::Vector3d& normal, const Eigen::Vector3d& point, double weight)
{
    Eigen::Vector4d p;
    p << normal, -normal.dot(point);
    return weight * p * p.transpose();
}

double quadric_error(const Quadric& q, const Eigen::Vector3d& x)
{
    Eigen::Vector4d h;
    h << x, 1.0;
    return h.dot(q * h);
}

struct Candidate
{
    double cost;
    int u;
    int v;
    unsigned version_u;
    unsigned version_v;
    Eigen::Vector3d target;

    bool operator>(const Candidate& other) const
    {
        if (cost != other.cost) return cost > other.cost;
        if (u != other.u) return u > other.u;
        return v > other.v;
    }
};

class Decimator
{
public:
    Decimator(const TriangleMesh& mesh)
        : m_pos(mesh.vertices())
        , m_faces(static_cast<std::size_t>(mesh.num_faces()))
        , m_face_alive(static_cast<std::size_t>(mesh.num_faces()), true)
        , m_incident(static_cast<std::size_t>(mesh.num_vertices()))
        , m_quadric(static_cast<std::size_t>(mesh.num_vertices()), Quadric::Zero())
        , m_version(static_cast<std::size_t>(mesh.num_vertices()), 0)
        , m_owner(static_cast<std::size_t>(mesh.num_vertices()))
        , m_live_faces(mesh.num_faces())
    {
        const double diag = mesh.bounding_box_diagonal();
        m_min_area = 1e-10 * diag * diag;
        std::iota(m_owner.begin(), m_owner.end(), 0);
        for (int f = 0; f < mesh.num_faces(); ++f) {
            m_faces[f] = mesh.face(f);
            for (int c = 0; c < 3; ++c) m_incident[m_faces[f][c]].push_back(f);
        }
        for (int f = 0; f < mesh.num_faces(); ++f) {
            const auto& t = m_faces[f];
            const Eigen::Vector3d n = cross(t);
            const double area = 0.5 * n.norm();
            const Quadric q = plane_quadric(n.normalized(), pos(t[0]), area);
            for (int c = 0; c < 3; ++c) m_quadric[t[c]] += q;
        }
        for (int f = 0; f < mesh.num_faces(); ++f) {
            const auto& t = m_faces[f];
            const Eigen::Vector3d n = cross(t).normalized();
            for (int c = 0; c < 3; ++c) {
                const int a = t[c];
                const int b = t[(c + 1) % 3];
                if (count_edge_faces(a, b) != 1) continue;
                const Eigen::Vector3d e = pos(b) - pos(a);
                const Eigen::Vector3d side = e.cross(n).normalized();
                const Quadric q = plane_quadric(side, pos(a), kBoundaryWeight * e.squaredNorm());
                m_quadric[a] += q;
                m_quadric[b] += q;
            }
        }
        for (const auto& [a, b] : unique_edges(mesh)) push(a, b);
    }

    bool run(int target_faces)
    {
        while (m_live_faces > target_faces) {
            if (m_heap.empty()) return false;
            const Candidate c = m_heap.top();
            m_heap.pop();
            if (!alive(c.u) || !alive(c.v)) continue;
            if (c.version_u != m_version[c.u] || c.version_v != m_version[c.v]) continue;
            collapse_if_valid(c);
        }
        return true;
    }

    DecimationResult result(const TriangleMesh& original) const
    {
        const int nv = static_cast<int>(m_pos.rows());
        std::vector<int> compact(static_cast<std::size_t>(nv), -1);
        int next = 0;
        for (int v = 0; v < nv; ++v) {
            if (alive(v)) compact[v] = next++;
        }
        VertexMatrix verts(next, 3);
        for (int v = 0; v < nv; ++v) {
            if (compact[v] >= 0) verts.row(compact[v]) = m_pos.row(v);
        }
        std::vector<std::array<int, 3>> live;
        for (std::size_t f = 0; f < m_faces.size(); ++f) {
            if (m_face_alive[f]) live.push_back(m_faces[f]);
        }
        FaceMatrix faces(static_cast<Eigen::Index>(live.size()), 3);
        for (std::size_t f = 0; f < live.size(); ++f) {
            for (int c = 0; c < 3; ++c) faces(static_cast<Eigen::Index>(f), c) = compact[live[f][c]];
        }

        DecimationResult out{TriangleMesh(std::move(verts), std::move(faces)), {}, {}, false};
        out.vertex_map.resize(static_cast<std::size_t>(nv));
        out.representative.assign(static_cast<std::size_t>(next), -1);
        std::vector<double> best(static_cast<std::size_t>(next), std::numeric_limits<double>::infinity());
        for (int v = 0; v < nv; ++v) {
            const int d = compact[root(v)];
            out.vertex_map[v] = d;
            const double dist = (original.vertex(v) - out.mesh.vertex(d)).squaredNorm();
            if (dist < best[d]) {
                best[d] = dist;
                out.representative[d] = v;
            }
        }
        return out;
    }

private:
    Eigen::Vector3d pos(int v) const { return m_pos.row(v).transpose(); }

    Eigen::Vector3d cross(const std::array<int, 3>& t) const
    {
        return (pos(t[1]) - pos(t[0])).cross(pos(t[2]) - pos(t[0]));
    }

    bool alive(int v) const { return m_owner[v] == v; }

    int root(int v) const
    {
        while (m_owner[v] != v) v = m_owner[v];
        return v;
    }

    int count_edge_faces(int a, int b) const
    {
        int n = 0;
        for (int f : m_incident[a]) {
            if (!m_face_alive[f]) continue;
            const auto& t = m_faces[f];
            if (t[0] == b || t[1] == b || t[2] == b) ++n;
        }
        return n;
    }

    std::vector<int> neighbours(int v) const
    {
        std::vector<int> out;
        for (int f : m_incident[v]) {
            if (!m_face_alive[f]) continue;
            for (int w : m_faces[f]) {
                if (w != v) out.push_back(w);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    bool is_boundary_vertex(int v) const
    {
        for (int w : neighbours(v)) {
            if (count_edge_faces(v, w) == 1) return true;
        }
        return false;
    }

    void push(int a, int b)
    {
        const Quadric q = m_quadric[a] + m_quadric[b];
        const Eigen::Matrix3d A = q.topLeftCorner<3, 3>();
        const Eigen::Vector3d rhs = -q.topRightCorner<3, 1>();
        Eigen::Vector3d target;
        double cost = 0.0;
        bool solved = false;
        const Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
        if (lu.isInvertible() && lu.rcond() > 1e-9) {
            target = lu.solve(rhs);
            cost = quadric_error(q, target);
            // guard against far-off placements in nearly flat neighbourhoods
            const double reach = 2.0 * (pos(a) - pos(b)).norm();
            solved = (target - 0.5 * (pos(a) + pos(b))).norm() <= reach;
        }
        if (!solved) {
            const Eigen::Vector3d options[3] = {pos(a), pos(b), 0.5 * (pos(a) + pos(b))};
            cost = std::numeric_limits<double>::infinity();
            for (const auto& p : options) {
                const double e = quadric_error(q, p);
                if (e < cost) {
                    cost = e;
                    target = p;
                }
            }
        }
        if (a > b) std::swap(a, b);
        m_heap.push({std::max(cost, 0.0), a, b, m_version[a], m_version[b], target});
    }

    bool link_condition(int u, int v) const
    {
        const auto nu = neighbours(u);
        const auto nv = neighbours(v);
        std::vector<int> common;
        std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
        std::vector<int> opposite;
        for (int f : m_incident[u]) {
            if (!m_face_alive[f]) continue;
            const auto& t = m_faces[f];
            if (t[0] != v && t[1] != v && t[2] != v) continue;
            for (int w : t) {
                if (w != u && w != v) opposite.push_back(w);
            }
        }
        std::sort(opposite.begin(), opposite.end());
        return common == opposite;
    }

    bool geometry_ok(int u, int v, const Eigen::Vector3d& target) const
    {
        for (int x : {u, v}) {
            for (int f : m_incident[x]) {
                if (!m_face_alive[f]) continue;
                const auto& t = m_faces[f];
                const bool shared = (t[0] == u || t[1] == u || t[2] == u) && (t[0] == v || t[1] == v || t[2] == v);
                if (shared) continue;
                const Eigen::Vector3d before = cross(t);
                Eigen::Vector3d p[3];
                for (int c = 0; c < 3; ++c) p[c] = (t[c] == x) ? target : pos(t[c]);
                const Eigen::Vector3d after = (p[1] - p[0]).cross(p[2] - p[0]);
                if (0.5 * after.norm() < m_min_area) return false;
                if (before.normalized().dot(after.normalized()) < kMinNormalDot) return false;
            }
        }
        return true;
    }

    void collapse_if_valid(const Candidate& c)
    {
        const int u = c.u;
        const int v = c.v;
        const int shared = count_edge_faces(u, v);
        if (shared == 0) return;
        if (m_live_faces - shared < 4) return;
        if (!link_condition(u, v)) return;
        if (shared == 2 && is_boundary_vertex(u) && is_boundary_vertex(v)) return;
        if (!geometry_ok(u, v, c.target)) return;

        for (int f : m_incident[v]) {
            if (!m_face_alive[f]) continue;
            auto& t = m_faces[f];
            if (t[0] == u || t[1] == u || t[2] == u) {
                m_face_alive[f] = false;
                --m_live_faces;
                continue;
            }
            for (int& w : t) {
                if (w == v) w = u;
            }
            m_incident[u].push_back(f);
        }
        m_incident[v].clear();
        auto& inc = m_incident[u];
        inc.erase(std::remove_if(inc.begin(), inc.end(), [this](int f) { return !m_face_alive[f]; }), inc.end());
        std::sort(inc.begin(), inc.end());
        inc.erase(std::unique(inc.begin(), inc.end()), inc.end());

        m_owner[v] = u;
        m_pos.row(u) = c.target.transpose();
        m_quadric[u] += m_quadric[v];
        ++m_version[u];
        ++m_version[v];
        for (int w : neighbours(u)) push(u, w);
    }

    VertexMatrix m_pos;
    std::vector<std::array<int, 3>> m_faces;
    std::vector<bool> m_face_alive;
    std::vector<std::vector<int>> m_incident;
    std::vector<Quadric> m_quadric;
    std::vector<unsigned> m_version;
    std::vector<int> m_owner;
    int m_live_faces;
    double m_min_area = 0.0;
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> m_heap;
};

} // namespace

DecimationResult decimate(const TriangleMesh& mesh, int target_faces)
{
    if (target_faces < 4 || target_faces > mesh.num_faces()) {
        throw std::invalid_argument("decimation target must lie in [4, face count]");
    }
    if (target_faces == mesh.num_faces()) {
        DecimationResult out{mesh, {}, {}, false};
        out.vertex_map.resize(static_cast<std::size_t>(mesh.num_vertices()));
        std::iota(out.vertex_map.begin(), out.vertex_map.end(), 0);
        out.representative = out.vertex_map;
        return out;
    }
    Decimator d(mesh);
    const bool reached = d.run(target_faces);
    DecimationResult out = d.result(mesh);
    out.stalled = !reached;
    return out;
}

} // namespace speccorr
