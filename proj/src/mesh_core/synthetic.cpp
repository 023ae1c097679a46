#include <speccorr/errors.hpp>
#include <speccorr/random.hpp>
#include <speccorr/synthetic.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace speccorr {

namespace {

Eigen::Vector3d random_direction(Rng& rng)
{
    const double z = 2.0 * rng.uniform() - 1.0;
    const double a = 2.0 * std::numbers::pi * rng.uniform();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(a), r * std::sin(a), z};
}

} // namespace

TriangleMesh icosphere(int level, double radius)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& p : v) p.normalize();
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
        {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(4 * f.size());
        for (const auto& [a, b, c] : f) {
            const int ab = mid(a, b);
            const int bc = mid(b, c);
            const int ca = mid(c, a);
            next.push_back({a, ab, ca});
            next.push_back({b, bc, ab});
            next.push_back({c, ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    VertexMatrix verts(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) verts.row(static_cast<Eigen::Index>(i)) = radius * v[i].transpose();
    FaceMatrix faces(static_cast<Eigen::Index>(f.size()), 3);
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (int c = 0; c < 3; ++c) faces(static_cast<Eigen::Index>(i), c) = f[i][c];
    }
    return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh square_grid(int n)
{
    if (n < 1) throw Error("grid needs at least one cell");
    const int side = n + 1;
    VertexMatrix verts(side * side, 3);
    for (int j = 0; j < side; ++j) {
        for (int i = 0; i < side; ++i) {
            verts.row(j * side + i) << static_cast<double>(i) / n, static_cast<double>(j) / n, 0.0;
        }
    }
    FaceMatrix faces(2 * n * n, 3);
    int k = 0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int a = j * side + i;
            const int b = a + 1;
            const int c = a + side;
            const int d = c + 1;
            faces.row(k++) << a, b, d;
            faces.row(k++) << a, d, c;
        }
    }
    return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh blob(const BlobParams& params)
{
    const TriangleMesh sphere = icosphere(params.level);
    Rng rng(params.seed);
    std::vector<Eigen::Vector3d> centers;
    std::vector<double> heights;
    for (int k = 0; k < params.bumps; ++k) {
        const Eigen::Vector3d c = random_direction(rng);
        const double h = params.amplitude * (0.5 + 0.5 * rng.uniform());
        centers.push_back(c);
        heights.push_back(h);
        if (params.mirror_symmetric) {
            centers.emplace_back(-c.x(), c.y(), c.z());
            heights.push_back(h);
        }
    }
    const double w2 = params.width * params.width;
    VertexMatrix verts(sphere.num_vertices(), 3);
    for (int i = 0; i < sphere.num_vertices(); ++i) {
        const Eigen::Vector3d u = sphere.vertex(i);
        double r = 1.0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const double angle = std::acos(std::clamp(u.dot(centers[k]), -1.0, 1.0));
            r += heights[k] * std::exp(-angle * angle / w2);
        }
        verts.row(i) = (r * u).cwiseProduct(params.axes).transpose();
    }
    return sphere.with_vertices(std::move(verts));
}

std::vector<int> mirror_map(const TriangleMesh& mesh)
{
    const double tol = 1e-9 * mesh.bounding_box_diagonal();
    auto key = [tol](const Eigen::Vector3d& p) {
        return std::array<long long, 3>{
            std::llround(p.x() / (8 * tol)), std::llround(p.y() / (8 * tol)), std::llround(p.z() / (8 * tol))};
    };
    std::map<std::array<long long, 3>, std::vector<int>> buckets;
    for (int v = 0; v < mesh.num_vertices(); ++v) buckets[key(mesh.vertex(v))].push_back(v);

    std::vector<int> out(static_cast<std::size_t>(mesh.num_vertices()), -1);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        Eigen::Vector3d target = mesh.vertex(v);
        target.x() = -target.x();
        const auto k = key(target);
        // probe neighbouring buckets so rounding at a cell boundary cannot hide the partner
        for (long long dx = -1; dx <= 1 && out[v] < 0; ++dx) {
            for (long long dy = -1; dy <= 1 && out[v] < 0; ++dy) {
                for (long long dz = -1; dz <= 1 && out[v] < 0; ++dz) {
                    const auto it = buckets.find({k[0] + dx, k[1] + dy, k[2] + dz});
                    if (it == buckets.end()) continue;
                    for (int w : it->second) {
                        if ((mesh.vertex(w) - target).norm() <= tol) {
                            out[v] = w;
                            break;
                        }
                    }
                }
            }
        }
        if (out[v] < 0) throw Error("vertex " + std::to_string(v) + " has no mirror partner");
    }
    return out;
}

TriangleMesh bent(const TriangleMesh& mesh, double radius)
{
    VertexMatrix verts(mesh.num_vertices(), 3);
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        const Eigen::Vector3d p = mesh.vertex(i);
        const double theta = p.x() / radius;
        const double r = radius - p.z();
        verts.row(i) << r * std::sin(theta), p.y(), radius - r * std::cos(theta);
    }
    return mesh.with_vertices(std::move(verts));
}

Eigen::Matrix3d random_rotation(std::uint64_t seed)
{
    Rng rng(seed);
    // uniform unit quaternion (Shoemake)
    const double u1 = rng.uniform();
    const double u2 = 2.0 * std::numbers::pi * rng.uniform();
    const double u3 = 2.0 * std::numbers::pi * rng.uniform();
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    const Eigen::Quaterniond q(a * std::sin(u2), a * std::cos(u2), b * std::sin(u3), b * std::cos(u3));
    return q.normalized().toRotationMatrix();
}

std::vector<int> random_permutation(int n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(static_cast<std::uint64_t>(i + 1))]);
    return p;
}

} // namespace speccorr
