#include <speccorr/errors.hpp>
#include <speccorr/matching.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <sstream>

namespace speccorr {

namespace {

MomentTensor moments_of(const Eigen::MatrixXd& phi, const VertexMasses& masses)
{
    const int n0 = static_cast<int>(phi.cols());
    MomentTensor t;
    t.n0 = n0;
    t.xi.assign(static_cast<std::size_t>(n0 * n0 * n0), 0.0);
    for (int i = 0; i < n0; ++i) {
        for (int j = i; j < n0; ++j) {
            const Eigen::VectorXd pij = phi.col(i).cwiseProduct(phi.col(j)).cwiseProduct(masses);
            for (int k = j; k < n0; ++k) {
                const double v = pij.dot(phi.col(k));
                const int idx[3] = {i, j, k};
                // scatter to all six index orders
                static constexpr int orders[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
                for (const auto& o : orders) {
                    t.xi[(idx[o[0]] * n0 + idx[o[1]]) * n0 + idx[o[2]]] = v;
                }
            }
        }
    }
    return t;
}

} // namespace

MomentTensor third_order_moments(const SpectralBasis& basis, int n0)
{
    if (n0 > basis.size()) throw Error("N0 exceeds the number of eigenfunctions");
    return moments_of(basis.eigenfunctions.middleCols(1, n0), basis.masses);
}

MomentTensor third_order_moments(const SpectralBasis& basis, const SignPermutation& sp)
{
    return moments_of(matched_functions(basis, sp), basis.masses);
}

double moment_objective(const MomentTensor& x, const MomentTensor& y, const SignPermutation& sp)
{
    const int n = x.n0;
    double f = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                const double s = sp.signs[i] * sp.signs[j] * sp.signs[k];
                const double d = x(i, j, k) - s * y(sp.perm[i], sp.perm[j], sp.perm[k]);
                f += d * d;
            }
        }
    }
    return f;
}

SignPermutation match_moments(
    const MomentTensor& x,
    const MomentTensor& y,
    const Eigen::VectorXd& lambda_x,
    const Eigen::VectorXd& lambda_y,
    const MomentMatchOptions& options)
{
    const int n = x.n0;
    if (y.n0 != n || lambda_x.size() < n || lambda_y.size() < n) {
        throw Error("moment tensors and eigenvalue lists must cover the same N0 indices");
    }
    if (n > 16) throw Error("moment matching supports at most 16 functions");

    std::vector<std::vector<int>> admissible(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (std::abs(lambda_x[i] - lambda_y[j]) <= options.eigenvalue_window * lambda_x[i]) admissible[i].push_back(j);
        }
    }

    double ex = 0.0;
    for (double v : x.xi) ex += v * v;
    const int patterns = 1 << n;
    // sign products per pattern and index triple, shared by every permutation
    std::vector<std::vector<signed char>> triple_sign(static_cast<std::size_t>(patterns));
    for (int p = 0; p < patterns; ++p) {
        auto& ts = triple_sign[p];
        ts.resize(static_cast<std::size_t>(n * n * n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) {
                    const int s = (((p >> i) & 1) ^ ((p >> j) & 1) ^ ((p >> k) & 1)) ? -1 : 1;
                    ts[(i * n + j) * n + k] = static_cast<signed char>(s);
                }
            }
        }
    }

    std::vector<int> perm(static_cast<std::size_t>(n), -1);
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    std::vector<double> cross(static_cast<std::size_t>(n * n * n));
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_perm;
    int best_pattern = 0;
    double best_energy = 0.0;
    bool any = false;

    auto evaluate = [&]() {
        any = true;
        double ey = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) {
                    const double yv = y(perm[i], perm[j], perm[k]);
                    const int idx = (i * n + j) * n + k;
                    cross[idx] = x.xi[idx] * yv;
                    ey += yv * yv;
                }
            }
        }
        for (int p = 0; p < patterns; ++p) {
            const auto& ts = triple_sign[p];
            double c = 0.0;
            for (std::size_t idx = 0; idx < cross.size(); ++idx) c += ts[idx] * cross[idx];
            const double f = ex + ey - 2.0 * c;
            if (f < best) {
                best = f;
                best_perm = perm;
                best_pattern = p;
                best_energy = ex + ey;
            }
        }
    };

    std::function<void(int)> search = [&](int i) {
        if (i == n) {
            evaluate();
            return;
        }
        for (int j : admissible[i]) {
            if (used[j]) continue;
            used[j] = true;
            perm[i] = j;
            search(i + 1);
            used[j] = false;
        }
    };
    search(0);
    if (!any) {
        std::ostringstream msg;
        msg << "no admissible eigenfunction permutation within the relative eigenvalue window "
            << options.eigenvalue_window << "; increase N0 or the window";
        throw Error(msg.str());
    }

    SignPermutation sp = SignPermutation::identity(n);
    sp.perm = best_perm;
    for (int i = 0; i < n; ++i) sp.signs[i] = ((best_pattern >> i) & 1) ? -1 : 1;

    // ambiguity: objective values of every sign pattern under the winning permutation
    perm = best_perm;
    double ey = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                const double yv = y(perm[i], perm[j], perm[k]);
                cross[(i * n + j) * n + k] = x.xi[(i * n + j) * n + k] * yv;
                ey += yv * yv;
            }
        }
    }
    const double floor = 1e-12 * best_energy;
    for (int p = 0; p < patterns; ++p) {
        if (p == best_pattern) continue;
        const auto& ts = triple_sign[p];
        double c = 0.0;
        for (std::size_t idx = 0; idx < cross.size(); ++idx) c += ts[idx] * cross[idx];
        const double f = std::max(ex + ey - 2.0 * c, 0.0);
        const double gap = (f - std::max(best, 0.0)) / std::max(f, floor);
        if (gap < options.ambiguity) {
            const int flipped = p ^ best_pattern;
            for (int i = 0; i < n; ++i) {
                if ((flipped >> i) & 1) sp.ambiguous[i] = true;
            }
        }
    }
    sp.objective = moment_objective(x, y, sp);
    return sp;
}

std::vector<SignPermutation> sign_candidates(const SignPermutation& sp, std::size_t cap)
{
    std::vector<int> idx;
    for (int i = 0; i < sp.size(); ++i) {
        if (!sp.ambiguous.empty() && sp.ambiguous[i] && idx.size() < 8) idx.push_back(i);
    }
    const std::size_t count = std::min<std::size_t>(std::size_t{1} << idx.size(), cap);
    std::vector<SignPermutation> out;
    out.reserve(count);
    for (std::size_t p = 0; p < count; ++p) {
        SignPermutation c = sp;
        for (std::size_t b = 0; b < idx.size(); ++b) {
            if ((p >> b) & 1) c.signs[idx[b]] = -c.signs[idx[b]];
        }
        out.push_back(std::move(c));
    }
    return out;
}

namespace {

/// Correlation over the faces of X given the positions of its corners.
template <typename Position>
double area_correlation(
    const FaceMatrix& faces,
    const Position& position_x,
    const TriangleMesh& mesh_y,
    const VertexMatrix& vertex_normals_y,
    std::span<const int> map)
{
    double num = 0.0;
    double sx = 0.0;
    double sy = 0.0;
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const int a = faces(f, 0);
        const int b = faces(f, 1);
        const int c = faces(f, 2);
        const Eigen::Vector3d xa = position_x(a);
        const double area_x = 0.5 * (position_x(b) - xa).cross(position_x(c) - xa).norm();
        const int ya = map[a];
        const int yb = map[b];
        const int yc = map[c];
        const Eigen::Vector3d pa = mesh_y.vertex(ya);
        const Eigen::Vector3d n = (mesh_y.vertex(yb) - pa).cross(mesh_y.vertex(yc) - pa);
        const double area_y = 0.5 * n.norm();
        sx += area_x * area_x;
        sy += area_y * area_y;
        if (!(area_y > 0.0)) continue;
        const Eigen::Vector3d n1 = n.normalized();
        Eigen::Vector3d n2 = (vertex_normals_y.row(ya) + vertex_normals_y.row(yb) + vertex_normals_y.row(yc)).transpose();
        const double len = n2.norm();
        if (!(len > 0.0)) continue;
        n2 /= len;
        num += area_x * area_y * n1.dot(n2);
    }
    const double den = std::sqrt(sx * sy);
    return den > 0.0 ? num / den : 0.0;
}

} // namespace

double orientable_area_correlation(
    const TriangleMesh& coarse_x,
    const TriangleMesh& mesh_y,
    const VertexMatrix& vertex_normals_y,
    std::span<const int> coarse_map)
{
    if (static_cast<int>(coarse_map.size()) != coarse_x.num_vertices()) {
        throw Error("quality: map must cover every coarse vertex");
    }
    return area_correlation(
        coarse_x.faces(), [&](int v) { return coarse_x.vertex(v); }, mesh_y, vertex_normals_y, coarse_map);
}

double orientable_area_correlation(
    const DecimationResult& coarse_x,
    const TriangleMesh& mesh_y,
    const VertexMatrix& vertex_normals_y,
    const Correspondence& dense_map,
    const TriangleMesh& mesh_x)
{
    std::vector<int> coarse_map(coarse_x.representative.size());
    for (std::size_t v = 0; v < coarse_map.size(); ++v) {
        const int target = dense_map.map.at(static_cast<std::size_t>(coarse_x.representative[v]));
        if (target < 0) throw Error("quality: dense map undefined at a coarse representative");
        coarse_map[v] = target;
    }
    return area_correlation(
        coarse_x.mesh.faces(),
        [&](int v) { return mesh_x.vertex(coarse_x.representative[v]); },
        mesh_y,
        vertex_normals_y,
        coarse_map);
}

QualityMatch match_by_quality(
    const std::vector<SignPermutation>& candidates,
    const CandidateRunner& runner,
    const MapScorer& scorer,
    bool maximize_negative)
{
    if (candidates.empty()) throw Error("match_by_quality: no candidates");
    QualityMatch best;
    best.scores.resize(candidates.size());
    double best_key = -std::numeric_limits<double>::infinity();
    std::string last_error;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        try {
            Correspondence map = runner(candidates[c]);
            const double q = scorer(map);
            best.scores[c] = q;
            const double key = maximize_negative ? -q : q;
            if (best.index < 0 || key > best_key) {
                best_key = key;
                best.index = static_cast<int>(c);
                best.signperm = candidates[c];
                best.map = std::move(map);
                best.quality = q;
            }
        } catch (const std::exception& e) {
            last_error = e.what();
        }
    }
    if (best.index < 0) throw Error("every sign candidate failed; last error: " + last_error);
    return best;
}

} // namespace speccorr
