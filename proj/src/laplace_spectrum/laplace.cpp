#include <speccorr/errors.hpp>
#include <speccorr/laplace.hpp>
#include <speccorr/random.hpp>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace speccorr {

namespace {

constexpr int kDenseLimit = 400;

void normalize_signs(Eigen::MatrixXd& phi)
{
    for (Eigen::Index c = 0; c < phi.cols(); ++c) {
        for (Eigen::Index r = 0; r < phi.rows(); ++r) {
            const double v = phi(r, c);
            if (std::abs(v) > 1e-8) {
                if (v < 0.0) phi.col(c) *= -1.0;
                break;
            }
        }
    }
}

struct Eigenpairs
{
    Eigen::VectorXd values;  // nonconstant, ascending
    Eigen::MatrixXd vectors; // M-orthonormal, orthogonal to the constant
};

Eigenpairs dense_solve(const StiffnessMatrix& W, const VertexMasses& masses, int nev)
{
    const Eigen::MatrixXd Wd(W);
    const Eigen::MatrixXd Md = masses.asDiagonal();
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Wd, Md);
    if (es.info() != Eigen::Success) throw SpectrumError("dense generalized eigensolver failed");
    // index 0 is the constant mode
    return {es.eigenvalues().segment(1, nev), es.eigenvectors().middleCols(1, nev)};
}

///
/// Shift-invert block Lanczos on the symmetric operator M^1/2 (W + sigma M)^-1 M^1/2 with the
/// constant mode deflated. Full reorthogonalization and thick restart on the Ritz vectors.
///
class LanczosSolver
{
public:
    LanczosSolver(const StiffnessMatrix& W, const VertexMasses& masses, const SpectrumOptions& options)
        : m_W(W)
        , m_masses(masses)
        , m_sqrt_mass(masses.array().sqrt().matrix())
        , m_options(options)
    {
        const double sigma = 1e-8 * W.diagonal().sum() / static_cast<double>(W.rows());
        m_shifted = W;
        for (Eigen::Index i = 0; i < W.rows(); ++i) m_shifted.coeffRef(i, i) += sigma * masses[i];
        m_factor.compute(m_shifted);
        if (m_factor.info() != Eigen::Success) throw SpectrumError("factorization of W + sigma M failed");
        m_null = m_sqrt_mass / m_sqrt_mass.norm();
    }

    Eigenpairs solve(int nev)
    {
        const int n = static_cast<int>(m_W.rows());
        const int b = std::max(1, std::min(m_options.block_size, nev));
        int m = std::max(2 * nev, nev + 3 * b);
        m = ((m + b - 1) / b) * b;
        const int cap = ((n - 1 - b) / b) * b;
        if (m > cap) m = cap;
        if (m < nev + b) return dense_solve(m_W, m_masses, nev);

        Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, m + b);
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + b, m + b);
        Rng rng(m_options.seed);
        V.leftCols(b) = random_block(rng, n, b);
        orthonormalize_block(V, 0, b, rng, nullptr);

        int k = 0;
        Eigen::VectorXd last_residuals;
        for (int restart = 0; restart <= m_options.max_restarts; ++restart) {
            while (k < m) {
                Eigen::MatrixXd Wb = apply(V.middleCols(k, b));
                Eigen::MatrixXd H = V.leftCols(k + b).transpose() * Wb;
                Wb.noalias() -= V.leftCols(k + b) * H;
                const Eigen::MatrixXd H2 = V.leftCols(k + b).transpose() * Wb;
                Wb.noalias() -= V.leftCols(k + b) * H2;
                H += H2;
                T.block(0, k, k + b, b) = H;
                V.middleCols(k + b, b) = Wb;
                Eigen::MatrixXd R = Eigen::MatrixXd::Zero(b, b);
                orthonormalize_block(V, k + b, b, rng, &R);
                T.block(k + b, k, b, b) = R;
                k += b;
            }

            const Eigen::MatrixXd Tk = 0.5 * (T.topLeftCorner(k, k) + T.topLeftCorner(k, k).transpose());
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tk);
            // descending theta corresponds to ascending lambda
            const Eigen::VectorXd theta = es.eigenvalues().reverse();
            const Eigen::MatrixXd S = es.eigenvectors().rowwise().reverse();
            const Eigen::MatrixXd coupling = T.block(k, k - b, b, b) * S.bottomRows(b);
            last_residuals = coupling.colwise().norm().transpose();

            bool converged = true;
            for (int i = 0; i < nev; ++i) {
                if (!(last_residuals[i] <= 1e-12 * std::abs(theta[i]))) converged = false;
            }
            // keep at least nev + b Ritz vectors, rounded so the next sweep ends exactly at m
            const int least = std::min(nev + b, k - b);
            const int keep = m - ((m - least) / b) * b;
            if (converged) {
                const Eigen::MatrixXd Y = V.leftCols(k) * S.leftCols(keep);
                return polish(Y, nev);
            }

            const Eigen::MatrixXd kept = V.leftCols(k) * S.leftCols(keep);
            const Eigen::MatrixXd residual_block = V.middleCols(k, b);
            const Eigen::MatrixXd new_coupling = coupling.leftCols(keep);
            V.setZero();
            T.setZero();
            V.leftCols(keep) = kept;
            V.middleCols(keep, b) = residual_block;
            T.topLeftCorner(keep, keep) = theta.head(keep).asDiagonal();
            T.block(keep, 0, b, keep) = new_coupling;
            k = keep;
        }

        std::ostringstream msg;
        msg << "Lanczos did not converge after " << m_options.max_restarts << " restarts; worst Ritz residuals:";
        for (int i = 0; i < std::min<int>(nev, static_cast<int>(last_residuals.size())); ++i) {
            if (i < 5 || i == nev - 1) msg << ' ' << last_residuals[i];
        }
        throw SpectrumError(msg.str());
    }

private:
    Eigen::MatrixXd apply(const Eigen::MatrixXd& Y) const
    {
        Eigen::MatrixXd rhs = m_sqrt_mass.asDiagonal() * Y;
        Eigen::MatrixXd Z = m_factor.solve(rhs);
        Z = m_sqrt_mass.asDiagonal() * Z;
        Z -= m_null * (m_null.transpose() * Z);
        return Z;
    }

    Eigen::MatrixXd random_block(Rng& rng, int n, int b) const
    {
        Eigen::MatrixXd X(n, b);
        for (Eigen::Index c = 0; c < b; ++c) {
            for (Eigen::Index r = 0; r < n; ++r) X(r, c) = 2.0 * rng.uniform() - 1.0;
        }
        return X;
    }

    // Orthonormalizes columns [first, first + count) against every earlier column and the
    // constant mode. R receives the triangular factor; broken-down columns are refilled at random.
    void orthonormalize_block(Eigen::MatrixXd& V, int first, int count, Rng& rng, Eigen::MatrixXd* R) const
    {
        const int n = static_cast<int>(V.rows());
        for (int c = 0; c < count; ++c) {
            const int col = first + c;
            Eigen::VectorXd w = V.col(col);
            const double original = w.norm();
            for (int pass = 0; pass < 2; ++pass) {
                w -= m_null * m_null.dot(w);
                const Eigen::VectorXd h = V.leftCols(col).transpose() * w;
                w -= V.leftCols(col) * h;
                if (R) {
                    for (int i = 0; i < c; ++i) (*R)(i, c) += h[first + i];
                }
            }
            double norm = w.norm();
            if (!(norm > 1e-10 * std::max(original, 1e-300))) {
                // invariant subspace reached: continue with a fresh direction, no coupling
                if (R) (*R)(c, c) = 0.0;
                Eigen::VectorXd fresh = random_block(rng, n, 1).col(0);
                for (int pass = 0; pass < 2; ++pass) {
                    fresh -= m_null * m_null.dot(fresh);
                    fresh -= V.leftCols(col) * (V.leftCols(col).transpose() * fresh);
                }
                V.col(col) = fresh.normalized();
                continue;
            }
            if (R) (*R)(c, c) = norm;
            V.col(col) = w / norm;
        }
    }

    // One shift-invert step on the Ritz block followed by Rayleigh-Ritz in the M inner product.
    Eigenpairs polish(const Eigen::MatrixXd& Y, int nev) const
    {
        const Eigen::VectorXd inv_sqrt = m_sqrt_mass.cwiseInverse();
        Eigen::MatrixXd Z = inv_sqrt.asDiagonal() * apply(Y);
        const Eigen::VectorXd phi0 = Eigen::VectorXd::Constant(Z.rows(), 1.0 / std::sqrt(m_masses.sum()));
        Z -= phi0 * (phi0.cwiseProduct(m_masses).transpose() * Z);

        Eigen::MatrixXd G = Z.transpose() * m_masses.asDiagonal() * Z;
        G = 0.5 * (G + G.transpose());
        const Eigen::LLT<Eigen::MatrixXd> llt(G);
        if (llt.info() != Eigen::Success) throw SpectrumError("Ritz block lost rank during refinement");
        const Eigen::MatrixXd L = llt.matrixL();
        Eigen::MatrixXd Q = L.triangularView<Eigen::Lower>().solve(Z.transpose()).transpose();
        Eigen::MatrixXd P = Q.transpose() * (m_W * Q);
        P = 0.5 * (P + P.transpose());
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
        return {es.eigenvalues().head(nev), Q * es.eigenvectors().leftCols(nev)};
    }

    const StiffnessMatrix& m_W;
    const VertexMasses& m_masses;
    Eigen::VectorXd m_sqrt_mass;
    SpectrumOptions m_options;
    StiffnessMatrix m_shifted;
    Eigen::SimplicialLDLT<StiffnessMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> m_factor;
    Eigen::VectorXd m_null;
};

void write_u64(std::ostream& out, std::uint64_t x)
{
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in)
{
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw Error("truncated spectrum cache");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return x;
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

constexpr char kMagic[8] = {'S', 'P', 'C', 'R', 'S', 'P', 'E', 'C'};
constexpr std::uint64_t kCacheVersion = 1;

} // namespace

bool SpectralBasis::in_multiplet(int index) const
{
    return std::any_of(multiplets.begin(), multiplets.end(), [index](const Multiplet& m) {
        return index >= m.first && index < m.first + m.count;
    });
}

StiffnessMatrix cotangent_laplacian(const TriangleMesh& mesh)
{
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(12 * mesh.num_faces()));
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const auto t = mesh.face(f);
        for (int c = 0; c < 3; ++c) {
            const int o = t[c];
            const int a = t[(c + 1) % 3];
            const int b = t[(c + 2) % 3];
            const Eigen::Vector3d e1 = mesh.vertex(a) - mesh.vertex(o);
            const Eigen::Vector3d e2 = mesh.vertex(b) - mesh.vertex(o);
            const double sin_area = e1.cross(e2).norm();
            if (!(sin_area > 0.0)) throw MeshError(MeshError::Kind::DegenerateFace, f, "degenerate face");
            const double half_cot = 0.5 * e1.dot(e2) / sin_area;
            triplets.emplace_back(a, b, -half_cot);
            triplets.emplace_back(b, a, -half_cot);
            triplets.emplace_back(a, a, half_cot);
            triplets.emplace_back(b, b, half_cot);
        }
    }
    StiffnessMatrix W(mesh.num_vertices(), mesh.num_vertices());
    W.setFromTriplets(triplets.begin(), triplets.end());
    W.makeCompressed();
    return W;
}

std::vector<Multiplet> find_multiplets(const Eigen::VectorXd& eigenvalues, double relative_gap)
{
    std::vector<Multiplet> out;
    const int n = static_cast<int>(eigenvalues.size());
    int i = 1;
    while (i < n) {
        int j = i + 1;
        while (j < n && (eigenvalues[j] - eigenvalues[j - 1]) < relative_gap * std::abs(eigenvalues[j])) ++j;
        if (j - i > 1) out.push_back({i, j - i});
        i = j;
    }
    return out;
}

SpectralBasis compute_spectrum(const TriangleMesh& mesh, int n_eigs, const SpectrumOptions& options)
{
    const int n = mesh.num_vertices();
    if (n_eigs < 1) throw SpectrumError("at least one nonconstant eigenfunction is required");
    if (n_eigs + 1 > n) {
        throw SpectrumError(
            "requested " + std::to_string(n_eigs + 1) + " eigenpairs from a mesh with " + std::to_string(n) +
            " vertices");
    }
    const int components = count_components(mesh);
    if (components != 1) {
        throw SpectrumError(
            "mesh is disconnected: " + std::to_string(components) +
            " components give a repeated zero eigenvalue");
    }

    const StiffnessMatrix W = cotangent_laplacian(mesh);
    SpectralBasis basis;
    basis.masses = vertex_masses(mesh);

    bool dense = options.method == EigenMethod::Dense;
    if (options.method == EigenMethod::Auto) dense = n <= kDenseLimit;
    Eigenpairs pairs = dense ? dense_solve(W, basis.masses, n_eigs) : LanczosSolver(W, basis.masses, options).solve(n_eigs);

    // ascending order, refined by the Rayleigh quotient
    std::vector<int> order(static_cast<std::size_t>(n_eigs));
    std::iota(order.begin(), order.end(), 0);
    Eigen::VectorXd rq(n_eigs);
    for (int i = 0; i < n_eigs; ++i) {
        const Eigen::VectorXd& v = pairs.vectors.col(i);
        rq[i] = v.dot(W * v) / v.dot(basis.masses.cwiseProduct(v));
    }
    std::stable_sort(order.begin(), order.end(), [&rq](int a, int b) { return rq[a] < rq[b]; });

    basis.eigenvalues.resize(n_eigs + 1);
    basis.eigenfunctions.resize(n, n_eigs + 1);
    basis.eigenvalues[0] = 0.0;
    basis.eigenfunctions.col(0).setConstant(1.0 / std::sqrt(basis.masses.sum()));
    for (int i = 0; i < n_eigs; ++i) {
        basis.eigenvalues[i + 1] = rq[order[i]];
        basis.eigenfunctions.col(i + 1) = pairs.vectors.col(order[i]);
    }
    if (!(basis.eigenvalues[1] > 0.0)) throw SpectrumError("first nonconstant eigenvalue is not positive");
    normalize_signs(basis.eigenfunctions);
    basis.multiplets = find_multiplets(basis.eigenvalues, options.multiplet_gap);

    const Eigen::VectorXd res = relative_residuals(W, basis);
    const double worst = res.maxCoeff();
    if (!(worst <= options.tolerance) && !dense) {
        Eigen::Index at = 0;
        res.maxCoeff(&at);
        std::ostringstream msg;
        msg << "eigenpairs failed the residual check: worst relative residual " << worst << " at index " << at + 1;
        throw SpectrumError(msg.str());
    }
    return basis;
}

Eigen::VectorXd relative_residuals(const StiffnessMatrix& W, const SpectralBasis& basis)
{
    const int N = basis.size();
    Eigen::VectorXd out(N);
    for (int i = 1; i <= N; ++i) {
        const Eigen::VectorXd& phi = basis.eigenfunctions.col(i);
        const Eigen::VectorXd Mphi = basis.masses.cwiseProduct(phi);
        const double lambda = basis.eigenvalues[i];
        out[i - 1] = (W * phi - lambda * Mphi).norm() / (std::abs(lambda) * Mphi.norm());
    }
    return out;
}

void save_spectrum(const SpectralBasis& basis, std::uint64_t mesh_hash, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write spectrum cache " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, kCacheVersion);
    write_u64(out, static_cast<std::uint64_t>(basis.num_vertices()));
    write_u64(out, static_cast<std::uint64_t>(basis.size()));
    write_u64(out, mesh_hash);
    for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) write_f64(out, basis.eigenvalues[i]);
    for (Eigen::Index c = 0; c < basis.eigenfunctions.cols(); ++c) {
        for (Eigen::Index r = 0; r < basis.eigenfunctions.rows(); ++r) write_f64(out, basis.eigenfunctions(r, c));
    }
    for (Eigen::Index i = 0; i < basis.masses.size(); ++i) write_f64(out, basis.masses[i]);
    if (!out) throw Error("write failed for spectrum cache " + path.string());
}

std::optional<SpectralBasis> load_spectrum(
    const std::filesystem::path& path,
    std::uint64_t expected_hash,
    int expected_vertices)
{
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open spectrum cache " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw Error("bad spectrum cache magic");
    if (read_u64(in) != kCacheVersion) throw Error("unsupported spectrum cache version");
    const std::uint64_t nv = read_u64(in);
    const std::uint64_t N = read_u64(in);
    const std::uint64_t hash = read_u64(in);
    if (hash != expected_hash) throw Error("spectrum cache belongs to a different mesh (hash mismatch)");
    if (nv != static_cast<std::uint64_t>(expected_vertices)) throw Error("spectrum cache vertex count mismatch");
    if (N == 0 || N + 1 > nv) throw Error("spectrum cache has an invalid eigenpair count");

    SpectralBasis basis;
    basis.eigenvalues.resize(static_cast<Eigen::Index>(N + 1));
    basis.eigenfunctions.resize(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(N + 1));
    basis.masses.resize(static_cast<Eigen::Index>(nv));
    for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) basis.eigenvalues[i] = read_f64(in);
    for (Eigen::Index c = 0; c < basis.eigenfunctions.cols(); ++c) {
        for (Eigen::Index r = 0; r < basis.eigenfunctions.rows(); ++r) basis.eigenfunctions(r, c) = read_f64(in);
    }
    for (Eigen::Index i = 0; i < basis.masses.size(); ++i) basis.masses[i] = read_f64(in);
    if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in spectrum cache");
    if (!basis.eigenvalues.allFinite() || !basis.eigenfunctions.allFinite() || !basis.masses.allFinite()) {
        throw Error("non-finite values in spectrum cache");
    }
    basis.multiplets = find_multiplets(basis.eigenvalues, SpectrumOptions{}.multiplet_gap);
    return basis;
}

} // namespace speccorr
