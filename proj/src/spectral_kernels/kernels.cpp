#include <speccorr/errors.hpp>
#include <speccorr/kernels.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>

namespace speccorr {

KernelSpec KernelSpec::heat(double time)
{
    if (!(time > 0.0)) throw Error("heat kernel time must be positive");
    return {Kind::Heat, time};
}

double KernelSpec::weight(double lambda) const
{
    switch (kind) {
    case Kind::GPS: return 1.0 / lambda;
    case Kind::Heat: return std::exp(-lambda * t);
    }
    return 0.0;
}

Eigen::MatrixXd spectral_embedding(const SpectralBasis& basis, const KernelSpec& spec)
{
    if (!(basis.eigenvalues[1] >= 1e-12)) {
        throw SpectrumError("first nonconstant eigenvalue below 1e-12; the mesh is probably disconnected");
    }
    const int N = basis.size();
    Eigen::VectorXd scale(N);
    for (int i = 0; i < N; ++i) scale[i] = std::sqrt(spec.weight(basis.eigenvalues[i + 1]));
    return basis.eigenfunctions.rightCols(N) * scale.asDiagonal();
}

Eigen::MatrixXd kernel_cross(
    const Eigen::MatrixXd& embedding_a,
    const Eigen::MatrixXd& embedding_b,
    std::span<const int> landmarks_b)
{
    Eigen::MatrixXd land(static_cast<Eigen::Index>(landmarks_b.size()), embedding_b.cols());
    for (std::size_t i = 0; i < landmarks_b.size(); ++i) {
        land.row(static_cast<Eigen::Index>(i)) = embedding_b.row(landmarks_b[i]);
    }
    return embedding_a * land.transpose();
}

Eigen::MatrixXd kernel_cross(
    const SpectralBasis& basis_a,
    const SpectralBasis& basis_b,
    std::span<const int> landmarks_b,
    const KernelSpec& spec)
{
    return kernel_cross(spectral_embedding(basis_a, spec), spectral_embedding(basis_b, spec), landmarks_b);
}

SignPermutation SignPermutation::identity(int n0)
{
    SignPermutation sp;
    sp.perm.resize(static_cast<std::size_t>(n0));
    for (int i = 0; i < n0; ++i) sp.perm[i] = i;
    sp.signs.assign(static_cast<std::size_t>(n0), 1);
    sp.ambiguous.assign(static_cast<std::size_t>(n0), false);
    return sp;
}

SignPermutation SignPermutation::inverse() const
{
    SignPermutation out = identity(size());
    for (int i = 0; i < size(); ++i) {
        out.perm[perm[i]] = i;
        out.signs[perm[i]] = signs[i];
        out.ambiguous[perm[i]] = ambiguous.empty() ? false : ambiguous[i];
    }
    return out;
}

SignPermutation SignPermutation::compose(const SignPermutation& inner) const
{
    SignPermutation out = identity(size());
    for (int i = 0; i < size(); ++i) {
        out.perm[i] = inner.perm[perm[i]];
        out.signs[i] = signs[i] * inner.signs[perm[i]];
    }
    return out;
}

Eigen::MatrixXd matched_functions(const SpectralBasis& basis, const SignPermutation& sp)
{
    Eigen::MatrixXd out(basis.num_vertices(), sp.size());
    for (int i = 0; i < sp.size(); ++i) {
        if (sp.perm[i] < 0 || sp.perm[i] >= basis.size()) throw Error("sign permutation exceeds the basis size");
        out.col(i) = static_cast<double>(sp.signs[i]) * basis.eigenfunctions.col(sp.perm[i] + 1);
    }
    return out;
}

Eigen::VectorXd matched_eigenvalues(const SpectralBasis& basis, const SignPermutation& sp)
{
    Eigen::VectorXd out(sp.size());
    for (int i = 0; i < sp.size(); ++i) out[i] = basis.eigenvalues[sp.perm[i] + 1];
    return out;
}

QuasiConformalFields qc_fields(
    const SpectralBasis& basis,
    const TriangleMesh& mesh,
    const FaceBasisGradients& grads,
    int n0,
    const SignPermutation& sp)
{
    if (n0 > basis.size() || sp.size() != n0) throw Error("qc_fields: N0 exceeds the basis or the sign permutation");
    const Eigen::VectorXd lambda = matched_eigenvalues(basis, sp);
    for (int i = 0; i < n0; ++i) {
        if (!(lambda[i] > 0.0)) throw SpectrumError("qc_fields requires positive eigenvalues");
    }
    const Eigen::MatrixXd g = grads.gradients(mesh, matched_functions(basis, sp));
    const MeshNormals nrm = normals(mesh);
    const Eigen::VectorXd area = face_areas(mesh);
    const double vol = area.sum();

    QuasiConformalFields qc;
    qc.n0 = n0;
    qc.omega = Eigen::MatrixXd::Zero(mesh.num_vertices(), n0 * n0);
    qc.nu = Eigen::MatrixXd::Zero(mesh.num_vertices(), n0 * n0);
    Eigen::VectorXd weight = Eigen::VectorXd::Zero(mesh.num_vertices());
    Eigen::RowVectorXd w_face(n0 * n0);
    Eigen::RowVectorXd n_face(n0 * n0);
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Eigen::Vector3d normal = nrm.face.row(f).transpose();
        for (int i = 0; i < n0; ++i) {
            const Eigen::Vector3d gi = g.block<1, 3>(f, 3 * i).transpose();
            for (int j = 0; j < n0; ++j) {
                const Eigen::Vector3d gj = g.block<1, 3>(f, 3 * j).transpose();
                const double s = vol / std::sqrt(lambda[i] * lambda[j]);
                w_face[i * n0 + j] = s * gi.dot(gj);
                n_face[i * n0 + j] = s * normal.dot(gi.cross(gj));
            }
        }
        for (int v : mesh.face(f)) {
            qc.omega.row(v) += area[f] * w_face;
            qc.nu.row(v) += area[f] * n_face;
            weight[v] += area[f];
        }
    }
    const Eigen::VectorXd inv = weight.cwiseInverse();
    qc.omega = inv.asDiagonal() * qc.omega;
    qc.nu = inv.asDiagonal() * qc.nu;
    return qc;
}

Eigen::MatrixXd qc_embedding(
    const SpectralBasis& basis,
    const QuasiConformalFields& qc,
    const SignPermutation& sp,
    double t)
{
    const int n0 = qc.n0;
    const double vol = basis.volume();
    // the fields already carry the Vol factor
    const Eigen::VectorXd lambda = matched_eigenvalues(basis, sp);
    const Eigen::MatrixXd phi = matched_functions(basis, sp);
    const int pairs = n0 * (n0 + 1) / 2;
    Eigen::MatrixXd out(qc.num_vertices(), pairs + n0);
    int c = 0;
    for (int i = 0; i < n0; ++i) {
        for (int j = i; j < n0; ++j) {
            out.col(c++) = std::exp(-(lambda[i] + lambda[j]) * t / 2.0) * qc.omega.col(i * n0 + j);
        }
    }
    for (int i = 0; i < n0; ++i) out.col(c++) = std::sqrt(vol) * std::exp(-lambda[i] * t / 2.0) * phi.col(i);
    return out;
}

Eigen::VectorXd bandpass(const SpectralBasis& basis, double t)
{
    if (!(t > 0.0)) throw Error("bandpass time must be positive");
    const int N = basis.size();
    Eigen::VectorXd coeff(N);
    for (int i = 0; i < N; ++i) {
        const double l = basis.eigenvalues[i + 1];
        coeff[i] = l * std::exp(-l * t);
    }
    const Eigen::VectorXd raw = basis.eigenfunctions.rightCols(N).array().square().matrix() * coeff;
    const double norm = std::sqrt(raw.cwiseProduct(raw).dot(basis.masses));
    if (!(norm > 0.0)) throw Error("bandpass response has zero norm");
    return raw / norm;
}

std::vector<double> bandpass_times(const SpectralBasis& basis, int count)
{
    const double t_last = 1.0 / basis.eigenvalues[1];
    const double t_first = t_last / 50.0;
    std::vector<double> out;
    for (int b = 0; b < count; ++b) {
        const double a = count == 1 ? 0.0 : static_cast<double>(b) / (count - 1);
        out.push_back(t_first * std::pow(t_last / t_first, a));
    }
    return out;
}

Eigen::MatrixXd matched_signature(
    const SpectralBasis& basis,
    const SignPermutation& sp,
    int n0,
    int bands,
    double bandpass_weight)
{
    if (sp.size() != n0) throw Error("signature: sign permutation does not cover N0 functions");
    Eigen::MatrixXd out(basis.num_vertices(), n0 + bands);
    out.leftCols(n0) = matched_functions(basis, sp);
    const auto times = bandpass_times(basis, bands);
    for (int b = 0; b < bands; ++b) out.col(n0 + b) = bandpass_weight * bandpass(basis, times[b]);
    return out;
}

void write_signature_csv(const Eigen::MatrixXd& table, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(9);
    out << "vertex";
    for (Eigen::Index c = 0; c < table.cols(); ++c) out << ",c" << c;
    out << '\n';
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
        out << r;
        for (Eigen::Index c = 0; c < table.cols(); ++c) out << ',' << table(r, c);
        out << '\n';
    }
}

} // namespace speccorr
