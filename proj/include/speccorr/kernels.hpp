#pragma once

#include <speccorr/laplace.hpp>
#include <speccorr/mesh.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <vector>

namespace speccorr {

/// Spectral kernel K(x, x') = sum_i k(lambda_i) phi_i(x) phi_i(x') over the nonconstant modes.
struct KernelSpec
{
    enum class Kind { GPS, Heat };

    Kind kind = Kind::GPS;
    double t = 0.0; ///< diffusion time for Heat

    static KernelSpec gps() { return {Kind::GPS, 0.0}; }
    static KernelSpec heat(double time);

    double weight(double lambda) const;
};

/// Row x is (sqrt(k(lambda_1)) phi_1(x), ..., sqrt(k(lambda_N)) phi_N(x)). Throws SpectrumError when
/// lambda_1 < 1e-12.
Eigen::MatrixXd spectral_embedding(const SpectralBasis& basis, const KernelSpec& spec);

/// K(x, l) for every row x of `embedding_a` and every landmark l of `embedding_b`.
Eigen::MatrixXd kernel_cross(
    const Eigen::MatrixXd& embedding_a,
    const Eigen::MatrixXd& embedding_b,
    std::span<const int> landmarks_b);

Eigen::MatrixXd kernel_cross(
    const SpectralBasis& basis_a,
    const SpectralBasis& basis_b,
    std::span<const int> landmarks_b,
    const KernelSpec& spec);

///
/// Signs and ordering that align another basis to a reference: matched function i is
/// signs[i] * phi_{perm[i] + 1}. Indices are zero-based over the first N0 nonconstant modes.
///
struct SignPermutation
{
    std::vector<int> perm;
    std::vector<int> signs;
    std::vector<bool> ambiguous; ///< sign not determined by the moment stage
    double objective = 0.0;

    static SignPermutation identity(int n0);

    int size() const { return static_cast<int>(perm.size()); }
    SignPermutation inverse() const;
    SignPermutation compose(const SignPermutation& inner) const; ///< apply inner first, then this
    bool operator==(const SignPermutation& other) const { return perm == other.perm && signs == other.signs; }
};

/// |V| x N0 matrix of matched eigenfunctions.
Eigen::MatrixXd matched_functions(const SpectralBasis& basis, const SignPermutation& sp);

/// Eigenvalues lambda_{perm[i] + 1} of the matched functions.
Eigen::VectorXd matched_eigenvalues(const SpectralBasis& basis, const SignPermutation& sp);

///
/// Per-vertex omega_ij = Vol grad phi_i . grad phi_j / sqrt(lambda_i lambda_j) and
/// nu_ij = Vol n . (grad phi_i x grad phi_j) / sqrt(lambda_i lambda_j) over matched functions,
/// computed per face and averaged to vertices with incident-face-area weights. The Vol factor makes
/// both dimensionless, so they are unchanged by uniform scaling.
///
struct QuasiConformalFields
{
    int n0 = 0;
    Eigen::MatrixXd omega; ///< |V| x n0^2, entry (v, i * n0 + j)
    Eigen::MatrixXd nu;    ///< |V| x n0^2, antisymmetric in (i, j)

    double w(int v, int i, int j) const { return omega(v, i * n0 + j); }
    double n(int v, int i, int j) const { return nu(v, i * n0 + j); }
    int num_vertices() const { return static_cast<int>(omega.rows()); }
};

QuasiConformalFields qc_fields(
    const SpectralBasis& basis,
    const TriangleMesh& mesh,
    const FaceBasisGradients& grads,
    int n0,
    const SignPermutation& sp);

/// Per-vertex J_t: Vol e^{-(lambda_i + lambda_j) t / 2} omega_ij for i <= j, followed by
/// sqrt(Vol) e^{-lambda_i t / 2} phi_i, over the matched functions.
Eigen::MatrixXd qc_embedding(
    const SpectralBasis& basis,
    const QuasiConformalFields& qc,
    const SignPermutation& sp,
    double t);

/// sum_i lambda_i e^{-lambda_i t} phi_i^2, normalized to unit L2(da) norm. Throws Error on a zero
/// norm.
Eigen::VectorXd bandpass(const SpectralBasis& basis, double t);

/// The B bandpass times, log-spaced on [1 / (50 lambda_1), 1 / lambda_1].
std::vector<double> bandpass_times(const SpectralBasis& basis, int count);

/// |V| x (N0 + B): matched eigenfunctions then B normalized bandpass responses scaled by
/// `bandpass_weight`.
Eigen::MatrixXd matched_signature(
    const SpectralBasis& basis,
    const SignPermutation& sp,
    int n0,
    int bands,
    double bandpass_weight = 1.0);

/// CSV with a `vertex` column followed by one column per channel.
void write_signature_csv(const Eigen::MatrixXd& table, const std::filesystem::path& path);

} // namespace speccorr
