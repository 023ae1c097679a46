#pragma once

#include <speccorr/mesh.hpp>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace speccorr {

using StiffnessMatrix = Eigen::SparseMatrix<double>;

/// Cotangent stiffness W: off-diagonals -(cot a + cot b)/2, rows summing to zero. Boundary
/// edges receive a single cotangent (natural boundary condition). Weights are not clamped.
StiffnessMatrix cotangent_laplacian(const TriangleMesh& mesh);

/// Run of consecutive eigenvalues whose relative gaps are below the multiplet threshold.
struct Multiplet
{
    int first;
    int count;
};

///
/// First N+1 solutions of W phi = lambda M phi with M the lumped mass.
///
/// Column 0 is the constant 1/sqrt(Vol). Columns are M-orthonormal and each has its first entry of
/// magnitude above 1e-8 positive.
///
struct SpectralBasis
{
    Eigen::VectorXd eigenvalues;    ///< N+1 ascending, eigenvalues[0] == 0
    Eigen::MatrixXd eigenfunctions; ///< |V| x (N+1)
    VertexMasses masses;
    std::vector<Multiplet> multiplets; ///< among indices 1..N

    int num_vertices() const { return static_cast<int>(eigenfunctions.rows()); }
    int size() const { return static_cast<int>(eigenvalues.size()) - 1; }
    double volume() const { return masses.sum(); }
    bool in_multiplet(int index) const;
};

enum class EigenMethod {
    Auto,    ///< dense below a few hundred vertices, Lanczos otherwise
    Lanczos, ///< shift-invert block Lanczos
    Dense,   ///< full generalized eigendecomposition
};

struct SpectrumOptions
{
    EigenMethod method = EigenMethod::Auto;
    double tolerance = 1e-10;  ///< on ||W phi - lambda M phi|| / (lambda ||M phi||)
    int max_restarts = 50;
    int block_size = 10;
    std::uint64_t seed = 0x5eed;
    double multiplet_gap = 1e-3;
};

/// Throws SpectrumError on a disconnected mesh (naming the component count), on N+1 > |V| and
/// when the iteration cap is reached (message carries the worst residual).
SpectralBasis compute_spectrum(const TriangleMesh& mesh, int n_eigs, const SpectrumOptions& options = {});

/// Residual ||W phi_i - lambda_i M phi_i|| / (lambda_i ||M phi_i||) for i >= 1.
Eigen::VectorXd relative_residuals(const StiffnessMatrix& W, const SpectralBasis& basis);

/// Binary cache: magic, version, |V|, N, mesh hash, then little-endian f64 payload.
void save_spectrum(const SpectralBasis& basis, std::uint64_t mesh_hash, const std::filesystem::path& path);

/// Returns nullopt when the file is missing. Throws Error when it is corrupt or the mesh hash or
/// vertex count differ from the expected values.
std::optional<SpectralBasis> load_spectrum(
    const std::filesystem::path& path,
    std::uint64_t expected_hash,
    int expected_vertices);

std::vector<Multiplet> find_multiplets(const Eigen::VectorXd& eigenvalues, double relative_gap);

} // namespace speccorr
