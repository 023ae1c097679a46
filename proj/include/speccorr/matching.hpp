#pragma once

#include <speccorr/correspondence_map.hpp>
#include <speccorr/decimate.hpp>
#include <speccorr/kernels.hpp>

#include <functional>
#include <optional>
#include <vector>

namespace speccorr {

/// xi_ijk = sum_v phi_i phi_j phi_k mass(v) over the first N0 nonconstant modes.
struct MomentTensor
{
    int n0 = 0;
    std::vector<double> xi;

    double operator()(int i, int j, int k) const { return xi[(i * n0 + j) * n0 + k]; }
};

MomentTensor third_order_moments(const SpectralBasis& basis, int n0);

/// Moment tensor of the functions selected by `sp`.
MomentTensor third_order_moments(const SpectralBasis& basis, const SignPermutation& sp);

struct MomentMatchOptions
{
    double eigenvalue_window = 0.2; ///< |lambdaX_i - lambdaY_pi(i)| / lambdaX_i
    double ambiguity = 0.05;        ///< relative objective gap below which a sign is undetermined
};

/// sum_ijk (xiX_ijk - s_i s_j s_k xiY_{pi_i pi_j pi_k})^2
double moment_objective(const MomentTensor& x, const MomentTensor& y, const SignPermutation& sp);

///
/// Exhaustive search over permutations inside the eigenvalue windows and all sign patterns.
///
/// Index i is flagged ambiguous when some sign vector that flips s_i (alone or jointly with other
/// signs) comes within the ambiguity threshold of the optimum. Throws Error when no permutation is
/// admissible.
///
SignPermutation match_moments(
    const MomentTensor& x,
    const MomentTensor& y,
    const Eigen::VectorXd& lambda_x,
    const Eigen::VectorXd& lambda_y,
    const MomentMatchOptions& options = {});

/// Every sign pattern over the ambiguous indices (first eight only), starting with `sp` itself.
std::vector<SignPermutation> sign_candidates(const SignPermutation& sp, std::size_t cap = 256);

///
/// Orientable area correlation of a map given on the vertices of a coarse X.
///
/// Sum over coarse faces of area(X) area(image) (n1 . n2), divided by the root of the summed
/// squared areas. n1 is the winding normal of the image triangle and n2 the average of Y's vertex
/// normals at its corners. Image triangles of zero area add nothing to the numerator.
///
double orientable_area_correlation(
    const TriangleMesh& coarse_x,
    const TriangleMesh& mesh_y,
    const VertexMatrix& vertex_normals_y,
    std::span<const int> coarse_map);

/// Scores a dense map through the representatives of a decimated X. Coarse faces are spanned by
/// the representatives' positions on `mesh_x`, so the identity map compares identical triangles.
double orientable_area_correlation(
    const DecimationResult& coarse_x,
    const TriangleMesh& mesh_y,
    const VertexMatrix& vertex_normals_y,
    const Correspondence& dense_map,
    const TriangleMesh& mesh_x);

struct QualityMatch
{
    int index = -1;
    SignPermutation signperm;
    Correspondence map;
    double quality = 0.0;
    std::vector<std::optional<double>> scores; ///< per candidate; empty when the runner failed
};

using CandidateRunner = std::function<Correspondence(const SignPermutation&)>;
using MapScorer = std::function<double(const Correspondence&)>;

/// Runs every candidate and keeps the best Q (or -Q with `maximize_negative`). Ties go to the lower
/// candidate index; failing candidates are skipped; throws Error when all fail.
QualityMatch match_by_quality(
    const std::vector<SignPermutation>& candidates,
    const CandidateRunner& runner,
    const MapScorer& scorer,
    bool maximize_negative);

} // namespace speccorr
