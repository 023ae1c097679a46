#pragma once

#include <speccorr/correspondence_map.hpp>
#include <speccorr/decimate.hpp>
#include <speccorr/kernels.hpp>
#include <speccorr/laplace.hpp>
#include <speccorr/matching.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace speccorr {

using FunctionalMatrix = Eigen::MatrixXd;

struct PipelineConfig
{
    int n_eigs = 120;
    int n0 = 6;
    int bands = 6;
    int candidates = 100;
    int skm_samples = 1000;
    int fskm_samples = 2000;
    int iterations = 15;
    double beta = 0.1;
    KernelSpec kernel = KernelSpec::gps();
    bool area_weighted_sampling = false;
    std::uint64_t seed = 1;

    int quality_skm_iterations = 5;
    int coarse_faces = 2000;
    double bandpass_weight = 1.0;
    int fskm_partner_cap = 0; ///< 0 keeps every ordered pair of the previous sample
    double eigenvalue_window = 0.2;
    double ambiguity = 0.05;
    int evaluation_samples = 1000;

    bool use_nu = true;
    bool use_quality = true;
    bool run_skm = true;
    bool run_fskm = true;
    bool allow_symmetry = false; ///< select the candidate maximizing -Q (self-symmetry search)

    /// Throws Error when a count is nonpositive or N0 exceeds N.
    void validate() const;
};

/// Parses `key = value` lines (# comments) into `cfg`, field names as in PipelineConfig.
void apply_config_text(PipelineConfig& cfg, const std::string& text, const std::string& origin = "config");
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path);

/// Flat key=value rendering, stable field order.
std::string config_to_text(const PipelineConfig& cfg);

/// Per-vertex k nearest rows of `sig_y` to each row of `sig_x`; ties by lower index.
std::vector<std::vector<int>> candidate_set(const Eigen::MatrixXd& sig_x, const Eigen::MatrixXd& sig_y, int k);

/// Squared quasi-conformal distortion between x and y. With `orientation_reversing` the nu terms
/// compare against -nu^Y.
double qc_distance2(
    const QuasiConformalFields& qx,
    const QuasiConformalFields& qy,
    int x,
    int y,
    bool use_nu = true,
    bool orientation_reversing = false);

struct SqcmOptions
{
    bool use_nu = true;
    bool orientation_reversing = false;
};

/// argmin over each candidate list of the quasi-conformal distortion. Throws Error on an empty list.
Correspondence sqcm(
    const QuasiConformalFields& qx,
    const QuasiConformalFields& qy,
    const std::vector<std::vector<int>>& candidates,
    const SqcmOptions& options = {});

struct SkmOptions
{
    int samples = 1000;
    int iterations = 15;
    std::uint64_t seed = 1;
    bool area_weighted = false;
};

struct SkmResult
{
    Correspondence map;
    std::vector<double> objective; ///< mean per-pair squared kernel mismatch of each iteration's picks
};

/// Spectral kernel maps on embeddings whose dot products are the kernels (see spectral_embedding).
SkmResult skm(
    const Eigen::MatrixXd& embedding_x,
    const Eigen::MatrixXd& embedding_y,
    const VertexMasses& masses_x,
    const Correspondence& init,
    const SkmOptions& options);

/// For every query x, the y minimizing sum_l (K_X(x, x_l) - K_Y(y, y_l))^2 over the landmark pairs.
/// Ties go to the lower y.
std::vector<int> skm_assign(
    const Eigen::MatrixXd& embedding_x,
    const Eigen::MatrixXd& embedding_y,
    std::span<const int> queries,
    std::span<const int> landmarks_x,
    std::span<const int> landmarks_y);

struct FskmOptions
{
    enum class Pairs { All, Diagonal };

    int samples = 2000; ///< 0 samples every vertex of X
    int iterations = 15;
    double beta = 0.1;
    Pairs pairs = Pairs::All;
    int partner_cap = 0;
    bool plain_metric = false; ///< Euclidean distance instead of the Lambda_X^-1/2 weighting
    std::uint64_t seed = 1;
    bool area_weighted = false;
};

struct FskmResult
{
    FunctionalMatrix C;
    Correspondence map;
    std::vector<std::string> warnings;
    double max_normal_residual = 0.0; ///< worst relative residual of the per-column solves
};

FskmResult fskm(
    const SpectralBasis& basis_x,
    const SpectralBasis& basis_y,
    const KernelSpec& kernel,
    const Correspondence& init,
    const FskmOptions& options);

/// Unpenalized least-squares C followed by plain nearest neighbours of Phi_X among Phi_Y C, L times.
FskmResult refine_icp(const SpectralBasis& basis_x, const SpectralBasis& basis_y, const Correspondence& init, int iterations);

/// Least-squares C with Phi_X(x) ~ Phi_Y(map(x)) C over the map's domain.
FunctionalMatrix fit_functional_map(const SpectralBasis& basis_x, const SpectralBasis& basis_y, const Correspondence& map);

struct FunctionalInputs
{
    const SpectralBasis* basis_x = nullptr;
    const SpectralBasis* basis_y = nullptr;
    KernelSpec kernel = KernelSpec::gps();
    const FunctionalMatrix* C = nullptr;         ///< d2_EMB is skipped without it
    const QuasiConformalFields* qc_x = nullptr;  ///< d2_QC is skipped without both fields
    const QuasiConformalFields* qc_y = nullptr;
    int samples = 1000;
    std::uint64_t seed = 1;
    bool area_weighted = false;
    bool orientation_reversing = false;
};

struct FunctionalValues
{
    std::optional<double> spec;
    std::optional<double> emb;
    std::optional<double> qc;
};

FunctionalValues evaluate_functionals(const Correspondence& map, const FunctionalInputs& in);

struct PipelineDiagnostics
{
    SignPermutation moment_match;
    std::vector<SignPermutation> candidates;
    std::vector<std::optional<double>> candidate_quality;
    int chosen_candidate = -1;
    double quality = 0.0;       ///< Q of the final map
    FunctionalValues functionals;
    std::vector<std::pair<std::string, double>> timings; ///< seconds, stage order
    std::vector<double> skm_objective;
    std::vector<std::string> warnings;
    double diagonal_energy = 0.0; ///< sum C_ii^2 / ||C||_F^2
};

struct PipelineResult
{
    Correspondence map;
    FunctionalMatrix C;
    PipelineDiagnostics diagnostics;
};

/// Precomputed spectra may be supplied; otherwise both are computed with cfg.n_eigs modes.
struct PipelineInputs
{
    const SpectralBasis* basis_x = nullptr;
    const SpectralBasis* basis_y = nullptr;
};

/// Stage failures are rethrown as StageError naming the stage.
PipelineResult full_pipeline(
    const TriangleMesh& mesh_x,
    const TriangleMesh& mesh_y,
    const PipelineConfig& cfg,
    const PipelineInputs& inputs = {});

} // namespace speccorr
