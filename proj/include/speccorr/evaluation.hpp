#pragma once

#include <speccorr/correspondence.hpp>
#include <speccorr/mesh.hpp>

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace speccorr {

/// Edge-length graph of a mesh in compressed adjacency form, reusable across many searches.
class GeodesicGraph
{
public:
    explicit GeodesicGraph(const TriangleMesh& mesh);

    int num_vertices() const { return static_cast<int>(m_offsets.size()) - 1; }

    /// Multi-source Dijkstra; vertices farther than `cutoff` (or unreachable) stay at infinity.
    Eigen::VectorXd distances(std::span<const int> sources, double cutoff = std::numeric_limits<double>::infinity()) const;

    /// Distance from `source` to each of `targets`, stopping once all are settled or `cutoff` is passed.
    std::vector<double> distances_to(
        int source,
        std::span<const int> targets,
        double cutoff = std::numeric_limits<double>::infinity()) const;

private:
    std::vector<int> m_offsets;
    std::vector<int> m_neighbors;
    std::vector<double> m_lengths;
};

struct GeodesicField
{
    Eigen::VectorXd distance;
    std::vector<std::string> warnings; ///< one entry when some vertex is unreachable
};

/// Throws Error on an empty or out-of-range source set.
GeodesicField geodesics(const TriangleMesh& mesh, std::span<const int> sources);

struct DistortionCurve
{
    static constexpr double kStep = 0.005;
    static constexpr int kPoints = 51; ///< thresholds 0, 0.005, ..., 0.25

    std::vector<double> thresholds;
    std::vector<double> fractions;
    int evaluated = 0;
    int excluded = 0;          ///< vertices without a truth entry or outside the map's domain
    bool symmetric = false;    ///< the symmetry-composed map was selected

    /// Fraction at the grid point nearest to `t`.
    double fraction_at(double t) const;
    double area() const;
};

/// Curve of normalized errors; infinite errors never count as within a threshold.
DistortionCurve curve_from_errors(std::span<const double> errors, int excluded = 0);

struct DistortionResult
{
    DistortionCurve curve;
    std::vector<double> errors; ///< normalized, per evaluated vertex of X in ascending order
};

///
/// Geodesic error of `corr` against `truth` (-1 marks a missing entry), normalized by sqrt(area(Y)).
///
/// With `allow_symmetry` both corr and symmetry_map o corr are scored and the whole-shape curve
/// with the larger fraction at 0.10 is kept (ties broken by the area under the curve, then raw).
///
DistortionResult distortion_curve(
    const Correspondence& corr,
    std::span<const int> truth,
    const TriangleMesh& mesh_y,
    bool allow_symmetry = false,
    std::optional<std::span<const int>> symmetry_map = std::nullopt);

/// Per-point error fractions of several pairs pooled into one curve.
DistortionCurve aggregate_curve(std::span<const DistortionResult> results);

void write_curve_csv(const DistortionCurve& curve, std::ostream& out);
void write_curve_csv(const DistortionCurve& curve, const std::filesystem::path& path);

struct SymmetryResult
{
    Correspondence map;
    Eigen::VectorXd displacement; ///< geodesic(x, map(x)) / sqrt(area)
    double quality = 0.0;         ///< Q of the returned self-map
    bool degenerate = false;      ///< the leading modes sit in multiplets; displacement is not meaningful
    PipelineDiagnostics diagnostics;
};

/// Self-correspondence maximizing -Q. Throws Error("no intrinsic reflective symmetry detected") when no
/// candidate reverses orientation and the spectrum is not degenerate.
SymmetryResult detect_symmetry(const TriangleMesh& mesh, const PipelineConfig& cfg, const SpectralBasis* basis = nullptr);

/// attr_X(x) = attr_Y(corr(x)); rows outside the map's domain are zero.
Eigen::MatrixXd transfer_attribute(const Correspondence& corr, const Eigen::MatrixXd& attr_y);

/// Colors and texture coordinates of Y pulled back to X; absent channels stay absent.
VertexAttributes transfer_attributes(const Correspondence& corr, const VertexAttributes& attr_y);

/// Blue-to-red ramp over [lo, hi]; non-finite values are grey.
Eigen::MatrixXd colorize(const Eigen::VectorXd& values, double lo, double hi);

} // namespace speccorr
