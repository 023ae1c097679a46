#include <speccorr/errors.hpp>
#include <speccorr/evaluation.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <queue>

namespace speccorr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using HeapEntry = std::pair<double, int>;
using MinHeap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>>;

/// Errors geodesic(image[k], truth[k]) grouped by truth vertex, truncated at `cutoff`.
std::vector<double> pair_distances(
    const GeodesicGraph& graph,
    std::span<const int> image,
    std::span<const int> truth,
    double cutoff)
{
    std::vector<std::size_t> order(image.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return truth[a] < truth[b]; });
    std::vector<double> out(image.size(), kInf);
    std::size_t k = 0;
    std::vector<int> targets;
    while (k < order.size()) {
        const int source = truth[order[k]];
        std::size_t end = k;
        targets.clear();
        while (end < order.size() && truth[order[end]] == source) targets.push_back(image[order[end++]]);
        const std::vector<double> d = graph.distances_to(source, targets, cutoff);
        for (std::size_t i = k; i < end; ++i) out[order[i]] = d[i - k];
        k = end;
    }
    return out;
}

} // namespace

GeodesicGraph::GeodesicGraph(const TriangleMesh& mesh)
{
    const auto edges = unique_edges(mesh);
    const int n = mesh.num_vertices();
    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    for (const auto& [a, b] : edges) {
        ++degree[a];
        ++degree[b];
    }
    m_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int v = 0; v < n; ++v) m_offsets[v + 1] = m_offsets[v] + degree[v];
    m_neighbors.resize(static_cast<std::size_t>(m_offsets[n]));
    m_lengths.resize(m_neighbors.size());
    std::vector<int> fill(m_offsets.begin(), m_offsets.end() - 1);
    for (const auto& [a, b] : edges) {
        const double len = (mesh.vertex(a) - mesh.vertex(b)).norm();
        m_neighbors[fill[a]] = b;
        m_lengths[fill[a]++] = len;
        m_neighbors[fill[b]] = a;
        m_lengths[fill[b]++] = len;
    }
}

Eigen::VectorXd GeodesicGraph::distances(std::span<const int> sources, double cutoff) const
{
    const int n = num_vertices();
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, kInf);
    MinHeap heap;
    for (int s : sources) {
        if (s < 0 || s >= n) throw Error("geodesics: source vertex out of range");
        dist[s] = 0.0;
        heap.emplace(0.0, s);
    }
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[v]) continue;
        for (int e = m_offsets[v]; e < m_offsets[v + 1]; ++e) {
            const double nd = d + m_lengths[e];
            const int w = m_neighbors[e];
            if (nd < dist[w] && nd <= cutoff) {
                dist[w] = nd;
                heap.emplace(nd, w);
            }
        }
    }
    return dist;
}

std::vector<double> GeodesicGraph::distances_to(int source, std::span<const int> targets, double cutoff) const
{
    const int n = num_vertices();
    if (source < 0 || source >= n) throw Error("geodesics: source vertex out of range");
    std::vector<double> out(targets.size(), kInf);
    std::size_t pending = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] == source) out[i] = 0.0;
        else ++pending;
    }
    if (pending == 0) return out;

    std::vector<double> dist(static_cast<std::size_t>(n), kInf);
    std::vector<char> wanted(static_cast<std::size_t>(n), 0);
    for (int t : targets) wanted[t] = 1;
    dist[source] = 0.0;
    MinHeap heap;
    heap.emplace(0.0, source);
    while (!heap.empty() && pending > 0) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[v]) continue;
        if (wanted[v] && v != source) {
            wanted[v] = 0;
            for (std::size_t i = 0; i < targets.size(); ++i) {
                if (targets[i] == v) {
                    out[i] = d;
                    --pending;
                }
            }
        }
        for (int e = m_offsets[v]; e < m_offsets[v + 1]; ++e) {
            const double nd = d + m_lengths[e];
            const int w = m_neighbors[e];
            if (nd < dist[w] && nd <= cutoff) {
                dist[w] = nd;
                heap.emplace(nd, w);
            }
        }
    }
    return out;
}

GeodesicField geodesics(const TriangleMesh& mesh, std::span<const int> sources)
{
    if (sources.empty()) throw Error("geodesics: empty source set");
    GeodesicField field;
    field.distance = GeodesicGraph(mesh).distances(sources);
    const auto unreachable = std::count_if(
        field.distance.begin(), field.distance.end(), [](double d) { return !std::isfinite(d); });
    if (unreachable > 0) {
        field.warnings.push_back(std::to_string(unreachable) + " vertices unreachable from the sources; distance set to infinity");
    }
    return field;
}

double DistortionCurve::fraction_at(double t) const
{
    if (fractions.empty()) return 0.0;
    const long k = std::lround(t / kStep);
    return fractions[static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(fractions.size()) - 1))];
}

double DistortionCurve::area() const
{
    double a = 0.0;
    for (std::size_t i = 1; i < fractions.size(); ++i) a += 0.5 * (fractions[i] + fractions[i - 1]) * kStep;
    return a;
}

DistortionCurve curve_from_errors(std::span<const double> errors, int excluded)
{
    DistortionCurve c;
    c.evaluated = static_cast<int>(errors.size());
    c.excluded = excluded;
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < DistortionCurve::kPoints; ++k) {
        const double t = k * DistortionCurve::kStep;
        const auto within = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        c.thresholds.push_back(t);
        c.fractions.push_back(sorted.empty() ? 0.0 : static_cast<double>(within) / static_cast<double>(sorted.size()));
    }
    return c;
}

DistortionResult distortion_curve(
    const Correspondence& corr,
    std::span<const int> truth,
    const TriangleMesh& mesh_y,
    bool allow_symmetry,
    std::optional<std::span<const int>> symmetry_map)
{
    if (static_cast<int>(truth.size()) != corr.num_x()) throw Error("distortion_curve: truth must have one entry per vertex of X");
    if (allow_symmetry && !symmetry_map) throw Error("distortion_curve: symmetry evaluation needs a symmetry map of Y");
    const int ny = mesh_y.num_vertices();
    std::vector<int> image;
    std::vector<int> target;
    int excluded = corr.num_x() - static_cast<int>(corr.domain.size());
    for (int x : corr.domain) {
        if (truth[x] < 0) {
            ++excluded;
            continue;
        }
        if (truth[x] >= ny || corr[x] < 0 || corr[x] >= ny) throw Error("distortion_curve: vertex index out of range");
        image.push_back(corr[x]);
        target.push_back(truth[x]);
    }
    const double scale = std::sqrt(total_area(mesh_y));
    const double cutoff = 0.25 * scale * (1.0 + 1e-9);
    const GeodesicGraph graph(mesh_y);

    auto score = [&](std::span<const int> img) {
        DistortionResult r;
        r.errors = pair_distances(graph, img, target, cutoff);
        for (double& e : r.errors) e /= scale;
        r.curve = curve_from_errors(r.errors, excluded);
        return r;
    };

    DistortionResult raw = score(image);
    if (!allow_symmetry) return raw;
    const auto sym = *symmetry_map;
    if (static_cast<int>(sym.size()) != ny) throw Error("distortion_curve: symmetry map must cover Y");
    std::vector<int> flipped(image.size());
    for (std::size_t k = 0; k < image.size(); ++k) flipped[k] = sym[image[k]];
    DistortionResult alt = score(flipped);
    alt.curve.symmetric = true;
    const double ra = raw.curve.fraction_at(0.10);
    const double aa = alt.curve.fraction_at(0.10);
    if (aa > ra || (aa == ra && alt.curve.area() > raw.curve.area())) return alt;
    return raw;
}

DistortionCurve aggregate_curve(std::span<const DistortionResult> results)
{
    std::vector<double> pooled;
    int excluded = 0;
    for (const auto& r : results) {
        pooled.insert(pooled.end(), r.errors.begin(), r.errors.end());
        excluded += r.curve.excluded;
    }
    return curve_from_errors(pooled, excluded);
}

void write_curve_csv(const DistortionCurve& curve, std::ostream& out)
{
    out << "threshold,fraction\n" << std::fixed;
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        out << std::setprecision(3) << curve.thresholds[i] << ',' << std::setprecision(6) << curve.fractions[i] << '\n';
    }
}

void write_curve_csv(const DistortionCurve& curve, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_curve_csv(curve, out);
}

SymmetryResult detect_symmetry(const TriangleMesh& mesh, const PipelineConfig& cfg, const SpectralBasis* basis)
{
    PipelineConfig self = cfg;
    self.allow_symmetry = true;
    SpectralBasis own;
    if (!basis) {
        own = compute_spectrum(mesh, std::min(self.n_eigs, mesh.num_vertices() - 1));
        basis = &own;
    }
    bool degenerate = false;
    for (int i = 1; i <= std::min(self.n0, basis->size()); ++i) degenerate = degenerate || basis->in_multiplet(i);

    PipelineResult run = full_pipeline(mesh, mesh, self, {basis, basis});
    const auto& scores = run.diagnostics.candidate_quality;
    const bool reversing = std::any_of(scores.begin(), scores.end(), [](const auto& q) { return q && *q < 0.0; });
    if (!reversing && !degenerate) throw Error("no intrinsic reflective symmetry detected");

    SymmetryResult out;
    out.degenerate = degenerate;
    out.quality = run.diagnostics.quality;
    const GeodesicGraph graph(mesh);
    const double scale = std::sqrt(total_area(mesh));
    std::vector<int> self_targets(run.map.map.size());
    for (std::size_t x = 0; x < self_targets.size(); ++x) self_targets[x] = static_cast<int>(x);
    const std::vector<double> d = pair_distances(graph, run.map.map, self_targets, kInf);
    out.displacement.resize(static_cast<Eigen::Index>(d.size()));
    for (std::size_t x = 0; x < d.size(); ++x) out.displacement[static_cast<Eigen::Index>(x)] = d[x] / scale;
    out.map = std::move(run.map);
    out.diagnostics = std::move(run.diagnostics);
    if (degenerate) out.diagnostics.warnings.push_back("degenerate symmetry group: leading eigenvalues repeat, displacement not meaningful");
    return out;
}

Eigen::MatrixXd transfer_attribute(const Correspondence& corr, const Eigen::MatrixXd& attr_y)
{
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(corr.num_x(), attr_y.cols());
    for (int x : corr.domain) {
        if (corr[x] < 0 || corr[x] >= attr_y.rows()) throw Error("transfer: correspondence target outside the attribute table");
        out.row(x) = attr_y.row(corr[x]);
    }
    return out;
}

VertexAttributes transfer_attributes(const Correspondence& corr, const VertexAttributes& attr_y)
{
    VertexAttributes out;
    if (attr_y.colors.size() > 0) out.colors = transfer_attribute(corr, attr_y.colors);
    if (attr_y.texcoords.size() > 0) out.texcoords = transfer_attribute(corr, attr_y.texcoords);
    return out;
}

Eigen::MatrixXd colorize(const Eigen::VectorXd& values, double lo, double hi)
{
    Eigen::MatrixXd rgb(values.size(), 3);
    const double span = hi > lo ? hi - lo : 1.0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            rgb.row(i) << 0.5, 0.5, 0.5;
            continue;
        }
        const double t = std::clamp((values[i] - lo) / span, 0.0, 1.0);
        rgb.row(i) << t, 1.0 - std::abs(2.0 * t - 1.0), 1.0 - t;
    }
    return rgb;
}

} // namespace speccorr
