#include <speccorr/correspondence.hpp>
#include <speccorr/errors.hpp>
#include <speccorr/random.hpp>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace speccorr {

namespace {

constexpr Eigen::Index kChunk = 256;

enum Stream : std::uint64_t { kQualityStream = 1, kSkmStream = 2, kFskmStream = 3, kEvalStream = 4 };

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const int> rows)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

std::vector<int> targets_of(const Correspondence& c)
{
    std::vector<int> t;
    t.reserve(c.domain.size());
    for (int x : c.domain) t.push_back(c.map[x]);
    return t;
}

std::vector<int> draw(Rng& rng, int n, int m, const VertexMasses* masses)
{
    if (m <= 0 || m >= n) {
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    if (masses) return rng.weighted_sample(std::span<const double>(masses->data(), static_cast<std::size_t>(masses->size())), m);
    return rng.sample(n, m);
}

/// Row-wise argmin of ||q_r||^2-free expansion: cost(r, y) = offset(y) - 2 (Q P^T)(r, y).
struct ArgminResult
{
    std::vector<int> index;
    std::vector<double> cost;
};

ArgminResult rowwise_argmin(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& P, const Eigen::VectorXd& offset)
{
    const Eigen::Index rows = Q.rows();
    const Eigen::Index ny = P.rows();
    ArgminResult out;
    out.index.resize(static_cast<std::size_t>(rows));
    out.cost.resize(static_cast<std::size_t>(rows));
    const Eigen::MatrixXd Pt = P.transpose();
    for (Eigen::Index start = 0; start < rows; start += kChunk) {
        const Eigen::Index len = std::min(kChunk, rows - start);
        const Eigen::MatrixXd D = Q.middleRows(start, len) * Pt;
        for (Eigen::Index r = 0; r < len; ++r) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (Eigen::Index y = 0; y < ny; ++y) {
                const double c = offset[y] - 2.0 * D(r, y);
                if (c < best) {
                    best = c;
                    arg = static_cast<int>(y);
                }
            }
            out.index[static_cast<std::size_t>(start + r)] = arg;
            out.cost[static_cast<std::size_t>(start + r)] = best;
        }
    }
    return out;
}

struct KernelAssign
{
    std::vector<int> target;
    std::vector<double> mismatch; ///< sum over landmarks of squared kernel differences
};

KernelAssign kernel_assign(
    const Eigen::MatrixXd& ex,
    const Eigen::MatrixXd& ey,
    std::span<const int> queries,
    std::span<const int> landmarks_x,
    std::span<const int> landmarks_y)
{
    if (landmarks_x.empty() || landmarks_x.size() != landmarks_y.size()) {
        throw Error("kernel assignment needs a nonempty, paired landmark set");
    }
    const Eigen::MatrixXd px = gather_rows(ex, landmarks_x);
    const Eigen::MatrixXd py = gather_rows(ey, landmarks_y);
    const Eigen::MatrixXd gxx = px.transpose() * px;
    const Eigen::MatrixXd gxy = px.transpose() * py;
    const Eigen::MatrixXd gyy = py.transpose() * py;
    const Eigen::VectorXd offset = (ey * gyy).cwiseProduct(ey).rowwise().sum();
    const Eigen::MatrixXd q = gather_rows(ex, queries);
    const Eigen::MatrixXd qg = q * gxy;
    const ArgminResult am = rowwise_argmin(qg, ey, offset);
    const Eigen::VectorXd self = (q * gxx).cwiseProduct(q).rowwise().sum();
    KernelAssign out{am.index, am.cost};
    for (std::size_t i = 0; i < queries.size(); ++i) out.mismatch[i] = std::max(0.0, out.mismatch[i] + self[static_cast<Eigen::Index>(i)]);
    return out;
}

Eigen::VectorXd solve_spd(Eigen::MatrixXd A, const Eigen::VectorXd& b, bool& ridged)
{
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        A.diagonal().array() += 1e-10 * A.trace();
        llt.compute(A);
        ridged = true;
        if (llt.info() != Eigen::Success) throw Error("normal equations are singular even after the ridge");
    }
    return llt.solve(b);
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value, const std::string& origin)
{
    T out{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw Error(origin + ": invalid value '" + value + "' for " + key);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value, const std::string& origin)
{
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw Error(origin + ": invalid boolean '" + value + "' for " + key);
}

class StageTimer
{
public:
    explicit StageTimer(PipelineDiagnostics& diag)
        : m_diag(diag)
    {}

    template <class F>
    auto run(const std::string& name, F&& body)
    {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(body())>) {
                body();
                record(name, t0);
            } else {
                auto out = body();
                record(name, t0);
                return out;
            }
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
    }

private:
    void record(const std::string& name, std::chrono::steady_clock::time_point t0)
    {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        m_diag.timings.emplace_back(name, dt.count());
    }

    PipelineDiagnostics& m_diag;
};

} // namespace

void PipelineConfig::validate() const
{
    const std::pair<const char*, int> counts[] = {
        {"n_eigs", n_eigs}, {"n0", n0}, {"candidates", candidates}, {"skm_samples", skm_samples},
        {"fskm_samples", fskm_samples}, {"coarse_faces", coarse_faces}, {"evaluation_samples", evaluation_samples},
    };
    for (const auto& [name, v] : counts) {
        if (v <= 0) throw Error(std::string("config: ") + name + " must be positive");
    }
    if (bands < 0 || iterations < 0 || quality_skm_iterations < 0 || fskm_partner_cap < 0) {
        throw Error("config: counts must be nonnegative");
    }
    if (n0 > n_eigs) throw Error("config: n0 must not exceed n_eigs");
    if (!(beta >= 0.0)) throw Error("config: beta must be nonnegative");
    if (kernel.kind == KernelSpec::Kind::Heat && !(kernel.t > 0.0)) throw Error("config: heat_t must be positive");
}

void apply_config_text(PipelineConfig& cfg, const std::string& text, const std::string& origin)
{
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw Error(where + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key == "n_eigs") cfg.n_eigs = parse_number<int>(key, value, where);
        else if (key == "n0") cfg.n0 = parse_number<int>(key, value, where);
        else if (key == "bands") cfg.bands = parse_number<int>(key, value, where);
        else if (key == "candidates") cfg.candidates = parse_number<int>(key, value, where);
        else if (key == "skm_samples") cfg.skm_samples = parse_number<int>(key, value, where);
        else if (key == "fskm_samples") cfg.fskm_samples = parse_number<int>(key, value, where);
        else if (key == "iterations") cfg.iterations = parse_number<int>(key, value, where);
        else if (key == "beta") cfg.beta = parse_number<double>(key, value, where);
        else if (key == "kernel") {
            if (value == "gps") cfg.kernel.kind = KernelSpec::Kind::GPS;
            else if (value == "heat") cfg.kernel.kind = KernelSpec::Kind::Heat;
            else throw Error(where + ": kernel must be gps or heat");
        } else if (key == "heat_t") cfg.kernel.t = parse_number<double>(key, value, where);
        else if (key == "area_weighted_sampling") cfg.area_weighted_sampling = parse_bool(key, value, where);
        else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value, where);
        else if (key == "quality_skm_iterations") cfg.quality_skm_iterations = parse_number<int>(key, value, where);
        else if (key == "coarse_faces") cfg.coarse_faces = parse_number<int>(key, value, where);
        else if (key == "bandpass_weight") cfg.bandpass_weight = parse_number<double>(key, value, where);
        else if (key == "fskm_partner_cap") cfg.fskm_partner_cap = parse_number<int>(key, value, where);
        else if (key == "eigenvalue_window") cfg.eigenvalue_window = parse_number<double>(key, value, where);
        else if (key == "ambiguity") cfg.ambiguity = parse_number<double>(key, value, where);
        else if (key == "evaluation_samples") cfg.evaluation_samples = parse_number<int>(key, value, where);
        else if (key == "use_nu") cfg.use_nu = parse_bool(key, value, where);
        else if (key == "use_quality") cfg.use_quality = parse_bool(key, value, where);
        else if (key == "run_skm") cfg.run_skm = parse_bool(key, value, where);
        else if (key == "run_fskm") cfg.run_fskm = parse_bool(key, value, where);
        else if (key == "allow_symmetry") cfg.allow_symmetry = parse_bool(key, value, where);
        else throw Error(where + ": unknown key '" + key + "'");
    }
}

void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), path.string());
}

std::string config_to_text(const PipelineConfig& cfg)
{
    // shortest text that reads back to the same double
    auto num = [](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    std::ostringstream out;
    out << "n_eigs = " << cfg.n_eigs << '\n'
        << "n0 = " << cfg.n0 << '\n'
        << "bands = " << cfg.bands << '\n'
        << "candidates = " << cfg.candidates << '\n'
        << "skm_samples = " << cfg.skm_samples << '\n'
        << "fskm_samples = " << cfg.fskm_samples << '\n'
        << "iterations = " << cfg.iterations << '\n'
        << "beta = " << num(cfg.beta) << '\n'
        << "kernel = " << (cfg.kernel.kind == KernelSpec::Kind::GPS ? "gps" : "heat") << '\n'
        << "heat_t = " << num(cfg.kernel.t) << '\n'
        << "area_weighted_sampling = " << (cfg.area_weighted_sampling ? "true" : "false") << '\n'
        << "seed = " << cfg.seed << '\n'
        << "quality_skm_iterations = " << cfg.quality_skm_iterations << '\n'
        << "coarse_faces = " << cfg.coarse_faces << '\n'
        << "bandpass_weight = " << num(cfg.bandpass_weight) << '\n'
        << "fskm_partner_cap = " << cfg.fskm_partner_cap << '\n'
        << "eigenvalue_window = " << num(cfg.eigenvalue_window) << '\n'
        << "ambiguity = " << num(cfg.ambiguity) << '\n'
        << "evaluation_samples = " << cfg.evaluation_samples << '\n'
        << "use_nu = " << (cfg.use_nu ? "true" : "false") << '\n'
        << "use_quality = " << (cfg.use_quality ? "true" : "false") << '\n'
        << "run_skm = " << (cfg.run_skm ? "true" : "false") << '\n'
        << "run_fskm = " << (cfg.run_fskm ? "true" : "false") << '\n'
        << "allow_symmetry = " << (cfg.allow_symmetry ? "true" : "false") << '\n';
    return out.str();
}

std::vector<std::vector<int>> candidate_set(const Eigen::MatrixXd& sig_x, const Eigen::MatrixXd& sig_y, int k)
{
    if (sig_x.cols() != sig_y.cols()) throw Error("candidate_set: signatures differ in channel count");
    const Eigen::Index ny = sig_y.rows();
    k = std::clamp<int>(k, 1, static_cast<int>(ny));
    const Eigen::VectorXd yy = sig_y.rowwise().squaredNorm();
    const Eigen::MatrixXd yt = sig_y.transpose();
    std::vector<std::vector<int>> out(static_cast<std::size_t>(sig_x.rows()));
    std::vector<std::pair<double, int>> row(static_cast<std::size_t>(ny));
    for (Eigen::Index start = 0; start < sig_x.rows(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, sig_x.rows() - start);
        const Eigen::MatrixXd D = sig_x.middleRows(start, len) * yt;
        for (Eigen::Index r = 0; r < len; ++r) {
            const double xx = sig_x.row(start + r).squaredNorm();
            for (Eigen::Index y = 0; y < ny; ++y) row[y] = {xx + yy[y] - 2.0 * D(r, y), static_cast<int>(y)};
            std::partial_sort(row.begin(), row.begin() + k, row.end());
            auto& list = out[static_cast<std::size_t>(start + r)];
            list.resize(static_cast<std::size_t>(k));
            for (int i = 0; i < k; ++i) list[i] = row[i].second;
        }
    }
    return out;
}

double qc_distance2(
    const QuasiConformalFields& qx,
    const QuasiConformalFields& qy,
    int x,
    int y,
    bool use_nu,
    bool orientation_reversing)
{
    const double sign = orientation_reversing ? -1.0 : 1.0;
    double d = (qx.omega.row(x) - qy.omega.row(y)).squaredNorm();
    if (use_nu) d += (qx.nu.row(x) - sign * qy.nu.row(y)).squaredNorm();
    return d;
}

Correspondence sqcm(
    const QuasiConformalFields& qx,
    const QuasiConformalFields& qy,
    const std::vector<std::vector<int>>& candidates,
    const SqcmOptions& options)
{
    if (qx.n0 != qy.n0) throw Error("sqcm: fields built with different N0");
    if (static_cast<int>(candidates.size()) != qx.num_vertices()) throw Error("sqcm: one candidate list per vertex required");
    std::vector<int> map(candidates.size());
    for (std::size_t x = 0; x < candidates.size(); ++x) {
        const auto& list = candidates[x];
        if (list.empty()) throw Error("sqcm: empty candidate set at vertex " + std::to_string(x));
        double best = std::numeric_limits<double>::infinity();
        int arg = -1;
        for (int y : list) {
            const double d = qc_distance2(qx, qy, static_cast<int>(x), y, options.use_nu, options.orientation_reversing);
            if (d < best || (d == best && y < arg)) {
                best = d;
                arg = y;
            }
        }
        map[x] = arg;
    }
    return Correspondence::dense(std::move(map), Correspondence::Stage::SQCM);
}

std::vector<int> skm_assign(
    const Eigen::MatrixXd& embedding_x,
    const Eigen::MatrixXd& embedding_y,
    std::span<const int> queries,
    std::span<const int> landmarks_x,
    std::span<const int> landmarks_y)
{
    return kernel_assign(embedding_x, embedding_y, queries, landmarks_x, landmarks_y).target;
}

SkmResult skm(
    const Eigen::MatrixXd& embedding_x,
    const Eigen::MatrixXd& embedding_y,
    const VertexMasses& masses_x,
    const Correspondence& init,
    const SkmOptions& options)
{
    if (init.domain.empty()) throw Error("skm: initial correspondence is empty");
    const int nx = static_cast<int>(embedding_x.rows());
    Rng rng(options.seed);
    std::vector<int> land_x = init.domain;
    std::vector<int> land_y = targets_of(init);
    SkmResult out;
    for (int it = 0; it < options.iterations; ++it) {
        const std::vector<int> sample = draw(rng, nx, options.samples, options.area_weighted ? &masses_x : nullptr);
        const KernelAssign a = kernel_assign(embedding_x, embedding_y, sample, land_x, land_y);
        double total = 0.0;
        for (double v : a.mismatch) total += v;
        out.objective.push_back(total / (static_cast<double>(sample.size()) * static_cast<double>(land_x.size())));
        land_x = sample;
        land_y = a.target;
    }
    std::vector<int> all(static_cast<std::size_t>(nx));
    std::iota(all.begin(), all.end(), 0);
    const KernelAssign closing = kernel_assign(embedding_x, embedding_y, all, land_x, land_y);
    out.map = Correspondence::dense(closing.target, Correspondence::Stage::SKM);
    return out;
}

FskmResult fskm(
    const SpectralBasis& basis_x,
    const SpectralBasis& basis_y,
    const KernelSpec& kernel,
    const Correspondence& init,
    const FskmOptions& options)
{
    if (init.domain.empty()) throw Error("fskm: initial correspondence is empty");
    if (basis_x.size() != basis_y.size()) throw Error("fskm: bases must have the same size");
    const int N = basis_x.size();
    const int nx = basis_x.num_vertices();
    const Eigen::MatrixXd phi_x = basis_x.eigenfunctions.rightCols(N);
    const Eigen::MatrixXd phi_y = basis_y.eigenfunctions.rightCols(N);
    const Eigen::VectorXd lambda_x = basis_x.eigenvalues.tail(N);
    const Eigen::VectorXd lambda_y = basis_y.eigenvalues.tail(N);
    const bool all_pairs = options.pairs == FskmOptions::Pairs::All;
    Eigen::MatrixXd ex;
    Eigen::MatrixXd ey;
    if (all_pairs) {
        ex = spectral_embedding(basis_x, kernel);
        ey = spectral_embedding(basis_y, kernel);
    }
    const Eigen::VectorXd metric = options.plain_metric ? Eigen::VectorXd::Ones(N) : lambda_x.cwiseSqrt().cwiseInverse().eval();
    const VertexMasses* weights = options.area_weighted ? &basis_x.masses : nullptr;

    Rng rng(options.seed);
    std::vector<int> sx = init.domain;
    std::vector<int> sy = targets_of(init);
    const int m = options.samples <= 0 ? nx : std::min(options.samples, nx);
    if (static_cast<int>(sx.size()) > m) {
        const std::vector<int> pick = rng.sample(static_cast<int>(sx.size()), m);
        std::vector<int> px;
        std::vector<int> py;
        for (int k : pick) {
            px.push_back(sx[k]);
            py.push_back(sy[k]);
        }
        sx = std::move(px);
        sy = std::move(py);
    }

    FskmResult out;
    auto solve_c = [&]() {
        const int s = static_cast<int>(sx.size());
        Eigen::VectorXd q = Eigen::VectorXd::Ones(s);
        Eigen::VectorXd r = Eigen::VectorXd::Ones(s);
        if (all_pairs) {
            const Eigen::MatrixXd gx = gather_rows(ex, sx);
            const Eigen::MatrixXd gy = gather_rows(ey, sy);
            const Eigen::MatrixXd kx = gx * gx.transpose();
            const Eigen::MatrixXd ky = gy * gy.transpose();
            for (int a = 0; a < s; ++a) {
                const double dx = std::abs(kx(a, a));
                const double dy = std::abs(ky(a, a));
                if (!(dx > 0.0) || !(dy > 0.0)) throw Error("fskm: vanishing kernel diagonal");
                double qa = 0.0;
                double ra = 0.0;
                int used = 0;
                for (int b = 0; b < s; ++b) {
                    if (options.partner_cap > 0 && b != a) {
                        if (used >= options.partner_cap - 1) continue;
                        ++used;
                    }
                    const double wx = kx(a, b) / dx;
                    const double wy = ky(a, b) / dy;
                    qa += wy * wy;
                    ra += wy * wx;
                }
                q[a] = qa;
                r[a] = ra;
            }
        }
        const Eigen::MatrixXd py = gather_rows(phi_y, sy);
        const Eigen::MatrixXd px = gather_rows(phi_x, sx);
        Eigen::MatrixXd ata = py.transpose() * (q.asDiagonal() * py);
        ata = 0.5 * (ata + ata.transpose());
        const Eigen::MatrixXd atb = py.transpose() * (r.asDiagonal() * px);
        const Eigen::VectorXd u = ata.diagonal();
        FunctionalMatrix C(N, N);
        bool ridged = false;
        for (int j = 0; j < N; ++j) {
            Eigen::MatrixXd system = ata;
            if (options.beta > 0.0) {
                for (int i = 0; i < N; ++i) {
                    const double w = std::abs(lambda_y[i] - lambda_x[j]) / lambda_x[j] * u[i];
                    system(i, i) += options.beta * w * w;
                }
            }
            C.col(j) = solve_spd(system, atb.col(j), ridged);
            const double rhs = atb.col(j).norm();
            if (rhs > 0.0) {
                out.max_normal_residual = std::max(out.max_normal_residual, (system * C.col(j) - atb.col(j)).norm() / rhs);
            }
        }
        if (ridged) out.warnings.push_back("fskm: singular normal equations, ridge 1e-10 * trace added");
        return C;
    };

    auto assign = [&](const FunctionalMatrix& C, std::span<const int> queries) {
        const Eigen::MatrixXd target = phi_y * C * metric.asDiagonal();
        const Eigen::MatrixXd q = gather_rows(phi_x, queries) * metric.asDiagonal();
        const Eigen::VectorXd offset = target.rowwise().squaredNorm();
        return rowwise_argmin(q, target, offset).index;
    };

    FunctionalMatrix C = solve_c();
    for (int it = 0; it < options.iterations; ++it) {
        if (it > 0) C = solve_c();
        const std::vector<int> sample = draw(rng, nx, m, weights);
        sy = assign(C, sample);
        sx = sample;
    }
    std::vector<int> all(static_cast<std::size_t>(nx));
    std::iota(all.begin(), all.end(), 0);
    out.map = Correspondence::dense(assign(C, all), Correspondence::Stage::FSKM);
    out.C = std::move(C);
    return out;
}

FskmResult refine_icp(const SpectralBasis& basis_x, const SpectralBasis& basis_y, const Correspondence& init, int iterations)
{
    if (init.domain.empty()) throw Error("refine_icp: initial correspondence is empty");
    if (basis_x.size() != basis_y.size()) throw Error("refine_icp: bases must have the same size");
    const int N = basis_x.size();
    const int nx = basis_x.num_vertices();
    const Eigen::MatrixXd phi_x = basis_x.eigenfunctions.rightCols(N);
    const Eigen::MatrixXd phi_y = basis_y.eigenfunctions.rightCols(N);
    const Eigen::MatrixXd phi_y_t = phi_y.transpose();
    const Eigen::VectorXd offset_base = Eigen::VectorXd::Zero(phi_y.rows());

    FskmResult out;
    Correspondence current = init;
    FunctionalMatrix C = FunctionalMatrix::Identity(N, N);
    for (int it = 0; it < iterations; ++it) {
        const std::vector<int> tx = current.domain;
        const std::vector<int> ty = targets_of(current);
        const Eigen::MatrixXd a = gather_rows(phi_y, ty);
        const Eigen::MatrixXd b = gather_rows(phi_x, tx);
        Eigen::MatrixXd ata = a.transpose() * a;
        ata = 0.5 * (ata + ata.transpose());
        const Eigen::MatrixXd atb = a.transpose() * b;
        bool ridged = false;
        for (int j = 0; j < N; ++j) C.col(j) = solve_spd(ata, atb.col(j), ridged);
        if (ridged) out.warnings.push_back("refine_icp: singular normal equations, ridge added");

        const Eigen::MatrixXd image = phi_y * C;
        const Eigen::VectorXd offset = image.rowwise().squaredNorm();
        std::vector<int> map(static_cast<std::size_t>(nx));
        for (Eigen::Index start = 0; start < nx; start += kChunk) {
            const Eigen::Index len = std::min<Eigen::Index>(kChunk, nx - start);
            const Eigen::MatrixXd D = phi_x.middleRows(start, len) * image.transpose();
            for (Eigen::Index r = 0; r < len; ++r) {
                double best = std::numeric_limits<double>::infinity();
                int arg = 0;
                for (Eigen::Index y = 0; y < image.rows(); ++y) {
                    const double c = offset[y] - 2.0 * D(r, y);
                    if (c < best) {
                        best = c;
                        arg = static_cast<int>(y);
                    }
                }
                map[static_cast<std::size_t>(start + r)] = arg;
            }
        }
        current = Correspondence::dense(std::move(map), Correspondence::Stage::ICP);
    }
    out.C = C;
    out.map = current;
    out.map.provenance = Correspondence::Stage::ICP;
    return out;
}

FunctionalMatrix fit_functional_map(const SpectralBasis& basis_x, const SpectralBasis& basis_y, const Correspondence& map)
{
    const int N = std::min(basis_x.size(), basis_y.size());
    const std::vector<int> ty = targets_of(map);
    const Eigen::MatrixXd a = gather_rows(basis_y.eigenfunctions.middleCols(1, N), ty);
    const Eigen::MatrixXd b = gather_rows(basis_x.eigenfunctions.middleCols(1, N), map.domain);
    return a.colPivHouseholderQr().solve(b);
}

FunctionalValues evaluate_functionals(const Correspondence& map, const FunctionalInputs& in)
{
    if (!in.basis_x || !in.basis_y) throw Error("evaluate_functionals: both bases are required");
    if (map.domain.empty()) throw Error("evaluate_functionals: empty correspondence");
    const SpectralBasis& bx = *in.basis_x;
    const SpectralBasis& by = *in.basis_y;
    const int nd = static_cast<int>(map.domain.size());

    Eigen::VectorXd rho(nd);
    for (int k = 0; k < nd; ++k) rho[k] = in.area_weighted ? bx.masses[map.domain[k]] : 1.0;
    rho /= rho.sum();

    FunctionalValues out;
    {
        Rng rng(in.seed);
        std::vector<int> pick;
        if (in.area_weighted) {
            pick = rng.weighted_sample(std::span<const double>(rho.data(), static_cast<std::size_t>(nd)), in.samples);
        } else {
            pick = rng.sample(nd, in.samples);
        }
        std::vector<int> sx;
        std::vector<int> sy;
        for (int k : pick) {
            sx.push_back(map.domain[k]);
            sy.push_back(map.map[map.domain[k]]);
        }
        const Eigen::MatrixXd ex = gather_rows(spectral_embedding(bx, in.kernel), sx);
        const Eigen::MatrixXd ey = gather_rows(spectral_embedding(by, in.kernel), sy);
        const Eigen::MatrixXd diff = ex * ex.transpose() - ey * ey.transpose();
        const double s = static_cast<double>(sx.size());
        out.spec = std::sqrt(diff.squaredNorm() / (s * s));
    }
    if (in.C) {
        const int N = static_cast<int>(in.C->rows());
        const Eigen::VectorXd metric = bx.eigenvalues.segment(1, N).cwiseSqrt().cwiseInverse();
        double total = 0.0;
        for (int k = 0; k < nd; ++k) {
            const int x = map.domain[k];
            const Eigen::RowVectorXd d =
                (bx.eigenfunctions.row(x).segment(1, N) - by.eigenfunctions.row(map.map[x]).segment(1, N) * (*in.C))
                    .cwiseProduct(metric.transpose());
            total += rho[k] * d.squaredNorm();
        }
        out.emb = std::sqrt(total);
    }
    if (in.qc_x && in.qc_y) {
        double total = 0.0;
        for (int k = 0; k < nd; ++k) {
            const int x = map.domain[k];
            total += rho[k] * qc_distance2(*in.qc_x, *in.qc_y, x, map.map[x], true, in.orientation_reversing);
        }
        out.qc = std::sqrt(total);
    }
    return out;
}

PipelineResult full_pipeline(
    const TriangleMesh& mesh_x,
    const TriangleMesh& mesh_y,
    const PipelineConfig& cfg,
    const PipelineInputs& inputs)
{
    cfg.validate();
    PipelineResult result;
    PipelineDiagnostics& diag = result.diagnostics;
    StageTimer timer(diag);

    SpectralBasis own_x;
    SpectralBasis own_y;
    timer.run("spectrum", [&] {
        const int n = std::min({cfg.n_eigs, mesh_x.num_vertices() - 1, mesh_y.num_vertices() - 1});
        if (n < cfg.n0) throw SpectrumError("meshes too small for N0 matched functions");
        if (!inputs.basis_x) own_x = compute_spectrum(mesh_x, n);
        if (!inputs.basis_y) own_y = compute_spectrum(mesh_y, n);
    });
    const SpectralBasis& bx = inputs.basis_x ? *inputs.basis_x : own_x;
    const SpectralBasis& by = inputs.basis_y ? *inputs.basis_y : own_y;
    if (bx.num_vertices() != mesh_x.num_vertices() || by.num_vertices() != mesh_y.num_vertices()) {
        throw StageError("spectrum", "supplied basis does not match its mesh");
    }
    if (bx.size() != by.size()) throw StageError("spectrum", "bases differ in size");

    const int n0 = cfg.n0;
    diag.moment_match = timer.run("moments", [&] {
        const MomentTensor mx = third_order_moments(bx, n0);
        const MomentTensor my = third_order_moments(by, n0);
        return match_moments(
            mx, my, bx.eigenvalues.segment(1, n0), by.eigenvalues.segment(1, n0),
            {cfg.eigenvalue_window, cfg.ambiguity});
    });

    const SignPermutation id = SignPermutation::identity(n0);
    const FaceBasisGradients grads_x = face_gradients(mesh_x);
    const FaceBasisGradients grads_y = face_gradients(mesh_y);
    Eigen::MatrixXd sig_x;
    QuasiConformalFields qc_x;
    timer.run("signature", [&] {
        sig_x = matched_signature(bx, id, n0, cfg.bands, cfg.bandpass_weight);
        qc_x = qc_fields(bx, mesh_x, grads_x, n0, id);
    });

    DecimationResult coarse;
    VertexMatrix normals_y;
    timer.run("decimate", [&] {
        coarse = decimate(mesh_x, std::clamp(cfg.coarse_faces, 4, mesh_x.num_faces()));
        normals_y = normals(mesh_y).vertex;
    });

    const Eigen::MatrixXd gps_x = spectral_embedding(bx, cfg.kernel);
    const Eigen::MatrixXd gps_y = spectral_embedding(by, cfg.kernel);
    diag.candidates = cfg.use_quality ? sign_candidates(diag.moment_match) : std::vector<SignPermutation>{diag.moment_match};

    std::vector<std::optional<Correspondence>> sqcm_maps(diag.candidates.size());
    std::size_t running = 0;
    const SqcmOptions sq{cfg.use_nu, cfg.allow_symmetry};
    const QualityMatch qm = timer.run("quality", [&] {
        auto runner = [&](const SignPermutation& cand) {
            const std::size_t slot = running++;
            const Eigen::MatrixXd sig_y = matched_signature(by, cand, n0, cfg.bands, cfg.bandpass_weight);
            const auto cands = candidate_set(sig_x, sig_y, cfg.candidates);
            const QuasiConformalFields qc_y = qc_fields(by, mesh_y, grads_y, n0, cand);
            Correspondence init = sqcm(qc_x, qc_y, cands, sq);
            sqcm_maps[slot] = init;
            if (cfg.quality_skm_iterations == 0) return init;
            SkmOptions so{cfg.skm_samples, cfg.quality_skm_iterations, derive_seed(cfg.seed, kQualityStream), cfg.area_weighted_sampling};
            return skm(gps_x, gps_y, bx.masses, init, so).map;
        };
        auto scorer = [&](const Correspondence& c) { return orientable_area_correlation(coarse, mesh_y, normals_y, c, mesh_x); };
        return match_by_quality(diag.candidates, runner, scorer, cfg.allow_symmetry);
    });
    diag.chosen_candidate = qm.index;
    diag.candidate_quality = qm.scores;
    const SignPermutation& chosen = qm.signperm;

    Correspondence current = *sqcm_maps[static_cast<std::size_t>(qm.index)];
    if (cfg.run_skm) {
        timer.run("skm", [&] {
            SkmOptions so{cfg.skm_samples, cfg.iterations, derive_seed(cfg.seed, kSkmStream), cfg.area_weighted_sampling};
            SkmResult r = skm(gps_x, gps_y, bx.masses, current, so);
            diag.skm_objective = r.objective;
            current = std::move(r.map);
        });
    }
    if (cfg.run_fskm) {
        timer.run("fskm", [&] {
            FskmOptions fo;
            fo.samples = cfg.fskm_samples;
            fo.iterations = cfg.iterations;
            fo.beta = cfg.beta;
            fo.partner_cap = cfg.fskm_partner_cap;
            fo.seed = derive_seed(cfg.seed, kFskmStream);
            fo.area_weighted = cfg.area_weighted_sampling;
            FskmResult r = fskm(bx, by, cfg.kernel, current, fo);
            for (auto& w : r.warnings) diag.warnings.push_back(std::move(w));
            current = std::move(r.map);
            result.C = std::move(r.C);
        });
    }

    timer.run("diagnostics", [&] {
        if (result.C.size() == 0) result.C = fit_functional_map(bx, by, current);
        diag.quality = orientable_area_correlation(coarse, mesh_y, normals_y, current, mesh_x);
        const QuasiConformalFields qc_y = qc_fields(by, mesh_y, grads_y, n0, chosen);
        FunctionalInputs fi;
        fi.basis_x = &bx;
        fi.basis_y = &by;
        fi.kernel = cfg.kernel;
        fi.C = &result.C;
        fi.qc_x = &qc_x;
        fi.qc_y = &qc_y;
        fi.samples = cfg.evaluation_samples;
        fi.seed = derive_seed(cfg.seed, kEvalStream);
        fi.area_weighted = cfg.area_weighted_sampling;
        fi.orientation_reversing = cfg.allow_symmetry;
        diag.functionals = evaluate_functionals(current, fi);
        const double total = result.C.squaredNorm();
        diag.diagonal_energy = total > 0.0 ? result.C.diagonal().squaredNorm() / total : 0.0;
    });
    result.map = std::move(current);
    return result;
}

} // namespace speccorr
