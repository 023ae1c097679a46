#include <speccorr/cli.hpp>
#include <speccorr/decimate.hpp>
#include <speccorr/evaluation.hpp>
#include <speccorr/mesh_io.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#ifndef SPECCORR_VERSION
#define SPECCORR_VERSION "0.0.0"
#endif

namespace speccorr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

SpectralBasis spectrum_stage(const TriangleMesh& mesh, int n_eigs)
{
    try {
        return compute_spectrum(mesh, n_eigs);
    } catch (const SpectrumError& e) {
        throw StageError("spectrum", e.what());
    }
}

std::string hex(std::uint64_t v)
{
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

TriangleMesh read_mesh(const fs::path& path)
{
    if (!fs::exists(path)) throw IoError("mesh file not found: " + path.string());
    return load_mesh(path);
}

template <class F>
void write_artifact(const fs::path& path, F&& writer)
{
    try {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        writer();
    } catch (const fs::filesystem_error& e) {
        throw IoError(e.what());
    } catch (const IoError&) {
        throw;
    } catch (const Error& e) {
        throw IoError(e.what());
    }
}

void write_json(const json& doc, const fs::path& path)
{
    write_artifact(path, [&] {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path.string());
        out << doc.dump(2) << '\n';
    });
}

json config_json(const PipelineConfig& cfg)
{
    json j = json::object();
    std::istringstream in(config_to_text(cfg));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

json functionals_json(const FunctionalValues& f)
{
    json j = json::object();
    if (f.spec) j["d2_spec"] = *f.spec;
    if (f.emb) j["d2_emb"] = *f.emb;
    if (f.qc) j["d2_qc"] = *f.qc;
    return j;
}

json signperm_json(const SignPermutation& sp)
{
    return json{{"perm", sp.perm}, {"signs", sp.signs}, {"objective", sp.objective}};
}

json diagnostics_json(const PipelineDiagnostics& d)
{
    json timings = json::array();
    for (const auto& [stage, seconds] : d.timings) timings.push_back({{"stage", stage}, {"seconds", seconds}});
    json quality = json::array();
    for (const auto& q : d.candidate_quality) quality.push_back(q ? json(*q) : json(nullptr));
    return json{
        {"moment_match", signperm_json(d.moment_match)},
        {"candidates", d.candidates.size()},
        {"candidate_quality", quality},
        {"chosen_candidate", d.chosen_candidate},
        {"quality", d.quality},
        {"functionals", functionals_json(d.functionals)},
        {"skm_objective", d.skm_objective},
        {"diagonal_energy", d.diagonal_energy},
        {"warnings", d.warnings},
        {"timings", timings},
    };
}

PipelineConfig build_config(
    const std::optional<std::string>& config_path,
    const std::optional<int>& n_eigs,
    const std::optional<std::uint64_t>& seed,
    bool allow_symmetry)
{
    PipelineConfig cfg;
    if (config_path) {
        if (!fs::exists(*config_path)) throw IoError("config file not found: " + *config_path);
        try {
            apply_config_file(cfg, *config_path);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    if (n_eigs) cfg.n_eigs = *n_eigs;
    if (seed) cfg.seed = *seed;
    if (allow_symmetry) cfg.allow_symmetry = true;
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

struct CommonOptions
{
    std::optional<int> n_eigs;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> config;
    std::optional<std::string> cache_dir;
    bool no_cache = false;
    bool allow_symmetry = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_symmetry)
{
    cmd->add_option("--n-eigs", o.n_eigs, "Number of nonconstant eigenfunctions (default 120)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Seed for every random choice");
    cmd->add_option("--config", o.config, "key = value file with PipelineConfig fields");
    cmd->add_option("--cache-dir", o.cache_dir, "Spectrum cache directory");
    cmd->add_flag("--no-cache", o.no_cache, "Neither read nor write spectrum caches");
    if (with_symmetry) cmd->add_flag("--allow-symmetry", o.allow_symmetry, "Search for an orientation-reversing map");
}

std::optional<fs::path> cache_location(const CommonOptions& o)
{
    if (o.no_cache) return std::nullopt;
    return resolve_cache_dir(o.cache_dir);
}

int clamp_eigs(int requested, const TriangleMesh& mesh)
{
    return std::max(1, std::min(requested, mesh.num_vertices() - 1));
}

// spectrum -------------------------------------------------------------------------------------

struct SpectrumArgs
{
    std::string mesh;
    std::optional<std::string> eigenvalues_csv;
};

void cmd_spectrum(const SpectrumArgs& a, const CommonOptions& o, std::ostream& out)
{
    const PipelineConfig cfg = build_config(o.config, o.n_eigs, o.seed, false);
    const TriangleMesh mesh = read_mesh(a.mesh);
    const SpectralBasis basis = cached_spectrum(mesh, clamp_eigs(cfg.n_eigs, mesh), cache_location(o), out);
    out << "vertices " << mesh.num_vertices() << ", eigenpairs " << basis.size() << ", multiplets "
        << basis.multiplets.size() << '\n';
    out << "lambda_1.." << std::min(basis.size(), 9) << ':';
    for (int i = 1; i <= std::min(basis.size(), 9); ++i) out << ' ' << basis.eigenvalues[i];
    out << '\n';
    if (a.eigenvalues_csv) {
        const fs::path path = *a.eigenvalues_csv;
        write_artifact(path, [&] {
            std::ofstream f(path);
            if (!f) throw IoError("cannot write " + path.string());
            f << "index,eigenvalue\n" << std::setprecision(17);
            for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) f << i << ',' << basis.eigenvalues[i] << '\n';
        });
    }
}

// correspond -----------------------------------------------------------------------------------

struct CorrespondArgs
{
    std::string mesh_x;
    std::string mesh_y;
    std::string output;
    std::optional<std::string> manifest;
};

void cmd_correspond(const CorrespondArgs& a, const CommonOptions& o, std::ostream& out)
{
    const PipelineConfig cfg = build_config(o.config, o.n_eigs, o.seed, o.allow_symmetry);
    const TriangleMesh x = read_mesh(a.mesh_x);
    const TriangleMesh y = read_mesh(a.mesh_y);
    const auto dir = cache_location(o);
    const int n = std::min(clamp_eigs(cfg.n_eigs, x), clamp_eigs(cfg.n_eigs, y));
    const SpectralBasis bx = cached_spectrum(x, n, dir, out);
    const SpectralBasis by = cached_spectrum(y, n, dir, out);
    const PipelineResult r = full_pipeline(x, y, cfg, {&bx, &by});

    const fs::path corr_path = a.output;
    const fs::path manifest_path = a.manifest ? fs::path(*a.manifest) : fs::path(a.output + ".manifest.json");
    save_correspondence(r.map, {y.num_vertices(), x.content_hash(), y.content_hash(), cfg.seed, config_to_text(cfg)}, corr_path);

    json manifest{
        {"version", SPECCORR_VERSION},
        {"command", "correspond"},
        {"seed", cfg.seed},
        {"config", config_json(cfg)},
        {"inputs",
         {{"mesh_x", {{"path", a.mesh_x}, {"hash", hex(x.content_hash())}, {"vertices", x.num_vertices()}}},
          {"mesh_y", {{"path", a.mesh_y}, {"hash", hex(y.content_hash())}, {"vertices", y.num_vertices()}}}}},
        {"outputs", {{"correspondence", corr_path.string()}, {"manifest", manifest_path.string()}}},
        {"diagnostics", diagnostics_json(r.diagnostics)},
    };
    write_json(manifest, manifest_path);

    out << "map written to " << corr_path.string() << " (stage " << stage_name(r.map.provenance) << ")\n";
    out << "quality Q = " << r.diagnostics.quality << ", candidate " << r.diagnostics.chosen_candidate << " of "
        << r.diagnostics.candidates.size() << '\n';
    if (x.num_vertices() == y.num_vertices()) {
        int same = 0;
        for (int v = 0; v < x.num_vertices(); ++v) same += r.map[v] == v;
        out << "identity fraction " << static_cast<double>(same) / x.num_vertices() << '\n';
    }
    for (const auto& w : r.diagnostics.warnings) out << "warning: " << w << '\n';
}

// benchmark ------------------------------------------------------------------------------------

struct BenchmarkArgs
{
    std::string dataset;
    std::string output;
    std::vector<std::string> classes;
    int jobs = 1;
    int target_vertices = 8000;
    int max_pairs = 0;
    bool ablation = false;
};

struct Shape
{
    std::string name;
    TriangleMesh mesh;              ///< decimated
    std::vector<int> representative; ///< original vertex of each decimated vertex
    std::vector<int> vertex_map;     ///< original vertex -> decimated vertex
};

Shape load_shape(const fs::path& path, int target_vertices)
{
    const TriangleMesh full = read_mesh(path);
    Shape s;
    s.name = path.stem().string();
    const int target_faces = std::max(4, 2 * target_vertices);
    if (full.num_faces() > target_faces) {
        DecimationResult d = decimate(full, target_faces);
        s.mesh = std::move(d.mesh);
        s.representative = std::move(d.representative);
        s.vertex_map = std::move(d.vertex_map);
    } else {
        s.mesh = full;
        s.representative.resize(static_cast<std::size_t>(full.num_vertices()));
        for (int v = 0; v < full.num_vertices(); ++v) s.representative[v] = v;
        s.vertex_map = s.representative;
    }
    return s;
}

struct PairOutcome
{
    std::string name;
    std::optional<DistortionResult> result;
    std::optional<DistortionResult> without_fskm;
    std::string error;
};

void cmd_benchmark(const BenchmarkArgs& a, const CommonOptions& o, std::ostream& out, std::ostream& err)
{
    const PipelineConfig cfg = build_config(o.config, o.n_eigs, o.seed, o.allow_symmetry);
    if (!fs::is_directory(a.dataset)) throw IoError("dataset directory not found: " + a.dataset);

    const std::regex pattern(R"(([A-Za-z_]+?)(\d+)\.(off|obj|ply))", std::regex::icase);
    std::map<std::string, std::map<int, fs::path>> by_class;
    for (const auto& entry : fs::directory_iterator(a.dataset)) {
        std::smatch m;
        const std::string file = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(file, m, pattern)) {
            by_class[m[1].str()][std::stoi(m[2].str())] = entry.path();
        }
    }
    std::vector<std::string> classes = a.classes;
    if (classes.empty()) {
        for (const auto& [c, _] : by_class) classes.push_back(c);
    }

    struct Job
    {
        std::string cls;
        fs::path x;
        fs::path y;
    };
    std::vector<Job> jobs;
    for (const auto& c : classes) {
        const auto it = by_class.find(c);
        if (it == by_class.end() || it->second.size() < 2) throw UsageError("class '" + c + "' needs at least two shapes");
        const auto& shapes = it->second;
        int count = 0;
        for (auto s = std::next(shapes.begin()); s != shapes.end(); ++s) {
            if (a.max_pairs > 0 && count >= a.max_pairs) break;
            jobs.push_back({c, shapes.begin()->second, s->second});
            ++count;
        }
    }
    if (jobs.empty()) throw UsageError("no benchmark pairs found in " + a.dataset);

    // symmetry of each class's null pose, in original vertex indices
    std::map<std::string, std::vector<int>> null_symmetry;
    if (cfg.allow_symmetry) {
        for (const auto& c : classes) {
            const Shape null_pose = load_shape(by_class[c].begin()->second, a.target_vertices);
            PipelineConfig sym_cfg = cfg;
            const SymmetryResult s = detect_symmetry(null_pose.mesh, sym_cfg);
            std::vector<int> original(null_pose.vertex_map.size());
            for (std::size_t v = 0; v < original.size(); ++v) {
                original[v] = null_pose.representative[s.map[null_pose.vertex_map[v]]];
            }
            null_symmetry[c] = std::move(original);
            out << "class " << c << ": symmetry Q = " << s.quality << '\n';
        }
    }

    std::vector<PairOutcome> outcomes(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            const Job& job = jobs[k];
            PairOutcome& res = outcomes[k];
            try {
                const Shape x = load_shape(job.x, a.target_vertices);
                const Shape y = load_shape(job.y, a.target_vertices);
                res.name = x.name + "__" + y.name;
                std::vector<int> truth(static_cast<std::size_t>(x.mesh.num_vertices()), -1);
                for (std::size_t v = 0; v < truth.size(); ++v) {
                    const int orig = x.representative[v];
                    if (orig < static_cast<int>(y.vertex_map.size())) truth[v] = y.vertex_map[orig];
                }
                std::optional<std::vector<int>> sym_y;
                if (cfg.allow_symmetry) {
                    const auto& s0 = null_symmetry.at(job.cls);
                    sym_y.emplace(static_cast<std::size_t>(y.mesh.num_vertices()));
                    for (int v = 0; v < y.mesh.num_vertices(); ++v) {
                        const int orig = y.representative[v];
                        if (orig >= static_cast<int>(s0.size())) throw Error("shapes of a class must share vertex ordering");
                        (*sym_y)[v] = y.vertex_map[s0[orig]];
                    }
                }
                PipelineConfig pair_cfg = cfg;
                pair_cfg.allow_symmetry = false;
                const int n = std::min(clamp_eigs(cfg.n_eigs, x.mesh), clamp_eigs(cfg.n_eigs, y.mesh));
                pair_cfg.n_eigs = n;
                const SpectralBasis bx = spectrum_stage(x.mesh, n);
                const SpectralBasis by = spectrum_stage(y.mesh, n);
                auto evaluate = [&](const PipelineConfig& c) {
                    const PipelineResult r = full_pipeline(x.mesh, y.mesh, c, {&bx, &by});
                    if (sym_y) return distortion_curve(r.map, truth, y.mesh, true, std::span<const int>(*sym_y));
                    return distortion_curve(r.map, truth, y.mesh);
                };
                res.result = evaluate(pair_cfg);
                if (a.ablation) {
                    PipelineConfig no_fskm = pair_cfg;
                    no_fskm.run_fskm = false;
                    res.without_fskm = evaluate(no_fskm);
                }
                const std::lock_guard lock(log_mutex);
                out << res.name << ": " << res.result->curve.fraction_at(0.025) << ' ' << res.result->curve.fraction_at(0.05)
                    << ' ' << res.result->curve.fraction_at(0.10) << '\n';
            } catch (const std::exception& e) {
                res.error = e.what();
                if (res.name.empty()) res.name = job.x.stem().string() + "__" + job.y.stem().string();
                const std::lock_guard lock(log_mutex);
                err << "pair " << res.name << " failed: " << e.what() << '\n';
            }
        }
    };
    const int threads = std::clamp(a.jobs, 1, static_cast<int>(jobs.size()));
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();

    const fs::path dir = a.output;
    std::vector<DistortionResult> ok;
    std::vector<DistortionResult> ok_without;
    std::ostringstream summary;
    summary << std::fixed << std::setprecision(4) << "pair,evaluated,excluded,symmetric,f@0.025,f@0.05,f@0.10";
    if (a.ablation) summary << ",no_fskm_f@0.05";
    summary << '\n';
    for (const auto& res : outcomes) {
        if (!res.result) {
            summary << res.name << ",failed\n";
            continue;
        }
        const DistortionCurve& c = res.result->curve;
        write_artifact(dir / (res.name + ".csv"), [&] { write_curve_csv(c, dir / (res.name + ".csv")); });
        summary << res.name << ',' << c.evaluated << ',' << c.excluded << ',' << (c.symmetric ? 1 : 0) << ','
                << c.fraction_at(0.025) << ',' << c.fraction_at(0.05) << ',' << c.fraction_at(0.10);
        if (res.without_fskm) {
            summary << ',' << res.without_fskm->curve.fraction_at(0.05);
            ok_without.push_back(*res.without_fskm);
        }
        summary << '\n';
        ok.push_back(*res.result);
    }
    if (ok.empty()) throw Error("every benchmark pair failed");
    const DistortionCurve total = aggregate_curve(ok);
    write_artifact(dir / "aggregate.csv", [&] { write_curve_csv(total, dir / "aggregate.csv"); });
    summary << "aggregate," << total.evaluated << ',' << total.excluded << ",-," << total.fraction_at(0.025) << ','
            << total.fraction_at(0.05) << ',' << total.fraction_at(0.10);
    if (a.ablation) summary << ',' << aggregate_curve(ok_without).fraction_at(0.05);
    summary << '\n';
    write_artifact(dir / "summary.csv", [&] {
        std::ofstream f(dir / "summary.csv");
        if (!f) throw IoError("cannot write summary");
        f << summary.str();
    });
    out << summary.str();
    if (ok.size() != outcomes.size()) throw Error(std::to_string(outcomes.size() - ok.size()) + " benchmark pairs failed");
}

// symmetry / transfer --------------------------------------------------------------------------

struct SymmetryArgs
{
    std::string mesh;
    std::string output;
    std::optional<std::string> map_output;
};

void cmd_symmetry(const SymmetryArgs& a, const CommonOptions& o, std::ostream& out)
{
    const PipelineConfig cfg = build_config(o.config, o.n_eigs, o.seed, true);
    const TriangleMesh mesh = read_mesh(a.mesh);
    const SpectralBasis basis = cached_spectrum(mesh, clamp_eigs(cfg.n_eigs, mesh), cache_location(o), out);
    const SymmetryResult s = detect_symmetry(mesh, cfg, &basis);

    double hi = 0.0;
    for (double d : s.displacement) {
        if (std::isfinite(d)) hi = std::max(hi, d);
    }
    VertexAttributes attrs;
    attrs.colors = colorize(s.displacement, 0.0, hi);
    const fs::path ply = a.output;
    write_artifact(ply, [&] { save_mesh(mesh.with_attributes(attrs), ply, MeshFormat::PLY); });
    if (a.map_output) {
        save_correspondence(s.map, {mesh.num_vertices(), mesh.content_hash(), mesh.content_hash(), cfg.seed, config_to_text(cfg)}, *a.map_output);
    }
    out << "self-map quality Q = " << s.quality << (s.degenerate ? " (degenerate symmetry group)" : "") << '\n';
    out << "colored mesh written to " << ply.string() << '\n';
}

struct TransferArgs
{
    std::string correspondence;
    std::string mesh_x;
    std::string mesh_y;
    std::string output;
};

void cmd_transfer(const TransferArgs& a, std::ostream& out)
{
    const LoadedCorrespondence corr = load_correspondence(a.correspondence);
    const TriangleMesh x = read_mesh(a.mesh_x);
    const TriangleMesh y = read_mesh(a.mesh_y);
    if (corr.map.num_x() != x.num_vertices()) throw UsageError("correspondence does not match the vertex count of X");
    if (corr.header.num_y != y.num_vertices()) throw UsageError("correspondence does not match the vertex count of Y");
    if (y.attributes().empty()) throw UsageError("mesh Y carries no colors or texture coordinates to transfer");
    const VertexAttributes attrs = transfer_attributes(corr.map, y.attributes());
    const fs::path path = a.output;
    write_artifact(path, [&] { save_mesh(x.with_attributes(attrs), path); });
    out << "transferred " << (attrs.colors.size() ? "colors " : "") << (attrs.texcoords.size() ? "texcoords " : "")
        << "to " << path.string() << '\n';
}

} // namespace

void save_correspondence(const Correspondence& corr, const CorrespondenceHeader& header, const fs::path& path)
{
    write_artifact(path, [&] {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << "# speccorr correspondence\n"
            << "# x_vertices " << corr.num_x() << '\n'
            << "# y_vertices " << header.num_y << '\n'
            << "# x_hash " << hex(header.hash_x) << '\n'
            << "# y_hash " << hex(header.hash_y) << '\n'
            << "# seed " << header.seed << '\n'
            << "# stage " << stage_name(corr.provenance) << '\n';
        std::istringstream cfg(header.config);
        for (std::string line; std::getline(cfg, line);) out << "# config " << line << '\n';
        for (int x : corr.domain) out << x << ' ' << corr[x] << '\n';
        if (!out) throw IoError("write failed for " + path.string());
    });
}

LoadedCorrespondence load_correspondence(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open correspondence file " + path.string());
    LoadedCorrespondence out;
    int num_x = -1;
    std::vector<int> xs;
    std::vector<int> ys;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) { throw ParseError(path.string(), lineno, what); };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        if (line[0] == '#') {
            std::string hash;
            std::string key;
            fields >> hash >> key;
            if (key == "x_vertices") fields >> num_x;
            else if (key == "y_vertices") fields >> out.header.num_y;
            else if (key == "x_hash") fields >> std::hex >> out.header.hash_x;
            else if (key == "y_hash") fields >> std::hex >> out.header.hash_y;
            else if (key == "seed") fields >> out.header.seed;
            else if (key == "config") {
                std::string rest;
                std::getline(fields >> std::ws, rest);
                out.header.config += rest + '\n';
            }
            if (!fields && !fields.eof()) fail("malformed header line");
            continue;
        }
        int x = -1;
        int y = -1;
        if (!(fields >> x >> y)) fail("expected 'x y'");
        xs.push_back(x);
        ys.push_back(y);
    }
    if (num_x < 0) fail("missing x_vertices header");
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (xs[k] < 0 || xs[k] >= num_x || ys[k] < 0 || (out.header.num_y > 0 && ys[k] >= out.header.num_y)) {
            throw ParseError(path.string(), 0, "vertex index out of range");
        }
    }
    out.map = Correspondence::partial(num_x, xs, ys, Correspondence::Stage::External);
    return out;
}

fs::path resolve_cache_dir(const std::optional<std::string>& flag)
{
    if (flag) return *flag;
    if (const char* env = std::getenv("SPECCORR_CACHE"); env && *env) return env;
    return ".speccorr-cache";
}

fs::path spectrum_cache_path(const fs::path& dir, std::uint64_t hash, int n_eigs)
{
    return dir / (hex(hash) + "-n" + std::to_string(n_eigs) + ".spec");
}

SpectralBasis cached_spectrum(const TriangleMesh& mesh, int n_eigs, const std::optional<fs::path>& cache_dir, std::ostream& log)
{
    if (!cache_dir) return spectrum_stage(mesh, n_eigs);
    const std::uint64_t hash = mesh.content_hash();
    const fs::path path = spectrum_cache_path(*cache_dir, hash, n_eigs);
    try {
        if (auto cached = load_spectrum(path, hash, mesh.num_vertices())) {
            if (cached->size() == n_eigs) {
                log << "cache hit: " << path.string() << '\n';
                return std::move(*cached);
            }
            log << "warning: cache " << path.string() << " holds " << cached->size() << " eigenpairs; recomputing\n";
        }
    } catch (const Error& e) {
        log << "warning: cache " << path.string() << " unusable (" << e.what() << "); recomputing\n";
    }
    SpectralBasis basis = spectrum_stage(mesh, n_eigs);
    write_artifact(path, [&] { save_spectrum(basis, hash, path); });
    log << "spectrum cached at " << path.string() << '\n';
    return basis;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Dense spectral shape correspondence", "speccorr"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SPECCORR_VERSION);

    CommonOptions common;

    SpectrumArgs spectrum_args;
    auto* spectrum = app.add_subcommand("spectrum", "Compute or load the cached Laplace-Beltrami spectrum of a mesh");
    spectrum->add_option("mesh", spectrum_args.mesh, "Mesh file (OFF, OBJ or PLY)")->required();
    spectrum->add_option("--eigenvalues", spectrum_args.eigenvalues_csv, "Write eigenvalues as CSV");
    add_common(spectrum, common, false);

    CorrespondArgs correspond_args;
    auto* correspond = app.add_subcommand("correspond", "Dense correspondence from mesh X to mesh Y");
    correspond->add_option("mesh_x", correspond_args.mesh_x)->required();
    correspond->add_option("mesh_y", correspond_args.mesh_y)->required();
    correspond->add_option("-o,--output", correspond_args.output, "Correspondence file")->required();
    correspond->add_option("--manifest", correspond_args.manifest, "Manifest path (default <output>.manifest.json)");
    add_common(correspond, common, true);

    BenchmarkArgs bench_args;
    auto* benchmark = app.add_subcommand("benchmark", "Geodesic error curves over intra-class pairs of a dataset");
    benchmark->add_option("dataset", bench_args.dataset, "Directory of <class><index>.{off,obj,ply} meshes")->required();
    benchmark->add_option("-o,--output", bench_args.output, "Output directory")->required();
    benchmark->add_option("--classes", bench_args.classes, "Classes to evaluate (default: all)")->delimiter(',');
    benchmark->add_option("--jobs", bench_args.jobs, "Pairs evaluated concurrently")->check(CLI::PositiveNumber);
    benchmark->add_option("--target-vertices", bench_args.target_vertices, "Decimation target")->check(CLI::PositiveNumber);
    benchmark->add_option("--max-pairs", bench_args.max_pairs, "Pairs per class, 0 for all");
    benchmark->add_flag("--ablation", bench_args.ablation, "Also evaluate the pipeline without FSKM");
    add_common(benchmark, common, true);

    SymmetryArgs sym_args;
    auto* symmetry = app.add_subcommand("symmetry", "Intrinsic reflective self-map and displacement-colored PLY");
    symmetry->add_option("mesh", sym_args.mesh)->required();
    symmetry->add_option("-o,--output", sym_args.output, "Colored PLY")->required();
    symmetry->add_option("--map", sym_args.map_output, "Also write the self-map");
    add_common(symmetry, common, false);

    TransferArgs transfer_args;
    auto* transfer = app.add_subcommand("transfer", "Pull colors or texture coordinates of Y back to X");
    transfer->add_option("correspondence", transfer_args.correspondence)->required();
    transfer->add_option("mesh_x", transfer_args.mesh_x)->required();
    transfer->add_option("mesh_y", transfer_args.mesh_y)->required();
    transfer->add_option("-o,--output", transfer_args.output, "Attributed mesh")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kUsageFailure;
    }

    try {
        if (*spectrum) cmd_spectrum(spectrum_args, common, out);
        else if (*correspond) cmd_correspond(correspond_args, common, out);
        else if (*benchmark) cmd_benchmark(bench_args, common, out, err);
        else if (*symmetry) cmd_symmetry(sym_args, common, out);
        else if (*transfer) cmd_transfer(transfer_args, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageFailure;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageFailure;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageFailure;
    } catch (const MeshError& e) {
        err << "error: invalid mesh: " << e.what() << '\n';
        return kUsageFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kAlgorithmFailure;
    }
    return kSuccess;
}

} // namespace speccorr::cli
