#include "test_support.hpp"

#include <speccorr/correspondence.hpp>
#include <speccorr/errors.hpp>
#include <speccorr/random.hpp>
#include <speccorr/synthetic.hpp>

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace speccorr;
using speccorr::testing::TempDir;

namespace {

struct Shape
{
    TriangleMesh mesh;
    SpectralBasis basis;
};

Shape make_shape(int level, bool symmetric, int n_eigs)
{
    BlobParams bp;
    bp.level = level;
    bp.mirror_symmetric = symmetric;
    TriangleMesh m = blob(bp);
    SpectralBasis b = compute_spectrum(m, n_eigs);
    return {std::move(m), std::move(b)};
}

const Shape& small_blob()
{
    static const Shape s = make_shape(3, false, 40);
    return s;
}

const Shape& medium_blob()
{
    static const Shape s = make_shape(4, false, 60);
    return s;
}

std::vector<int> iota_vector(int n)
{
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

double identity_fraction(const Correspondence& c)
{
    int hits = 0;
    for (int x : c.domain) hits += c.map[x] == x;
    return static_cast<double>(hits) / static_cast<double>(c.domain.size());
}

/// Exact landmarks at k uniformly drawn vertices.
Correspondence exact_landmarks(int n, int k, std::uint64_t seed)
{
    Rng rng(seed);
    const std::vector<int> picks = rng.sample(n, k);
    return Correspondence::partial(n, picks, picks, Correspondence::Stage::Truth);
}

double off_diagonal_share(const FunctionalMatrix& C)
{
    const double total = C.squaredNorm();
    return (total - C.diagonal().squaredNorm()) / total;
}

} // namespace

TEST_CASE("pipeline configuration")
{
    SUBCASE("defaults")
    {
        const PipelineConfig cfg;
        CHECK(cfg.n_eigs == 120);
        CHECK(cfg.n0 == 6);
        CHECK(cfg.bands == 6);
        CHECK(cfg.candidates == 100);
        CHECK(cfg.skm_samples == 1000);
        CHECK(cfg.fskm_samples == 2000);
        CHECK(cfg.iterations == 15);
        CHECK(cfg.beta == 0.1);
        CHECK(cfg.kernel.kind == KernelSpec::Kind::GPS);
        CHECK_FALSE(cfg.area_weighted_sampling);
        CHECK_NOTHROW(cfg.validate());
    }
    SUBCASE("text round trip")
    {
        PipelineConfig cfg;
        apply_config_text(cfg, "# tuned\nn_eigs = 80\nbeta=0.25\nkernel = heat\nheat_t = 0.01\nseed = 7\nrun_fskm = false\n");
        CHECK(cfg.n_eigs == 80);
        CHECK(cfg.beta == 0.25);
        CHECK(cfg.kernel.kind == KernelSpec::Kind::Heat);
        CHECK(cfg.kernel.t == 0.01);
        CHECK(cfg.seed == 7);
        CHECK_FALSE(cfg.run_fskm);
        PipelineConfig again;
        apply_config_text(again, config_to_text(cfg));
        CHECK(config_to_text(again) == config_to_text(cfg));
        CHECK(again.beta == cfg.beta);
        CHECK(again.kernel.t == cfg.kernel.t);
    }
    SUBCASE("errors name the line")
    {
        PipelineConfig cfg;
        CHECK_THROWS_WITH_AS(apply_config_text(cfg, "n0 = 6\nbogus = 1\n", "my.cfg"), doctest::Contains("my.cfg:2"), Error);
        CHECK_THROWS_AS(apply_config_text(cfg, "n0 = six\n"), Error);
        CHECK_THROWS_AS(apply_config_text(cfg, "kernel = wave\n"), Error);
    }
    SUBCASE("validation")
    {
        PipelineConfig cfg;
        cfg.n0 = 200;
        CHECK_THROWS_AS(cfg.validate(), Error);
        cfg = PipelineConfig{};
        cfg.skm_samples = 0;
        CHECK_THROWS_AS(cfg.validate(), Error);
        cfg = PipelineConfig{};
        cfg.beta = -1.0;
        CHECK_THROWS_AS(cfg.validate(), Error);
    }
    SUBCASE("config file")
    {
        TempDir dir("config");
        speccorr::testing::write_text(dir / "a.cfg", "candidates = 40\n");
        PipelineConfig cfg;
        apply_config_file(cfg, dir / "a.cfg");
        CHECK(cfg.candidates == 40);
        CHECK_THROWS_AS(apply_config_file(cfg, dir / "missing.cfg"), Error);
    }
}

TEST_CASE("candidate sets")
{
    const Shape& s = small_blob();
    const Eigen::MatrixXd sig = matched_signature(s.basis, SignPermutation::identity(6), 6, 6);
    const int n = s.mesh.num_vertices();

    SUBCASE("k = 1 on identical signatures is the vertex itself")
    {
        const auto c = candidate_set(sig, sig, 1);
        for (int x = 0; x < n; ++x) CHECK(c[x] == std::vector<int>{x});
    }
    SUBCASE("k = |Y| and larger return the full vertex set")
    {
        for (int k : {n, n + 10}) {
            const auto c = candidate_set(sig.topRows(5), sig, k);
            for (const auto& list : c) {
                std::vector<int> sorted = list;
                std::sort(sorted.begin(), sorted.end());
                CHECK(sorted == iota_vector(n));
            }
        }
    }
    SUBCASE("ties go to the lower index")
    {
        Eigen::MatrixXd y(4, 1);
        y << 1.0, 0.0, 1.0, 0.0;
        Eigen::MatrixXd x(1, 1);
        x << 0.5;
        CHECK(candidate_set(x, y, 2)[0] == std::vector<int>{0, 1});
        CHECK(candidate_set(x, y, 3)[0] == std::vector<int>{0, 1, 2});
    }
    SUBCASE("rigid copy keeps the true vertex among 100 candidates")
    {
        const TriangleMesh moved = transformed(s.mesh, random_rotation(5), Eigen::Vector3d(1, 2, 3));
        const SpectralBasis b = compute_spectrum(moved, 40);
        const Eigen::MatrixXd sig_y = matched_signature(b, SignPermutation::identity(6), 6, 6);
        const auto c = candidate_set(sig, sig_y, 100);
        int contained = 0;
        for (int x = 0; x < n; ++x) contained += std::find(c[x].begin(), c[x].end(), x) != c[x].end();
        CHECK(static_cast<double>(contained) / n >= 0.99);
    }
}

TEST_CASE("spectral quasi-conformal maps")
{
    const Shape& s = medium_blob();
    const SignPermutation id = SignPermutation::identity(6);
    const FaceBasisGradients grads = face_gradients(s.mesh);
    const QuasiConformalFields qc = qc_fields(s.basis, s.mesh, grads, 6, id);
    const Eigen::MatrixXd sig = matched_signature(s.basis, id, 6, 6);
    const auto cands = candidate_set(sig, sig, 100);
    const Correspondence map = sqcm(qc, qc, cands);
    CHECK(map.is_dense());
    CHECK(map.provenance == Correspondence::Stage::SQCM);
    CHECK(identity_fraction(map) >= 0.95);

    SUBCASE("chosen candidate attains the minimum distortion")
    {
        Rng rng(3);
        for (int k = 0; k < 100; ++k) {
            const int x = static_cast<int>(rng.below(s.mesh.num_vertices()));
            const double chosen = qc_distance2(qc, qc, x, map[x]);
            for (int y : cands[x]) CHECK(chosen <= qc_distance2(qc, qc, x, y));
        }
    }
    SUBCASE("empty candidate list")
    {
        std::vector<std::vector<int>> bad = cands;
        bad[3].clear();
        CHECK_THROWS_AS(sqcm(qc, qc, bad), Error);
    }
    SUBCASE("orientation-reversing distance negates nu")
    {
        const int x = 10;
        const int y = 20;
        const double plain = (qc.omega.row(x) - qc.omega.row(y)).squaredNorm();
        const double rev = plain + (qc.nu.row(x) + qc.nu.row(y)).squaredNorm();
        CHECK(qc_distance2(qc, qc, x, y, true, true) == doctest::Approx(rev));
        CHECK(qc_distance2(qc, qc, x, y, false) == doctest::Approx(plain));
    }
}

TEST_CASE("spectral kernel maps")
{
    const Shape& s = medium_blob();
    const Eigen::MatrixXd e = spectral_embedding(s.basis, KernelSpec::gps());
    const int n = s.mesh.num_vertices();

    SUBCASE("self-pair from 50 exact landmarks")
    {
        SkmOptions opts;
        opts.iterations = 5;
        const SkmResult r = skm(e, e, s.basis.masses, exact_landmarks(n, 50, 11), opts);
        CHECK(r.map.is_dense());
        CHECK(r.map.provenance == Correspondence::Stage::SKM);
        CHECK(identity_fraction(r.map) >= 0.99);
        CHECK(r.objective.size() == 5);
    }
    SUBCASE("exact map over every vertex is a fixed point")
    {
        SkmOptions opts;
        opts.iterations = 1;
        opts.samples = n;
        const Correspondence init = Correspondence::dense(iota_vector(n), Correspondence::Stage::Truth);
        const SkmResult r = skm(e, e, s.basis.masses, init, opts);
        CHECK(r.map.map == init.map);
        CHECK(r.objective[0] < 1e-12);
    }
    SUBCASE("objective does not increase on self-pairs")
    {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            CAPTURE(seed);
            SkmOptions opts;
            opts.iterations = 4;
            opts.samples = 300;
            opts.seed = seed;
            const SkmResult r = skm(e, e, s.basis.masses, exact_landmarks(n, 30, seed), opts);
            for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-12);
        }
    }
    SUBCASE("deterministic for a fixed seed")
    {
        SkmOptions opts;
        opts.iterations = 3;
        opts.samples = 400;
        opts.seed = 99;
        const Correspondence init = exact_landmarks(n, 20, 4);
        CHECK(skm(e, e, s.basis.masses, init, opts).map.map == skm(e, e, s.basis.masses, init, opts).map.map);
        opts.area_weighted = true;
        CHECK(skm(e, e, s.basis.masses, init, opts).map.map == skm(e, e, s.basis.masses, init, opts).map.map);
    }
    SUBCASE("assignment minimizes the landmark mismatch")
    {
        const std::vector<int> lx{5, 70, 300, 901};
        const std::vector<int> ly{5, 70, 300, 901};
        Rng rng(8);
        const std::vector<int> queries = rng.sample(n, 100);
        const std::vector<int> picked = skm_assign(e, e, queries, lx, ly);
        const Eigen::MatrixXd kx = kernel_cross(e, e, lx);
        for (std::size_t k = 0; k < queries.size(); ++k) {
            const int x = queries[k];
            auto mismatch = [&](int y) { return (kx.row(x) - kx.row(y)).squaredNorm(); };
            const double chosen = mismatch(picked[k]);
            for (int y = 0; y < n; ++y) CHECK(chosen <= mismatch(y) + 1e-12);
        }
    }
    SUBCASE("uniform scaling of Y leaves the GPS choices unchanged")
    {
        const TriangleMesh big = transformed(s.mesh, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 2.0);
        const Eigen::MatrixXd ey = spectral_embedding(compute_spectrum(big, 60), KernelSpec::gps());
        Rng rng(2);
        const std::vector<int> landmarks = rng.sample(n, 200);
        const std::vector<int> queries = iota_vector(n);
        const std::vector<int> a = skm_assign(e, e, queries, landmarks, landmarks);
        const std::vector<int> b = skm_assign(e, ey, queries, landmarks, landmarks);
        int same = 0;
        for (int x = 0; x < n; ++x) same += a[x] == b[x];
        CHECK(static_cast<double>(same) / n >= 0.999);
    }
    SUBCASE("empty init")
    {
        CHECK_THROWS_AS(skm(e, e, s.basis.masses, Correspondence{}, SkmOptions{}), Error);
    }
}

TEST_CASE("functional spectral kernel maps")
{
    const Shape& s = medium_blob();
    const int n = s.mesh.num_vertices();
    const Correspondence init = exact_landmarks(n, 1000, 21);

    SUBCASE("self-pair converges to the identity")
    {
        FskmOptions opts;
        opts.iterations = 3;
        opts.samples = 1000;
        const FskmResult r = fskm(s.basis, s.basis, KernelSpec::gps(), init, opts);
        CHECK(r.C.rows() == 60);
        CHECK(off_diagonal_share(r.C) < 0.01);
        CHECK(identity_fraction(r.map) >= 0.99);
        CHECK(r.max_normal_residual <= 1e-8);
        CHECK(r.warnings.empty());
        CHECK(r.map.provenance == Correspondence::Stage::FSKM);
    }
    SUBCASE("deterministic for a fixed seed")
    {
        FskmOptions opts;
        opts.iterations = 2;
        opts.samples = 300;
        opts.seed = 5;
        const FskmResult a = fskm(s.basis, s.basis, KernelSpec::gps(), init, opts);
        const FskmResult b = fskm(s.basis, s.basis, KernelSpec::gps(), init, opts);
        CHECK(a.map.map == b.map.map);
        CHECK(a.C == b.C);
    }
    SUBCASE("a large penalty forces a diagonal C")
    {
        FskmOptions opts;
        opts.iterations = 1;
        opts.samples = 500;
        opts.beta = 1e8;
        const FskmResult r = fskm(s.basis, s.basis, KernelSpec::gps(), init, opts);
        CHECK(off_diagonal_share(r.C) < 1e-6);
    }
    SUBCASE("partner cap and heat kernel run")
    {
        FskmOptions opts;
        opts.iterations = 2;
        opts.samples = 500;
        opts.partner_cap = 50;
        const FskmResult r = fskm(s.basis, s.basis, KernelSpec::heat(0.1 / s.basis.eigenvalues[1]), init, opts);
        CHECK(identity_fraction(r.map) >= 0.99);
    }
    SUBCASE("rank-deficient systems get a ridge and a warning")
    {
        FskmOptions opts;
        opts.iterations = 1;
        opts.samples = 20;
        opts.beta = 0.0;
        const FskmResult r = fskm(s.basis, s.basis, KernelSpec::gps(), exact_landmarks(n, 20, 1), opts);
        CHECK_FALSE(r.warnings.empty());
        CHECK(r.C.allFinite());
    }
    SUBCASE("reduces to iterative refinement")
    {
        const Shape& t = small_blob();
        const int nt = t.mesh.num_vertices();
        // a perturbed start so the iterations have something to do
        std::vector<int> start = iota_vector(nt);
        for (int x = 0; x < nt; x += 5) start[x] = (x + 1) % nt;
        const Correspondence noisy = Correspondence::dense(start, Correspondence::Stage::External);
        FskmOptions opts;
        opts.iterations = 4;
        opts.samples = 0;
        opts.beta = 0.0;
        opts.pairs = FskmOptions::Pairs::Diagonal;
        opts.plain_metric = true;
        const FskmResult a = fskm(t.basis, t.basis, KernelSpec::gps(), noisy, opts);
        const FskmResult b = refine_icp(t.basis, t.basis, noisy, 4);
        CHECK(a.map.map == b.map.map);
        CHECK((a.C - b.C).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("errors")
    {
        CHECK_THROWS_AS(fskm(s.basis, s.basis, KernelSpec::gps(), Correspondence{}, FskmOptions{}), Error);
        CHECK_THROWS_AS(fskm(s.basis, small_blob().basis, KernelSpec::gps(), init, FskmOptions{}), Error);
    }
}

TEST_CASE("iterative refinement")
{
    const Shape& s = small_blob();
    const int n = s.mesh.num_vertices();
    const Correspondence id = Correspondence::dense(iota_vector(n), Correspondence::Stage::Truth);
    const FskmResult r = refine_icp(s.basis, s.basis, id, 3);
    CHECK(r.map.map == id.map);
    CHECK(r.map.provenance == Correspondence::Stage::ICP);
    CHECK((r.C - FunctionalMatrix::Identity(40, 40)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((fit_functional_map(s.basis, s.basis, id) - FunctionalMatrix::Identity(40, 40)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_THROWS_AS(refine_icp(s.basis, s.basis, Correspondence{}, 3), Error);
}

TEST_CASE("similarity functionals")
{
    const Shape& s = small_blob();
    const int n = s.mesh.num_vertices();
    const SignPermutation sp = SignPermutation::identity(6);
    const QuasiConformalFields qc = qc_fields(s.basis, s.mesh, face_gradients(s.mesh), 6, sp);
    const Correspondence id = Correspondence::dense(iota_vector(n), Correspondence::Stage::Truth);
    const FunctionalMatrix I = FunctionalMatrix::Identity(40, 40);

    FunctionalInputs in;
    in.basis_x = &s.basis;
    in.basis_y = &s.basis;
    in.C = &I;
    in.qc_x = &qc;
    in.qc_y = &qc;

    SUBCASE("identity self-pair vanishes")
    {
        const FunctionalValues v = evaluate_functionals(id, in);
        REQUIRE(v.spec);
        REQUIRE(v.emb);
        REQUIRE(v.qc);
        CHECK(*v.spec < 1e-6);
        CHECK(*v.emb < 1e-6);
        CHECK(*v.qc < 1e-6);
    }
    SUBCASE("missing ingredients leave fields absent")
    {
        FunctionalInputs bare = in;
        bare.C = nullptr;
        bare.qc_y = nullptr;
        const FunctionalValues v = evaluate_functionals(id, bare);
        CHECK(v.spec);
        CHECK_FALSE(v.emb);
        CHECK_FALSE(v.qc);
    }
    SUBCASE("rigid copy under the true map")
    {
        const TriangleMesh moved = transformed(s.mesh, random_rotation(3), Eigen::Vector3d(0.5, -1, 2));
        const SpectralBasis by = compute_spectrum(moved, 40);
        const QuasiConformalFields qy = qc_fields(by, moved, face_gradients(moved), 6, sp);
        const FunctionalMatrix C = fit_functional_map(s.basis, by, id);
        FunctionalInputs rigid = in;
        rigid.basis_y = &by;
        rigid.C = &C;
        rigid.qc_y = &qy;
        const FunctionalValues v = evaluate_functionals(id, rigid);
        CHECK(*v.spec < 1e-3);
        CHECK(*v.emb < 1e-3);
        CHECK(*v.qc < 1e-3);
    }
    SUBCASE("random maps score far above the true map")
    {
        const FunctionalValues truth = evaluate_functionals(id, in);
        const double floor = 1e-9;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Rng rng(seed);
            std::vector<int> t(static_cast<std::size_t>(n));
            for (int& y : t) y = static_cast<int>(rng.below(n));
            const FunctionalValues v = evaluate_functionals(Correspondence::dense(t, Correspondence::Stage::External), in);
            CHECK(*v.spec >= 10.0 * std::max(*truth.spec, floor));
            CHECK(*v.emb >= 10.0 * std::max(*truth.emb, floor));
            CHECK(*v.qc >= 10.0 * std::max(*truth.qc, floor));
        }
    }
    SUBCASE("quasi-conformal functional is symmetric under inverse bijections")
    {
        const std::vector<int> perm = random_permutation(n, 17);
        std::vector<int> inverse(static_cast<std::size_t>(n));
        for (int x = 0; x < n; ++x) inverse[perm[x]] = x;
        const double forward = *evaluate_functionals(Correspondence::dense(perm, Correspondence::Stage::External), in).qc;
        const double backward = *evaluate_functionals(Correspondence::dense(inverse, Correspondence::Stage::External), in).qc;
        CHECK(std::abs(forward - backward) < 1e-6 * std::max(1.0, forward));
    }
}

TEST_CASE("full pipeline")
{
    PipelineConfig cfg;
    cfg.n_eigs = 60;
    cfg.skm_samples = 500;
    cfg.fskm_samples = 1000;
    cfg.iterations = 5;
    cfg.quality_skm_iterations = 2;

    SUBCASE("self-pair recovers the identity")
    {
        const Shape& s = medium_blob();
        const PipelineResult r = full_pipeline(s.mesh, s.mesh, cfg, {&s.basis, &s.basis});
        CHECK(identity_fraction(r.map) >= 0.99);
        CHECK(r.map.is_dense());
        CHECK(r.diagnostics.quality >= 0.99);
        CHECK(r.diagnostics.functionals.spec.has_value());
        CHECK(r.diagnostics.functionals.emb.has_value());
        CHECK(r.diagnostics.functionals.qc.has_value());
        CHECK(r.diagnostics.diagonal_energy > 0.9);
        std::vector<std::string> stages;
        for (const auto& [name, seconds] : r.diagnostics.timings) {
            stages.push_back(name);
            CHECK(seconds >= 0.0);
        }
        CHECK(stages == std::vector<std::string>{"spectrum", "moments", "signature", "decimate", "quality", "skm", "fskm", "diagnostics"});
    }
    SUBCASE("the correct sign candidate wins with a strictly higher Q")
    {
        const Shape s = make_shape(4, true, 60);
        const PipelineResult r = full_pipeline(s.mesh, s.mesh, cfg, {&s.basis, &s.basis});
        const auto& q = r.diagnostics.candidate_quality;
        REQUIRE(q.size() >= 2);
        const int chosen = r.diagnostics.chosen_candidate;
        REQUIRE(q[chosen].has_value());
        for (std::size_t k = 0; k < q.size(); ++k) {
            if (static_cast<int>(k) != chosen && q[k]) CHECK(*q[chosen] > *q[k]);
        }
        CHECK(identity_fraction(r.map) >= 0.99);
    }
    SUBCASE("disconnected Y fails in the spectrum stage")
    {
        const TriangleMesh& x = small_blob().mesh;
        VertexMatrix v(x.num_vertices() * 2, 3);
        FaceMatrix f(x.num_faces() * 2, 3);
        v << x.vertices(), x.vertices().rowwise() + Eigen::RowVector3d(5, 0, 0);
        f << x.faces(), x.faces().array() + x.num_vertices();
        const TriangleMesh two(v, f);
        try {
            full_pipeline(x, two, cfg);
            FAIL("expected a stage error");
        } catch (const StageError& e) {
            CHECK(e.stage() == "spectrum");
            CHECK(std::string(e.what()).find("stage 'spectrum' failed") == 0);
        }
    }
}
