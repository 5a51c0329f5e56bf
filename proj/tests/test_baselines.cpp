#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "cortiplan/baselines.hpp"
#include "cortiplan/forward.hpp"
#include "cortiplan/rng.hpp"
#include "support/helpers.hpp"

using namespace cortiplan;
using namespace testsupport;

namespace {

ObjectiveConfig baseline_config(std::uint64_t seed = 0) {
    ObjectiveConfig cfg;
    cfg.spread.mode = SpreadModel::Mode::Visual;
    cfg.spread.rho = 0.8;
    cfg.knn_k = 4;
    cfg.lambda_vasc = 0.0;
    cfg.lambda_cortex = 0.0;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.05;
    cfg.max_iters = 400;
    cfg.tolerance = 0.0;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("tiling_layout: N=1 snaps to the site nearest the origin") {
    AnatomyModel anatomy = flat_anatomy();
    ElectrodeLayout layout = tiling_layout(anatomy, 1);
    REQUIRE(layout.free.size() == 1);

    double best = std::numeric_limits<double>::infinity();
    Vec3 want;
    for (const RetinotopySite& s : anatomy.sites()) {
        double d = s.visual_pos.norm();
        if (d < best) {
            best = d;
            want = s.cortical_pos;
        }
    }
    CHECK(layout.free[0].x == want.x);
    CHECK(layout.free[0].y == want.y);
}

TEST_CASE("tiling_layout: 2x2 grid targets the quadrant cell centers") {
    // extent +-2 degrees, N=4 -> visual targets at (+-1, +-1)
    std::vector<RetinotopySite> sites;
    int id = 0;
    for (double x = -1.8; x <= 1.81; x += 0.15)
        for (double y = -1.8; y <= 1.81; y += 0.15) {
            RetinotopySite s;
            s.id = id++;
            s.cortical_pos = {x * 8, y * 8, 0.0};
            s.visual_pos = {x, y};
            sites.push_back(s);
        }
    std::array<int, 3> dims{9, 9, 5};
    std::vector<std::uint8_t> mask(9 * 9 * 5, 0);
    for (int k = 1; k <= 3; ++k)
        for (int j = 0; j < 9; ++j)
            for (int i = 0; i < 9; ++i) mask[(k * 9 + j) * 9 + i] = 1;
    ScalarField3D sdf = build_sdf(mask, dims, {-16, -16, -2}, {4, 4, 1});
    AnatomyModel anatomy(sites, sdf, VesselSet{}, Extent{2, 2});

    ElectrodeLayout layout = tiling_layout(anatomy, 4);
    REQUIRE(layout.free.size() == 4);
    // snapped sites sit within one site pitch of the ideal (+-1, +-1) targets
    std::vector<Vec2> targets{{-1, 1}, {1, 1}, {-1, -1}, {1, -1}};
    for (std::size_t e = 0; e < 4; ++e) {
        Vec2 s{layout.free[e].x / 8, layout.free[e].y / 8};
        CHECK((s - targets[e]).norm() < 0.11);
    }
}

TEST_CASE("tiling_layout: every choice minimizes visual distance (brute force)") {
    AnatomyModel anatomy = flat_anatomy(11, 2.5, 0.3);
    const Extent& ext = anatomy.visual_extent();
    for (int n : {3, 7, 12, 25}) {
        ElectrodeLayout layout = tiling_layout(anatomy, n);
        REQUIRE(static_cast<int>(layout.free.size()) == n);
        int rows = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
        int cols = (n + rows - 1) / rows;
        int placed = 0;
        for (int r = 0; r < rows && placed < n; ++r) {
            for (int c = 0; c < cols && placed < n; ++c, ++placed) {
                Vec2 target{(c + 0.5) / cols * 2 * ext.half_w - ext.half_w,
                            ext.half_h - (r + 0.5) / rows * 2 * ext.half_h};
                double best = std::numeric_limits<double>::infinity();
                Vec3 want;
                for (const RetinotopySite& s : anatomy.sites()) {
                    double d = (s.visual_pos - target).norm2();
                    if (d < best) {
                        best = d;
                        want = s.cortical_pos;
                    }
                }
                CHECK(layout.free[placed].x == want.x);
                CHECK(layout.free[placed].y == want.y);
            }
        }
    }
}

TEST_CASE("tiling_layout is invariant to site ordering") {
    AnatomyModel anatomy = flat_anatomy(9, 3.0);
    std::vector<RetinotopySite> shuffled = anatomy.sites();
    Rng rng(113);
    rng.shuffle(shuffled);
    AnatomyModel reordered(shuffled, anatomy.gm_sdf(), anatomy.vessels(),
                           anatomy.visual_extent());
    ElectrodeLayout a = tiling_layout(anatomy, 9);
    ElectrodeLayout b = tiling_layout(reordered, 9);
    for (std::size_t e = 0; e < a.free.size(); ++e) {
        CHECK(a.free[e].x == b.free[e].x);
        CHECK(a.free[e].y == b.free[e].y);
        CHECK(a.free[e].z == b.free[e].z);
    }
}

TEST_CASE("coverage softmin approaches the hard minimum as temperature drops") {
    Rng rng(127);
    std::vector<Vec2> positions;
    for (int e = 0; e < 6; ++e) positions.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3)});
    Image mean(9, 9, Extent{4, 4});
    for (double& v : mean.values) v = rng.uniform();

    // hard-min coverage
    double hard = 0.0;
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
            double m = mean.at(i, j);
            Vec2 c = mean.pixel_center(i, j);
            double fmin = std::numeric_limits<double>::infinity();
            for (const Vec2& s : positions) fmin = std::min(fmin, (c - s).norm2());
            hard += m * fmin;
        }
    double soft = coverage_term(positions, mean, 1e-4);
    CHECK(std::abs(soft - hard) / hard < 0.01);
}

TEST_CASE("coverage_layout: N=1 with a uniform dataset converges to the raster centroid") {
    AnatomyModel anatomy = flat_anatomy();
    ObjectiveConfig cfg = baseline_config(3);
    cfg.learning_rate = 0.05;
    cfg.max_iters = 800;
    std::vector<TargetImage> ds{TargetImage(12, 12, anatomy.visual_extent(), 1.0)};

    OptimizeResult res = coverage_layout(anatomy, ds, 1, cfg);
    Vec2 s = map_to_visual_field(anatomy, res.layout.free[0], cfg.knn_k).s;

    // grid-search oracle of the coverage objective
    Image mean = dataset_mean(ds);
    double best = std::numeric_limits<double>::infinity();
    Vec2 best_s;
    for (double x = -9; x <= 9; x += 0.1)
        for (double y = -9; y <= 9; y += 0.1) {
            Vec2 sv = map_to_visual_field(anatomy, {x, y, 0}, cfg.knn_k).s;
            double val = coverage_term({sv}, mean, kCoverageTemperature);
            if (val < best) {
                best = val;
                best_s = sv;
            }
        }
    CHECK((s - best_s).norm() < 0.1);
    CHECK(s.norm() < 0.1);  // uniform mass: centroid at the origin
}

TEST_CASE("coverage_layout: mass concentrated in one quadrant pulls every electrode there") {
    AnatomyModel anatomy = flat_anatomy();
    ObjectiveConfig cfg = baseline_config(11);
    cfg.max_iters = 600;
    // all intensity in the upper-right quadrant
    TargetImage t(12, 12, anatomy.visual_extent(), 0.0);
    for (int i = 0; i < 6; ++i)
        for (int j = 6; j < 12; ++j) t.at(i, j) = 1.0;
    std::vector<TargetImage> ds{t};

    OptimizeResult res = coverage_layout(anatomy, ds, 4, cfg);
    for (const Vec3& p : res.layout.free) {
        Vec2 s = map_to_visual_field(anatomy, p, cfg.knn_k).s;
        CHECK(s.x > -0.1);
        CHECK(s.y > -0.1);
    }
}

TEST_CASE("coverage_layout with a uniform dataset separates electrode positions") {
    AnatomyModel anatomy = flat_anatomy();
    ObjectiveConfig cfg = baseline_config(17);
    cfg.max_iters = 600;
    std::vector<TargetImage> ds{TargetImage(12, 12, anatomy.visual_extent(), 1.0)};
    OptimizeResult res = coverage_layout(anatomy, ds, 8, cfg);
    std::vector<Vec2> s(res.layout.free.size());
    for (std::size_t e = 0; e < s.size(); ++e)
        s[e] = map_to_visual_field(anatomy, res.layout.free[e], cfg.knn_k).s;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j) CHECK((s[i] - s[j]).norm() > 1e-3);
}

TEST_CASE("baseline layouts evaluate without special-casing") {
    AnatomyModel anatomy = flat_anatomy();
    ObjectiveConfig cfg = baseline_config(23);
    cfg.max_iters = 100;
    std::vector<TargetImage> ds = glyph_dataset(4, 12, anatomy.visual_extent(), 29);
    ElectrodeLayout tiled = tiling_layout(anatomy, 9);
    OptimizeResult covered = coverage_layout(anatomy, ds, 9, cfg);
    // rendering both through the standard forward path
    PerceptImage p1 = render_percept(tiled, anatomy, ds[0], cfg);
    PerceptImage p2 = render_percept(covered.layout, anatomy, ds[0], cfg);
    CHECK(p1.values.size() == ds[0].values.size());
    CHECK(p2.values.size() == ds[0].values.size());
}
