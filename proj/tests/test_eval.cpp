#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cortiplan/eval.hpp"
#include "cortiplan/forward.hpp"
#include "cortiplan/optimize.hpp"
#include "cortiplan/ref.hpp"
#include "cortiplan/rng.hpp"
#include "support/helpers.hpp"

using namespace cortiplan;
using namespace testsupport;

namespace {

// exact two-sided wilcoxon p by direct enumeration, written independently of
// the implementation (plain nested loops over sign masks)
double enum_wilcoxon_p(const std::vector<double>& x, const std::vector<double>& y,
                       double* w_out = nullptr) {
    std::vector<double> absd;
    std::vector<int> sign;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        if (d != 0) {
            absd.push_back(std::abs(d));
            sign.push_back(d > 0 ? 1 : -1);
        }
    }
    int n = static_cast<int>(absd.size());
    if (n == 0) return 1.0;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return absd[a] < absd[b]; });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && absd[idx[j]] == absd[idx[i]]) ++j;
        for (int k = i; k < j; ++k) rank[idx[k]] = (i + 1 + j) / 2.0;
        i = j;
    }
    double w_plus = 0, total = 0;
    for (int k = 0; k < n; ++k) {
        total += rank[k];
        if (sign[k] > 0) w_plus += rank[k];
    }
    double w = std::min(w_plus, total - w_plus);
    if (w_out) *w_out = w;
    long count = 0;
    for (long mask = 0; mask < (1L << n); ++mask) {
        double wp = 0;
        for (int k = 0; k < n; ++k)
            if (mask & (1L << k)) wp += rank[k];
        if (wp <= w + 1e-9) ++count;
    }
    return std::min(1.0, 2.0 * count / static_cast<double>(1L << n));
}

}  // namespace

TEST_CASE("mse: identities and transcription") {
    Extent ext{4, 4};
    Rng rng(131);
    Image a = random_target(12, 12, ext, rng);
    CHECK(mse(a, a) == 0.0);

    Image b = a;
    for (double& v : b.values) v += 0.1;
    CHECK(mse(a, b) == doctest::Approx(0.01).epsilon(1e-12));

    Image c = random_target(12, 12, ext, rng);
    double want = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        want += (a.values[i] - c.values[i]) * (a.values[i] - c.values[i]);
    want /= a.values.size();
    CHECK(std::abs(mse(a, c) - want) < 1e-15);

    Image d(11, 12, ext, 0.0);
    CHECK_THROWS_AS(mse(a, d), std::invalid_argument);

    bool zero_iff_equal = mse(a, c) > 0.0;
    CHECK(zero_iff_equal);
}

TEST_CASE("ssim: identity, symmetry, size guard") {
    Extent ext{4, 4};
    Rng rng(137);
    Image a = random_target(16, 16, ext, rng);
    CHECK(ssim(a, a) == 1.0);

    Image b = random_target(16, 16, ext, rng);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-15));

    Image small(10, 10, ext, 0.0);
    CHECK_THROWS_AS(ssim(small, small), std::invalid_argument);
}

TEST_CASE("ssim: checkerboard against its negation is negative") {
    Extent ext{4, 4};
    Image a(11, 11, ext), b(11, 11, ext);
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double v = ((i + j) % 2 == 0) ? 1.0 : 0.0;
            a.at(i, j) = v;
            b.at(i, j) = 1.0 - v;  // negation around the midpoint
        }
    CHECK(ssim(a, b) < 0.0);

    // direct-formula oracle on the single 11x11 tile
    double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0, wsum = 0;
    const double sigma = 1.5;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double dy = i - 5.0, dx = j - 5.0;
            double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            wsum += w;
        }
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double dy = i - 5.0, dx = j - 5.0;
            double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / wsum;
            mu_a += w * a.at(i, j);
            mu_b += w * b.at(i, j);
            aa += w * a.at(i, j) * a.at(i, j);
            bb += w * b.at(i, j) * b.at(i, j);
            ab += w * a.at(i, j) * b.at(i, j);
        }
    double c1 = 1e-4, c2 = 9e-4;
    double want = ((2 * mu_a * mu_b + c1) * (2 * (ab - mu_a * mu_b) + c2)) /
                  ((mu_a * mu_a + mu_b * mu_b + c1) *
                   ((aa - mu_a * mu_a) + (bb - mu_b * mu_b) + c2));
    CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("ssim matches the independent direct-formula implementation") {
    Extent ext{4, 4};
    Rng rng(139);
    for (int trial = 0; trial < 20; ++trial) {
        Image a = random_target(16, 16, ext, rng);
        Image b = random_target(16, 16, ext, rng);
        CHECK(std::abs(ssim(a, b) - ref::ssim_serial(a, b)) < 1e-6);
    }
}

TEST_CASE("wilcoxon: all-positive n=5 gives W=0, p=0.0625") {
    std::vector<double> x{2, 3, 4, 5, 6}, y{1, 1, 1, 1, 1};
    WilcoxonResult r = wilcoxon_signed_rank(x, y);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == doctest::Approx(0.0625).epsilon(1e-12));
    CHECK_FALSE(r.degenerate);
}

TEST_CASE("wilcoxon: identical samples degenerate to p=1") {
    std::vector<double> x{1, 2, 3}, y{1, 2, 3};
    WilcoxonResult r = wilcoxon_signed_rank(x, y);
    CHECK(r.degenerate);
    CHECK(r.p_value == 1.0);
    CHECK(r.n_effective == 0);
}

TEST_CASE("wilcoxon exact branch equals full enumeration for n <= 12") {
    Rng rng(149);
    for (int trial = 0; trial < 60; ++trial) {
        int n = 3 + static_cast<int>(rng.below(10));  // 3..12
        std::vector<double> x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rng.uniform(-2, 2);
            // occasional ties in |d| and zero differences
            y[i] = (rng.below(5) == 0) ? x[i]
                   : (rng.below(4) == 0 ? x[i] - 0.5 : x[i] - rng.uniform(-1.5, 1.5));
        }
        double w_enum = 0.0;
        double p_enum = enum_wilcoxon_p(x, y, &w_enum);
        WilcoxonResult got = wilcoxon_signed_rank(x, y);
        if (got.degenerate) {
            CHECK(p_enum == 1.0);
            continue;
        }
        CHECK(got.statistic == doctest::Approx(w_enum).epsilon(1e-12));
        CHECK(got.p_value == doctest::Approx(p_enum).epsilon(1e-12));
    }
}

TEST_CASE("wilcoxon exact branch on an n=20 prefix of a larger sample") {
    Rng rng(151);
    std::vector<double> x(30), y(30);
    for (int i = 0; i < 30; ++i) {
        x[i] = rng.uniform(0, 1);
        y[i] = rng.uniform(0, 1);
    }
    std::vector<double> x20(x.begin(), x.begin() + 20), y20(y.begin(), y.begin() + 20);
    double p_enum = enum_wilcoxon_p(x20, y20);
    WilcoxonResult got = wilcoxon_signed_rank(x20, y20);
    CHECK(got.p_value == doctest::Approx(p_enum).epsilon(1e-12));

    // the n=30 sample exercises the normal-approximation branch
    WilcoxonResult approx = wilcoxon_signed_rank(x, y);
    CHECK(approx.p_value >= 0.0);
    CHECK(approx.p_value <= 1.0);
}

TEST_CASE("aggregate_metric: median and IQR bracket") {
    MetricAggregate agg = aggregate_metric({5, 1, 3, 2, 4});
    CHECK(agg.median == 3.0);
    CHECK(agg.iqr_lo == 2.0);
    CHECK(agg.iqr_hi == 4.0);
    CHECK(agg.iqr_lo <= agg.median);
    CHECK(agg.iqr_hi >= agg.median);
}

TEST_CASE("evaluate_layout: blank target with empty-amplitude render") {
    AnatomyModel anatomy = flat_anatomy();
    ObjectiveConfig cfg;
    cfg.spread.mode = SpreadModel::Mode::Visual;
    cfg.spread.rho = 0.8;
    ElectrodeLayout layout;
    layout.free = {{1, 1, 0}, {-2, 3, 0}};
    std::vector<TargetImage> ds{TargetImage(16, 16, anatomy.visual_extent(), 0.0)};
    EvaluationReport r = evaluate_layout(anatomy, layout, ds, cfg);
    CHECK(r.mse_per_image[0] == 0.0);
    CHECK(r.ssim_per_image[0] == 1.0);
    CHECK(r.violations == 0);
}

TEST_CASE("evaluate_layout: duplicated entries and median recomputation") {
    AnatomyModel anatomy = flat_anatomy();
    ObjectiveConfig cfg;
    cfg.spread.mode = SpreadModel::Mode::Visual;
    cfg.spread.rho = 0.8;
    Rng rng(157);
    ElectrodeLayout layout = init_layout(anatomy, 12, 3);
    TargetImage t = random_target(16, 16, anatomy.visual_extent(), rng);
    std::vector<TargetImage> ds{t, t, t};
    EvaluationReport r = evaluate_layout(anatomy, layout, ds, cfg);
    CHECK(r.mse_per_image[0] == r.mse_per_image[1]);
    CHECK(r.mse_per_image[1] == r.mse_per_image[2]);
    CHECK(r.mse_agg.median == r.mse_per_image[0]);

    std::vector<TargetImage> ds2 = glyph_dataset(7, 16, anatomy.visual_extent(), 163);
    EvaluationReport r2 = evaluate_layout(anatomy, layout, ds2, cfg);
    std::vector<double> sorted = r2.mse_per_image;
    std::sort(sorted.begin(), sorted.end());
    CHECK(r2.mse_agg.median == sorted[3]);
}

TEST_CASE("compare_methods: self comparison and exact halving") {
    EvaluationReport a, b;
    a.mse_per_image = {0.4, 0.5, 0.6};
    a.ssim_per_image = {0.7, 0.8, 0.9};
    b = a;
    ComparisonResult self = compare_methods(a, b);
    CHECK(self.mse.median_pct == 0.0);
    CHECK(self.mse.test.degenerate);
    CHECK_FALSE(self.mse.significant);

    EvaluationReport half = b;
    for (double& v : half.mse_per_image) v *= 0.5;
    ComparisonResult r = compare_methods(half, b);
    CHECK(r.mse.median_pct == doctest::Approx(-50.0).epsilon(1e-12));
    CHECK(r.mse.iqr_lo == doctest::Approx(-50.0).epsilon(1e-12));
    CHECK(r.mse.iqr_hi == doctest::Approx(-50.0).epsilon(1e-12));
}

TEST_CASE("compare_methods matches a brute-force recomputation") {
    Rng rng(167);
    EvaluationReport a, b;
    for (int i = 0; i < 21; ++i) {
        a.mse_per_image.push_back(rng.uniform(0.1, 1.0));
        b.mse_per_image.push_back(rng.uniform(0.1, 1.0));
        a.ssim_per_image.push_back(rng.uniform(0.0, 1.0));
        b.ssim_per_image.push_back(rng.uniform(0.0, 1.0));
    }
    ComparisonResult r = compare_methods(a, b);

    std::vector<double> pct;
    for (int i = 0; i < 21; ++i)
        pct.push_back(100.0 * (a.mse_per_image[i] - b.mse_per_image[i]) / b.mse_per_image[i]);
    std::sort(pct.begin(), pct.end());
    CHECK(r.mse.median_pct == doctest::Approx(pct[10]).epsilon(1e-12));
    double p_enum = enum_wilcoxon_p(a.mse_per_image, b.mse_per_image);
    CHECK(r.mse.test.p_value == doctest::Approx(p_enum).epsilon(1e-12));

    EvaluationReport short_report;
    short_report.mse_per_image = {0.1};
    short_report.ssim_per_image = {0.5};
    CHECK_THROWS_AS(compare_methods(a, short_report), std::invalid_argument);
}

TEST_CASE("compare_methods sign convention: improvement is -MSE, +SSIM") {
    EvaluationReport better, baseline;
    Rng rng(173);
    for (int i = 0; i < 15; ++i) {
        double m = rng.uniform(0.2, 0.8);
        baseline.mse_per_image.push_back(m);
        better.mse_per_image.push_back(m * 0.7);  // lower error
        double s = rng.uniform(0.3, 0.6);
        baseline.ssim_per_image.push_back(s);
        better.ssim_per_image.push_back(s + 0.2);  // higher structure
    }
    ComparisonResult r = compare_methods(better, baseline);
    CHECK(r.mse.median_pct < 0.0);
    CHECK(r.ssim.median_pct > 0.0);
    CHECK(r.mse.significant);
    CHECK(r.ssim.significant);
}

TEST_CASE("evaluation report json round-trips") {
    AnatomyModel anatomy = flat_anatomy();
    ObjectiveConfig cfg;
    cfg.spread.mode = SpreadModel::Mode::Visual;
    cfg.spread.rho = 0.8;
    ElectrodeLayout layout = init_layout(anatomy, 6, 5);
    std::vector<TargetImage> ds = glyph_dataset(5, 16, anatomy.visual_extent(), 179);
    EvaluationReport r = evaluate_layout(anatomy, layout, ds, cfg);
    r.method = "percept";
    r.config_echo = "method = percept\nn = 6\n";

    std::string path =
        (std::filesystem::temp_directory_path() / "report_rt.json").string();
    save_report_json(r, path);
    EvaluationReport back = load_report_json(path);
    CHECK(back.method == r.method);
    REQUIRE(back.mse_per_image.size() == r.mse_per_image.size());
    for (std::size_t i = 0; i < r.mse_per_image.size(); ++i)
        CHECK(back.mse_per_image[i] == doctest::Approx(r.mse_per_image[i]).epsilon(1e-12));
    CHECK(back.violations == r.violations);
}
