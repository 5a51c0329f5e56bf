#include "cortiplan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cortiplan/errors.hpp"
#include "cortiplan/forward.hpp"
#include "cortiplan/util.hpp"

namespace cortiplan {

double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        double d = a.values[i] - b.values[i];
        acc += d * d;
    }
    return acc / a.values.size();
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;  // (0.01 * L)^2, L = 1
constexpr double kSsimC2 = 0.03 * 0.03;

std::vector<double> ssim_window() {
    std::vector<double> w(kSsimWindow * kSsimWindow);
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        for (int j = 0; j < kSsimWindow; ++j) {
            double dy = i - (kSsimWindow - 1) / 2.0;
            double dx = j - (kSsimWindow - 1) / 2.0;
            double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
            w[i * kSsimWindow + j] = v;
            sum += v;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.width < kSsimWindow || a.height < kSsimWindow)
        throw std::invalid_argument("ssim: images must be at least 11x11");

    static const std::vector<double> window = ssim_window();
    const int H = a.height, W = a.width;
    const int out_h = H - kSsimWindow + 1, out_w = W - kSsimWindow + 1;

    std::vector<double> row_sums(out_h, 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < out_h; ++i) {
        double acc = 0.0;
        for (int j = 0; j < out_w; ++j) {
            double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
            for (int wi = 0; wi < kSsimWindow; ++wi) {
                for (int wj = 0; wj < kSsimWindow; ++wj) {
                    double wgt = window[wi * kSsimWindow + wj];
                    double va = a.at(i + wi, j + wj);
                    double vb = b.at(i + wi, j + wj);
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            double var_a = aa - mu_a * mu_a;
            double var_b = bb - mu_b * mu_b;
            double cov = ab - mu_a * mu_b;
            double num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2);
            double den = (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2);
            acc += num / den;
        }
        row_sums[i] = acc;
    }
    double total = 0.0;
    for (int i = 0; i < out_h; ++i) total += row_sums[i];
    return total / (static_cast<double>(out_h) * out_w);
}

// --- wilcoxon signed-rank ----------------------------------------------------

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty())
        throw std::invalid_argument("wilcoxon_signed_rank: samples must be equal length >= 1");

    struct Diff {
        double abs;
        int sign;
    };
    std::vector<Diff> diffs;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        if (d != 0.0) diffs.push_back({std::abs(d), d > 0 ? 1 : -1});
    }

    WilcoxonResult out;
    if (diffs.empty()) {
        out.degenerate = true;
        out.p_value = 1.0;
        return out;
    }
    const int n = static_cast<int>(diffs.size());
    out.n_effective = n;

    std::sort(diffs.begin(), diffs.end(),
              [](const Diff& a, const Diff& b) { return a.abs < b.abs; });

    // average ranks within tie groups, collect tie sizes for the variance
    // correction
    std::vector<double> ranks(n);
    std::vector<int> tie_sizes;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && diffs[j].abs == diffs[i].abs) ++j;
        double avg = (i + 1 + j) / 2.0;  // mean of ranks i+1 .. j
        for (int k = i; k < j; ++k) ranks[k] = avg;
        if (j - i > 1) tie_sizes.push_back(j - i);
        i = j;
    }

    double w_plus = 0.0;
    for (int k = 0; k < n; ++k)
        if (diffs[k].sign > 0) w_plus += ranks[k];
    double rank_total = 0.0;
    for (int k = 0; k < n; ++k) rank_total += ranks[k];
    double w_minus = rank_total - w_plus;
    double w = std::min(w_plus, w_minus);
    out.statistic = w;

    if (n <= 25) {
        // exact null distribution by enumerating all sign assignments; the
        // distribution is symmetric so the two-sided p doubles the lower tail
        const std::uint64_t patterns = 1ull << n;
        std::uint64_t count_le = 0;
        const double w_eps = w + 1e-9;
        // Gray-code walk: flip one sign per step
        double acc = 0.0;  // current W+ (start: all negative)
        std::vector<bool> positive(n, false);
        if (acc <= w_eps) ++count_le;
        for (std::uint64_t g = 1; g < patterns; ++g) {
            int bit = __builtin_ctzll(g);
            if (positive[bit]) {
                positive[bit] = false;
                acc -= ranks[bit];
            } else {
                positive[bit] = true;
                acc += ranks[bit];
            }
            if (acc <= w_eps) ++count_le;
        }
        out.p_value = std::min(1.0, 2.0 * static_cast<double>(count_le) / patterns);
    } else {
        double mean = n * (n + 1) / 4.0;
        double var = n * (n + 1) * (2.0 * n + 1) / 24.0;
        for (int t : tie_sizes) var -= (static_cast<double>(t) * t * t - t) / 48.0;
        // continuity correction toward the center; W <= mean by construction
        double z = (w - mean + 0.5) / std::sqrt(var);
        out.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    }
    return out;
}

MetricAggregate aggregate_metric(std::vector<double> values) {
    MetricAggregate agg;
    if (values.empty()) return agg;
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        double h = (values.size() - 1) * q;
        std::size_t lo = static_cast<std::size_t>(h);
        std::size_t hi = std::min(lo + 1, values.size() - 1);
        double frac = h - lo;
        return values[lo] + (values[hi] - values[lo]) * frac;
    };
    agg.median = quantile(0.5);
    agg.iqr_lo = quantile(0.25);
    agg.iqr_hi = quantile(0.75);
    return agg;
}

EvaluationReport evaluate_layout(const AnatomyModel& anatomy, const ElectrodeLayout& layout,
                                 const std::vector<TargetImage>& dataset,
                                 const ObjectiveConfig& config) {
    if (dataset.empty()) throw std::invalid_argument("evaluate_layout: empty dataset");

    EvaluationReport report;
    report.seed = config.seed;
    report.mse_per_image.resize(dataset.size());
    report.ssim_per_image.resize(dataset.size());
    std::vector<Vec3> positions = derive_positions(layout);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(dataset.size()); ++i) {
        try {
            PerceptImage p = render_percept_positions(positions, anatomy, dataset[i], config);
            report.mse_per_image[i] = mse(p, dataset[i]);
            report.ssim_per_image[i] = ssim(p, dataset[i]);
        } catch (...) {
#pragma omp critical(cortiplan_eval_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    report.mse_agg = aggregate_metric(report.mse_per_image);
    report.ssim_agg = aggregate_metric(report.ssim_per_image);

    ViolationCount v = count_violations(layout, anatomy, config.tau_mm);
    report.violations = v.count;
    report.min_vessel_distance = v.min_distance;
    return report;
}

namespace {

MetricComparison compare_metric(const std::vector<double>& a, const std::vector<double>& b) {
    MetricComparison cmp;
    std::vector<double> pct(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        pct[i] = d == 0.0 ? 0.0 : 100.0 * d / b[i];
    }
    MetricAggregate agg = aggregate_metric(pct);
    cmp.median_pct = agg.median;
    cmp.iqr_lo = agg.iqr_lo;
    cmp.iqr_hi = agg.iqr_hi;
    cmp.test = wilcoxon_signed_rank(a, b);
    cmp.significant = !cmp.test.degenerate && cmp.test.p_value <= 0.01;
    return cmp;
}

}  // namespace

ComparisonResult compare_methods(const EvaluationReport& a, const EvaluationReport& b) {
    if (a.mse_per_image.size() != b.mse_per_image.size() ||
        a.ssim_per_image.size() != b.ssim_per_image.size() || a.mse_per_image.empty())
        throw std::invalid_argument("compare_methods: reports cover different evaluation sets");
    ComparisonResult out;
    out.mse = compare_metric(a.mse_per_image, b.mse_per_image);
    out.ssim = compare_metric(a.ssim_per_image, b.ssim_per_image);
    return out;
}

// --- report json ---------------------------------------------------------------

void save_report_json(const EvaluationReport& report, const std::string& path) {
    nlohmann::json j;
    j["method"] = report.method;
    j["dataset"] = report.dataset;
    j["seed"] = report.seed;
    j["per_image"]["mse"] = report.mse_per_image;
    j["per_image"]["ssim"] = report.ssim_per_image;
    j["aggregates"]["mse"] = {{"median", report.mse_agg.median},
                              {"iqr", {report.mse_agg.iqr_lo, report.mse_agg.iqr_hi}}};
    j["aggregates"]["ssim"] = {{"median", report.ssim_agg.median},
                               {"iqr", {report.ssim_agg.iqr_lo, report.ssim_agg.iqr_hi}}};
    j["violations"] = report.violations;
    j["min_vessel_distance_mm"] =
        std::isinf(report.min_vessel_distance) ? -1.0 : report.min_vessel_distance;
    j["config"] = report.config_echo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

EvaluationReport load_report_json(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    EvaluationReport r;
    try {
        r.method = j.value("method", std::string());
        r.dataset = j.value("dataset", std::string());
        r.seed = j.value("seed", 0ull);
        r.mse_per_image = j.at("per_image").at("mse").get<std::vector<double>>();
        r.ssim_per_image = j.at("per_image").at("ssim").get<std::vector<double>>();
        r.mse_agg.median = j.at("aggregates").at("mse").at("median").get<double>();
        r.mse_agg.iqr_lo = j.at("aggregates").at("mse").at("iqr")[0].get<double>();
        r.mse_agg.iqr_hi = j.at("aggregates").at("mse").at("iqr")[1].get<double>();
        r.ssim_agg.median = j.at("aggregates").at("ssim").at("median").get<double>();
        r.ssim_agg.iqr_lo = j.at("aggregates").at("ssim").at("iqr")[0].get<double>();
        r.ssim_agg.iqr_hi = j.at("aggregates").at("ssim").at("iqr")[1].get<double>();
        r.violations = j.value("violations", 0);
        r.min_vessel_distance = j.value("min_vessel_distance_mm", -1.0);
        r.config_echo = j.value("config", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": not an evaluation report: " + e.what());
    }
    if (r.min_vessel_distance < 0) r.min_vessel_distance = std::numeric_limits<double>::infinity();
    return r;
}

}  // namespace cortiplan
