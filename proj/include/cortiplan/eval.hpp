#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"
#include "cortiplan/constraints.hpp"
#include "cortiplan/image.hpp"
#include "cortiplan/layout.hpp"

namespace cortiplan {

// Mean squared pixel difference, unweighted (distinct from the foveally
// weighted training loss).
double mse(const Image& a, const Image& b);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), C1=(0.01L)^2,
// C2=(0.03L)^2 with L=1, averaged over fully valid window positions.
double ssim(const Image& a, const Image& b);

struct WilcoxonResult {
    double statistic = 0.0;  // W = min(W+, W-)
    double p_value = 1.0;    // two-sided
    int n_effective = 0;     // pairs remaining after dropping zero differences
    bool degenerate = false; // all differences were zero
};

// Zero differences dropped, tied ranks averaged; exact two-sided p by full
// sign-assignment enumeration for n <= 25, normal approximation with tie and
// continuity corrections above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y);

struct MetricAggregate {
    double median = 0.0;
    double iqr_lo = 0.0;
    double iqr_hi = 0.0;
};

MetricAggregate aggregate_metric(std::vector<double> values);

struct EvaluationReport {
    std::vector<double> mse_per_image;
    std::vector<double> ssim_per_image;
    MetricAggregate mse_agg;
    MetricAggregate ssim_agg;
    int violations = 0;
    double min_vessel_distance = 0.0;
    std::uint64_t seed = 0;
    std::string method;
    std::string dataset;
    std::string config_echo;  // flat key-value lines
};

EvaluationReport evaluate_layout(const AnatomyModel& anatomy, const ElectrodeLayout& layout,
                                 const std::vector<TargetImage>& dataset,
                                 const ObjectiveConfig& config);

struct MetricComparison {
    double median_pct = 0.0;  // median of 100*(a_i - b_i)/b_i
    double iqr_lo = 0.0;
    double iqr_hi = 0.0;
    WilcoxonResult test;      // on the paired raw values
    bool significant = false; // p <= 0.01
};

struct ComparisonResult {
    MetricComparison mse;   // improvement is negative
    MetricComparison ssim;  // improvement is positive
};

// a is the candidate method, b the baseline; per-image percent differences
// aggregated as median [IQR].
ComparisonResult compare_methods(const EvaluationReport& a, const EvaluationReport& b);

void save_report_json(const EvaluationReport& report, const std::string& path);
EvaluationReport load_report_json(const std::string& path);

}  // namespace cortiplan
