#include "cortiplan/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "cortiplan/errors.hpp"
#include "cortiplan/forward.hpp"

namespace cortiplan {

ElectrodeLayout tiling_layout(const AnatomyModel& anatomy, int n) {
    if (n < 1) throw std::invalid_argument("tiling_layout: N must be >= 1");
    const Extent& ext = anatomy.visual_extent();

    int rows = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n)))));
    int cols = (n + rows - 1) / rows;

    ElectrodeLayout layout;
    layout.mode = ElectrodeLayout::Mode::Free;
    layout.free.reserve(n);
    int placed = 0;
    for (int r = 0; r < rows && placed < n; ++r) {
        for (int c = 0; c < cols && placed < n; ++c, ++placed) {
            Vec2 v{(c + 0.5) / cols * 2.0 * ext.half_w - ext.half_w,
                   ext.half_h - (r + 0.5) / rows * 2.0 * ext.half_h};
            // snap to the site with the nearest visual position, ties by id
            double best_d2 = std::numeric_limits<double>::infinity();
            int best_id = -1;
            for (const RetinotopySite& s : anatomy.sites()) {
                double d2 = (s.visual_pos - v).norm2();
                if (d2 < best_d2 || (d2 == best_d2 && s.id < best_id)) {
                    best_d2 = d2;
                    best_id = s.id;
                }
            }
            layout.free.push_back(anatomy.site_by_id(best_id).cortical_pos);
        }
    }
    return layout;
}

Image dataset_mean(const std::vector<TargetImage>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("dataset_mean: empty dataset");
    Image mean(dataset[0].width, dataset[0].height, dataset[0].extent);
    for (const TargetImage& t : dataset) {
        if (!t.same_shape(mean)) throw std::invalid_argument("dataset_mean: shape mismatch");
        for (std::size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += t.values[i];
    }
    for (double& v : mean.values) v /= dataset.size();
    return mean;
}

double coverage_term(const std::vector<Vec2>& visual_positions, const Image& mean_intensity,
                     double temperature) {
    const int H = mean_intensity.height, W = mean_intensity.width;
    double total = 0.0;
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double mass = mean_intensity.at(i, j);
            if (mass <= 0.0) continue;
            Vec2 c = mean_intensity.pixel_center(i, j);
            double fmin = std::numeric_limits<double>::infinity();
            for (const Vec2& s : visual_positions)
                fmin = std::min(fmin, (c - s).norm2());
            double acc = 0.0;
            for (const Vec2& s : visual_positions)
                acc += std::exp(-((c - s).norm2() - fmin) / temperature);
            total += mass * (fmin - temperature * std::log(acc));
        }
    }
    return total;
}

namespace {

// smooth-min coverage objective and its gradient through the retinotopic map
TotalObjective coverage_objective(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                                  const Image& mean_intensity, const ObjectiveConfig& config) {
    std::vector<Vec3> positions = derive_positions(layout);
    const std::size_t n = positions.size();
    std::vector<Vec2> s(n);
    std::vector<Mat23> jac(n);
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(n); ++e) {
        try {
            VisualMapping m = map_to_visual_field(anatomy, positions[e], config.knn_k);
            s[e] = m.s;
            jac[e] = m.jacobian;
        } catch (...) {
#pragma omp critical(cortiplan_coverage_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    const int H = mean_intensity.height, W = mean_intensity.width;
    const double T = kCoverageTemperature;
    double value = 0.0;
    std::vector<Vec2> grad_s(n);
    std::vector<double> weights(n);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double mass = mean_intensity.at(i, j);
            if (mass <= 0.0) continue;
            Vec2 c = mean_intensity.pixel_center(i, j);
            double fmin = std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < n; ++e) fmin = std::min(fmin, (c - s[e]).norm2());
            double z = 0.0;
            for (std::size_t e = 0; e < n; ++e) {
                weights[e] = std::exp(-((c - s[e]).norm2() - fmin) / T);
                z += weights[e];
            }
            value += mass * (fmin - T * std::log(z));
            for (std::size_t e = 0; e < n; ++e) {
                // d softmin / d s_e = softmax_e * 2 (s_e - c)
                double w = weights[e] / z;
                grad_s[e] += (s[e] - c) * (2.0 * mass * w);
            }
        }
    }

    std::vector<Vec3> pos_grad(n);
    for (std::size_t e = 0; e < n; ++e) pos_grad[e] = jac[e].apply_transposed(grad_s[e]);

    PenaltyResult vasc = vascular_penalty(layout, anatomy, config.tau_mm);
    PenaltyResult cortex = cortex_penalty(layout, anatomy);
    for (std::size_t e = 0; e < n; ++e)
        pos_grad[e] += vasc.gradients[e] * config.lambda_vasc +
                       cortex.gradients[e] * config.lambda_cortex;

    TotalObjective out;
    out.breakdown.percept = value;  // coverage term recorded in the percept column
    out.breakdown.vasc = vasc.value;
    out.breakdown.cortex = cortex.value;
    out.breakdown.total =
        value + config.lambda_vasc * vasc.value + config.lambda_cortex * cortex.value;
    out.param_grads = chain_to_params(layout, pos_grad);
    return out;
}

}  // namespace

OptimizeResult coverage_layout(const AnatomyModel& anatomy,
                               const std::vector<TargetImage>& dataset, int n,
                               const ObjectiveConfig& config) {
    if (n < 1) throw std::invalid_argument("coverage_layout: N must be >= 1");
    if (dataset.empty()) throw std::invalid_argument("coverage_layout: empty dataset");

    Image mean = dataset_mean(dataset);
    ElectrodeLayout layout = init_layout(anatomy, n, config.seed);
    return run_adam_loop(std::move(layout), anatomy, dataset, config,
                         [&anatomy, mean, &config](const ElectrodeLayout& l,
                                                   const std::vector<TargetImage>&) {
                             return coverage_objective(l, anatomy, mean, config);
                         });
}

}  // namespace cortiplan
