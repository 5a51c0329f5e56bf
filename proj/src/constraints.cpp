#include "cortiplan/constraints.hpp"

#include <cmath>
#include <exception>
#include <limits>

#include "cortiplan/errors.hpp"

namespace cortiplan {

PenaltyResult vascular_penalty(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                               double tau) {
    if (tau <= 0) throw std::invalid_argument("vascular_penalty: tau must be > 0");
    std::vector<Vec3> positions = derive_positions(layout);
    if (positions.empty()) throw std::invalid_argument("vascular_penalty: empty layout");

    PenaltyResult out;
    out.gradients.resize(positions.size());
    const double inv_n = 1.0 / positions.size();
    for (std::size_t e = 0; e < positions.size(); ++e) {
        VesselDistance vd = anatomy.vessel_distance(positions[e]);
        if (vd.distance > tau) continue;
        double margin = (tau - vd.distance) / tau;
        out.value += margin * margin * inv_n;
        // d phi / d p = -2 (tau - d)/tau^2 * grad d
        out.gradients[e] = vd.gradient * (-2.0 * margin / tau * inv_n);
    }
    return out;
}

PenaltyResult cortex_penalty(const ElectrodeLayout& layout, const AnatomyModel& anatomy) {
    std::vector<Vec3> positions = derive_positions(layout);
    if (positions.empty()) throw std::invalid_argument("cortex_penalty: empty layout");

    PenaltyResult out;
    out.gradients.resize(positions.size());
    const double inv_n = 1.0 / positions.size();
    for (std::size_t e = 0; e < positions.size(); ++e) {
        SdfSample s = sample_sdf(anatomy.gm_sdf(), positions[e]);
        if (s.value <= 0) continue;
        out.value += s.value * s.value * inv_n;
        out.gradients[e] = s.gradient * (2.0 * s.value * inv_n);
    }
    return out;
}

TotalObjective total_objective(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                               const std::vector<TargetImage>& batch,
                               const ObjectiveConfig& config) {
    if (batch.empty()) throw std::invalid_argument("total_objective: empty batch");
    std::vector<Vec3> positions = derive_positions(layout);
    if (positions.empty()) throw std::invalid_argument("total_objective: empty layout");

    const double inv_b = 1.0 / batch.size();
    std::vector<double> losses(batch.size(), 0.0);
    std::vector<std::vector<Vec3>> grads(batch.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch.size()); ++b) {
        try {
            grads[b] = loss_gradient_positions(positions, anatomy, batch[b], config, &losses[b]);
        } catch (...) {
#pragma omp critical(cortiplan_batch_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    // fixed-order reduction across the batch
    double percept = 0.0;
    std::vector<Vec3> pos_grad(positions.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        percept += losses[b] * inv_b;
        for (std::size_t e = 0; e < positions.size(); ++e) pos_grad[e] += grads[b][e] * inv_b;
    }

    PenaltyResult vasc = vascular_penalty(layout, anatomy, config.tau_mm);
    PenaltyResult cortex = cortex_penalty(layout, anatomy);
    for (std::size_t e = 0; e < positions.size(); ++e)
        pos_grad[e] += vasc.gradients[e] * config.lambda_vasc +
                       cortex.gradients[e] * config.lambda_cortex;

    TotalObjective out;
    out.breakdown.percept = percept;
    out.breakdown.vasc = vasc.value;
    out.breakdown.cortex = cortex.value;
    out.breakdown.total =
        percept + config.lambda_vasc * vasc.value + config.lambda_cortex * cortex.value;
    out.param_grads = chain_to_params(layout, pos_grad);
    return out;
}

ViolationCount count_violations(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                                double tau) {
    ViolationCount out;
    out.min_distance = std::numeric_limits<double>::infinity();
    for (const Vec3& p : derive_positions(layout)) {
        double d = anatomy.vessel_distance(p).distance;
        if (d <= tau) ++out.count;
        out.min_distance = std::min(out.min_distance, d);
    }
    return out;
}

}  // namespace cortiplan
