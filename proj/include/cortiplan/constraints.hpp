#pragma once

#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"
#include "cortiplan/forward.hpp"
#include "cortiplan/layout.hpp"

namespace cortiplan {

struct PenaltyResult {
    double value = 0.0;
    std::vector<Vec3> gradients;  // per derived electrode, includes the 1/|E| factor
};

// Hinge penalty phi(d) = ((tau-d)/tau)^2 for d <= tau, 0 otherwise, averaged
// over electrodes. phi(0) = 1, phi(tau) = 0.
PenaltyResult vascular_penalty(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                               double tau);

// max(0, d_gm)^2 averaged over electrodes; interior positions are free.
PenaltyResult cortex_penalty(const ElectrodeLayout& layout, const AnatomyModel& anatomy);

struct TotalObjective {
    ObjectiveBreakdown breakdown;
    std::vector<double> param_grads;  // matches the layout's parameter packing
};

// percept term: batch mean of percept_loss; penalties weighted by the
// config lambdas; gradients composed per term and chained onto the layout
// parameters.
TotalObjective total_objective(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                               const std::vector<TargetImage>& batch,
                               const ObjectiveConfig& config);

struct ViolationCount {
    int count = 0;
    double min_distance = 0.0;  // mm; +inf when the vessel set is empty
};

// Electrodes with d(p_e, V) <= tau (boundary inclusive) plus the layout-wide
// minimum vessel distance.
ViolationCount count_violations(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                                double tau);

}  // namespace cortiplan
