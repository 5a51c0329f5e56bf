#pragma once

#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"
#include "cortiplan/image.hpp"
#include "cortiplan/optimize.hpp"

namespace cortiplan {

// Uniform visual-field tiling: the most-square grid of N cell centers over
// the visual extent, each snapped to the retinotopy site with the nearest
// visual position (ties by site id).
ElectrodeLayout tiling_layout(const AnatomyModel& anatomy, int n);

// Dataset-weighted visual-field coverage: minimizes
// sum_px mean_intensity(px) * softmin_e |px - s_e|^2 with the same Adam loop
// as optimize_placement. Penalties apply with the config lambdas; callers
// wanting the unconstrained baseline pass lambdas of zero.
OptimizeResult coverage_layout(const AnatomyModel& anatomy,
                               const std::vector<TargetImage>& dataset, int n,
                               const ObjectiveConfig& config);

// Softmin temperature in deg^2 and the coverage term itself, exposed for the
// temperature-limit checks.
constexpr double kCoverageTemperature = 0.1;
double coverage_term(const std::vector<Vec2>& visual_positions, const Image& mean_intensity,
                     double temperature);

// Mean intensity raster of the dataset.
Image dataset_mean(const std::vector<TargetImage>& dataset);

}  // namespace cortiplan
