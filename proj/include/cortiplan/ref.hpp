#pragma once

#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"
#include "cortiplan/image.hpp"
#include "cortiplan/vec.hpp"

namespace cortiplan::ref {

// Serial reference implementations, kept deliberately naive and independent
// of the parallel kernels: straight transcriptions with full scans instead
// of spatial indices. Used by the test suites as oracles and by the
// benchmark tool as the baseline.

// exhaustive kNN over all sites
std::vector<std::pair<int, double>> nearest_sites_scan(const std::vector<RetinotopySite>& sites,
                                                       const Vec3& p, int k);

// exhaustive nearest segment
double vessel_distance_scan(const VesselSet& vessels, const Vec3& p, int* segment_id = nullptr);

// inverse-distance interpolation written straight from its definition
Vec2 map_to_visual_field_scan(const std::vector<RetinotopySite>& sites, const Vec3& p, int k);

// naive double loop over pixels and electrodes, recomputing the retinotopic
// interpolation, bilinear amplitude and spread per electrode from scratch
PerceptImage render_percept_naive(const std::vector<Vec3>& positions,
                                  const std::vector<RetinotopySite>& sites,
                                  const TargetImage& target, const ObjectiveConfig& config);

// plain serial weighted sum
double percept_loss_serial(const PerceptImage& percept, const TargetImage& target,
                           const WeightMap& w);

// serial SSIM with the same window definition as the parallel kernel
double ssim_serial(const Image& a, const Image& b);

// serial exact signed EDT (same algorithm as build_sdf, no threading)
ScalarField3D build_sdf_serial(const std::vector<std::uint8_t>& mask,
                               const std::array<int, 3>& dims, const Vec3& origin,
                               const Vec3& spacing);

}  // namespace cortiplan::ref
