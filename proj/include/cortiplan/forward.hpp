#pragma once

#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"
#include "cortiplan/image.hpp"
#include "cortiplan/layout.hpp"
#include "cortiplan/vec.hpp"

namespace cortiplan {

struct VisualMapping {
    Vec2 s;        // visual-field coordinate, degrees
    Mat23 jacobian;  // ds/dp, deg per mm (zero when p coincides with a site)
};

struct AmplitudeSample {
    double a = 0.0;
    Vec2 gradient;  // da/ds, per degree (zero along clamped directions)
};

// Inverse-distance weighted interpolation over the k nearest retinotopic
// sites. A query within 1e-9 mm of a site returns that site's visual
// position exactly with a zero jacobian.
VisualMapping map_to_visual_field(const AnatomyModel& anatomy, const Vec3& p, int k);

// Bilinear sample of the target at visual coordinate s with border clamping.
AmplitudeSample sample_amplitude(const TargetImage& target, const Vec2& s);

// Mean ratio of visual to cortical distance over the k nearest sites,
// deg/mm. Treated as a constant within each gradient evaluation.
double local_magnification(const AnatomyModel& anatomy, const Vec3& p, int k);

// w(x,y) = 1 + beta*exp(-(x^2+y^2)/(2 sigma_f^2)) at pixel centers.
WeightMap foveal_weights(int height, int width, const Extent& extent, double beta,
                         double sigma_f);

// Resolves the auto default (25% of the extent half-width).
double resolve_foveal_sigma(const ObjectiveConfig& config, const Extent& extent);

// Per-electrode quantities feeding the phosphene sum.
struct ElectrodeState {
    Vec2 s;
    Mat23 jacobian;
    double amplitude = 0.0;
    Vec2 amp_gradient;
    double sigma = 0.0;  // visual degrees
};

std::vector<ElectrodeState> prepare_electrodes(const std::vector<Vec3>& positions,
                                               const AnatomyModel& anatomy,
                                               const TargetImage& target,
                                               const ObjectiveConfig& config);

// P(x,y) = sum_e a_e exp(-((x-s_x)^2+(y-s_y)^2)/(2 sigma_e^2)) at pixel centers.
PerceptImage render_percept(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                            const TargetImage& target, const ObjectiveConfig& config);
PerceptImage render_percept_positions(const std::vector<Vec3>& positions,
                                      const AnatomyModel& anatomy, const TargetImage& target,
                                      const ObjectiveConfig& config);

// L = sum over pixels of w*(P-T)^2.
double percept_loss(const PerceptImage& percept, const TargetImage& target, const WeightMap& w);

// Analytic dL/dp_e for every derived electrode, neighbor sets and
// magnifications held fixed.
std::vector<Vec3> loss_gradient(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                                const TargetImage& target, const ObjectiveConfig& config);
std::vector<Vec3> loss_gradient_positions(const std::vector<Vec3>& positions,
                                          const AnatomyModel& anatomy, const TargetImage& target,
                                          const ObjectiveConfig& config, double* loss_out = nullptr);

}  // namespace cortiplan
