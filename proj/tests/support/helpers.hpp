#pragma once

// Shared fixtures and independent oracles for the test suites. Everything
// here stays deliberately naive; these routines are the reference side of
// the dual-route checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"
#include "cortiplan/image.hpp"
#include "cortiplan/rng.hpp"

namespace testsupport {

using namespace cortiplan;

// Flat-sheet anatomy: sites on a regular grid in the z=0 plane, visual
// position = cortical (x,y) scaled by mag_deg_per_mm. Gray matter is a slab
// |z| <= thickness/2 over the site footprint. Analytic everywhere.
inline AnatomyModel flat_anatomy(int sites_per_side = 15, double pitch_mm = 2.0,
                                 double mag_deg_per_mm = 0.35, double thickness_mm = 3.0,
                                 std::vector<VesselSegment> vessels = {},
                                 double vessel_radius = 0.0) {
    std::vector<RetinotopySite> sites;
    double half = (sites_per_side - 1) * pitch_mm / 2.0;
    int id = 0;
    for (int i = 0; i < sites_per_side; ++i) {
        for (int j = 0; j < sites_per_side; ++j) {
            RetinotopySite s;
            s.id = id++;
            s.cortical_pos = {-half + j * pitch_mm, -half + i * pitch_mm, 0.0};
            s.visual_pos = {s.cortical_pos.x * mag_deg_per_mm, s.cortical_pos.y * mag_deg_per_mm};
            sites.push_back(s);
        }
    }
    double extent = (half + pitch_mm) * mag_deg_per_mm;

    double vox = 1.0;
    double margin = 2.0;
    int nxy = static_cast<int>(std::ceil(2 * (half + margin) / vox)) + 1;
    int nz = static_cast<int>(std::ceil((thickness_mm + 2 * margin) / vox)) + 1;
    Vec3 origin{-half - margin, -half - margin, -(thickness_mm / 2 + margin)};
    std::array<int, 3> dims{nxy, nxy, nz};
    // footprint clipped to the site coverage so optimization never wanders
    // into cortex without retinotopy
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(nxy) * nxy * nz, 0);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < nxy; ++j)
            for (int i = 0; i < nxy; ++i) {
                double x = origin.x + i * vox;
                double y = origin.y + j * vox;
                double z = origin.z + k * vox;
                if (std::abs(z) <= thickness_mm / 2 && std::abs(x) <= half + 0.5 &&
                    std::abs(y) <= half + 0.5)
                    mask[(static_cast<std::size_t>(k) * nxy + j) * nxy + i] = 1;
            }
    ScalarField3D sdf = build_sdf(mask, dims, origin, {vox, vox, vox});
    VesselSet vs;
    vs.segments = std::move(vessels);
    vs.radius = vessel_radius;
    return AnatomyModel(std::move(sites), std::move(sdf), std::move(vs),
                        Extent{extent, extent});
}

inline TargetImage random_target(int w, int h, const Extent& ext, Rng& rng) {
    TargetImage t(w, h, ext);
    for (double& v : t.values) v = rng.uniform();
    return t;
}

// Synthetic stroke glyphs standing in for handwritten digits: 1-3 random
// polyline strokes rendered with a soft pen, values in [0,1]. Content stays
// inside a margin like centered MNIST digits.
inline TargetImage stroke_glyph(int size, const Extent& ext, Rng& rng) {
    TargetImage img(size, size, ext);
    int n_strokes = 1 + static_cast<int>(rng.below(3));
    double pen = size / 14.0;
    double pad = size / 5.0;
    for (int s = 0; s < n_strokes; ++s) {
        double x = rng.uniform(0.3, 0.7) * size;
        double y = rng.uniform(0.3, 0.7) * size;
        double heading = rng.uniform(0.0, 6.283185307179586);
        int steps = 3 + static_cast<int>(rng.below(4));
        for (int seg = 0; seg < steps; ++seg) {
            double len = rng.uniform(0.13, 0.25) * size;
            double nx = std::clamp(x + len * std::cos(heading), pad, size - 1.0 - pad);
            double ny = std::clamp(y + len * std::sin(heading), pad, size - 1.0 - pad);
            int samples = static_cast<int>(len * 3) + 2;
            for (int t = 0; t <= samples; ++t) {
                double px = x + (nx - x) * t / samples;
                double py = y + (ny - y) * t / samples;
                for (int i = std::max(0, static_cast<int>(py - pen - 1));
                     i <= std::min(size - 1, static_cast<int>(py + pen + 1)); ++i) {
                    for (int j = std::max(0, static_cast<int>(px - pen - 1));
                         j <= std::min(size - 1, static_cast<int>(px + pen + 1)); ++j) {
                        double d2 = (i - py) * (i - py) + (j - px) * (j - px);
                        double ink = std::exp(-d2 / (2.0 * (pen / 1.8) * (pen / 1.8)));
                        img.at(i, j) = std::min(1.0, img.at(i, j) + ink);
                    }
                }
            }
            x = nx;
            y = ny;
            heading += rng.uniform(-1.2, 1.2);
        }
    }
    return img;
}

inline std::vector<TargetImage> glyph_dataset(int count, int size, const Extent& ext,
                                              std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TargetImage> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(stroke_glyph(size, ext, rng));
    return out;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-12);
}

}  // namespace testsupport
