#pragma once

#include <string>
#include <vector>

#include "cortiplan/vec.hpp"

namespace cortiplan {

// Visual-field extent in degrees (half-width, half-height).
struct Extent {
    double half_w = 5.0;
    double half_h = 5.0;
};

// Grayscale raster with a declared visual-field extent. Pixel (i,j) is row i
// from the top, column j from the left; its center maps to the visual
// coordinate ((j+0.5)/W*2hw - hw, hh - (i+0.5)/H*2hh).
//
// Used for targets (values in [0,1]), percepts (values >= 0, unclamped) and
// weight maps (values >= 1).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> values;  // row-major, size width*height
    Extent extent;

    Image() = default;
    Image(int w, int h, Extent e, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill), extent(e) {}

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * width + j]; }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * width + j]; }

    Vec2 pixel_center(int i, int j) const {
        return {(j + 0.5) / width * 2.0 * extent.half_w - extent.half_w,
                extent.half_h - (i + 0.5) / height * 2.0 * extent.half_h};
    }

    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

using TargetImage = Image;
using PerceptImage = Image;
using WeightMap = Image;

// 8-bit PGM export: values clamped to [0,1], scaled to 0-255 (binary P5).
void save_pgm(const Image& img, const std::string& path);

// Raw 32-bit float grid with a text sidecar (<path>.meta: width height
// extent_half_w extent_half_h).
void save_raw_float(const Image& img, const std::string& path);
Image load_raw_float(const std::string& path);

}  // namespace cortiplan
