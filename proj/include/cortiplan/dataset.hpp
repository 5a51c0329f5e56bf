#pragma once

#include <string>
#include <vector>

#include "cortiplan/image.hpp"

namespace cortiplan {

// IDX image container (the MNIST format): magic 0x00000803, unsigned bytes,
// dimensions n x rows x cols. Values scale to [0,1] with 255 -> 1.0 exactly.
std::vector<TargetImage> load_idx_images(const std::string& path, const Extent& extent,
                                         int limit = 0);
void save_idx_images(const std::vector<TargetImage>& images, const std::string& path);

// Single image files. Color inputs are converted by channel average.
TargetImage load_pgm(const std::string& path, const Extent& extent);
TargetImage load_png(const std::string& path, const Extent& extent);

// IDX file or a directory of .pgm/.ppm/.png files (sorted by name).
std::vector<TargetImage> load_dataset(const std::string& path, const Extent& extent,
                                      int limit = 0);

}  // namespace cortiplan
