#include "cortiplan/image.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cortiplan/errors.hpp"

namespace cortiplan {

void save_pgm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(img.width);
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            double v = std::clamp(img.at(i, j), 0.0, 1.0);
            row[j] = static_cast<unsigned char>(v * 255.0 + 0.5);
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw IoError("write failed: " + path);
}

void save_raw_float(const Image& img, const std::string& path) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + path);
        std::vector<float> buf(img.values.begin(), img.values.end());
        out.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(float));
        if (!out) throw IoError("write failed: " + path);
    }
    std::ofstream meta(path + ".meta");
    if (!meta) throw IoError("cannot open for writing: " + path + ".meta");
    meta << img.width << " " << img.height << " " << img.extent.half_w << " "
         << img.extent.half_h << "\n";
}

Image load_raw_float(const std::string& path) {
    std::ifstream meta(path + ".meta");
    if (!meta) throw IoError("cannot open: " + path + ".meta");
    int w = 0, h = 0;
    double hw = 0, hh = 0;
    meta >> w >> h >> hw >> hh;
    if (!meta || w <= 0 || h <= 0) throw FormatError("bad raw-float sidecar: " + path + ".meta");

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<float> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        throw FormatError("raw-float grid truncated: " + path);

    Image img(w, h, Extent{hw, hh});
    std::copy(buf.begin(), buf.end(), img.values.begin());
    return img;
}

}  // namespace cortiplan
