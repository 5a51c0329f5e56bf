#include "cortiplan/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include "cortiplan/errors.hpp"
#include "cortiplan/util.hpp"

namespace cortiplan {

namespace {

std::uint32_t read_be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::vector<TargetImage> load_idx_images(const std::string& path, const Extent& extent,
                                         int limit) {
    std::string data = read_file(path);
    if (data.size() < 16) throw FormatError(path + ": truncated IDX header");
    const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
    std::uint32_t magic = read_be32(p);
    if (magic != 0x00000803)
        throw FormatError(path + ": bad IDX magic (expected 0x00000803 image container)");
    std::uint32_t count = read_be32(p + 4);
    std::uint32_t rows = read_be32(p + 8);
    std::uint32_t cols = read_be32(p + 12);
    std::size_t expected = 16 + static_cast<std::size_t>(count) * rows * cols;
    if (rows == 0 || cols == 0 || data.size() != expected)
        throw FormatError(path + ": IDX dimension mismatch (" + std::to_string(data.size()) +
                          " bytes for " + std::to_string(count) + "x" + std::to_string(rows) +
                          "x" + std::to_string(cols) + ")");

    std::uint32_t take = count;
    if (limit > 0 && static_cast<std::uint32_t>(limit) < count) take = limit;
    std::vector<TargetImage> images;
    images.reserve(take);
    const unsigned char* px = p + 16;
    for (std::uint32_t n = 0; n < take; ++n) {
        TargetImage img(cols, rows, extent);
        for (std::uint32_t i = 0; i < rows * cols; ++i)
            img.values[i] = px[i] / 255.0;
        px += rows * cols;
        images.push_back(std::move(img));
    }
    return images;
}

void save_idx_images(const std::vector<TargetImage>& images, const std::string& path) {
    if (images.empty()) throw std::invalid_argument("save_idx_images: empty image list");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_be32(out, 0x00000803);
    write_be32(out, static_cast<std::uint32_t>(images.size()));
    write_be32(out, static_cast<std::uint32_t>(images[0].height));
    write_be32(out, static_cast<std::uint32_t>(images[0].width));
    for (const TargetImage& img : images) {
        std::vector<unsigned char> buf(img.values.size());
        for (std::size_t i = 0; i < buf.size(); ++i)
            buf[i] = static_cast<unsigned char>(std::clamp(img.values[i], 0.0, 1.0) * 255.0 + 0.5);
        out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
    }
    if (!out) throw IoError("write failed: " + path);
}

// --- PGM/PPM -------------------------------------------------------------------

namespace {

struct PnmParser {
    const std::string& data;
    std::size_t pos = 0;
    const std::string& path;

    int next_int() {
        // skip whitespace and comments
        while (pos < data.size()) {
            char c = data[pos];
            if (c == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t start = pos;
        while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') ++pos;
        if (pos == start) throw FormatError(path + ": malformed PNM header");
        long long v;
        if (!parse_int(std::string_view(data).substr(start, pos - start), v))
            throw FormatError(path + ": malformed PNM header");
        return static_cast<int>(v);
    }
};

}  // namespace

TargetImage load_pgm(const std::string& path, const Extent& extent) {
    std::string data = read_file(path);
    if (data.size() < 2 || data[0] != 'P')
        throw FormatError(path + ": not a PNM file");
    char kind = data[1];
    if (kind != '2' && kind != '5' && kind != '3' && kind != '6')
        throw FormatError(path + ": unsupported PNM variant P" + std::string(1, kind));
    bool ascii = kind == '2' || kind == '3';
    int channels = (kind == '3' || kind == '6') ? 3 : 1;

    PnmParser parser{data, 2, path};
    int w = parser.next_int();
    int h = parser.next_int();
    int maxval = parser.next_int();
    if (w <= 0 || h <= 0) throw FormatError(path + ": bad PNM dimensions");
    if (maxval <= 0 || maxval > 255)
        throw FormatError(path + ": only 8-bit PNM supported (maxval " + std::to_string(maxval) +
                          ")");

    TargetImage img(w, h, extent);
    std::size_t n = static_cast<std::size_t>(w) * h;
    if (ascii) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) acc += parser.next_int();
            img.values[i] = acc / channels / maxval;
        }
    } else {
        ++parser.pos;  // single whitespace after maxval
        std::size_t need = n * channels;
        if (data.size() - parser.pos < need) throw FormatError(path + ": truncated PNM data");
        const unsigned char* px = reinterpret_cast<const unsigned char*>(data.data()) + parser.pos;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) acc += px[i * channels + c];
            img.values[i] = acc / channels / maxval;
        }
    }
    return img;
}

// --- PNG (8-bit gray/RGB/GA/RGBA, non-interlaced) --------------------------------

TargetImage load_png(const std::string& path, const Extent& extent) {
    std::string data = read_file(path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (data.size() < 8 || std::memcmp(data.data(), sig, 8) != 0)
        throw FormatError(path + ": not a PNG file");

    const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
    std::size_t pos = 8;
    std::uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = 0, interlace = 0;
    std::string idat;
    bool seen_ihdr = false, seen_iend = false;

    while (pos + 8 <= data.size() && !seen_iend) {
        std::uint32_t len = read_be32(p + pos);
        if (pos + 12 + len > data.size()) throw FormatError(path + ": truncated PNG chunk");
        std::string type(data, pos + 4, 4);
        const unsigned char* body = p + pos + 8;
        if (type == "IHDR") {
            if (len != 13) throw FormatError(path + ": bad IHDR");
            width = read_be32(body);
            height = read_be32(body + 4);
            bit_depth = body[8];
            color_type = body[9];
            interlace = body[12];
            seen_ihdr = true;
        } else if (type == "IDAT") {
            idat.append(reinterpret_cast<const char*>(body), len);
        } else if (type == "IEND") {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || width == 0 || height == 0) throw FormatError(path + ": missing IHDR");
    if (bit_depth != 8) throw FormatError(path + ": only 8-bit PNG supported");
    if (interlace != 0) throw FormatError(path + ": interlaced PNG not supported");
    int channels;
    switch (color_type) {
        case 0: channels = 1; break;  // gray
        case 2: channels = 3; break;  // rgb
        case 4: channels = 2; break;  // gray+alpha
        case 6: channels = 4; break;  // rgba
        default: throw FormatError(path + ": palette PNG not supported");
    }

    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    std::vector<unsigned char> raw((stride + 1) * height);
    uLongf raw_len = raw.size();
    int rc = uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                        idat.size());
    if (rc != Z_OK || raw_len != raw.size())
        throw FormatError(path + ": PNG inflate failed");

    // undo per-row filters
    std::vector<unsigned char> px(stride * height);
    for (std::uint32_t row = 0; row < height; ++row) {
        unsigned char filter = raw[row * (stride + 1)];
        const unsigned char* src = raw.data() + row * (stride + 1) + 1;
        unsigned char* dst = px.data() + row * stride;
        const unsigned char* prev = row > 0 ? px.data() + (row - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<std::size_t>(channels) ? dst[i - channels] : 0;
            int b = prev ? prev[i] : 0;
            int c = (prev && i >= static_cast<std::size_t>(channels)) ? prev[i - channels] : 0;
            int x = src[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: {
                    int pp = a + b - c;
                    int pa = std::abs(pp - a), pb = std::abs(pp - b), pc = std::abs(pp - c);
                    x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: throw FormatError(path + ": bad PNG filter type");
            }
            dst[i] = static_cast<unsigned char>(x);
        }
    }

    // luminance average over color channels; alpha ignored
    int color_channels = (color_type == 4) ? 1 : (color_type == 6 ? 3 : channels);
    TargetImage img(static_cast<int>(width), static_cast<int>(height), extent);
    for (std::uint32_t i = 0; i < height; ++i) {
        for (std::uint32_t j = 0; j < width; ++j) {
            const unsigned char* q = px.data() + i * stride + j * channels;
            double acc = 0.0;
            for (int c = 0; c < color_channels; ++c) acc += q[c];
            img.at(i, j) = acc / color_channels / 255.0;
        }
    }
    return img;
}

std::vector<TargetImage> load_dataset(const std::string& path, const Extent& extent, int limit) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw IoError("dataset path does not exist: " + path);

    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(path)) {
            if (!e.is_regular_file()) continue;
            std::string ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (ext == ".pgm" || ext == ".ppm" || ext == ".png")
                files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw FormatError(path + ": no .pgm/.ppm/.png files in directory");
        if (limit > 0 && static_cast<std::size_t>(limit) < files.size()) files.resize(limit);
        std::vector<TargetImage> images;
        images.reserve(files.size());
        for (const std::string& f : files) {
            std::string ext = fs::path(f).extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            images.push_back(ext == ".png" ? load_png(f, extent) : load_pgm(f, extent));
        }
        return images;
    }
    return load_idx_images(path, extent, limit);
}

}  // namespace cortiplan
