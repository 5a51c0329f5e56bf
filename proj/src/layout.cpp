#include "cortiplan/layout.hpp"

#include <fstream>

#include "cortiplan/errors.hpp"
#include "cortiplan/util.hpp"

namespace cortiplan {

int ElectrodeLayout::electrode_count() const {
    if (mode == Mode::Free) return static_cast<int>(free.size());
    int n = 0;
    for (const ElectrodeThread& t : threads) n += t.count;
    return n;
}

std::vector<double> ElectrodeLayout::pack_params() const {
    std::vector<double> p;
    if (mode == Mode::Free) {
        p.reserve(free.size() * 3);
        for (const Vec3& v : free) {
            p.push_back(v.x);
            p.push_back(v.y);
            p.push_back(v.z);
        }
    } else {
        p.reserve(threads.size() * 6);
        for (const ElectrodeThread& t : threads) {
            p.push_back(t.entry.x);
            p.push_back(t.entry.y);
            p.push_back(t.entry.z);
            p.push_back(t.direction.x);
            p.push_back(t.direction.y);
            p.push_back(t.direction.z);
        }
    }
    return p;
}

void ElectrodeLayout::unpack_params(const std::vector<double>& params) {
    if (mode == Mode::Free) {
        if (params.size() != free.size() * 3)
            throw std::invalid_argument("unpack_params: size mismatch");
        for (std::size_t e = 0; e < free.size(); ++e)
            free[e] = {params[3 * e], params[3 * e + 1], params[3 * e + 2]};
    } else {
        if (params.size() != threads.size() * 6)
            throw std::invalid_argument("unpack_params: size mismatch");
        for (std::size_t t = 0; t < threads.size(); ++t) {
            threads[t].entry = {params[6 * t], params[6 * t + 1], params[6 * t + 2]};
            threads[t].direction = {params[6 * t + 3], params[6 * t + 4], params[6 * t + 5]};
        }
    }
}

std::vector<Vec3> derive_thread_electrodes(const ElectrodeLayout& layout) {
    if (layout.mode != ElectrodeLayout::Mode::Threads)
        throw std::invalid_argument("derive_thread_electrodes: layout is not in threads mode");
    std::vector<Vec3> positions;
    positions.reserve(layout.electrode_count());
    for (const ElectrodeThread& t : layout.threads) {
        double n = t.direction.norm();
        if (n <= 1e-9)
            throw NumericError("derive_thread_electrodes: degenerate (zero-norm) direction");
        Vec3 unit = t.direction / n;
        for (int i = 0; i < t.count; ++i) positions.push_back(t.entry + unit * (i * t.spacing));
    }
    return positions;
}

std::vector<Vec3> derive_positions(const ElectrodeLayout& layout) {
    if (layout.mode == ElectrodeLayout::Mode::Free) return layout.free;
    return derive_thread_electrodes(layout);
}

std::vector<double> chain_to_params(const ElectrodeLayout& layout,
                                    const std::vector<Vec3>& position_grads) {
    std::vector<double> out;
    if (layout.mode == ElectrodeLayout::Mode::Free) {
        if (position_grads.size() != layout.free.size())
            throw std::invalid_argument("chain_to_params: gradient count mismatch");
        out.reserve(position_grads.size() * 3);
        for (const Vec3& g : position_grads) {
            out.push_back(g.x);
            out.push_back(g.y);
            out.push_back(g.z);
        }
        return out;
    }

    if (position_grads.size() != static_cast<std::size_t>(layout.electrode_count()))
        throw std::invalid_argument("chain_to_params: gradient count mismatch");
    out.reserve(layout.threads.size() * 6);
    std::size_t base = 0;
    for (const ElectrodeThread& t : layout.threads) {
        double n = t.direction.norm();
        if (n <= 1e-9)
            throw NumericError("chain_to_params: degenerate (zero-norm) direction");
        Vec3 unit = t.direction / n;
        Vec3 g_entry, g_dir;
        for (int i = 0; i < t.count; ++i) {
            const Vec3& g = position_grads[base + i];
            g_entry += g;
            // d(position_i)/d(direction) = i*spacing*(I - unit unit^T)/|direction|
            double scale = i * t.spacing / n;
            Vec3 proj = g - unit * unit.dot(g);
            g_dir += proj * scale;
        }
        base += t.count;
        out.push_back(g_entry.x);
        out.push_back(g_entry.y);
        out.push_back(g_entry.z);
        out.push_back(g_dir.x);
        out.push_back(g_dir.y);
        out.push_back(g_dir.z);
    }
    return out;
}

void save_layout_csv(const ElectrodeLayout& layout, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    if (layout.mode == ElectrodeLayout::Mode::Free) {
        out << "e,x,y,z\n";
        for (std::size_t e = 0; e < layout.free.size(); ++e) {
            const Vec3& p = layout.free[e];
            out << e << ',' << fmt_double(p.x) << ',' << fmt_double(p.y) << ','
                << fmt_double(p.z) << '\n';
        }
    } else {
        out << "e,x,y,z,thread_id\n";
        std::vector<Vec3> positions = derive_thread_electrodes(layout);
        std::size_t e = 0;
        for (std::size_t t = 0; t < layout.threads.size(); ++t) {
            for (int i = 0; i < layout.threads[t].count; ++i, ++e) {
                const Vec3& p = positions[e];
                out << e << ',' << fmt_double(p.x) << ',' << fmt_double(p.y) << ','
                    << fmt_double(p.z) << ',' << t << '\n';
            }
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

ElectrodeLayout load_layout_csv(const std::string& path) {
    std::string content = read_file(path);
    auto lines = split(content, '\n');
    while (!lines.empty() && strip_cr(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw FormatError(path + ": empty layout file");
    std::string_view header = strip_cr(lines[0]);
    bool with_thread = header == "e,x,y,z,thread_id";
    if (!with_thread && header != "e,x,y,z")
        throw ParseError(path + ":1: expected header e,x,y,z[,thread_id]");

    // Thread layouts load as derived positions; evaluation and rendering act
    // on electrode sites only.
    ElectrodeLayout layout;
    layout.mode = ElectrodeLayout::Mode::Free;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        auto fields = split(strip_cr(lines[li]), ',');
        double v[3];
        long long e;
        bool ok = fields.size() == (with_thread ? 5u : 4u) && parse_int(fields[0], e);
        for (int f = 0; ok && f < 3; ++f) ok = parse_double(fields[f + 1], v[f]);
        if (!ok) throw ParseError(path + ":" + std::to_string(li + 1) + ": malformed layout row");
        layout.free.push_back({v[0], v[1], v[2]});
    }
    if (layout.free.empty()) throw FormatError(path + ": empty input (no electrodes)");
    return layout;
}

}  // namespace cortiplan
