#include <algorithm>
#include <cmath>
#include <fstream>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/errors.hpp"
#include "cortiplan/rng.hpp"
#include "cortiplan/util.hpp"

namespace cortiplan {

// --- complex-log retinotopy map ----------------------------------------------

Vec2 logmap_visual_to_sheet(const Vec2& z, double k_map, double a_map) {
    double re = z.x + a_map;
    double im = z.y;
    double r = std::sqrt(re * re + im * im);
    return {k_map * std::log(r), k_map * std::atan2(im, re)};
}

Vec2 logmap_sheet_to_visual(const Vec2& w, double k_map, double a_map) {
    double r = std::exp(w.x / k_map);
    double theta = w.y / k_map;
    return {r * std::cos(theta) - a_map, r * std::sin(theta)};
}

double logmap_magnification(const Vec2& z, double k_map, double a_map) {
    // |dz/dw| = |z + a| / k, degrees of visual field per mm of sheet
    double re = z.x + a_map;
    double im = z.y;
    return std::sqrt(re * re + im * im) / k_map;
}

Vec3 synth_sheet_embed(const Vec2& uv, const SynthParams& params) {
    double w = 2.0 * 3.14159265358979323846 / params.fold_period_mm;
    double h = params.fold_amplitude_mm * std::sin(w * uv.x) * std::cos(w * uv.y);
    return {uv.x, uv.y, h};
}

// --- generator ----------------------------------------------------------------

AnatomyModel synth_anatomy(const SynthParams& params, std::uint64_t seed) {
    if (params.patch_mm <= 0 || params.site_count <= 0 || params.gm_thickness_mm <= 0 ||
        params.k_map_mm <= 0 || params.a_map_deg <= 0 || params.voxel_mm <= 0 ||
        params.visual_extent.half_w <= 0 || params.visual_extent.half_h <= 0 ||
        params.fold_period_mm <= 0 || params.vessel_count < 0 || params.vessel_waypoints < 2)
        throw std::invalid_argument("synth_anatomy: non-positive parameter");

    Rng rng(seed);
    const double half_patch = params.patch_mm / 2.0;
    const double edge_margin = 2.0 * params.voxel_mm;

    // Retinotopy sites: visual positions uniform over the extent, mapped to
    // the sheet; draws falling off the patch are rejected and redrawn.
    std::vector<RetinotopySite> sites;
    sites.reserve(params.site_count);
    Vec2 uv_lo{1e30, 1e30}, uv_hi{-1e30, -1e30};
    long attempts = 0;
    const long max_attempts = 10000L * params.site_count;
    while (static_cast<int>(sites.size()) < params.site_count) {
        if (++attempts > max_attempts)
            throw InfeasibleError("synth_anatomy: patch too small for the visual extent");
        Vec2 z{rng.uniform(-params.visual_extent.half_w, params.visual_extent.half_w),
               rng.uniform(-params.visual_extent.half_h, params.visual_extent.half_h)};
        Vec2 uv = logmap_visual_to_sheet(z, params.k_map_mm, params.a_map_deg);
        if (std::abs(uv.x) > half_patch - edge_margin || std::abs(uv.y) > half_patch - edge_margin)
            continue;
        RetinotopySite s;
        s.id = static_cast<int>(sites.size());
        s.visual_pos = z;
        s.cortical_pos = synth_sheet_embed(uv, params);
        sites.push_back(s);
        uv_lo.x = std::min(uv_lo.x, uv.x);
        uv_lo.y = std::min(uv_lo.y, uv.y);
        uv_hi.x = std::max(uv_hi.x, uv.x);
        uv_hi.y = std::max(uv_hi.y, uv.y);
    }

    // Vessels: random-walk polylines on the sheet surface.
    VesselSet vessels;
    vessels.radius = params.vessel_radius_mm;
    for (int vi = 0; vi < params.vessel_count; ++vi) {
        Vec2 uv{rng.uniform(uv_lo.x, uv_hi.x), rng.uniform(uv_lo.y, uv_hi.y)};
        double heading = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        Vec3 prev = synth_sheet_embed(uv, params);
        for (int w = 1; w < params.vessel_waypoints; ++w) {
            heading += rng.uniform(-0.6, 0.6);
            uv.x += params.vessel_step_mm * std::cos(heading);
            uv.y += params.vessel_step_mm * std::sin(heading);
            uv.x = std::clamp(uv.x, uv_lo.x, uv_hi.x);
            uv.y = std::clamp(uv.y, uv_lo.y, uv_hi.y);
            Vec3 next = synth_sheet_embed(uv, params);
            if ((next - prev).norm2() > 1e-12) {
                vessels.segments.push_back({prev, next});
                prev = next;
            }
        }
    }

    // Gray matter: a slab of the requested thickness around the sheet,
    // restricted to the site-covered footprint. The footprint extends 1.5
    // voxels past the outermost site so no site lands on the cut face.
    const double vx = params.voxel_mm;
    const Vec2 fp_lo{uv_lo.x - 1.5 * vx, uv_lo.y - 1.5 * vx};
    const Vec2 fp_hi{uv_hi.x + 1.5 * vx, uv_hi.y + 1.5 * vx};
    const double pad = 2.0 * vx;
    double x0 = fp_lo.x - pad, x1 = fp_hi.x + pad;
    double y0 = fp_lo.y - pad, y1 = fp_hi.y + pad;
    double z0 = -params.fold_amplitude_mm - params.gm_thickness_mm / 2.0 - pad;
    double z1 = params.fold_amplitude_mm + params.gm_thickness_mm / 2.0 + pad;
    std::array<int, 3> dims = {static_cast<int>(std::ceil((x1 - x0) / vx)) + 1,
                               static_cast<int>(std::ceil((y1 - y0) / vx)) + 1,
                               static_cast<int>(std::ceil((z1 - z0) / vx)) + 1};
    Vec3 origin{x0, y0, z0};
    Vec3 spacing{vx, vx, vx};

    std::vector<std::uint8_t> mask(
        static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
#pragma omp parallel for collapse(2) schedule(static)
    for (int k = 0; k < dims[2]; ++k) {
        for (int j = 0; j < dims[1]; ++j) {
            for (int i = 0; i < dims[0]; ++i) {
                double x = origin.x + i * vx;
                double y = origin.y + j * vx;
                double z = origin.z + k * vx;
                if (x < fp_lo.x || x > fp_hi.x || y < fp_lo.y || y > fp_hi.y) continue;
                double h = synth_sheet_embed({x, y}, params).z;
                if (std::abs(z - h) <= params.gm_thickness_mm / 2.0)
                    mask[(static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i] = 1;
            }
        }
    }

    ScalarField3D sdf = build_sdf(mask, dims, origin, spacing);
    return AnatomyModel(std::move(sites), std::move(sdf), std::move(vessels),
                        params.visual_extent);
}

// --- anatomy directory ---------------------------------------------------------

void save_anatomy_dir(const AnatomyModel& anatomy, const std::string& dir) {
    save_retinotopy(anatomy.sites(), dir + "/retinotopy.csv");
    save_vessels(anatomy.vessels().segments, dir + "/vessels.csv");

    const ScalarField3D& sdf = anatomy.gm_sdf();
    std::vector<std::uint8_t> mask(sdf.values.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = sdf.values[i] <= 0.0 ? 1 : 0;
    save_mask(mask, sdf.dims, sdf.origin, sdf.spacing, dir + "/gm_mask.raw");

    std::ofstream meta(dir + "/anatomy.meta");
    if (!meta) throw IoError("cannot open for writing: " + dir + "/anatomy.meta");
    meta << "extent_deg " << fmt_double(anatomy.visual_extent().half_w) << ' '
         << fmt_double(anatomy.visual_extent().half_h) << '\n';
    meta << "vessel_radius_mm " << fmt_double(anatomy.vessels().radius) << '\n';
}

AnatomyModel load_anatomy_dir(const std::string& dir, double mesh_voxel_mm) {
    std::vector<RetinotopySite> sites = load_retinotopy(dir + "/retinotopy.csv");
    VesselSet vessels;
    vessels.segments = load_vessels(dir + "/vessels.csv");

    Extent extent;
    std::string meta = read_file(dir + "/anatomy.meta");
    for (std::string_view line : split(meta, '\n')) {
        line = strip_cr(line);
        auto tok = split(line, ' ');
        if (tok.empty()) continue;
        if (tok[0] == "extent_deg" && tok.size() == 3) {
            if (!parse_double(tok[1], extent.half_w) || !parse_double(tok[2], extent.half_h))
                throw FormatError(dir + "/anatomy.meta: bad extent_deg");
        } else if (tok[0] == "vessel_radius_mm" && tok.size() == 2) {
            if (!parse_double(tok[1], vessels.radius))
                throw FormatError(dir + "/anatomy.meta: bad vessel_radius_mm");
        }
    }

    MaskVolume vol;
    if (std::ifstream(dir + "/gm_mask.raw").good()) {
        vol = load_mask(dir + "/gm_mask.raw");
    } else if (std::ifstream(dir + "/gm_mesh.ply").good()) {
        vol = voxelize_ply(dir + "/gm_mesh.ply", mesh_voxel_mm);
    } else {
        throw IoError(dir + ": neither gm_mask.raw nor gm_mesh.ply found");
    }
    ScalarField3D sdf = build_sdf(vol.mask, vol.dims, vol.origin, vol.spacing);
    return AnatomyModel(std::move(sites), std::move(sdf), std::move(vessels), extent);
}

// --- ascii PLY subset -----------------------------------------------------------

namespace {

struct PlyMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
};

PlyMesh parse_ply(const std::string& path) {
    std::string content = read_file(path);
    auto all = split(content, '\n');
    std::size_t li = 0;
    auto next_line = [&]() -> std::string_view {
        while (li < all.size()) {
            std::string_view l = strip_cr(all[li++]);
            if (!l.empty()) return l;
        }
        throw ParseError(path + ": unexpected end of file");
    };

    if (next_line() != "ply") throw ParseError(path + ": not a PLY file");
    if (next_line() != "format ascii 1.0")
        throw FormatError(path + ": only ascii 1.0 PLY is supported");

    long long n_vertices = -1, n_faces = -1;
    while (true) {
        std::string_view l = next_line();
        auto tok = split(l, ' ');
        if (tok[0] == "comment") continue;
        if (tok[0] == "element" && tok.size() == 3) {
            long long n;
            if (!parse_int(tok[2], n)) throw ParseError(path + ": bad element count");
            if (tok[1] == "vertex") n_vertices = n;
            else if (tok[1] == "face") n_faces = n;
        } else if (tok[0] == "property") {
            continue;
        } else if (tok[0] == "end_header") {
            break;
        }
    }
    if (n_vertices <= 0 || n_faces <= 0)
        throw FormatError(path + ": missing vertex or face elements");

    PlyMesh mesh;
    mesh.vertices.reserve(n_vertices);
    for (long long i = 0; i < n_vertices; ++i) {
        auto tok = split(next_line(), ' ');
        double v[3];
        if (tok.size() < 3 || !parse_double(tok[0], v[0]) || !parse_double(tok[1], v[1]) ||
            !parse_double(tok[2], v[2]))
            throw ParseError(path + ": malformed vertex row");
        mesh.vertices.push_back({v[0], v[1], v[2]});
    }
    for (long long i = 0; i < n_faces; ++i) {
        auto tok = split(next_line(), ' ');
        long long cnt;
        if (tok.empty() || !parse_int(tok[0], cnt) || static_cast<long long>(tok.size()) < cnt + 1)
            throw ParseError(path + ": malformed face row");
        std::vector<int> ids(cnt);
        for (long long f = 0; f < cnt; ++f) {
            long long id;
            if (!parse_int(tok[f + 1], id) || id < 0 || id >= n_vertices)
                throw ParseError(path + ": face index out of range");
            ids[f] = static_cast<int>(id);
        }
        // fan-triangulate polygons
        for (std::size_t f = 1; f + 1 < ids.size(); ++f)
            mesh.triangles.push_back({ids[0], ids[f], ids[f + 1]});
    }
    return mesh;
}

}  // namespace

MaskVolume voxelize_ply(const std::string& path, double voxel_mm) {
    if (voxel_mm <= 0) throw std::invalid_argument("voxelize_ply: voxel size must be positive");
    PlyMesh mesh = parse_ply(path);

    Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
    for (const Vec3& v : mesh.vertices) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], v[a]);
            hi[a] = std::max(hi[a], v[a]);
        }
    }
    // one empty voxel layer around the mesh so the outside flood fill connects
    Vec3 origin = lo - Vec3{2 * voxel_mm, 2 * voxel_mm, 2 * voxel_mm};
    MaskVolume vol;
    vol.origin = origin;
    vol.spacing = {voxel_mm, voxel_mm, voxel_mm};
    for (int a = 0; a < 3; ++a)
        vol.dims[a] = static_cast<int>(std::ceil((hi[a] - origin[a]) / voxel_mm)) + 3;
    const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
    std::vector<std::uint8_t> surface(static_cast<std::size_t>(nx) * ny * nz, 0);
    auto idx = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(k) * ny + j) * nx + i;
    };

    // conservative surface rasterization: mark voxels whose center lies
    // within half a diagonal of a triangle plane point (sampled barycentric)
    for (const auto& tri : mesh.triangles) {
        const Vec3& a = mesh.vertices[tri[0]];
        const Vec3& b = mesh.vertices[tri[1]];
        const Vec3& c = mesh.vertices[tri[2]];
        double max_edge = std::max({(b - a).norm(), (c - a).norm(), (c - b).norm()});
        int steps = std::max(2, static_cast<int>(std::ceil(max_edge / (voxel_mm * 0.5))) + 1);
        for (int s = 0; s <= steps; ++s) {
            for (int t = 0; t <= steps - s; ++t) {
                double u = static_cast<double>(s) / steps;
                double v = static_cast<double>(t) / steps;
                Vec3 p = a + (b - a) * u + (c - a) * v;
                int i = static_cast<int>(std::floor((p.x - origin.x) / voxel_mm + 0.5));
                int j = static_cast<int>(std::floor((p.y - origin.y) / voxel_mm + 0.5));
                int k = static_cast<int>(std::floor((p.z - origin.z) / voxel_mm + 0.5));
                if (i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz)
                    surface[idx(i, j, k)] = 1;
            }
        }
    }

    // flood fill from the grid boundary; unreached non-surface voxels are inside
    std::vector<std::uint8_t> outside(surface.size(), 0);
    std::vector<std::array<int, 3>> stack;
    auto push = [&](int i, int j, int k) {
        std::size_t c = idx(i, j, k);
        if (!outside[c] && !surface[c]) {
            outside[c] = 1;
            stack.push_back({i, j, k});
        }
    };
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j) {
            push(0, j, k);
            push(nx - 1, j, k);
        }
    for (int k = 0; k < nz; ++k)
        for (int i = 0; i < nx; ++i) {
            push(i, 0, k);
            push(i, ny - 1, k);
        }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            push(i, j, 0);
            push(i, j, nz - 1);
        }
    while (!stack.empty()) {
        auto [i, j, k] = stack.back();
        stack.pop_back();
        if (i > 0) push(i - 1, j, k);
        if (i + 1 < nx) push(i + 1, j, k);
        if (j > 0) push(i, j - 1, k);
        if (j + 1 < ny) push(i, j + 1, k);
        if (k > 0) push(i, j, k - 1);
        if (k + 1 < nz) push(i, j, k + 1);
    }

    vol.mask.resize(surface.size());
    for (std::size_t c = 0; c < surface.size(); ++c) vol.mask[c] = outside[c] ? 0 : 1;
    return vol;
}

}  // namespace cortiplan
