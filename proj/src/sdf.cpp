#include <algorithm>
#include <cmath>
#include <limits>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/errors.hpp"

namespace cortiplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D lower envelope of parabolas f[j] + (s*(i-j))^2 (Felzenszwalb &
// Huttenlocher), exact for squared Euclidean distances.
void dt1d(const double* f, double* out, int n, double s, int* v, double* zbuf) {
    int k = 0;
    v[0] = 0;
    zbuf[0] = -kInf;
    zbuf[1] = kInf;
    double s2 = s * s;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        while (true) {
            if (f[v[k]] == kInf) {
                // previous vertex never contributes
                if (k == 0) {
                    v[0] = q;
                    zbuf[0] = -kInf;
                    zbuf[1] = kInf;
                    break;
                }
                --k;
                continue;
            }
            double inter = (f[q] + s2 * q * q - f[v[k]] - s2 * v[k] * v[k]) /
                           (2.0 * s2 * (q - v[k]));
            if (inter <= zbuf[k]) {
                --k;
            } else {
                ++k;
                v[k] = q;
                zbuf[k] = inter;
                zbuf[k + 1] = kInf;
                break;
            }
        }
    }
    if (f[v[0]] == kInf) {
        for (int q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (zbuf[k + 1] < q) ++k;
        double d = s * (q - v[k]);
        out[q] = d * d + f[v[k]];
    }
}

}  // namespace

ScalarField3D build_sdf(const std::vector<std::uint8_t>& mask, const std::array<int, 3>& dims,
                        const Vec3& origin, const Vec3& spacing) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
    if (nx <= 0 || ny <= 0 || nz <= 0 || mask.size() != n)
        throw std::invalid_argument("build_sdf: mask size does not match dims");
    if (spacing.x <= 0 || spacing.y <= 0 || spacing.z <= 0)
        throw std::invalid_argument("build_sdf: spacing must be positive");

    bool any_true = false, any_false = false;
    for (std::size_t i = 0; i < n; ++i) (mask[i] ? any_true : any_false) = true;
    if (!any_true || !any_false)
        throw std::invalid_argument("build_sdf: degenerate mask (all inside or all outside)");

    ScalarField3D field;
    field.origin = origin;
    field.spacing = spacing;
    field.dims = dims;
    field.values.assign(n, kInf);

    auto idx = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(k) * ny + j) * nx + i;
    };

    // Seed the boundary: mask voxels with a non-mask 6-neighbor carry
    // distance zero, so the zero level set sits on the outermost gray-matter
    // nodes.
    std::vector<double>& d2 = field.values;
#pragma omp parallel for collapse(2) schedule(static)
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                std::size_t c = idx(i, j, k);
                if (!mask[c]) continue;
                bool boundary = (i > 0 && !mask[idx(i - 1, j, k)]) ||
                                (i + 1 < nx && !mask[idx(i + 1, j, k)]) ||
                                (j > 0 && !mask[idx(i, j - 1, k)]) ||
                                (j + 1 < ny && !mask[idx(i, j + 1, k)]) ||
                                (k > 0 && !mask[idx(i, j, k - 1)]) ||
                                (k + 1 < nz && !mask[idx(i, j, k + 1)]);
                if (boundary) d2[c] = 0.0;
            }
        }
    }

    // Separable exact squared-EDT passes: x, then y, then z.
#pragma omp parallel
    {
        int maxn = std::max({nx, ny, nz});
        std::vector<double> f(maxn), out(maxn), zbuf(maxn + 1);
        std::vector<int> v(maxn);

#pragma omp for collapse(2) schedule(static)
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j) {
                std::size_t base = idx(0, j, k);
                for (int i = 0; i < nx; ++i) f[i] = d2[base + i];
                dt1d(f.data(), out.data(), nx, spacing.x, v.data(), zbuf.data());
                for (int i = 0; i < nx; ++i) d2[base + i] = out[i];
            }

#pragma omp for collapse(2) schedule(static)
        for (int k = 0; k < nz; ++k)
            for (int i = 0; i < nx; ++i) {
                for (int j = 0; j < ny; ++j) f[j] = d2[idx(i, j, k)];
                dt1d(f.data(), out.data(), ny, spacing.y, v.data(), zbuf.data());
                for (int j = 0; j < ny; ++j) d2[idx(i, j, k)] = out[j];
            }

#pragma omp for collapse(2) schedule(static)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                for (int k = 0; k < nz; ++k) f[k] = d2[idx(i, j, k)];
                dt1d(f.data(), out.data(), nz, spacing.z, v.data(), zbuf.data());
                for (int k = 0; k < nz; ++k) d2[idx(i, j, k)] = out[k];
            }
    }

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n); ++c) {
        double d = std::sqrt(d2[c]);
        d2[c] = mask[c] ? (d == 0.0 ? 0.0 : -d) : d;
    }
    return field;
}

SdfSample sample_sdf(const ScalarField3D& field, const Vec3& p) {
    const int nx = field.dims[0], ny = field.dims[1], nz = field.dims[2];
    // continuous grid coordinates
    double gx = (p.x - field.origin.x) / field.spacing.x;
    double gy = (p.y - field.origin.y) / field.spacing.y;
    double gz = (p.z - field.origin.z) / field.spacing.z;

    bool clx = gx <= 0.0 || gx >= nx - 1;
    bool cly = gy <= 0.0 || gy >= ny - 1;
    bool clz = gz <= 0.0 || gz >= nz - 1;
    gx = std::clamp(gx, 0.0, static_cast<double>(nx - 1));
    gy = std::clamp(gy, 0.0, static_cast<double>(ny - 1));
    gz = std::clamp(gz, 0.0, static_cast<double>(nz - 1));

    int i0 = std::min(static_cast<int>(gx), std::max(nx - 2, 0));
    int j0 = std::min(static_cast<int>(gy), std::max(ny - 2, 0));
    int k0 = std::min(static_cast<int>(gz), std::max(nz - 2, 0));
    double fx = gx - i0, fy = gy - j0, fz = gz - k0;
    int i1 = std::min(i0 + 1, nx - 1);
    int j1 = std::min(j0 + 1, ny - 1);
    int k1 = std::min(k0 + 1, nz - 1);

    auto v = [&](int i, int j, int k) { return field.values[field.index(i, j, k)]; };
    double c000 = v(i0, j0, k0), c100 = v(i1, j0, k0);
    double c010 = v(i0, j1, k0), c110 = v(i1, j1, k0);
    double c001 = v(i0, j0, k1), c101 = v(i1, j0, k1);
    double c011 = v(i0, j1, k1), c111 = v(i1, j1, k1);

    double c00 = c000 + (c100 - c000) * fx;
    double c10 = c010 + (c110 - c010) * fx;
    double c01 = c001 + (c101 - c001) * fx;
    double c11 = c011 + (c111 - c011) * fx;
    double c0 = c00 + (c10 - c00) * fy;
    double c1 = c01 + (c11 - c01) * fy;

    SdfSample s;
    s.value = c0 + (c1 - c0) * fz;

    // analytic derivative of the trilinear form; zero along clamped axes
    double dx = (c100 - c000) * (1 - fy) * (1 - fz) + (c110 - c010) * fy * (1 - fz) +
                (c101 - c001) * (1 - fy) * fz + (c111 - c011) * fy * fz;
    double dy = (c10 - c00) * (1 - fz) + (c11 - c01) * fz;
    double dz = c1 - c0;
    s.gradient.x = clx ? 0.0 : dx / field.spacing.x;
    s.gradient.y = cly ? 0.0 : dy / field.spacing.y;
    s.gradient.z = clz ? 0.0 : dz / field.spacing.z;
    return s;
}

}  // namespace cortiplan
