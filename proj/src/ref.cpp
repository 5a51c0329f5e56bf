#include "cortiplan/ref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cortiplan/errors.hpp"

namespace cortiplan::ref {

std::vector<std::pair<int, double>> nearest_sites_scan(const std::vector<RetinotopySite>& sites,
                                                       const Vec3& p, int k) {
    if (k <= 0 || k > static_cast<int>(sites.size()))
        throw std::invalid_argument("nearest_sites_scan: bad k");
    std::vector<std::pair<double, int>> all;  // (d2, id)
    all.reserve(sites.size());
    for (const RetinotopySite& s : sites) all.push_back({(p - s.cortical_pos).norm2(), s.id});
    std::sort(all.begin(), all.end());
    std::vector<std::pair<int, double>> out(k);
    for (int i = 0; i < k; ++i) out[i] = {all[i].second, std::sqrt(all[i].first)};
    return out;
}

double vessel_distance_scan(const VesselSet& vessels, const Vec3& p, int* segment_id) {
    double best = std::numeric_limits<double>::infinity();
    int best_id = -1;
    for (std::size_t i = 0; i < vessels.segments.size(); ++i) {
        const VesselSegment& s = vessels.segments[i];
        double d = point_segment_distance(p, s.a, s.b);
        if (d < best) {
            best = d;
            best_id = static_cast<int>(i);
        }
    }
    if (segment_id) *segment_id = best_id;
    return best - vessels.radius;
}

Vec2 map_to_visual_field_scan(const std::vector<RetinotopySite>& sites, const Vec3& p, int k) {
    auto nn = nearest_sites_scan(sites, p, k);
    if (nn[0].second < 1e-9) {
        for (const RetinotopySite& s : sites)
            if (s.id == nn[0].first) return s.visual_pos;
    }
    double num_x = 0.0, num_y = 0.0, den = 0.0;
    for (auto [id, dist] : nn) {
        for (const RetinotopySite& s : sites) {
            if (s.id != id) continue;
            double w = 1.0 / dist;
            num_x += w * s.visual_pos.x;
            num_y += w * s.visual_pos.y;
            den += w;
        }
    }
    return {num_x / den, num_y / den};
}

PerceptImage render_percept_naive(const std::vector<Vec3>& positions,
                                  const std::vector<RetinotopySite>& sites,
                                  const TargetImage& target, const ObjectiveConfig& config) {
    const int W = target.width, H = target.height;
    const double hw = target.extent.half_w, hh = target.extent.half_h;

    // per-electrode quantities, recomputed from the definitions
    struct Phosphene {
        double sx, sy, a, sigma;
    };
    std::vector<Phosphene> ph;
    for (const Vec3& p : positions) {
        Vec2 s = map_to_visual_field_scan(sites, p, config.knn_k);

        // bilinear with border clamping
        double u = (s.x + hw) / (2.0 * hw) * W - 0.5;
        double v = (hh - s.y) / (2.0 * hh) * H - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(W - 1));
        v = std::clamp(v, 0.0, static_cast<double>(H - 1));
        int j0 = std::min(static_cast<int>(u), std::max(W - 2, 0));
        int i0 = std::min(static_cast<int>(v), std::max(H - 2, 0));
        int j1 = std::min(j0 + 1, W - 1);
        int i1 = std::min(i0 + 1, H - 1);
        double fu = u - j0, fv = v - i0;
        double a = target.at(i0, j0) * (1 - fu) * (1 - fv) + target.at(i0, j1) * fu * (1 - fv) +
                   target.at(i1, j0) * (1 - fu) * fv + target.at(i1, j1) * fu * fv;

        double sigma;
        if (config.spread.mode == SpreadModel::Mode::Cortical) {
            auto nn = nearest_sites_scan(sites, p, std::max(2, config.knn_k));
            double acc = 0.0;
            for (auto [id, dist] : nn) {
                for (const RetinotopySite& site : sites) {
                    if (site.id != id) continue;
                    acc += std::hypot(site.visual_pos.x - s.x, site.visual_pos.y - s.y) /
                           std::max(dist, 1e-6);
                }
            }
            double mag = acc / nn.size();
            sigma = config.spread.rho * 1e-3 * mag;
        } else {
            sigma = config.spread.rho;
        }
        ph.push_back({s.x, s.y, a, std::max(sigma, 1e-9)});
    }

    PerceptImage percept(W, H, target.extent);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double x = (j + 0.5) / W * 2.0 * hw - hw;
            double y = hh - (i + 0.5) / H * 2.0 * hh;
            double acc = 0.0;
            for (const Phosphene& e : ph)
                acc += e.a * std::exp(-((x - e.sx) * (x - e.sx) + (y - e.sy) * (y - e.sy)) /
                                      (2.0 * e.sigma * e.sigma));
            percept.at(i, j) = acc;
        }
    }
    return percept;
}

double percept_loss_serial(const PerceptImage& percept, const TargetImage& target,
                           const WeightMap& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < percept.values.size(); ++i) {
        double d = percept.values[i] - target.values[i];
        acc += w.values[i] * d * d;
    }
    return acc;
}

double ssim_serial(const Image& a, const Image& b) {
    const int win = 11;
    const double sigma = 1.5;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    std::vector<double> wgt(win * win);
    double wsum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            double dy = i - (win - 1) / 2.0, dx = j - (win - 1) / 2.0;
            wgt[i * win + j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            wsum += wgt[i * win + j];
        }
    for (double& v : wgt) v /= wsum;

    double total = 0.0;
    int count = 0;
    for (int i = 0; i + win <= a.height; ++i) {
        for (int j = 0; j + win <= a.width; ++j) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int wi = 0; wi < win; ++wi)
                for (int wj = 0; wj < win; ++wj) {
                    double g = wgt[wi * win + wj];
                    double va = a.at(i + wi, j + wj), vb = b.at(i + wi, j + wj);
                    mu_a += g * va;
                    mu_b += g * vb;
                    aa += g * va * va;
                    bb += g * vb * vb;
                    ab += g * va * vb;
                }
            double num = (2 * mu_a * mu_b + c1) * (2 * (ab - mu_a * mu_b) + c2);
            double den = (mu_a * mu_a + mu_b * mu_b + c1) *
                         ((aa - mu_a * mu_a) + (bb - mu_b * mu_b) + c2);
            total += num / den;
            ++count;
        }
    }
    return total / count;
}

namespace {

void dt1d_serial(const double* f, double* out, int n, double s, int* v, double* zbuf) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    zbuf[0] = -kInf;
    zbuf[1] = kInf;
    double s2 = s * s;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        while (true) {
            if (f[v[k]] == kInf) {
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

ScalarField3D build_sdf_serial(const std::vector<std::uint8_t>& mask,
                               const std::array<int, 3>& dims, const Vec3& origin,
                               const Vec3& spacing) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
    if (mask.size() != n) throw std::invalid_argument("build_sdf_serial: size mismatch");

    ScalarField3D field;
    field.origin = origin;
    field.spacing = spacing;
    field.dims = dims;
    field.values.assign(n, kInf);
    auto idx = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(k) * ny + j) * nx + i;
    };
    std::vector<double>& d2 = field.values;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
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

    int maxn = std::max({nx, ny, nz});
    std::vector<double> f(maxn), out(maxn), zbuf(maxn + 1);
    std::vector<int> v(maxn);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j) {
            std::size_t base = idx(0, j, k);
            for (int i = 0; i < nx; ++i) f[i] = d2[base + i];
            dt1d_serial(f.data(), out.data(), nx, spacing.x, v.data(), zbuf.data());
            for (int i = 0; i < nx; ++i) d2[base + i] = out[i];
        }
    for (int k = 0; k < nz; ++k)
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < ny; ++j) f[j] = d2[idx(i, j, k)];
            dt1d_serial(f.data(), out.data(), ny, spacing.y, v.data(), zbuf.data());
            for (int j = 0; j < ny; ++j) d2[idx(i, j, k)] = out[j];
        }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            for (int k = 0; k < nz; ++k) f[k] = d2[idx(i, j, k)];
            dt1d_serial(f.data(), out.data(), nz, spacing.z, v.data(), zbuf.data());
            for (int k = 0; k < nz; ++k) d2[idx(i, j, k)] = out[k];
        }

    for (std::size_t c = 0; c < n; ++c) {
        double d = std::sqrt(d2[c]);
        d2[c] = mask[c] ? (d == 0.0 ? 0.0 : -d) : d;
    }
    return field;
}

}  // namespace cortiplan::ref
