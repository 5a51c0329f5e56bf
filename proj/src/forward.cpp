#include "cortiplan/forward.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "cortiplan/errors.hpp"

namespace cortiplan {

VisualMapping map_to_visual_field(const AnatomyModel& anatomy, const Vec3& p, int k) {
    if (k < 1) throw std::invalid_argument("map_to_visual_field: k must be >= 1");
    auto neighbors = anatomy.nearest_sites(p, k);

    // zero-distance limit: return the coincident site's visual position
    if (neighbors[0].second < 1e-9) {
        VisualMapping out;
        out.s = anatomy.site_by_id(neighbors[0].first).visual_pos;
        return out;
    }

    double denom = 0.0;
    Vec2 num;
    for (auto [id, dist] : neighbors) {
        double w = 1.0 / dist;
        num += anatomy.site_by_id(id).visual_pos * w;
        denom += w;
    }
    VisualMapping out;
    out.s = num / denom;

    // ds/dp = sum_j (v_j - s) outer dw_j/dp / sum_j w_j,
    // dw_j/dp = -(p - c_j)/|p - c_j|^3
    for (auto [id, dist] : neighbors) {
        const RetinotopySite& site = anatomy.site_by_id(id);
        Vec3 diff = p - site.cortical_pos;
        double inv_d3 = 1.0 / (dist * dist * dist);
        Vec2 dv = site.visual_pos - out.s;
        for (int c = 0; c < 3; ++c) {
            double dw = -diff[c] * inv_d3;
            out.jacobian.m[0][c] += dv.x * dw / denom;
            out.jacobian.m[1][c] += dv.y * dw / denom;
        }
    }
    return out;
}

AmplitudeSample sample_amplitude(const TargetImage& target, const Vec2& s) {
    const int W = target.width, H = target.height;
    const double hw = target.extent.half_w, hh = target.extent.half_h;

    // continuous pixel coordinates of s (u along columns, v along rows)
    double u = (s.x + hw) / (2.0 * hw) * W - 0.5;
    double v = (hh - s.y) / (2.0 * hh) * H - 0.5;
    bool clamp_u = u <= 0.0 || u >= W - 1 || W == 1;
    bool clamp_v = v <= 0.0 || v >= H - 1 || H == 1;
    u = std::clamp(u, 0.0, static_cast<double>(W - 1));
    v = std::clamp(v, 0.0, static_cast<double>(H - 1));

    int j0 = std::min(static_cast<int>(u), std::max(W - 2, 0));
    int i0 = std::min(static_cast<int>(v), std::max(H - 2, 0));
    int j1 = std::min(j0 + 1, W - 1);
    int i1 = std::min(i0 + 1, H - 1);
    double fu = u - j0, fv = v - i0;

    double t00 = target.at(i0, j0), t01 = target.at(i0, j1);
    double t10 = target.at(i1, j0), t11 = target.at(i1, j1);
    double top = t00 + (t01 - t00) * fu;
    double bot = t10 + (t11 - t10) * fu;

    AmplitudeSample out;
    out.a = top + (bot - top) * fv;
    double da_du = (t01 - t00) * (1 - fv) + (t11 - t10) * fv;
    double da_dv = bot - top;
    // du/dx = W/(2hw), dv/dy = -H/(2hh)
    out.gradient.x = clamp_u ? 0.0 : da_du * W / (2.0 * hw);
    out.gradient.y = clamp_v ? 0.0 : -da_dv * H / (2.0 * hh);
    return out;
}

double local_magnification(const AnatomyModel& anatomy, const Vec3& p, int k) {
    if (k < 2) throw std::invalid_argument("local_magnification: k must be >= 2");
    Vec2 s = map_to_visual_field(anatomy, p, k).s;
    auto neighbors = anatomy.nearest_sites(p, k);
    double acc = 0.0;
    for (auto [id, dist] : neighbors) {
        const RetinotopySite& site = anatomy.site_by_id(id);
        acc += (site.visual_pos - s).norm() / std::max(dist, 1e-6);
    }
    return acc / neighbors.size();
}

WeightMap foveal_weights(int height, int width, const Extent& extent, double beta,
                         double sigma_f) {
    if (beta < 0) throw std::invalid_argument("foveal_weights: beta must be >= 0");
    if (sigma_f <= 0) throw std::invalid_argument("foveal_weights: sigma_f must be > 0");
    WeightMap w(width, height, extent);
    double inv = 1.0 / (2.0 * sigma_f * sigma_f);
    for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
            Vec2 c = w.pixel_center(i, j);
            w.at(i, j) = 1.0 + beta * std::exp(-(c.x * c.x + c.y * c.y) * inv);
        }
    }
    return w;
}

double resolve_foveal_sigma(const ObjectiveConfig& config, const Extent& extent) {
    return config.foveal_sigma_deg > 0 ? config.foveal_sigma_deg : 0.25 * extent.half_w;
}

std::vector<ElectrodeState> prepare_electrodes(const std::vector<Vec3>& positions,
                                               const AnatomyModel& anatomy,
                                               const TargetImage& target,
                                               const ObjectiveConfig& config) {
    std::vector<ElectrodeState> states(positions.size());
    const bool cortical = config.spread.mode == SpreadModel::Mode::Cortical;
    const int mag_k = std::max(2, config.knn_k);
    std::exception_ptr error;  // exceptions may not cross the parallel region
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(positions.size()); ++e) {
        try {
            ElectrodeState& st = states[e];
            VisualMapping m = map_to_visual_field(anatomy, positions[e], config.knn_k);
            st.s = m.s;
            st.jacobian = m.jacobian;
            AmplitudeSample amp = sample_amplitude(target, m.s);
            st.amplitude = amp.a;
            st.amp_gradient = amp.gradient;
            if (cortical) {
                double mag = local_magnification(anatomy, positions[e], mag_k);
                st.sigma = config.spread.rho * 1e-3 * mag;  // um -> mm, times deg/mm
            } else {
                st.sigma = config.spread.rho;
            }
            st.sigma = std::max(st.sigma, 1e-9);
        } catch (...) {
#pragma omp critical(cortiplan_prepare_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return states;
}

namespace {

void accumulate_percept(PerceptImage& percept, const std::vector<ElectrodeState>& states) {
    const int W = percept.width, H = percept.height;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            Vec2 c = percept.pixel_center(i, j);
            double acc = 0.0;
            for (const ElectrodeState& st : states) {
                double dx = c.x - st.s.x;
                double dy = c.y - st.s.y;
                acc += st.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * st.sigma * st.sigma));
            }
            percept.at(i, j) = acc;
        }
    }
}

}  // namespace

PerceptImage render_percept_positions(const std::vector<Vec3>& positions,
                                      const AnatomyModel& anatomy, const TargetImage& target,
                                      const ObjectiveConfig& config) {
    if (positions.empty()) throw std::invalid_argument("render_percept: zero electrodes");
    auto states = prepare_electrodes(positions, anatomy, target, config);
    PerceptImage percept(target.width, target.height, target.extent);
    accumulate_percept(percept, states);
    return percept;
}

PerceptImage render_percept(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                            const TargetImage& target, const ObjectiveConfig& config) {
    return render_percept_positions(derive_positions(layout), anatomy, target, config);
}

double percept_loss(const PerceptImage& percept, const TargetImage& target, const WeightMap& w) {
    if (!percept.same_shape(target) || !percept.same_shape(w))
        throw std::invalid_argument("percept_loss: shape mismatch");
    const int H = percept.height, W = percept.width;
    std::vector<double> row_sums(H, 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < H; ++i) {
        double acc = 0.0;
        for (int j = 0; j < W; ++j) {
            double diff = percept.at(i, j) - target.at(i, j);
            acc += w.at(i, j) * diff * diff;
        }
        row_sums[i] = acc;
    }
    // fixed-order reduction keeps the result independent of thread count
    double total = 0.0;
    for (int i = 0; i < H; ++i) total += row_sums[i];
    return total;
}

std::vector<Vec3> loss_gradient_positions(const std::vector<Vec3>& positions,
                                          const AnatomyModel& anatomy, const TargetImage& target,
                                          const ObjectiveConfig& config, double* loss_out) {
    if (positions.empty()) throw std::invalid_argument("loss_gradient: zero electrodes");
    auto states = prepare_electrodes(positions, anatomy, target, config);
    PerceptImage percept(target.width, target.height, target.extent);
    accumulate_percept(percept, states);

    WeightMap w = foveal_weights(target.height, target.width, target.extent, config.foveal_beta,
                                 resolve_foveal_sigma(config, target.extent));
    if (loss_out) *loss_out = percept_loss(percept, target, w);

    const int H = target.height, W = target.width;
    std::vector<Vec3> grads(positions.size());
    // residual factor R = 2*w*(P-T); dL/ds_e = sum_px R * a_e * G_e * (c-s)/sigma^2,
    // dL/da_e = sum_px R * G_e; both pulled back through the retinotopic
    // jacobian and the amplitude-sampling gradient
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(states.size()); ++e) {
        const ElectrodeState& st = states[e];
        double inv_s2 = 1.0 / (st.sigma * st.sigma);
        double g_a = 0.0;
        Vec2 g_s;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                Vec2 c = target.pixel_center(i, j);
                double dx = c.x - st.s.x;
                double dy = c.y - st.s.y;
                double gauss = std::exp(-(dx * dx + dy * dy) * 0.5 * inv_s2);
                double r = 2.0 * w.at(i, j) * (percept.at(i, j) - target.at(i, j));
                g_a += r * gauss;
                double k = r * st.amplitude * gauss * inv_s2;
                g_s.x += k * dx;
                g_s.y += k * dy;
            }
        }
        Vec2 pull{g_s.x + g_a * st.amp_gradient.x, g_s.y + g_a * st.amp_gradient.y};
        grads[e] = st.jacobian.apply_transposed(pull);
    }
    return grads;
}

std::vector<Vec3> loss_gradient(const ElectrodeLayout& layout, const AnatomyModel& anatomy,
                                const TargetImage& target, const ObjectiveConfig& config) {
    return loss_gradient_positions(derive_positions(layout), anatomy, target, config);
}

}  // namespace cortiplan
