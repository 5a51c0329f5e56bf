// Kernel benchmark: OpenMP-parallel implementations against the serial
// reference transcriptions in cortiplan::ref. Also cross-checks the outputs
// so a speedup never hides a divergence.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cortiplan/anatomy.hpp"
#include "cortiplan/eval.hpp"
#include "cortiplan/forward.hpp"
#include "cortiplan/optimize.hpp"
#include "cortiplan/ref.hpp"
#include "cortiplan/rng.hpp"

using namespace cortiplan;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        double t0 = now_ms();
        f();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

void report(const char* name, double parallel_ms, double serial_ms, double max_abs_diff) {
    std::printf("%-24s %10.3f ms %10.3f ms %8.2fx   max|diff| %.3g\n", name, parallel_ms,
                serial_ms, serial_ms / parallel_ms, max_abs_diff);
}

}  // namespace

int main(int argc, char** argv) {
    int scale = argc > 1 ? std::atoi(argv[1]) : 1;
    if (scale < 1) scale = 1;

#ifdef _OPENMP
    std::printf("OpenMP: %d threads\n", omp_get_max_threads());
#else
    std::printf("OpenMP: disabled at build time\n");
#endif

    SynthParams params;
    params.site_count = 2000;
    params.vessel_count = 8;
    params.voxel_mm = 0.75;
    AnatomyModel anatomy = synth_anatomy(params, 0);

    Rng rng(1);
    Extent ext = anatomy.visual_extent();
    const int raster = 56 * scale;
    TargetImage target(raster, raster, ext);
    for (double& v : target.values) v = rng.uniform();

    std::vector<Vec3> positions;
    ElectrodeLayout layout = init_layout(anatomy, 256, 3);
    positions = layout.free;

    ObjectiveConfig cfg;
    cfg.spread.mode = SpreadModel::Mode::Cortical;
    cfg.spread.rho = 1000;
    cfg.knn_k = 5;

    std::printf("%-24s %13s %13s %9s\n", "kernel", "parallel", "serial", "speedup");

    // render_percept: indexed kNN + parallel pixels vs naive double loop
    PerceptImage par_percept, ser_percept;
    double t_par = time_best_of(3, [&] {
        par_percept = render_percept_positions(positions, anatomy, target, cfg);
    });
    double t_ser = time_best_of(3, [&] {
        ser_percept = ref::render_percept_naive(positions, anatomy.sites(), target, cfg);
    });
    double diff = 0.0;
    for (std::size_t i = 0; i < par_percept.values.size(); ++i)
        diff = std::max(diff, std::abs(par_percept.values[i] - ser_percept.values[i]));
    report("render_percept", t_par, t_ser, diff);

    // percept_loss reduction
    WeightMap w = foveal_weights(raster, raster, ext, 4.0, 0.25 * ext.half_w);
    double l_par = 0, l_ser = 0;
    t_par = time_best_of(5, [&] { l_par = percept_loss(par_percept, target, w); });
    t_ser = time_best_of(5, [&] { l_ser = ref::percept_loss_serial(par_percept, target, w); });
    report("percept_loss", t_par, t_ser, std::abs(l_par - l_ser));

    // signed distance transform
    const int g = 96 * scale;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(g) * g * g, 0);
    for (int k = 0; k < g; ++k)
        for (int j = 0; j < g; ++j)
            for (int i = 0; i < g; ++i) {
                double dx = i - g / 2.0, dy = j - g / 2.0, dz = k - g / 2.0;
                if (dx * dx + dy * dy + dz * dz < (g / 3.0) * (g / 3.0))
                    mask[(static_cast<std::size_t>(k) * g + j) * g + i] = 1;
            }
    ScalarField3D f_par, f_ser;
    t_par = time_best_of(2, [&] {
        f_par = build_sdf(mask, {g, g, g}, {0, 0, 0}, {0.5, 0.5, 0.5});
    });
    t_ser = time_best_of(2, [&] {
        f_ser = ref::build_sdf_serial(mask, {g, g, g}, {0, 0, 0}, {0.5, 0.5, 0.5});
    });
    diff = 0.0;
    for (std::size_t i = 0; i < f_par.values.size(); ++i)
        diff = std::max(diff, std::abs(f_par.values[i] - f_ser.values[i]));
    report("build_sdf", t_par, t_ser, diff);

    // ssim window sweep
    TargetImage other(raster, raster, ext);
    for (double& v : other.values) v = rng.uniform();
    double s_par = 0, s_ser = 0;
    t_par = time_best_of(3, [&] { s_par = ssim(target, other); });
    t_ser = time_best_of(3, [&] { s_ser = ref::ssim_serial(target, other); });
    report("ssim", t_par, t_ser, std::abs(s_par - s_ser));

    return 0;
}
