#include "cortiplan/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "cortiplan/errors.hpp"
#include "cortiplan/rng.hpp"
#include "cortiplan/util.hpp"

namespace cortiplan {

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != grads.size() || state.m.size() != params.size() ||
        state.v.size() != params.size())
        throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericError("adam_step: non-finite gradient at parameter index " +
                               std::to_string(i));

    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        double m_hat = state.m[i] / bc1;
        double v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

void save_trace_csv(const OptimizationTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "iter,percept,vasc,cortex,total,violations,step_norm,ms\n";
    for (const TraceRow& r : trace.rows) {
        out << r.iter << ',' << fmt_double(r.breakdown.percept) << ','
            << fmt_double(r.breakdown.vasc) << ',' << fmt_double(r.breakdown.cortex) << ','
            << fmt_double(r.breakdown.total) << ',' << r.violations << ','
            << fmt_double(r.step_norm) << ',' << fmt_double(r.ms) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

ElectrodeLayout init_layout(const AnatomyModel& anatomy, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("init_layout: N must be >= 1");
    Rng rng(seed);
    ElectrodeLayout layout;
    layout.mode = ElectrodeLayout::Mode::Free;
    layout.free.reserve(n);

    const ScalarField3D& sdf = anatomy.gm_sdf();
    Vec3 lo = sdf.bbox_min(), hi = sdf.bbox_max();
    constexpr long kRateCheckDraws = 10'000'000;
    constexpr double kMinAcceptRate = 1e-4;
    long draws = 0, accepted = 0;
    while (accepted < n) {
        if (draws == kRateCheckDraws && accepted < kMinAcceptRate * draws)
            throw InfeasibleError(
                "init_layout: acceptance rate below 1e-4 after 1e7 draws; is the gray-matter "
                "region degenerate?");
        ++draws;
        Vec3 p{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z)};
        if (sample_sdf(sdf, p).value <= 0.0) {
            layout.free.push_back(p);
            ++accepted;
        }
    }
    return layout;
}

namespace {

double max_triplet_step(const std::vector<double>& before, const std::vector<double>& after) {
    double max_step = 0.0;
    for (std::size_t i = 0; i + 2 < before.size(); i += 3) {
        double dx = after[i] - before[i];
        double dy = after[i + 1] - before[i + 1];
        double dz = after[i + 2] - before[i + 2];
        max_step = std::max(max_step, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    return max_step;
}

}  // namespace

OptimizeResult run_adam_loop(ElectrodeLayout layout, const AnatomyModel& anatomy,
                             const std::vector<TargetImage>& dataset,
                             const ObjectiveConfig& config, const BatchObjective& objective) {
    if (dataset.empty()) throw std::invalid_argument("optimize: empty dataset");

    // one seed-shuffled pass order, cycled for minibatches
    std::vector<int> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    rng.shuffle(order);

    const int batch_size = std::clamp(config.batch_size, 1, static_cast<int>(dataset.size()));
    std::size_t cursor = 0;
    auto next_batch = [&]() {
        std::vector<TargetImage> batch;
        batch.reserve(batch_size);
        for (int b = 0; b < batch_size; ++b) {
            batch.push_back(dataset[order[cursor]]);
            cursor = (cursor + 1) % order.size();
        }
        return batch;
    };

    std::vector<double> params = layout.pack_params();
    AdamState adam(params.size(), config.learning_rate);

    OptimizeResult result;
    result.layout = layout;
    double best_total = std::numeric_limits<double>::infinity();
    std::vector<double> totals;
    totals.reserve(config.max_iters);

    for (int iter = 0; iter < config.max_iters; ++iter) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<TargetImage> batch = next_batch();
        TotalObjective obj = objective(layout, batch);
        ViolationCount viol = count_violations(layout, anatomy, config.tau_mm);

        if (obj.breakdown.total < best_total) {
            best_total = obj.breakdown.total;
            result.layout = layout;
        }

        std::vector<double> before = params;
        adam_step(adam, params, obj.param_grads);
        layout.unpack_params(params);

        auto t1 = std::chrono::steady_clock::now();
        TraceRow row;
        row.iter = iter;
        row.breakdown = obj.breakdown;
        row.violations = viol.count;
        row.step_norm = max_triplet_step(before, params);
        row.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.trace.rows.push_back(row);

        totals.push_back(obj.breakdown.total);
        // converged when the last two 20-iteration windows agree to tolerance
        if (totals.size() >= 40) {
            double recent = 0.0, previous = 0.0;
            std::size_t n = totals.size();
            for (std::size_t i = n - 20; i < n; ++i) recent += totals[i];
            for (std::size_t i = n - 40; i < n - 20; ++i) previous += totals[i];
            recent /= 20.0;
            previous /= 20.0;
            if (std::abs(recent - previous) <=
                config.tolerance * std::max(std::abs(previous), 1e-12))
                break;
        }
    }
    return result;
}

OptimizeResult optimize_placement(const AnatomyModel& anatomy,
                                  const std::vector<TargetImage>& dataset,
                                  const ObjectiveConfig& config) {
    ElectrodeLayout layout = init_layout(anatomy, config.n_electrodes, config.seed);
    return run_adam_loop(std::move(layout), anatomy, dataset, config,
                         [&](const ElectrodeLayout& l, const std::vector<TargetImage>& batch) {
                             return total_objective(l, anatomy, batch, config);
                         });
}

OptimizeResult optimize_threads(const AnatomyModel& anatomy,
                                const std::vector<TargetImage>& dataset,
                                const ObjectiveConfig& config, int n_insert, int m,
                                double spacing_mm) {
    if (n_insert < 1 || m < 1)
        throw std::invalid_argument("optimize_threads: n_insert and m must be >= 1");
    if (spacing_mm <= 0) throw std::invalid_argument("optimize_threads: spacing must be > 0");

    ElectrodeLayout entries = init_layout(anatomy, n_insert, config.seed);
    ElectrodeLayout layout;
    layout.mode = ElectrodeLayout::Mode::Threads;
    layout.threads.reserve(n_insert);
    for (const Vec3& entry : entries.free) {
        ElectrodeThread t;
        t.entry = entry;
        // insert along the inward SDF gradient, roughly surface-normal
        Vec3 g = sample_sdf(anatomy.gm_sdf(), entry).gradient;
        double n = g.norm();
        t.direction = n > 1e-9 ? g * (-1.0 / n) : Vec3{0, 0, 1};
        t.spacing = spacing_mm;
        t.count = m;
        layout.threads.push_back(t);
    }
    return run_adam_loop(std::move(layout), anatomy, dataset, config,
                         [&](const ElectrodeLayout& l, const std::vector<TargetImage>& batch) {
                             return total_objective(l, anatomy, batch, config);
                         });
}

}  // namespace cortiplan
