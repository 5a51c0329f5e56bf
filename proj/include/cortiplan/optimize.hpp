#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"
#include "cortiplan/constraints.hpp"
#include "cortiplan/layout.hpp"

namespace cortiplan {

// Adam with bias correction. Moments are shaped like the parameter vector.
struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n_params = 0, double lr_ = 0.05)
        : m(n_params, 0.0), v(n_params, 0.0), lr(lr_) {}
};

// params -= lr * m_hat / (sqrt(v_hat) + eps). Throws NumericError naming the
// parameter index on a non-finite gradient component.
void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads);

struct TraceRow {
    int iter = 0;
    ObjectiveBreakdown breakdown;
    int violations = 0;
    double step_norm = 0.0;  // max per-coordinate-triplet step, mm
    double ms = 0.0;         // wall time of the iteration
};

struct OptimizationTrace {
    std::vector<TraceRow> rows;
};

void save_trace_csv(const OptimizationTrace& trace, const std::string& path);

// N points uniform in the feasible region: rejection sampling in the SDF
// bounding box, accepted when the interpolated signed distance is <= 0.
ElectrodeLayout init_layout(const AnatomyModel& anatomy, int n, std::uint64_t seed);

struct OptimizeResult {
    ElectrodeLayout layout;  // best-total layout seen
    OptimizationTrace trace;
};

// Minibatch Adam over electrode coordinates until the relative change of a
// 20-iteration moving average of the total falls below config.tolerance or
// max_iters is reached.
OptimizeResult optimize_placement(const AnatomyModel& anatomy,
                                  const std::vector<TargetImage>& dataset,
                                  const ObjectiveConfig& config);

// Thread co-optimization under a fixed insertion budget: entries initialized
// like init_layout, directions along the inward SDF gradient.
OptimizeResult optimize_threads(const AnatomyModel& anatomy,
                                const std::vector<TargetImage>& dataset,
                                const ObjectiveConfig& config, int n_insert, int m,
                                double spacing_mm);

// Shared minibatch loop; the objective callback evaluates one batch and its
// parameter gradients. Used by optimize_placement, optimize_threads and the
// coverage baseline.
using BatchObjective = std::function<TotalObjective(
    const ElectrodeLayout&, const std::vector<TargetImage>&)>;
OptimizeResult run_adam_loop(ElectrodeLayout layout, const AnatomyModel& anatomy,
                             const std::vector<TargetImage>& dataset,
                             const ObjectiveConfig& config, const BatchObjective& objective);

}  // namespace cortiplan
