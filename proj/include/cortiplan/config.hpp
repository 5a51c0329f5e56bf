#pragma once

#include <cstdint>

namespace cortiplan {

// How the phosphene spread rho is interpreted: cortical takes rho in um and
// converts to visual degrees through the local magnification; visual takes
// rho directly in degrees.
struct SpreadModel {
    enum class Mode { Cortical, Visual };
    Mode mode = Mode::Cortical;
    double rho = 1000.0;  // um (cortical) or deg (visual)
};

// All loss weights and optimization knobs in one place.
struct ObjectiveConfig {
    double lambda_vasc = 10.0;
    double lambda_cortex = 10.0;
    double tau_mm = 0.3;  // vascular safety margin
    SpreadModel spread;
    int knn_k = 5;
    double foveal_beta = 4.0;
    double foveal_sigma_deg = 0.0;  // <= 0: auto, 25% of the extent half-width
    int n_electrodes = 64;
    int batch_size = 32;
    double learning_rate = 0.05;  // mm-scale coordinates
    int max_iters = 5000;
    double tolerance = 1e-5;      // relative change of the 20-iteration moving average
    std::uint64_t seed = 0;
};

struct ObjectiveBreakdown {
    double percept = 0.0;
    double vasc = 0.0;
    double cortex = 0.0;
    double total = 0.0;
};

}  // namespace cortiplan
