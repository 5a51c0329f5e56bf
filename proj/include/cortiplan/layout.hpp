#pragma once

#include <string>
#include <vector>

#include "cortiplan/vec.hpp"

namespace cortiplan {

// One flexible shank carrying `count` stimulation sites spaced along its
// insertion direction.
struct ElectrodeThread {
    Vec3 entry;      // mm
    Vec3 direction;  // normalized on use
    double spacing = 0.2;  // mm
    int count = 8;
};

// Free electrode coordinates or thread parameterizations, in cortical mm.
struct ElectrodeLayout {
    enum class Mode { Free, Threads };
    Mode mode = Mode::Free;
    std::vector<Vec3> free;
    std::vector<ElectrodeThread> threads;

    int electrode_count() const;

    // Flat parameter vector: free -> xyz per electrode; threads -> entry xyz
    // followed by direction xyz per thread.
    std::vector<double> pack_params() const;
    void unpack_params(const std::vector<double>& params);
};

// Electrode positions entry + i*spacing*normalize(direction), i = 0..m-1.
std::vector<Vec3> derive_thread_electrodes(const ElectrodeLayout& layout);

// Electrode positions for either mode.
std::vector<Vec3> derive_positions(const ElectrodeLayout& layout);

// Pulls per-electrode position gradients back onto the layout's parameters
// (identity for free mode; entry/direction chain rule for threads).
std::vector<double> chain_to_params(const ElectrodeLayout& layout,
                                    const std::vector<Vec3>& position_grads);

// Layout CSV: header e,x,y,z (free) or e,x,y,z,thread_id (threads), one row
// per derived electrode.
void save_layout_csv(const ElectrodeLayout& layout, const std::string& path);
ElectrodeLayout load_layout_csv(const std::string& path);

}  // namespace cortiplan
