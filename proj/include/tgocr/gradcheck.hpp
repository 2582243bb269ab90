#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tgocr/tensor.hpp"

namespace tgocr {

struct GradCheckEntry {
    std::string layer;      // kind plus ordinal, e.g. "conv1", "dense2"
    index_t params_checked; // number of compared difference quotients
    index_t params_skipped; // probes that crossed a relu/pool kink
    double max_rel_err;
};

struct GradCheckReport {
    std::string architecture;
    double tolerance;
    std::vector<GradCheckEntry> per_layer;
    double max_rel_err = 0.0;
    bool skipped_within_budget = true;
    bool passed = false;
};

// Compares analytic parameter gradients of the batch loss against central
// finite differences (step 1e-3) on a reduced double-precision model:
// 8x8 inputs, 2 and 3 feature maps, dense widths 12 and 10, dropout rate 0.
// architecture is "mlp" or "cnn".
GradCheckReport gradcheck(const std::string& architecture, std::uint64_t seed, double tolerance);

} // namespace tgocr
