#pragma once

#include <cstdint>

namespace nestar {

// Randomized verification of the analytic gradients against central finite
// differences (h = 1e-5, 64-bit), covering both the flow-matching loss and
// the coordination loss across module sizes m in {1,2} and hidden widths
// {16, 64}.
struct GradCheckReport {
    int trials = 0;
    double max_rel_err_module = 0.0;
    double max_rel_err_coord = 0.0;

    double worst() const {
        return max_rel_err_module > max_rel_err_coord ? max_rel_err_module
                                                      : max_rel_err_coord;
    }
};

GradCheckReport run_grad_check(uint64_t seed, int trials);

}  // namespace nestar
