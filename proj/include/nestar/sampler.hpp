#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nestar/data.hpp"
#include "nestar/schedule.hpp"
#include "nestar/velocity.hpp"

namespace nestar {

struct SampleRequest {
    ScheduleSpec schedule;
    std::span<const VelocityParams> params_list;  // one per module
    std::optional<int> class_id;
    uint64_t seed = 0;
    int ode_steps = 50;
};

struct ModuleNfe {
    int m = 0;
    int64_t patches = 0;
    int64_t velocity_calls = 0;
};

struct NfeReport {
    int64_t velocity_calls = 0;
    int64_t patches_generated = 0;
    std::vector<ModuleNfe> per_module;

    void save_csv(const std::string& path) const;
};

using VelocityFn =
    std::function<std::vector<double>(std::span<const double> y, double t)>;

// Explicit Euler integration of dy/dt from t=1 (noise) down to t=0 (data):
// t descends over {1, (S-1)/S, ..., 1/S}, each step y <- y - (1/S) * v(y, t)
// with v evaluated at the current (larger-t) point. Exactly S evaluations.
std::vector<double> euler_solve(const VelocityFn& velocity_fn,
                                std::span<const double> eps, int steps);

// Nested generation: the first token from module 1 with empty prefix, then
// for each module m and patch i = 2..k an Euler solve conditioned on all
// previously generated tokens.
std::pair<TokenSeq, NfeReport> generate(const SampleRequest& req);

// Token-by-token baseline: n sequential single-token Euler solves.
std::pair<TokenSeq, NfeReport> generate_vanilla_ar(const ScheduleSpec& schedule,
                                                   const VelocityParams& token_model,
                                                   std::optional<int> class_id,
                                                   uint64_t seed, int ode_steps);

}  // namespace nestar
