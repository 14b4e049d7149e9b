#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nestar/error.hpp"

namespace nestar {

// Gaussian-kernel MMD^2, biased (V-statistic) estimator. bandwidth unset
// means the median heuristic: the median pairwise distance over the pooled
// sets, computed once.
struct MmdConfig {
    std::optional<double> bandwidth;  // sigma; > 0 when explicit
};

using VecSet = std::vector<std::vector<double>>;

double median_heuristic_bandwidth(const VecSet& a, const VecSet& b);
double mmd2(const VecSet& a, const VecSet& b, const MmdConfig& cfg = {});

enum class RadiusPolicy { nearest, radius };

struct CoverageReport {
    double coverage = 0.0;          // fraction of centers with >= 1 sample
    double entropy = 0.0;           // Shannon entropy (nats) of assignments
    double dropped_fraction = 0.0;  // only under the radius policy
    std::vector<int64_t> counts;    // per-center assignment histogram
};

// Nearest-center assignment (ties to the lower index); the radius policy
// drops samples farther than r from every center.
CoverageReport mode_coverage(const VecSet& samples, const VecSet& mode_centers,
                             RadiusPolicy policy = RadiusPolicy::nearest,
                             double radius = 0.0);

struct ComplexityRow {
    int k = 0;
    int M = 0;
    int steps = 0;
    int64_t n = 0;
    int64_t nestar_patches = 0;   // (k-1)*M + 1
    int64_t vanilla_patches = 0;  // n
    int64_t nestar_nfe = 0;       // patches * steps
    int64_t vanilla_nfe = 0;
    double ratio = 0.0;  // vanilla / nestar patch count
};

ComplexityRow complexity_report(int k, int M, int steps, int64_t n);

}  // namespace nestar
