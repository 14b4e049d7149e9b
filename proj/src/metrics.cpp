#include "nestar/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace nestar {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

size_t check_set(const VecSet& s, const char* name, size_t dim) {
    require(!s.empty(), ErrorKind::invalid_parameter, std::string(name) + " set is empty");
    const size_t d = dim ? dim : s[0].size();
    for (const auto& v : s)
        require(v.size() == d, ErrorKind::dimension_mismatch,
                std::string(name) + " set has mixed vector dimensions");
    return d;
}

// Mean kernel value over the full index grid of two sets (diagonal
// included), accumulated in a fixed serial order.
double mean_kernel(const VecSet& a, const VecSet& b, double inv_two_sigma_sq) {
    double acc = 0.0;
    for (const auto& x : a)
        for (const auto& y : b) acc += std::exp(-sq_dist(x, y) * inv_two_sigma_sq);
    return acc / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace

double median_heuristic_bandwidth(const VecSet& a, const VecSet& b) {
    const size_t d = check_set(a, "first", 0);
    check_set(b, "second", d);

    VecSet pooled;
    pooled.reserve(a.size() + b.size());
    pooled.insert(pooled.end(), a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());

    std::vector<double> dists;
    dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
    for (size_t i = 0; i < pooled.size(); ++i)
        for (size_t j = i + 1; j < pooled.size(); ++j)
            dists.push_back(std::sqrt(sq_dist(pooled[i], pooled[j])));
    require(!dists.empty(), ErrorKind::invalid_parameter,
            "median heuristic needs at least two pooled points");

    // lower median; full sort gives deterministic tie handling
    std::sort(dists.begin(), dists.end());
    double sigma = dists[(dists.size() - 1) / 2];
    if (sigma <= 0.0) sigma = 1.0;  // all points identical
    return sigma;
}

double mmd2(const VecSet& a, const VecSet& b, const MmdConfig& cfg) {
    const size_t d = check_set(a, "first", 0);
    check_set(b, "second", d);

    double sigma;
    if (cfg.bandwidth) {
        require(*cfg.bandwidth > 0.0, ErrorKind::invalid_parameter,
                "bandwidth must be > 0");
        sigma = *cfg.bandwidth;
    } else {
        sigma = median_heuristic_bandwidth(a, b);
    }
    const double inv = 1.0 / (2.0 * sigma * sigma);
    return mean_kernel(a, a, inv) + mean_kernel(b, b, inv) - 2.0 * mean_kernel(a, b, inv);
}

CoverageReport mode_coverage(const VecSet& samples, const VecSet& mode_centers,
                             RadiusPolicy policy, double radius) {
    const size_t d = check_set(mode_centers, "center", 0);
    check_set(samples, "sample", d);
    if (policy == RadiusPolicy::radius)
        require(radius > 0.0, ErrorKind::invalid_parameter,
                "radius policy needs radius > 0");

    CoverageReport report;
    report.counts.assign(mode_centers.size(), 0);
    int64_t dropped = 0;

    for (const auto& s : samples) {
        size_t best = 0;
        double best_d = sq_dist(s, mode_centers[0]);
        for (size_t j = 1; j < mode_centers.size(); ++j) {
            const double dj = sq_dist(s, mode_centers[j]);
            if (dj < best_d) {  // strict: equidistant keeps the lower index
                best_d = dj;
                best = j;
            }
        }
        if (policy == RadiusPolicy::radius && best_d > radius * radius) {
            ++dropped;
            continue;
        }
        ++report.counts[best];
    }

    int64_t assigned = 0, hit = 0;
    for (int64_t cnt : report.counts) {
        assigned += cnt;
        if (cnt > 0) ++hit;
    }
    report.coverage = static_cast<double>(hit) / static_cast<double>(mode_centers.size());
    report.dropped_fraction =
        samples.empty() ? 0.0 : static_cast<double>(dropped) / static_cast<double>(samples.size());
    if (assigned > 0) {
        for (int64_t cnt : report.counts) {
            if (cnt == 0) continue;
            const double p = static_cast<double>(cnt) / static_cast<double>(assigned);
            report.entropy -= p * std::log(p);
        }
    }
    return report;
}

ComplexityRow complexity_report(int k, int M, int steps, int64_t n) {
    require(k >= 2 && M >= 1 && steps >= 1, ErrorKind::invalid_parameter,
            "need k >= 2, M >= 1, steps >= 1");
    int64_t expect = 1;
    for (int j = 0; j < M; ++j) expect *= k;
    require(n == expect, ErrorKind::invalid_parameter,
            "n=" + std::to_string(n) + " is not k^M=" + std::to_string(expect));

    ComplexityRow row;
    row.k = k;
    row.M = M;
    row.steps = steps;
    row.n = n;
    row.nestar_patches = static_cast<int64_t>(k - 1) * M + 1;
    row.vanilla_patches = n;
    row.nestar_nfe = row.nestar_patches * steps;
    row.vanilla_nfe = row.vanilla_patches * steps;
    row.ratio = static_cast<double>(row.vanilla_patches) /
                static_cast<double>(row.nestar_patches);
    return row;
}

}  // namespace nestar
