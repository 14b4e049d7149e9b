#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nestar/schedule.hpp"

namespace nestar {

// A length-n sequence of c-dimensional token vectors in schedule order,
// stored flat (token-major).
using TokenSeq = std::vector<double>;

struct DatasetItem {
    uint32_t class_id = 0;
    TokenSeq tokens;  // n*c values
};

struct GeneratorMeta {
    std::string name;    // "hier-quadrant", "iid-gauss", or "file"
    std::string params;  // short human-readable parameter summary
    uint64_t seed = 0;
};

struct Dataset {
    int k = 0;
    int M = 0;
    int c = 0;
    Ordering ordering = Ordering::morton;
    std::vector<DatasetItem> items;
    GeneratorMeta meta;  // in-memory only, not serialized

    int64_t tokens_per_item() const;
    void validate() const;
};

// Throws structural_mismatch when the dataset fingerprint (k, M, c,
// ordering) does not match the schedule. Called at trainer/sampler entry.
void check_fingerprint(const Dataset& ds, const ScheduleSpec& spec);

// Parameters of the quadtree mixture: per-item class mean at the root,
// zero-mean Gaussian offsets shared by each internal node's subtree, and
// independent leaf noise.
struct HierParams {
    int num_classes = 1;
    std::vector<double> sigma_level;  // length M, indexed by internal-node depth
    double sigma_leaf = 0.0;
    std::vector<std::vector<double>> class_means;  // num_classes x c

    void validate(const ScheduleSpec& spec) const;
};

// Depth-M quadtree over the 2^M x 2^M grid; leaf token = class mean
// + sum of ancestor offsets + leaf noise, serialized in morton order.
Dataset gen_hier_quadrant(const ScheduleSpec& spec, const HierParams& hp, int n_items,
                          uint64_t seed);

// All tokens iid standard normal, class 0.
Dataset gen_iid_gauss(const ScheduleSpec& spec, int n_items, uint64_t seed);

// Binary dataset format, bit-exact:
//   magic "NSDS" | version u32 LE | k, M, c, ordering (0=morton, 1=raster),
//   num_items (u32 LE each) | per item: class_id u32 LE, n*c float64 LE.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace nestar
