#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "nestar/error.hpp"

namespace nestar {

enum class Ordering : uint32_t { morton = 0, raster = 1 };

const char* ordering_name(Ordering o);
Ordering ordering_from_name(const std::string& name);

// The nested decomposition: M scaled modules, module m emits patches of
// k^(m-1) tokens, n = k^M tokens total. All token indices in the public
// API are 1-based inclusive.
struct ScheduleSpec {
    int k = 0;           // patches per module, >= 2
    int M = 0;           // number of scaled modules, >= 1
    int64_t n = 0;       // total tokens, k^M
    int c = 0;           // token dimensionality
    Ordering ordering = Ordering::morton;
    std::optional<int> grid_side;  // set when tokens form a square grid

    // k^(m-1), the patch length of module m.
    int64_t patch_len(int m) const;

    bool same_shape(const ScheduleSpec& other) const {
        return k == other.k && M == other.M && c == other.c && ordering == other.ordering;
    }
};

// Index pair of the i-th patch in the m-th scaled module.
struct PatchId {
    int m = 0;  // 1..M
    int i = 0;  // 1..k
};

inline constexpr int kMaxK = 8;
inline constexpr int kMaxM = 8;

ScheduleSpec new_schedule(int k, int M, int c, Ordering ordering);

// 1-based inclusive token range covered by patch p: length k^(m-1),
// starting right after the patch's conditioning prefix.
std::pair<int64_t, int64_t> patch_range(const ScheduleSpec& spec, PatchId p);

// Number of conditioning tokens seen by patch p: k^(m-1) * (i-1).
// Zero for any first patch (it conditions on the empty set).
int64_t prefix_len(const ScheduleSpec& spec, PatchId p);

// Conditional-distribution evaluations needed to produce k^m tokens:
// (k-1)*m + 1.
int64_t eval_count(const ScheduleSpec& spec, int m);

// Z-curve linearization of a side x side grid (side a power of two).
// Column bits occupy even positions, row bits odd, so the first 4^m
// indices tile the top-left 2^m x 2^m block.
int64_t morton_rank(int row, int col, int side);
std::pair<int, int> morton_unrank(int64_t index, int side);

// Left-to-right, top-to-bottom scan.
int64_t raster_rank(int row, int col, int side);
std::pair<int, int> raster_unrank(int64_t index, int side);

}  // namespace nestar
