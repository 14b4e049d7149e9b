#include "nestar/schedule.hpp"

#include <cmath>

namespace nestar {

const char* ordering_name(Ordering o) {
    return o == Ordering::morton ? "morton" : "raster";
}

Ordering ordering_from_name(const std::string& name) {
    if (name == "morton") return Ordering::morton;
    if (name == "raster") return Ordering::raster;
    fail(ErrorKind::invalid_parameter, "unknown ordering '" + name + "'");
}

int64_t ScheduleSpec::patch_len(int m) const {
    require(m >= 1 && m <= M, ErrorKind::out_of_range,
            "module index " + std::to_string(m) + " outside 1.." + std::to_string(M));
    int64_t len = 1;
    for (int j = 1; j < m; ++j) len *= k;
    return len;
}

ScheduleSpec new_schedule(int k, int M, int c, Ordering ordering) {
    require(k >= 2, ErrorKind::invalid_parameter, "k must be >= 2, got " + std::to_string(k));
    require(M >= 1, ErrorKind::invalid_parameter, "M must be >= 1, got " + std::to_string(M));
    require(c >= 1, ErrorKind::invalid_parameter, "c must be >= 1, got " + std::to_string(c));
    require(k <= kMaxK, ErrorKind::overflow,
            "k=" + std::to_string(k) + " exceeds supported maximum " + std::to_string(kMaxK));
    require(M <= kMaxM, ErrorKind::overflow,
            "M=" + std::to_string(M) + " exceeds supported maximum " + std::to_string(kMaxM));
    require(ordering != Ordering::morton || k == 4, ErrorKind::invalid_parameter,
            "morton ordering requires k=4, got k=" + std::to_string(k));

    ScheduleSpec spec;
    spec.k = k;
    spec.M = M;
    spec.c = c;
    spec.ordering = ordering;
    spec.n = 1;
    for (int j = 0; j < M; ++j) spec.n *= k;

    if (k == 4) {
        spec.grid_side = 1 << M;
    } else {
        auto side = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(spec.n))));
        if (side * side == spec.n) spec.grid_side = static_cast<int>(side);
    }
    return spec;
}

static void check_patch(const ScheduleSpec& spec, PatchId p) {
    require(p.m >= 1 && p.m <= spec.M, ErrorKind::out_of_range,
            "module index " + std::to_string(p.m) + " outside 1.." + std::to_string(spec.M));
    require(p.i >= 1 && p.i <= spec.k, ErrorKind::out_of_range,
            "patch index " + std::to_string(p.i) + " outside 1.." + std::to_string(spec.k));
}

std::pair<int64_t, int64_t> patch_range(const ScheduleSpec& spec, PatchId p) {
    check_patch(spec, p);
    const int64_t len = spec.patch_len(p.m);
    const int64_t start = len * (p.i - 1) + 1;
    return {start, len * p.i};
}

int64_t prefix_len(const ScheduleSpec& spec, PatchId p) {
    check_patch(spec, p);
    return spec.patch_len(p.m) * (p.i - 1);
}

int64_t eval_count(const ScheduleSpec& spec, int m) {
    require(m >= 1 && m <= spec.M, ErrorKind::out_of_range,
            "module index " + std::to_string(m) + " outside 1.." + std::to_string(spec.M));
    return static_cast<int64_t>(spec.k - 1) * m + 1;
}

static void check_grid(int row, int col, int side, bool power_of_two) {
    require(side >= 1, ErrorKind::invalid_parameter, "side must be >= 1");
    if (power_of_two) {
        require((side & (side - 1)) == 0, ErrorKind::invalid_parameter,
                "side must be a power of two, got " + std::to_string(side));
    }
    require(row >= 0 && row < side && col >= 0 && col < side, ErrorKind::out_of_range,
            "cell (" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                std::to_string(side) + "x" + std::to_string(side) + " grid");
}

int64_t morton_rank(int row, int col, int side) {
    check_grid(row, col, side, true);
    int64_t index = 0;
    for (int b = 0; side >> (b + 1); ++b) {
        index |= static_cast<int64_t>((col >> b) & 1) << (2 * b);
        index |= static_cast<int64_t>((row >> b) & 1) << (2 * b + 1);
    }
    return index;
}

std::pair<int, int> morton_unrank(int64_t index, int side) {
    require(side >= 1 && (side & (side - 1)) == 0, ErrorKind::invalid_parameter,
            "side must be a power of two, got " + std::to_string(side));
    require(index >= 0 && index < static_cast<int64_t>(side) * side, ErrorKind::out_of_range,
            "index " + std::to_string(index) + " outside grid of side " + std::to_string(side));
    int row = 0, col = 0;
    for (int b = 0; side >> (b + 1); ++b) {
        col |= static_cast<int>((index >> (2 * b)) & 1) << b;
        row |= static_cast<int>((index >> (2 * b + 1)) & 1) << b;
    }
    return {row, col};
}

int64_t raster_rank(int row, int col, int side) {
    check_grid(row, col, side, false);
    return static_cast<int64_t>(row) * side + col;
}

std::pair<int, int> raster_unrank(int64_t index, int side) {
    require(side >= 1, ErrorKind::invalid_parameter, "side must be >= 1");
    require(index >= 0 && index < static_cast<int64_t>(side) * side, ErrorKind::out_of_range,
            "index " + std::to_string(index) + " outside grid of side " + std::to_string(side));
    return {static_cast<int>(index / side), static_cast<int>(index % side)};
}

}  // namespace nestar
