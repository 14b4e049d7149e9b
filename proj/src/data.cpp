#include "nestar/data.hpp"

#include <cmath>
#include <cstring>

#include "nestar/binio.hpp"
#include "nestar/rng.hpp"

namespace nestar {

int64_t Dataset::tokens_per_item() const {
    int64_t n = 1;
    for (int j = 0; j < M; ++j) n *= k;
    return n;
}

void Dataset::validate() const {
    const size_t expect = static_cast<size_t>(tokens_per_item()) * c;
    for (size_t idx = 0; idx < items.size(); ++idx) {
        require(items[idx].tokens.size() == expect, ErrorKind::structural_mismatch,
                "item " + std::to_string(idx) + " has " +
                    std::to_string(items[idx].tokens.size()) + " values, expected " +
                    std::to_string(expect));
        for (double v : items[idx].tokens)
            require(std::isfinite(v), ErrorKind::structural_mismatch,
                    "non-finite token value in item " + std::to_string(idx));
    }
}

void check_fingerprint(const Dataset& ds, const ScheduleSpec& spec) {
    require(ds.k == spec.k && ds.M == spec.M && ds.c == spec.c &&
                ds.ordering == spec.ordering,
            ErrorKind::structural_mismatch,
            "dataset fingerprint (k=" + std::to_string(ds.k) + ", M=" +
                std::to_string(ds.M) + ", c=" + std::to_string(ds.c) + ", " +
                ordering_name(ds.ordering) + ") does not match schedule (k=" +
                std::to_string(spec.k) + ", M=" + std::to_string(spec.M) + ", c=" +
                std::to_string(spec.c) + ", " + ordering_name(spec.ordering) + ")");
}

void HierParams::validate(const ScheduleSpec& spec) const {
    require(num_classes >= 1, ErrorKind::invalid_parameter, "num_classes must be >= 1");
    require(static_cast<int>(sigma_level.size()) == spec.M, ErrorKind::invalid_parameter,
            "sigma_level must have one entry per level (M=" + std::to_string(spec.M) + ")");
    for (double s : sigma_level)
        require(s >= 0.0, ErrorKind::invalid_parameter, "sigma_level entries must be >= 0");
    require(sigma_leaf >= 0.0, ErrorKind::invalid_parameter, "sigma_leaf must be >= 0");
    require(static_cast<int>(class_means.size()) == num_classes,
            ErrorKind::invalid_parameter, "class_means must have num_classes rows");
    for (const auto& mean : class_means)
        require(static_cast<int>(mean.size()) == spec.c, ErrorKind::invalid_parameter,
                "each class mean must have c components");
}

namespace {

// Preorder expansion of the complete 4-ary tree. Every internal node at
// depth d (the root included) draws one offset N(0, sigma_level[d]^2 I)
// shared by its entire subtree; leaves add independent leaf noise. Leaves
// come out in quadrant preorder, which is exactly morton order.
void expand_quadtree(const HierParams& hp, int M, int c, Rng& rng, int depth,
                     const std::vector<double>& base, double* tokens, int64_t& leaf) {
    if (depth == M) {
        double* token = tokens + static_cast<size_t>(leaf) * c;
        for (int d = 0; d < c; ++d) token[d] = base[d] + hp.sigma_leaf * rng.normal();
        ++leaf;
        return;
    }
    std::vector<double> node(c);
    for (int d = 0; d < c; ++d) node[d] = base[d] + hp.sigma_level[depth] * rng.normal();
    for (int child = 0; child < 4; ++child)
        expand_quadtree(hp, M, c, rng, depth + 1, node, tokens, leaf);
}

}  // namespace

Dataset gen_hier_quadrant(const ScheduleSpec& spec, const HierParams& hp, int n_items,
                          uint64_t seed) {
    require(spec.ordering == Ordering::morton && spec.k == 4, ErrorKind::invalid_parameter,
            "hier-quadrant generator requires morton ordering with k=4");
    require(n_items >= 0, ErrorKind::invalid_parameter, "n_items must be >= 0");
    hp.validate(spec);

    Dataset ds;
    ds.k = spec.k;
    ds.M = spec.M;
    ds.c = spec.c;
    ds.ordering = spec.ordering;
    ds.meta = {"hier-quadrant",
               "classes=" + std::to_string(hp.num_classes) + " M=" + std::to_string(spec.M),
               seed};
    ds.items.reserve(static_cast<size_t>(n_items));

    Rng rng(seed);
    for (int item_idx = 0; item_idx < n_items; ++item_idx) {
        DatasetItem item;
        item.class_id = static_cast<uint32_t>(rng.below(static_cast<uint64_t>(hp.num_classes)));
        item.tokens.assign(static_cast<size_t>(spec.n) * spec.c, 0.0);
        int64_t leaf = 0;
        expand_quadtree(hp, spec.M, spec.c, rng, 0, hp.class_means[item.class_id],
                        item.tokens.data(), leaf);
        ds.items.push_back(std::move(item));
    }
    return ds;
}

Dataset gen_iid_gauss(const ScheduleSpec& spec, int n_items, uint64_t seed) {
    require(n_items >= 0, ErrorKind::invalid_parameter, "n_items must be >= 0");
    Dataset ds;
    ds.k = spec.k;
    ds.M = spec.M;
    ds.c = spec.c;
    ds.ordering = spec.ordering;
    ds.meta = {"iid-gauss", "n=" + std::to_string(spec.n), seed};
    ds.items.reserve(static_cast<size_t>(n_items));

    Rng rng(seed);
    const size_t vals = static_cast<size_t>(spec.n) * spec.c;
    for (int item_idx = 0; item_idx < n_items; ++item_idx) {
        DatasetItem item;
        item.class_id = 0;
        item.tokens.resize(vals);
        for (double& v : item.tokens) v = rng.normal();
        ds.items.push_back(std::move(item));
    }
    return ds;
}

namespace {
constexpr char kDatasetMagic[4] = {'N', 'S', 'D', 'S'};
constexpr uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::vector<uint8_t> out;
    const size_t vals = static_cast<size_t>(ds.tokens_per_item()) * ds.c;
    out.reserve(28 + ds.items.size() * (4 + 8 * vals));
    out.insert(out.end(), kDatasetMagic, kDatasetMagic + 4);
    put_u32(out, kDatasetVersion);
    put_u32(out, static_cast<uint32_t>(ds.k));
    put_u32(out, static_cast<uint32_t>(ds.M));
    put_u32(out, static_cast<uint32_t>(ds.c));
    put_u32(out, static_cast<uint32_t>(ds.ordering));
    put_u32(out, static_cast<uint32_t>(ds.items.size()));
    for (const DatasetItem& item : ds.items) {
        put_u32(out, item.class_id);
        for (double v : item.tokens) put_f64(out, v);
    }
    write_file_bytes(path, out);
}

Dataset load_dataset(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader in(bytes.data(), bytes.size());

    char magic[4];
    require(bytes.size() >= 4, ErrorKind::format, "file too short for magic");
    in.bytes(reinterpret_cast<uint8_t*>(magic), 4);
    require(std::memcmp(magic, kDatasetMagic, 4) == 0, ErrorKind::format,
            "bad magic bytes, not a dataset file");
    const uint32_t version = in.u32();
    require(version == kDatasetVersion, ErrorKind::version_unsupported,
            "dataset version " + std::to_string(version) + " unsupported");

    Dataset ds;
    ds.k = static_cast<int>(in.u32());
    ds.M = static_cast<int>(in.u32());
    ds.c = static_cast<int>(in.u32());
    const uint32_t ord = in.u32();
    require(ord <= 1, ErrorKind::format, "bad ordering code " + std::to_string(ord));
    ds.ordering = static_cast<Ordering>(ord);
    require(ds.k >= 2 && ds.k <= kMaxK && ds.M >= 1 && ds.M <= kMaxM && ds.c >= 1,
            ErrorKind::format, "dataset header outside supported ranges");

    const uint32_t num_items = in.u32();
    const size_t vals = static_cast<size_t>(ds.tokens_per_item()) * ds.c;
    require(in.remaining() == static_cast<size_t>(num_items) * (4 + 8 * vals),
            ErrorKind::format, "file length does not match header");

    ds.items.resize(num_items);
    for (uint32_t idx = 0; idx < num_items; ++idx) {
        ds.items[idx].class_id = in.u32();
        ds.items[idx].tokens.resize(vals);
        for (double& v : ds.items[idx].tokens) v = in.f64();
    }
    ds.meta = {"file", path, 0};
    ds.validate();
    return ds;
}

}  // namespace nestar
