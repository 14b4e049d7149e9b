#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "nestar/binio.hpp"
#include "nestar/data.hpp"

using namespace nestar;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

HierParams simple_hp(const ScheduleSpec& spec, int num_classes, double sigma) {
    HierParams hp;
    hp.num_classes = num_classes;
    hp.sigma_level.assign(static_cast<size_t>(spec.M), sigma);
    hp.sigma_leaf = sigma;
    for (int j = 0; j < num_classes; ++j)
        hp.class_means.push_back(std::vector<double>(static_cast<size_t>(spec.c),
                                                     static_cast<double>(j)));
    return hp;
}

}  // namespace

TEST_CASE("degenerate variances reproduce the class means exactly") {
    const auto spec = new_schedule(4, 2, 3, Ordering::morton);
    const auto hp = simple_hp(spec, 3, 0.0);
    const auto ds = gen_hier_quadrant(spec, hp, 50, 9);
    for (const auto& item : ds.items) {
        for (size_t j = 0; j < item.tokens.size(); ++j)
            CHECK(item.tokens[j] == static_cast<double>(item.class_id));
    }
}

TEST_CASE("hier generator sample mean obeys the CLT bound") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    HierParams hp;
    hp.num_classes = 1;
    hp.sigma_level = {0.3, 0.2};
    hp.sigma_leaf = 0.1;
    hp.class_means = {{0.0}};
    const int n_items = 10000;
    const auto ds = gen_hier_quadrant(spec, hp, n_items, 123);

    // per-token variance: all level offsets plus leaf noise. Tokens within
    // an item are correlated, so bound the mean via the worst case of full
    // correlation across the n tokens of one item: sd(mean) <=
    // sigma_total / sqrt(n_items).
    const double sigma_total = std::sqrt(0.3 * 0.3 + 0.2 * 0.2 + 0.1 * 0.1);
    double acc = 0.0;
    int64_t cnt = 0;
    for (const auto& item : ds.items)
        for (double v : item.tokens) {
            acc += v;
            ++cnt;
        }
    const double mean = acc / static_cast<double>(cnt);
    CHECK(std::fabs(mean) < 4.0 * sigma_total / std::sqrt(static_cast<double>(n_items)));
}

TEST_CASE("siblings correlate more than cross-quadrant tokens") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    HierParams hp;
    hp.num_classes = 1;
    hp.sigma_level = {0.4, 0.4};
    hp.sigma_leaf = 0.2;
    hp.class_means = {{0.0}};
    const auto ds = gen_hier_quadrant(spec, hp, 10000, 77);

    // tokens 0 and 1 share the depth-1 parent (same 2x2 block); tokens 0 and
    // 4 only share the root. Closed form: cov = sum of shared level sigmas.
    double c01 = 0.0, c04 = 0.0;
    for (const auto& item : ds.items) {
        c01 += item.tokens[0] * item.tokens[1];
        c04 += item.tokens[0] * item.tokens[4];
    }
    c01 /= static_cast<double>(ds.items.size());
    c04 /= static_cast<double>(ds.items.size());

    CHECK(c01 > c04);
    CHECK(c01 == doctest::Approx(0.4 * 0.4 + 0.4 * 0.4).epsilon(0.25));
    CHECK(c04 == doctest::Approx(0.4 * 0.4).epsilon(0.35));
}

TEST_CASE("hier generator enforces morton + k=4 and validates params") {
    const auto raster = new_schedule(4, 2, 1, Ordering::raster);
    HierParams hp = simple_hp(raster, 1, 0.1);
    CHECK_THROWS_AS(gen_hier_quadrant(raster, hp, 1, 0), Error);

    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    HierParams bad = simple_hp(spec, 1, 0.1);
    bad.sigma_level.pop_back();
    CHECK_THROWS_AS(gen_hier_quadrant(spec, bad, 1, 0), Error);
}

TEST_CASE("iid gauss moments and determinism") {
    const auto spec = new_schedule(2, 3, 2, Ordering::raster);
    const int n_items = 10000;
    const auto ds = gen_iid_gauss(spec, n_items, 5);
    const auto again = gen_iid_gauss(spec, n_items, 5);
    CHECK(ds.items.size() == static_cast<size_t>(n_items));
    for (size_t j = 0; j < 10; ++j)
        CHECK(ds.items[j].tokens == again.items[j].tokens);

    double acc = 0.0, acc2 = 0.0;
    int64_t cnt = 0;
    for (const auto& item : ds.items)
        for (double v : item.tokens) {
            acc += v;
            acc2 += v * v;
            ++cnt;
        }
    const double mean = acc / static_cast<double>(cnt);
    const double var = acc2 / static_cast<double>(cnt) - mean * mean;
    CHECK(std::fabs(mean) < 4.0 / std::sqrt(static_cast<double>(cnt)));
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("dataset save/load round-trip is lossless") {
    const auto spec = new_schedule(4, 2, 2, Ordering::morton);
    const auto ds = gen_hier_quadrant(spec, simple_hp(spec, 2, 0.5), 7, 42);
    const auto path = temp_path("nestar_data_test.nsds");
    save_dataset(ds, path);
    const auto loaded = load_dataset(path);

    CHECK(loaded.k == ds.k);
    CHECK(loaded.M == ds.M);
    CHECK(loaded.c == ds.c);
    CHECK(loaded.ordering == ds.ordering);
    REQUIRE(loaded.items.size() == ds.items.size());
    for (size_t j = 0; j < ds.items.size(); ++j) {
        CHECK(loaded.items[j].class_id == ds.items[j].class_id);
        CHECK(loaded.items[j].tokens == ds.items[j].tokens);  // bitwise
    }

    // save -> load -> save is byte-identical
    const auto path2 = temp_path("nestar_data_test2.nsds");
    save_dataset(loaded, path2);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("dataset load rejects corruption") {
    const auto spec = new_schedule(4, 1, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 2, 1);
    const auto path = temp_path("nestar_data_bad.nsds");
    save_dataset(ds, path);

    auto bytes = read_file_bytes(path);
    // wrong magic
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    write_file_bytes(path, bad_magic);
    CHECK_THROWS_AS(load_dataset(path), Error);

    // truncated
    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    write_file_bytes(path, truncated);
    CHECK_THROWS_AS(load_dataset(path), Error);

    // bad version
    auto bad_version = bytes;
    bad_version[4] = 0x7f;
    write_file_bytes(path, bad_version);
    CHECK_THROWS_AS(load_dataset(path), Error);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_dataset(path), Error);  // missing file
}

TEST_CASE("fingerprint guard") {
    const auto spec = new_schedule(4, 2, 2, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 1, 0);
    CHECK_NOTHROW(check_fingerprint(ds, spec));
    CHECK_THROWS_AS(check_fingerprint(ds, new_schedule(4, 3, 2, Ordering::morton)), Error);
    CHECK_THROWS_AS(check_fingerprint(ds, new_schedule(4, 2, 1, Ordering::morton)), Error);
    CHECK_THROWS_AS(check_fingerprint(ds, new_schedule(4, 2, 2, Ordering::raster)), Error);
}
