#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nestar/metrics.hpp"
#include "nestar/rng.hpp"

using namespace nestar;

namespace {

VecSet random_set(Rng& rng, int count, int dim) {
    VecSet s(count, std::vector<double>(dim));
    for (auto& v : s)
        for (double& x : v) x = rng.normal();
    return s;
}

}  // namespace

TEST_CASE("mmd2 of identical multisets is zero") {
    Rng rng(3);
    const auto a = random_set(rng, 20, 4);
    CHECK(std::fabs(mmd2(a, a)) < 1e-12);
}

TEST_CASE("mmd2 singleton closed form") {
    for (double d : {0.0, 0.5, 2.0, 10.0}) {
        const VecSet a{{0.0}};
        const VecSet b{{d}};
        const double sigma = 1.3;
        const double got = mmd2(a, b, {sigma});
        const double want = 2.0 - 2.0 * std::exp(-d * d / (2.0 * sigma * sigma));
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("mmd2 is symmetric and permutation invariant") {
    Rng rng(8);
    auto a = random_set(rng, 15, 3);
    auto b = random_set(rng, 11, 3);
    for (auto& v : b)
        for (double& x : v) x += 0.7;

    const double ab = mmd2(a, b);
    const double ba = mmd2(b, a);
    CHECK(std::fabs(ab - ba) < 1e-12);

    auto a_shuffled = a;
    std::rotate(a_shuffled.begin(), a_shuffled.begin() + 7, a_shuffled.end());
    CHECK(mmd2(a_shuffled, b) == doctest::Approx(ab).epsilon(1e-12));

    // median bandwidth itself permutation invariant
    CHECK(median_heuristic_bandwidth(a_shuffled, b) ==
          median_heuristic_bandwidth(a, b));

    CHECK(ab >= -1e-12);
    CHECK(ab > 0.01);  // shifted sets separate
}

TEST_CASE("mmd2 rejects bad inputs") {
    const VecSet a{{0.0, 1.0}};
    const VecSet b{{0.0}};
    CHECK_THROWS_AS(mmd2(a, b), Error);
    CHECK_THROWS_AS(mmd2(a, VecSet{}), Error);
    CHECK_THROWS_AS(mmd2(a, a, {-1.0}), Error);
}

TEST_CASE("mode coverage: uniform hit of all centers") {
    const VecSet centers{{0.0, 0.0}, {4.0, 0.0}, {0.0, 4.0}, {4.0, 4.0}};
    const auto report = mode_coverage(centers, centers);
    CHECK(report.coverage == 1.0);
    CHECK(report.entropy == doctest::Approx(std::log(4.0)));
    CHECK(report.dropped_fraction == 0.0);
}

TEST_CASE("mode coverage: single-mode collapse") {
    const VecSet centers{{0.0}, {4.0}, {8.0}, {12.0}};
    const VecSet samples{{0.1}, {-0.1}, {0.0}};
    const auto report = mode_coverage(samples, centers);
    CHECK(report.coverage == doctest::Approx(0.25));
    CHECK(report.entropy == doctest::Approx(0.0));
}

TEST_CASE("mode coverage: equidistant sample goes to the lower index") {
    const VecSet centers{{0.0}, {2.0}};
    const VecSet samples{{1.0}};
    const auto report = mode_coverage(samples, centers);
    CHECK(report.counts[0] == 1);
    CHECK(report.counts[1] == 0);
}

TEST_CASE("radius policy drops far samples and reports the fraction") {
    const VecSet centers{{0.0}};
    const VecSet samples{{0.1}, {5.0}, {-0.2}, {9.0}};
    const auto report = mode_coverage(samples, centers, RadiusPolicy::radius, 1.0);
    CHECK(report.counts[0] == 2);
    CHECK(report.dropped_fraction == doctest::Approx(0.5));
    CHECK_THROWS_AS(mode_coverage(samples, centers, RadiusPolicy::radius, 0.0), Error);
    CHECK_THROWS_AS(mode_coverage(VecSet{}, centers), Error);
}

TEST_CASE("entropy bounded by ln(num_modes)") {
    Rng rng(31);
    const VecSet centers{{0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}};
    auto samples = random_set(rng, 200, 2);
    const auto report = mode_coverage(samples, centers);
    CHECK(report.entropy >= 0.0);
    CHECK(report.entropy <= std::log(3.0) + 1e-12);
    CHECK(report.coverage >= 0.0);
    CHECK(report.coverage <= 1.0);
}

TEST_CASE("complexity report rows") {
    const auto r1 = complexity_report(4, 4, 50, 256);
    CHECK(r1.nestar_patches == 13);
    CHECK(r1.vanilla_patches == 256);
    CHECK(r1.ratio == doctest::Approx(256.0 / 13.0));
    CHECK(r1.nestar_nfe == 13 * 50);
    CHECK(r1.vanilla_nfe == 256 * 50);

    const auto r2 = complexity_report(2, 8, 50, 256);
    CHECK(r2.nestar_patches == 9);
    CHECK(r2.vanilla_patches == 256);

    const auto r3 = complexity_report(4, 1, 50, 4);
    CHECK(r3.nestar_patches == 4);
    CHECK(r3.vanilla_patches == 4);

    CHECK_THROWS_AS(complexity_report(4, 4, 50, 255), Error);
}
