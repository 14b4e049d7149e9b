#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "nestar/sampler.hpp"
#include "nestar/trainer.hpp"

using namespace nestar;

namespace {

TrainConfig small_net_cfg() {
    TrainConfig cfg;
    cfg.hidden_width = 8;
    cfg.hidden_layers = 1;
    cfg.t_embed_dim = 4;
    cfg.num_classes = 0;
    return cfg;
}

std::vector<VelocityParams> mock_modules(const ScheduleSpec& spec, const TrainConfig& cfg,
                                         uint64_t seed) {
    std::vector<VelocityParams> params;
    for (int m = 1; m <= spec.M; ++m)
        params.push_back(init_params(arch_for_module(spec, m, cfg), seed + m));
    return params;
}

}  // namespace

TEST_CASE("euler integrates a constant field exactly") {
    const std::vector<double> x_true{1.5, -2.0, 0.25};
    const std::vector<double> eps{0.3, 0.7, -1.1};
    const auto v = [&](std::span<const double>, double) {
        std::vector<double> out(x_true.size());
        for (size_t j = 0; j < out.size(); ++j) out[j] = eps[j] - x_true[j];
        return out;
    };
    for (int steps : {1, 3, 10, 97}) {
        const auto y = euler_solve(v, eps, steps);
        for (size_t j = 0; j < y.size(); ++j)
            CHECK(y[j] == doctest::Approx(x_true[j]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(euler_solve(v, eps, 0), Error);
}

TEST_CASE("euler on dy/dt = -y: one step doubles, many steps approach e*exp(1)") {
    const VelocityFn v = [](std::span<const double> y, double) {
        return std::vector<double>{-y[0]};
    };
    const std::vector<double> eps{0.8};

    const auto one = euler_solve(v, eps, 1);
    CHECK(one[0] == doctest::Approx(2.0 * eps[0]));

    // closed form: y(0) = y(1) * e
    const double exact = eps[0] * std::exp(1.0);
    double prev_err = 0.0;
    for (int steps : {16, 32, 64, 128}) {
        const double err = std::fabs(euler_solve(v, eps, steps)[0] - exact);
        if (prev_err > 0.0) {
            const double ratio = prev_err / err;
            CHECK(ratio > 1.8);
            CHECK(ratio < 2.2);
        }
        prev_err = err;
    }
}

TEST_CASE("euler convergence slope is first order on a smooth field") {
    const VelocityFn v = [](std::span<const double> y, double t) {
        return std::vector<double>{-y[0] + std::sin(3.0 * t)};
    };
    const std::vector<double> eps{1.0};
    // reference with a very fine grid
    const double ref = euler_solve(v, eps, 1 << 18)[0];
    std::vector<double> log_s, log_e;
    for (int steps : {16, 32, 64, 128}) {
        const double err = std::fabs(euler_solve(v, eps, steps)[0] - ref);
        log_s.push_back(std::log(static_cast<double>(steps)));
        log_e.push_back(std::log(err));
    }
    // least-squares slope of log err vs log steps
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(log_s.size());
    for (size_t j = 0; j < log_s.size(); ++j) {
        sx += log_s[j];
        sy += log_e[j];
        sxx += log_s[j] * log_s[j];
        sxy += log_s[j] * log_e[j];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(-1.0).epsilon(0.2));
}

TEST_CASE("generate follows the nested loop and counts NFE exactly") {
    const auto cfg = small_net_cfg();
    for (auto [k, M, steps] : {std::tuple{4, 2, 10}, {4, 4, 3}, {2, 3, 5}, {3, 2, 4}}) {
        const auto spec = new_schedule(k, M, 1, Ordering::raster);
        const auto params = mock_modules(spec, cfg, 7);
        SampleRequest req{spec, params, std::nullopt, 99, steps};
        const auto [tokens, report] = generate(req);

        CHECK(tokens.size() == static_cast<size_t>(spec.n) * spec.c);
        const int64_t patches = static_cast<int64_t>(k - 1) * M + 1;
        CHECK(report.patches_generated == patches);
        CHECK(report.velocity_calls == patches * steps);
        for (const auto& pm : report.per_module)
            CHECK(pm.velocity_calls == pm.patches * steps);
        for (double v : tokens) CHECK(std::isfinite(v));
    }
}

TEST_CASE("generate NFE examples") {
    const auto cfg = small_net_cfg();
    const auto spec = new_schedule(4, 2, 1, Ordering::raster);
    const auto params = mock_modules(spec, cfg, 1);
    const auto [_, report] = generate({spec, params, std::nullopt, 0, 10});
    CHECK(report.velocity_calls == 70);  // 7 patches x 10 steps

    const auto spec4 = new_schedule(4, 4, 1, Ordering::raster);
    const auto params4 = mock_modules(spec4, cfg, 2);
    const auto [__, report4] = generate({spec4, params4, std::nullopt, 0, 2});
    CHECK(report4.patches_generated == 13);
}

TEST_CASE("generate is deterministic under a fixed seed") {
    const auto cfg = small_net_cfg();
    const auto spec = new_schedule(4, 2, 2, Ordering::morton);
    const auto params = mock_modules(spec, cfg, 3);
    const auto [a, ra] = generate({spec, params, std::nullopt, 1234, 6});
    const auto [b, rb] = generate({spec, params, std::nullopt, 1234, 6});
    CHECK(a == b);  // bitwise
    const auto [c, rc] = generate({spec, params, std::nullopt, 1235, 6});
    CHECK(a != c);
}

TEST_CASE("vanilla baseline uses n patch generations") {
    TrainConfig cfg = small_net_cfg();
    const auto spec = new_schedule(4, 2, 1, Ordering::raster);  // n = 16
    const auto token_model = init_params(arch_for_vanilla(spec, cfg), 11);

    const auto [tokens, report] = generate_vanilla_ar(spec, token_model, std::nullopt, 5, 10);
    CHECK(tokens.size() == static_cast<size_t>(spec.n) * spec.c);
    CHECK(report.patches_generated == 16);
    CHECK(report.velocity_calls == 160);

    const auto [again, _] = generate_vanilla_ar(spec, token_model, std::nullopt, 5, 10);
    CHECK(tokens == again);

    // 256-token comparison at the patch level: 256 vs 13
    CHECK(256.0 / 13.0 == doctest::Approx(19.69).epsilon(0.001));

    // arch mismatch rejected
    const auto nested = init_params(arch_for_module(spec, 2, cfg), 1);
    CHECK_THROWS_AS(generate_vanilla_ar(spec, nested, std::nullopt, 0, 4), Error);
}

TEST_CASE("generate validates request structure") {
    const auto cfg = small_net_cfg();
    const auto spec = new_schedule(4, 2, 1, Ordering::raster);
    auto params = mock_modules(spec, cfg, 4);
    params.pop_back();
    CHECK_THROWS_AS(generate({spec, params, std::nullopt, 0, 4}), Error);

    auto params_class = mock_modules(spec, cfg, 4);
    CHECK_THROWS_AS(generate({spec, params_class, 2, 0, 4}), Error);  // unconditional
}
