#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "nestar/trainer.hpp"

using namespace nestar;

namespace {

TrainConfig fast_cfg() {
    TrainConfig cfg;
    cfg.hidden_width = 16;
    cfg.hidden_layers = 1;
    cfg.t_embed_dim = 4;
    cfg.num_classes = 0;
    cfg.batch_size = 16;
    cfg.lr = 3e-3;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("make_batch respects module scope and teacher forcing") {
    const auto spec = new_schedule(4, 2, 2, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 20, 3);
    Rng rng(5);

    std::vector<size_t> indices;
    const auto b1 = make_batch(ds, spec, 1, rng, 64, &indices);
    CHECK(indices.size() == 64);
    for (const auto& s : b1) {
        CHECK(s.patch_pos >= 1);
        CHECK(s.patch_pos <= 4);
        CHECK(s.prefix.size() <= 3 * 2);  // module 1 prefixes: 0..3 tokens
        CHECK(s.x.size() == 2);
        CHECK(s.t >= 0.0);
        CHECK(s.t <= 1.0);
    }

    const auto b2 = make_batch(ds, spec, 2, rng, 64);
    bool saw_i1 = false;
    for (const auto& s : b2) {
        if (s.patch_pos == 1) saw_i1 = true;
        CHECK(s.x.size() == 4 * 2);
    }
    CHECK_FALSE(saw_i1);  // larger modules never train patch 1

    // teacher forcing: prefix bytes equal the item's leading tokens
    Rng rng2(5);
    std::vector<size_t> idx2;
    const auto again = make_batch(ds, spec, 1, rng2, 64, &idx2);
    CHECK(idx2 == indices);
    for (size_t b = 0; b < again.size(); ++b) {
        const auto& item = ds.items[idx2[b]];
        const auto& s = again[b];
        CHECK(std::memcmp(s.prefix.data(), item.tokens.data(),
                          s.prefix.size() * sizeof(double)) == 0);
        // the target patch is the true patch at that position
        const auto [lo, hi] = patch_range(spec, {1, s.patch_pos});
        CHECK(std::memcmp(s.x.data(), item.tokens.data() + (lo - 1) * spec.c,
                          s.x.size() * sizeof(double)) == 0);
    }

    CHECK_THROWS_AS(make_batch(Dataset{4, 2, 2, Ordering::morton, {}, {}}, spec, 1, rng, 4),
                    Error);
}

TEST_CASE("single sgd step on a quadratic decreases the loss") {
    // loss(w) = (w - 3)^2 has curvature 2; sgd converges for lr < 1
    double w = 0.0;
    const double lr = 0.1;
    for (int step = 0; step < 200; ++step) w -= lr * 2.0 * (w - 3.0);
    CHECK(w == doctest::Approx(3.0).epsilon(1e-6));

    double w1 = 10.0;
    const double before = (w1 - 3.0) * (w1 - 3.0);
    w1 -= 0.4 * 2.0 * (w1 - 3.0);
    CHECK((w1 - 3.0) * (w1 - 3.0) < before);
}

TEST_CASE("pretrain with zero steps returns the initial params") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 10, 1);
    auto cfg = fast_cfg();
    cfg.pretrain_steps = 0;
    const auto result = pretrain_module(ds, 1, cfg);
    const auto fresh = init_params(result.params.arch, mix_seed(cfg.seed, 2000 + 1));
    CHECK(result.params.weights == fresh.weights);
    CHECK(result.history.records.empty());
}

TEST_CASE("pretraining is bitwise reproducible") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 50, 2);
    auto cfg = fast_cfg();
    cfg.pretrain_steps = 30;
    const auto a = pretrain_module(ds, 1, cfg);
    const auto b = pretrain_module(ds, 1, cfg);
    CHECK(a.params.weights == b.params.weights);
    REQUIRE(a.history.records.size() == b.history.records.size());
    for (size_t j = 0; j < a.history.records.size(); ++j) {
        CHECK(a.history.records[j].l_module == b.history.records[j].l_module);
        CHECK(a.history.records[j].grad_norm == b.history.records[j].grad_norm);
    }
}

TEST_CASE("pretraining on iid gauss reduces the loss by at least 20%") {
    // c=1, module 1: the zero-velocity baseline loss is E[(eps-x)^2] = 2.
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 2000, 11);
    auto cfg = fast_cfg();
    cfg.batch_size = 64;
    cfg.pretrain_steps = 2000;
    const auto result = pretrain_module(ds, 1, cfg);

    // compare window means at the two ends of the trace
    double head = 0.0, tail = 0.0;
    const size_t window = 50;
    for (size_t j = 0; j < window; ++j) {
        head += result.history.records[j].l_module;
        tail += result.history.records[result.history.records.size() - 1 - j].l_module;
    }
    head /= window;
    tail /= window;
    CHECK(tail < 0.8 * head);
    // regression baseline: fixed seed lands close to the irreducible value
    CHECK(tail < 1.75);
    CHECK(tail > 1.40);
}

TEST_CASE("finetune with zero steps returns params unchanged") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 10, 1);
    auto cfg = fast_cfg();
    cfg.finetune_steps = 0;
    std::vector<VelocityParams> params;
    for (int m = 1; m <= 2; ++m)
        params.push_back(init_params(arch_for_module(spec, m, cfg), m));
    const auto before = params;
    const auto result = finetune_all(ds, std::move(params), cfg);
    for (int m = 0; m < 2; ++m) CHECK(result.params[m].weights == before[m].weights);
}

TEST_CASE("finetune with lambda_coor=0 continues pretraining exactly") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 100, 4);
    auto cfg = fast_cfg();
    cfg.pretrain_steps = 25;
    cfg.lambda_coor = 0.0;
    cfg.finetune_steps = 25;

    // finetune from fresh init draws the same per-module batch streams, so
    // the joint trajectory matches per-module pretraining step by step
    std::vector<VelocityParams> init;
    for (int m = 1; m <= 2; ++m)
        init.push_back(
            init_params(arch_for_module(spec, m, cfg), mix_seed(cfg.seed, 2000 + m)));
    const auto joint = finetune_all(ds, init, cfg);

    for (int m = 1; m <= 2; ++m) {
        const auto solo = pretrain_module(ds, m, cfg);
        CHECK(solo.params.weights == joint.params[m - 1].weights);
    }

    // the step-0 trace equals the sum of the per-module traces
    const auto solo1 = pretrain_module(ds, 1, cfg);
    const auto solo2 = pretrain_module(ds, 2, cfg);
    CHECK(joint.history.records[0].l_module ==
          doctest::Approx(solo1.history.records[0].l_module +
                          solo2.history.records[0].l_module));
    CHECK(joint.history.records[0].l_coor == 0.0);
}

TEST_CASE("finetune coordination trace matches an external evaluation") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 60, 5);
    auto cfg = fast_cfg();
    cfg.finetune_steps = 1;
    cfg.lambda_coor = 0.1;

    std::vector<VelocityParams> init;
    for (int m = 1; m <= 2; ++m)
        init.push_back(
            init_params(arch_for_module(spec, m, cfg), mix_seed(cfg.seed, 2000 + m)));

    const auto run = finetune_all(ds, init, cfg);

    // rebuild the step-0 coordination batch outside the trainer
    Rng batch_rng(mix_seed(cfg.seed, 1000 + 2));
    Rng coord_rng(mix_seed(cfg.seed, 3000 + 2));
    std::vector<size_t> indices;
    make_batch(ds, spec, 2, batch_rng, cfg.batch_size, &indices);
    const auto pairs = make_coord_batch(ds, spec, 2, coord_rng, indices);
    const double outside = coord_loss(init[0], init[1], pairs, spec);
    CHECK(run.history.records[0].l_coor == doctest::Approx(outside));
}

TEST_CASE("freeze_below_top keeps the smaller modules fixed") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 40, 6);
    auto cfg = fast_cfg();
    cfg.finetune_steps = 5;
    cfg.freeze_below_top = true;

    std::vector<VelocityParams> init;
    for (int m = 1; m <= 2; ++m)
        init.push_back(init_params(arch_for_module(spec, m, cfg), m));
    const auto before = init;
    const auto run = finetune_all(ds, std::move(init), cfg);
    CHECK(run.params[0].weights == before[0].weights);
    CHECK(run.params[1].weights != before[1].weights);
}

TEST_CASE("trainer rejects inconsistent inputs") {
    const auto spec = new_schedule(4, 2, 1, Ordering::morton);
    const auto ds = gen_iid_gauss(spec, 10, 1);
    auto cfg = fast_cfg();

    CHECK_THROWS_AS(pretrain_module(ds, 3, cfg), Error);

    auto bad_cfg = cfg;
    bad_cfg.lr = -1.0;
    CHECK_THROWS_AS(pretrain_module(ds, 1, bad_cfg), Error);

    std::vector<VelocityParams> wrong{init_params(arch_for_module(spec, 1, cfg), 1)};
    CHECK_THROWS_AS(finetune_all(ds, wrong, cfg), Error);
}
