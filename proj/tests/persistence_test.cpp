#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nestar/binio.hpp"
#include "nestar/persistence.hpp"

using namespace nestar;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("checkpoint round-trip is byte-identical") {
    const auto spec = new_schedule(4, 2, 2, Ordering::morton);
    TrainConfig cfg;
    cfg.hidden_width = 6;
    cfg.hidden_layers = 1;
    cfg.t_embed_dim = 4;
    cfg.num_classes = 3;
    std::vector<VelocityParams> params{init_params(arch_for_module(spec, 1, cfg), 1),
                                       init_params(arch_for_module(spec, 2, cfg), 2)};

    const auto path = temp_path("nestar_ckpt_test.nstr");
    save_checkpoint(path, spec, params);
    const auto loaded = load_checkpoint(path);

    CHECK(loaded.schedule.k == spec.k);
    CHECK(loaded.schedule.M == spec.M);
    CHECK(loaded.schedule.n == spec.n);
    REQUIRE(loaded.params_list.size() == 2);
    for (size_t m = 0; m < 2; ++m) {
        CHECK(loaded.params_list[m].arch == params[m].arch);
        CHECK(loaded.params_list[m].weights == params[m].weights);  // bitwise
    }

    const auto path2 = temp_path("nestar_ckpt_test2.nstr");
    save_checkpoint(path2, loaded.schedule, loaded.params_list);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint corruption and structure errors") {
    const auto spec = new_schedule(4, 1, 1, Ordering::morton);
    TrainConfig cfg;
    cfg.hidden_width = 4;
    cfg.hidden_layers = 1;
    cfg.t_embed_dim = 2;
    std::vector<VelocityParams> params{init_params(arch_for_module(spec, 1, cfg), 7)};
    const auto path = temp_path("nestar_ckpt_bad.nstr");
    save_checkpoint(path, spec, params);

    auto bytes = read_file_bytes(path);

    // flip one payload byte deep in the weights
    auto corrupted = bytes;
    corrupted[bytes.size() - 12] ^= 0x01;
    write_file_bytes(path, corrupted);
    try {
        load_checkpoint(path);
        FAIL("corruption not detected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::crc_mismatch);
    }

    // wrong magic is a format error
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    write_file_bytes(path, bad_magic);
    try {
        load_checkpoint(path);
        FAIL("bad magic not detected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::format);
    }

    // module count mismatch: save one-module checkpoint, expect M=2 to fail
    write_file_bytes(path, bytes);
    const auto other = new_schedule(4, 2, 1, Ordering::morton);
    CHECK_THROWS_AS(save_checkpoint(path, other, params), Error);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("empty config materializes the documented defaults") {
    const auto path = temp_path("nestar_cfg_empty.json");
    write_text(path, "");
    const auto cfg = load_config(path);
    CHECK(cfg.schedule.k == 4);
    CHECK(cfg.schedule.M == 2);
    CHECK(cfg.schedule.c == 2);
    CHECK(cfg.schedule.ordering == Ordering::morton);
    CHECK(cfg.train.lambda_module == 1.0);
    CHECK(cfg.train.lambda_coor == 0.1);
    CHECK(cfg.sampler.ode_steps == 50);
    CHECK(cfg.train.optimizer == OptimizerKind::adam);
    CHECK(cfg.train.lr == 1e-3);
    CHECK(cfg.train.grad_clip == 10.0);
    std::remove(path.c_str());
}

TEST_CASE("unknown keys are rejected by name") {
    try {
        parse_config(R"({"train": {"lamda_coor": 0.1}})");
        FAIL("unknown key accepted");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("lamda_coor") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"schdule": {}})"), Error);
}

TEST_CASE("invalid values fail validation") {
    CHECK_THROWS_AS(parse_config(R"({"train": {"lambda_coor": -1.0}})"), Error);
    CHECK_THROWS_AS(parse_config(R"({"train": {"lr": 0.0}})"), Error);
    CHECK_THROWS_AS(parse_config(R"({"schedule": {"k": 1}})"), Error);
    CHECK_THROWS_AS(parse_config(R"({"sampler": {"ode_steps": 0}})"), Error);
    CHECK_THROWS_AS(parse_config("{ not json"), Error);
}

TEST_CASE("config echo round-trips and hash is stable") {
    auto cfg = parse_config(R"({
        "schedule": {"k": 4, "M": 3, "c": 1},
        "train": {"lr": 0.01, "grad_clip": null, "seed": 42},
        "data": {"generator": "iid-gauss"},
        "sampler": {"ode_steps": 12}
    })");
    CHECK(cfg.schedule.M == 3);
    CHECK_FALSE(cfg.train.grad_clip);
    CHECK(cfg.train.num_classes == 0);  // iid-gauss defaults unconditional

    const auto echo = config_echo(cfg);
    const auto reparsed = parse_config(echo);
    CHECK(config_echo(reparsed) == echo);
    CHECK(config_hash(reparsed) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);

    auto other = cfg;
    other.train.seed = 43;
    CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("hier params materialize corner means") {
    const auto cfg = parse_config(R"({"schedule": {"k":4, "M":2, "c":2}})");
    const auto hp = hier_params_from(cfg);
    REQUIRE(hp.class_means.size() == 4);
    CHECK(hp.class_means[0] == std::vector<double>{-2.0, -2.0});
    CHECK(hp.class_means[1] == std::vector<double>{2.0, -2.0});
    CHECK(hp.class_means[2] == std::vector<double>{-2.0, 2.0});
    CHECK(hp.class_means[3] == std::vector<double>{2.0, 2.0});
    CHECK(hp.sigma_level == std::vector<double>{0.5, 0.5});

    // explicit means win
    const auto cfg2 = parse_config(
        R"({"schedule": {"k":4,"M":2,"c":1}, "data": {"num_classes": 2, "class_means": [[1.0],[5.0]]}})");
    const auto hp2 = hier_params_from(cfg2);
    CHECK(hp2.class_means[1] == std::vector<double>{5.0});
}
