#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "nestar/data.hpp"
#include "nestar/gradcheck.hpp"
#include "nestar/metrics.hpp"
#include "nestar/persistence.hpp"
#include "nestar/sampler.hpp"
#include "nestar/schedule.hpp"
#include "nestar/trainer.hpp"

namespace fs = std::filesystem;
using namespace nestar;

namespace {

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << text;
    require(out.good(), ErrorKind::io, "write failed for '" + path + "'");
}

// Every run directory gets the materialized config echo and the build
// version string, under fixed filenames.
void stamp_run_dir(const std::string& out_dir, const RunConfig& cfg) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "config.echo").string(), config_echo(cfg));
    write_text_file((fs::path(out_dir) / "version.txt").string(),
                    std::string(NESTAR_VERSION) + "\n");
}

RunConfig config_from(const std::string& config_path) {
    return config_path.empty() ? default_config() : load_config(config_path);
}

std::string out_file(const std::string& out_dir, const char* name) {
    return (fs::path(out_dir) / name).string();
}

VecSet flatten_items(const Dataset& ds) {
    VecSet vecs;
    vecs.reserve(ds.items.size());
    for (const auto& item : ds.items) vecs.push_back(item.tokens);
    return vecs;
}

// ---------------------------------------------------------------------------
// commands

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<uint64_t> seed) {
    RunConfig cfg = config_from(config_path);
    if (seed) cfg.data.seed = *seed;
    stamp_run_dir(out_dir, cfg);

    Dataset ds;
    if (cfg.data.generator == "hier-quadrant") {
        ds = gen_hier_quadrant(cfg.schedule, hier_params_from(cfg), cfg.data.num_items,
                               cfg.data.seed);
    } else {
        ds = gen_iid_gauss(cfg.schedule, cfg.data.num_items, cfg.data.seed);
    }
    const auto path = out_file(out_dir, "dataset.nsds");
    save_dataset(ds, path);
    std::cout << "wrote " << ds.items.size() << " items (" << cfg.data.generator
              << ", n=" << cfg.schedule.n << ", c=" << cfg.schedule.c << ") to " << path
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, std::optional<uint64_t> seed) {
    RunConfig cfg = config_from(config_path);
    if (seed) cfg.train.seed = *seed;
    const Dataset ds = load_dataset(data_path);
    check_fingerprint(ds, cfg.schedule);
    stamp_run_dir(out_dir, cfg);

    std::vector<VelocityParams> params;
    TrainHistory combined;
    int64_t step_base = 0;
    for (int m = 1; m <= cfg.schedule.M; ++m) {
        auto result = pretrain_module(ds, m, cfg.train);
        const double final_loss =
            result.history.records.empty() ? 0.0 : result.history.records.back().l_module;
        std::cout << "module " << m << ": " << cfg.train.pretrain_steps
                  << " pretrain steps, final loss " << final_loss << "\n";
        for (StepRecord r : result.history.records) {
            r.step += step_base;
            combined.records.push_back(r);
        }
        step_base += cfg.train.pretrain_steps;
        params.push_back(std::move(result.params));
    }

    save_checkpoint(out_file(out_dir, "checkpoint.nstr"), cfg.schedule, params);
    combined.save_csv(out_file(out_dir, "history.csv"), cfg.train.record_timing);
    std::cout << "wrote checkpoint.nstr and history.csv to " << out_dir << "\n";
    return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& data_path,
                 const std::string& checkpoint_path, const std::string& out_dir,
                 std::optional<uint64_t> seed) {
    RunConfig cfg = config_from(config_path);
    if (seed) cfg.train.seed = *seed;
    const Dataset ds = load_dataset(data_path);
    check_fingerprint(ds, cfg.schedule);

    auto ckpt = load_checkpoint(checkpoint_path);
    require(ckpt.schedule.same_shape(cfg.schedule), ErrorKind::structural_mismatch,
            "checkpoint schedule does not match the configured schedule");
    stamp_run_dir(out_dir, cfg);

    auto result = finetune_all(ds, std::move(ckpt.params_list), cfg.train);
    if (!result.history.records.empty()) {
        const auto& first = result.history.records.front();
        const auto& last = result.history.records.back();
        std::cout << "finetune: " << cfg.train.finetune_steps << " steps, total "
                  << first.total << " -> " << last.total << ", coordination "
                  << first.l_coor << " -> " << last.l_coor << "\n";
    }
    save_checkpoint(out_file(out_dir, "checkpoint.nstr"), cfg.schedule, result.params);
    result.history.save_csv(out_file(out_dir, "history.csv"), cfg.train.record_timing);
    std::cout << "wrote checkpoint.nstr and history.csv to " << out_dir << "\n";
    return 0;
}

int cmd_sample(const std::string& checkpoint_path, const std::string& out_dir, int num,
               int steps, uint64_t seed, std::optional<int> class_id, int jobs) {
    require(num >= 1, ErrorKind::invalid_parameter, "--num must be >= 1");
    require(jobs >= 1, ErrorKind::invalid_parameter, "--jobs must be >= 1");
    const auto ckpt = load_checkpoint(checkpoint_path);

    RunConfig cfg = default_config();
    cfg.schedule = ckpt.schedule;
    cfg.train.num_classes = ckpt.params_list[0].arch.num_classes;
    cfg.train.hidden_width = ckpt.params_list[0].arch.hidden_width;
    cfg.train.hidden_layers = ckpt.params_list[0].arch.hidden_layers;
    cfg.train.t_embed_dim = ckpt.params_list[0].arch.t_embed_dim;
    cfg.train.seed = seed;
    if (ckpt.schedule.ordering != Ordering::morton || ckpt.schedule.k != 4)
        cfg.data.generator = "iid-gauss";  // keep the echo loadable
    cfg.data.num_classes = std::max(1, ckpt.params_list[0].arch.num_classes);
    cfg.data.sigma_level.assign(static_cast<size_t>(ckpt.schedule.M), 0.5);
    cfg.sampler.ode_steps = steps;
    cfg.sampler.num_samples = num;
    cfg.validate();
    stamp_run_dir(out_dir, cfg);

    Dataset out;
    out.k = ckpt.schedule.k;
    out.M = ckpt.schedule.M;
    out.c = ckpt.schedule.c;
    out.ordering = ckpt.schedule.ordering;
    out.items.resize(static_cast<size_t>(num));
    out.meta = {"sample", "checkpoint=" + checkpoint_path, seed};

    const int num_classes = ckpt.params_list[0].arch.num_classes;
    NfeReport report;

    // Each item derives its own seed and class, so chunked execution is
    // bitwise identical to serial.
    auto run_item = [&](int idx) {
        std::optional<int> cls = class_id;
        if (!cls && num_classes > 0) {
            Rng class_rng(mix_seed(seed, 20000 + static_cast<uint64_t>(idx)));
            cls = static_cast<int>(class_rng.below(num_classes));
        }
        SampleRequest req{ckpt.schedule, ckpt.params_list, cls,
                          mix_seed(seed, 10000 + static_cast<uint64_t>(idx)), steps};
        auto [tokens, item_report] = generate(req);
        out.items[idx].class_id = cls ? static_cast<uint32_t>(*cls) : 0;
        out.items[idx].tokens = std::move(tokens);
        if (idx == 0) report = std::move(item_report);
    };

    if (jobs == 1) {
        for (int idx = 0; idx < num; ++idx) run_item(idx);
    } else {
        std::vector<std::thread> workers;
        for (int w = 0; w < jobs; ++w)
            workers.emplace_back([&, w] {
                for (int idx = w; idx < num; idx += jobs) run_item(idx);
            });
        for (auto& t : workers) t.join();
    }

    save_dataset(out, out_file(out_dir, "samples.nsds"));
    report.save_csv(out_file(out_dir, "nfe.csv"));
    std::cout << "wrote " << num << " samples (" << report.patches_generated
              << " patches, " << report.velocity_calls << " velocity calls each) to "
              << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& samples_path, const std::string& reference_path,
             const std::string& out_dir, const std::string& config_path) {
    RunConfig cfg = config_from(config_path);
    const Dataset samples = load_dataset(samples_path);
    const Dataset reference = load_dataset(reference_path);
    require(samples.k == reference.k && samples.M == reference.M &&
                samples.c == reference.c && samples.ordering == reference.ordering,
            ErrorKind::structural_mismatch,
            "samples and reference datasets have different fingerprints");
    require(!samples.items.empty() && !reference.items.empty(),
            ErrorKind::invalid_parameter, "both datasets must be non-empty");
    stamp_run_dir(out_dir, cfg);

    const VecSet gen = flatten_items(samples);
    const VecSet ref = flatten_items(reference);

    const double mmd_gen = mmd2(gen, ref);

    // context: the same statistic between two disjoint halves of the reference
    double mmd_halves = 0.0;
    if (reference.items.size() >= 2) {
        const size_t half = ref.size() / 2;
        const VecSet a(ref.begin(), ref.begin() + half);
        const VecSet b(ref.begin() + half, ref.end());
        mmd_halves = mmd2(a, b);
    }

    // per-class means of the reference are the mode centers
    uint32_t max_class = 0;
    for (const auto& item : reference.items) max_class = std::max(max_class, item.class_id);
    VecSet centers(max_class + 1, std::vector<double>(ref[0].size(), 0.0));
    std::vector<int64_t> counts(max_class + 1, 0);
    for (const auto& item : reference.items) {
        ++counts[item.class_id];
        for (size_t j = 0; j < item.tokens.size(); ++j)
            centers[item.class_id][j] += item.tokens[j];
    }
    for (size_t cls = 0; cls <= max_class; ++cls) {
        require(counts[cls] > 0, ErrorKind::invalid_parameter,
                "reference class " + std::to_string(cls) + " has no items");
        for (double& v : centers[cls]) v /= static_cast<double>(counts[cls]);
    }
    const auto coverage = mode_coverage(gen, centers);

    std::ofstream csv(out_file(out_dir, "metrics.csv"), std::ios::binary);
    require(csv.good(), ErrorKind::io, "cannot write metrics.csv");
    char buf[256];
    csv << "# generator=" << cfg.data.generator << " seed=" << cfg.train.seed
        << " data_seed=" << cfg.data.seed << " config_hash=" << config_hash(cfg) << "\n";
    csv << "metric,value\n";
    std::snprintf(buf, sizeof(buf), "mmd2,%.17g\n", mmd_gen);
    csv << buf;
    std::snprintf(buf, sizeof(buf), "mmd2_reference_halves,%.17g\n", mmd_halves);
    csv << buf;
    std::snprintf(buf, sizeof(buf), "coverage,%.17g\n", coverage.coverage);
    csv << buf;
    std::snprintf(buf, sizeof(buf), "entropy,%.17g\n", coverage.entropy);
    csv << buf;
    require(csv.good(), ErrorKind::io, "write failed for metrics.csv");

    std::cout << "mmd2=" << mmd_gen << " mmd2_reference_halves=" << mmd_halves
              << " coverage=" << coverage.coverage << " entropy=" << coverage.entropy
              << "\n";
    return 0;
}

int cmd_check_grad(uint64_t seed, int trials) {
    const auto report = run_grad_check(seed, trials);
    std::printf("trials=%d max_rel_err_module=%.3e max_rel_err_coord=%.3e\n",
                report.trials, report.max_rel_err_module, report.max_rel_err_coord);
    const bool ok = report.worst() < 1e-4;
    std::printf("max_rel_err=%.3e %s\n", report.worst(), ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

int cmd_count_nfe(int k, int M, int steps) {
    int64_t n = 1;
    for (int j = 0; j < M; ++j) n *= k;
    const auto row = complexity_report(k, M, steps, n);
    std::printf("nested %lld vs vanilla %lld patch generations for %lld tokens, ratio %.2f\n",
                static_cast<long long>(row.nestar_patches),
                static_cast<long long>(row.vanilla_patches),
                static_cast<long long>(row.n), row.ratio);
    std::printf("k,M,steps,n,nestar_patches,vanilla_patches,nestar_nfe,vanilla_nfe,ratio\n");
    std::printf("%d,%d,%d,%lld,%lld,%lld,%lld,%lld,%.4f\n", row.k, row.M, row.steps,
                static_cast<long long>(row.n), static_cast<long long>(row.nestar_patches),
                static_cast<long long>(row.vanilla_patches),
                static_cast<long long>(row.nestar_nfe),
                static_cast<long long>(row.vanilla_nfe), row.ratio);
    return 0;
}

int cmd_bench(const std::string& config_path, int steps, int num, uint64_t seed) {
    require(num >= 1, ErrorKind::invalid_parameter, "--num must be >= 1");
    RunConfig cfg = config_from(config_path);
    const ScheduleSpec& spec = cfg.schedule;

    std::vector<VelocityParams> modules;
    for (int m = 1; m <= spec.M; ++m)
        modules.push_back(
            init_params(arch_for_module(spec, m, cfg.train), mix_seed(seed, 500 + m)));
    const auto vanilla = init_params(arch_for_vanilla(spec, cfg.train), mix_seed(seed, 600));

    using clock = std::chrono::steady_clock;

    const auto t0 = clock::now();
    int64_t nested_nfe = 0;
    for (int idx = 0; idx < num; ++idx) {
        const auto [tokens, report] =
            generate({spec, modules, std::nullopt, mix_seed(seed, idx), steps});
        nested_nfe = report.velocity_calls;
    }
    const double nested_sec = std::chrono::duration<double>(clock::now() - t0).count() / num;

    const auto t1 = clock::now();
    int64_t vanilla_nfe = 0;
    for (int idx = 0; idx < num; ++idx) {
        const auto [tokens, report] =
            generate_vanilla_ar(spec, vanilla, std::nullopt, mix_seed(seed, idx), steps);
        vanilla_nfe = report.velocity_calls;
    }
    const double vanilla_sec = std::chrono::duration<double>(clock::now() - t1).count() / num;

    std::printf("model,patches,velocity_calls,seconds_per_sample\n");
    std::printf("nested,%lld,%lld,%.6f\n",
                static_cast<long long>((spec.k - 1) * spec.M + 1),
                static_cast<long long>(nested_nfe), nested_sec);
    std::printf("vanilla,%lld,%lld,%.6f\n", static_cast<long long>(spec.n),
                static_cast<long long>(vanilla_nfe), vanilla_sec);
    std::printf("speedup,%.2fx\n", vanilla_sec / nested_sec);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nested autoregressive flow-matching sandbox"};
    app.require_subcommand(1);

    std::string config_path, data_path, checkpoint_path, out_dir, samples_path,
        reference_path;
    std::optional<uint64_t> seed_override;
    uint64_t seed = 0;
    int num = 1000, steps = 50, trials = 100, jobs = 1, k = 4, M = 4;
    std::optional<int> class_id;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--config", config_path, "run config (JSON)");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed_override, "override data seed");

    auto* train = app.add_subcommand("train", "pretrain every module on its own loss");
    train->add_option("--config", config_path, "run config (JSON)");
    train->add_option("--data", data_path, "dataset file")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--seed", seed_override, "override train seed");

    auto* fine = app.add_subcommand("finetune", "joint stage with the combined objective");
    fine->add_option("--config", config_path, "run config (JSON)");
    fine->add_option("--data", data_path, "dataset file")->required();
    fine->add_option("--checkpoint", checkpoint_path, "input checkpoint")->required();
    fine->add_option("--out", out_dir, "output directory")->required();
    fine->add_option("--seed", seed_override, "override train seed");

    auto* sample = app.add_subcommand("sample", "nested generation from a checkpoint");
    sample->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    sample->add_option("--out", out_dir, "output directory")->required();
    sample->add_option("--num", num, "number of samples");
    sample->add_option("--steps", steps, "ODE solver steps");
    sample->add_option("--seed", seed, "sampling seed");
    sample->add_option("--class-id", class_id, "fix the class label");
    sample->add_option("--jobs", jobs, "parallel workers over samples");

    auto* eval = app.add_subcommand("eval", "MMD and mode coverage against a reference");
    eval->add_option("--samples", samples_path, "generated dataset")->required();
    eval->add_option("--reference", reference_path, "reference dataset")->required();
    eval->add_option("--out", out_dir, "output directory")->required();
    eval->add_option("--config", config_path, "run config (for the metrics header)");

    auto* grad = app.add_subcommand("check-grad", "analytic vs finite-difference gradients");
    grad->add_option("--seed", seed, "rng seed");
    grad->add_option("--trials", trials, "random configurations");

    auto* nfe = app.add_subcommand("count-nfe", "evaluation-count table");
    nfe->add_option("--k", k, "patches per module");
    nfe->add_option("--M", M, "number of modules");
    nfe->add_option("--steps", steps, "ODE solver steps");

    auto* bench = app.add_subcommand("bench", "per-sample timing, nested vs vanilla");
    bench->add_option("--config", config_path, "run config (JSON)");
    bench->add_option("--steps", steps, "ODE solver steps");
    bench->add_option("--num", num, "samples to time");
    bench->add_option("--seed", seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed_override);
        if (train->parsed()) return cmd_train(config_path, data_path, out_dir, seed_override);
        if (fine->parsed())
            return cmd_finetune(config_path, data_path, checkpoint_path, out_dir,
                                seed_override);
        if (sample->parsed())
            return cmd_sample(checkpoint_path, out_dir, num, steps, seed, class_id, jobs);
        if (eval->parsed()) return cmd_eval(samples_path, reference_path, out_dir, config_path);
        if (grad->parsed()) return cmd_check_grad(seed, trials);
        if (nfe->parsed()) return cmd_count_nfe(k, M, steps);
        if (bench->parsed()) return cmd_bench(config_path, steps, num, seed);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
