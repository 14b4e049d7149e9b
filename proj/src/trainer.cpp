#include "nestar/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace nestar {

namespace {

// Stream tags so pretraining and finetuning draw module-m batches from the
// same deterministic sequence.
constexpr uint64_t kBatchStream = 1000;
constexpr uint64_t kInitStream = 2000;
constexpr uint64_t kCoordStream = 3000;

struct Optimizer {
    OptimizerKind kind;
    double lr, b1, b2, eps;
    std::vector<double> m, v;
    int64_t t = 0;

    Optimizer(const TrainConfig& cfg, size_t n)
        : kind(cfg.optimizer), lr(cfg.lr), b1(cfg.beta1), b2(cfg.beta2), eps(cfg.adam_eps) {
        if (kind == OptimizerKind::adam) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        }
    }

    void step(std::vector<double>& w, const std::vector<double>& g) {
        if (kind == OptimizerKind::sgd) {
            for (size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
            return;
        }
        ++t;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

double grad_norm_of(const std::vector<double>& g) {
    double acc = 0.0;
    for (double x : g) acc += x * x;
    return std::sqrt(acc);
}

// Scales g down to the clip norm when it exceeds it; returns the pre-clip norm.
double clip_grad(std::vector<double>& g, const std::optional<double>& clip) {
    const double norm = grad_norm_of(g);
    if (clip && norm > *clip && norm > 0.0) {
        const double scale = *clip / norm;
        for (double& x : g) x *= scale;
    }
    return norm;
}

ScheduleSpec schedule_of(const Dataset& ds) {
    return new_schedule(ds.k, ds.M, ds.c, ds.ordering);
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void TrainConfig::validate() const {
    require(lr > 0.0, ErrorKind::invalid_parameter, "lr must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            ErrorKind::invalid_parameter, "adam betas must lie in [0,1)");
    require(adam_eps > 0.0, ErrorKind::invalid_parameter, "adam eps must be > 0");
    require(batch_size >= 1, ErrorKind::invalid_parameter, "batch_size must be >= 1");
    require(pretrain_steps >= 0 && finetune_steps >= 0, ErrorKind::invalid_parameter,
            "step counts must be >= 0");
    require(lambda_module >= 0.0 && lambda_coor >= 0.0, ErrorKind::invalid_parameter,
            "lambda coefficients must be >= 0");
    require(!grad_clip || *grad_clip > 0.0, ErrorKind::invalid_parameter,
            "grad_clip must be > 0 when set");
    require(hidden_width >= 1, ErrorKind::invalid_parameter, "hidden_width must be >= 1");
    require(hidden_layers >= 0, ErrorKind::invalid_parameter, "hidden_layers must be >= 0");
    require(num_classes >= 0, ErrorKind::invalid_parameter, "num_classes must be >= 0");
}

void TrainHistory::save_csv(const std::string& path, bool record_timing) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << "step,l_module_total,l_coor_total,total,grad_norm,seconds\n";
    char line[256];
    for (const StepRecord& r : records) {
        std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g,%.17g,%.6f\n",
                      static_cast<long long>(r.step), r.l_module, r.l_coor, r.total,
                      r.grad_norm, record_timing ? r.seconds : 0.0);
        out << line;
    }
    require(out.good(), ErrorKind::io, "write failed for '" + path + "'");
}

ArchSpec arch_for_module(const ScheduleSpec& spec, int m, const TrainConfig& cfg) {
    require(m >= 1 && m <= spec.M, ErrorKind::out_of_range,
            "module index " + std::to_string(m) + " outside 1.." + std::to_string(spec.M));
    ArchSpec arch;
    arch.patch_tokens = static_cast<int>(spec.patch_len(m));
    arch.c = spec.c;
    arch.max_prefix = static_cast<int>(spec.patch_len(m) * (spec.k - 1));
    arch.hidden_width = cfg.hidden_width;
    arch.hidden_layers = cfg.hidden_layers;
    arch.t_embed_dim = cfg.t_embed_dim;
    arch.pos_slots = spec.k;
    arch.num_classes = cfg.num_classes;
    arch.validate();
    return arch;
}

ArchSpec arch_for_vanilla(const ScheduleSpec& spec, const TrainConfig& cfg) {
    ArchSpec arch;
    arch.patch_tokens = 1;
    arch.c = spec.c;
    arch.max_prefix = static_cast<int>(spec.n - 1);
    arch.hidden_width = cfg.hidden_width;
    arch.hidden_layers = cfg.hidden_layers;
    arch.t_embed_dim = cfg.t_embed_dim;
    arch.pos_slots = 1;  // the prefix mask already encodes the position
    arch.num_classes = cfg.num_classes;
    arch.validate();
    return arch;
}

std::vector<FlowSample> make_batch(const Dataset& dataset, const ScheduleSpec& spec, int m,
                                   Rng& rng, int batch_size,
                                   std::vector<size_t>* item_indices) {
    require(!dataset.items.empty(), ErrorKind::invalid_parameter, "empty dataset");
    check_fingerprint(dataset, spec);
    require(m >= 1 && m <= spec.M, ErrorKind::out_of_range,
            "module index " + std::to_string(m) + " outside 1.." + std::to_string(spec.M));
    require(batch_size >= 1, ErrorKind::invalid_parameter, "batch_size must be >= 1");

    const int c = spec.c;
    const int64_t patch_tokens = spec.patch_len(m);
    std::vector<FlowSample> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    if (item_indices) item_indices->clear();

    for (int b = 0; b < batch_size; ++b) {
        const size_t idx = static_cast<size_t>(rng.below(dataset.items.size()));
        if (item_indices) item_indices->push_back(idx);
        const DatasetItem& item = dataset.items[idx];

        // module 1 also produces its first patch (the lone first token);
        // larger modules inherit patch 1 from below and train on 2..k
        const int i = (m == 1) ? 1 + static_cast<int>(rng.below(spec.k))
                               : 2 + static_cast<int>(rng.below(spec.k - 1));
        FlowSample s;
        s.t = rng.uniform01();

        const auto [start, end] = patch_range(spec, PatchId{m, i});
        const size_t x_begin = static_cast<size_t>(start - 1) * c;
        const size_t x_vals = static_cast<size_t>(patch_tokens) * c;
        s.x.assign(item.tokens.begin() + x_begin, item.tokens.begin() + x_begin + x_vals);
        s.eps.resize(x_vals);
        for (double& v : s.eps) v = rng.normal();
        const size_t pfx_vals = static_cast<size_t>(prefix_len(spec, PatchId{m, i})) * c;
        s.prefix.assign(item.tokens.begin(), item.tokens.begin() + pfx_vals);
        s.patch_pos = i;
        s.class_id = static_cast<int>(item.class_id);
        batch.push_back(std::move(s));
    }
    return batch;
}

std::vector<CoordPair> make_coord_batch(const Dataset& dataset, const ScheduleSpec& spec,
                                        int m, Rng& rng,
                                        std::span<const size_t> item_indices) {
    require(m >= 2 && m <= spec.M, ErrorKind::out_of_range,
            "coordination module index m=" + std::to_string(m) + " outside 2..M");
    check_fingerprint(dataset, spec);

    const size_t span_vals = static_cast<size_t>(spec.patch_len(m)) * spec.c;
    std::vector<CoordPair> pairs;
    pairs.reserve(item_indices.size());
    for (size_t idx : item_indices) {
        require(idx < dataset.items.size(), ErrorKind::out_of_range,
                "dataset item index out of range");
        const DatasetItem& item = dataset.items[idx];
        CoordPair pair;
        pair.m = m;
        pair.t = rng.uniform01();
        pair.x_prefix.assign(item.tokens.begin(), item.tokens.begin() + span_vals);
        pair.eps.resize(span_vals);
        for (double& v : pair.eps) v = rng.normal();
        pair.class_id = static_cast<int>(item.class_id);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

TrainResult pretrain_module(const Dataset& dataset, int m, const TrainConfig& cfg) {
    cfg.validate();
    require(!dataset.items.empty(), ErrorKind::invalid_parameter, "empty dataset");
    const ScheduleSpec spec = schedule_of(dataset);
    check_fingerprint(dataset, spec);

    TrainResult result;
    result.params = init_params(arch_for_module(spec, m, cfg),
                                mix_seed(cfg.seed, kInitStream + static_cast<uint64_t>(m)));

    Rng batch_rng(mix_seed(cfg.seed, kBatchStream + static_cast<uint64_t>(m)));
    Optimizer opt(cfg, result.params.weights.size());
    const auto start = std::chrono::steady_clock::now();

    for (int64_t step = 0; step < cfg.pretrain_steps; ++step) {
        const auto batch = make_batch(dataset, spec, m, batch_rng, cfg.batch_size);
        auto lg = module_loss_and_grad(result.params, batch);
        require(std::isfinite(lg.loss), ErrorKind::divergence,
                "non-finite loss at pretrain step " + std::to_string(step) + " (module " +
                    std::to_string(m) + ")");
        const double norm = clip_grad(lg.grad, cfg.grad_clip);
        require(std::isfinite(norm), ErrorKind::divergence,
                "non-finite gradient at pretrain step " + std::to_string(step));
        opt.step(result.params.weights, lg.grad);
        result.history.records.push_back(
            {step, lg.loss, 0.0, lg.loss, norm, elapsed_seconds(start)});
    }
    return result;
}

FinetuneResult finetune_all(const Dataset& dataset, std::vector<VelocityParams> params_list,
                            const TrainConfig& cfg) {
    cfg.validate();
    require(!dataset.items.empty(), ErrorKind::invalid_parameter, "empty dataset");
    const ScheduleSpec spec = schedule_of(dataset);
    check_fingerprint(dataset, spec);
    require(params_list.size() == static_cast<size_t>(spec.M), ErrorKind::structural_mismatch,
            "parameter list has " + std::to_string(params_list.size()) +
                " modules, schedule expects " + std::to_string(spec.M));
    for (int m = 1; m <= spec.M; ++m) {
        const ArchSpec expect = arch_for_module(spec, m, cfg);
        require(params_list[m - 1].arch == expect, ErrorKind::structural_mismatch,
                "module " + std::to_string(m) + " arch does not match schedule/config");
    }

    FinetuneResult result;
    result.params = std::move(params_list);

    std::vector<Rng> batch_rngs, coord_rngs;
    std::vector<Optimizer> opts;
    for (int m = 1; m <= spec.M; ++m) {
        batch_rngs.emplace_back(mix_seed(cfg.seed, kBatchStream + static_cast<uint64_t>(m)));
        coord_rngs.emplace_back(mix_seed(cfg.seed, kCoordStream + static_cast<uint64_t>(m)));
        opts.emplace_back(cfg, result.params[m - 1].weights.size());
    }

    const auto start = std::chrono::steady_clock::now();
    std::vector<size_t> item_indices;

    for (int64_t step = 0; step < cfg.finetune_steps; ++step) {
        JointBatch batch;
        batch.module_samples.resize(spec.M);
        batch.coord_pairs.resize(spec.M);
        for (int m = 1; m <= spec.M; ++m) {
            batch.module_samples[m - 1] =
                make_batch(dataset, spec, m, batch_rngs[m - 1], cfg.batch_size, &item_indices);
            if (m >= 2 && cfg.lambda_coor > 0.0)
                batch.coord_pairs[m - 1] =
                    make_coord_batch(dataset, spec, m, coord_rngs[m - 1], item_indices);
        }

        auto tl = total_loss(result.params, batch, cfg.lambda_module, cfg.lambda_coor, spec);
        require(std::isfinite(tl.total), ErrorKind::divergence,
                "non-finite loss at finetune step " + std::to_string(step));

        double norm_sq = 0.0;
        for (int m = 1; m <= spec.M; ++m) {
            const double norm = clip_grad(tl.grads[m - 1], cfg.grad_clip);
            require(std::isfinite(norm), ErrorKind::divergence,
                    "non-finite gradient at finetune step " + std::to_string(step));
            norm_sq += norm * norm;
            if (cfg.freeze_below_top && m < spec.M) continue;
            opts[m - 1].step(result.params[m - 1].weights, tl.grads[m - 1]);
        }

        double l_module = 0.0, l_coor = 0.0;
        for (int m = 1; m <= spec.M; ++m) {
            l_module += tl.module_terms[m - 1];
            l_coor += tl.coord_terms[m - 1];
        }
        result.history.records.push_back({step, l_module, l_coor, tl.total,
                                          std::sqrt(norm_sq), elapsed_seconds(start)});
    }
    return result;
}

}  // namespace nestar
