#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nestar/data.hpp"
#include "nestar/objective.hpp"
#include "nestar/rng.hpp"
#include "nestar/schedule.hpp"
#include "nestar/velocity.hpp"

namespace nestar {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 64;
    int64_t pretrain_steps = 2000;
    int64_t finetune_steps = 1000;
    double lambda_module = 1.0;
    double lambda_coor = 0.1;
    uint64_t seed = 0;
    std::optional<double> grad_clip = 10.0;  // global-norm clip
    bool freeze_below_top = false;           // finetune: keep modules < M fixed

    // network options shared by every module's arch
    int hidden_width = 128;
    int hidden_layers = 2;
    int t_embed_dim = 8;
    int num_classes = 0;

    // when false (default), history CSV writes 0 in the seconds column so
    // identical runs produce bitwise-identical files; wall time still lands
    // in the in-memory history
    bool record_timing = false;

    void validate() const;
};

struct StepRecord {
    int64_t step = 0;
    double l_module = 0.0;
    double l_coor = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;
    double seconds = 0.0;  // wall time since run start
};

struct TrainHistory {
    std::vector<StepRecord> records;

    // columns: step,l_module_total,l_coor_total,total,grad_norm,seconds
    void save_csv(const std::string& path, bool record_timing) const;
};

// Velocity-network arch for module m of the schedule (pos_slots = k,
// prefix capacity k^(m-1)*(k-1)).
ArchSpec arch_for_module(const ScheduleSpec& spec, int m, const TrainConfig& cfg);

// Arch of the token-by-token baseline model: single-token patches with
// prefix capacity n-1 and a single position slot.
ArchSpec arch_for_vanilla(const ScheduleSpec& spec, const TrainConfig& cfg);

// Teacher-forced batch for module m: per sample an item, a patch index
// (uniform over 1..k for m=1, 2..k for m >= 2), t ~ U[0,1], fresh noise,
// and the true prefix x_{1:k^(m-1)(i-1)}. Item indices are returned so the
// coordination batch can reuse them.
std::vector<FlowSample> make_batch(const Dataset& dataset, const ScheduleSpec& spec, int m,
                                   Rng& rng, int batch_size,
                                   std::vector<size_t>* item_indices = nullptr);

// Coordination pairs for module m over the given dataset items, with fresh
// shared (t, eps) per pair.
std::vector<CoordPair> make_coord_batch(const Dataset& dataset, const ScheduleSpec& spec,
                                        int m, Rng& rng,
                                        std::span<const size_t> item_indices);

struct TrainResult {
    VelocityParams params;
    TrainHistory history;
};

struct FinetuneResult {
    std::vector<VelocityParams> params;
    TrainHistory history;
};

// cfg.pretrain_steps optimizer steps on the module-m flow-matching loss,
// batches drawn from a per-module stream derived from cfg.seed.
TrainResult pretrain_module(const Dataset& dataset, int m, const TrainConfig& cfg);

// Joint steps on the combined objective. Module batches use the same
// per-module streams as pretraining, so with lambda_coor = 0 the parameter
// trajectories coincide with continued per-module pretraining.
FinetuneResult finetune_all(const Dataset& dataset, std::vector<VelocityParams> params_list,
                            const TrainConfig& cfg);

}  // namespace nestar
