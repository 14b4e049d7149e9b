#pragma once

#include <string>
#include <vector>

#include "nestar/data.hpp"
#include "nestar/schedule.hpp"
#include "nestar/trainer.hpp"
#include "nestar/velocity.hpp"

namespace nestar {

// Checkpoint binary format, bit-exact:
//   magic "NSTR" | version u32 LE | k, M, c, ordering, module_count (u32 LE)
//   | per module: patch_tokens, c, max_prefix, hidden_width, hidden_layers,
//     t_embed_dim, num_classes, pos_slots (u32 LE each), weight_count u64 LE
//   | all weights float64 LE in the layer layout of VelocityParams
//   | CRC32 (u32 LE) of every preceding byte.
void save_checkpoint(const std::string& path, const ScheduleSpec& schedule,
                     std::span<const VelocityParams> params_list);

struct CheckpointData {
    ScheduleSpec schedule;
    std::vector<VelocityParams> params_list;
};

CheckpointData load_checkpoint(const std::string& path);

struct DataConfig {
    std::string generator = "hier-quadrant";  // or "iid-gauss"
    int num_classes = 4;
    int num_items = 5000;
    std::vector<double> sigma_level;  // defaults to 0.5 per level
    double sigma_leaf = 0.2;
    double class_mean_scale = 2.0;
    std::vector<std::vector<double>> class_means;  // optional explicit means
    uint64_t seed = 0;
};

struct SamplerConfig {
    int ode_steps = 50;
    int num_samples = 1000;
};

// Fully materialized run configuration. The on-disk form is strict JSON:
// unknown keys are rejected, absent keys take the defaults below.
struct RunConfig {
    ScheduleSpec schedule;  // defaults k=4, M=2, c=2, morton
    TrainConfig train;
    DataConfig data;
    SamplerConfig sampler;

    void validate() const;
};

RunConfig default_config();

// Parses, defaults and validates. An empty document means all defaults.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

// Canonical JSON echo of a materialized config; parseable by parse_config
// and stable across runs.
std::string config_echo(const RunConfig& cfg);

// FNV-1a over the canonical echo; stamped into metrics headers.
std::string config_hash(const RunConfig& cfg);

// Materializes HierParams (resolving defaulted class means) from the data
// section; requires generator "hier-quadrant".
HierParams hier_params_from(const RunConfig& cfg);

}  // namespace nestar
