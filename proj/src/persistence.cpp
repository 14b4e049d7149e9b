#include "nestar/persistence.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nestar/binio.hpp"

namespace nestar {

namespace {
constexpr char kCheckpointMagic[4] = {'N', 'S', 'T', 'R'};
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ScheduleSpec& schedule,
                     std::span<const VelocityParams> params_list) {
    // re-derive to enforce n = k^M and range invariants
    const ScheduleSpec check = new_schedule(schedule.k, schedule.M, schedule.c,
                                            schedule.ordering);
    require(check.n == schedule.n, ErrorKind::structural_mismatch,
            "schedule n does not equal k^M");
    require(params_list.size() == static_cast<size_t>(schedule.M),
            ErrorKind::structural_mismatch,
            "checkpoint needs one parameter set per module");

    std::vector<uint8_t> out;
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(schedule.k));
    put_u32(out, static_cast<uint32_t>(schedule.M));
    put_u32(out, static_cast<uint32_t>(schedule.c));
    put_u32(out, static_cast<uint32_t>(schedule.ordering));
    put_u32(out, static_cast<uint32_t>(params_list.size()));
    for (const VelocityParams& params : params_list) {
        const ArchSpec& arch = params.arch;
        arch.validate();
        require(static_cast<int64_t>(params.weights.size()) == arch.weight_count(),
                ErrorKind::structural_mismatch, "weight count does not match arch");
        put_u32(out, static_cast<uint32_t>(arch.patch_tokens));
        put_u32(out, static_cast<uint32_t>(arch.c));
        put_u32(out, static_cast<uint32_t>(arch.max_prefix));
        put_u32(out, static_cast<uint32_t>(arch.hidden_width));
        put_u32(out, static_cast<uint32_t>(arch.hidden_layers));
        put_u32(out, static_cast<uint32_t>(arch.t_embed_dim));
        put_u32(out, static_cast<uint32_t>(arch.num_classes));
        put_u32(out, static_cast<uint32_t>(arch.pos_slots));
        put_u64(out, static_cast<uint64_t>(params.weights.size()));
    }
    for (const VelocityParams& params : params_list)
        for (double w : params.weights) put_f64(out, w);

    put_u32(out, crc32_ieee(out.data(), out.size()));
    write_file_bytes(path, out);
}

CheckpointData load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    require(bytes.size() >= 8, ErrorKind::format, "file too short for a checkpoint");

    char magic[4];
    std::memcpy(magic, bytes.data(), 4);
    require(std::memcmp(magic, kCheckpointMagic, 4) == 0, ErrorKind::format,
            "bad magic bytes, not a checkpoint file");

    uint32_t stored_crc = 0;
    for (int j = 0; j < 4; ++j)
        stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + j]) << (8 * j);
    require(crc32_ieee(bytes.data(), bytes.size() - 4) == stored_crc,
            ErrorKind::crc_mismatch, "checkpoint CRC32 does not match payload");

    ByteReader in(bytes.data(), bytes.size() - 4);
    char skip[4];
    in.bytes(reinterpret_cast<uint8_t*>(skip), 4);
    const uint32_t version = in.u32();
    require(version == kCheckpointVersion, ErrorKind::version_unsupported,
            "checkpoint version " + std::to_string(version) + " unsupported");

    CheckpointData data;
    const int k = static_cast<int>(in.u32());
    const int M = static_cast<int>(in.u32());
    const int c = static_cast<int>(in.u32());
    const uint32_t ord = in.u32();
    require(ord <= 1, ErrorKind::format, "bad ordering code " + std::to_string(ord));
    data.schedule = new_schedule(k, M, c, static_cast<Ordering>(ord));

    const uint32_t module_count = in.u32();
    require(module_count == static_cast<uint32_t>(M), ErrorKind::structural_mismatch,
            "checkpoint has " + std::to_string(module_count) + " modules, schedule implies " +
                std::to_string(M));

    std::vector<uint64_t> counts;
    data.params_list.resize(module_count);
    for (uint32_t idx = 0; idx < module_count; ++idx) {
        ArchSpec arch;
        arch.patch_tokens = static_cast<int>(in.u32());
        arch.c = static_cast<int>(in.u32());
        arch.max_prefix = static_cast<int>(in.u32());
        arch.hidden_width = static_cast<int>(in.u32());
        arch.hidden_layers = static_cast<int>(in.u32());
        arch.t_embed_dim = static_cast<int>(in.u32());
        arch.num_classes = static_cast<int>(in.u32());
        arch.pos_slots = static_cast<int>(in.u32());
        arch.validate();
        const uint64_t count = in.u64();
        require(count == static_cast<uint64_t>(arch.weight_count()),
                ErrorKind::structural_mismatch,
                "stored weight count does not match module " + std::to_string(idx + 1) +
                    " arch");
        data.params_list[idx].arch = arch;
        counts.push_back(count);
    }
    for (uint32_t idx = 0; idx < module_count; ++idx) {
        auto& weights = data.params_list[idx].weights;
        weights.resize(counts[idx]);
        for (double& w : weights) {
            w = in.f64();
            require(std::isfinite(w), ErrorKind::structural_mismatch,
                    "non-finite weight in module " + std::to_string(idx + 1));
        }
    }
    require(in.remaining() == 0, ErrorKind::format, "trailing bytes after weights");
    return data;
}

// ---------------------------------------------------------------------------
// run configuration

using json = nlohmann::json;

namespace {

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const auto& key : allowed)
            if (it.key() == key) {
                known = true;
                break;
            }
        require(known, ErrorKind::config,
                "unknown key '" + it.key() + "' in section '" + section + "'");
    }
}

template <typename T>
void get_to(const json& obj, const char* key, T& out, const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        obj.at(key).get_to(out);
    } catch (const json::exception& e) {
        fail(ErrorKind::config,
             "bad value for '" + section + "." + key + "': " + e.what());
    }
}

}  // namespace

RunConfig default_config() {
    RunConfig cfg;
    cfg.schedule = new_schedule(4, 2, 2, Ordering::morton);
    cfg.train.num_classes = cfg.data.num_classes;
    cfg.data.sigma_level.assign(static_cast<size_t>(cfg.schedule.M), 0.5);
    return cfg;
}

void RunConfig::validate() const {
    const ScheduleSpec check =
        new_schedule(schedule.k, schedule.M, schedule.c, schedule.ordering);
    require(check.n == schedule.n, ErrorKind::config, "schedule n does not equal k^M");
    train.validate();
    require(data.generator == "hier-quadrant" || data.generator == "iid-gauss",
            ErrorKind::config, "unknown data generator '" + data.generator + "'");
    require(data.num_items >= 0, ErrorKind::config, "data.num_items must be >= 0");
    if (data.generator == "hier-quadrant") {
        require(schedule.ordering == Ordering::morton && schedule.k == 4, ErrorKind::config,
                "hier-quadrant data requires morton ordering with k=4");
        require(data.num_classes >= 1, ErrorKind::config, "data.num_classes must be >= 1");
        require(static_cast<int>(data.sigma_level.size()) == schedule.M, ErrorKind::config,
                "data.sigma_level needs one entry per level");
        for (double s : data.sigma_level)
            require(s >= 0.0, ErrorKind::config, "data.sigma_level entries must be >= 0");
        require(data.sigma_leaf >= 0.0, ErrorKind::config, "data.sigma_leaf must be >= 0");
    }
    require(sampler.ode_steps >= 1, ErrorKind::config, "sampler.ode_steps must be >= 1");
    require(sampler.num_samples >= 0, ErrorKind::config, "sampler.num_samples must be >= 0");
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg = default_config();

    std::string trimmed = text;
    const auto last = trimmed.find_last_not_of(" \t\r\n");
    trimmed = (last == std::string::npos) ? "" : trimmed.substr(0, last + 1);
    if (trimmed.empty()) {
        cfg.validate();
        return cfg;
    }

    json doc;
    try {
        doc = json::parse(trimmed);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, std::string("config parse error: ") + e.what());
    }
    require(doc.is_object(), ErrorKind::config, "config root must be a JSON object");
    check_keys(doc, {"schedule", "arch", "train", "data", "sampler"}, "root");

    bool train_num_classes_given = false;
    bool sigma_level_given = false;

    if (doc.contains("schedule")) {
        const json& s = doc["schedule"];
        check_keys(s, {"k", "M", "c", "ordering"}, "schedule");
        int k = cfg.schedule.k, M = cfg.schedule.M, c = cfg.schedule.c;
        std::string ordering = ordering_name(cfg.schedule.ordering);
        get_to(s, "k", k, "schedule");
        get_to(s, "M", M, "schedule");
        get_to(s, "c", c, "schedule");
        get_to(s, "ordering", ordering, "schedule");
        cfg.schedule = new_schedule(k, M, c, ordering_from_name(ordering));
    }

    if (doc.contains("arch")) {
        const json& a = doc["arch"];
        check_keys(a, {"hidden_width", "hidden_layers", "t_embed_dim"}, "arch");
        get_to(a, "hidden_width", cfg.train.hidden_width, "arch");
        get_to(a, "hidden_layers", cfg.train.hidden_layers, "arch");
        get_to(a, "t_embed_dim", cfg.train.t_embed_dim, "arch");
    }

    if (doc.contains("train")) {
        const json& t = doc["train"];
        check_keys(t,
                   {"optimizer", "lr", "beta1", "beta2", "eps", "batch_size",
                    "pretrain_steps", "finetune_steps", "lambda_module", "lambda_coor",
                    "seed", "grad_clip", "freeze_below_top", "num_classes",
                    "record_timing"},
                   "train");
        std::string optimizer = cfg.train.optimizer == OptimizerKind::adam ? "adam" : "sgd";
        get_to(t, "optimizer", optimizer, "train");
        if (optimizer == "adam")
            cfg.train.optimizer = OptimizerKind::adam;
        else if (optimizer == "sgd")
            cfg.train.optimizer = OptimizerKind::sgd;
        else
            fail(ErrorKind::config, "unknown optimizer '" + optimizer + "'");
        get_to(t, "lr", cfg.train.lr, "train");
        get_to(t, "beta1", cfg.train.beta1, "train");
        get_to(t, "beta2", cfg.train.beta2, "train");
        get_to(t, "eps", cfg.train.adam_eps, "train");
        get_to(t, "batch_size", cfg.train.batch_size, "train");
        get_to(t, "pretrain_steps", cfg.train.pretrain_steps, "train");
        get_to(t, "finetune_steps", cfg.train.finetune_steps, "train");
        get_to(t, "lambda_module", cfg.train.lambda_module, "train");
        get_to(t, "lambda_coor", cfg.train.lambda_coor, "train");
        get_to(t, "seed", cfg.train.seed, "train");
        if (t.contains("grad_clip")) {
            if (t["grad_clip"].is_null()) {
                cfg.train.grad_clip.reset();
            } else {
                double clip = 0.0;
                get_to(t, "grad_clip", clip, "train");
                cfg.train.grad_clip = clip;
            }
        }
        get_to(t, "freeze_below_top", cfg.train.freeze_below_top, "train");
        if (t.contains("num_classes")) {
            train_num_classes_given = true;
            get_to(t, "num_classes", cfg.train.num_classes, "train");
        }
        get_to(t, "record_timing", cfg.train.record_timing, "train");
    }

    if (doc.contains("data")) {
        const json& d = doc["data"];
        check_keys(d,
                   {"generator", "num_classes", "num_items", "sigma_level", "sigma_leaf",
                    "class_mean_scale", "class_means", "seed"},
                   "data");
        get_to(d, "generator", cfg.data.generator, "data");
        get_to(d, "num_classes", cfg.data.num_classes, "data");
        get_to(d, "num_items", cfg.data.num_items, "data");
        if (d.contains("sigma_level")) {
            sigma_level_given = true;
            get_to(d, "sigma_level", cfg.data.sigma_level, "data");
        }
        get_to(d, "sigma_leaf", cfg.data.sigma_leaf, "data");
        get_to(d, "class_mean_scale", cfg.data.class_mean_scale, "data");
        get_to(d, "class_means", cfg.data.class_means, "data");
        get_to(d, "seed", cfg.data.seed, "data");
    }

    if (doc.contains("sampler")) {
        const json& s = doc["sampler"];
        check_keys(s, {"ode_steps", "num_samples"}, "sampler");
        get_to(s, "ode_steps", cfg.sampler.ode_steps, "sampler");
        get_to(s, "num_samples", cfg.sampler.num_samples, "sampler");
    }

    if (!sigma_level_given)
        cfg.data.sigma_level.assign(static_cast<size_t>(cfg.schedule.M), 0.5);
    if (!train_num_classes_given)
        cfg.train.num_classes =
            cfg.data.generator == "hier-quadrant" ? cfg.data.num_classes : 0;

    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::file_not_found, "cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_echo(const RunConfig& cfg) {
    json doc;
    doc["schedule"] = {{"k", cfg.schedule.k},
                       {"M", cfg.schedule.M},
                       {"c", cfg.schedule.c},
                       {"ordering", ordering_name(cfg.schedule.ordering)}};
    doc["arch"] = {{"hidden_width", cfg.train.hidden_width},
                   {"hidden_layers", cfg.train.hidden_layers},
                   {"t_embed_dim", cfg.train.t_embed_dim}};
    json train = {{"optimizer", cfg.train.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                  {"lr", cfg.train.lr},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"eps", cfg.train.adam_eps},
                  {"batch_size", cfg.train.batch_size},
                  {"pretrain_steps", cfg.train.pretrain_steps},
                  {"finetune_steps", cfg.train.finetune_steps},
                  {"lambda_module", cfg.train.lambda_module},
                  {"lambda_coor", cfg.train.lambda_coor},
                  {"seed", cfg.train.seed},
                  {"freeze_below_top", cfg.train.freeze_below_top},
                  {"num_classes", cfg.train.num_classes},
                  {"record_timing", cfg.train.record_timing}};
    train["grad_clip"] = cfg.train.grad_clip ? json(*cfg.train.grad_clip) : json(nullptr);
    doc["train"] = train;
    json data = {{"generator", cfg.data.generator},
                 {"num_classes", cfg.data.num_classes},
                 {"num_items", cfg.data.num_items},
                 {"sigma_level", cfg.data.sigma_level},
                 {"sigma_leaf", cfg.data.sigma_leaf},
                 {"class_mean_scale", cfg.data.class_mean_scale},
                 {"seed", cfg.data.seed}};
    if (!cfg.data.class_means.empty()) data["class_means"] = cfg.data.class_means;
    doc["data"] = data;
    doc["sampler"] = {{"ode_steps", cfg.sampler.ode_steps},
                      {"num_samples", cfg.sampler.num_samples}};
    return doc.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
    const std::string echo = config_echo(cfg);
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : echo) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

HierParams hier_params_from(const RunConfig& cfg) {
    require(cfg.data.generator == "hier-quadrant", ErrorKind::config,
            "hier params requested for generator '" + cfg.data.generator + "'");
    HierParams hp;
    hp.num_classes = cfg.data.num_classes;
    hp.sigma_level = cfg.data.sigma_level;
    hp.sigma_leaf = cfg.data.sigma_leaf;
    if (!cfg.data.class_means.empty()) {
        hp.class_means = cfg.data.class_means;
    } else {
        // corner layout: component d of class j takes the sign of bit d of j
        const int c = cfg.schedule.c;
        const int sign_bits = std::min(c, 30);
        require(hp.num_classes <= (1 << sign_bits), ErrorKind::config,
                "too many classes for the default corner means; set data.class_means");
        hp.class_means.resize(static_cast<size_t>(hp.num_classes));
        for (int j = 0; j < hp.num_classes; ++j) {
            hp.class_means[j].resize(static_cast<size_t>(c));
            for (int d = 0; d < c; ++d)
                hp.class_means[j][d] =
                    cfg.data.class_mean_scale * (((j >> (d % sign_bits)) & 1) ? 1.0 : -1.0);
        }
    }
    hp.validate(cfg.schedule);
    return hp;
}

}  // namespace nestar
