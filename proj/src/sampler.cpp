#include "nestar/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "nestar/rng.hpp"

namespace nestar {

std::vector<double> euler_solve(const VelocityFn& velocity_fn,
                                std::span<const double> eps, int steps) {
    require(steps >= 1, ErrorKind::invalid_parameter, "ode steps must be >= 1");
    std::vector<double> y(eps.begin(), eps.end());
    const double dt = 1.0 / steps;
    for (int s = steps - 1; s >= 0; --s) {
        const double t = static_cast<double>(s + 1) / steps;
        const auto v = velocity_fn(y, t);
        require(v.size() == y.size(), ErrorKind::dimension_mismatch,
                "velocity has wrong dimension");
        for (size_t j = 0; j < y.size(); ++j) {
            y[j] -= dt * v[j];
            require(std::isfinite(y[j]), ErrorKind::divergence,
                    "non-finite state during ODE solve at t=" + std::to_string(t));
        }
    }
    return y;
}

namespace {

// Wraps one module's network as a velocity field over a fixed context,
// counting evaluations.
VelocityFn field_for(const VelocityParams& params, std::span<const double> prefix,
                     int patch_pos, int class_id, int64_t& calls) {
    return [&params, prefix, patch_pos, class_id, &calls](std::span<const double> y,
                                                          double t) {
        ++calls;
        auto in = make_input(params.arch, std::vector<double>(y.begin(), y.end()), t,
                             prefix, patch_pos, class_id);
        return forward(params, in);
    };
}

int pick_class(const ArchSpec& arch, std::optional<int> requested, Rng& rng) {
    if (arch.num_classes == 0) {
        require(!requested, ErrorKind::invalid_parameter,
                "class requested from an unconditional model");
        return -1;
    }
    if (requested) {
        require(*requested >= 0 && *requested < arch.num_classes, ErrorKind::out_of_range,
                "class_id outside 0..num_classes-1");
        return *requested;
    }
    return static_cast<int>(rng.below(static_cast<uint64_t>(arch.num_classes)));
}

}  // namespace

std::pair<TokenSeq, NfeReport> generate(const SampleRequest& req) {
    const ScheduleSpec& spec = req.schedule;
    require(req.params_list.size() == static_cast<size_t>(spec.M),
            ErrorKind::structural_mismatch,
            "params list has " + std::to_string(req.params_list.size()) +
                " modules, schedule expects " + std::to_string(spec.M));
    for (int m = 1; m <= spec.M; ++m) {
        const ArchSpec& arch = req.params_list[m - 1].arch;
        require(arch.patch_tokens == spec.patch_len(m) && arch.c == spec.c &&
                    arch.max_prefix >= spec.patch_len(m) * (spec.k - 1) &&
                    arch.pos_slots == spec.k &&
                    arch.num_classes == req.params_list[0].arch.num_classes,
                ErrorKind::structural_mismatch,
                "module " + std::to_string(m) + " arch does not match schedule");
    }

    Rng rng(req.seed);
    const int class_id = pick_class(req.params_list[0].arch, req.class_id, rng);
    const int c = spec.c;

    TokenSeq tokens;
    tokens.reserve(static_cast<size_t>(spec.n) * c);
    NfeReport report;
    report.per_module.resize(spec.M);
    for (int m = 1; m <= spec.M; ++m) report.per_module[m - 1].m = m;

    std::vector<double> eps(c);

    // first token: module 1, empty prefix (Algorithm 1 lines 1-2)
    for (double& v : eps) v = rng.normal();
    {
        int64_t calls = 0;
        auto out = euler_solve(
            field_for(req.params_list[0], std::span<const double>(), 1, class_id, calls),
            eps, req.ode_steps);
        tokens.insert(tokens.end(), out.begin(), out.end());
        report.per_module[0].patches += 1;
        report.per_module[0].velocity_calls += calls;
    }

    for (int m = 1; m <= spec.M; ++m) {
        const size_t patch_vals = static_cast<size_t>(spec.patch_len(m)) * c;
        eps.resize(patch_vals);
        for (int i = 2; i <= spec.k; ++i) {
            for (double& v : eps) v = rng.normal();
            const size_t pfx_vals = static_cast<size_t>(prefix_len(spec, PatchId{m, i})) * c;
            require(tokens.size() == pfx_vals, ErrorKind::structural_mismatch,
                    "internal: prefix does not match generated tokens");
            int64_t calls = 0;
            auto out = euler_solve(
                field_for(req.params_list[m - 1],
                          std::span<const double>(tokens.data(), pfx_vals), i, class_id,
                          calls),
                eps, req.ode_steps);
            tokens.insert(tokens.end(), out.begin(), out.end());
            report.per_module[m - 1].patches += 1;
            report.per_module[m - 1].velocity_calls += calls;
        }
    }

    for (const ModuleNfe& pm : report.per_module) {
        report.patches_generated += pm.patches;
        report.velocity_calls += pm.velocity_calls;
    }
    return {std::move(tokens), std::move(report)};
}

std::pair<TokenSeq, NfeReport> generate_vanilla_ar(const ScheduleSpec& schedule,
                                                   const VelocityParams& token_model,
                                                   std::optional<int> class_id,
                                                   uint64_t seed, int ode_steps) {
    const ArchSpec& arch = token_model.arch;
    require(arch.patch_tokens == 1 && arch.c == schedule.c &&
                arch.max_prefix >= schedule.n - 1,
            ErrorKind::structural_mismatch,
            "token model must emit single tokens with prefix capacity n-1");

    Rng rng(seed);
    const int cls = pick_class(arch, class_id, rng);
    const int c = schedule.c;

    TokenSeq tokens;
    tokens.reserve(static_cast<size_t>(schedule.n) * c);
    NfeReport report;
    report.per_module.resize(1);
    report.per_module[0].m = 1;

    std::vector<double> eps(c);
    for (int64_t j = 0; j < schedule.n; ++j) {
        for (double& v : eps) v = rng.normal();
        int64_t calls = 0;
        auto out = euler_solve(
            field_for(token_model, std::span<const double>(tokens.data(), tokens.size()), 1,
                      cls, calls),
            eps, ode_steps);
        tokens.insert(tokens.end(), out.begin(), out.end());
        report.per_module[0].patches += 1;
        report.per_module[0].velocity_calls += calls;
    }
    report.patches_generated = report.per_module[0].patches;
    report.velocity_calls = report.per_module[0].velocity_calls;
    return {std::move(tokens), std::move(report)};
}

void NfeReport::save_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << "module,patches,velocity_calls\n";
    for (const ModuleNfe& pm : per_module)
        out << pm.m << ',' << pm.patches << ',' << pm.velocity_calls << '\n';
    out << "total," << patches_generated << ',' << velocity_calls << '\n';
    require(out.good(), ErrorKind::io, "write failed for '" + path + "'");
}

}  // namespace nestar
