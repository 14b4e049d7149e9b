#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "nestar/data.hpp"
#include "nestar/gradcheck.hpp"
#include "nestar/metrics.hpp"
#include "nestar/objective.hpp"
#include "nestar/persistence.hpp"
#include "nestar/rng.hpp"
#include "nestar/sampler.hpp"
#include "nestar/schedule.hpp"
#include "nestar/trainer.hpp"
#include "nestar/velocity.hpp"

namespace py = pybind11;
using namespace nestar;

namespace {

ScheduleSpec py_new_schedule(int k, int M, int c, const std::string& ordering) {
    return new_schedule(k, M, c, ordering_from_name(ordering));
}

RadiusPolicy policy_from_name(const std::string& name) {
    if (name == "nearest") return RadiusPolicy::nearest;
    if (name == "radius") return RadiusPolicy::radius;
    fail(ErrorKind::invalid_parameter, "unknown radius policy '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_nestar, m) {
    m.doc() = "nested autoregressive flow-matching core";
    m.attr("__version__") = NESTAR_VERSION;

    py::register_exception<Error>(m, "NestarError");

    // schedule ---------------------------------------------------------
    py::class_<ScheduleSpec>(m, "ScheduleSpec")
        .def_readonly("k", &ScheduleSpec::k)
        .def_readonly("M", &ScheduleSpec::M)
        .def_readonly("n", &ScheduleSpec::n)
        .def_readonly("c", &ScheduleSpec::c)
        .def_property_readonly(
            "ordering", [](const ScheduleSpec& s) { return ordering_name(s.ordering); })
        .def_property_readonly("grid_side",
                               [](const ScheduleSpec& s) {
                                   return s.grid_side ? py::cast(*s.grid_side)
                                                      : py::none().cast<py::object>();
                               })
        .def("patch_len", &ScheduleSpec::patch_len, py::arg("m"))
        .def("__repr__", [](const ScheduleSpec& s) {
            return "ScheduleSpec(k=" + std::to_string(s.k) + ", M=" + std::to_string(s.M) +
                   ", n=" + std::to_string(s.n) + ", c=" + std::to_string(s.c) + ", " +
                   ordering_name(s.ordering) + ")";
        });

    m.def("new_schedule", &py_new_schedule, py::arg("k"), py::arg("M"), py::arg("c"),
          py::arg("ordering") = "morton");
    m.def(
        "patch_range",
        [](const ScheduleSpec& s, int mod, int i) { return patch_range(s, {mod, i}); },
        py::arg("spec"), py::arg("m"), py::arg("i"));
    m.def(
        "prefix_len",
        [](const ScheduleSpec& s, int mod, int i) { return prefix_len(s, {mod, i}); },
        py::arg("spec"), py::arg("m"), py::arg("i"));
    m.def(
        "eval_count", [](const ScheduleSpec& s, int mod) { return eval_count(s, mod); },
        py::arg("spec"), py::arg("m"));
    m.def("morton_rank", &morton_rank, py::arg("row"), py::arg("col"), py::arg("side"));
    m.def("morton_unrank", &morton_unrank, py::arg("index"), py::arg("side"));
    m.def("raster_rank", &raster_rank, py::arg("row"), py::arg("col"), py::arg("side"));
    m.def("raster_unrank", &raster_unrank, py::arg("index"), py::arg("side"));

    // velocity ----------------------------------------------------------
    py::class_<ArchSpec>(m, "ArchSpec")
        .def(py::init<>())
        .def_readwrite("patch_tokens", &ArchSpec::patch_tokens)
        .def_readwrite("c", &ArchSpec::c)
        .def_readwrite("max_prefix", &ArchSpec::max_prefix)
        .def_readwrite("hidden_width", &ArchSpec::hidden_width)
        .def_readwrite("hidden_layers", &ArchSpec::hidden_layers)
        .def_readwrite("t_embed_dim", &ArchSpec::t_embed_dim)
        .def_readwrite("pos_slots", &ArchSpec::pos_slots)
        .def_readwrite("num_classes", &ArchSpec::num_classes)
        .def("out_dim", &ArchSpec::out_dim)
        .def("input_dim", &ArchSpec::input_dim)
        .def("weight_count", &ArchSpec::weight_count);

    py::class_<VelocityParams>(m, "VelocityParams")
        .def_readonly("arch", &VelocityParams::arch)
        .def_readwrite("weights", &VelocityParams::weights);

    m.def("init_params", &init_params, py::arg("arch"), py::arg("seed"));
    m.def(
        "forward",
        [](const VelocityParams& params, std::vector<double> y, double t,
           const std::vector<double>& prefix, int patch_pos, int class_id) {
            return forward(params, make_input(params.arch, std::move(y), t, prefix,
                                              patch_pos, class_id));
        },
        py::arg("params"), py::arg("y"), py::arg("t"),
        py::arg("prefix") = std::vector<double>{}, py::arg("patch_pos") = 1,
        py::arg("class_id") = -1);

    // objective ----------------------------------------------------------
    py::class_<FlowSample>(m, "FlowSample")
        .def(py::init<>())
        .def_readwrite("x", &FlowSample::x)
        .def_readwrite("eps", &FlowSample::eps)
        .def_readwrite("t", &FlowSample::t)
        .def_readwrite("prefix", &FlowSample::prefix)
        .def_readwrite("patch_pos", &FlowSample::patch_pos)
        .def_readwrite("class_id", &FlowSample::class_id);

    py::class_<CoordPair>(m, "CoordPair")
        .def(py::init<>())
        .def_readwrite("m", &CoordPair::m)
        .def_readwrite("x_prefix", &CoordPair::x_prefix)
        .def_readwrite("eps", &CoordPair::eps)
        .def_readwrite("t", &CoordPair::t)
        .def_readwrite("class_id", &CoordPair::class_id);

    m.def(
        "interpolate",
        [](const std::vector<double>& x, const std::vector<double>& eps, double t) {
            return interpolate(x, eps, t);
        },
        py::arg("x"), py::arg("eps"), py::arg("t"));
    m.def(
        "target_velocity",
        [](const std::vector<double>& x, const std::vector<double>& eps) {
            return target_velocity(x, eps);
        },
        py::arg("x"), py::arg("eps"));
    m.def(
        "module_loss",
        [](const VelocityParams& params, const std::vector<FlowSample>& samples) {
            return module_loss(params, samples);
        },
        py::arg("params"), py::arg("samples"));
    m.def(
        "module_loss_and_grad",
        [](const VelocityParams& params, const std::vector<FlowSample>& samples) {
            auto lg = module_loss_and_grad(params, samples);
            return py::make_tuple(lg.loss, lg.grad);
        },
        py::arg("params"), py::arg("samples"));
    m.def(
        "coord_loss",
        [](const VelocityParams& prev, const VelocityParams& curr,
           const std::vector<CoordPair>& pairs, const ScheduleSpec& spec) {
            return coord_loss(prev, curr, pairs, spec);
        },
        py::arg("params_prev"), py::arg("params_m"), py::arg("pairs"), py::arg("schedule"));

    // data ----------------------------------------------------------------
    py::class_<DatasetItem>(m, "DatasetItem")
        .def_readwrite("class_id", &DatasetItem::class_id)
        .def_readwrite("tokens", &DatasetItem::tokens);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("k", &Dataset::k)
        .def_readonly("M", &Dataset::M)
        .def_readonly("c", &Dataset::c)
        .def_property_readonly("ordering",
                               [](const Dataset& d) { return ordering_name(d.ordering); })
        .def_readonly("items", &Dataset::items)
        .def("__len__", [](const Dataset& d) { return d.items.size(); });

    py::class_<HierParams>(m, "HierParams")
        .def(py::init<>())
        .def_readwrite("num_classes", &HierParams::num_classes)
        .def_readwrite("sigma_level", &HierParams::sigma_level)
        .def_readwrite("sigma_leaf", &HierParams::sigma_leaf)
        .def_readwrite("class_means", &HierParams::class_means);

    m.def("gen_hier_quadrant", &gen_hier_quadrant, py::arg("spec"), py::arg("hp"),
          py::arg("n_items"), py::arg("seed"));
    m.def("gen_iid_gauss", &gen_iid_gauss, py::arg("spec"), py::arg("n_items"),
          py::arg("seed"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
    m.def("load_dataset", &load_dataset, py::arg("path"));

    // trainer ---------------------------------------------------------------
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_property(
            "optimizer",
            [](const TrainConfig& c) {
                return c.optimizer == OptimizerKind::adam ? "adam" : "sgd";
            },
            [](TrainConfig& c, const std::string& name) {
                if (name == "adam")
                    c.optimizer = OptimizerKind::adam;
                else if (name == "sgd")
                    c.optimizer = OptimizerKind::sgd;
                else
                    fail(ErrorKind::invalid_parameter, "unknown optimizer '" + name + "'");
            })
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("beta1", &TrainConfig::beta1)
        .def_readwrite("beta2", &TrainConfig::beta2)
        .def_readwrite("adam_eps", &TrainConfig::adam_eps)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("pretrain_steps", &TrainConfig::pretrain_steps)
        .def_readwrite("finetune_steps", &TrainConfig::finetune_steps)
        .def_readwrite("lambda_module", &TrainConfig::lambda_module)
        .def_readwrite("lambda_coor", &TrainConfig::lambda_coor)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("grad_clip", &TrainConfig::grad_clip)
        .def_readwrite("freeze_below_top", &TrainConfig::freeze_below_top)
        .def_readwrite("hidden_width", &TrainConfig::hidden_width)
        .def_readwrite("hidden_layers", &TrainConfig::hidden_layers)
        .def_readwrite("t_embed_dim", &TrainConfig::t_embed_dim)
        .def_readwrite("num_classes", &TrainConfig::num_classes);

    py::class_<StepRecord>(m, "StepRecord")
        .def_readonly("step", &StepRecord::step)
        .def_readonly("l_module", &StepRecord::l_module)
        .def_readonly("l_coor", &StepRecord::l_coor)
        .def_readonly("total", &StepRecord::total)
        .def_readonly("grad_norm", &StepRecord::grad_norm)
        .def_readonly("seconds", &StepRecord::seconds);

    m.def("arch_for_module", &arch_for_module, py::arg("spec"), py::arg("m"),
          py::arg("cfg"));
    m.def("arch_for_vanilla", &arch_for_vanilla, py::arg("spec"), py::arg("cfg"));
    m.def(
        "pretrain_module",
        [](const Dataset& ds, int mod, const TrainConfig& cfg) {
            auto result = pretrain_module(ds, mod, cfg);
            return py::make_tuple(std::move(result.params),
                                  std::move(result.history.records));
        },
        py::arg("dataset"), py::arg("m"), py::arg("cfg"));
    m.def(
        "finetune_all",
        [](const Dataset& ds, std::vector<VelocityParams> params, const TrainConfig& cfg) {
            auto result = finetune_all(ds, std::move(params), cfg);
            return py::make_tuple(std::move(result.params),
                                  std::move(result.history.records));
        },
        py::arg("dataset"), py::arg("params_list"), py::arg("cfg"));

    // sampler -----------------------------------------------------------------
    py::class_<ModuleNfe>(m, "ModuleNfe")
        .def_readonly("m", &ModuleNfe::m)
        .def_readonly("patches", &ModuleNfe::patches)
        .def_readonly("velocity_calls", &ModuleNfe::velocity_calls);

    py::class_<NfeReport>(m, "NfeReport")
        .def_readonly("velocity_calls", &NfeReport::velocity_calls)
        .def_readonly("patches_generated", &NfeReport::patches_generated)
        .def_readonly("per_module", &NfeReport::per_module);

    m.def(
        "euler_solve",
        [](const std::function<std::vector<double>(std::vector<double>, double)>& field,
           const std::vector<double>& eps, int steps) {
            const VelocityFn fn = [&](std::span<const double> y, double t) {
                return field(std::vector<double>(y.begin(), y.end()), t);
            };
            return euler_solve(fn, eps, steps);
        },
        py::arg("velocity_fn"), py::arg("eps"), py::arg("steps"));
    m.def(
        "generate",
        [](const ScheduleSpec& spec, const std::vector<VelocityParams>& params,
           std::optional<int> class_id, uint64_t seed, int ode_steps) {
            auto [tokens, report] = generate({spec, params, class_id, seed, ode_steps});
            return py::make_tuple(std::move(tokens), std::move(report));
        },
        py::arg("schedule"), py::arg("params_list"), py::arg("class_id") = std::nullopt,
        py::arg("seed") = 0, py::arg("ode_steps") = 50);
    m.def(
        "generate_vanilla_ar",
        [](const ScheduleSpec& spec, const VelocityParams& token_model,
           std::optional<int> class_id, uint64_t seed, int ode_steps) {
            auto [tokens, report] =
                generate_vanilla_ar(spec, token_model, class_id, seed, ode_steps);
            return py::make_tuple(std::move(tokens), std::move(report));
        },
        py::arg("schedule"), py::arg("token_model"), py::arg("class_id") = std::nullopt,
        py::arg("seed") = 0, py::arg("ode_steps") = 50);

    // metrics ---------------------------------------------------------------
    py::class_<CoverageReport>(m, "CoverageReport")
        .def_readonly("coverage", &CoverageReport::coverage)
        .def_readonly("entropy", &CoverageReport::entropy)
        .def_readonly("dropped_fraction", &CoverageReport::dropped_fraction)
        .def_readonly("counts", &CoverageReport::counts);

    py::class_<ComplexityRow>(m, "ComplexityRow")
        .def_readonly("k", &ComplexityRow::k)
        .def_readonly("M", &ComplexityRow::M)
        .def_readonly("steps", &ComplexityRow::steps)
        .def_readonly("n", &ComplexityRow::n)
        .def_readonly("nestar_patches", &ComplexityRow::nestar_patches)
        .def_readonly("vanilla_patches", &ComplexityRow::vanilla_patches)
        .def_readonly("nestar_nfe", &ComplexityRow::nestar_nfe)
        .def_readonly("vanilla_nfe", &ComplexityRow::vanilla_nfe)
        .def_readonly("ratio", &ComplexityRow::ratio);

    m.def(
        "mmd2",
        [](const VecSet& a, const VecSet& b, std::optional<double> bandwidth) {
            return mmd2(a, b, {bandwidth});
        },
        py::arg("a"), py::arg("b"), py::arg("bandwidth") = std::nullopt);
    m.def("median_heuristic_bandwidth", &median_heuristic_bandwidth, py::arg("a"),
          py::arg("b"));
    m.def(
        "mode_coverage",
        [](const VecSet& samples, const VecSet& centers, const std::string& policy,
           double radius) {
            return mode_coverage(samples, centers, policy_from_name(policy), radius);
        },
        py::arg("samples"), py::arg("mode_centers"), py::arg("policy") = "nearest",
        py::arg("radius") = 0.0);
    m.def("complexity_report", &complexity_report, py::arg("k"), py::arg("M"),
          py::arg("steps"), py::arg("n"));

    // persistence -------------------------------------------------------------
    m.def(
        "save_checkpoint",
        [](const std::string& path, const ScheduleSpec& spec,
           const std::vector<VelocityParams>& params) {
            save_checkpoint(path, spec, params);
        },
        py::arg("path"), py::arg("schedule"), py::arg("params_list"));
    m.def(
        "load_checkpoint",
        [](const std::string& path) {
            auto data = load_checkpoint(path);
            return py::make_tuple(data.schedule, std::move(data.params_list));
        },
        py::arg("path"));

    // verification --------------------------------------------------------------
    py::class_<GradCheckReport>(m, "GradCheckReport")
        .def_readonly("trials", &GradCheckReport::trials)
        .def_readonly("max_rel_err_module", &GradCheckReport::max_rel_err_module)
        .def_readonly("max_rel_err_coord", &GradCheckReport::max_rel_err_coord)
        .def("worst", &GradCheckReport::worst);

    m.def("run_grad_check", &run_grad_check, py::arg("seed"), py::arg("trials"));
    m.def("mix_seed", &mix_seed, py::arg("seed"), py::arg("stream"));
}
