#include "nestar/objective.hpp"

#include <string>

namespace nestar {

std::vector<double> interpolate(std::span<const double> x, std::span<const double> eps,
                                double t) {
    require(x.size() == eps.size(), ErrorKind::dimension_mismatch,
            "x and eps have different shapes");
    require(t >= 0.0 && t <= 1.0, ErrorKind::invalid_parameter,
            "t=" + std::to_string(t) + " outside [0,1]");
    std::vector<double> y(x.size());
    for (size_t j = 0; j < x.size(); ++j) y[j] = (1.0 - t) * x[j] + t * eps[j];
    return y;
}

std::vector<double> target_velocity(std::span<const double> x, std::span<const double> eps) {
    require(x.size() == eps.size(), ErrorKind::dimension_mismatch,
            "x and eps have different shapes");
    std::vector<double> v(x.size());
    for (size_t j = 0; j < x.size(); ++j) v[j] = eps[j] - x[j];
    return v;
}

namespace {
// Unconditional architectures ignore dataset class labels.
int effective_class(const ArchSpec& arch, int class_id) {
    return arch.num_classes > 0 ? class_id : -1;
}
}  // namespace

TrainItem to_train_item(const ArchSpec& arch, const FlowSample& sample) {
    TrainItem item;
    item.input = make_input(arch, interpolate(sample.x, sample.eps, sample.t), sample.t,
                            sample.prefix, sample.patch_pos,
                            effective_class(arch, sample.class_id));
    item.target = target_velocity(sample.x, sample.eps);
    return item;
}

namespace {

std::vector<TrainItem> to_items(const ArchSpec& arch, std::span<const FlowSample> samples) {
    require(!samples.empty(), ErrorKind::invalid_parameter, "empty sample collection");
    std::vector<TrainItem> items;
    items.reserve(samples.size());
    for (const FlowSample& s : samples) items.push_back(to_train_item(arch, s));
    return items;
}

// Builds the training items of the coordination term: module m's first-patch
// input with the concatenated module-(m-1) velocities as a fixed target.
std::vector<TrainItem> coord_items(const VelocityParams& params_prev,
                                   const VelocityParams& params_m,
                                   std::span<const CoordPair> pairs,
                                   const ScheduleSpec& schedule) {
    require(!pairs.empty(), ErrorKind::invalid_parameter, "empty coordination batch");
    std::vector<TrainItem> items;
    items.reserve(pairs.size());
    const int c = schedule.c;
    for (const CoordPair& pair : pairs) {
        require(pair.m >= 2 && pair.m <= schedule.M, ErrorKind::out_of_range,
                "coordination module index m=" + std::to_string(pair.m) +
                    " outside 2..M");
        const int64_t span_tokens = schedule.patch_len(pair.m);      // k^(m-1)
        const int64_t prev_tokens = schedule.patch_len(pair.m - 1);  // k^(m-2)
        const size_t span_vals = static_cast<size_t>(span_tokens) * c;
        require(pair.x_prefix.size() == span_vals && pair.eps.size() == span_vals,
                ErrorKind::dimension_mismatch,
                "coordination pair shapes do not match schedule");
        require(params_prev.arch.patch_tokens == prev_tokens &&
                    params_m.arch.patch_tokens == span_tokens &&
                    params_prev.arch.c == c && params_m.arch.c == c,
                ErrorKind::dimension_mismatch,
                "velocity architectures do not match coordination pair");

        const auto y = interpolate(pair.x_prefix, pair.eps, pair.t);

        // Concatenated velocities of module m-1, one patch slice at a time,
        // conditioned on the true (teacher-forced) running prefix.
        std::vector<double> stitched(span_vals);
        const size_t prev_vals = static_cast<size_t>(prev_tokens) * c;
        for (int i = 1; i <= schedule.k; ++i) {
            const size_t begin = static_cast<size_t>(i - 1) * prev_vals;
            std::vector<double> y_slice(y.begin() + begin, y.begin() + begin + prev_vals);
            const auto in = make_input(params_prev.arch, std::move(y_slice), pair.t,
                                       std::span<const double>(pair.x_prefix.data(), begin),
                                       i, effective_class(params_prev.arch, pair.class_id));
            const auto v = forward(params_prev, in);
            std::copy(v.begin(), v.end(), stitched.begin() + begin);
        }

        TrainItem item;
        item.input = make_input(params_m.arch, y, pair.t, std::span<const double>(), 1,
                                effective_class(params_m.arch, pair.class_id));
        item.target = std::move(stitched);
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace

double module_loss(const VelocityParams& params, std::span<const FlowSample> samples) {
    const auto items = to_items(params.arch, samples);
    return batch_loss(params, items);
}

long double module_loss_xp(const VelocityParams& params,
                           std::span<const FlowSample> samples) {
    const auto items = to_items(params.arch, samples);
    return batch_loss_xp(params, items);
}

LossGrad module_loss_and_grad(const VelocityParams& params,
                              std::span<const FlowSample> samples) {
    const auto items = to_items(params.arch, samples);
    return loss_and_grad(params, items);
}

double coord_loss(const VelocityParams& params_prev, const VelocityParams& params_m,
                  std::span<const CoordPair> pairs, const ScheduleSpec& schedule) {
    const auto items = coord_items(params_prev, params_m, pairs, schedule);
    return batch_loss(params_m, items);
}

LossGrad coord_loss_and_grad(const VelocityParams& params_prev,
                             const VelocityParams& params_m,
                             std::span<const CoordPair> pairs,
                             const ScheduleSpec& schedule) {
    const auto items = coord_items(params_prev, params_m, pairs, schedule);
    return loss_and_grad(params_m, items);
}

long double coord_loss_xp(const VelocityParams& params_prev,
                          const VelocityParams& params_m,
                          std::span<const CoordPair> pairs,
                          const ScheduleSpec& schedule) {
    const auto items = coord_items(params_prev, params_m, pairs, schedule);
    return batch_loss_xp(params_m, items);
}

TotalLoss total_loss(std::span<const VelocityParams> all_params, const JointBatch& batch,
                     double lambda_module, double lambda_coor,
                     const ScheduleSpec& schedule) {
    require(lambda_module >= 0.0 && lambda_coor >= 0.0, ErrorKind::invalid_parameter,
            "loss coefficients must be >= 0");
    const size_t M = all_params.size();
    require(M == static_cast<size_t>(schedule.M), ErrorKind::dimension_mismatch,
            "parameter list does not match schedule module count");
    require(batch.module_samples.size() == M, ErrorKind::dimension_mismatch,
            "module batch list does not match module count");
    require(batch.coord_pairs.size() == M, ErrorKind::dimension_mismatch,
            "coordination batch list does not match module count");

    TotalLoss result;
    result.module_terms.assign(M, 0.0);
    result.coord_terms.assign(M, 0.0);
    result.grads.resize(M);

    for (size_t idx = 0; idx < M; ++idx) {
        auto lg = module_loss_and_grad(all_params[idx], batch.module_samples[idx]);
        result.module_terms[idx] = lg.loss;
        result.grads[idx].assign(lg.grad.size(), 0.0);
        for (size_t w = 0; w < lg.grad.size(); ++w)
            result.grads[idx][w] = lambda_module * lg.grad[w];

        if (!batch.coord_pairs[idx].empty()) {
            require(idx >= 1, ErrorKind::invalid_parameter,
                    "coordination pairs given for module 1");
            auto cg = coord_loss_and_grad(all_params[idx - 1], all_params[idx],
                                          batch.coord_pairs[idx], schedule);
            result.coord_terms[idx] = cg.loss;
            for (size_t w = 0; w < cg.grad.size(); ++w)
                result.grads[idx][w] += lambda_coor * cg.grad[w];
        }
    }

    for (size_t idx = 0; idx < M; ++idx)
        result.total += lambda_module * result.module_terms[idx] +
                        lambda_coor * result.coord_terms[idx];
    return result;
}

}  // namespace nestar
