#include "nestar/velocity.hpp"

#include <algorithm>
#include <cmath>

#include "nestar/rng.hpp"

namespace nestar {

namespace {

constexpr double kPi = 3.14159265358979323846;

void embed_time(double t, int dim, double* out) {
    double freq = kPi;
    for (int j = 0; j < dim / 2; ++j) {
        out[2 * j] = std::sin(freq * t);
        out[2 * j + 1] = std::cos(freq * t);
        freq *= 2.0;
    }
}

// Concatenated feature vector; layout documented in ArchSpec::input_dim.
std::vector<double> assemble(const ArchSpec& arch, const VelocityInput& in) {
    std::vector<double> f(arch.input_dim(), 0.0);
    size_t at = 0;
    std::copy(in.y.begin(), in.y.end(), f.begin() + at);
    at += in.y.size();
    embed_time(in.t, arch.t_embed_dim, f.data() + at);
    at += arch.t_embed_dim;
    std::copy(in.prefix.begin(), in.prefix.end(), f.begin() + at);
    at += in.prefix.size();
    std::fill_n(f.begin() + at, in.prefix_tokens, 1.0);  // mask
    at += arch.max_prefix;
    f[at + in.patch_pos - 1] = 1.0;
    at += arch.pos_slots;
    if (arch.num_classes > 0) f[at + in.class_id] = 1.0;
    return f;
}

}  // namespace

std::vector<int> ArchSpec::layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim());
    for (int l = 0; l < hidden_layers; ++l) dims.push_back(hidden_width);
    dims.push_back(out_dim());
    return dims;
}

int64_t ArchSpec::weight_count() const {
    const auto dims = layer_dims();
    int64_t count = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l)
        count += static_cast<int64_t>(dims[l + 1]) * dims[l] + dims[l + 1];
    return count;
}

void ArchSpec::validate() const {
    require(patch_tokens >= 1, ErrorKind::invalid_parameter, "patch_tokens must be >= 1");
    require(c >= 1, ErrorKind::invalid_parameter, "token dim c must be >= 1");
    require(max_prefix >= 0, ErrorKind::invalid_parameter, "max_prefix must be >= 0");
    require(hidden_width >= 1, ErrorKind::invalid_parameter, "hidden_width must be >= 1");
    require(hidden_layers >= 0, ErrorKind::invalid_parameter, "hidden_layers must be >= 0");
    require(t_embed_dim >= 2 && t_embed_dim % 2 == 0, ErrorKind::invalid_parameter,
            "t_embed_dim must be even and >= 2 (sin/cos pairs)");
    require(pos_slots >= 1, ErrorKind::invalid_parameter, "pos_slots must be >= 1");
    require(num_classes >= 0, ErrorKind::invalid_parameter, "num_classes must be >= 0");
}

VelocityInput make_input(const ArchSpec& arch, std::vector<double> y, double t,
                         std::span<const double> prefix_tokens_flat, int patch_pos,
                         int class_id) {
    require(prefix_tokens_flat.size() % arch.c == 0, ErrorKind::dimension_mismatch,
            "prefix length not a multiple of token dim");
    VelocityInput in;
    in.y = std::move(y);
    in.t = t;
    in.prefix.assign(static_cast<size_t>(arch.max_prefix) * arch.c, 0.0);
    std::copy(prefix_tokens_flat.begin(), prefix_tokens_flat.end(), in.prefix.begin());
    in.prefix_tokens = static_cast<int>(prefix_tokens_flat.size()) / arch.c;
    in.patch_pos = patch_pos;
    in.class_id = class_id;
    validate_input(arch, in);
    return in;
}

void validate_input(const ArchSpec& arch, const VelocityInput& in) {
    require(static_cast<int>(in.y.size()) == arch.out_dim(), ErrorKind::dimension_mismatch,
            "y has " + std::to_string(in.y.size()) + " values, arch expects " +
                std::to_string(arch.out_dim()));
    require(in.t >= 0.0 && in.t <= 1.0, ErrorKind::invalid_parameter,
            "t=" + std::to_string(in.t) + " outside [0,1]");
    require(static_cast<int>(in.prefix.size()) == arch.max_prefix * arch.c,
            ErrorKind::dimension_mismatch, "prefix storage does not match max_prefix");
    require(in.prefix_tokens >= 0 && in.prefix_tokens <= arch.max_prefix,
            ErrorKind::out_of_range, "prefix_tokens outside 0..max_prefix");
    for (size_t j = static_cast<size_t>(in.prefix_tokens) * arch.c; j < in.prefix.size(); ++j)
        require(in.prefix[j] == 0.0, ErrorKind::invalid_parameter,
                "padded prefix entry " + std::to_string(j) + " is nonzero");
    require(in.patch_pos >= 1 && in.patch_pos <= arch.pos_slots, ErrorKind::out_of_range,
            "patch_pos outside 1..pos_slots");
    if (arch.num_classes > 0) {
        require(in.class_id >= 0 && in.class_id < arch.num_classes, ErrorKind::out_of_range,
                "class_id outside 0..num_classes-1");
    } else {
        require(in.class_id == -1, ErrorKind::invalid_parameter,
                "class_id given to an unconditional arch");
    }
}

VelocityParams init_params(const ArchSpec& arch, uint64_t seed) {
    arch.validate();
    VelocityParams params;
    params.arch = arch;
    params.weights.reserve(static_cast<size_t>(arch.weight_count()));
    Rng rng(seed);
    const auto dims = arch.layer_dims();
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        const int64_t nw = static_cast<int64_t>(dims[l + 1]) * dims[l];
        for (int64_t j = 0; j < nw; ++j) params.weights.push_back(rng.uniform(-scale, scale));
        for (int j = 0; j < dims[l + 1]; ++j) params.weights.push_back(0.0);
    }
    return params;
}

namespace {

void check_params(const VelocityParams& params) {
    params.arch.validate();
    require(static_cast<int64_t>(params.weights.size()) == params.arch.weight_count(),
            ErrorKind::dimension_mismatch,
            "weight vector has " + std::to_string(params.weights.size()) +
                " values, arch implies " + std::to_string(params.arch.weight_count()));
}

// Forward pass keeping post-activation values per layer for backprop.
// acts[0] is the feature vector, acts.back() the network output. Templated
// on the scalar so the finite-difference oracle can run at extended
// precision; the training path instantiates double.
template <typename T>
std::vector<std::vector<T>> forward_acts(const VelocityParams& params,
                                         const VelocityInput& in) {
    const auto dims = params.arch.layer_dims();
    const auto features = assemble(params.arch, in);
    std::vector<std::vector<T>> acts;
    acts.reserve(dims.size());
    acts.emplace_back(features.begin(), features.end());
    const double* w = params.weights.data();
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const int din = dims[l];
        const int dout = dims[l + 1];
        const double* bias = w + static_cast<int64_t>(dout) * din;
        const std::vector<T>& z = acts.back();
        std::vector<T> next(dout);
        const bool is_last = (l + 2 == dims.size());
        for (int r = 0; r < dout; ++r) {
            const double* row = w + static_cast<int64_t>(r) * din;
            T acc = bias[r];
            for (int jc = 0; jc < din; ++jc) acc += row[jc] * z[jc];
            next[r] = is_last ? acc : std::tanh(acc);
        }
        acts.push_back(std::move(next));
        w = bias + dout;
    }
    return acts;
}

template <typename T>
T batch_loss_t(const VelocityParams& params, std::span<const TrainItem> items) {
    check_params(params);
    require(!items.empty(), ErrorKind::invalid_parameter, "empty batch");
    const int d = params.arch.out_dim();
    T loss = 0;
    for (const TrainItem& item : items) {
        validate_input(params.arch, item.input);
        require(static_cast<int>(item.target.size()) == d, ErrorKind::dimension_mismatch,
                "target size does not match arch out_dim");
        const auto out = forward_acts<T>(params, item.input).back();
        for (int j = 0; j < d; ++j) {
            const T e = out[j] - static_cast<T>(item.target[j]);
            loss += e * e;
        }
    }
    return loss / (static_cast<T>(items.size()) * d);
}

}  // namespace

std::vector<double> forward(const VelocityParams& params, const VelocityInput& in) {
    check_params(params);
    validate_input(params.arch, in);
    return forward_acts<double>(params, in).back();
}

double batch_loss(const VelocityParams& params, std::span<const TrainItem> items) {
    return batch_loss_t<double>(params, items);
}

long double batch_loss_xp(const VelocityParams& params, std::span<const TrainItem> items) {
    return batch_loss_t<long double>(params, items);
}

LossGrad loss_and_grad(const VelocityParams& params, std::span<const TrainItem> items) {
    check_params(params);
    require(!items.empty(), ErrorKind::invalid_parameter, "empty batch");
    const auto dims = params.arch.layer_dims();
    const int d = params.arch.out_dim();
    const double norm = 1.0 / (static_cast<double>(items.size()) * d);

    LossGrad result;
    result.grad.assign(params.weights.size(), 0.0);

    // Per-layer weight offsets into the flat vector.
    std::vector<int64_t> offsets;
    int64_t at = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        offsets.push_back(at);
        at += static_cast<int64_t>(dims[l + 1]) * dims[l] + dims[l + 1];
    }

    std::vector<double> delta, delta_prev;
    for (const TrainItem& item : items) {
        validate_input(params.arch, item.input);
        require(static_cast<int>(item.target.size()) == d, ErrorKind::dimension_mismatch,
                "target size does not match arch out_dim");
        const auto acts = forward_acts<double>(params, item.input);
        const std::vector<double>& out = acts.back();

        delta.resize(d);
        for (int j = 0; j < d; ++j) {
            const double e = out[j] - item.target[j];
            result.loss += e * e * norm;
            delta[j] = 2.0 * e * norm;
        }

        for (int l = static_cast<int>(dims.size()) - 2; l >= 0; --l) {
            const int din = dims[l];
            const int dout = dims[l + 1];
            const double* w = params.weights.data() + offsets[l];
            double* gw = result.grad.data() + offsets[l];
            double* gb = gw + static_cast<int64_t>(dout) * din;
            const std::vector<double>& z = acts[l];

            if (l > 0) {
                delta_prev.assign(din, 0.0);
                for (int r = 0; r < dout; ++r) {
                    const double dr = delta[r];
                    const double* row = w + static_cast<int64_t>(r) * din;
                    double* grow = gw + static_cast<int64_t>(r) * din;
                    for (int jc = 0; jc < din; ++jc) {
                        grow[jc] += dr * z[jc];
                        delta_prev[jc] += dr * row[jc];
                    }
                    gb[r] += dr;
                }
                // z = tanh(pre-activation) of the layer below
                for (int jc = 0; jc < din; ++jc) delta_prev[jc] *= 1.0 - z[jc] * z[jc];
                delta.swap(delta_prev);
            } else {
                for (int r = 0; r < dout; ++r) {
                    const double dr = delta[r];
                    double* grow = gw + static_cast<int64_t>(r) * din;
                    for (int jc = 0; jc < din; ++jc) grow[jc] += dr * z[jc];
                    gb[r] += dr;
                }
            }
        }
    }
    return result;
}

std::vector<double> finite_diff_grad(const VelocityParams& params,
                                     std::span<const TrainItem> items, double h) {
    return finite_diff_grad_fn(
        params, [&](const VelocityParams& p) { return batch_loss_xp(p, items); }, h);
}

double max_rel_error(std::span<const double> a, std::span<const double> b, double floor) {
    require(a.size() == b.size(), ErrorKind::dimension_mismatch,
            "vectors of different length");
    double worst = 0.0;
    for (size_t j = 0; j < a.size(); ++j) {
        const double denom = std::max({std::fabs(a[j]), std::fabs(b[j]), floor});
        worst = std::max(worst, std::fabs(a[j] - b[j]) / denom);
    }
    return worst;
}

}  // namespace nestar
