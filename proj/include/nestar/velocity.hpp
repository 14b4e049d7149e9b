#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nestar/error.hpp"

namespace nestar {

// Shape of one module's velocity network. The network is a plain MLP:
// concatenated features -> hidden_layers x (linear + tanh) -> linear head.
// hidden_layers = 0 degenerates to a single linear map (test mode).
struct ArchSpec {
    int patch_tokens = 1;   // tokens per output patch, k^(m-1)
    int c = 1;              // token dimensionality
    int max_prefix = 0;     // conditioning-token capacity, k^(m-1)*(k-1)
    int hidden_width = 128;
    int hidden_layers = 2;
    int t_embed_dim = 8;    // sinusoidal, sin/cos pairs; must be even
    int pos_slots = 1;      // patch-position one-hot size (k for nested modules)
    int num_classes = 0;    // 0 = unconditional

    int out_dim() const { return patch_tokens * c; }

    // [y | t-embedding | padded prefix | prefix mask | position one-hot | class one-hot]
    int input_dim() const {
        return patch_tokens * c + t_embed_dim + max_prefix * c + max_prefix + pos_slots +
               num_classes;
    }

    // Layer sizes of the underlying MLP, input first.
    std::vector<int> layer_dims() const;
    int64_t weight_count() const;

    void validate() const;
    bool operator==(const ArchSpec&) const = default;
};

// Flat parameter vector. Layout contract (consumed by the checkpoint
// format): for each linear layer in order, the weight matrix row-major
// (out x in) followed by the bias vector (out).
struct VelocityParams {
    ArchSpec arch;
    std::vector<double> weights;
};

struct VelocityInput {
    std::vector<double> y;       // interpolant, patch_tokens*c, flattened
    double t = 0.0;              // in [0, 1]
    std::vector<double> prefix;  // max_prefix*c, zero-padded past prefix_tokens
    int prefix_tokens = 0;       // leading valid tokens; defines the mask
    int patch_pos = 1;           // 1..pos_slots
    int class_id = -1;           // -1 when unconditional
};

// Builds a padded input from an unpadded prefix slice.
VelocityInput make_input(const ArchSpec& arch, std::vector<double> y, double t,
                         std::span<const double> prefix_tokens_flat, int patch_pos,
                         int class_id);

// Rejects shape violations, t outside [0,1], and nonzero padded entries.
void validate_input(const ArchSpec& arch, const VelocityInput& input);

// One teacher-forced training item: network input plus target velocity.
struct TrainItem {
    VelocityInput input;
    std::vector<double> target;  // patch_tokens*c
};

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as VelocityParams::weights
};

// Weights ~ U(-s, s) with s = 1/sqrt(fan_in) per layer, biases zero.
VelocityParams init_params(const ArchSpec& arch, uint64_t seed);

std::vector<double> forward(const VelocityParams& params, const VelocityInput& input);

// Mean over items and vector components of the squared error between
// forward() and the target velocity.
double batch_loss(const VelocityParams& params, std::span<const TrainItem> items);

// Same loss evaluated with extended-precision arithmetic. Weights stay
// 64-bit; this exists so the finite-difference oracle is not limited by
// double rounding in L(w+h) - L(w-h), which would swamp derivatives below
// ~1e-7 on O(1) losses.
long double batch_loss_xp(const VelocityParams& params, std::span<const TrainItem> items);

// batch_loss plus its analytic gradient, accumulated in serial item order.
LossGrad loss_and_grad(const VelocityParams& params, std::span<const TrainItem> items);

// Central-difference gradient of batch_loss, one weight at a time.
std::vector<double> finite_diff_grad(const VelocityParams& params,
                                     std::span<const TrainItem> items, double h);

// Generic central-difference oracle over an arbitrary loss of the weights.
// The difference quotient is formed at the loss function's own precision.
template <typename LossFn>
std::vector<double> finite_diff_grad_fn(const VelocityParams& params, LossFn&& loss_fn,
                                        double h) {
    require(h > 0.0, ErrorKind::invalid_parameter, "finite-difference step h must be > 0");
    using R = decltype(loss_fn(params));
    VelocityParams probe = params;
    std::vector<double> grad(params.weights.size());
    for (size_t w = 0; w < probe.weights.size(); ++w) {
        const double saved = probe.weights[w];
        probe.weights[w] = saved + h;
        const R up = loss_fn(probe);
        probe.weights[w] = saved - h;
        const R down = loss_fn(probe);
        probe.weights[w] = saved;
        grad[w] = static_cast<double>((up - down) / static_cast<R>(2.0 * h));
    }
    return grad;
}

// Elementwise relative error with denominator max(|a|, |b|, floor).
double max_rel_error(std::span<const double> a, std::span<const double> b,
                     double floor = 1e-8);

}  // namespace nestar
