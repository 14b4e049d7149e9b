#pragma once

#include <span>
#include <vector>

#include "nestar/schedule.hpp"
#include "nestar/velocity.hpp"

namespace nestar {

// One teacher-forced flow-matching sample for module m: the target patch x,
// its paired noise, the time step, and the conditioning context.
struct FlowSample {
    std::vector<double> x;       // target patch, patch_tokens*c
    std::vector<double> eps;     // noise, same shape
    double t = 0.0;              // in [0, 1]
    std::vector<double> prefix;  // true conditioning tokens, unpadded, flattened
    int patch_pos = 1;
    int class_id = -1;
};

// Inputs of one coordination term: module m's first patch (the full span
// produced by modules 1..m-1) plus shared noise and time.
struct CoordPair {
    int m = 0;                     // >= 2
    std::vector<double> x_prefix;  // tokens x_{1:k^(m-1)}, flattened
    std::vector<double> eps;       // shared noise, same shape
    double t = 0.0;
    int class_id = -1;
};

// (1-t)*x + t*eps, elementwise.
std::vector<double> interpolate(std::span<const double> x, std::span<const double> eps,
                                double t);

// eps - x; the time derivative of the straight interpolation path.
std::vector<double> target_velocity(std::span<const double> x, std::span<const double> eps);

// Turns a flow sample into a network training item (y = interpolant,
// target = eps - x).
TrainItem to_train_item(const ArchSpec& arch, const FlowSample& sample);

double module_loss(const VelocityParams& params, std::span<const FlowSample> samples);
LossGrad module_loss_and_grad(const VelocityParams& params,
                              std::span<const FlowSample> samples);

// Extended-precision evaluation for the finite-difference oracle.
long double module_loss_xp(const VelocityParams& params,
                           std::span<const FlowSample> samples);

// Mean squared difference between the concatenated module-(m-1) velocities
// on the pair's interpolant (teacher-forced true prefixes, fixed target) and
// module m's first-patch velocity on the same interpolant with empty prefix.
double coord_loss(const VelocityParams& params_prev, const VelocityParams& params_m,
                  std::span<const CoordPair> pairs, const ScheduleSpec& schedule);

// Same value plus the gradient with respect to params_m only.
LossGrad coord_loss_and_grad(const VelocityParams& params_prev,
                             const VelocityParams& params_m,
                             std::span<const CoordPair> pairs,
                             const ScheduleSpec& schedule);

// Extended-precision evaluation for the finite-difference oracle. Only
// module m's side runs at extended precision; the stitched target is the
// same fixed double-precision vector the training path sees.
long double coord_loss_xp(const VelocityParams& params_prev,
                          const VelocityParams& params_m,
                          std::span<const CoordPair> pairs,
                          const ScheduleSpec& schedule);

// Per-step batch of the combined objective: one flow-sample batch per module,
// one coordination batch per module >= 2.
struct JointBatch {
    std::vector<std::vector<FlowSample>> module_samples;  // index m-1, size M
    std::vector<std::vector<CoordPair>> coord_pairs;      // index m-1; [0] stays empty
};

struct TotalLoss {
    double total = 0.0;
    std::vector<double> module_terms;  // per module, unweighted
    std::vector<double> coord_terms;   // per module, 0 for m=1
    std::vector<std::vector<double>> grads;  // per module, lambda-weighted
};

TotalLoss total_loss(std::span<const VelocityParams> all_params, const JointBatch& batch,
                     double lambda_module, double lambda_coor,
                     const ScheduleSpec& schedule);

}  // namespace nestar
