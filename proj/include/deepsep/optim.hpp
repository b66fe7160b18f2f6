#pragma once

#include "deepsep/nn.hpp"

#include <span>
#include <vector>

namespace deepsep {

struct AdamState {
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<Matrix> m;  // first moments, sized lazily on the first step
    std::vector<Matrix> v;  // second moments
};

/// One bias-corrected Adam update. Refuses (OptimizerError, nothing modified)
/// when any gradient entry is non-finite or shapes disagree.
void adam_step(AdamState& state, std::span<Matrix* const> params,
               std::span<const Matrix* const> grads);

/// Applies the update to every trainable tensor and bumps the model version.
void adam_step(AdamState& state, MlpModel& model, const Gradients& grads);

/// Multiplies the learning rate; moments and step count are preserved.
void scale_lr(AdamState& state, double factor);

}  // namespace deepsep
