#include "deepsep/optim.hpp"

#include "deepsep/error.hpp"

#include <cmath>

namespace deepsep {

void adam_step(AdamState& state, std::span<Matrix* const> params,
               std::span<const Matrix* const> grads) {
    if (params.size() != grads.size()) throw OptimizerError("adam: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k]->rows() != grads[k]->rows() || params[k]->cols() != grads[k]->cols())
            throw OptimizerError("adam: gradient shape mismatch for tensor " + std::to_string(k));
        if (!grads[k]->allFinite())
            throw OptimizerError("adam: non-finite gradient in tensor " + std::to_string(k));
    }
    if (state.m.empty()) {
        for (const Matrix* p : params) {
            state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
            state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
    } else if (state.m.size() != params.size()) {
        throw OptimizerError("adam: state was built for a different parameter set");
    }

    ++state.step;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Matrix& g = *grads[k];
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g.cwiseAbs2();
        const auto mhat = state.m[k].array() / corr1;
        const auto vhat = state.v[k].array() / corr2;
        params[k]->array() -= state.lr * mhat / (vhat.sqrt() + state.eps);
    }
}

void adam_step(AdamState& state, MlpModel& model, const Gradients& grads) {
    const auto p = model.params.tensors();
    const auto g = grads.tensors();
    adam_step(state, std::span<Matrix* const>(p), std::span<const Matrix* const>(g));
    model.touch();
}

void scale_lr(AdamState& state, double factor) {
    if (!(factor > 0.0)) throw ParameterError("scale_lr: factor must be positive");
    state.lr *= factor;
}

}  // namespace deepsep
