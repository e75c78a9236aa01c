#pragma once

#include <cmath>
#include <vector>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/nn/tensor.hpp"

namespace otdrmtl::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;

    AdamState() = default;
    explicit AdamState(const ParamSet& params) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto& p : params) {
            m.emplace_back(p.value->shape);
            v.emplace_back(p.value->shape);
        }
    }

    void check_compatible(const ParamSet& params) const {
        if (m.size() != params.size() || v.size() != params.size())
            throw shape_error("adam: state/parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i)
            if (!m[i].same_shape(*params[i].value) || !v[i].same_shape(*params[i].value))
                throw shape_error("adam: moment shape mismatch for " + params[i].name);
    }
};

// One bias-corrected Adam update. Non-finite gradients abort the step
// before any parameter or moment is touched.
inline void adam_step(ParamSet& params, AdamState& state, const AdamConfig& cfg) {
    state.check_compatible(params);
    for (const auto& p : params)
        if (!p.grad->all_finite()) throw numeric_error("adam: non-finite gradient in " + p.name + "; step aborted");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& value = *params[i].value;
        const Tensor& grad = *params[i].grad;
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < value.numel(); ++j) {
            const double g = grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            value[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

// Scales all gradients so their global L2 norm does not exceed max_norm.
inline double clip_grad_norm(ParamSet& params, double max_norm) {
    double sum_sq = 0.0;
    for (const auto& p : params)
        for (double g : p.grad->data) sum_sq += g * g;
    const double norm = std::sqrt(sum_sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto& p : params)
            for (double& g : p.grad->data) g *= scale;
    }
    return norm;
}

}  // namespace otdrmtl::nn
