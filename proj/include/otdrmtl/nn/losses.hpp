#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/nn/tensor.hpp"

namespace otdrmtl::nn {

inline constexpr double kProbClip = 1e-7;

namespace detail {
inline double clip_prob(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }
// derivative of log(clip(p)) w.r.t. p
inline double dlog_clip(double p) { return (p > kProbClip && p < 1.0 - kProbClip) ? 1.0 / p : 0.0; }
}  // namespace detail

struct LossResult {
    double value = 0.0;
    Tensor grad;  // d value / d predictions
};

// Binary cross entropy over probabilities (mean over the batch). A
// positive `norm` overrides the divisor so partial batches can sum to an
// exact full-batch mean.
inline LossResult bce(const Tensor& probs, const std::vector<double>& targets, double norm = -1.0) {
    if (probs.numel() != targets.size()) throw shape_error("bce: prediction/target size mismatch");
    const double n = norm > 0.0 ? norm : static_cast<double>(targets.size());
    LossResult res;
    res.grad = Tensor(probs.shape);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double p = probs[i];
        const double y = targets[i];
        res.value -= (y * std::log(detail::clip_prob(p)) + (1.0 - y) * std::log(detail::clip_prob(1.0 - p))) / n;
        res.grad[i] = (-y * detail::dlog_clip(p) + (1.0 - y) * detail::dlog_clip(1.0 - p)) / n;
    }
    return res;
}

// Mean squared error over unmasked entries; an all-masked batch yields
// zero loss and zero gradient. `norm` >= 0 overrides the divisor.
inline LossResult mse(const Tensor& pred, const Tensor& target, const Tensor& mask, double norm = -1.0) {
    if (!pred.same_shape(target) || !pred.same_shape(mask))
        throw shape_error("mse: prediction " + shape_str(pred.shape) + " vs target " + shape_str(target.shape));
    double active = 0.0;
    for (double m : mask.data) active += m;
    if (norm >= 0.0) active = norm;
    LossResult res;
    res.grad = Tensor(pred.shape);
    if (active == 0.0) return res;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        if (mask[i] == 0.0) continue;
        const double e = pred[i] - target[i];
        res.value += e * e / active;
        res.grad[i] = 2.0 * e / active;
    }
    return res;
}

// Multiclass cross entropy over softmax probabilities (mean over batch).
inline LossResult cross_entropy(const Tensor& probs, const std::vector<int>& classes, double norm = -1.0) {
    if (probs.shape.size() != 2 || probs.shape[0] != classes.size())
        throw shape_error("cross_entropy: probs " + shape_str(probs.shape) + " vs " +
                          std::to_string(classes.size()) + " labels");
    const std::size_t batch = probs.shape[0], n_classes = probs.shape[1];
    const double n = norm > 0.0 ? norm : static_cast<double>(batch);
    LossResult res;
    res.grad = Tensor(probs.shape);
    for (std::size_t i = 0; i < batch; ++i) {
        const int c = classes[i];
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
            throw data_error("cross_entropy: class label out of range");
        const double p = probs.at2(i, static_cast<std::size_t>(c));
        res.value -= std::log(detail::clip_prob(p)) / n;
        res.grad.at2(i, static_cast<std::size_t>(c)) = -detail::dlog_clip(p) / n;
    }
    return res;
}

inline double weighted_sum(const std::array<double, 4>& losses, const std::array<double, 4>& weights) {
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) total += weights[i] * losses[i];
    return total;
}

}  // namespace otdrmtl::nn
