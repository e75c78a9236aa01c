#pragma once

#include <cmath>

#include "otdrmtl/nn/tensor.hpp"
#include "otdrmtl/rng.hpp"

namespace otdrmtl::nn {

// Uniform Glorot/Xavier: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline void xavier_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.data) v = rng.uniform(-a, a);
}

// Scaled uniform for recurrent weights: U(-1/sqrt(h), 1/sqrt(h)).
inline void recurrent_uniform(Tensor& t, std::size_t hidden, Rng& rng) {
    const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& v : t.data) v = rng.uniform(-a, a);
}

}  // namespace otdrmtl::nn
