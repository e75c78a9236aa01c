#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/nn/init.hpp"
#include "otdrmtl/nn/tensor.hpp"
#include "otdrmtl/rng.hpp"

namespace otdrmtl::nn {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// y = x W^T + b, W stored [out, in]
struct Dense {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    Tensor w, b, gw, gb;
    Tensor x_cache;

    Dense() = default;
    Dense(std::size_t in, std::size_t out, Rng& rng) : in_features(in), out_features(out) {
        w = Tensor({out, in});
        b = Tensor({out});
        gw = Tensor({out, in});
        gb = Tensor({out});
        xavier_uniform(w, in, out, rng);
    }

    void register_params(ParamSet& set, const std::string& prefix) {
        set.push_back({prefix + ".w", &w, &gw});
        set.push_back({prefix + ".b", &b, &gb});
    }

    Tensor forward(const Tensor& x) {
        if (x.shape.size() != 2 || x.shape[1] != in_features)
            throw shape_error("dense: input " + shape_str(x.shape) + " does not match weight " + shape_str(w.shape));
        const std::size_t batch = x.shape[0];
        Tensor y({batch, out_features});
        gemm_nt(x.data.data(), w.data.data(), y.data.data(), batch, in_features, out_features);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < out_features; ++j) y.at2(i, j) += b[j];
        x_cache = x;
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const std::size_t batch = x_cache.shape[0];
        dy.require_shape({batch, out_features}, "dense backward");
        // dW += dy^T x ; db += sum(dy) ; dx = dy W
        gemm_tn_acc(dy.data.data(), x_cache.data.data(), gw.data.data(), batch, out_features, in_features);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < out_features; ++j) gb[j] += dy.at2(i, j);
        Tensor dx({batch, in_features});
        gemm_nn_acc(dy.data.data(), w.data.data(), dx.data.data(), batch, out_features, in_features);
        return dx;
    }
};

struct Relu {
    Tensor mask;

    Tensor forward(const Tensor& x) {
        Tensor y = x;
        mask = Tensor(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            if (x[i] > 0.0) {
                mask[i] = 1.0;
            } else {
                y[i] = 0.0;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        if (!dy.same_shape(mask)) throw shape_error("relu backward: shape mismatch");
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] *= mask[i];
        return dx;
    }
};

struct Sigmoid {
    Tensor y_cache;

    Tensor forward(const Tensor& x) {
        Tensor y = x;
        for (auto& v : y.data) v = sigmoid(v);
        y_cache = y;
        return y;
    }

    Tensor backward(const Tensor& dy) {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] *= y_cache[i] * (1.0 - y_cache[i]);
        return dx;
    }
};

// Row-wise softmax over the last axis of a [batch, classes] tensor.
struct Softmax {
    Tensor y_cache;

    Tensor forward(const Tensor& x) {
        if (x.shape.size() != 2) throw shape_error("softmax: expected rank-2 input, got " + shape_str(x.shape));
        Tensor y = x;
        const std::size_t batch = x.shape[0], classes = x.shape[1];
        for (std::size_t i = 0; i < batch; ++i) {
            double hi = y.at2(i, 0);
            for (std::size_t j = 1; j < classes; ++j) hi = std::max(hi, y.at2(i, j));
            double sum = 0.0;
            for (std::size_t j = 0; j < classes; ++j) {
                const double e = std::exp(y.at2(i, j) - hi);
                y.at2(i, j) = e;
                sum += e;
            }
            for (std::size_t j = 0; j < classes; ++j) y.at2(i, j) /= sum;
        }
        y_cache = y;
        return y;
    }

    Tensor backward(const Tensor& dy) {
        if (!dy.same_shape(y_cache)) throw shape_error("softmax backward: shape mismatch");
        const std::size_t batch = dy.shape[0], classes = dy.shape[1];
        Tensor dx(dy.shape);
        for (std::size_t i = 0; i < batch; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < classes; ++j) dot += dy.at2(i, j) * y_cache.at2(i, j);
            for (std::size_t j = 0; j < classes; ++j)
                dx.at2(i, j) = y_cache.at2(i, j) * (dy.at2(i, j) - dot);
        }
        return dx;
    }
};

// 1-D cross-correlation over [batch, len, channels]; stride 1, no padding.
// Kernel parameter layout is [filters, channels, kernel]; compute uses a
// [filters, kernel, channels] copy for contiguous inner loops.
struct Conv1d {
    std::size_t in_channels = 0, filters = 0, kernel = 0;
    Tensor w, b, gw, gb;
    Tensor x_cache;

    Conv1d() = default;
    Conv1d(std::size_t in_ch, std::size_t n_filters, std::size_t kernel_size, Rng& rng)
        : in_channels(in_ch), filters(n_filters), kernel(kernel_size) {
        w = Tensor({filters, in_channels, kernel});
        b = Tensor({filters});
        gw = Tensor({filters, in_channels, kernel});
        gb = Tensor({filters});
        xavier_uniform(w, in_channels * kernel, filters, rng);
    }

    void register_params(ParamSet& set, const std::string& prefix) {
        set.push_back({prefix + ".w", &w, &gw});
        set.push_back({prefix + ".b", &b, &gb});
    }

    Tensor transposed_kernel() const {
        Tensor wt({filters, kernel, in_channels});
        for (std::size_t f = 0; f < filters; ++f)
            for (std::size_t c = 0; c < in_channels; ++c)
                for (std::size_t k = 0; k < kernel; ++k) wt.at3(f, k, c) = w.at3(f, c, k);
        return wt;
    }

    Tensor forward(const Tensor& x) {
        if (x.shape.size() != 3 || x.shape[2] != in_channels)
            throw shape_error("conv1d: input " + shape_str(x.shape) + " does not match kernel " + shape_str(w.shape));
        const std::size_t batch = x.shape[0], len = x.shape[1];
        if (len < kernel)
            throw shape_error("conv1d: kernel size " + std::to_string(kernel) + " longer than input length " +
                              std::to_string(len));
        const std::size_t out_len = len - kernel + 1;
        const Tensor wt = transposed_kernel();
        Tensor y({batch, out_len, filters});
        for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t l = 0; l < out_len; ++l) {
                const double* xrow = &x.data[(bi * len + l) * in_channels];
                double* yrow = &y.data[(bi * out_len + l) * filters];
                for (std::size_t f = 0; f < filters; ++f) {
                    const double* wf = &wt.data[f * kernel * in_channels];
                    double acc = b[f];
                    for (std::size_t k = 0; k < kernel; ++k) {
                        const double* xk = xrow + k * in_channels;
                        const double* wk = wf + k * in_channels;
                        for (std::size_t c = 0; c < in_channels; ++c) acc += xk[c] * wk[c];
                    }
                    yrow[f] = acc;
                }
            }
        }
        x_cache = x;
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const std::size_t batch = x_cache.shape[0], len = x_cache.shape[1];
        const std::size_t out_len = len - kernel + 1;
        dy.require_shape({batch, out_len, filters}, "conv1d backward");
        const Tensor wt = transposed_kernel();
        Tensor gwt({filters, kernel, in_channels});
        Tensor dx({batch, len, in_channels});
        for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t l = 0; l < out_len; ++l) {
                const double* xrow = &x_cache.data[(bi * len + l) * in_channels];
                double* dxrow = &dx.data[(bi * len + l) * in_channels];
                const double* dyrow = &dy.data[(bi * out_len + l) * filters];
                for (std::size_t f = 0; f < filters; ++f) {
                    const double g = dyrow[f];
                    if (g == 0.0) continue;
                    gb[f] += g;
                    const double* wf = &wt.data[f * kernel * in_channels];
                    double* gwf = &gwt.data[f * kernel * in_channels];
                    for (std::size_t k = 0; k < kernel; ++k) {
                        const double* xk = xrow + k * in_channels;
                        double* dxk = dxrow + k * in_channels;
                        const double* wk = wf + k * in_channels;
                        double* gk = gwf + k * in_channels;
                        for (std::size_t c = 0; c < in_channels; ++c) {
                            dxk[c] += g * wk[c];
                            gk[c] += g * xk[c];
                        }
                    }
                }
            }
        }
        for (std::size_t f = 0; f < filters; ++f)
            for (std::size_t c = 0; c < in_channels; ++c)
                for (std::size_t k = 0; k < kernel; ++k) gw.at3(f, c, k) += gwt.at3(f, k, c);
        return dx;
    }
};

// Window-2 max pooling over the length axis; gradient routes to the argmax,
// first index on ties; an odd trailing element is dropped.
struct MaxPool1d {
    Tensor argmax;  // 0/1 per pooled output
    std::vector<std::size_t> in_shape;

    Tensor forward(const Tensor& x) {
        if (x.shape.size() != 3) throw shape_error("maxpool1d: expected rank-3 input, got " + shape_str(x.shape));
        const std::size_t batch = x.shape[0], len = x.shape[1], ch = x.shape[2];
        if (len < 2) throw shape_error("maxpool1d: input length < window");
        const std::size_t out_len = len / 2;
        Tensor y({batch, out_len, ch});
        argmax = Tensor({batch, out_len, ch});
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t l = 0; l < out_len; ++l)
                for (std::size_t c = 0; c < ch; ++c) {
                    const double a = x.at3(b, 2 * l, c);
                    const double d = x.at3(b, 2 * l + 1, c);
                    if (a >= d) {
                        y.at3(b, l, c) = a;
                        argmax.at3(b, l, c) = 0.0;
                    } else {
                        y.at3(b, l, c) = d;
                        argmax.at3(b, l, c) = 1.0;
                    }
                }
        in_shape = x.shape;
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const std::size_t batch = in_shape[0], len = in_shape[1], ch = in_shape[2];
        dy.require_shape({batch, len / 2, ch}, "maxpool1d backward");
        Tensor dx({batch, len, ch});
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t l = 0; l < len / 2; ++l)
                for (std::size_t c = 0; c < ch; ++c)
                    dx.at3(b, 2 * l + static_cast<std::size_t>(argmax.at3(b, l, c)), c) = dy.at3(b, l, c);
        return dx;
    }
};

// Inverted dropout: train mode scales kept activations by 1/(1-rate);
// eval mode is the identity.
struct Dropout {
    double rate = 0.0;
    Tensor mask;
    bool train_cached = false;

    explicit Dropout(double r = 0.0) : rate(r) {
        if (r < 0.0 || r >= 1.0) throw config_error("dropout: rate must lie in [0, 1)");
    }

    Tensor forward(const Tensor& x, bool train, Rng& rng) {
        if (!train || rate == 0.0) {
            train_cached = false;
            return x;
        }
        train_cached = true;
        const double keep = 1.0 - rate;
        mask = Tensor(x.shape);
        Tensor y = x;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            if (rng.uniform() < rate) {
                mask[i] = 0.0;
                y[i] = 0.0;
            } else {
                mask[i] = 1.0 / keep;
                y[i] *= 1.0 / keep;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        if (!train_cached) return dy;
        if (!dy.same_shape(mask)) throw shape_error("dropout backward: shape mismatch");
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] *= mask[i];
        return dx;
    }
};

}  // namespace otdrmtl::nn
