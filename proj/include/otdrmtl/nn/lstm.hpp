#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/nn/init.hpp"
#include "otdrmtl/nn/layers.hpp"
#include "otdrmtl/nn/tensor.hpp"

namespace otdrmtl::nn {

// Standard LSTM over [batch, time, in] returning the full hidden sequence
// [batch, time, hidden]. Gate order in the stacked matrices: input, forget,
// candidate, output. Initial states are zero; the forget-gate bias starts
// at 1.
struct Lstm {
    std::size_t in_features = 0, hidden = 0;
    Tensor wx, wh, b;     // [4H, in], [4H, H], [4H]
    Tensor gwx, gwh, gb;

    // caches for BPTT
    Tensor x_cache;
    std::vector<Tensor> gates_i, gates_f, gates_g, gates_o, cells, tanh_c, hidden_seq;

    Lstm() = default;
    Lstm(std::size_t in, std::size_t h, Rng& rng) : in_features(in), hidden(h) {
        wx = Tensor({4 * h, in});
        wh = Tensor({4 * h, h});
        b = Tensor({4 * h});
        gwx = Tensor({4 * h, in});
        gwh = Tensor({4 * h, h});
        gb = Tensor({4 * h});
        xavier_uniform(wx, in, h, rng);
        recurrent_uniform(wh, h, rng);
        for (std::size_t j = h; j < 2 * h; ++j) b[j] = 1.0;  // forget gate
    }

    void register_params(ParamSet& set, const std::string& prefix) {
        set.push_back({prefix + ".wx", &wx, &gwx});
        set.push_back({prefix + ".wh", &wh, &gwh});
        set.push_back({prefix + ".b", &b, &gb});
    }

    Tensor forward(const Tensor& x) {
        if (x.shape.size() != 3 || x.shape[2] != in_features)
            throw shape_error("lstm: input " + shape_str(x.shape) + " does not match weights " + shape_str(wx.shape));
        const std::size_t batch = x.shape[0], steps = x.shape[1];
        const std::size_t h4 = 4 * hidden;

        gates_i.assign(steps, Tensor({batch, hidden}));
        gates_f.assign(steps, Tensor({batch, hidden}));
        gates_g.assign(steps, Tensor({batch, hidden}));
        gates_o.assign(steps, Tensor({batch, hidden}));
        cells.assign(steps, Tensor({batch, hidden}));
        tanh_c.assign(steps, Tensor({batch, hidden}));
        hidden_seq.assign(steps, Tensor({batch, hidden}));

        Tensor h_prev({batch, hidden});
        Tensor c_prev({batch, hidden});
        Tensor z({batch, h4});
        Tensor xt({batch, in_features});

        Tensor out({batch, steps, hidden});
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t j = 0; j < in_features; ++j) xt.at2(bi, j) = x.at3(bi, t, j);
            gemm_nt(xt.data.data(), wx.data.data(), z.data.data(), batch, in_features, h4);
            gemm_nt_acc(h_prev.data.data(), wh.data.data(), z.data.data(), batch, hidden, h4);
            for (std::size_t bi = 0; bi < batch; ++bi) {
                double* zb = &z.data[bi * h4];
                for (std::size_t j = 0; j < h4; ++j) zb[j] += b[j];
            }
            for (std::size_t bi = 0; bi < batch; ++bi) {
                for (std::size_t j = 0; j < hidden; ++j) {
                    const double zi = z.at2(bi, j);
                    const double zf = z.at2(bi, hidden + j);
                    const double zg = z.at2(bi, 2 * hidden + j);
                    const double zo = z.at2(bi, 3 * hidden + j);
                    const double gi = sigmoid(zi);
                    const double gf = sigmoid(zf);
                    const double gg = std::tanh(zg);
                    const double go = sigmoid(zo);
                    const double c = gf * c_prev.at2(bi, j) + gi * gg;
                    const double tc = std::tanh(c);
                    const double hv = go * tc;
                    gates_i[t].at2(bi, j) = gi;
                    gates_f[t].at2(bi, j) = gf;
                    gates_g[t].at2(bi, j) = gg;
                    gates_o[t].at2(bi, j) = go;
                    cells[t].at2(bi, j) = c;
                    tanh_c[t].at2(bi, j) = tc;
                    hidden_seq[t].at2(bi, j) = hv;
                    out.at3(bi, t, j) = hv;
                    if (!std::isfinite(hv))
                        throw numeric_error("lstm: non-finite hidden state at step " + std::to_string(t));
                }
            }
            h_prev = hidden_seq[t];
            c_prev = cells[t];
        }
        x_cache = x;
        return out;
    }

    Tensor backward(const Tensor& dy) {
        const std::size_t batch = x_cache.shape[0], steps = x_cache.shape[1];
        const std::size_t h4 = 4 * hidden;
        dy.require_shape({batch, steps, hidden}, "lstm backward");

        Tensor dh({batch, hidden}), dc({batch, hidden});
        Tensor dz({batch, h4});
        Tensor dx({batch, steps, in_features});
        Tensor xt({batch, in_features});
        const Tensor zero_state({batch, hidden});

        for (std::size_t t = steps; t-- > 0;) {
            const Tensor& c_prev_t = t > 0 ? cells[t - 1] : zero_state;
            const Tensor& h_prev_t = t > 0 ? hidden_seq[t - 1] : zero_state;
            for (std::size_t bi = 0; bi < batch; ++bi) {
                for (std::size_t j = 0; j < hidden; ++j) {
                    const double dht = dh.at2(bi, j) + dy.at3(bi, t, j);
                    const double go = gates_o[t].at2(bi, j);
                    const double tc = tanh_c[t].at2(bi, j);
                    const double dct = dc.at2(bi, j) + dht * go * (1.0 - tc * tc);
                    const double gi = gates_i[t].at2(bi, j);
                    const double gf = gates_f[t].at2(bi, j);
                    const double gg = gates_g[t].at2(bi, j);
                    const double cp = c_prev_t.at2(bi, j);
                    dz.at2(bi, j) = dct * gg * gi * (1.0 - gi);
                    dz.at2(bi, hidden + j) = dct * cp * gf * (1.0 - gf);
                    dz.at2(bi, 2 * hidden + j) = dct * gi * (1.0 - gg * gg);
                    dz.at2(bi, 3 * hidden + j) = dht * tc * go * (1.0 - go);
                    dc.at2(bi, j) = dct * gf;
                }
            }
            // parameter gradients
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t j = 0; j < in_features; ++j) xt.at2(bi, j) = x_cache.at3(bi, t, j);
            gemm_tn_acc(dz.data.data(), xt.data.data(), gwx.data.data(), batch, h4, in_features);
            gemm_tn_acc(dz.data.data(), h_prev_t.data.data(), gwh.data.data(), batch, h4, hidden);
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t j = 0; j < h4; ++j) gb[j] += dz.at2(bi, j);
            // input and recurrent gradients
            Tensor dxt({batch, in_features});
            gemm_nn_acc(dz.data.data(), wx.data.data(), dxt.data.data(), batch, h4, in_features);
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t j = 0; j < in_features; ++j) dx.at3(bi, t, j) = dxt.at2(bi, j);
            dh.fill(0.0);
            gemm_nn_acc(dz.data.data(), wh.data.data(), dh.data.data(), batch, h4, hidden);
        }
        return dx;
    }
};

inline Tensor reverse_time(const Tensor& x) {
    if (x.shape.size() != 3) throw shape_error("reverse_time: expected rank-3 tensor");
    Tensor y(x.shape);
    const std::size_t batch = x.shape[0], steps = x.shape[1], feat = x.shape[2];
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t f = 0; f < feat; ++f) y.at3(b, steps - 1 - t, f) = x.at3(b, t, f);
    return y;
}

// Bidirectional LSTM: forward pass plus a time-reversed pass, re-aligned
// and concatenated along the feature axis -> [batch, time, 2 hidden].
struct BiLstm {
    Lstm fwd, bwd;

    BiLstm() = default;
    BiLstm(std::size_t in, std::size_t h, Rng& rng) : fwd(in, h, rng), bwd(in, h, rng) {}

    std::size_t hidden() const { return fwd.hidden; }

    void register_params(ParamSet& set, const std::string& prefix) {
        fwd.register_params(set, prefix + ".fwd");
        bwd.register_params(set, prefix + ".bwd");
    }

    Tensor forward(const Tensor& x) {
        if (fwd.hidden != bwd.hidden || fwd.in_features != bwd.in_features)
            throw shape_error("bilstm: direction parameter shapes disagree");
        const Tensor yf = fwd.forward(x);
        const Tensor yb = reverse_time(bwd.forward(reverse_time(x)));
        const std::size_t batch = x.shape[0], steps = x.shape[1], h = fwd.hidden;
        Tensor y({batch, steps, 2 * h});
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < steps; ++t) {
                for (std::size_t j = 0; j < h; ++j) {
                    y.at3(b, t, j) = yf.at3(b, t, j);
                    y.at3(b, t, h + j) = yb.at3(b, t, j);
                }
            }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const std::size_t batch = dy.shape[0], steps = dy.shape[1], h = fwd.hidden;
        dy.require_shape({batch, steps, 2 * h}, "bilstm backward");
        Tensor dyf({batch, steps, h}), dyb({batch, steps, h});
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < steps; ++t)
                for (std::size_t j = 0; j < h; ++j) {
                    dyf.at3(b, t, j) = dy.at3(b, t, j);
                    dyb.at3(b, t, j) = dy.at3(b, t, h + j);
                }
        const Tensor dxf = fwd.backward(dyf);
        const Tensor dxb = reverse_time(bwd.backward(reverse_time(dyb)));
        Tensor dx = dxf;
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dxb[i];
        return dx;
    }
};

}  // namespace otdrmtl::nn
