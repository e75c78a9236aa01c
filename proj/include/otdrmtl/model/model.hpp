#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/data/sample.hpp"
#include "otdrmtl/errors.hpp"
#include "otdrmtl/nn/adam.hpp"
#include "otdrmtl/nn/checkpoint.hpp"
#include "otdrmtl/nn/layers.hpp"
#include "otdrmtl/nn/losses.hpp"
#include "otdrmtl/nn/lstm.hpp"
#include "otdrmtl/rng.hpp"

namespace otdrmtl::model {

using nn::Tensor;

enum class ArchKind { MultitaskBiLstmCnn, CnnOnly, LstmOnly, BiLstmOnly };

inline std::string to_string(ArchKind k) {
    switch (k) {
        case ArchKind::MultitaskBiLstmCnn: return "bilstm-cnn";
        case ArchKind::CnnOnly: return "cnn";
        case ArchKind::LstmOnly: return "lstm";
        case ArchKind::BiLstmOnly: return "bilstm";
    }
    return "?";
}

inline ArchKind arch_kind_from_string(const std::string& s) {
    if (s == "bilstm-cnn") return ArchKind::MultitaskBiLstmCnn;
    if (s == "cnn") return ArchKind::CnnOnly;
    if (s == "lstm") return ArchKind::LstmOnly;
    if (s == "bilstm") return ArchKind::BiLstmOnly;
    throw config_error("unknown architecture: " + s);
}

// Shared-encoder hyperparameters plus the four task heads. All baselines
// keep identical heads; only the encoder differs.
struct Architecture {
    ArchKind kind = ArchKind::MultitaskBiLstmCnn;
    std::size_t seq_len = 50;
    std::size_t lstm_hidden = 32;
    std::size_t conv_filters = 32;
    std::size_t kernel = 3;
    double dropout = 0.2;
    std::array<std::size_t, 4> head_hidden{16, 20, 32, 40};
    std::array<double, 4> loss_weights{1.5, 0.5, 1.8, 1.0};

    void validate() const {
        if (seq_len < 4) throw config_error("Architecture: sequence length too short");
        if (lstm_hidden == 0 || conv_filters == 0 || kernel == 0) throw config_error("Architecture: zero-sized layer");
        if (kernel > seq_len) throw config_error("Architecture: kernel longer than sequence");
        if (dropout < 0.0 || dropout >= 1.0) throw config_error("Architecture: dropout must lie in [0, 1)");
        for (auto h : head_hidden)
            if (h == 0) throw config_error("Architecture: zero-sized head");
    }

    // width of the flattened encoder output feeding the heads
    std::size_t flatten_width() const {
        switch (kind) {
            case ArchKind::MultitaskBiLstmCnn:
            case ArchKind::CnnOnly:
                return (seq_len - kernel + 1) / 2 * conv_filters;
            case ArchKind::LstmOnly:
                return seq_len * lstm_hidden;
            case ArchKind::BiLstmOnly:
                return seq_len * 2 * lstm_hidden;
        }
        return 0;
    }
};

inline void to_json(nlohmann::json& j, const Architecture& a) {
    j = nlohmann::json{{"kind", to_string(a.kind)},        {"seq_len", a.seq_len},
                       {"lstm_hidden", a.lstm_hidden},     {"conv_filters", a.conv_filters},
                       {"kernel", a.kernel},               {"dropout", a.dropout},
                       {"head_hidden", a.head_hidden},     {"loss_weights", a.loss_weights}};
}

inline void from_json(const nlohmann::json& j, Architecture& a) {
    a = Architecture{};
    if (j.contains("kind")) a.kind = arch_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("seq_len")) j.at("seq_len").get_to(a.seq_len);
    if (j.contains("lstm_hidden")) j.at("lstm_hidden").get_to(a.lstm_hidden);
    if (j.contains("conv_filters")) j.at("conv_filters").get_to(a.conv_filters);
    if (j.contains("kernel")) j.at("kernel").get_to(a.kernel);
    if (j.contains("dropout")) j.at("dropout").get_to(a.dropout);
    if (j.contains("head_hidden")) j.at("head_hidden").get_to(a.head_hidden);
    if (j.contains("loss_weights")) j.at("loss_weights").get_to(a.loss_weights);
    a.validate();
}

// Per-batch predictions, post-activation.
struct TaskOutputs {
    Tensor t1;  // [B, 1] event probability
    Tensor t2;  // [B, 1] normalized onset position
    Tensor t3;  // [B, 2] standardized (loss, reflectance)
    Tensor t4;  // [B, 7] cause probabilities
};

// Training targets with masks; absent targets carry mask 0.
struct Batch {
    Tensor x;                 // [B, seq_len, 1]
    std::vector<double> t1;   // event flag
    Tensor t2, t2_mask;       // [B, 1]
    Tensor t3, t3_mask;       // [B, 2]
    std::vector<int> t4;      // cause class
    std::size_t size() const { return t1.size(); }
};

struct Head {
    nn::Dense fc1, fc2;
    nn::Relu relu;

    Head() = default;
    Head(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

    void register_params(nn::ParamSet& set, const std::string& prefix) {
        fc1.register_params(set, prefix + ".fc1");
        fc2.register_params(set, prefix + ".fc2");
    }

    Tensor forward(const Tensor& x) { return fc2.forward(relu.forward(fc1.forward(x))); }
    Tensor backward(const Tensor& dy) { return fc1.backward(relu.backward(fc2.backward(dy))); }
};

// The multitask network: shared encoder -> flatten -> four parallel heads
// (detection, localization, characterization, cause identification).
class MultitaskModel {
public:
    Architecture arch;
    std::uint64_t init_seed = 0;
    // inputs are mean-centered per window (the absolute level carries no
    // label information) and scaled by the train-split std of centered
    // values; characterization targets are z-scored. All statistics travel
    // in the checkpoint.
    double x_mean = 0.0;  // residual global offset after centering
    double x_std = 1.0;
    std::array<double, 2> t3_mean{0.0, 0.0};
    std::array<double, 2> t3_std{1.0, 1.0};
    // detection threshold calibrated on validation no-event scores
    std::optional<double> t1_threshold;

    MultitaskModel() = default;

    static MultitaskModel build(const Architecture& arch, std::uint64_t seed) {
        arch.validate();
        MultitaskModel m;
        m.arch = arch;
        m.init_seed = seed;
        Rng rng(mix_seed(seed, 0x6d6f64656cull));
        switch (arch.kind) {
            case ArchKind::MultitaskBiLstmCnn:
                m.bilstm_.emplace(1, arch.lstm_hidden, rng);
                m.conv_.emplace(2 * arch.lstm_hidden, arch.conv_filters, arch.kernel, rng);
                break;
            case ArchKind::CnnOnly:
                m.conv_.emplace(1, arch.conv_filters, arch.kernel, rng);
                break;
            case ArchKind::LstmOnly:
                m.lstm_.emplace(1, arch.lstm_hidden, rng);
                break;
            case ArchKind::BiLstmOnly:
                m.bilstm_.emplace(1, arch.lstm_hidden, rng);
                break;
        }
        m.dropout_ = nn::Dropout(arch.dropout);
        const std::size_t width = arch.flatten_width();
        m.heads_[0] = Head(width, arch.head_hidden[0], 1, rng);
        m.heads_[1] = Head(width, arch.head_hidden[1], 1, rng);
        m.heads_[2] = Head(width, arch.head_hidden[2], 2, rng);
        m.heads_[3] = Head(width, arch.head_hidden[3], 7, rng);
        return m;
    }

    nn::ParamSet params() {
        nn::ParamSet set;
        if (bilstm_) bilstm_->register_params(set, "encoder.bilstm");
        if (lstm_) lstm_->register_params(set, "encoder.lstm");
        if (conv_) conv_->register_params(set, "encoder.conv");
        static const char* head_names[4] = {"head.t1", "head.t2", "head.t3", "head.t4"};
        for (std::size_t i = 0; i < 4; ++i) heads_[i].register_params(set, head_names[i]);
        return set;
    }

    std::size_t parameter_count() { return nn::param_count(params()); }

    TaskOutputs forward(const Tensor& x, bool train, Rng& dropout_rng) {
        if (x.shape.size() != 3 || x.shape[1] != arch.seq_len || x.shape[2] != 1)
            throw shape_error("model forward: expected [B, " + std::to_string(arch.seq_len) + ", 1], got " +
                              nn::shape_str(x.shape));
        Tensor enc;
        switch (arch.kind) {
            case ArchKind::MultitaskBiLstmCnn:
                enc = pool_.forward(conv_relu_.forward(conv_->forward(bilstm_->forward(x))));
                break;
            case ArchKind::CnnOnly:
                enc = pool_.forward(conv_relu_.forward(conv_->forward(x)));
                break;
            case ArchKind::LstmOnly:
                enc = lstm_->forward(x);
                break;
            case ArchKind::BiLstmOnly:
                enc = bilstm_->forward(x);
                break;
        }
        enc = dropout_.forward(enc, train, dropout_rng);
        flat_shape_ = enc.shape;
        Tensor flat = enc;
        flat.shape = {enc.shape[0], enc.shape[1] * enc.shape[2]};
        if (flat.shape[1] != arch.flatten_width())
            throw shape_error("model forward: flatten width " + std::to_string(flat.shape[1]) + " != expected " +
                              std::to_string(arch.flatten_width()));

        TaskOutputs out;
        out.t1 = t1_act_.forward(heads_[0].forward(flat));
        out.t2 = heads_[1].forward(flat);
        out.t3 = heads_[2].forward(flat);
        out.t4 = t4_act_.forward(heads_[3].forward(flat));
        for (const auto* t : {&out.t1, &out.t2, &out.t3, &out.t4}) t->require_finite("model forward");
        return out;
    }

    // Gradients w.r.t. post-activation outputs; parameter gradients
    // accumulate into the registered grad tensors.
    void backward(const Tensor& d_t1, const Tensor& d_t2, const Tensor& d_t3, const Tensor& d_t4) {
        Tensor dflat = heads_[0].backward(t1_act_.backward(d_t1));
        const Tensor d2 = heads_[1].backward(d_t2);
        const Tensor d3 = heads_[2].backward(d_t3);
        const Tensor d4 = heads_[3].backward(t4_act_.backward(d_t4));
        for (std::size_t i = 0; i < dflat.numel(); ++i) dflat[i] += d2[i] + d3[i] + d4[i];

        dflat.shape = flat_shape_;
        Tensor denc = dropout_.backward(dflat);
        switch (arch.kind) {
            case ArchKind::MultitaskBiLstmCnn:
                bilstm_->backward(conv_->backward(conv_relu_.backward(pool_.backward(denc))));
                break;
            case ArchKind::CnnOnly:
                conv_->backward(conv_relu_.backward(pool_.backward(denc)));
                break;
            case ArchKind::LstmOnly:
                lstm_->backward(denc);
                break;
            case ArchKind::BiLstmOnly:
                bilstm_->backward(denc);
                break;
        }
    }

private:
    std::optional<nn::BiLstm> bilstm_;
    std::optional<nn::Lstm> lstm_;
    std::optional<nn::Conv1d> conv_;
    nn::Relu conv_relu_;
    nn::MaxPool1d pool_;
    nn::Dropout dropout_;
    nn::Sigmoid t1_act_;
    nn::Softmax t4_act_;
    std::array<Head, 4> heads_;
    std::vector<std::size_t> flat_shape_;
};

struct TotalLoss {
    double total = 0.0;
    std::array<double, 4> per_task{};
};

// Divisors for each task loss; defaults derive from the batch itself.
// Sharded training passes full-batch norms so shard sums reproduce the
// unsharded batch mean exactly.
struct LossNorms {
    double t1 = -1.0, t2 = -1.0, t3 = -1.0, t4 = -1.0;

    static LossNorms of(const Batch& batch) {
        LossNorms n;
        n.t1 = static_cast<double>(batch.size());
        n.t4 = n.t1;
        n.t2 = 0.0;
        for (double m : batch.t2_mask.data) n.t2 += m;
        n.t3 = 0.0;
        for (double m : batch.t3_mask.data) n.t3 += m;
        return n;
    }
};

// L = w1 BCE(T1) + w2 MSE(T2) + w3 MSE(T3) + w4 CE(T4); masked targets
// contribute neither loss nor gradient.
inline TotalLoss total_loss_and_grads(const TaskOutputs& out, const Batch& batch,
                                      const std::array<double, 4>& weights, Tensor& d_t1, Tensor& d_t2, Tensor& d_t3,
                                      Tensor& d_t4, const LossNorms& norms = LossNorms{}) {
    const std::size_t b = batch.size();
    out.t1.require_shape({b, 1}, "total_loss t1");
    out.t2.require_shape({b, 1}, "total_loss t2");
    out.t3.require_shape({b, 2}, "total_loss t3");
    out.t4.require_shape({b, 7}, "total_loss t4");

    const auto l1 = nn::bce(out.t1, batch.t1, norms.t1);
    const auto l2 = nn::mse(out.t2, batch.t2, batch.t2_mask, norms.t2);
    const auto l3 = nn::mse(out.t3, batch.t3, batch.t3_mask, norms.t3);
    const auto l4 = nn::cross_entropy(out.t4, batch.t4, norms.t4);

    TotalLoss res;
    res.per_task = {l1.value, l2.value, l3.value, l4.value};
    res.total = nn::weighted_sum(res.per_task, weights);

    auto scale = [](const Tensor& g, double w) {
        Tensor s = g;
        for (auto& v : s.data) v *= w;
        return s;
    };
    d_t1 = scale(l1.grad, weights[0]);
    d_t2 = scale(l2.grad, weights[1]);
    d_t3 = scale(l3.grad, weights[2]);
    d_t4 = scale(l4.grad, weights[3]);
    return res;
}

inline TotalLoss total_loss(const TaskOutputs& out, const Batch& batch, const std::array<double, 4>& weights) {
    Tensor d1, d2, d3, d4;
    return total_loss_and_grads(out, batch, weights, d1, d2, d3, d4);
}

// Builds model inputs/targets from dataset samples. T3 targets are
// standardized with the model's stored statistics.
inline Batch make_batch(const std::vector<data::SequenceSample>& samples, const std::vector<std::size_t>& indices,
                        const MultitaskModel& m) {
    const std::size_t b = indices.size();
    Batch batch;
    batch.x = Tensor({b, static_cast<std::size_t>(data::kWindowLength), 1});
    batch.t1.resize(b);
    batch.t2 = Tensor({b, 1});
    batch.t2_mask = Tensor({b, 1});
    batch.t3 = Tensor({b, 2});
    batch.t3_mask = Tensor({b, 2});
    batch.t4.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        const auto& s = samples[indices[i]];
        double row_mean = 0.0;
        for (double v : s.values) row_mean += v;
        row_mean /= data::kWindowLength;
        for (int j = 0; j < data::kWindowLength; ++j)
            batch.x.at3(i, static_cast<std::size_t>(j), 0) =
                (s.values[static_cast<std::size_t>(j)] - row_mean - m.x_mean) / m.x_std;
        batch.t1[i] = s.has_event ? 1.0 : 0.0;
        if (s.position_index) {
            batch.t2.at2(i, 0) = static_cast<double>(*s.position_index) / (data::kWindowLength - 1);
            batch.t2_mask.at2(i, 0) = 1.0;
        }
        if (s.loss_db) {
            batch.t3.at2(i, 0) = (*s.loss_db - m.t3_mean[0]) / m.t3_std[0];
            batch.t3_mask.at2(i, 0) = 1.0;
        }
        if (s.reflectance_db) {
            batch.t3.at2(i, 1) = (*s.reflectance_db - m.t3_mean[1]) / m.t3_std[1];
            batch.t3_mask.at2(i, 1) = 1.0;
        }
        batch.t4[i] = s.cause_class;
    }
    return batch;
}

// Single-sample diagnosis derived from the task outputs.
struct Diagnosis {
    bool detected = false;
    double probability = 0.0;
    std::optional<double> position_in_window_m;
    std::optional<double> position_m;  // absolute, when window origin known
    std::optional<double> loss_db;
    std::optional<double> reflectance_db;
    std::optional<int> cause_class;
    double cause_probability = 0.0;
};

inline bool reflective_cause(int c) { return c == 1 || c == 2 || c == 5 || c == 6; }

inline Diagnosis diagnose(const MultitaskModel& m, const TaskOutputs& out, std::size_t row, double sample_spacing_m,
                          std::optional<std::size_t> window_start = std::nullopt,
                          std::optional<double> threshold_override = std::nullopt) {
    Diagnosis d;
    double threshold = 0.5;
    if (threshold_override) {
        threshold = *threshold_override;
    } else if (m.t1_threshold) {
        threshold = *m.t1_threshold;
    }
    d.probability = out.t1.at2(row, 0);
    d.detected = d.probability >= threshold;
    if (!d.detected) return d;

    const double pos_norm = std::clamp(out.t2.at2(row, 0), 0.0, 1.0);
    const double idx = std::round(pos_norm * (data::kWindowLength - 1));
    d.position_in_window_m = idx * sample_spacing_m;
    if (window_start) d.position_m = (static_cast<double>(*window_start) + idx) * sample_spacing_m;

    int best = 0;
    for (int c = 1; c < 7; ++c)
        if (out.t4.at2(row, static_cast<std::size_t>(c)) > out.t4.at2(row, static_cast<std::size_t>(best))) best = c;
    d.cause_class = best;
    d.cause_probability = out.t4.at2(row, static_cast<std::size_t>(best));

    d.loss_db = out.t3.at2(row, 0) * m.t3_std[0] + m.t3_mean[0];
    if (reflective_cause(best)) d.reflectance_db = out.t3.at2(row, 1) * m.t3_std[1] + m.t3_mean[1];
    return d;
}

// ---------------------------------------------------------------------------
// model checkpoints: nn tensor container + architecture block + stats

inline void save_model(const MultitaskModel& m, const std::filesystem::path& base, bool float64 = false,
                       nlohmann::json trainer_extra = nlohmann::json::object()) {
    auto& mm = const_cast<MultitaskModel&>(m);
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (const auto& p : mm.params()) tensors.emplace_back(p.name, p.value);
    nlohmann::json extra{{"architecture", m.arch},
                         {"init_seed", m.init_seed},
                         {"x_mean", m.x_mean},
                         {"x_std", m.x_std},
                         {"t3_mean", m.t3_mean},
                         {"t3_std", m.t3_std}};
    if (m.t1_threshold) extra["t1_threshold"] = *m.t1_threshold;
    extra["trainer"] = std::move(trainer_extra);
    nn::save_tensors(base, tensors, float64, std::move(extra));
}

inline MultitaskModel load_model(const nn::LoadedCheckpoint& ckpt) {
    const auto& extra = ckpt.extra();
    const auto arch = extra.at("architecture").get<Architecture>();
    MultitaskModel m = MultitaskModel::build(arch, extra.at("init_seed").get<std::uint64_t>());
    if (extra.contains("x_mean")) m.x_mean = extra.at("x_mean").get<double>();
    if (extra.contains("x_std")) m.x_std = extra.at("x_std").get<double>();
    extra.at("t3_mean").get_to(m.t3_mean);
    extra.at("t3_std").get_to(m.t3_std);
    if (extra.contains("t1_threshold")) m.t1_threshold = extra.at("t1_threshold").get<double>();
    for (auto& p : m.params()) {
        const Tensor& stored = ckpt.tensor(p.name);
        if (stored.shape != p.value->shape)
            throw data_error("load_model: tensor " + p.name + " shape mismatch (checkpoint does not fit architecture)");
        *p.value = stored;
    }
    return m;
}

inline MultitaskModel load_model(const std::filesystem::path& base) { return load_model(nn::load_tensors(base)); }

}  // namespace otdrmtl::model
