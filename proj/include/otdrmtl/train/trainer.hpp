#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/data/corpus.hpp"
#include "otdrmtl/errors.hpp"
#include "otdrmtl/io_util.hpp"
#include "otdrmtl/model/model.hpp"
#include "otdrmtl/nn/adam.hpp"
#include "otdrmtl/parallel.hpp"
#include "otdrmtl/rng.hpp"

namespace otdrmtl::train {

using model::MultitaskModel;

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    int max_epochs = 100;
    int patience = 10;
    std::uint64_t seed = 1;
    double grad_clip_norm = 5.0;
    bool check_gradient_flow = true;
    unsigned jobs = 0;  // worker threads for batch shards; 0 = hardware

    void validate() const {
        if (learning_rate < 0.0) throw config_error("TrainConfig: learning rate must be >= 0");
        if (batch_size == 0) throw config_error("TrainConfig: batch size must be > 0");
        if (max_epochs < 1) throw config_error("TrainConfig: max_epochs must be >= 1");
        if (patience < 1 || patience >= max_epochs)
            throw config_error("TrainConfig: patience must be in [1, max_epochs)");
        if (grad_clip_norm <= 0.0) throw config_error("TrainConfig: grad clip norm must be > 0");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                       {"max_epochs", c.max_epochs},       {"patience", c.patience},
                       {"seed", c.seed},                   {"grad_clip_norm", c.grad_clip_norm},
                       {"check_gradient_flow", c.check_gradient_flow}, {"jobs", c.jobs}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
    if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
    if (j.contains("max_epochs")) j.at("max_epochs").get_to(c.max_epochs);
    if (j.contains("patience")) j.at("patience").get_to(c.patience);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("grad_clip_norm")) j.at("grad_clip_norm").get_to(c.grad_clip_norm);
    if (j.contains("check_gradient_flow")) j.at("check_gradient_flow").get_to(c.check_gradient_flow);
    if (j.contains("jobs")) j.at("jobs").get_to(c.jobs);
    c.validate();
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::array<double, 4> task_losses{};
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    int best_epoch = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

inline std::string history_csv(const TrainHistory& h) {
    std::string out = "epoch,train_loss,val_loss,l_t1,l_t2,l_t3,l_t4,seconds\n";
    for (const auto& r : h.records) {
        out += std::to_string(r.epoch);
        out += ',';
        out += fmt_g9(r.train_loss);
        out += ',';
        out += fmt_g9(r.val_loss);
        for (double l : r.task_losses) {
            out += ',';
            out += fmt_g9(l);
        }
        out += ',';
        out += fmt_g9(r.seconds);
        out += '\n';
    }
    return out;
}

struct TrainResult {
    MultitaskModel model;        // best validation-loss parameters
    MultitaskModel final_model;  // last-epoch parameters (resume state)
    nn::AdamState adam;
    TrainHistory history;
    int next_epoch = 0;
    int epochs_since_best = 0;
    bool stopped_early = false;
};

namespace detail {

inline std::vector<nn::Tensor> snapshot(MultitaskModel& m) {
    std::vector<nn::Tensor> copy;
    for (const auto& p : m.params()) copy.push_back(*p.value);
    return copy;
}

inline void restore(MultitaskModel& m, const std::vector<nn::Tensor>& snap) {
    auto params = m.params();
    if (snap.size() != params.size()) throw shape_error("trainer: snapshot/parameter count mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) *params[i].value = snap[i];
}

// train-split statistics: input window values plus the characterization
// targets (both standardized at batch assembly)
inline void compute_standardization(const data::Dataset& ds, MultitaskModel& m) {
    std::array<double, 2> sum{}, sum_sq{};
    std::array<std::size_t, 2> n{};
    double x_sum = 0.0, x_sum_sq = 0.0;
    std::size_t x_n = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        if (ds.split[i] != data::Split::Train) continue;
        const auto& s = ds.samples[i];
        double row_mean = 0.0;
        for (double v : s.values) row_mean += v;
        row_mean /= data::kWindowLength;
        for (double v : s.values) {
            const double c = v - row_mean;
            x_sum += c;
            x_sum_sq += c * c;
            ++x_n;
        }
        if (s.loss_db) {
            sum[0] += *s.loss_db;
            sum_sq[0] += *s.loss_db * *s.loss_db;
            n[0]++;
        }
        if (s.reflectance_db) {
            sum[1] += *s.reflectance_db;
            sum_sq[1] += *s.reflectance_db * *s.reflectance_db;
            n[1]++;
        }
    }
    if (x_n > 0) {
        const double mean = x_sum / static_cast<double>(x_n);
        const double var = std::max(0.0, x_sum_sq / static_cast<double>(x_n) - mean * mean);
        m.x_mean = mean;
        m.x_std = std::sqrt(var) > 1e-9 ? std::sqrt(var) : 1.0;
    }
    for (std::size_t k = 0; k < 2; ++k) {
        if (n[k] == 0) {
            m.t3_mean[k] = 0.0;
            m.t3_std[k] = 1.0;
            continue;
        }
        const double mean = sum[k] / static_cast<double>(n[k]);
        const double var = std::max(0.0, sum_sq[k] / static_cast<double>(n[k]) - mean * mean);
        m.t3_mean[k] = mean;
        m.t3_std[k] = std::sqrt(var) > 1e-9 ? std::sqrt(var) : 1.0;
    }
}

struct EpochStats {
    double loss = 0.0;
    std::array<double, 4> task{};
};

// Batches are always processed as fixed 16-row shards summed in shard
// order, so gradients and losses are bit-identical for any worker count.
inline constexpr std::size_t kShardRows = 16;

struct ShardWorkers {
    std::vector<MultitaskModel> clones;
    std::vector<nn::ParamSet> clone_params;

    ShardWorkers(MultitaskModel& master, std::size_t max_shards) {
        clones.assign(max_shards, master);
        for (auto& c : clones) clone_params.push_back(c.params());
    }

    void sync_from(const nn::ParamSet& master_params) {
        for (auto& params : clone_params)
            for (std::size_t i = 0; i < params.size(); ++i) params[i].value->data = master_params[i].value->data;
    }
};

struct BatchStep {
    model::TotalLoss loss;
};

// One training batch: shard forward/backward on worker clones, reduce
// losses and parameter gradients in shard order into the master model.
inline BatchStep run_batch(MultitaskModel& master, nn::ParamSet& master_params, ShardWorkers& workers,
                           const data::Dataset& ds, const std::vector<std::size_t>& batch_indices,
                           std::uint64_t dropout_seed, unsigned jobs) {
    const std::size_t n = batch_indices.size();
    const std::size_t n_shards = (n + kShardRows - 1) / kShardRows;
    // full-batch loss norms so shard contributions sum to the batch mean
    model::LossNorms norms;
    norms.t1 = static_cast<double>(n);
    norms.t4 = norms.t1;
    norms.t2 = 0.0;
    norms.t3 = 0.0;
    for (std::size_t i : batch_indices) {
        const auto& s = ds.samples[i];
        if (s.position_index) norms.t2 += 1.0;
        if (s.loss_db) norms.t3 += 1.0;
        if (s.reflectance_db) norms.t3 += 1.0;
    }

    workers.sync_from(master_params);
    std::vector<model::TotalLoss> shard_losses(n_shards);
    parallel_for(n_shards, jobs, [&](std::size_t sh) {
        auto& clone = workers.clones[sh];
        auto& cparams = workers.clone_params[sh];
        const std::size_t lo = sh * kShardRows;
        const std::size_t hi = std::min(n, lo + kShardRows);
        std::vector<std::size_t> slice(batch_indices.begin() + static_cast<long>(lo),
                                       batch_indices.begin() + static_cast<long>(hi));
        const auto batch = model::make_batch(ds.samples, slice, clone);
        Rng dropout_rng(mix_seed(dropout_seed, sh));
        nn::zero_grads(cparams);
        const auto out = clone.forward(batch.x, true, dropout_rng);
        nn::Tensor d1, d2, d3, d4;
        shard_losses[sh] = model::total_loss_and_grads(out, batch, clone.arch.loss_weights, d1, d2, d3, d4, norms);
        clone.backward(d1, d2, d3, d4);
    });

    BatchStep step;
    for (std::size_t sh = 0; sh < n_shards; ++sh) {
        step.loss.total += shard_losses[sh].total;
        for (std::size_t k = 0; k < 4; ++k) step.loss.per_task[k] += shard_losses[sh].per_task[k];
        for (std::size_t i = 0; i < master_params.size(); ++i) {
            const auto& src = workers.clone_params[sh][i].grad->data;
            auto& dst = master_params[i].grad->data;
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }
    return step;
}

inline EpochStats evaluate_split(MultitaskModel& m, const data::Dataset& ds, const std::vector<std::size_t>& idx,
                                 std::size_t batch_size) {
    EpochStats stats;
    Rng dummy(0);
    std::size_t done = 0;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, idx.size() - start);
        std::vector<std::size_t> slice(idx.begin() + static_cast<long>(start),
                                       idx.begin() + static_cast<long>(start + count));
        const auto batch = model::make_batch(ds.samples, slice, m);
        const auto out = m.forward(batch.x, false, dummy);
        const auto loss = model::total_loss(out, batch, m.arch.loss_weights);
        const auto w = static_cast<double>(count);
        stats.loss += loss.total * w;
        for (std::size_t k = 0; k < 4; ++k) stats.task[k] += loss.per_task[k] * w;
        done += count;
    }
    if (done > 0) {
        stats.loss /= static_cast<double>(done);
        for (auto& t : stats.task) t /= static_cast<double>(done);
    }
    return stats;
}

}  // namespace detail

// Mini-batch training with epoch-seeded shuffling, Adam, gradient clipping
// and early stopping on the validation total loss. Deterministic per
// (config, dataset, platform); resuming from the final checkpoint continues
// the identical schedule.
inline TrainResult train_loop(MultitaskModel model, const data::Dataset& ds, const TrainConfig& cfg,
                              TrainResult* resume_state = nullptr) {
    cfg.validate();
    const auto train_idx = ds.indices_of(data::Split::Train);
    const auto val_idx = ds.indices_of(data::Split::Val);
    if (train_idx.empty() || val_idx.empty()) throw config_error("train: dataset needs non-empty train and val splits");

    detail::compute_standardization(ds, model);

    TrainResult res;
    nn::AdamState adam;
    std::vector<nn::Tensor> best;
    int start_epoch = 0;
    if (resume_state) {
        res.history = resume_state->history;
        res.epochs_since_best = resume_state->epochs_since_best;
        adam = std::move(resume_state->adam);
        start_epoch = resume_state->next_epoch;
        model = std::move(resume_state->final_model);
        best = detail::snapshot(resume_state->model);
        detail::compute_standardization(ds, model);
    } else {
        auto params = model.params();
        adam = nn::AdamState(params);
    }

    nn::AdamConfig adam_cfg;
    adam_cfg.learning_rate = cfg.learning_rate;
    auto params = model.params();
    adam.check_compatible(params);

    const unsigned jobs = cfg.jobs > 0 ? cfg.jobs : std::max(1u, std::thread::hardware_concurrency());
    detail::ShardWorkers workers(model, (cfg.batch_size + detail::kShardRows - 1) / detail::kShardRows);

    std::vector<double> grad_flow(params.size(), 0.0);
    bool flow_checked = !cfg.check_gradient_flow || resume_state != nullptr;
    int flow_batches = 0;

    for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        // epoch-seeded permutation keeps resumed runs on the same schedule
        std::vector<std::size_t> order = train_idx;
        Rng shuffle_rng(mix_seed(cfg.seed, 0x65706f63ull + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double train_loss = 0.0;
        std::array<double, 4> task_losses{};
        std::size_t seen = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            std::vector<std::size_t> slice(order.begin() + static_cast<long>(start),
                                           order.begin() + static_cast<long>(start + count));
            const std::uint64_t dropout_seed = mix_seed(
                mix_seed(cfg.seed, 0xd09000 + static_cast<std::uint64_t>(epoch)), static_cast<std::uint64_t>(batch_index));
            nn::zero_grads(params);
            const auto step = detail::run_batch(model, params, workers, ds, slice, dropout_seed, jobs);
            if (!std::isfinite(step.loss.total))
                throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batch_index));
            if (!flow_checked) {
                for (std::size_t i = 0; i < params.size(); ++i)
                    for (double g : params[i].grad->data) grad_flow[i] += std::abs(g);
                if (++flow_batches >= 5 || start + count >= order.size()) {
                    for (std::size_t i = 0; i < params.size(); ++i)
                        if (grad_flow[i] == 0.0)
                            throw numeric_error("train: parameter " + params[i].name +
                                                " received no gradient in the first batches (dead wiring)");
                    flow_checked = true;
                }
            }
            nn::clip_grad_norm(params, cfg.grad_clip_norm);
            nn::adam_step(params, adam, adam_cfg);
            const auto w = static_cast<double>(count);
            train_loss += step.loss.total * w;
            for (std::size_t k = 0; k < 4; ++k) task_losses[k] += step.loss.per_task[k] * w;
            seen += count;
        }
        train_loss /= static_cast<double>(seen);
        for (auto& t : task_losses) t /= static_cast<double>(seen);

        const auto val = detail::evaluate_split(model, ds, val_idx, cfg.batch_size);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        res.history.records.push_back({epoch, train_loss, val.loss, task_losses, seconds});

        if (val.loss < res.history.best_val_loss) {
            res.history.best_val_loss = val.loss;
            res.history.best_epoch = epoch;
            res.epochs_since_best = 0;
            best = detail::snapshot(model);
        } else {
            res.epochs_since_best += 1;
        }
        res.next_epoch = epoch + 1;
        if (res.epochs_since_best >= cfg.patience) {
            res.stopped_early = true;
            break;
        }
    }

    res.final_model = model;
    res.adam = std::move(adam);
    if (!best.empty()) detail::restore(model, best);
    res.model = std::move(model);
    if (res.next_epoch == 0) res.next_epoch = start_epoch;
    return res;
}

inline TrainResult train(MultitaskModel model, const data::Dataset& ds, const TrainConfig& cfg) {
    return train_loop(std::move(model), ds, cfg, nullptr);
}

// ---------------------------------------------------------------------------
// resume-capable checkpoints (float64: params, best snapshot, Adam moments)

inline void save_train_state(const TrainResult& res, const std::filesystem::path& base) {
    auto& final_model = const_cast<MultitaskModel&>(res.final_model);
    auto& best_model = const_cast<MultitaskModel&>(res.model);
    std::vector<std::pair<std::string, const nn::Tensor*>> tensors;
    auto fparams = final_model.params();
    for (const auto& p : fparams) tensors.emplace_back(p.name, p.value);
    for (const auto& p : best_model.params()) tensors.emplace_back("best." + p.name, p.value);
    for (std::size_t i = 0; i < fparams.size(); ++i) {
        tensors.emplace_back("adam.m." + fparams[i].name, &res.adam.m[i]);
        tensors.emplace_back("adam.v." + fparams[i].name, &res.adam.v[i]);
    }
    nlohmann::json history = nlohmann::json::array();
    for (const auto& r : res.history.records)
        history.push_back({{"epoch", r.epoch},
                           {"train_loss", r.train_loss},
                           {"val_loss", r.val_loss},
                           {"task_losses", r.task_losses},
                           {"seconds", r.seconds}});
    nlohmann::json extra{{"architecture", res.final_model.arch},
                         {"init_seed", res.final_model.init_seed},
                         {"x_mean", res.final_model.x_mean},
                         {"x_std", res.final_model.x_std},
                         {"t3_mean", res.final_model.t3_mean},
                         {"t3_std", res.final_model.t3_std},
                         {"trainer", nlohmann::json{{"next_epoch", res.next_epoch},
                                                    {"epochs_since_best", res.epochs_since_best},
                                                    {"stopped_early", res.stopped_early},
                                                    {"best_epoch", res.history.best_epoch},
                                                    {"best_val_loss", res.history.best_val_loss},
                                                    {"adam_step", res.adam.step},
                                                    {"history", history}}}};
    nn::save_tensors(base, tensors, true, std::move(extra));
}

inline TrainResult load_train_state(const std::filesystem::path& base) {
    const auto ckpt = nn::load_tensors(base);
    const auto& extra = ckpt.extra();
    if (!extra.contains("trainer") || !extra.at("trainer").contains("next_epoch"))
        throw data_error("resume: checkpoint lacks optimizer/trainer state");
    const auto arch = extra.at("architecture").get<model::Architecture>();
    const auto seed = extra.at("init_seed").get<std::uint64_t>();

    TrainResult res;
    res.final_model = MultitaskModel::build(arch, seed);
    res.model = MultitaskModel::build(arch, seed);
    if (extra.contains("x_mean")) res.final_model.x_mean = extra.at("x_mean").get<double>();
    if (extra.contains("x_std")) res.final_model.x_std = extra.at("x_std").get<double>();
    extra.at("t3_mean").get_to(res.final_model.t3_mean);
    extra.at("t3_std").get_to(res.final_model.t3_std);
    res.model.x_mean = res.final_model.x_mean;
    res.model.x_std = res.final_model.x_std;
    res.model.t3_mean = res.final_model.t3_mean;
    res.model.t3_std = res.final_model.t3_std;

    auto fparams = res.final_model.params();
    for (auto& p : fparams) *p.value = ckpt.tensor(p.name);
    for (auto& p : res.model.params()) *p.value = ckpt.tensor("best." + p.name);
    res.adam = nn::AdamState(fparams);
    for (std::size_t i = 0; i < fparams.size(); ++i) {
        res.adam.m[i] = ckpt.tensor("adam.m." + fparams[i].name);
        res.adam.v[i] = ckpt.tensor("adam.v." + fparams[i].name);
    }
    const auto& tr = extra.at("trainer");
    res.next_epoch = tr.at("next_epoch").get<int>();
    res.epochs_since_best = tr.at("epochs_since_best").get<int>();
    res.stopped_early = tr.at("stopped_early").get<bool>();
    res.adam.step = tr.at("adam_step").get<long>();
    res.history.best_epoch = tr.at("best_epoch").get<int>();
    res.history.best_val_loss = tr.at("best_val_loss").get<double>();
    for (const auto& r : tr.at("history")) {
        EpochRecord rec;
        rec.epoch = r.at("epoch").get<int>();
        rec.train_loss = r.at("train_loss").get<double>();
        rec.val_loss = r.at("val_loss").get<double>();
        r.at("task_losses").get_to(rec.task_losses);
        rec.seconds = r.at("seconds").get<double>();
        res.history.records.push_back(rec);
    }
    return res;
}

// Continues a stored run as if uninterrupted; a run that already stopped
// early (or reached max_epochs) is returned unchanged.
inline TrainResult resume(const std::filesystem::path& final_checkpoint_base, const data::Dataset& ds,
                          const TrainConfig& cfg) {
    TrainResult state = load_train_state(final_checkpoint_base);
    if (state.final_model.arch.seq_len != static_cast<std::size_t>(data::kWindowLength))
        throw data_error("resume: checkpoint/dataset schema mismatch");
    if (state.stopped_early || state.next_epoch >= cfg.max_epochs) return state;
    MultitaskModel shell = MultitaskModel::build(state.final_model.arch, state.final_model.init_seed);
    return train_loop(std::move(shell), ds, cfg, &state);
}

}  // namespace otdrmtl::train
