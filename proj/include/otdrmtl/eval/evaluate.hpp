#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/data/corpus.hpp"
#include "otdrmtl/eval/classical.hpp"
#include "otdrmtl/eval/metrics.hpp"
#include "otdrmtl/io_util.hpp"
#include "otdrmtl/model/model.hpp"
#include "otdrmtl/parallel.hpp"

namespace otdrmtl::eval {

// One method's prediction for one sequence sample.
struct SamplePrediction {
    double t1_score = 0.0;                         // monotone detection score
    double pos_norm = 0.0;                         // predicted onset / 49
    std::optional<double> loss_db;                 // physical units
    std::optional<double> reflectance_db;          //
    std::optional<std::array<double, 7>> cause_probs;
};

struct SnrBucketStat {
    double lo = 0.0, hi = 0.0;
    std::size_t n_total = 0, n_pos = 0;
    std::optional<double> detection_probability;
    std::optional<double> t2_rmse_m;
    std::optional<double> t3_rmse_loss_db;
    std::optional<double> t3_rmse_refl_db;
};

struct EvalReport {
    std::string method;
    std::size_t n_test = 0;
    double far = 0.01;
    double threshold = 0.5;
    double t1_accuracy = 0.0;
    double t1_f1 = 0.0;
    double t2_rmse_m = 0.0;
    double t2_mae_m = 0.0;
    std::optional<double> t3_rmse_loss_db, t3_mae_loss_db, t3_smape_loss;
    std::optional<double> t3_rmse_refl_db, t3_mae_refl_db, t3_smape_refl;
    std::optional<double> t4_accuracy;
    std::optional<double> t4_macro_auc;
    std::map<int, RocCurve> t4_roc;
    std::vector<SnrBucketStat> buckets;

    const SnrBucketStat* bucket_at(double snr) const {
        for (const auto& b : buckets)
            if (snr >= b.lo && snr < b.hi) return &b;
        return buckets.empty() ? nullptr : &buckets.back();
    }
};

inline void to_json(nlohmann::json& j, const SnrBucketStat& b) {
    j = nlohmann::json{{"snr_lo", b.lo}, {"snr_hi", b.hi}, {"n_total", b.n_total}, {"n_pos", b.n_pos}};
    j["detection_probability"] = b.detection_probability ? nlohmann::json(*b.detection_probability) : nlohmann::json();
    j["t2_rmse_m"] = b.t2_rmse_m ? nlohmann::json(*b.t2_rmse_m) : nlohmann::json();
    j["t3_rmse_loss_db"] = b.t3_rmse_loss_db ? nlohmann::json(*b.t3_rmse_loss_db) : nlohmann::json();
    j["t3_rmse_refl_db"] = b.t3_rmse_refl_db ? nlohmann::json(*b.t3_rmse_refl_db) : nlohmann::json();
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    j = nlohmann::json{{"method", r.method},       {"n_test", r.n_test},
                       {"far", r.far},             {"threshold", r.threshold},
                       {"t1_accuracy", r.t1_accuracy}, {"t1_f1", r.t1_f1},
                       {"t2_rmse_m", r.t2_rmse_m}, {"t2_mae_m", r.t2_mae_m},
                       {"buckets", r.buckets}};
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    j["t3_rmse_loss_db"] = opt(r.t3_rmse_loss_db);
    j["t3_mae_loss_db"] = opt(r.t3_mae_loss_db);
    j["t3_smape_loss"] = opt(r.t3_smape_loss);
    j["t3_rmse_refl_db"] = opt(r.t3_rmse_refl_db);
    j["t3_mae_refl_db"] = opt(r.t3_mae_refl_db);
    j["t3_smape_refl"] = opt(r.t3_smape_refl);
    j["t4_accuracy"] = opt(r.t4_accuracy);
    j["t4_macro_auc"] = opt(r.t4_macro_auc);
    auto& roc = j["t4_roc"] = nlohmann::json::object();
    for (const auto& [cls, curve] : r.t4_roc) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : curve.points) pts.push_back({p.fpr, p.tpr});
        roc[std::to_string(cls)] = {{"auc", curve.auc}, {"points", pts}};
    }
}

// Full metric suite over the test split at a FAR-calibrated threshold.
// `test_preds` is aligned with dataset test-split order; `val_neg_scores`
// are the method's scores on validation no-event windows.
inline EvalReport evaluate_predictions(const data::Dataset& ds, const std::vector<SamplePrediction>& test_preds,
                                       const std::vector<double>& val_neg_scores, const std::string& method,
                                       double far = 0.01) {
    const auto test_idx = ds.indices_of(data::Split::Test);
    if (test_idx.empty()) throw config_error("evaluate: empty test split");
    if (test_preds.size() != test_idx.size()) throw shape_error("evaluate: prediction/test size mismatch");

    EvalReport rep;
    rep.method = method;
    rep.n_test = test_idx.size();
    rep.far = far;
    rep.threshold = far_threshold(val_neg_scores, far);

    const double spacing = ds.spec.config.sample_spacing_m();
    const int buckets = ds.spec.snr_buckets;
    const double b_lo = ds.spec.snr_db.lo;
    const double b_w = (ds.spec.snr_db.hi - ds.spec.snr_db.lo) / buckets;

    // T1 at the calibrated threshold
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t k = 0; k < test_idx.size(); ++k) {
        const bool truth = ds.samples[test_idx[k]].has_event;
        const bool pred = test_preds[k].t1_score >= rep.threshold;
        if (truth && pred) ++tp;
        else if (!truth && pred) ++fp;
        else if (truth && !pred) ++fn;
        else ++tn;
    }
    rep.t1_accuracy = static_cast<double>(tp + tn) / static_cast<double>(test_idx.size());
    rep.t1_f1 = (2 * tp + fp + fn) > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;

    // T2 in meters over event windows
    std::vector<double> pos_pred, pos_true;
    std::vector<bool> pos_mask;
    for (std::size_t k = 0; k < test_idx.size(); ++k) {
        const auto& s = ds.samples[test_idx[k]];
        pos_mask.push_back(s.has_event && s.position_index.has_value());
        pos_pred.push_back(std::clamp(test_preds[k].pos_norm, 0.0, 1.0) * (data::kWindowLength - 1) * spacing);
        pos_true.push_back(s.position_index ? *s.position_index * spacing : 0.0);
    }
    const auto t2 = regression_metrics(pos_pred, pos_true, pos_mask);
    rep.t2_rmse_m = t2.rmse;
    rep.t2_mae_m = t2.mae;

    // T3 in physical units where the method and the labels both provide them
    auto t3_component = [&](bool refl) -> std::optional<RegressionMetrics> {
        std::vector<double> pred, truth;
        std::vector<bool> mask;
        for (std::size_t k = 0; k < test_idx.size(); ++k) {
            const auto& s = ds.samples[test_idx[k]];
            const auto& label = refl ? s.reflectance_db : s.loss_db;
            const auto& est = refl ? test_preds[k].reflectance_db : test_preds[k].loss_db;
            mask.push_back(label.has_value() && est.has_value());
            pred.push_back(est.value_or(0.0));
            truth.push_back(label.value_or(0.0));
        }
        if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) return std::nullopt;
        return regression_metrics(pred, truth, mask);
    };
    if (const auto m = t3_component(false)) {
        rep.t3_rmse_loss_db = m->rmse;
        rep.t3_mae_loss_db = m->mae;
        rep.t3_smape_loss = m->smape;
    }
    if (const auto m = t3_component(true)) {
        rep.t3_rmse_refl_db = m->rmse;
        rep.t3_mae_refl_db = m->mae;
        rep.t3_smape_refl = m->smape;
    }

    // T4 accuracy, macro one-vs-rest AUC and per-class ROC
    const bool has_cause = std::any_of(test_preds.begin(), test_preds.end(),
                                       [](const SamplePrediction& p) { return p.cause_probs.has_value(); });
    if (has_cause) {
        std::vector<int> pred_cls, true_cls;
        for (std::size_t k = 0; k < test_idx.size(); ++k) {
            const auto& probs = *test_preds[k].cause_probs;
            int best = 0;
            for (int c = 1; c < 7; ++c)
                if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) best = c;
            pred_cls.push_back(best);
            true_cls.push_back(ds.samples[test_idx[k]].cause_class);
        }
        const auto cm = classification_metrics(pred_cls, true_cls);
        rep.t4_accuracy = cm.accuracy;
        double auc_sum = 0.0;
        int auc_n = 0;
        for (int c = 0; c < 7; ++c) {
            std::vector<double> scores;
            std::vector<bool> labels;
            std::size_t n_pos = 0;
            for (std::size_t k = 0; k < test_idx.size(); ++k) {
                scores.push_back((*test_preds[k].cause_probs)[static_cast<std::size_t>(c)]);
                const bool is_c = true_cls[k] == c;
                labels.push_back(is_c);
                n_pos += is_c;
            }
            if (n_pos == 0 || n_pos == labels.size()) continue;
            auto curve = roc_and_auc(scores, labels);
            auc_sum += curve.auc;
            ++auc_n;
            rep.t4_roc.emplace(c, std::move(curve));
        }
        if (auc_n > 0) rep.t4_macro_auc = auc_sum / auc_n;
    }

    // per-SNR-bucket detection probability and regression errors
    for (int b = 0; b < buckets; ++b) {
        SnrBucketStat stat;
        stat.lo = b_lo + b * b_w;
        stat.hi = b_lo + (b + 1) * b_w;
        std::size_t det = 0;
        double t2_sq = 0.0, loss_sq = 0.0, refl_sq = 0.0;
        std::size_t t2_n = 0, loss_n = 0, refl_n = 0;
        for (std::size_t k = 0; k < test_idx.size(); ++k) {
            const auto& s = ds.samples[test_idx[k]];
            if (ds.spec.snr_bucket(s.snr_db) != b) continue;
            stat.n_total++;
            if (!s.has_event) continue;
            stat.n_pos++;
            if (test_preds[k].t1_score >= rep.threshold) ++det;
            if (s.position_index) {
                const double e = pos_pred[k] - pos_true[k];
                t2_sq += e * e;
                ++t2_n;
            }
            if (s.loss_db && test_preds[k].loss_db) {
                const double e = *test_preds[k].loss_db - *s.loss_db;
                loss_sq += e * e;
                ++loss_n;
            }
            if (s.reflectance_db && test_preds[k].reflectance_db) {
                const double e = *test_preds[k].reflectance_db - *s.reflectance_db;
                refl_sq += e * e;
                ++refl_n;
            }
        }
        if (stat.n_pos > 0) stat.detection_probability = static_cast<double>(det) / static_cast<double>(stat.n_pos);
        if (t2_n > 0) stat.t2_rmse_m = std::sqrt(t2_sq / static_cast<double>(t2_n));
        if (loss_n > 0) stat.t3_rmse_loss_db = std::sqrt(loss_sq / static_cast<double>(loss_n));
        if (refl_n > 0) stat.t3_rmse_refl_db = std::sqrt(refl_sq / static_cast<double>(refl_n));
        rep.buckets.push_back(stat);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// neural adapter

inline std::vector<SamplePrediction> model_predictions(model::MultitaskModel& m, const data::Dataset& ds,
                                                       const std::vector<std::size_t>& indices,
                                                       std::size_t batch_size = 256) {
    std::vector<SamplePrediction> preds;
    preds.reserve(indices.size());
    Rng dummy(0);
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, indices.size() - start);
        std::vector<std::size_t> slice(indices.begin() + static_cast<long>(start),
                                       indices.begin() + static_cast<long>(start + count));
        const auto batch = model::make_batch(ds.samples, slice, m);
        const auto out = m.forward(batch.x, false, dummy);
        for (std::size_t i = 0; i < count; ++i) {
            SamplePrediction p;
            p.t1_score = out.t1.at2(i, 0);
            p.pos_norm = out.t2.at2(i, 0);
            p.loss_db = out.t3.at2(i, 0) * m.t3_std[0] + m.t3_mean[0];
            p.reflectance_db = out.t3.at2(i, 1) * m.t3_std[1] + m.t3_mean[1];
            std::array<double, 7> probs{};
            for (int c = 0; c < 7; ++c) probs[static_cast<std::size_t>(c)] = out.t4.at2(i, static_cast<std::size_t>(c));
            p.cause_probs = probs;
            preds.push_back(p);
        }
    }
    return preds;
}

inline std::vector<double> no_event_scores(const std::vector<SamplePrediction>& preds, const data::Dataset& ds,
                                           const std::vector<std::size_t>& indices) {
    std::vector<double> scores;
    for (std::size_t k = 0; k < indices.size(); ++k)
        if (!ds.samples[indices[k]].has_event) scores.push_back(preds[k].t1_score);
    return scores;
}

inline EvalReport evaluate_model(model::MultitaskModel& m, const data::Dataset& ds, const std::string& method,
                                 double far = 0.01) {
    const auto val_idx = ds.indices_of(data::Split::Val);
    const auto val_preds = model_predictions(m, ds, val_idx);
    const auto neg = no_event_scores(val_preds, ds, val_idx);
    const auto test_preds = model_predictions(m, ds, ds.indices_of(data::Split::Test));
    auto rep = evaluate_predictions(ds, test_preds, neg, method, far);
    m.t1_threshold = rep.threshold;
    return rep;
}

// ---------------------------------------------------------------------------
// classical adapter: regenerates the raw dB windows from the corpus recipes

class ClassicalEvaluator {
public:
    ClassicalEvaluator(const data::Dataset& ds, TwoPointLsqParams params = {}, unsigned jobs = 1)
        : ds_(ds), params_(params) {
        params_.validate();
        pulse_samples_ = static_cast<int>(std::ceil(ds.spec.config.pulse_width_m() / ds.spec.config.sample_spacing_m()));
        // raw windows per recipe, assembled in deterministic order
        std::vector<std::vector<std::pair<std::size_t, WindowScore>>> partial(ds.recipes.size());
        std::vector<std::vector<data::ExtractedWindow>> extracted(ds.recipes.size());
        parallel_for(ds.recipes.size(), jobs, [&](std::size_t r) {
            const auto& recipe = ds.recipes[r];
            const auto trace = data::regenerate_trace(ds.spec, recipe);
            extracted[r] = data::extract_windows_raw(trace, recipe.policy, recipe.extract_seed, recipe.trace_id);
        });
        // map (trace_id, window_start) -> raw window score
        for (auto& windows : extracted)
            for (auto& w : windows) {
                const auto score = classical_window_score(std::span<const double>(w.raw_db), pulse_samples_, params_);
                scores_.emplace(std::make_pair(w.sample.trace_id, w.sample.window_start), score);
            }
    }

    SamplePrediction prediction(const data::SequenceSample& s) const {
        const auto it = scores_.find({s.trace_id, s.window_start});
        if (it == scores_.end()) throw data_error("classical: no regenerated window for sample");
        const auto& ws = it->second;
        SamplePrediction p;
        p.t1_score = ws.score;
        p.pos_norm = static_cast<double>(ws.best_index) / (data::kWindowLength - 1);
        p.loss_db = ws.loss_db;
        return p;  // reflectance and cause unsupported
    }

    EvalReport evaluate(const std::string& method = "two-point-lsq", double far = 0.01) const {
        const auto val_idx = ds_.indices_of(data::Split::Val);
        std::vector<double> neg;
        for (auto i : val_idx)
            if (!ds_.samples[i].has_event) neg.push_back(prediction(ds_.samples[i]).t1_score);
        const auto test_idx = ds_.indices_of(data::Split::Test);
        std::vector<SamplePrediction> preds;
        preds.reserve(test_idx.size());
        for (auto i : test_idx) preds.push_back(prediction(ds_.samples[i]));
        return evaluate_predictions(ds_, preds, neg, method, far);
    }

private:
    const data::Dataset& ds_;
    TwoPointLsqParams params_;
    int pulse_samples_ = 0;
    std::map<std::pair<std::uint64_t, std::size_t>, WindowScore> scores_;
};

// ---------------------------------------------------------------------------
// comparison grid (one row per metric, one column per method)

inline std::string comparison_csv(const std::vector<EvalReport>& reports) {
    std::string out = "metric";
    for (const auto& r : reports) out += "," + r.method;
    out += '\n';
    auto row = [&](const std::string& name, auto getter) {
        out += name;
        for (const auto& r : reports) {
            out += ',';
            const auto v = getter(r);
            if (v) out += fmt_g9(*v);
        }
        out += '\n';
    };
    using R = const EvalReport&;
    row("t1_accuracy_pct", [](R r) { return std::optional<double>(100.0 * r.t1_accuracy); });
    row("t1_f1", [](R r) { return std::optional<double>(r.t1_f1); });
    row("t2_rmse_m", [](R r) { return std::optional<double>(r.t2_rmse_m); });
    row("t2_mae_m", [](R r) { return std::optional<double>(r.t2_mae_m); });
    row("t3_rmse_refl_db", [](R r) { return r.t3_rmse_refl_db; });
    row("t3_rmse_loss_db", [](R r) { return r.t3_rmse_loss_db; });
    row("t3_smape_refl_pct", [](R r) { return r.t3_smape_refl; });
    row("t3_smape_loss_pct", [](R r) { return r.t3_smape_loss; });
    row("t4_accuracy_pct", [](R r) {
        return r.t4_accuracy ? std::optional<double>(100.0 * *r.t4_accuracy) : std::nullopt;
    });
    row("t4_auc", [](R r) { return r.t4_macro_auc; });
    return out;
}

}  // namespace otdrmtl::eval
