#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "otdrmtl/errors.hpp"

namespace otdrmtl::eval {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // monotone from (0,0) to (1,1)
    double auc = 0.0;
};

// Threshold sweep over the unique scores, descending; ties are grouped so
// the trapezoid area equals the Mann-Whitney statistic with half-credit
// for ties.
inline RocCurve roc_and_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw shape_error("roc_and_auc: score/label size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (bool l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw numeric_error("roc_and_auc: need both classes present");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    double tp = 0.0, fp = 0.0, auc = 0.0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        // consume the whole tie group
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]])
                tp += 1.0;
            else
                fp += 1.0;
            ++i;
        }
        const double fpr = fp / static_cast<double>(n_neg);
        const double tpr = tp / static_cast<double>(n_pos);
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        curve.points.push_back({fpr, tpr});
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    curve.auc = auc;
    return curve;
}

struct FarCalibration {
    double threshold = 0.0;
    double detection_probability = 0.0;
};

// Smallest threshold such that the fraction of negatives scoring at or
// above it stays within the allowed false-alarm rate (higher-interpolation
// empirical quantile). Detection probability is the fraction of positives
// at or above that threshold.
inline double far_threshold(std::vector<double> neg_scores, double far) {
    if (neg_scores.size() < 100) throw numeric_error("far_threshold: need at least 100 negative scores");
    if (far < 0.0 || far > 1.0) throw config_error("far_threshold: far must lie in [0, 1]");
    std::sort(neg_scores.begin(), neg_scores.end());
    const auto n = neg_scores.size();
    // candidates are the observed scores, scanned from below
    for (std::size_t i = 0; i < n; ++i) {
        const double t = neg_scores[i];
        // all scores from the first occurrence of t upward are >= t
        const auto first = static_cast<std::size_t>(std::lower_bound(neg_scores.begin(), neg_scores.end(), t) -
                                                    neg_scores.begin());
        const double frac = static_cast<double>(n - first) / static_cast<double>(n);
        if (frac <= far) return t;
    }
    // even the maximum fires too often; step just above it
    return std::nextafter(neg_scores.back(), std::numeric_limits<double>::infinity());
}

inline FarCalibration detection_prob_at_far(const std::vector<double>& pos_scores,
                                            const std::vector<double>& neg_scores, double far = 0.01) {
    FarCalibration cal;
    cal.threshold = far_threshold(neg_scores, far);
    if (pos_scores.empty()) return cal;
    std::size_t hits = 0;
    for (double s : pos_scores)
        if (s >= cal.threshold) ++hits;
    cal.detection_probability = static_cast<double>(hits) / static_cast<double>(pos_scores.size());
    return cal;
}

struct RegressionMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    double smape = 0.0;  // percent, in [0, 200]
    std::size_t count = 0;
};

// Metrics over unmasked pairs; SMAPE uses the half-sum denominator and a
// p = t = 0 pair contributes zero.
inline RegressionMetrics regression_metrics(const std::vector<double>& pred, const std::vector<double>& target,
                                            const std::vector<bool>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        throw shape_error("regression_metrics: size mismatch");
    RegressionMetrics m;
    double sq = 0.0, abs_sum = 0.0, smape_sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        const double e = pred[i] - target[i];
        sq += e * e;
        abs_sum += std::abs(e);
        const double denom = (std::abs(pred[i]) + std::abs(target[i])) / 2.0;
        if (denom > 0.0) smape_sum += std::abs(e) / denom;
        m.count++;
    }
    if (m.count == 0) throw numeric_error("regression_metrics: all pairs masked");
    const auto n = static_cast<double>(m.count);
    m.rmse = std::sqrt(sq / n);
    m.mae = abs_sum / n;
    m.smape = 100.0 * smape_sum / n;
    return m;
}

struct ClassificationMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

// Accuracy and macro F1 over cause classes 0..6; classes without support
// are excluded from the macro mean.
inline ClassificationMetrics classification_metrics(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw shape_error("classification_metrics: size mismatch");
    if (pred.empty()) throw numeric_error("classification_metrics: empty input");
    constexpr int kClasses = 7;
    std::array<std::array<std::size_t, kClasses>, kClasses> confusion{};
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= kClasses || truth[i] < 0 || truth[i] >= kClasses)
            throw data_error("classification_metrics: label outside 0..6");
        confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])]++;
        if (pred[i] == truth[i]) ++correct;
    }
    ClassificationMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    double f1_sum = 0.0;
    int supported = 0;
    for (int c = 0; c < kClasses; ++c) {
        std::size_t tp = confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
        std::size_t support = 0, predicted = 0;
        for (int o = 0; o < kClasses; ++o) {
            support += confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)];
            predicted += confusion[static_cast<std::size_t>(o)][static_cast<std::size_t>(c)];
        }
        if (support == 0) continue;
        ++supported;
        const double denom = static_cast<double>(support + predicted);
        f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    m.macro_f1 = supported > 0 ? f1_sum / supported : 0.0;
    return m;
}

}  // namespace otdrmtl::eval
