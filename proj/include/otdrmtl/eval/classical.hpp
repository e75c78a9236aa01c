#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/sim/trace.hpp"

namespace otdrmtl::eval {

struct TwoPointLsqParams {
    int half_window = 12;       // samples per side fit (shrinks near edges)
    int min_fit = 2;            // minimum points for a line fit
    double score_threshold = 8.0;   // studentized score for trace-mode detection
    double peak_threshold_db = 0.8; // reflective flag on peak excess
    double min_offset_db = 1e-6;    // offsets below this score exactly zero

    void validate() const {
        if (half_window < 2 || min_fit < 2 || min_fit > half_window)
            throw config_error("TwoPointLsqParams: bad window sizes");
        if (score_threshold <= 0.0) throw config_error("TwoPointLsqParams: threshold must be > 0");
    }
};

namespace detail {

struct LineFit {
    double intercept = 0.0;  // value at t = 0 (relative coordinates)
    double slope = 0.0;
    double t_mean = 0.0;
    double t_ss = 0.0;  // sum of squared deviations of t
    double n = 0.0;
    double ssr = 0.0;  // sum of squared residuals

    // value extrapolated at relative coordinate t
    double at(double t) const { return intercept + slope * t; }

    // leverage factor of the extrapolated value at t (variance / sigma^2)
    double leverage(double t) const {
        if (n <= 0.0) return 1e18;
        const double d = t - t_mean;
        return 1.0 / n + (t_ss > 0.0 ? d * d / t_ss : 0.0);
    }
};

inline LineFit fit_line(std::span<const double> y, long t0) {
    LineFit f;
    const auto n = static_cast<double>(y.size());
    double st = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        st += static_cast<double>(t0) + static_cast<double>(i);
        sy += y[i];
    }
    const double tm = st / n, ym = sy / n;
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double dt = static_cast<double>(t0) + static_cast<double>(i) - tm;
        stt += dt * dt;
        sty += dt * (y[i] - ym);
    }
    f.slope = stt > 0.0 ? sty / stt : 0.0;
    f.intercept = ym - f.slope * tm;
    f.t_mean = tm;
    f.t_ss = stt;
    f.n = n;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - f.at(static_cast<double>(t0) + static_cast<double>(i));
        f.ssr += r * r;
    }
    return f;
}

// robust per-signal noise estimate from second differences (MAD-based)
inline double noise_sigma_db(std::span<const double> y) {
    std::vector<double> d;
    d.reserve(y.size());
    for (std::size_t i = 1; i + 1 < y.size(); ++i)
        d.push_back(std::abs(y[i + 1] - 2.0 * y[i] + y[i - 1]));
    if (d.empty()) return 0.0;
    std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
    const double mad = d[d.size() / 2];
    // MAD of |N(0, 6 sigma^2)| -> sigma
    return mad * 1.4826 / std::sqrt(6.0);
}

}  // namespace detail

struct CandidateScore {
    long index = -1;          // hypothesized onset sample
    double score = 0.0;       // studentized statistic, max of step and peak
    double step_offset_db = 0.0;  // left fit minus right fit at the onset
    double peak_excess_db = 0.0;  // max sample above the local baseline fit
    bool reflective = false;
};

// Core two-point scorer: least-squares lines on the samples left of the
// hypothesized onset and right of the pulse extent; the event statistic is
// the larger of the studentized level offset and the studentized peak
// excess over the left fit.
inline CandidateScore score_onset(std::span<const double> y, long onset, int pulse_samples,
                                  const TwoPointLsqParams& p, double sigma_db) {
    const long n = static_cast<long>(y.size());
    CandidateScore cand;
    cand.index = onset;
    const long gap = pulse_samples + 1;

    const long l_lo = std::max<long>(0, onset - p.half_window);
    const long l_n = onset - l_lo;
    const long r_lo = onset + gap;
    const long r_n = std::min<long>(n, r_lo + p.half_window) - r_lo;

    std::optional<detail::LineFit> left, right;
    if (l_n >= p.min_fit) left = detail::fit_line(y.subspan(static_cast<std::size_t>(l_lo), static_cast<std::size_t>(l_n)), l_lo);
    if (r_n >= p.min_fit) right = detail::fit_line(y.subspan(static_cast<std::size_t>(r_lo), static_cast<std::size_t>(r_n)), r_lo);

    // the local fit quality caps the score: a fit straddling structure it
    // cannot represent must not be studentized by the global noise floor
    double local_ssr = 0.0, local_df = 0.0;
    for (const auto* f : {left ? &*left : nullptr, right ? &*right : nullptr}) {
        if (!f) continue;
        local_ssr += f->ssr;
        local_df += f->n - 2.0;
    }
    const double local_rms = local_df >= 1.0 ? std::sqrt(local_ssr / local_df) : 0.0;
    const double sigma = std::max({sigma_db, local_rms, 1e-12});
    if (left && right) {
        const double t = static_cast<double>(onset);
        const double offset = left->at(t) - right->at(t);  // positive for a drop
        cand.step_offset_db = offset;
        if (std::abs(offset) >= p.min_offset_db) {
            const double se = sigma * std::sqrt(left->leverage(t) + right->leverage(t));
            cand.score = std::abs(offset) / std::max(se, 1e-9);
        }
    }
    const detail::LineFit* base = left ? &*left : (right ? &*right : nullptr);
    if (base) {
        double excess = 0.0;
        for (long t = onset; t < std::min(n, onset + pulse_samples); ++t)
            excess = std::max(excess, y[static_cast<std::size_t>(t)] - base->at(static_cast<double>(t)));
        cand.peak_excess_db = excess;
        if (excess >= p.min_offset_db) {
            const double se = sigma * std::sqrt(1.0 + base->leverage(static_cast<double>(onset)));
            cand.score = std::max(cand.score, excess / std::max(se, 1e-9));
        }
        cand.reflective = excess > p.peak_threshold_db;
    }
    return cand;
}

struct DetectedEvent {
    long index = 0;
    double position_m = 0.0;
    double score = 0.0;
    double loss_db = 0.0;
    bool reflective = false;
};

// Sliding two-point + least-squares event detection over a full trace with
// non-maximum suppression within one pulse width.
inline std::vector<DetectedEvent> two_point_lsq_detect(const sim::OtdrTrace& trace, const TwoPointLsqParams& params) {
    params.validate();
    if (trace.size() < 200) throw config_error("two_point_lsq_detect: trace must have at least 200 samples");
    const auto y = std::span<const double>(trace.samples_db);
    const int pulse_samples =
        static_cast<int>(std::ceil(trace.config.pulse_width_m() / trace.sample_spacing_m));
    if (static_cast<std::size_t>(params.half_window + pulse_samples + 1 + params.half_window) >= trace.size())
        throw config_error("two_point_lsq_detect: window parameters exceed the trace");
    const double sigma = detail::noise_sigma_db(y);

    // scan stays inside the fiber (right fit included); the end-of-fiber
    // drop is termination, not a mid-span event
    std::vector<CandidateScore> cands;
    const long n = static_cast<long>(trace.size());
    const long guard = 2 * pulse_samples + 1 + params.half_window;
    const long i_max = std::min<long>(
        n - 2, static_cast<long>(trace.ground_truth.total_length_m / trace.sample_spacing_m) - guard);
    for (long i = 2; i < i_max; ++i) {
        auto c = score_onset(y, i, pulse_samples, params, sigma);
        if (c.score > params.score_threshold) cands.push_back(c);
    }
    std::sort(cands.begin(), cands.end(), [](const CandidateScore& a, const CandidateScore& b) {
        return a.score > b.score || (a.score == b.score && a.index < b.index);
    });
    // suppression radius of two pulse widths: distinct events cannot sit
    // closer than that, while a single event's shoulder candidates can
    std::vector<DetectedEvent> events;
    std::vector<long> kept;
    for (const auto& c : cands) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](long k) {
            return std::abs(k - c.index) <= 2 * pulse_samples;
        });
        if (suppressed) continue;
        kept.push_back(c.index);
        events.push_back({c.index, static_cast<double>(c.index) * trace.sample_spacing_m, c.score,
                          c.step_offset_db, c.reflective});
    }
    std::sort(events.begin(), events.end(), [](const DetectedEvent& a, const DetectedEvent& b) {
        return a.index < b.index;
    });
    return events;
}

struct WindowScore {
    double score = 0.0;
    long best_index = 0;
    double loss_db = 0.0;
    bool reflective = false;
};

// Best candidate statistic over one raw (dB-domain) 50-sample window; used
// to evaluate the classical detector on the same sequence corpus as the
// neural models.
inline WindowScore classical_window_score(std::span<const double> window_db, int pulse_samples,
                                          const TwoPointLsqParams& params) {
    params.validate();
    const double sigma = detail::noise_sigma_db(window_db);
    WindowScore best;
    const long n = static_cast<long>(window_db.size());
    for (long i = 2; i < n - 2; ++i) {
        const auto c = score_onset(window_db, i, pulse_samples, params, sigma);
        if (c.score > best.score) {
            best.score = c.score;
            best.best_index = c.index;
            best.loss_db = c.step_offset_db;
            best.reflective = c.reflective;
        }
    }
    return best;
}

}  // namespace otdrmtl::eval
