#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "otdrmtl/data/corpus.hpp"
#include "otdrmtl/nn/tensor.hpp"
#include "otdrmtl/rng.hpp"

namespace testutil {

using otdrmtl::Rng;
using otdrmtl::nn::Tensor;

// Scratch directory cleaned up on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("otdrmtl_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str(const std::string& rel = "") const { return (rel.empty() ? path : path / rel).string(); }
};

// Central-difference gradient check against a scalar functional L(x) =
// sum(c .* f(x)). `forward` must be a pure function of its input and the
// layer's parameters. Coordinates where both gradients are below 1e-8 in
// magnitude count as agreeing.
struct GradCheck {
    double eps = 1e-5;
    double max_rel_err = 0.0;

    double relative(double fd, double an) {
        if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8) return 0.0;
        return std::abs(fd - an) / std::max(std::abs(fd), std::abs(an));
    }

    // checks d L / d x for every coordinate of x
    void check_input(const std::function<Tensor(const Tensor&)>& forward,
                     const std::function<Tensor(const Tensor&)>& backward, Tensor x, const Tensor& cotangent) {
        const Tensor dx = backward(cotangent);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double orig = x[i];
            x[i] = orig + eps;
            const double lp = dot(forward(x), cotangent);
            x[i] = orig - eps;
            const double lm = dot(forward(x), cotangent);
            x[i] = orig;
            const double fd = (lp - lm) / (2.0 * eps);
            max_rel_err = std::max(max_rel_err, relative(fd, dx[i]));
        }
    }

    // checks accumulated parameter gradients; `loss` re-runs forward and
    // returns sum(c .* y) for the current parameter values
    void check_params(const std::function<double()>& loss, otdrmtl::nn::ParamSet& params) {
        for (auto& p : params) {
            for (std::size_t i = 0; i < p.value->numel(); ++i) {
                const double orig = (*p.value)[i];
                (*p.value)[i] = orig + eps;
                const double lp = loss();
                (*p.value)[i] = orig - eps;
                const double lm = loss();
                (*p.value)[i] = orig;
                const double fd = (lp - lm) / (2.0 * eps);
                max_rel_err = std::max(max_rel_err, relative(fd, (*p.grad)[i]));
            }
        }
    }

    static double dot(const Tensor& a, const Tensor& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
        return s;
    }
};

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.gaussian() * scale;
    return t;
}

// values bounded away from zero (for ReLU kink avoidance)
inline Tensor random_tensor_nonzero(std::vector<std::size_t> shape, Rng& rng, double min_abs = 0.05) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) {
        const double g = rng.gaussian();
        v = (g >= 0.0 ? 1.0 : -1.0) * (min_abs + std::abs(g));
    }
    return t;
}

// small corpus for trainer/eval tests (fast to build)
inline otdrmtl::data::CorpusSpec small_corpus_spec(std::size_t count) {
    otdrmtl::data::CorpusSpec spec;
    spec.sample_count = count;
    spec.config.shots_to_average = 1;
    spec.link_spec.length_m = {900.0, 1400.0};
    spec.events_per_link = 2;
    return spec;
}

}  // namespace testutil
