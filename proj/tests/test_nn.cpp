#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "otdrmtl/nn/adam.hpp"
#include "otdrmtl/nn/checkpoint.hpp"
#include "otdrmtl/nn/layers.hpp"
#include "otdrmtl/nn/losses.hpp"
#include "otdrmtl/nn/lstm.hpp"

using namespace otdrmtl;
using namespace otdrmtl::nn;
using Catch::Approx;
using testutil::GradCheck;
using testutil::random_tensor;
using testutil::random_tensor_nonzero;

TEST_CASE("dense forward matches direct arithmetic", "[nn][dense]") {
    Rng rng(1);
    Dense d(2, 2, rng);
    SECTION("identity weights pass the input through") {
        d.w.fill(0.0);
        d.w.at2(0, 0) = 1.0;
        d.w.at2(1, 1) = 1.0;
        d.b.fill(0.0);
        Tensor x({1, 2});
        x[0] = 3.0;
        x[1] = -2.0;
        const auto y = d.forward(x);
        CHECK(y[0] == 3.0);
        CHECK(y[1] == -2.0);
    }
    SECTION("1x2 input [1,2] with W=[[1,1],[1,-1]] gives [3,-1]") {
        d.w.at2(0, 0) = 1.0;
        d.w.at2(0, 1) = 1.0;
        d.w.at2(1, 0) = 1.0;
        d.w.at2(1, 1) = -1.0;
        d.b.fill(0.0);
        Tensor x({1, 2});
        x[0] = 1.0;
        x[1] = 2.0;
        const auto y = d.forward(x);
        CHECK(y[0] == Approx(3.0));
        CHECK(y[1] == Approx(-1.0));
    }
    SECTION("shape mismatch names both shapes") {
        Tensor x({1, 3});
        CHECK_THROWS_WITH(d.forward(x), Catch::Matchers::ContainsSubstring("[1, 3]") &&
                                            Catch::Matchers::ContainsSubstring("[2, 2]"));
    }
}

TEST_CASE("dense gradients match central finite differences", "[nn][dense][grad]") {
    Rng rng(7);
    GradCheck gc;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = 1 + rng.uniform_int(5), out = 1 + rng.uniform_int(4), batch = 1 + rng.uniform_int(3);
        Dense d(in, out, rng);
        const Tensor x = random_tensor({batch, in}, rng);
        const Tensor cot = random_tensor({batch, out}, rng);
        auto params = ParamSet{};
        d.register_params(params, "d");
        zero_grads(params);
        d.forward(x);
        d.backward(cot);
        gc.check_input([&](const Tensor& xx) { return d.forward(xx); },
                       [&](const Tensor& c) {
                           zero_grads(params);
                           d.forward(x);
                           return d.backward(c);
                       },
                       x, cot);
        zero_grads(params);
        d.forward(x);
        d.backward(cot);
        gc.check_params([&] { return GradCheck::dot(d.forward(x), cot); }, params);
    }
    CHECK(gc.max_rel_err < 1e-6);
}

TEST_CASE("conv1d forward matches direct arithmetic", "[nn][conv]") {
    Rng rng(2);
    SECTION("kernel [1], single filter passes input through") {
        Conv1d c(1, 1, 1, rng);
        c.w.fill(1.0);
        c.b.fill(0.0);
        Tensor x({1, 4, 1});
        for (int i = 0; i < 4; ++i) x[static_cast<std::size_t>(i)] = i + 1.0;
        const auto y = c.forward(x);
        REQUIRE(y.shape == std::vector<std::size_t>{1, 4, 1});
        for (int i = 0; i < 4; ++i) CHECK(y[static_cast<std::size_t>(i)] == Approx(i + 1.0));
    }
    SECTION("input [1,2,3,4], kernel [1,0,-1] gives [-2,-2]") {
        Conv1d c(1, 1, 3, rng);
        c.w.at3(0, 0, 0) = 1.0;
        c.w.at3(0, 0, 1) = 0.0;
        c.w.at3(0, 0, 2) = -1.0;
        c.b.fill(0.0);
        Tensor x({1, 4, 1});
        for (int i = 0; i < 4; ++i) x[static_cast<std::size_t>(i)] = i + 1.0;
        const auto y = c.forward(x);
        REQUIRE(y.shape == std::vector<std::size_t>{1, 2, 1});
        CHECK(y[0] == Approx(-2.0));
        CHECK(y[1] == Approx(-2.0));
    }
    SECTION("kernel longer than input is a shape error") {
        Conv1d c(1, 1, 5, rng);
        Tensor x({1, 4, 1});
        CHECK_THROWS_AS(c.forward(x), shape_error);
    }
}

TEST_CASE("conv1d gradients match central finite differences", "[nn][conv][grad]") {
    Rng rng(3);
    GradCheck gc;
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t ch = 1 + rng.uniform_int(3), f = 1 + rng.uniform_int(3);
        const std::size_t k = 1 + rng.uniform_int(3);
        const std::size_t len = k + rng.uniform_int(4), batch = 1 + rng.uniform_int(2);
        Conv1d c(ch, f, k, rng);
        const Tensor x = random_tensor({batch, len, ch}, rng);
        const Tensor cot = random_tensor({batch, len - k + 1, f}, rng);
        auto params = ParamSet{};
        c.register_params(params, "c");
        gc.check_input([&](const Tensor& xx) { return c.forward(xx); },
                       [&](const Tensor& co) {
                           zero_grads(params);
                           c.forward(x);
                           return c.backward(co);
                       },
                       x, cot);
        zero_grads(params);
        c.forward(x);
        c.backward(cot);
        gc.check_params([&] { return GradCheck::dot(c.forward(x), cot); }, params);
    }
    CHECK(gc.max_rel_err < 1e-6);
}

TEST_CASE("max pooling takes per-window maxima and drops odd tails", "[nn][pool]") {
    MaxPool1d pool;
    Tensor x({1, 4, 1});
    x[0] = 1.0;
    x[1] = 3.0;
    x[2] = 2.0;
    x[3] = 2.0;
    const auto y = pool.forward(x);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 2, 1});
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 2.0);

    SECTION("ties route the gradient to the first element") {
        Tensor dy({1, 2, 1});
        dy[0] = 1.0;
        dy[1] = 1.0;
        const auto dx = pool.backward(dy);
        CHECK(dx[2] == 1.0);  // first element of the tied window
        CHECK(dx[3] == 0.0);
    }
    SECTION("odd trailing element is dropped") {
        Tensor x5({1, 5, 1});
        for (int i = 0; i < 5; ++i) x5[static_cast<std::size_t>(i)] = i;
        const auto y5 = pool.forward(x5);
        CHECK(y5.shape[1] == 2);
    }
    SECTION("length below the window is a shape error") {
        Tensor x1({1, 1, 1});
        CHECK_THROWS_AS(pool.forward(x1), shape_error);
    }
}

TEST_CASE("max pooling gradient matches finite differences on distinct values", "[nn][pool][grad]") {
    Rng rng(4);
    GradCheck gc;
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t len = 2 + rng.uniform_int(6), ch = 1 + rng.uniform_int(3);
        MaxPool1d pool;
        Tensor x({1, len, ch});
        for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.gaussian() + 1e-3 * static_cast<double>(i);
        const Tensor cot = random_tensor({1, len / 2, ch}, rng);
        gc.check_input([&](const Tensor& xx) { return pool.forward(xx); },
                       [&](const Tensor& co) {
                           pool.forward(x);
                           return pool.backward(co);
                       },
                       x, cot);
    }
    CHECK(gc.max_rel_err < 1e-6);
}

TEST_CASE("dropout is identity in eval mode and at rate zero", "[nn][dropout]") {
    Rng rng(5);
    Dropout drop(0.5);
    const Tensor x = random_tensor({4, 10}, rng);
    Rng r1(1);
    CHECK(drop.forward(x, false, r1).data == x.data);
    Dropout zero(0.0);
    Rng r2(1);
    CHECK(zero.forward(x, true, r2).data == x.data);
    CHECK_THROWS_AS(Dropout(1.0), config_error);
}

TEST_CASE("dropout keeps about keep-prob mass and preserves the mean", "[nn][dropout][montecarlo]") {
    Rng rng(6);
    Dropout drop(0.5);
    Tensor x({100, 1000});
    x.fill(1.0);
    Rng drop_rng(42);
    const auto y = drop.forward(x, true, drop_rng);
    std::size_t kept = 0;
    double sum = 0.0;
    for (double v : y.data) {
        if (v != 0.0) ++kept;
        sum += v;
    }
    CHECK(std::abs(static_cast<double>(kept) / static_cast<double>(y.numel()) - 0.5) < 0.01);
    CHECK(std::abs(sum / static_cast<double>(y.numel()) - 1.0) < 0.01);
}

TEST_CASE("lstm zero weights give zero hidden states", "[nn][lstm]") {
    Rng rng(8);
    Lstm lstm(2, 3, rng);
    lstm.wx.fill(0.0);
    lstm.wh.fill(0.0);
    lstm.b.fill(0.0);
    const Tensor x = random_tensor({2, 5, 2}, rng);
    const auto y = lstm.forward(x);
    for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("single-step lstm matches the closed-form gate equations", "[nn][lstm]") {
    Rng rng(9);
    Lstm lstm(1, 1, rng);
    // large input-gate bias ~ open, forget bias ~ closed
    lstm.wx.fill(0.0);
    lstm.wh.fill(0.0);
    lstm.b[0] = 50.0;    // input gate ~ 1
    lstm.b[1] = -50.0;   // forget gate ~ 0
    const double zg = 0.7, zo = -0.4;
    lstm.b[2] = zg;
    lstm.b[3] = zo;
    Tensor x({1, 1, 1});
    x[0] = 0.0;
    const auto y = lstm.forward(x);
    const double expected = sigmoid(zo) * std::tanh(std::tanh(zg));
    CHECK(y[0] == Approx(expected).margin(1e-9));
}

TEST_CASE("lstm BPTT gradients match finite differences", "[nn][lstm][grad]") {
    Rng rng(10);
    GradCheck gc;
    gc.eps = 1e-5;
    for (int trial = 0; trial < 8; ++trial) {
        Lstm lstm(3, 3, rng);
        const Tensor x = random_tensor({2, 4, 3}, rng);
        const Tensor cot = random_tensor({2, 4, 3}, rng);
        auto params = ParamSet{};
        lstm.register_params(params, "lstm");
        gc.check_input([&](const Tensor& xx) { return lstm.forward(xx); },
                       [&](const Tensor& co) {
                           zero_grads(params);
                           lstm.forward(x);
                           return lstm.backward(co);
                       },
                       x, cot);
        zero_grads(params);
        lstm.forward(x);
        lstm.backward(cot);
        gc.check_params([&] { return GradCheck::dot(lstm.forward(x), cot); }, params);
    }
    CHECK(gc.max_rel_err < 1e-5);
}

TEST_CASE("bilstm concatenates aligned directions", "[nn][bilstm]") {
    Rng rng(11);
    SECTION("zero input with zero biases gives zero output") {
        BiLstm bi(1, 4, rng);
        bi.fwd.b.fill(0.0);
        bi.bwd.b.fill(0.0);
        Tensor x({1, 6, 1});
        const auto y = bi.forward(x);
        REQUIRE(y.shape == std::vector<std::size_t>{1, 6, 8});
        for (double v : y.data) CHECK(v == 0.0);
    }
    SECTION("palindromic input with identical direction parameters is time-symmetric") {
        BiLstm bi(1, 3, rng);
        bi.bwd.wx = bi.fwd.wx;
        bi.bwd.wh = bi.fwd.wh;
        bi.bwd.b = bi.fwd.b;
        const std::size_t steps = 7;
        Tensor x({1, steps, 1});
        for (std::size_t t = 0; t < steps; ++t) {
            const double v = 0.3 * static_cast<double>(std::min(t, steps - 1 - t));
            x.at3(0, t, 0) = v;  // palindrome
        }
        const auto y = bi.forward(x);
        const std::size_t h = 3;
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t j = 0; j < h; ++j) {
                CHECK(y.at3(0, t, j) == Approx(y.at3(0, steps - 1 - t, h + j)).margin(1e-12));
                CHECK(y.at3(0, t, h + j) == Approx(y.at3(0, steps - 1 - t, j)).margin(1e-12));
            }
    }
}

TEST_CASE("bilstm gradients match finite differences", "[nn][bilstm][grad]") {
    Rng rng(12);
    GradCheck gc;
    for (int trial = 0; trial < 5; ++trial) {
        BiLstm bi(2, 3, rng);
        const Tensor x = random_tensor({2, 4, 2}, rng);
        const Tensor cot = random_tensor({2, 4, 6}, rng);
        auto params = ParamSet{};
        bi.register_params(params, "bi");
        gc.check_input([&](const Tensor& xx) { return bi.forward(xx); },
                       [&](const Tensor& co) {
                           zero_grads(params);
                           bi.forward(x);
                           return bi.backward(co);
                       },
                       x, cot);
        zero_grads(params);
        bi.forward(x);
        bi.backward(cot);
        gc.check_params([&] { return GradCheck::dot(bi.forward(x), cot); }, params);
    }
    CHECK(gc.max_rel_err < 1e-5);
}

TEST_CASE("softmax rows sum to one", "[nn][softmax]") {
    Rng rng(13);
    Softmax sm;
    const auto y = sm.forward(random_tensor({8, 7}, rng, 3.0));
    for (std::size_t i = 0; i < 8; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 7; ++j) sum += y.at2(i, j);
        CHECK(sum == Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("loss values and weighted sum match the stated arithmetic", "[nn][loss]") {
    SECTION("weighted sum of unit losses") {
        CHECK(weighted_sum({1.0, 1.0, 1.0, 1.0}, {1.5, 0.5, 1.8, 1.0}) == Approx(4.8));
    }
    SECTION("perfect predictions stay at the clipping floor") {
        Tensor p({2, 1});
        p[0] = 1.0;
        p[1] = 0.0;
        const auto l = bce(p, {1.0, 0.0});
        CHECK(l.value < 2e-7);
        Tensor probs({1, 3});
        probs.at2(0, 1) = 1.0;
        const auto ce = cross_entropy(probs, {1});
        CHECK(ce.value < 2e-7);
    }
    SECTION("all-masked mse is exactly zero with zero gradient") {
        Tensor p({3, 2}), t({3, 2}), m({3, 2});
        p.fill(1.0);
        const auto l = mse(p, t, m);
        CHECK(l.value == 0.0);
        for (double g : l.grad.data) CHECK(g == 0.0);
    }
    SECTION("mse respects the mask") {
        Tensor p({2, 1}), t({2, 1}), m({2, 1});
        p[0] = 3.0;
        p[1] = 100.0;  // masked out
        t[0] = 1.0;
        m[0] = 1.0;
        const auto l = mse(p, t, m);
        CHECK(l.value == Approx(4.0));
        CHECK(l.grad[1] == 0.0);
    }
}

TEST_CASE("loss gradients match finite differences", "[nn][loss][grad]") {
    Rng rng(14);
    GradCheck gc;
    const double eps = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        SECTION("trial " + std::to_string(trial)) {}
        // bce on mid-range probabilities
        Tensor p({4, 1});
        std::vector<double> y(4);
        for (std::size_t i = 0; i < 4; ++i) {
            p[i] = rng.uniform(0.05, 0.95);
            y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        }
        auto l = bce(p, y);
        for (std::size_t i = 0; i < 4; ++i) {
            Tensor pp = p;
            pp[i] += eps;
            const double lp = bce(pp, y).value;
            pp[i] -= 2 * eps;
            const double lm = bce(pp, y).value;
            gc.max_rel_err = std::max(gc.max_rel_err, gc.relative((lp - lm) / (2 * eps), l.grad[i]));
        }
        // masked mse
        Tensor pr({3, 2}), t({3, 2}), m({3, 2});
        for (std::size_t i = 0; i < 6; ++i) {
            pr[i] = rng.gaussian();
            t[i] = rng.gaussian();
            m[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        }
        auto lm2 = mse(pr, t, m);
        for (std::size_t i = 0; i < 6; ++i) {
            Tensor pp = pr;
            pp[i] += eps;
            const double lp = mse(pp, t, m).value;
            pp[i] -= 2 * eps;
            const double lend = mse(pp, t, m).value;
            gc.max_rel_err = std::max(gc.max_rel_err, gc.relative((lp - lend) / (2 * eps), lm2.grad[i]));
        }
        // cross entropy on mid-range probabilities
        Tensor probs({2, 4});
        std::vector<int> cls(2);
        for (std::size_t i = 0; i < 2; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                probs.at2(i, j) = rng.uniform(0.1, 1.0);
                sum += probs.at2(i, j);
            }
            for (std::size_t j = 0; j < 4; ++j) probs.at2(i, j) /= sum;
            cls[i] = static_cast<int>(rng.uniform_int(4));
        }
        auto lce = cross_entropy(probs, cls);
        for (std::size_t i = 0; i < 8; ++i) {
            Tensor pp = probs;
            pp[i] += eps;
            const double lp = cross_entropy(pp, cls).value;
            pp[i] -= 2 * eps;
            const double lmn = cross_entropy(pp, cls).value;
            gc.max_rel_err = std::max(gc.max_rel_err, gc.relative((lp - lmn) / (2 * eps), lce.grad[i]));
        }
    }
    CHECK(gc.max_rel_err < 1e-4);
}

TEST_CASE("adam follows its update formulas", "[nn][adam]") {
    SECTION("zero gradient from a fresh state leaves parameters unchanged") {
        Tensor w({2});
        w[0] = 1.0;
        w[1] = -2.0;
        Tensor g({2});
        ParamSet params{{"w", &w, &g}};
        AdamState st(params);
        AdamConfig cfg;
        for (int i = 0; i < 5; ++i) adam_step(params, st, cfg);
        CHECK(w[0] == 1.0);
        CHECK(w[1] == -2.0);
    }
    SECTION("zero gradient decays accumulated moments toward zero") {
        Tensor w({1});
        Tensor g({1});
        ParamSet params{{"w", &w, &g}};
        AdamState st(params);
        st.m[0][0] = 1.0;
        st.v[0][0] = 1.0;
        AdamConfig cfg;
        adam_step(params, st, cfg);
        CHECK(st.m[0][0] == Approx(0.9));
        CHECK(st.v[0][0] == Approx(0.999));
    }
    SECTION("first step with g=1, lr=0.1 matches the bias-corrected oracle") {
        Tensor w({1});
        Tensor g({1});
        g[0] = 1.0;
        ParamSet params{{"w", &w, &g}};
        AdamState st(params);
        AdamConfig cfg;
        cfg.learning_rate = 0.1;
        adam_step(params, st, cfg);
        // independent direct arithmetic of the Adam formulas
        const double m = (1 - cfg.beta1) * 1.0, v = (1 - cfg.beta2) * 1.0;
        const double m_hat = m / (1 - cfg.beta1), v_hat = v / (1 - cfg.beta2);
        const double expected = -cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        CHECK(w[0] == Approx(expected).margin(1e-12));
        CHECK(w[0] == Approx(-0.1).margin(1e-8));
    }
    SECTION("constant gradient drives the update magnitude toward lr") {
        Tensor w({1});
        Tensor g({1});
        g[0] = 0.5;
        ParamSet params{{"w", &w, &g}};
        AdamState st(params);
        AdamConfig cfg;
        double prev = w[0];
        double step_size = 0.0;
        for (int i = 0; i < 2000; ++i) {
            adam_step(params, st, cfg);
            step_size = prev - w[0];
            prev = w[0];
        }
        CHECK(step_size == Approx(cfg.learning_rate).epsilon(0.01));
    }
    SECTION("non-finite gradient aborts the step without touching parameters") {
        Tensor w({1});
        w[0] = 5.0;
        Tensor g({1});
        g[0] = std::numeric_limits<double>::quiet_NaN();
        ParamSet params{{"w", &w, &g}};
        AdamState st(params);
        AdamConfig cfg;
        CHECK_THROWS_AS(adam_step(params, st, cfg), numeric_error);
        CHECK(w[0] == 5.0);
        CHECK(st.step == 0);
    }
}

TEST_CASE("checkpoints round trip tensors with integrity checks", "[nn][checkpoint]") {
    testutil::TempDir tmp("ckpt");
    Rng rng(15);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({7}, rng);
    SECTION("float64 is exact") {
        save_tensors(tmp.path / "t64", {{"a", &a}, {"b", &b}}, true, {{"note", 1}});
        const auto back = load_tensors(tmp.path / "t64");
        CHECK(back.tensor("a").data == a.data);
        CHECK(back.tensor("b").data == b.data);
        CHECK(back.extra().at("note") == 1);
    }
    SECTION("float32 is exact to single precision") {
        save_tensors(tmp.path / "t32", {{"a", &a}}, false, {});
        const auto back = load_tensors(tmp.path / "t32");
        for (std::size_t i = 0; i < a.numel(); ++i)
            CHECK(back.tensor("a")[i] == Approx(a[i]).margin(1e-6));
    }
    SECTION("blob corruption is detected") {
        save_tensors(tmp.path / "tc", {{"a", &a}}, true, {});
        auto blob = read_file(tmp.str("tc.bin"));
        blob[3] = static_cast<char>(blob[3] ^ 0x1);
        write_file_atomic(tmp.str("tc.bin"), blob);
        CHECK_THROWS_AS(load_tensors(tmp.path / "tc"), data_error);
    }
}
