#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "otdrmtl/sim/presets.hpp"
#include "otdrmtl/sim/randomize.hpp"
#include "otdrmtl/sim/trace.hpp"

using namespace otdrmtl;
using namespace otdrmtl::sim;
using Catch::Approx;

TEST_CASE("sample spacing follows c dt / 2n", "[sim]") {
    OtdrConfig cfg;
    cfg.sample_interval_ns = 8.0;
    cfg.group_index = 1.468;
    CHECK(sample_spacing(cfg) == Approx(0.817).margin(5e-4));

    cfg.sample_interval_ns = 16.0;
    CHECK(sample_spacing(cfg) == Approx(2.0 * 0.817).margin(1e-3));

    cfg.sample_interval_ns = 0.0;
    CHECK_THROWS_AS(sample_spacing(cfg), config_error);
}

TEST_CASE("config invariants are enforced at construction", "[sim]") {
    OtdrConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    SECTION("group index range") {
        cfg.group_index = 1.2;
        CHECK_THROWS_AS(cfg.validate(), config_error);
    }
    SECTION("launch power range") {
        cfg.launch_power_dbm = 20.0;
        CHECK_THROWS_AS(cfg.validate(), config_error);
    }
    SECTION("attenuation positive") {
        cfg.attenuation_db_per_km = 0.0;
        CHECK_THROWS_AS(cfg.validate(), config_error);
    }
}

namespace {

FiberLink single_step_link(double position_m = 1000.0, double loss_db = 1.0, double length_m = 2000.0) {
    FiberLink link;
    link.total_length_m = length_m;
    FaultEvent e;
    e.position_m = position_m;
    e.kind = EventKind::NonReflective;
    e.loss_db = loss_db;
    e.cause_class = 3;
    link.events.push_back(e);
    return link;
}

}  // namespace

TEST_CASE("event-free ideal trace is a straight line at -attenuation dB/km", "[sim]") {
    OtdrConfig cfg;
    FiberLink link;
    link.total_length_m = 1500.0;
    const auto tr = ideal_trace(link, cfg);
    const double spacing = cfg.sample_spacing_m();
    const std::size_t last = static_cast<std::size_t>(1400.0 / spacing);
    for (std::size_t i : {std::size_t{0}, last / 2, last}) {
        const double expected = tr.samples_db[0] - cfg.attenuation_db_per_km * (i * spacing) * 1e-3;
        CHECK(tr.samples_db[i] == Approx(expected).margin(1e-9));
    }
}

TEST_CASE("fig-2 style trace exhibits the four event signatures", "[sim]") {
    OtdrConfig cfg;
    const auto preset = preset_setup1();
    const auto tr = ideal_trace(preset.link, cfg);
    const double spacing = tr.sample_spacing_m;
    auto level = [&](double z) { return tr.samples_db[static_cast<std::size_t>(z / spacing)]; };
    auto baseline = [&](double z) { return tr.samples_db[0] - cfg.attenuation_db_per_km * z * 1e-3; };

    // merged events at 995 m and 3003 m: peak then composite step
    CHECK(level(996.0) > baseline(996.0) + 3.0);
    CHECK(level(1050.0) < baseline(1050.0) - 0.3);
    CHECK(level(3004.0) > baseline(3004.0) + 3.0);
    CHECK(level(3080.0) < baseline(3080.0) - 0.8);
    // non-reflective 1 dB step at 4014 m, no peak
    CHECK(level(4015.0) < baseline(4015.0) + 0.5);
    CHECK(level(4100.0) == Approx(baseline(4100.0) - 0.3 - 0.3 - 0.25 - 1.0 - 1.0).margin(1e-6));
    // reflective end termination at 6012 m
    CHECK(level(6013.0) > level(6000.0) + 3.0);
}

TEST_CASE("loss steps superpose linearly", "[sim]") {
    OtdrConfig cfg;
    const auto t2 = ideal_trace(single_step_link(1000.0, 2.0), cfg);
    const auto t4 = ideal_trace(single_step_link(1000.0, 4.0), cfg);
    const std::size_t i = static_cast<std::size_t>(1500.0 / t2.sample_spacing_m);
    CHECK(t2.samples_db[i] - t4.samples_db[i] == Approx(2.0).margin(1e-9));
}

TEST_CASE("step additivity: total loss equals baseline gap after the last event", "[sim][acceptance-phys]") {
    OtdrConfig cfg;
    LinkRandomizationSpec spec;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto link = random_link(spec, cfg, seed);
        const auto tr = ideal_trace(link, cfg);
        double total_loss = 0.0;
        for (const auto& e : link.events) total_loss += e.loss_db.value_or(0.0);
        const double z = link.total_length_m - 3.0 * cfg.pulse_width_m();
        const std::size_t i = static_cast<std::size_t>(z / tr.sample_spacing_m);
        const double baseline = tr.samples_db[0] - cfg.attenuation_db_per_km * tr.distance_m(i) * 1e-3;
        CHECK(baseline - tr.samples_db[i] == Approx(total_loss).margin(0.01));
    }
}

TEST_CASE("reflective peak height grows strictly with reflectance", "[sim]") {
    OtdrConfig cfg;
    double prev_peak = -1e9;
    for (double refl : {-50.0, -40.0, -30.0, -20.0, -15.0}) {
        FiberLink link;
        link.total_length_m = 2000.0;
        FaultEvent e;
        e.position_m = 1000.0;
        e.kind = EventKind::Reflective;
        e.reflectance_db = refl;
        e.loss_db = 0.1;
        e.cause_class = 1;
        link.events.push_back(e);
        const auto tr = ideal_trace(link, cfg);
        const std::size_t i0 = static_cast<std::size_t>(1000.0 / tr.sample_spacing_m);
        double peak = -1e9;
        for (std::size_t i = i0; i < i0 + 10; ++i) peak = std::max(peak, tr.samples_db[i]);
        const double local = tr.samples_db[i0 - 2];
        CHECK(peak - local > prev_peak);
        prev_peak = peak - local;
    }
    // height above backscatter is (R + 52) / 2 in 5log10 display units
    CHECK(prev_peak == Approx((-15.0 + 52.0) / 2.0).margin(0.1));
}

TEST_CASE("zero-sigma shot noise returns the input trace", "[sim]") {
    OtdrConfig cfg;
    const auto tr = ideal_trace(single_step_link(), cfg);
    const auto noisy = add_shot_noise(tr, 0.0, 10, 99);
    CHECK(noisy.samples_db == tr.samples_db);
}

TEST_CASE("averaging shrinks noise std by sqrt(shots)", "[sim][acceptance-phys]") {
    OtdrConfig cfg;
    FiberLink link;
    link.total_length_m = 2500.0;
    const auto tr = ideal_trace(link, cfg);
    const double sigma = tr.config.backscatter_level_mw() * 0.05;

    auto noise_std = [&](int shots, std::uint64_t seed) {
        const auto noisy = add_shot_noise(tr, sigma, shots, seed);
        double sum_sq = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < 2000; ++i) {
            const double d = noisy.linear_mw(i) - tr.linear_mw(i);
            sum_sq += d * d;
            ++n;
        }
        return std::sqrt(sum_sq / n);
    };
    const double s1 = noise_std(1, 7);
    const double s100 = noise_std(100, 8);
    CHECK(s1 / s100 == Approx(10.0).epsilon(0.10));
}

TEST_CASE("SNR round trip holds at the benchmark grid", "[sim][acceptance-phys]") {
    OtdrConfig cfg;
    const auto tr = ideal_trace(single_step_link(), cfg);
    for (double target : {0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0}) {
        const auto noisy = add_noise(tr, target, 4, 17);
        const auto est = measure_snr(noisy);
        INFO("target " << target);
        CHECK(est.snr_db == Approx(target).margin(0.5));
    }
}

TEST_CASE("noiseless trace measures at the 99 dB cap", "[sim]") {
    OtdrConfig cfg;
    const auto tr = ideal_trace(single_step_link(), cfg);
    CHECK(measure_snr(tr).snr_db == Approx(99.0));
}

TEST_CASE("pure-noise trace flags a degenerate signal", "[sim]") {
    OtdrConfig cfg;
    FiberLink link;
    link.total_length_m = 2000.0;
    auto tr = ideal_trace(link, cfg);
    // erase the backscatter, keep noise
    for (auto& v : tr.samples_db) v = 5.0 * std::log10(cfg.floor_mw());
    Rng rng(5);
    const double sigma = cfg.backscatter_level_mw();
    for (auto& v : tr.samples_db) {
        const double p = std::max(sigma * rng.gaussian(), cfg.floor_mw());
        v = 5.0 * std::log10(p);
    }
    const auto est = measure_snr(tr);
    CHECK(est.degenerate_signal);
    CHECK(est.snr_db <= 0.0);
}

TEST_CASE("noisy trace generation is deterministic per seed", "[sim]") {
    OtdrConfig cfg;
    const auto tr = ideal_trace(single_step_link(), cfg);
    const auto a = add_noise(tr, 12.0, 8, 1234);
    const auto b = add_noise(tr, 12.0, 8, 1234);
    CHECK(a.samples_db == b.samples_db);
    const auto c = add_noise(tr, 12.0, 8, 1235);
    CHECK(a.samples_db != c.samples_db);
}

TEST_CASE("shot count below one is rejected", "[sim]") {
    OtdrConfig cfg;
    const auto tr = ideal_trace(single_step_link(), cfg);
    CHECK_THROWS_AS(add_noise(tr, 10.0, 0, 1), config_error);
}

TEST_CASE("random links honor the spec and are deterministic", "[sim]") {
    OtdrConfig cfg;
    LinkRandomizationSpec spec;
    const auto a = random_link(spec, cfg, 42);
    const auto b = random_link(spec, cfg, 42);
    CHECK(nlohmann::json(a) == nlohmann::json(b));
    CHECK_NOTHROW(a.validate(cfg.pulse_width_m()));

    spec.min_events = 0;
    spec.max_events = 0;
    const auto empty = random_link(spec, cfg, 7);
    CHECK(empty.events.empty());
}

TEST_CASE("kind mixture frequencies follow the weights", "[sim][montecarlo]") {
    OtdrConfig cfg;
    LinkRandomizationSpec spec;
    spec.kind_weights = {0.5, 0.5, 0.0};
    spec.min_events = 1;
    spec.max_events = 1;
    std::size_t reflective = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const auto link = random_link(spec, cfg, seed);
        REQUIRE(link.events.size() == 1);
        total++;
        if (link.events[0].kind == EventKind::Reflective) reflective++;
        else REQUIRE(link.events[0].kind == EventKind::NonReflective);
    }
    CHECK(std::abs(static_cast<double>(reflective) / total - 0.5) < 0.02);
}

TEST_CASE("infeasible randomization spec is rejected", "[sim]") {
    OtdrConfig cfg;
    LinkRandomizationSpec spec;
    spec.length_m = {400.0, 420.0};
    spec.min_events = 8;
    spec.max_events = 8;
    CHECK_THROWS_AS(random_link(spec, cfg, 1), config_error);
}

TEST_CASE("trace CSV and sidecar carry the documented fields", "[sim]") {
    OtdrConfig cfg;
    const auto tr = ideal_trace(single_step_link(), cfg);
    const auto csv = trace_csv(tr);
    CHECK(csv.rfind("index,distance_m,level_db\n", 0) == 0);
    const auto j = trace_sidecar(tr);
    CHECK(j.contains("config"));
    CHECK(j.contains("ground_truth"));
    CHECK(j.contains("snr_db"));
    CHECK(j.contains("rng_seed"));
    // ground truth round-trips through JSON
    const auto back = j.at("ground_truth").get<FiberLink>();
    CHECK(back.total_length_m == tr.ground_truth.total_length_m);
    CHECK(back.events.size() == tr.ground_truth.events.size());
}

TEST_CASE("oversized links hit the sample budget", "[sim]") {
    OtdrConfig cfg;
    FiberLink link;
    link.total_length_m = 1e10;
    CHECK_THROWS_AS(ideal_trace(link, cfg), resource_error);
}
