#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "helpers.hpp"
#include "otdrmtl/cli/commands.hpp"

using namespace otdrmtl;
using nlohmann::json;
using Catch::Approx;

namespace {

json tiny_dataset_overrides(const testutil::TempDir& tmp) {
    // class 0 weighted up so the validation split carries the >= 100
    // no-event windows the FAR calibration needs
    auto spec = testutil::small_corpus_spec(1400);
    spec.class_weights = {6, 1, 1, 1, 1, 1, 1};
    json o;
    o["out"] = tmp.str("data");
    o["spec"] = spec;
    o["name"] = "corpus";
    return o;
}

}  // namespace

TEST_CASE("simulate writes deterministic trace pairs with the preset geometry", "[cli]") {
    testutil::TempDir tmp("cli_sim");
    json o;
    o["out"] = tmp.str("a");
    o["seed"] = 5;
    o["count"] = 2;
    o["preset"] = "setup1";
    o["snr_db"] = 25.0;
    REQUIRE(cli::run_command("simulate", "", o) == 0);
    REQUIRE(std::filesystem::exists(tmp.str("a/trace_0.csv")));
    REQUIRE(std::filesystem::exists(tmp.str("a/trace_1.json")));
    REQUIRE(std::filesystem::exists(tmp.str("a/config.resolved.json")));

    const auto sidecar = json::parse(read_file(tmp.str("a/trace_0.json")));
    const auto link = sidecar.at("ground_truth").get<sim::FiberLink>();
    REQUIRE(link.events.size() == 3);
    CHECK(link.events[0].position_m == Approx(995.0));
    CHECK(link.events[1].position_m == Approx(3003.0));
    CHECK(link.events[2].position_m == Approx(4014.0));
    CHECK(link.total_length_m == Approx(6012.0));
    CHECK(sidecar.at("snr_db").get<double>() == Approx(25.0).margin(0.5));

    SECTION("same seed twice is byte-identical") {
        o["out"] = tmp.str("b");
        REQUIRE(cli::run_command("simulate", "", o) == 0);
        CHECK(read_file(tmp.str("a/trace_0.csv")) == read_file(tmp.str("b/trace_0.csv")));
        CHECK(read_file(tmp.str("a/trace_1.csv")) == read_file(tmp.str("b/trace_1.csv")));
    }
    SECTION("count 0 writes nothing and succeeds") {
        o["out"] = tmp.str("c");
        o["count"] = 0;
        REQUIRE(cli::run_command("simulate", "", o) == 0);
        CHECK_FALSE(std::filesystem::exists(tmp.str("c/trace_0.csv")));
    }
}

TEST_CASE("dataset -> train -> eval -> plot round trip", "[cli][pipeline]") {
    testutil::TempDir tmp("cli_pipe");
    auto o = tiny_dataset_overrides(tmp);
    o["seed"] = 21;
    REQUIRE(cli::run_command("dataset", "", o) == 0);
    REQUIRE(std::filesystem::exists(tmp.str("data/corpus.manifest.json")));
    REQUIRE(std::filesystem::exists(tmp.str("data/corpus.samples.csv")));

    json t;
    t["out"] = tmp.str("run");
    t["seed"] = 3;
    t["dataset"] = tmp.str("data/corpus");
    t["arch"] = "cnn";
    t["max_epochs"] = 2;
    t["patience"] = 1;
    REQUIRE(cli::run_command("train", "", t) == 0);
    REQUIRE(std::filesystem::exists(tmp.str("run/best.ckpt.json")));
    REQUIRE(std::filesystem::exists(tmp.str("run/final.ckpt.bin")));
    const auto history = read_file(tmp.str("run/history.csv"));
    CHECK(history.rfind("epoch,", 0) == 0);
    CHECK(std::count(history.begin(), history.end(), '\n') == 3);  // header + 2 epochs

    json e;
    e["out"] = tmp.str("eval");
    e["dataset"] = tmp.str("data/corpus");
    e["checkpoint"] = tmp.str("run/best.ckpt");
    REQUIRE(cli::run_command("eval", "", e) == 0);
    REQUIRE(std::filesystem::exists(tmp.str("eval/cnn.report.json")));
    REQUIRE(std::filesystem::exists(tmp.str("eval/cnn.detection_vs_snr.csv")));

    json c;
    c["out"] = tmp.str("eval2");
    c["dataset"] = tmp.str("data/corpus");
    c["classical"] = true;
    REQUIRE(cli::run_command("eval", "", c) == 0);
    REQUIRE(std::filesystem::exists(tmp.str("eval2/two-point-lsq.report.json")));

    json p;
    p["out"] = tmp.str("plots");
    p["reports"] = {tmp.str("eval/cnn.report.json"), tmp.str("eval2/two-point-lsq.report.json")};
    REQUIRE(cli::run_command("plot", "", p) == 0);
    REQUIRE(std::filesystem::exists(tmp.str("plots/detection_vs_snr.svg")));
    REQUIRE(std::filesystem::exists(tmp.str("plots/t2_rmse_vs_snr.svg")));
    const auto svg = read_file(tmp.str("plots/detection_vs_snr.svg"));
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("two-point-lsq") != std::string::npos);

    SECTION("plotting the same reports twice is byte-identical") {
        json p2 = p;
        p2["out"] = tmp.str("plots2");
        REQUIRE(cli::run_command("plot", "", p2) == 0);
        CHECK(read_file(tmp.str("plots/detection_vs_snr.svg")) == read_file(tmp.str("plots2/detection_vs_snr.svg")));
    }
    SECTION("resume command continues a run") {
        json r;
        r["out"] = tmp.str("resumed");
        r["seed"] = 3;
        r["dataset"] = tmp.str("data/corpus");
        r["checkpoint"] = tmp.str("run/final.ckpt");
        r["max_epochs"] = 3;
        r["patience"] = 1;
        REQUIRE(cli::run_command("resume", "", r) == 0);
        const auto h2 = read_file(tmp.str("resumed/history.csv"));
        CHECK(std::count(h2.begin(), h2.end(), '\n') == 4);  // header + 3 epochs
    }
}

TEST_CASE("missing upstream artifacts give actionable data errors (exit 3)", "[cli][errors]") {
    testutil::TempDir tmp("cli_err");
    json t;
    t["out"] = tmp.str("run");
    t["dataset"] = tmp.str("nope/corpus");
    CHECK(cli::run_command("train", "", t) == 3);

    json e;
    e["out"] = tmp.str("eval");
    e["dataset"] = tmp.str("nope/corpus");
    e["checkpoint"] = tmp.str("nope/ckpt");
    CHECK(cli::run_command("eval", "", e) == 3);

    json p;
    p["out"] = tmp.str("plots");
    p["reports"] = {tmp.str("nope/report.json")};
    CHECK(cli::run_command("plot", "", p) == 3);
}

TEST_CASE("config errors exit with code 2", "[cli][errors]") {
    testutil::TempDir tmp("cli_err2");
    json o;
    o["out"] = tmp.str("x");
    o["count"] = -3;
    CHECK(cli::run_command("simulate", "", o) == 2);
    json e;
    e["out"] = tmp.str("y");
    CHECK(cli::run_command("eval", "", e) == 2);  // no dataset key at all
    CHECK(cli::run_command("frobnicate", "", json::object()) == 2);
}

TEST_CASE("malformed report JSON is a data error with the path", "[cli][errors]") {
    testutil::TempDir tmp("cli_err3");
    write_file_atomic(tmp.str("bad.json"), "{not json");
    json p;
    p["out"] = tmp.str("plots");
    p["reports"] = {tmp.str("bad.json")};
    CHECK(cli::run_command("plot", "", p) == 3);
}

TEST_CASE("config file merges with overrides and is echoed resolved", "[cli][config]") {
    testutil::TempDir tmp("cli_cfg");
    json file_cfg;
    file_cfg["seed"] = 77;
    file_cfg["simulate"]["count"] = 1;
    file_cfg["simulate"]["preset"] = "setup2";
    write_file_atomic(tmp.str("cfg.json"), file_cfg.dump());

    json o;
    o["out"] = tmp.str("sim");
    REQUIRE(cli::run_command("simulate", tmp.str("cfg.json"), o) == 0);
    const auto resolved = json::parse(read_file(tmp.str("sim/config.resolved.json")));
    CHECK(resolved.at("seed") == 77);
    CHECK(resolved.at("simulate").at("preset") == "setup2");
    CHECK(resolved.at("command") == "simulate");

    // replaying from the resolved config reproduces the run
    json replay_overrides;
    replay_overrides["out"] = tmp.str("sim2");
    REQUIRE(cli::run_command("simulate", tmp.str("sim/config.resolved.json"), replay_overrides) == 0);
    CHECK(read_file(tmp.str("sim/trace_0.csv")) == read_file(tmp.str("sim2/trace_0.csv")));
}
