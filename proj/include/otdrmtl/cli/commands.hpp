#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/data/corpus.hpp"
#include "otdrmtl/errors.hpp"
#include "otdrmtl/eval/evaluate.hpp"
#include "otdrmtl/io_util.hpp"
#include "otdrmtl/model/model.hpp"
#include "otdrmtl/plot/svg.hpp"
#include "otdrmtl/sim/presets.hpp"
#include "otdrmtl/sim/randomize.hpp"
#include "otdrmtl/train/trainer.hpp"

namespace otdrmtl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Resolved run parameters: a JSON config file merged with command-line
// overrides; echoed to <out>/config.resolved.json so the run can be
// replayed from that file alone.
struct RunConfig {
    json root = json::object();
    std::string command;

    std::uint64_t seed() const { return root.value("seed", std::uint64_t{1}); }
    fs::path out() const { return fs::path(root.value("out", std::string("out"))); }
    unsigned jobs() const { return root.value("jobs", 0u); }

    json section() const { return root.contains(command) ? root.at(command) : json::object(); }

    void echo_resolved() const {
        json echo = root;
        echo["command"] = command;
        write_file_atomic(out() / "config.resolved.json", echo.dump(2) + "\n");
    }
};

inline RunConfig make_run_config(const std::string& command, const std::string& config_path, const json& overrides) {
    RunConfig rc;
    rc.command = command;
    if (!config_path.empty()) {
        try {
            rc.root = json::parse(read_file(config_path));
        } catch (const json::exception& e) {
            throw config_error("config file " + config_path + ": " + e.what());
        }
        if (!rc.root.is_object()) throw config_error("config file must hold a JSON object");
    }
    // overrides: top-level keys (seed/out/jobs) plus per-command settings
    for (const auto& [key, value] : overrides.items()) {
        if (key == "seed" || key == "out" || key == "jobs") {
            rc.root[key] = value;
        } else {
            rc.root[command][key] = value;
        }
    }
    return rc;
}

// ---------------------------------------------------------------------------
// simulate: write N trace CSV/JSON pairs from a preset or random links

inline int cmd_simulate(const RunConfig& rc) {
    const json cfg = rc.section();
    const int count = cfg.value("count", 10);
    if (count < 0) throw config_error("simulate: count must be >= 0");
    sim::OtdrConfig otdr;
    if (cfg.contains("config")) cfg.at("config").get_to(otdr);
    const double snr = cfg.value("snr_db", 20.0);
    const std::string preset = cfg.value("preset", std::string());
    sim::LinkRandomizationSpec spec;
    if (cfg.contains("link_spec")) cfg.at("link_spec").get_to(spec);

    fs::create_directories(rc.out());
    rc.echo_resolved();
    if (count == 0) {
        std::cerr << "simulate: count is 0, no traces written\n";
        return 0;
    }
    for (int i = 0; i < count; ++i) {
        const std::uint64_t link_seed = mix_seed(rc.seed(), 2 * static_cast<std::uint64_t>(i));
        const std::uint64_t noise_seed = mix_seed(rc.seed(), 2 * static_cast<std::uint64_t>(i) + 1);
        sim::FiberLink link = preset.empty() ? sim::random_link(spec, otdr, link_seed) : sim::preset_by_name(preset).link;
        auto trace = sim::ideal_trace(link, otdr);
        if (snr < sim::kSnrCapDb) trace = sim::add_noise(trace, snr, otdr.shots_to_average, noise_seed);
        const std::string stem = "trace_" + std::to_string(i);
        write_file_atomic(rc.out() / (stem + ".csv"), sim::trace_csv(trace));
        write_file_atomic(rc.out() / (stem + ".json"), sim::trace_sidecar(trace).dump(2) + "\n");
    }
    std::cout << "simulate: wrote " << count << " trace pairs to " << rc.out().string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// dataset: build and save a corpus

inline int cmd_dataset(const RunConfig& rc) {
    const json cfg = rc.section();
    data::CorpusSpec spec;
    if (cfg.contains("spec")) cfg.at("spec").get_to(spec);
    if (cfg.contains("sample_count")) spec.sample_count = cfg.at("sample_count").get<std::size_t>();
    spec.validate();
    const std::string name = cfg.value("name", std::string("corpus"));
    fs::create_directories(rc.out());
    rc.echo_resolved();
    const auto ds = data::build_corpus(spec, rc.seed(), rc.jobs() ? rc.jobs() : 2);
    data::save_dataset(ds, rc.out() / name);
    std::cout << "dataset: " << ds.samples.size() << " samples -> " << (rc.out() / name).string()
              << ".{manifest.json,samples.csv}\n";
    return 0;
}

// ---------------------------------------------------------------------------

inline data::Dataset load_dataset_arg(const json& cfg) {
    if (!cfg.contains("dataset")) throw config_error("missing 'dataset' (path base of a saved corpus)");
    const std::string base = cfg.at("dataset").get<std::string>();
    if (!fs::exists(base + ".manifest.json"))
        throw data_error("dataset not found: " + base + ".manifest.json (run the dataset command first)");
    return data::load_dataset(base);
}

inline train::TrainConfig train_config_from(const json& cfg, std::uint64_t seed, unsigned jobs) {
    train::TrainConfig tc;
    if (cfg.contains("train_config")) cfg.at("train_config").get_to(tc);
    if (cfg.contains("max_epochs")) tc.max_epochs = cfg.at("max_epochs").get<int>();
    if (cfg.contains("patience")) tc.patience = cfg.at("patience").get<int>();
    tc.seed = seed;
    tc.jobs = jobs;
    tc.validate();
    return tc;
}

// train: fit one architecture, write best/final checkpoints and history

inline int cmd_train(const RunConfig& rc) {
    const json cfg = rc.section();
    const auto ds = load_dataset_arg(cfg);
    model::Architecture arch;
    if (cfg.contains("architecture")) cfg.at("architecture").get_to(arch);
    if (cfg.contains("arch")) arch.kind = model::arch_kind_from_string(cfg.at("arch").get<std::string>());
    const auto tc = train_config_from(cfg, rc.seed(), rc.jobs());

    fs::create_directories(rc.out());
    rc.echo_resolved();
    auto m = model::MultitaskModel::build(arch, rc.seed());
    auto res = train::train(std::move(m), ds, tc);
    model::save_model(res.model, rc.out() / "best.ckpt");
    train::save_train_state(res, rc.out() / "final.ckpt");
    write_file_atomic(rc.out() / "history.csv", train::history_csv(res.history));
    std::cout << "train: " << to_string(arch.kind) << " " << res.history.records.size() << " epochs, best epoch "
              << res.history.best_epoch << " (val loss " << fmt_g9(res.history.best_val_loss) << ") -> "
              << (rc.out() / "best.ckpt").string() << "\n";
    return 0;
}

// resume: continue a run from its final checkpoint

inline int cmd_resume(const RunConfig& rc) {
    const json cfg = rc.section();
    const auto ds = load_dataset_arg(cfg);
    if (!cfg.contains("checkpoint")) throw config_error("resume: missing 'checkpoint' (final checkpoint base path)");
    const std::string base = cfg.at("checkpoint").get<std::string>();
    if (!fs::exists(base + ".json")) throw data_error("checkpoint not found: " + base + ".json");
    const auto tc = train_config_from(cfg, rc.seed(), rc.jobs());
    fs::create_directories(rc.out());
    rc.echo_resolved();
    auto res = train::resume(base, ds, tc);
    model::save_model(res.model, rc.out() / "best.ckpt");
    train::save_train_state(res, rc.out() / "final.ckpt");
    write_file_atomic(rc.out() / "history.csv", train::history_csv(res.history));
    std::cout << "resume: now at epoch " << res.next_epoch << ", best epoch " << res.history.best_epoch << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval: metric report for a checkpoint or the classical detector

inline void write_report_files(const eval::EvalReport& rep, const fs::path& dir) {
    write_file_atomic(dir / (rep.method + ".report.json"), json(rep).dump(2) + "\n");
    // per-curve CSV exports
    plot::Series det{rep.method, {}};
    plot::Series rmse{rep.method, {}};
    for (const auto& b : rep.buckets) {
        const double mid = (b.lo + b.hi) / 2.0;
        if (b.detection_probability) det.points.emplace_back(mid, *b.detection_probability);
        if (b.t2_rmse_m) rmse.points.emplace_back(mid, *b.t2_rmse_m);
    }
    write_file_atomic(dir / (rep.method + ".detection_vs_snr.csv"), plot::curve_csv(det));
    write_file_atomic(dir / (rep.method + ".t2_rmse_vs_snr.csv"), plot::curve_csv(rmse));
    for (const auto& [cls, curve] : rep.t4_roc) {
        plot::Series roc{"class " + std::to_string(cls), {}};
        for (const auto& p : curve.points) roc.points.emplace_back(p.fpr, p.tpr);
        write_file_atomic(dir / (rep.method + ".roc_class" + std::to_string(cls) + ".csv"), plot::curve_csv(roc));
    }
}

inline int cmd_eval(const RunConfig& rc) {
    const json cfg = rc.section();
    const auto ds = load_dataset_arg(cfg);
    if (ds.indices_of(data::Split::Test).empty()) throw data_error("eval: dataset has an empty test split");
    const double far = cfg.value("far", 0.01);
    fs::create_directories(rc.out());
    rc.echo_resolved();

    eval::EvalReport rep;
    if (cfg.value("classical", false)) {
        eval::TwoPointLsqParams params;
        eval::ClassicalEvaluator cl(ds, params, rc.jobs() ? rc.jobs() : 2);
        rep = cl.evaluate("two-point-lsq", far);
    } else {
        if (!cfg.contains("checkpoint")) throw config_error("eval: missing 'checkpoint' (or set classical=true)");
        const std::string base = cfg.at("checkpoint").get<std::string>();
        if (!fs::exists(base + ".json")) throw data_error("checkpoint not found: " + base + ".json");
        auto m = model::load_model(base);
        rep = eval::evaluate_model(m, ds, cfg.value("method", to_string(m.arch.kind)), far);
    }
    write_report_files(rep, rc.out());
    std::cout << "eval: " << rep.method << " t1_acc=" << fmt_g9(rep.t1_accuracy)
              << " t2_rmse_m=" << fmt_g9(rep.t2_rmse_m) << " -> " << (rc.out() / (rep.method + ".report.json")).string()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// compare: train all four architectures on one corpus, plus optionally the
// classical detector, and emit the merged comparison grid

inline int cmd_compare(const RunConfig& rc) {
    const json cfg = rc.section();
    const auto ds = load_dataset_arg(cfg);
    const double far = cfg.value("far", 0.01);
    const auto tc = train_config_from(cfg, rc.seed(), rc.jobs());
    fs::create_directories(rc.out());
    rc.echo_resolved();

    std::vector<model::ArchKind> kinds{model::ArchKind::CnnOnly, model::ArchKind::LstmOnly,
                                       model::ArchKind::BiLstmOnly, model::ArchKind::MultitaskBiLstmCnn};
    std::vector<eval::EvalReport> reports;
    for (const auto kind : kinds) {
        model::Architecture arch;
        if (cfg.contains("architecture")) cfg.at("architecture").get_to(arch);
        arch.kind = kind;
        const std::string name = to_string(kind);
        auto m = model::MultitaskModel::build(arch, rc.seed());
        auto res = train::train(std::move(m), ds, tc);
        model::save_model(res.model, rc.out() / (name + ".best.ckpt"));
        write_file_atomic(rc.out() / (name + ".history.csv"), train::history_csv(res.history));
        auto rep = eval::evaluate_model(res.model, ds, name, far);
        write_report_files(rep, rc.out());
        std::cout << "compare: " << name << " trained (" << res.history.records.size() << " epochs), t2_rmse_m="
                  << fmt_g9(rep.t2_rmse_m) << "\n";
        reports.push_back(std::move(rep));
    }
    if (cfg.value("classical", false)) {
        eval::ClassicalEvaluator cl(ds, {}, rc.jobs() ? rc.jobs() : 2);
        auto rep = cl.evaluate("two-point-lsq", far);
        write_report_files(rep, rc.out());
        reports.push_back(std::move(rep));
    }
    write_file_atomic(rc.out() / "comparison.csv", eval::comparison_csv(reports));
    write_file_atomic(rc.out() / "comparison.json", json(reports).dump(2) + "\n");
    std::cout << "compare: wrote " << (rc.out() / "comparison.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// plot: SVG charts + CSV curve data from report JSON files

inline eval::EvalReport report_from_json(const json& j) {
    eval::EvalReport rep;
    rep.method = j.at("method").get<std::string>();
    rep.far = j.at("far").get<double>();
    rep.threshold = j.at("threshold").get<double>();
    rep.t1_accuracy = j.at("t1_accuracy").get<double>();
    rep.t1_f1 = j.at("t1_f1").get<double>();
    rep.t2_rmse_m = j.at("t2_rmse_m").get<double>();
    rep.t2_mae_m = j.at("t2_mae_m").get<double>();
    for (const auto& b : j.at("buckets")) {
        eval::SnrBucketStat stat;
        stat.lo = b.at("snr_lo").get<double>();
        stat.hi = b.at("snr_hi").get<double>();
        stat.n_total = b.at("n_total").get<std::size_t>();
        stat.n_pos = b.at("n_pos").get<std::size_t>();
        if (!b.at("detection_probability").is_null())
            stat.detection_probability = b.at("detection_probability").get<double>();
        if (!b.at("t2_rmse_m").is_null()) stat.t2_rmse_m = b.at("t2_rmse_m").get<double>();
        if (!b.at("t3_rmse_loss_db").is_null()) stat.t3_rmse_loss_db = b.at("t3_rmse_loss_db").get<double>();
        if (!b.at("t3_rmse_refl_db").is_null()) stat.t3_rmse_refl_db = b.at("t3_rmse_refl_db").get<double>();
        rep.buckets.push_back(stat);
    }
    if (j.contains("t4_roc"))
        for (const auto& [cls, rj] : j.at("t4_roc").items()) {
            eval::RocCurve curve;
            curve.auc = rj.at("auc").get<double>();
            for (const auto& p : rj.at("points")) curve.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            rep.t4_roc.emplace(std::stoi(cls), std::move(curve));
        }
    return rep;
}

inline int cmd_plot(const RunConfig& rc) {
    const json cfg = rc.section();
    if (!cfg.contains("reports") || cfg.at("reports").empty())
        throw config_error("plot: missing 'reports' (list of report JSON paths)");
    std::vector<eval::EvalReport> reports;
    for (const auto& p : cfg.at("reports")) {
        const std::string path = p.get<std::string>();
        try {
            reports.push_back(report_from_json(json::parse(read_file(path))));
        } catch (const json::exception& e) {
            throw data_error("plot: malformed report " + path + ": " + e.what());
        }
    }
    fs::create_directories(rc.out());
    rc.echo_resolved();

    auto bucket_series = [&](auto getter) {
        std::vector<plot::Series> out;
        for (const auto& r : reports) {
            plot::Series s{r.method, {}};
            for (const auto& b : r.buckets) {
                const auto v = getter(b);
                if (v) s.points.emplace_back((b.lo + b.hi) / 2.0, *v);
            }
            out.push_back(std::move(s));
        }
        return out;
    };

    plot::ChartOptions det_opt{"Detection probability vs SNR (FAR 0.01)", "SNR (dB)", "detection probability"};
    det_opt.y_from_zero = true;
    const auto det = bucket_series([](const eval::SnrBucketStat& b) { return b.detection_probability; });
    write_file_atomic(rc.out() / "detection_vs_snr.svg", plot::line_chart(det, det_opt));
    for (const auto& s : det) write_file_atomic(rc.out() / (s.name + ".detection_vs_snr.csv"), plot::curve_csv(s));

    plot::ChartOptions pos_opt{"Position RMSE vs SNR", "SNR (dB)", "RMSE (m)"};
    pos_opt.y_from_zero = true;
    const auto pos = bucket_series([](const eval::SnrBucketStat& b) { return b.t2_rmse_m; });
    write_file_atomic(rc.out() / "t2_rmse_vs_snr.svg", plot::line_chart(pos, pos_opt));
    for (const auto& s : pos) write_file_atomic(rc.out() / (s.name + ".t2_rmse_vs_snr.csv"), plot::curve_csv(s));

    std::vector<plot::Series> t3;
    for (const auto& r : reports) {
        plot::Series loss{r.method + " loss", {}}, refl{r.method + " refl", {}};
        for (const auto& b : r.buckets) {
            if (b.t3_rmse_loss_db) loss.points.emplace_back((b.lo + b.hi) / 2.0, *b.t3_rmse_loss_db);
            if (b.t3_rmse_refl_db) refl.points.emplace_back((b.lo + b.hi) / 2.0, *b.t3_rmse_refl_db);
        }
        if (!loss.points.empty()) t3.push_back(std::move(loss));
        if (!refl.points.empty()) t3.push_back(std::move(refl));
    }
    if (!t3.empty()) {
        plot::ChartOptions t3_opt{"Loss / reflectance RMSE vs SNR", "SNR (dB)", "RMSE (dB)"};
        t3_opt.y_from_zero = true;
        write_file_atomic(rc.out() / "t3_rmse_vs_snr.svg", plot::line_chart(t3, t3_opt));
    }

    for (const auto& r : reports) {
        if (r.t4_roc.empty()) continue;
        std::vector<plot::Series> rocs;
        for (const auto& [cls, curve] : r.t4_roc) {
            plot::Series s{"class " + std::to_string(cls) + " (auc " + fmt_g9(curve.auc) + ")", {}};
            for (const auto& p : curve.points) s.points.emplace_back(p.fpr, p.tpr);
            rocs.push_back(std::move(s));
        }
        plot::ChartOptions roc_opt{"Cause identification ROC: " + r.method, "false positive rate", "true positive rate"};
        roc_opt.y_from_zero = true;
        write_file_atomic(rc.out() / ("roc_" + r.method + ".svg"), plot::line_chart(rocs, roc_opt));
    }
    std::cout << "plot: wrote charts to " << rc.out().string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const config_error*>(&e) || dynamic_cast<const resource_error*>(&e)) return 2;
    if (dynamic_cast<const data_error*>(&e)) return 3;
    if (dynamic_cast<const numeric_error*>(&e) || dynamic_cast<const shape_error*>(&e)) return 4;
    return 1;
}

inline int dispatch(const RunConfig& rc) {
    if (rc.command == "simulate") return cmd_simulate(rc);
    if (rc.command == "dataset") return cmd_dataset(rc);
    if (rc.command == "train") return cmd_train(rc);
    if (rc.command == "resume") return cmd_resume(rc);
    if (rc.command == "eval") return cmd_eval(rc);
    if (rc.command == "compare") return cmd_compare(rc);
    if (rc.command == "plot") return cmd_plot(rc);
    throw config_error("unknown command: " + rc.command);
}

inline int run_command(const std::string& command, const std::string& config_path, const json& overrides) {
    try {
        return dispatch(make_run_config(command, config_path, overrides));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace otdrmtl::cli
