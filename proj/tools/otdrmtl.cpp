// otdrmtl: synthesize OTDR fault traces, build labeled sequence corpora,
// train the multitask BiLSTM-CNN diagnoser and its baselines, and report
// SNR-swept metrics against a two-point + least-squares detector.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "otdrmtl/cli/commands.hpp"

using nlohmann::json;

int main(int argc, char** argv) {
    CLI::App app{"OTDR fiber-fault diagnosis toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    unsigned jobs = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "global RNG seed")->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--out", out, "output directory");
        sub->add_option("--jobs", jobs, "worker threads (0 = hardware)");
    };

    // simulate
    auto* sim = app.add_subcommand("simulate", "write synthetic OTDR traces (CSV + JSON sidecar)");
    int sim_count = -1;
    std::string sim_preset;
    double sim_snr = std::numeric_limits<double>::quiet_NaN();
    add_common(sim);
    sim->add_option("--count", sim_count, "number of traces");
    sim->add_option("--preset", sim_preset, "link preset: setup1 or setup2");
    sim->add_option("--snr", sim_snr, "target SNR in dB");

    // dataset
    auto* dat = app.add_subcommand("dataset", "build a labeled 50-sample window corpus");
    long dat_count = -1;
    std::string dat_name;
    add_common(dat);
    dat->add_option("--count", dat_count, "total sample count");
    dat->add_option("--name", dat_name, "corpus file base name");

    // train
    auto* trn = app.add_subcommand("train", "train one architecture on a corpus");
    std::string trn_dataset, trn_arch;
    int trn_epochs = -1;
    add_common(trn);
    trn->add_option("--dataset", trn_dataset, "corpus base path (without extensions)");
    trn->add_option("--arch", trn_arch, "bilstm-cnn | cnn | lstm | bilstm");
    trn->add_option("--max-epochs", trn_epochs, "epoch cap");

    // resume
    auto* res = app.add_subcommand("resume", "continue training from a final checkpoint");
    std::string res_dataset, res_ckpt;
    int res_epochs = -1;
    add_common(res);
    res->add_option("--dataset", res_dataset, "corpus base path");
    res->add_option("--checkpoint", res_ckpt, "final checkpoint base path");
    res->add_option("--max-epochs", res_epochs, "epoch cap");

    // eval
    auto* evl = app.add_subcommand("eval", "metric report for a checkpoint or the classical detector");
    std::string evl_dataset, evl_ckpt;
    bool evl_classical = false;
    add_common(evl);
    evl->add_option("--dataset", evl_dataset, "corpus base path");
    evl->add_option("--checkpoint", evl_ckpt, "model checkpoint base path");
    evl->add_flag("--classical", evl_classical, "evaluate the two-point + least-squares detector");

    // compare
    auto* cmp = app.add_subcommand("compare", "train and evaluate all four architectures on one corpus");
    std::string cmp_dataset;
    bool cmp_classical = false;
    int cmp_epochs = -1;
    add_common(cmp);
    cmp->add_option("--dataset", cmp_dataset, "corpus base path");
    cmp->add_flag("--classical", cmp_classical, "add the two-point + least-squares row");
    cmp->add_option("--max-epochs", cmp_epochs, "epoch cap");

    // plot
    auto* plt = app.add_subcommand("plot", "render SVG charts from report JSON files");
    std::vector<std::string> plt_reports;
    add_common(plt);
    plt->add_option("--report", plt_reports, "report JSON path (repeatable)");

    CLI11_PARSE(app, argc, argv);

    json overrides = json::object();
    if (seed_set) overrides["seed"] = seed;
    if (!out.empty()) overrides["out"] = out;
    if (jobs != 0) overrides["jobs"] = jobs;

    std::string command;
    if (sim->parsed()) {
        command = "simulate";
        if (sim_count >= 0) overrides["count"] = sim_count;
        if (!sim_preset.empty()) overrides["preset"] = sim_preset;
        if (!std::isnan(sim_snr)) overrides["snr_db"] = sim_snr;
    } else if (dat->parsed()) {
        command = "dataset";
        if (dat_count >= 0) overrides["sample_count"] = dat_count;
        if (!dat_name.empty()) overrides["name"] = dat_name;
    } else if (trn->parsed()) {
        command = "train";
        if (!trn_dataset.empty()) overrides["dataset"] = trn_dataset;
        if (!trn_arch.empty()) overrides["arch"] = trn_arch;
        if (trn_epochs > 0) overrides["max_epochs"] = trn_epochs;
    } else if (res->parsed()) {
        command = "resume";
        if (!res_dataset.empty()) overrides["dataset"] = res_dataset;
        if (!res_ckpt.empty()) overrides["checkpoint"] = res_ckpt;
        if (res_epochs > 0) overrides["max_epochs"] = res_epochs;
    } else if (evl->parsed()) {
        command = "eval";
        if (!evl_dataset.empty()) overrides["dataset"] = evl_dataset;
        if (!evl_ckpt.empty()) overrides["checkpoint"] = evl_ckpt;
        if (evl_classical) overrides["classical"] = true;
    } else if (cmp->parsed()) {
        command = "compare";
        if (!cmp_dataset.empty()) overrides["dataset"] = cmp_dataset;
        if (cmp_classical) overrides["classical"] = true;
        if (cmp_epochs > 0) overrides["max_epochs"] = cmp_epochs;
    } else if (plt->parsed()) {
        command = "plot";
        if (!plt_reports.empty()) overrides["reports"] = plt_reports;
    }

    return otdrmtl::cli::run_command(command, config_path, overrides);
}
