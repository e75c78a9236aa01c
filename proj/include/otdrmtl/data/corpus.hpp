#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/data/extract.hpp"
#include "otdrmtl/data/sample.hpp"
#include "otdrmtl/errors.hpp"
#include "otdrmtl/io_util.hpp"
#include "otdrmtl/parallel.hpp"
#include "otdrmtl/rng.hpp"
#include "otdrmtl/sim/randomize.hpp"
#include "otdrmtl/sim/trace.hpp"

namespace otdrmtl::data {

enum class Split { Train, Val, Test };

inline char split_char(Split s) { return s == Split::Train ? 't' : (s == Split::Val ? 'v' : 'e'); }
inline Split split_from_char(char c) {
    if (c == 't') return Split::Train;
    if (c == 'v') return Split::Val;
    if (c == 'e') return Split::Test;
    throw data_error(std::string("unknown split code: ") + c);
}

struct CorpusSpec {
    std::size_t sample_count = 6000;
    sim::Range snr_db{0.0, 30.0};
    int snr_buckets = 6;
    sim::OtdrConfig config;
    sim::LinkRandomizationSpec link_spec;
    int events_per_link = 3;
    Normalization normalization = Normalization::GlobalDb;
    // relative target frequency per cause class 0..6; uniform = balanced
    std::array<double, 7> class_weights{1, 1, 1, 1, 1, 1, 1};
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;

    void validate() const {
        config.validate();
        link_spec.validate();
        if (sample_count == 0) throw config_error("CorpusSpec: sample_count must be > 0");
        if (snr_db.hi < snr_db.lo) throw config_error("CorpusSpec: bad SNR range");
        if (snr_buckets < 1) throw config_error("CorpusSpec: need at least one SNR bucket");
        if (events_per_link < 1 || events_per_link > 8)
            throw config_error("CorpusSpec: events_per_link must be in [1, 8]");
        double wsum = 0.0;
        for (double w : class_weights) {
            if (w < 0.0) throw config_error("CorpusSpec: negative class weight");
            wsum += w;
        }
        if (wsum <= 0.0) throw config_error("CorpusSpec: all class weights zero");
        const double fsum = train_frac + val_frac + test_frac;
        if (train_frac < 0 || val_frac < 0 || test_frac < 0 || std::abs(fsum - 1.0) > 1e-9)
            throw config_error("CorpusSpec: split fractions must be non-negative and sum to 1");
    }

    int snr_bucket(double snr) const {
        const double width = (snr_db.hi - snr_db.lo) / snr_buckets;
        if (width <= 0.0) return 0;
        int b = static_cast<int>((snr - snr_db.lo) / width);
        return std::clamp(b, 0, snr_buckets - 1);
    }
};

inline void to_json(nlohmann::json& j, const CorpusSpec& s) {
    j = nlohmann::json{{"sample_count", s.sample_count}, {"snr_db", s.snr_db},
                       {"snr_buckets", s.snr_buckets},   {"config", s.config},
                       {"link_spec", s.link_spec},       {"events_per_link", s.events_per_link},
                       {"normalization", to_string(s.normalization)},
                       {"class_weights", s.class_weights}, {"train_frac", s.train_frac},
                       {"val_frac", s.val_frac},         {"test_frac", s.test_frac}};
}

inline void from_json(const nlohmann::json& j, CorpusSpec& s) {
    s = CorpusSpec{};
    if (j.contains("sample_count")) j.at("sample_count").get_to(s.sample_count);
    if (j.contains("snr_db")) j.at("snr_db").get_to(s.snr_db);
    if (j.contains("snr_buckets")) j.at("snr_buckets").get_to(s.snr_buckets);
    if (j.contains("config")) j.at("config").get_to(s.config);
    if (j.contains("link_spec")) j.at("link_spec").get_to(s.link_spec);
    if (j.contains("events_per_link")) j.at("events_per_link").get_to(s.events_per_link);
    if (j.contains("normalization")) s.normalization = normalization_from_string(j.at("normalization").get<std::string>());
    if (j.contains("class_weights")) j.at("class_weights").get_to(s.class_weights);
    if (j.contains("train_frac")) j.at("train_frac").get_to(s.train_frac);
    if (j.contains("val_frac")) j.at("val_frac").get_to(s.val_frac);
    if (j.contains("test_frac")) j.at("test_frac").get_to(s.test_frac);
    s.validate();
}

// One trace of the corpus, sufficient to regenerate it bit-exactly.
struct TraceRecipe {
    std::uint64_t trace_id = 0;
    sim::FiberLink link;
    double target_snr_db = 0.0;
    std::uint64_t noise_seed = 0;
    std::uint64_t extract_seed = 0;
    ExtractionPolicy policy;
};

inline void to_json(nlohmann::json& j, const TraceRecipe& r) {
    j = nlohmann::json{{"trace_id", r.trace_id},     {"link", r.link},
                       {"target_snr_db", r.target_snr_db}, {"noise_seed", r.noise_seed},
                       {"extract_seed", r.extract_seed},   {"policy", r.policy}};
}

inline void from_json(const nlohmann::json& j, TraceRecipe& r) {
    j.at("trace_id").get_to(r.trace_id);
    j.at("link").get_to(r.link);
    j.at("target_snr_db").get_to(r.target_snr_db);
    j.at("noise_seed").get_to(r.noise_seed);
    j.at("extract_seed").get_to(r.extract_seed);
    j.at("policy").get_to(r.policy);
}

struct Dataset {
    CorpusSpec spec;
    std::uint64_t creation_seed = 0;
    std::vector<SequenceSample> samples;
    std::vector<Split> split;
    std::vector<TraceRecipe> recipes;

    std::array<std::size_t, 7> class_histogram() const {
        std::array<std::size_t, 7> h{};
        for (const auto& s : samples) h[static_cast<std::size_t>(s.cause_class)]++;
        return h;
    }

    std::vector<std::size_t> snr_histogram() const {
        std::vector<std::size_t> h(static_cast<std::size_t>(spec.snr_buckets), 0);
        for (const auto& s : samples) h[static_cast<std::size_t>(spec.snr_bucket(s.snr_db))]++;
        return h;
    }

    std::vector<std::size_t> indices_of(Split which) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (split[i] == which) idx.push_back(i);
        return idx;
    }
};

namespace detail {

struct TracePlan {
    std::vector<int> causes;
    int no_event_windows = 0;
    double target_snr_db = 0.0;
    std::uint64_t link_seed = 0;
    std::uint64_t noise_seed = 0;
    std::uint64_t extract_seed = 0;
};

// Allocate integer targets proportional to weights (largest remainder).
inline std::array<std::size_t, 7> class_targets(const CorpusSpec& spec) {
    std::array<std::size_t, 7> targets{};
    double wsum = 0.0;
    for (double w : spec.class_weights) wsum += w;
    std::array<double, 7> exact{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 7; ++c) {
        exact[c] = static_cast<double>(spec.sample_count) * spec.class_weights[c] / wsum;
        targets[c] = static_cast<std::size_t>(std::floor(exact[c]));
        assigned += targets[c];
    }
    std::array<std::size_t, 7> order{0, 1, 2, 3, 4, 5, 6};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return exact[a] - std::floor(exact[a]) > exact[b] - std::floor(exact[b]);
    });
    for (std::size_t k = 0; assigned < spec.sample_count; ++k, ++assigned) targets[order[k % 7]]++;
    return targets;
}

}  // namespace detail

// Deterministic corpus construction: a sequential planning pass fixes every
// trace's causes, SNR and seeds, then trace simulation + extraction fan out
// across workers with results assembled in plan order.
inline Dataset build_corpus(const CorpusSpec& spec, std::uint64_t seed, unsigned jobs = 1) {
    spec.validate();
    auto deficits = detail::class_targets(spec);

    Rng plan_rng(mix_seed(seed, 0x706c616eull));
    std::vector<detail::TracePlan> plans;
    std::uint64_t trace_counter = 0;
    auto event_deficit_total = [&] {
        std::size_t t = 0;
        for (std::size_t c = 1; c <= 6; ++c) t += deficits[c];
        return t;
    };
    while (event_deficit_total() > 0 || deficits[0] > 0) {
        detail::TracePlan plan;
        // most-deficient event classes first
        for (int k = 0; k < spec.events_per_link; ++k) {
            std::size_t best = 0, best_deficit = 0;
            for (std::size_t c = 1; c <= 6; ++c)
                if (deficits[c] > best_deficit) {
                    best = c;
                    best_deficit = deficits[c];
                }
            if (best == 0) break;
            plan.causes.push_back(static_cast<int>(best));
            deficits[best]--;
        }
        if (plan.causes.empty()) {
            plan.no_event_windows = static_cast<int>(std::min<std::size_t>(3, deficits[0]));
        } else if (deficits[0] > 0) {
            plan.no_event_windows = 1;
        }
        deficits[0] -= static_cast<std::size_t>(plan.no_event_windows);
        // cause order within the link is irrelevant to placement; shuffle for variety
        for (std::size_t i = plan.causes.size(); i > 1; --i)
            std::swap(plan.causes[i - 1], plan.causes[plan_rng.uniform_int(i)]);
        plan.target_snr_db = spec.snr_db.draw(plan_rng);
        plan.link_seed = mix_seed(seed, trace_counter * 4 + 1);
        plan.noise_seed = mix_seed(seed, trace_counter * 4 + 2);
        plan.extract_seed = mix_seed(seed, trace_counter * 4 + 3);
        ++trace_counter;
        plans.push_back(std::move(plan));
        if (plans.size() > spec.sample_count + 16)
            throw config_error("build_corpus: planning failed to converge");
    }

    std::vector<std::vector<SequenceSample>> results(plans.size());
    std::vector<TraceRecipe> recipes(plans.size());
    parallel_for(plans.size(), jobs, [&](std::size_t i) {
        const auto& plan = plans[i];
        ExtractionPolicy policy;
        policy.windows_per_event = 1;
        policy.no_event_windows = plan.no_event_windows;
        policy.normalization = spec.normalization;
        const auto link = sim::make_link_with_causes(spec.link_spec, plan.causes, spec.config, plan.link_seed);
        auto trace = sim::ideal_trace(link, spec.config);
        trace = sim::add_noise(trace, plan.target_snr_db, spec.config.shots_to_average, plan.noise_seed);
        results[i] = extract_windows(trace, policy, plan.extract_seed, i);
        recipes[i] = TraceRecipe{i, link, plan.target_snr_db, plan.noise_seed, plan.extract_seed, policy};
    });

    Dataset ds;
    ds.spec = spec;
    ds.creation_seed = seed;
    ds.recipes = std::move(recipes);
    for (auto& r : results)
        for (auto& s : r) ds.samples.push_back(std::move(s));
    if (ds.samples.size() != spec.sample_count)
        throw config_error("build_corpus: produced " + std::to_string(ds.samples.size()) + " samples, expected " +
                           std::to_string(spec.sample_count));

    // stratified split: group by (cause, SNR bucket), shuffle within cells,
    // then stream through a global quota so overall ratios stay within one
    // sample of the declared fractions
    const std::size_t n = ds.samples.size();
    std::vector<std::vector<std::size_t>> cells(static_cast<std::size_t>(7 * spec.snr_buckets));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = ds.samples[i];
        const auto cell = static_cast<std::size_t>(s.cause_class * spec.snr_buckets + spec.snr_bucket(s.snr_db));
        cells[cell].push_back(i);
    }
    Rng split_rng(mix_seed(seed, 0x73706c69ull));
    ds.split.assign(n, Split::Train);
    const std::array<double, 3> fracs{spec.train_frac, spec.val_frac, spec.test_frac};
    std::array<double, 3> assigned{0, 0, 0};
    std::size_t seen = 0;
    for (auto& cell : cells) {
        for (std::size_t i = cell.size(); i > 1; --i) std::swap(cell[i - 1], cell[split_rng.uniform_int(i)]);
        for (std::size_t idx : cell) {
            ++seen;
            int best = 0;
            double best_deficit = -1e300;
            for (int k = 0; k < 3; ++k) {
                const double deficit = fracs[static_cast<std::size_t>(k)] * static_cast<double>(seen) -
                                       assigned[static_cast<std::size_t>(k)];
                if (deficit > best_deficit) {
                    best_deficit = deficit;
                    best = k;
                }
            }
            ds.split[idx] = best == 0 ? Split::Train : (best == 1 ? Split::Val : Split::Test);
            assigned[static_cast<std::size_t>(best)] += 1.0;
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// persistence: <name>.manifest.json + <name>.samples.csv

inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr const char* kSamplesCsvHeader =
    "v0,v1,v2,v3,v4,v5,v6,v7,v8,v9,v10,v11,v12,v13,v14,v15,v16,v17,v18,v19,v20,v21,v22,v23,v24,v25,v26,v27,v28,"
    "v29,v30,v31,v32,v33,v34,v35,v36,v37,v38,v39,v40,v41,v42,v43,v44,v45,v46,v47,v48,v49,has_event,event_kind,"
    "position_index,loss_db,reflectance_db,cause_class,snr_db,trace_id,window_start";

inline std::string samples_csv(const Dataset& ds) {
    std::string out(kSamplesCsvHeader);
    out += '\n';
    for (const auto& s : ds.samples) {
        for (const auto v : s.values) {
            out += fmt_g9(v);
            out += ',';
        }
        out += s.has_event ? '1' : '0';
        out += ',';
        out += to_string(s.event_kind);
        out += ',';
        if (s.position_index) out += std::to_string(*s.position_index);
        out += ',';
        if (s.loss_db) out += fmt_g9(*s.loss_db);
        out += ',';
        if (s.reflectance_db) out += fmt_g9(*s.reflectance_db);
        out += ',';
        out += std::to_string(s.cause_class);
        out += ',';
        out += fmt_g9(s.snr_db);
        out += ',';
        out += std::to_string(s.trace_id);
        out += ',';
        out += std::to_string(s.window_start);
        out += '\n';
    }
    return out;
}

inline nlohmann::json dataset_manifest(const Dataset& ds, const std::string& samples_hash) {
    std::string split;
    split.reserve(ds.split.size());
    for (Split s : ds.split) split.push_back(split_char(s));
    return nlohmann::json{{"schema_version", kDatasetSchemaVersion},
                          {"creation_seed", ds.creation_seed},
                          {"spec", ds.spec},
                          {"spec_hash", hash_hex(fnv1a64(nlohmann::json(ds.spec).dump()))},
                          {"sample_count", ds.samples.size()},
                          {"class_histogram", ds.class_histogram()},
                          {"snr_histogram", ds.snr_histogram()},
                          {"split", split},
                          {"samples_hash", samples_hash},
                          {"trace_recipes", ds.recipes}};
}

// Writes <base>.manifest.json and <base>.samples.csv atomically.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& base) {
    const std::string csv = samples_csv(ds);
    const std::string hash = hash_hex(fnv1a64(csv));
    write_file_atomic(base.string() + ".samples.csv", csv);
    write_file_atomic(base.string() + ".manifest.json", dataset_manifest(ds, hash).dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& base) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(base.string() + ".manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw data_error("load_dataset: bad manifest: " + std::string(e.what()));
    }
    if (manifest.value("schema_version", -1) != kDatasetSchemaVersion)
        throw data_error("load_dataset: unsupported schema version");

    const std::string csv = read_file(base.string() + ".samples.csv");
    if (hash_hex(fnv1a64(csv)) != manifest.at("samples_hash").get<std::string>())
        throw data_error("load_dataset: samples file hash mismatch (corrupted or truncated)");

    Dataset ds;
    try {
        ds.spec = manifest.at("spec").get<CorpusSpec>();
        ds.creation_seed = manifest.at("creation_seed").get<std::uint64_t>();
        ds.recipes = manifest.at("trace_recipes").get<std::vector<TraceRecipe>>();
        const auto split_str = manifest.at("split").get<std::string>();
        ds.split.reserve(split_str.size());
        for (char c : split_str) ds.split.push_back(split_from_char(c));
    } catch (const nlohmann::json::exception& e) {
        throw data_error("load_dataset: manifest field error: " + std::string(e.what()));
    }

    std::size_t pos = csv.find('\n');
    if (pos == std::string::npos || csv.substr(0, pos) != kSamplesCsvHeader)
        throw data_error("load_dataset: unexpected samples CSV header");
    ++pos;
    while (pos < csv.size()) {
        std::size_t end = csv.find('\n', pos);
        if (end == std::string::npos) end = csv.size();
        const std::string line = csv.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 59) throw data_error("load_dataset: bad sample row field count");
        SequenceSample s;
        for (int i = 0; i < kWindowLength; ++i) s.values[static_cast<std::size_t>(i)] = std::stod(f[static_cast<std::size_t>(i)]);
        s.has_event = f[50] == "1";
        s.event_kind = window_kind_from_string(f[51]);
        if (!f[52].empty()) s.position_index = std::stoi(f[52]);
        if (!f[53].empty()) s.loss_db = std::stod(f[53]);
        if (!f[54].empty()) s.reflectance_db = std::stod(f[54]);
        s.cause_class = std::stoi(f[55]);
        s.snr_db = std::stod(f[56]);
        s.trace_id = std::stoull(f[57]);
        s.window_start = std::stoull(f[58]);
        s.validate();
        ds.samples.push_back(std::move(s));
    }
    if (manifest.at("sample_count").get<std::size_t>() != ds.samples.size() ||
        ds.split.size() != ds.samples.size())
        throw data_error("load_dataset: sample count mismatch");
    return ds;
}

// Bit-exact reconstruction of one corpus trace from its recipe.
inline sim::OtdrTrace regenerate_trace(const CorpusSpec& spec, const TraceRecipe& recipe) {
    auto trace = sim::ideal_trace(recipe.link, spec.config);
    return sim::add_noise(trace, recipe.target_snr_db, spec.config.shots_to_average, recipe.noise_seed);
}

}  // namespace otdrmtl::data
