#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcscast/channelsim.hpp"
#include "mcscast/evalsim.hpp"
#include "mcscast/features.hpp"
#include "mcscast/ingest.hpp"
#include "mcscast/labels.hpp"
#include "mcscast/model.hpp"
#include "mcscast/training.hpp"

namespace mcscast {

struct DatasetBuildConfig {
    std::int64_t anchor_stride = 16;
    double train_frac = 0.70;
    double val_frac = 0.15;
    std::int64_t max_gap = 16;
    int trend_window = kTrendWindowSlots;
    std::vector<int> allowed_pcis;  // empty admits every PCI
};

struct EvalConfig {
    double threshold = 0.9;                // proposed / MSE-T success threshold
    double deterministic_threshold = 0.5;  // most-likely-outcome baseline
    int bench_iters = 1000;
};

/// Full run description. One file drives every stage; per-stage RNG streams
/// are derived from the single global seed.
struct RunConfig {
    std::uint64_t seed = 1;
    int n_traces = 4;
    std::string out_dir = "runs/default";
    ChannelSimConfig channelsim;
    HorizonSpec horizon;
    DatasetBuildConfig dataset;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;

    void validate() const {
        if (n_traces < 1) throw std::invalid_argument("config: n_traces must be >= 1");
        if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be set");
        channelsim.validate();
        horizon.validate();
        model.validate();
        train.validate();
        if (dataset.anchor_stride < 1) throw std::invalid_argument("config: anchor_stride >= 1");
    }
};

using nlohmann::json;

inline json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["n_traces"] = c.n_traces;
    j["out_dir"] = c.out_dir;
    j["channelsim"] = {{"duration_s", c.channelsim.duration_s},
                       {"sinr_mean_db", c.channelsim.sinr_mean_db},
                       {"sinr_shadow_std_db", c.channelsim.sinr_shadow_std_db},
                       {"coherence_ms", c.channelsim.coherence_ms},
                       {"mobility_events_per_min", c.channelsim.mobility_events_per_min},
                       {"olla_target_bler", c.channelsim.olla_target_bler},
                       {"report_period_cqi_ms", c.channelsim.report_period_cqi_ms},
                       {"report_period_sinr_ms", c.channelsim.report_period_sinr_ms},
                       {"report_period_rsrp_ms", c.channelsim.report_period_rsrp_ms},
                       {"sinr_noise_std_db", c.channelsim.sinr_noise_std_db}};
    j["horizon"] = {{"delay_dl_slots", c.horizon.delay_dl_slots},
                    {"gop_dl_slots", c.horizon.gop_dl_slots}};
    j["dataset"] = {{"anchor_stride", c.dataset.anchor_stride},
                    {"train_frac", c.dataset.train_frac},
                    {"val_frac", c.dataset.val_frac},
                    {"max_gap", c.dataset.max_gap},
                    {"trend_window", c.dataset.trend_window},
                    {"allowed_pcis", c.dataset.allowed_pcis}};
    j["model"] = {{"seq_len", c.model.seq_len},
                  {"in_features", c.model.in_features},
                  {"d_model", c.model.d_model},
                  {"n_layers", c.model.n_layers},
                  {"n_heads", c.model.n_heads},
                  {"d_ff", c.model.d_ff},
                  {"out_dim", c.model.out_dim},
                  {"decoder_hidden", c.model.decoder_hidden}};
    j["train"] = {{"loss", to_string(c.train.loss)},
                  {"lambda", c.train.lambda},
                  {"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"peak_lr", c.train.peak_lr},
                  {"warmup_fraction", c.train.warmup_fraction},
                  {"weight_decay", c.train.weight_decay},
                  {"div_start", c.train.div_start},
                  {"div_final", c.train.div_final},
                  {"n_threads", c.train.n_threads}};
    j["eval"] = {{"threshold", c.eval.threshold},
                 {"deterministic_threshold", c.eval.deterministic_threshold},
                 {"bench_iters", c.eval.bench_iters}};
    return j;
}

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.n_traces = j.value("n_traces", c.n_traces);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("channelsim")) {
        const auto& s = j.at("channelsim");
        c.channelsim.duration_s = s.value("duration_s", c.channelsim.duration_s);
        c.channelsim.sinr_mean_db = s.value("sinr_mean_db", c.channelsim.sinr_mean_db);
        c.channelsim.sinr_shadow_std_db =
            s.value("sinr_shadow_std_db", c.channelsim.sinr_shadow_std_db);
        c.channelsim.coherence_ms = s.value("coherence_ms", c.channelsim.coherence_ms);
        c.channelsim.mobility_events_per_min =
            s.value("mobility_events_per_min", c.channelsim.mobility_events_per_min);
        c.channelsim.olla_target_bler = s.value("olla_target_bler", c.channelsim.olla_target_bler);
        c.channelsim.report_period_cqi_ms =
            s.value("report_period_cqi_ms", c.channelsim.report_period_cqi_ms);
        c.channelsim.report_period_sinr_ms =
            s.value("report_period_sinr_ms", c.channelsim.report_period_sinr_ms);
        c.channelsim.report_period_rsrp_ms =
            s.value("report_period_rsrp_ms", c.channelsim.report_period_rsrp_ms);
        c.channelsim.sinr_noise_std_db =
            s.value("sinr_noise_std_db", c.channelsim.sinr_noise_std_db);
    }
    if (j.contains("horizon")) {
        const auto& s = j.at("horizon");
        c.horizon.delay_dl_slots = s.value("delay_dl_slots", c.horizon.delay_dl_slots);
        c.horizon.gop_dl_slots = s.value("gop_dl_slots", c.horizon.gop_dl_slots);
    }
    if (j.contains("dataset")) {
        const auto& s = j.at("dataset");
        c.dataset.anchor_stride = s.value("anchor_stride", c.dataset.anchor_stride);
        c.dataset.train_frac = s.value("train_frac", c.dataset.train_frac);
        c.dataset.val_frac = s.value("val_frac", c.dataset.val_frac);
        c.dataset.max_gap = s.value("max_gap", c.dataset.max_gap);
        c.dataset.trend_window = s.value("trend_window", c.dataset.trend_window);
        c.dataset.allowed_pcis = s.value("allowed_pcis", c.dataset.allowed_pcis);
    }
    if (j.contains("model")) {
        const auto& s = j.at("model");
        c.model.seq_len = s.value("seq_len", c.model.seq_len);
        c.model.in_features = s.value("in_features", c.model.in_features);
        c.model.d_model = s.value("d_model", c.model.d_model);
        c.model.n_layers = s.value("n_layers", c.model.n_layers);
        c.model.n_heads = s.value("n_heads", c.model.n_heads);
        c.model.d_ff = s.value("d_ff", c.model.d_ff);
        c.model.out_dim = s.value("out_dim", c.model.out_dim);
        c.model.decoder_hidden = s.value("decoder_hidden", c.model.decoder_hidden);
    }
    if (j.contains("train")) {
        const auto& s = j.at("train");
        const std::string loss = s.value("loss", std::string(to_string(c.train.loss)));
        if (loss == "asl") c.train.loss = LossKind::asl;
        else if (loss == "mse") c.train.loss = LossKind::mse;
        else throw std::invalid_argument("config: train.loss must be 'asl' or 'mse'");
        c.train.lambda = s.value("lambda", c.train.lambda);
        c.train.batch_size = s.value("batch_size", c.train.batch_size);
        c.train.epochs = s.value("epochs", c.train.epochs);
        c.train.peak_lr = s.value("peak_lr", c.train.peak_lr);
        c.train.warmup_fraction = s.value("warmup_fraction", c.train.warmup_fraction);
        c.train.weight_decay = s.value("weight_decay", c.train.weight_decay);
        c.train.div_start = s.value("div_start", c.train.div_start);
        c.train.div_final = s.value("div_final", c.train.div_final);
        c.train.n_threads = s.value("n_threads", c.train.n_threads);
    }
    if (j.contains("eval")) {
        const auto& s = j.at("eval");
        c.eval.threshold = s.value("threshold", c.eval.threshold);
        c.eval.deterministic_threshold =
            s.value("deterministic_threshold", c.eval.deterministic_threshold);
        c.eval.bench_iters = s.value("bench_iters", c.eval.bench_iters);
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open config file: " + path);
    json j;
    in >> j;
    return run_config_from_json(j);
}

/// FNV-1a over the canonical serialized form, excluding the output location:
/// two runs with the same parameters carry the same fingerprint wherever
/// their artifacts land.
inline std::uint64_t config_fingerprint(const RunConfig& c) {
    json j = to_json(c);
    j.erase("out_dir");
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fingerprint_hex(const RunConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_fingerprint(c)));
    return buf;
}

namespace paths {

namespace fs = std::filesystem;

inline std::string trace_csv(const RunConfig& c, int i) {
    char name[32];
    std::snprintf(name, sizeof name, "trace_%03d.csv", i);
    return (fs::path(c.out_dir) / "traces" / name).string();
}
inline std::string slots_csv(const RunConfig& c, int i) {
    char name[32];
    std::snprintf(name, sizeof name, "slots_%03d.csv", i);
    return (fs::path(c.out_dir) / "slots" / name).string();
}
inline std::string dataset_bin(const RunConfig& c, const std::string& split) {
    return (fs::path(c.out_dir) / "dataset" / (split + ".bin")).string();
}
inline std::string normalizer_txt(const RunConfig& c) {
    return (fs::path(c.out_dir) / "dataset" / "normalizer.txt").string();
}
inline std::string checkpoint(const RunConfig& c, LossKind k) {
    return (fs::path(c.out_dir) / "checkpoints" / (std::string("model_") + to_string(k) + ".ckpt"))
        .string();
}
inline std::string training_log(const RunConfig& c, LossKind k) {
    return (fs::path(c.out_dir) / "checkpoints" /
            (std::string("training_log_") + to_string(k) + ".csv"))
        .string();
}
inline std::string report_csv(const RunConfig& c) {
    return (fs::path(c.out_dir) / "eval" / "report.csv").string();
}
inline std::string report_txt(const RunConfig& c) {
    return (fs::path(c.out_dir) / "eval" / "report.txt").string();
}
inline std::string decisions_csv(const RunConfig& c, const std::string& policy) {
    return (fs::path(c.out_dir) / "eval" / ("decisions_" + policy + ".csv")).string();
}
inline std::string bench_csv(const RunConfig& c) {
    return (fs::path(c.out_dir) / "bench" / "bench.csv").string();
}
inline std::string loss_curve_svg(const RunConfig& c) {
    return (fs::path(c.out_dir) / "report" / "loss_curve.svg").string();
}
inline std::string metrics_svg(const RunConfig& c) {
    return (fs::path(c.out_dir) / "report" / "metrics.svg").string();
}
inline std::string summary_txt(const RunConfig& c) {
    return (fs::path(c.out_dir) / "report" / "summary.txt").string();
}

inline void ensure_dir_for(const std::string& file) {
    fs::create_directories(fs::path(file).parent_path());
}

}  // namespace paths

namespace detail {

inline void require_artifact(const std::string& path, const std::string& producing_cmd) {
    if (!std::filesystem::exists(path)) {
        throw MissingArtifactError("missing artifact " + path + "; run `mcscast " + producing_cmd +
                                   "` first");
    }
}

inline std::uint64_t trace_seed(const RunConfig& cfg, int trace_idx) {
    return mix_seed(cfg.seed, 0x7261ceULL + static_cast<std::uint64_t>(trace_idx));
}

/// Ingest-to-features for one persisted slot table.
inline FeatureTable load_features(const RunConfig& cfg, int trace_idx) {
    const std::string path = paths::slots_csv(cfg, trace_idx);
    require_artifact(path, "preprocess");
    return compute_features(read_slot_csv(path), cfg.dataset.trend_window);
}

inline FeatureTable slice_features(const FeatureTable& ft, std::size_t begin, std::size_t end) {
    FeatureTable out;
    out.slots.assign(ft.slots.begin() + static_cast<std::ptrdiff_t>(begin),
                     ft.slots.begin() + static_cast<std::ptrdiff_t>(end));
    auto copy = [&](const std::vector<double>& src, std::vector<double>& dst) {
        dst.assign(src.begin() + static_cast<std::ptrdiff_t>(begin),
                   src.begin() + static_cast<std::ptrdiff_t>(end));
    };
    copy(ft.consecutive_nacks, out.consecutive_nacks);
    copy(ft.time_since_last_nack, out.time_since_last_nack);
    copy(ft.mcs_trend, out.mcs_trend);
    copy(ft.cqi_trend, out.cqi_trend);
    return out;
}

}  // namespace detail

/// Synthesizes and persists the trace corpus; prints slot counts, empirical
/// BLER and the MCS histogram per trace.
inline void cmd_generate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const std::string fp = fingerprint_hex(cfg);
    for (int i = 0; i < cfg.n_traces; ++i) {
        ChannelSimConfig chan = cfg.channelsim;
        chan.seed = detail::trace_seed(cfg, i);
        const RawTelemetryLog trace = generate_trace(chan);
        const std::string path = paths::trace_csv(cfg, i);
        paths::ensure_dir_for(path);
        write_trace_csv(trace, path, "mcscast trace fingerprint=" + fp);

        std::int64_t slots = 0, fails = 0;
        std::array<std::int64_t, kMcsCount> histogram{};
        for (const auto& e : trace.entries) {
            if (const auto* p = std::get_if<PdschStatus>(&e.payload)) {
                ++slots;
                if (!p->crc_pass) ++fails;
                if (p->mcs < kMcsCount) ++histogram[static_cast<std::size_t>(p->mcs)];
            }
        }
        log << "trace " << i << ": " << slots << " downlink slots, empirical BLER "
            << csv::format_double(slots > 0 ? static_cast<double>(fails) / slots : 0.0) << "\n";
        log << "  mcs histogram:";
        for (int m = 0; m < kMcsCount; ++m) {
            if (histogram[static_cast<std::size_t>(m)] > 0) {
                log << ' ' << m << ':' << histogram[static_cast<std::size_t>(m)];
            }
        }
        log << "\n";
    }
}

/// Aligns, filters, engineers features, fits the normalizer on the training
/// regions, and materializes the three sample files.
inline void cmd_preprocess(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const std::string fp = fingerprint_hex(cfg);
    const std::set<int> allowed(cfg.dataset.allowed_pcis.begin(), cfg.dataset.allowed_pcis.end());

    std::vector<FeatureTable> tables;
    Normalizer::Accumulator norm_acc;
    for (int i = 0; i < cfg.n_traces; ++i) {
        const std::string trace_path = paths::trace_csv(cfg, i);
        detail::require_artifact(trace_path, "generate");
        const RawTelemetryLog trace = read_trace_csv(trace_path);
        const SlotTable filtered = filter_slots(align_locf(trace), allowed);
        if (filtered.rows.empty()) throw EmptyInputError("preprocess: trace " + std::to_string(i) +
                                                         " has no usable slots");
        const std::string slots_path = paths::slots_csv(cfg, i);
        paths::ensure_dir_for(slots_path);
        write_slot_csv(filtered, slots_path, "mcscast slots fingerprint=" + fp);
        tables.push_back(compute_features(filtered, cfg.dataset.trend_window));
        const SplitBounds b = split_bounds(tables.back().size(), cfg.dataset.train_frac,
                                           cfg.dataset.val_frac);
        norm_acc.add(tables.back(), 0, b.train_end);
    }
    const Normalizer norm = norm_acc.finalize();
    paths::ensure_dir_for(paths::normalizer_txt(cfg));
    norm.save(paths::normalizer_txt(cfg));

    const std::uint64_t fingerprint = config_fingerprint(cfg);
    const std::int64_t leakage_gap = cfg.horizon.delay_dl_slots + cfg.horizon.gop_dl_slots;
    Dataset train_ds{fingerprint, {}}, val_ds{fingerprint, {}}, test_ds{fingerprint, {}};
    for (int i = 0; i < cfg.n_traces; ++i) {
        const FeatureTable& ft = tables[static_cast<std::size_t>(i)];
        const SplitBounds b = split_bounds(ft.size(), cfg.dataset.train_frac, cfg.dataset.val_frac);
        auto append = [&](Dataset& ds, std::size_t lo, std::size_t hi) {
            auto samples =
                build_split_samples(ft, lo, hi, cfg.horizon, leakage_gap, cfg.dataset.anchor_stride,
                                    cfg.dataset.max_gap, static_cast<std::uint32_t>(i));
            ds.samples.insert(ds.samples.end(), samples.begin(), samples.end());
        };
        append(train_ds, 0, b.train_end);
        append(val_ds, b.train_end, b.val_end);
        append(test_ds, b.val_end, ft.size());
    }
    if (train_ds.samples.empty() || val_ds.samples.empty()) {
        throw EmptyInputError("preprocess: traces too short to produce train/val samples");
    }
    paths::ensure_dir_for(paths::dataset_bin(cfg, "train"));
    save_dataset(train_ds, paths::dataset_bin(cfg, "train"));
    save_dataset(val_ds, paths::dataset_bin(cfg, "val"));
    save_dataset(test_ds, paths::dataset_bin(cfg, "test"));
    log << "samples: train " << train_ds.samples.size() << ", val " << val_ds.samples.size()
        << ", test " << test_ds.samples.size() << "\n";
}

/// Trains the configured loss; when that is the asymmetric loss, also trains
/// the MSE twin from the same seed for the baseline policies.
inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    detail::require_artifact(paths::dataset_bin(cfg, "train"), "preprocess");
    detail::require_artifact(paths::dataset_bin(cfg, "val"), "preprocess");
    detail::require_artifact(paths::normalizer_txt(cfg), "preprocess");
    const Dataset train_ds = load_dataset(paths::dataset_bin(cfg, "train"));
    const Dataset val_ds = load_dataset(paths::dataset_bin(cfg, "val"));
    const Normalizer norm = Normalizer::load(paths::normalizer_txt(cfg));
    const std::uint64_t fingerprint = config_fingerprint(cfg);
    const std::string fp = fingerprint_hex(cfg);

    std::vector<LossKind> kinds = {cfg.train.loss};
    if (cfg.train.loss == LossKind::asl) kinds.push_back(LossKind::mse);
    for (LossKind kind : kinds) {
        TrainConfig tc = cfg.train;
        tc.loss = kind;
        tc.seed = mix_seed(cfg.seed, 0x7ea1ULL);  // twins share the seed by construction
        const TrainResult res = train(train_ds, val_ds, norm, cfg.model, tc);
        paths::ensure_dir_for(paths::checkpoint(cfg, kind));
        save_checkpoint(res.best_params, paths::checkpoint(cfg, kind), fingerprint);
        write_training_log_csv(res.log, paths::training_log(cfg, kind),
                               std::string("mcscast training loss=") + to_string(kind) +
                                   " fingerprint=" + fp);
        log << "trained " << to_string(kind) << ": best val loss "
            << csv::format_double(res.best_val_loss) << " at epoch " << res.best_epoch << " ("
            << res.total_steps << " steps)\n";
    }
}

/// Replays the held-out test regions of every trace through the five policies
/// and writes the combined four-metric report.
inline EvalReport cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    detail::require_artifact(paths::checkpoint(cfg, LossKind::asl), "train");
    detail::require_artifact(paths::checkpoint(cfg, LossKind::mse), "train");
    detail::require_artifact(paths::normalizer_txt(cfg), "preprocess");
    const ModelParams asl_model = load_checkpoint(paths::checkpoint(cfg, LossKind::asl));
    const ModelParams mse_model = load_checkpoint(paths::checkpoint(cfg, LossKind::mse));
    const Normalizer norm = Normalizer::load(paths::normalizer_txt(cfg));

    const std::vector<Policy> policies = {
        Policy::proposed(asl_model, norm, cfg.eval.threshold),
        Policy::lra(norm),
        Policy::maw(norm),
        Policy::deterministic(mse_model, norm, cfg.eval.deterministic_threshold),
        Policy::mse_t(mse_model, norm, cfg.eval.threshold),
    };

    std::vector<std::vector<GopDecision>> combined(policies.size());
    std::vector<int> decision_trace;  // trace id per GOP row, for the decisions files
    std::int64_t outage_total = 0;
    for (int i = 0; i < cfg.n_traces; ++i) {
        const FeatureTable ft = detail::load_features(cfg, i);
        const SplitBounds b = split_bounds(ft.size(), cfg.dataset.train_frac, cfg.dataset.val_frac);
        const FeatureTable test_region = detail::slice_features(ft, b.val_end, ft.size());
        SimResult sim;
        try {
            sim = run_simulation(test_region, policies, cfg.horizon, cfg.eval.threshold,
                                 cfg.dataset.max_gap);
        } catch (const TraceTooShortError&) {
            log << "trace " << i << ": test region too short for a GOP, skipped\n";
            continue;
        }
        outage_total += sim.n_outage_gops;
        for (std::size_t p = 0; p < policies.size(); ++p) {
            const auto& decs = sim.decisions[p].second;
            combined[p].insert(combined[p].end(), decs.begin(), decs.end());
        }
        for (std::int64_t g = 0; g < sim.n_gops_total; ++g) decision_trace.push_back(i);
    }
    if (combined.empty() || combined[0].empty()) {
        throw TraceTooShortError("evaluate: no GOP was long enough to score");
    }

    const std::string fp = fingerprint_hex(cfg);
    EvalReport report;
    for (std::size_t p = 0; p < policies.size(); ++p) {
        report.rows.emplace_back(policy_name(policies[p].kind), compute_metrics(combined[p]));
        const std::string dec_path = paths::decisions_csv(cfg, policy_name(policies[p].kind));
        paths::ensure_dir_for(dec_path);
        std::ofstream out(dec_path, std::ios::binary);
        out << "# mcscast decisions fingerprint=" << fp << "\n";
        out << "trace,gop_index,decision_anchor,selected_mcs,gt_mcs\n";
        for (std::size_t g = 0; g < combined[p].size(); ++g) {
            const auto& d = combined[p][g];
            out << decision_trace[g] << ',' << d.gop_index << ',' << d.decision_anchor << ','
                << d.selected_mcs << ',' << d.gt_mcs << '\n';
        }
    }
    paths::ensure_dir_for(paths::report_csv(cfg));
    write_report_csv(report, paths::report_csv(cfg), "mcscast eval fingerprint=" + fp);
    std::ofstream txt(paths::report_txt(cfg), std::ios::binary);
    txt << format_report_table(report);
    log << format_report_table(report);
    log << "outage GOPs excluded: " << outage_total << "\n";
    return report;
}

inline BenchResult cmd_bench(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    detail::require_artifact(paths::checkpoint(cfg, LossKind::asl), "train");
    const ModelParams model = load_checkpoint(paths::checkpoint(cfg, LossKind::asl));
    const BenchResult r = bench_inference(model, cfg.eval.bench_iters, mix_seed(cfg.seed, 0xbeULL));
    paths::ensure_dir_for(paths::bench_csv(cfg));
    std::ofstream out(paths::bench_csv(cfg), std::ios::binary);
    out << "# mcscast bench fingerprint=" << fingerprint_hex(cfg) << "\n";
    out << "n_iters,mean_ms,sd_ms,pct_of_tti\n";
    out << r.n_iters << ',' << csv::format_double(r.mean_ms) << ',' << csv::format_double(r.sd_ms)
        << ',' << csv::format_double(r.pct_of_tti) << '\n';
    log << "inference: mean " << csv::format_double(r.mean_ms) << " ms, sd "
        << csv::format_double(r.sd_ms) << " ms, " << csv::format_double(r.pct_of_tti)
        << "% of one 0.5 ms slot (" << r.n_iters << " iters)\n";
    return r;
}

namespace detail {

/// Minimal SVG line chart; one polyline per series.
inline void write_svg_lines(const std::string& path, const std::string& title,
                            const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    constexpr int kW = 760, kH = 420, kMargin = 50;
    double lo = 1e300, hi = -1e300;
    for (const auto& [name, ys] : series) {
        for (double y : ys) {
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    }
    if (hi <= lo) hi = lo + 1.0;
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write svg: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
        << "</text>\n";
    out << "<line x1='" << kMargin << "' y1='" << kH - kMargin << "' x2='" << kW - kMargin
        << "' y2='" << kH - kMargin << "' stroke='black'/>\n";
    out << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin << "' y2='"
        << kH - kMargin << "' stroke='black'/>\n";
    out << "<text x='" << kMargin << "' y='" << kMargin - 8 << "' font-size='11'>"
        << csv::format_double(hi) << "</text>\n";
    out << "<text x='" << kMargin << "' y='" << kH - kMargin + 14 << "' font-size='11'>"
        << csv::format_double(lo) << "</text>\n";
    int color = 0;
    int legend_y = kMargin;
    for (const auto& [name, ys] : series) {
        if (ys.empty()) continue;
        out << "<polyline fill='none' stroke='" << kColors[color % 4] << "' points='";
        for (std::size_t i = 0; i < ys.size(); ++i) {
            // each series spans the full width on its own progress axis
            const double frac = ys.size() > 1 ? static_cast<double>(i) / (ys.size() - 1) : 0.0;
            const double x = kMargin + (kW - 2.0 * kMargin) * frac;
            const double y = kH - kMargin - (kH - 2.0 * kMargin) * (ys[i] - lo) / (hi - lo);
            out << csv::format_double(x) << ',' << csv::format_double(y) << ' ';
        }
        out << "'/>\n";
        out << "<text x='" << kW - kMargin - 120 << "' y='" << legend_y << "' font-size='12' fill='"
            << kColors[color % 4] << "'>" << name << "</text>\n";
        legend_y += 16;
        ++color;
    }
    out << "</svg>\n";
}

/// Grouped bar chart: one panel per metric, one bar per policy.
inline void write_svg_metric_bars(const std::string& path, const EvalReport& report) {
    constexpr int kPanelW = 230, kPanelH = 240, kCols = 2, kPad = 46;
    const char* metric_names[4] = {"RMSE", "Reliability %", "Avg Bias", "MAE"};
    const int kW = kCols * (kPanelW + kPad) + kPad;
    const int kH = 2 * (kPanelH + kPad) + kPad;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write svg: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    for (int m = 0; m < 4; ++m) {
        const int px = kPad + (m % kCols) * (kPanelW + kPad);
        const int py = kPad + (m / kCols) * (kPanelH + kPad);
        double lo = 0.0, hi = 0.0;
        std::vector<double> values;
        for (const auto& [name, r] : report.rows) {
            const double v = m == 0 ? r.rmse : m == 1 ? r.reliability_pct : m == 2 ? r.avg_bias : r.mae;
            values.push_back(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi <= lo) hi = lo + 1.0;
        out << "<text x='" << px + kPanelW / 2 << "' y='" << py - 8
            << "' text-anchor='middle' font-size='13'>" << metric_names[m] << "</text>\n";
        const double zero_y = py + kPanelH * (hi / (hi - lo));
        out << "<line x1='" << px << "' y1='" << zero_y << "' x2='" << px + kPanelW << "' y2='"
            << zero_y << "' stroke='black'/>\n";
        const double bar_w = static_cast<double>(kPanelW) / values.size() * 0.7;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double cx = px + (i + 0.5) * kPanelW / values.size();
            const double vy = py + kPanelH * ((hi - values[i]) / (hi - lo));
            const double top = std::min(vy, zero_y);
            const double height = std::abs(vy - zero_y);
            out << "<rect x='" << cx - bar_w / 2 << "' y='" << top << "' width='" << bar_w
                << "' height='" << height << "' fill='" << (values[i] >= 0 ? "#1f77b4" : "#d62728")
                << "'/>\n";
            out << "<text x='" << cx << "' y='" << py + kPanelH + 14
                << "' text-anchor='middle' font-size='9'>" << report.rows[i].first << "</text>\n";
        }
    }
    out << "</svg>\n";
}

}  // namespace detail

/// Renders the loss curves and the per-policy metric bars from the persisted
/// artifacts, plus a combined text summary.
inline void cmd_report(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    detail::require_artifact(paths::report_csv(cfg), "evaluate");
    detail::require_artifact(paths::training_log(cfg, cfg.train.loss), "train");

    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (LossKind kind : {LossKind::asl, LossKind::mse}) {
        const std::string path = paths::training_log(cfg, kind);
        if (!std::filesystem::exists(path)) continue;
        csv::Reader reader(path);
        std::vector<std::string_view> f;
        std::vector<double> train_losses, val_losses;
        bool header = false;
        while (reader.next_row(f)) {
            if (!header) {
                header = true;
                continue;
            }
            if (f.size() != 6) continue;
            if (f[0] == "step") train_losses.push_back(csv::parse_double(f[4]));
            else if (f[0] == "epoch") val_losses.push_back(csv::parse_double(f[5]));
        }
        series.emplace_back(std::string("train_") + to_string(kind), std::move(train_losses));
        series.emplace_back(std::string("val_") + to_string(kind), std::move(val_losses));
    }
    paths::ensure_dir_for(paths::loss_curve_svg(cfg));
    detail::write_svg_lines(paths::loss_curve_svg(cfg), "training loss per step", series);

    const EvalReport report = read_report_csv(paths::report_csv(cfg));
    detail::write_svg_metric_bars(paths::metrics_svg(cfg), report);

    std::ofstream summary(paths::summary_txt(cfg), std::ios::binary);
    summary << "mcscast run " << fingerprint_hex(cfg) << "\n\n" << format_report_table(report);
    if (std::filesystem::exists(paths::bench_csv(cfg))) {
        csv::Reader reader(paths::bench_csv(cfg));
        std::vector<std::string_view> f;
        bool header = false;
        while (reader.next_row(f)) {
            if (!header) {
                header = true;
                continue;
            }
            if (f.size() == 4) {
                summary << "\ninference: mean " << f[1] << " ms, sd " << f[2] << " ms, " << f[3]
                        << "% of one slot\n";
            }
        }
    }
    log << "report written to " << paths::summary_txt(cfg) << "\n";
}

}  // namespace mcscast
