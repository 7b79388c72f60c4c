#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "attribution.hpp"
#include "convlstm.hpp"
#include "datagen.hpp"
#include "ensemble.hpp"
#include "evalmetrics.hpp"
#include "forecast.hpp"
#include "io.hpp"
#include "pipeline.hpp"

namespace wallcast {

// ---------------------------------------------------------------------------
// Run configuration. One seed determines every downstream artifact.
// ---------------------------------------------------------------------------
struct RunConfig {
    std::uint64_t seed = 42;
    fs::path run_dir = "run";

    // Data generation.
    std::size_t n_per_case = 1000;
    SurrogateConfig surrogate;

    // Model.
    std::vector<std::size_t> channel_plan = {1, 128, 64, 32, 8};
    std::vector<int> resolutions = {3, 6, 10};
    int horizon = 10;
    double dropout_rate = 0.5;

    // Splitting.
    std::array<double, 3> ratios = {0.7, 0.2, 0.1};
    SplitMode split_mode = SplitMode::SequenceLevel;

    // Base-model training.
    TrainConfig train;

    // Meta-learner.
    std::vector<std::size_t> meta_plan = default_meta_plan();
    MetaTrainConfig meta_train;
    std::size_t max_stack_sequences = 256;  // anchors used to build stacking data
    std::size_t max_stack_samples = 0;      // 0 = no cap

    // Evaluation / attribution.
    std::size_t max_eval_sequences = 256;
    std::size_t shap_background = 256;
    std::size_t shap_max_per_step = 0;      // 0 = no cap

    int threads = 1;

    fs::path data_dir() const { return run_dir / "data"; }
    fs::path prep_dir() const { return run_dir / "prep"; }
    fs::path model_dir() const { return run_dir / "models"; }
    fs::path report_dir() const { return run_dir / "report"; }
    fs::path model_file(int t) const {
        return model_dir() / ("model_t" + std::to_string(t) + ".json");
    }
    fs::path meta_file() const { return model_dir() / "meta.json"; }
};

// Desk-scale preset: small surrogate database and channel plan, short
// training; completes on a laptop CPU.
inline void apply_desk_scale(RunConfig& cfg) {
    cfg.n_per_case = 60;
    cfg.channel_plan = {1, 16, 8, 4, 4};
    // Heavy 0.5 dropout is calibrated for the wide full-scale layers; on the
    // narrow desk plan it starves training, so the preset tones it down.
    cfg.dropout_rate = 0.2;
    cfg.train.batch_size = 32;
    cfg.train.max_epochs = 14;
    cfg.train.patience = 5;
    cfg.meta_plan = {3, 64, 64, 32, 1};
    cfg.meta_train.batch_size = 64;
    cfg.meta_train.max_epochs = 60;
    cfg.meta_train.patience = 10;
    cfg.max_stack_sequences = 48;
    cfg.max_stack_samples = 16000;
    cfg.max_eval_sequences = 48;
    cfg.shap_background = 24;
    cfg.shap_max_per_step = 24;
}

inline json config_to_json(const RunConfig& c) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["seed"] = c.seed;
    j["run_dir"] = c.run_dir.string();
    j["n_per_case"] = c.n_per_case;
    j["channel_plan"] = c.channel_plan;
    j["resolutions"] = c.resolutions;
    j["horizon"] = c.horizon;
    j["dropout_rate"] = c.dropout_rate;
    j["ratios"] = c.ratios;
    j["split_mode"] = c.split_mode == SplitMode::SequenceLevel ? "sequence" : "record";
    j["train"] = {{"lr", c.train.lr}, {"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs}, {"patience", c.train.patience}};
    j["meta_plan"] = c.meta_plan;
    j["meta_train"] = {{"lr", c.meta_train.lr}, {"batch_size", c.meta_train.batch_size},
                       {"max_epochs", c.meta_train.max_epochs},
                       {"patience", c.meta_train.patience},
                       {"holdout_fraction", c.meta_train.holdout_fraction}};
    j["max_stack_sequences"] = c.max_stack_sequences;
    j["max_stack_samples"] = c.max_stack_samples;
    j["max_eval_sequences"] = c.max_eval_sequences;
    j["shap_background"] = c.shap_background;
    j["shap_max_per_step"] = c.shap_max_per_step;
    j["threads"] = c.threads;
    return j;
}

inline void config_from_json(const json& j, RunConfig& c) {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("run_dir")) c.run_dir = j["run_dir"].get<std::string>();
    if (j.contains("n_per_case")) c.n_per_case = j["n_per_case"].get<std::size_t>();
    if (j.contains("channel_plan"))
        c.channel_plan = j["channel_plan"].get<std::vector<std::size_t>>();
    if (j.contains("resolutions")) c.resolutions = j["resolutions"].get<std::vector<int>>();
    if (j.contains("horizon")) c.horizon = j["horizon"].get<int>();
    if (j.contains("dropout_rate")) c.dropout_rate = j["dropout_rate"].get<double>();
    if (j.contains("ratios")) c.ratios = j["ratios"].get<std::array<double, 3>>();
    if (j.contains("split_mode"))
        c.split_mode = j["split_mode"] == "record" ? SplitMode::RecordLevel
                                                   : SplitMode::SequenceLevel;
    if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("lr")) c.train.lr = t["lr"].get<double>();
        if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<std::size_t>();
        if (t.contains("max_epochs")) c.train.max_epochs = t["max_epochs"].get<std::size_t>();
        if (t.contains("patience")) c.train.patience = t["patience"].get<std::size_t>();
    }
    if (j.contains("meta_plan"))
        c.meta_plan = j["meta_plan"].get<std::vector<std::size_t>>();
    if (j.contains("meta_train")) {
        const auto& t = j["meta_train"];
        if (t.contains("lr")) c.meta_train.lr = t["lr"].get<double>();
        if (t.contains("batch_size"))
            c.meta_train.batch_size = t["batch_size"].get<std::size_t>();
        if (t.contains("max_epochs"))
            c.meta_train.max_epochs = t["max_epochs"].get<std::size_t>();
        if (t.contains("patience")) c.meta_train.patience = t["patience"].get<std::size_t>();
        if (t.contains("holdout_fraction"))
            c.meta_train.holdout_fraction = t["holdout_fraction"].get<double>();
    }
    if (j.contains("max_stack_sequences"))
        c.max_stack_sequences = j["max_stack_sequences"].get<std::size_t>();
    if (j.contains("max_stack_samples"))
        c.max_stack_samples = j["max_stack_samples"].get<std::size_t>();
    if (j.contains("max_eval_sequences"))
        c.max_eval_sequences = j["max_eval_sequences"].get<std::size_t>();
    if (j.contains("shap_background"))
        c.shap_background = j["shap_background"].get<std::size_t>();
    if (j.contains("shap_max_per_step"))
        c.shap_max_per_step = j["shap_max_per_step"].get<std::size_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
}

// ---------------------------------------------------------------------------
// Evaluation anchors: positions p0 with a full history prefix and `horizon`
// future truths. Drawn from the longest-resolution split so every model
// (t <= 10) sees enough history.
// ---------------------------------------------------------------------------
struct Anchor {
    std::size_t record;
    std::size_t p0; // history = rows [0, p0), truth = rows [p0, p0 + horizon)
};

inline std::vector<Anchor> eligible_anchors(const WindowSet& ws, int horizon) {
    std::vector<Anchor> anchors;
    const std::size_t t = static_cast<std::size_t>(ws.resolution);
    for (const auto& w : ws.windows) {
        const std::size_t p0 = w.start + t;
        const std::size_t phases = (*ws.records)[w.record].phases();
        if (p0 + static_cast<std::size_t>(horizon) <= phases)
            anchors.push_back({w.record, p0});
    }
    return anchors;
}

inline void cap_anchors(std::vector<Anchor>& anchors, std::size_t cap, RngStream rng) {
    if (cap > 0 && anchors.size() > cap) {
        rng.shuffle(anchors);
        anchors.resize(cap);
    }
}

inline Tensor anchor_history(const std::vector<ResampledRecord>& records,
                             const Anchor& a) {
    const Tensor& d = records[a.record].displacement;
    const std::size_t np = d.shape[1];
    Tensor h({a.p0, np});
    std::copy(d.v.begin(), d.v.begin() + a.p0 * np, h.v.begin());
    return h;
}

inline Tensor anchor_truth(const std::vector<ResampledRecord>& records, const Anchor& a,
                           int horizon) {
    const Tensor& d = records[a.record].displacement;
    const std::size_t np = d.shape[1];
    Tensor tr({static_cast<std::size_t>(horizon), np});
    std::copy(d.v.begin() + a.p0 * np,
              d.v.begin() + (a.p0 + static_cast<std::size_t>(horizon)) * np,
              tr.v.begin());
    return tr;
}

// ---------------------------------------------------------------------------
// Pipeline commands. Each is idempotent given identical config and inputs.
// ---------------------------------------------------------------------------
inline std::string model_name(int t) {
    return t == 3 ? "model_a" : t == 6 ? "model_b" : t == 10 ? "model_c"
                                                             : "model_t" + std::to_string(t);
}

inline void cmd_gen(const RunConfig& cfg, std::ostream& log) {
    const auto records = generate_database(cfg.n_per_case, cfg.seed, cfg.surrogate);
    save_database(cfg.data_dir(), records, cfg.seed);
    log << "generated " << records.size() << " records (" << cfg.n_per_case
        << " per case) into " << cfg.data_dir().string() << "\n";
}

inline void cmd_prep(const RunConfig& cfg, std::ostream& log) {
    const auto raw = load_database(cfg.data_dir());
    std::vector<ResampledRecord> records;
    records.reserve(raw.size());
    for (const auto& r : raw) {
        const std::size_t knots = r.displacement.shape[1];
        std::vector<double> depths(knots);
        for (std::size_t j = 0; j < knots; ++j) depths[j] = 0.5 * static_cast<double>(j);
        ResampledRecord rr;
        rr.source_id = r.id;
        rr.wall_length = r.wall_length;
        const std::size_t phases = r.displacement.shape[0];
        rr.displacement = Tensor({phases, 100});
        std::vector<double> row(knots);
        for (std::size_t p = 0; p < phases; ++p) {
            std::copy(r.displacement.v.begin() + p * knots,
                      r.displacement.v.begin() + (p + 1) * knots, row.begin());
            const auto res = spline_resample(depths, row, 100);
            std::copy(res.begin(), res.end(), rr.displacement.v.begin() + p * 100);
        }
        records.push_back(std::move(rr));
    }

    std::vector<std::pair<int, SplitSet>> splits;
    for (int t : cfg.resolutions) {
        WindowSet ws = make_windows(records, t);
        SplitSet sp = split(ws, cfg.ratios, cfg.split_mode, cfg.seed);
        log << "t=" << t << ": N=" << ws.size() << " M=" << ws.target_count()
            << " split " << sp.train.size() << "/" << sp.val.size() << "/"
            << sp.test.size() << "\n";
        splits.emplace_back(t, std::move(sp));
    }
    save_prep(cfg.prep_dir(), records, splits);
}

inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
    LoadedPrep prep;
    load_prep(cfg.prep_dir(), prep);
    fs::create_directories(cfg.model_dir());
    for (const auto& [t, sp] : prep.splits) {
        ConvLstmStackParams model = make_convlstm_stack(
            t, cfg.channel_plan, RngStream(cfg.seed, 0x696e6974 + t), 100,
            cfg.dropout_rate);
        auto train_pairs = supervised_pairs(sp.train);
        auto val_pairs = supervised_pairs(sp.val);
        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed ^ (0x1000ULL * static_cast<std::uint64_t>(t));
        const auto history = train_single_step(model, train_pairs, val_pairs, tc);
        double best_val = history.empty() ? 0.0 : history.front().val_mse;
        for (const auto& h : history) best_val = std::min(best_val, h.val_mse);
        json meta = {{"seed", tc.seed}, {"epochs_run", history.size()},
                     {"best_val_mse", best_val}};
        save_convlstm(cfg.model_file(t), model, meta);
        Tensor hist({history.size(), 3});
        for (std::size_t i = 0; i < history.size(); ++i) {
            hist[i * 3] = static_cast<double>(history[i].epoch);
            hist[i * 3 + 1] = history[i].train_mse;
            hist[i * 3 + 2] = history[i].val_mse;
        }
        write_csv_matrix(cfg.model_dir() / ("loss_t" + std::to_string(t) + ".csv"), hist,
                         "epoch,train_mse,val_mse");
        log << "trained t=" << t << " (" << history.size() << " epochs, best val "
            << best_val << ")\n";
    }
}

inline std::map<std::string, RolloutResult>
run_multi_rollout(const std::map<std::string, ConvLstmStackParams>& models,
                  const Tensor& history, int horizon) {
    std::map<std::string, const ConvLstmStackParams*> ptrs;
    for (const auto& [id, m] : models) ptrs[id] = &m;
    return multi_rollout(ptrs, history, horizon);
}

inline std::map<std::string, ConvLstmStackParams> load_models(const RunConfig& cfg) {
    std::map<std::string, ConvLstmStackParams> models;
    for (int t : cfg.resolutions)
        models[model_name(t)] = load_convlstm(cfg.model_file(t));
    return models;
}

inline const SplitSet& find_split(const LoadedPrep& prep, int t) {
    for (const auto& [rt, sp] : prep.splits)
        if (rt == t) return sp;
    throw std::runtime_error("missing prepared split for resolution " + std::to_string(t));
}

inline void cmd_stack(const RunConfig& cfg, std::ostream& log) {
    LoadedPrep prep;
    load_prep(cfg.prep_dir(), prep);
    const auto models = load_models(cfg);
    const int t_max = *std::max_element(cfg.resolutions.begin(), cfg.resolutions.end());
    auto anchors = eligible_anchors(find_split(prep, t_max).val, cfg.horizon);
    if (anchors.empty()) throw std::runtime_error("cmd_stack: no eligible anchors");
    cap_anchors(anchors, cfg.max_stack_sequences, RngStream(cfg.seed, 0x73746163));

    std::vector<std::map<std::string, RolloutResult>> rollouts;
    std::vector<Tensor> truths;
    for (const auto& a : anchors) {
        rollouts.push_back(
            run_multi_rollout(models, anchor_history(prep.records, a), cfg.horizon));
        truths.push_back(anchor_truth(prep.records, a, cfg.horizon));
    }
    auto samples = build_stacking_dataset(rollouts, truths);
    if (cfg.max_stack_samples > 0 && samples.size() > cfg.max_stack_samples) {
        RngStream sub(cfg.seed, 0x73756273);
        sub.shuffle(samples);
        samples.resize(cfg.max_stack_samples);
    }
    MetaNetParams meta =
        make_meta_net(cfg.meta_plan, RngStream(cfg.seed, 0x6d696e69), cfg.dropout_rate);
    MetaTrainConfig mc = cfg.meta_train;
    mc.seed = cfg.seed ^ 0xabcdULL;
    const auto history = train_meta(meta, samples, mc);
    double best = history.empty() ? 0.0 : history.front().holdout_mse;
    for (const auto& h : history) best = std::min(best, h.holdout_mse);
    save_meta_net(cfg.meta_file(), meta,
                  {{"seed", mc.seed}, {"epochs_run", history.size()},
                   {"samples", samples.size()}, {"best_holdout_mse", best}});
    log << "meta-learner trained on " << samples.size() << " stacking samples ("
        << history.size() << " epochs)\n";
}

inline void cmd_rollout(const RunConfig& cfg, std::ostream& log,
                        const std::string& field_csv = "") {
    const auto models = load_models(cfg);
    const MetaNetParams meta = load_meta_net(cfg.meta_file());
    Tensor history;
    if (!field_csv.empty()) {
        const ResampledRecord rec = ingest_field_csv(field_csv);
        history = rec.displacement;
    } else {
        LoadedPrep prep;
        load_prep(cfg.prep_dir(), prep);
        const int t_max = *std::max_element(cfg.resolutions.begin(), cfg.resolutions.end());
        auto anchors = eligible_anchors(find_split(prep, t_max).test, cfg.horizon);
        if (anchors.empty()) throw std::runtime_error("cmd_rollout: no eligible anchors");
        history = anchor_history(prep.records, anchors.front());
    }
    const auto rollouts = run_multi_rollout(models, history, cfg.horizon);
    fs::create_directories(cfg.report_dir());
    for (const auto& [id, r] : rollouts)
        write_csv_matrix(cfg.report_dir() / ("rollout_" + id + ".csv"), r.predictions);
    const Tensor refined = ensemble_predict(meta, rollouts);
    write_csv_matrix(cfg.report_dir() / "rollout_ensemble.csv", refined);
    log << "rollouts written to " << cfg.report_dir().string() << "\n";
}

struct EvalOutput {
    std::vector<std::pair<std::string, std::vector<StepMetrics>>> by_model;
};

inline EvalOutput run_eval(const RunConfig& cfg) {
    LoadedPrep prep;
    load_prep(cfg.prep_dir(), prep);
    const auto models = load_models(cfg);
    const MetaNetParams meta = load_meta_net(cfg.meta_file());
    const int t_max = *std::max_element(cfg.resolutions.begin(), cfg.resolutions.end());
    auto anchors = eligible_anchors(find_split(prep, t_max).test, cfg.horizon);
    if (anchors.empty()) throw std::runtime_error("run_eval: no eligible test anchors");
    cap_anchors(anchors, cfg.max_eval_sequences, RngStream(cfg.seed, 0x6576616c));

    std::map<std::string, std::vector<Tensor>> preds;
    std::vector<Tensor> ens_preds, truths;
    for (const auto& a : anchors) {
        const auto rollouts =
            run_multi_rollout(models, anchor_history(prep.records, a), cfg.horizon);
        for (const auto& [id, r] : rollouts) preds[id].push_back(r.predictions);
        ens_preds.push_back(ensemble_predict(meta, rollouts));
        truths.push_back(anchor_truth(prep.records, a, cfg.horizon));
    }
    EvalOutput out;
    for (const auto& [id, p] : preds)
        out.by_model.emplace_back(id, stepwise_eval(p, truths, cfg.horizon));
    out.by_model.emplace_back("ensemble", stepwise_eval(ens_preds, truths, cfg.horizon));
    return out;
}

inline void cmd_eval(const RunConfig& cfg, std::ostream& log) {
    const EvalOutput out = run_eval(cfg);
    fs::create_directories(cfg.report_dir());
    write_step_metrics_csv(cfg.report_dir() / "step_metrics.csv", out.by_model);
    for (const auto& [model, steps] : out.by_model)
        log << model << " step1 IoA " << steps.front().mean_ioa << " step"
            << steps.back().step << " IoA " << steps.back().mean_ioa << "\n";
}

inline ContributionTable run_shap(const RunConfig& cfg,
                                  const std::string& field_csv = "") {
    const auto models = load_models(cfg);
    const MetaNetParams meta = load_meta_net(cfg.meta_file());

    std::vector<std::map<std::string, RolloutResult>> rollouts;
    std::vector<Tensor> truths;
    if (!field_csv.empty()) {
        const ResampledRecord rec = ingest_field_csv(field_csv);
        const std::size_t steps = rec.phases();
        const std::size_t need = 10 + static_cast<std::size_t>(cfg.horizon);
        if (steps < need)
            throw std::runtime_error("run_shap: field series too short");
        const std::size_t np = rec.displacement.shape[1];
        Tensor hist({10, np});
        std::copy(rec.displacement.v.begin(), rec.displacement.v.begin() + 10 * np,
                  hist.v.begin());
        Tensor truth({static_cast<std::size_t>(cfg.horizon), np});
        std::copy(rec.displacement.v.begin() + 10 * np,
                  rec.displacement.v.begin() + (10 + cfg.horizon) * np, truth.v.begin());
        rollouts.push_back(run_multi_rollout(models, hist, cfg.horizon));
        truths.push_back(std::move(truth));
    } else {
        LoadedPrep prep;
        load_prep(cfg.prep_dir(), prep);
        const int t_max = *std::max_element(cfg.resolutions.begin(), cfg.resolutions.end());
        auto anchors = eligible_anchors(find_split(prep, t_max).test, cfg.horizon);
        if (anchors.empty()) throw std::runtime_error("run_shap: no eligible anchors");
        cap_anchors(anchors, std::max<std::size_t>(1, cfg.max_eval_sequences / 8),
                    RngStream(cfg.seed, 0x73686170));
        for (const auto& a : anchors) {
            rollouts.push_back(
                run_multi_rollout(models, anchor_history(prep.records, a), cfg.horizon));
            truths.push_back(anchor_truth(prep.records, a, cfg.horizon));
        }
    }
    const auto samples = build_stacking_dataset(rollouts, truths);
    return stepwise_contributions(meta_as_fn(meta), samples, cfg.shap_background,
                                  RngStream(cfg.seed, 0x62616b67), cfg.shap_max_per_step);
}

inline void cmd_shap(const RunConfig& cfg, std::ostream& log,
                     const std::string& field_csv = "") {
    const ContributionTable table = run_shap(cfg, field_csv);
    fs::create_directories(cfg.report_dir());
    std::vector<std::string> names;
    for (int t : cfg.resolutions) names.push_back(model_name(t));
    write_contributions_csv(cfg.report_dir() / "contributions.csv", table, names);
    for (const auto& row : table.rows)
        log << "step " << row.step << ": shares " << row.share[0] << "/" << row.share[1]
            << "/" << row.share[2] << (row.degenerate ? " (degenerate)" : "") << "\n";
}

inline void cmd_report(const RunConfig& cfg, std::ostream& log) {
    fs::create_directories(cfg.report_dir());
    // Metric-vs-step charts from the eval CSV.
    const fs::path metrics_csv = cfg.report_dir() / "step_metrics.csv";
    if (!fs::exists(metrics_csv))
        throw std::runtime_error("cmd_report: missing " + metrics_csv.string());
    std::ifstream in(metrics_csv);
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::vector<std::array<double, 3>>> by_model;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string model, cell;
        std::getline(ss, model, ',');
        std::array<double, 4> vals{};
        for (int i = 0; i < 4; ++i) {
            std::getline(ss, cell, ',');
            vals[i] = std::stod(cell);
        }
        by_model[model].push_back({vals[1], vals[2], vals[3]});
    }
    const char* metric_names[3] = {"mae", "r2", "ioa"};
    for (int m = 0; m < 3; ++m) {
        std::vector<std::pair<std::string, std::vector<double>>> series;
        for (const auto& [model, rows] : by_model) {
            std::vector<double> ys;
            for (const auto& r : rows) ys.push_back(r[m]);
            series.emplace_back(model, ys);
        }
        write_svg_lines(cfg.report_dir() / (std::string(metric_names[m]) + "_vs_step.svg"),
                        std::string(metric_names[m]) + " vs prediction step", series);
    }

    const fs::path contrib_csv = cfg.report_dir() / "contributions.csv";
    if (fs::exists(contrib_csv)) {
        std::ifstream cin(contrib_csv);
        std::getline(cin, line);
        std::map<std::string, std::vector<double>> shares;
        while (std::getline(cin, line)) {
            std::stringstream ss(line);
            std::string step, model, mas, share;
            std::getline(ss, step, ',');
            std::getline(ss, model, ',');
            std::getline(ss, mas, ',');
            std::getline(ss, share, ',');
            shares[model].push_back(std::stod(share));
        }
        std::vector<std::pair<std::string, std::vector<double>>> series(shares.begin(),
                                                                        shares.end());
        write_svg_lines(cfg.report_dir() / "contribution_vs_step.svg",
                        "normalized contribution vs prediction step", series);
    }
    log << "report written to " << cfg.report_dir().string() << "\n";
}

// Full pipeline, used by the desk-scale acceptance run.
inline void run_all(const RunConfig& cfg, std::ostream& log) {
    cmd_gen(cfg, log);
    cmd_prep(cfg, log);
    cmd_train(cfg, log);
    cmd_stack(cfg, log);
    cmd_rollout(cfg, log);
    cmd_eval(cfg, log);
    cmd_shap(cfg, log);
    cmd_report(cfg, log);
}

} // namespace wallcast
