#include <filesystem>
#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "cli_common.hpp"
#include "fuselearn/inference.hpp"

namespace fuselearn::cli {

namespace fs = std::filesystem;

namespace {

struct EvalOptions {
    std::string data_dir, out_dir, mode = "full", split = "test";
    std::vector<std::string> ckpts, ensemble;
    int runs = 1;
    uint64_t seed = 0;
    bool cache_neutral = false;
    bool no_intubation = false;
};

// metric values of one evaluation run, keyed for CI aggregation
std::map<std::string, double> metric_values(const stats::MetricReport& rep) {
    return {{"accuracy", rep.accuracy},
            {"macro_precision", rep.macro_precision},
            {"macro_recall", rep.macro_recall},
            {"macro_f1", rep.macro_f1},
            {"macro_auc", rep.macro_auc}};
}

template <typename T>
stats::PredictionSet run_once(std::vector<infer::Predictor<T>>& members,
                              const PreparedData& prepared, const infer::ModalityMode& mode) {
    stats::PredictionSet preds;
    for (size_t i = 0; i < prepared.labels.size(); ++i) {
        const std::vector<double>* image =
            prepared.images.empty() ? nullptr : &prepared.images[i];
        const std::vector<double>* clinical =
            prepared.clinical.empty() ? nullptr : &prepared.clinical[i];
        stats::Prediction p;
        p.id = prepared.ids[i];
        p.true_label = prepared.labels[i];
        p.probs = infer::predict_subject(members, image, clinical, mode);
        p.pred_label = stats::argmax_label(p.probs);
        preds.items.push_back(std::move(p));
    }
    return preds;
}

template <typename T>
int run_eval(const EvalOptions& opt, const nlohmann::json& snapshot) {
    const data::Dataset ds = data::load_dataset(opt.data_dir, !opt.no_intubation);
    const auto subject_idx = ds.split_indices(opt.split);
    if (subject_idx.empty()) throw DataError("split '" + opt.split + "' has no subjects");

    // groups: one ensemble, or each --ckpt as an independent run
    std::vector<std::vector<std::string>> groups;
    if (!opt.ensemble.empty())
        groups.push_back(opt.ensemble);
    else
        for (const auto& c : opt.ckpts) groups.push_back({c});

    // Load all checkpoints up front and check they agree on the input contract.
    std::vector<std::vector<infer::Predictor<T>>> loaded;
    for (const auto& group : groups) {
        std::vector<infer::Predictor<T>> members;
        for (const auto& path : group) members.emplace_back(net::Checkpoint::load(path));
        for (size_t m = 1; m < members.size(); ++m) {
            const auto& a = members[0].checkpoint();
            const auto& b = members[m].checkpoint();
            if (a.config.kind != b.config.kind || a.config.image_size != b.config.image_size)
                throw ConfigError("ensemble members disagree on kind/image size");
            if (a.has_preprocessor != b.has_preprocessor ||
                (a.has_preprocessor && !(a.preprocessor == b.preprocessor)))
                throw ConfigError("ensemble members were fitted on different clinical data");
        }
        loaded.push_back(std::move(members));
    }
    const auto& ref = loaded[0][0].checkpoint();
    for (const auto& members : loaded)
        for (const auto& m : members)
            if (m.checkpoint().config.image_size != ref.config.image_size ||
                m.checkpoint().config.kind != ref.config.kind)
                throw ConfigError("checkpoints disagree on kind/image size");

    if (opt.cache_neutral) {
        const auto train_idx = ds.split_indices("train");
        const auto prepared =
            prepare_subjects(ds, train_idx, ref.config.image_size, true, nullptr);
        std::vector<std::pair<std::string, std::vector<double>>> candidates;
        for (size_t i = 0; i < prepared.ids.size(); ++i)
            candidates.emplace_back(prepared.ids[i], prepared.images[i]);
        size_t gi = 0;
        for (auto& members : loaded) {
            for (size_t m = 0; m < members.size(); ++m) {
                auto ck = members[m].checkpoint();  // copy
                if (ck.mean_clinical.empty())
                    throw PrereqError("cannot cache a neutral image: checkpoint has no "
                                      "training-mean clinical vector");
                const auto sel =
                    infer::select_neutral_image(members[m].model(), ck.mean_clinical, candidates);
                ck.neutral_image_id = sel.image_id;
                for (size_t i = 0; i < prepared.ids.size(); ++i)
                    if (prepared.ids[i] == sel.image_id)
                        ck.neutral_image_planes = prepared.images[i];
                const std::string& path =
                    opt.ensemble.empty() ? opt.ckpts[gi] : opt.ensemble[m];
                ck.save(path);
                members[m] = infer::Predictor<T>(std::move(ck));
                std::cout << "cached neutral image " << sel.image_id << " into " << path << "\n";
            }
            ++gi;
        }
    }

    const infer::ModalityMode base_mode = infer::ModalityMode::parse(opt.mode, opt.seed);
    const bool want_clinical = ref.config.kind != net::ModelKind::image_only;
    const clin::FittedPreprocessor* pre =
        want_clinical && ref.has_preprocessor ? &ref.preprocessor : nullptr;
    if (want_clinical && !pre)
        throw PrereqError("checkpoint lacks a fitted clinical preprocessor");

    // fusion feature-only still needs the neutral image, not subject images
    const bool load_images = ref.config.kind != net::ModelKind::feature_only &&
                             base_mode.tag != infer::ModalityTag::fusion_feature_only;
    const auto prepared =
        prepare_subjects(ds, subject_idx, ref.config.image_size, load_images, pre);

    fs::create_directories(opt.out_dir);
    std::vector<std::map<std::string, double>> run_metrics;
    stats::MetricReport last_report;
    int run_counter = 0;
    for (auto& members : loaded) {
        for (int r = 0; r < opt.runs; ++r) {
            infer::ModalityMode mode = base_mode;
            mode.mask_seed = opt.seed + static_cast<uint64_t>(r);
            const auto preds = run_once(members, prepared, mode);
            const std::string csv_name =
                run_counter == 0 && groups.size() == 1 && opt.runs == 1
                    ? "predictions.csv"
                    : "predictions_run" + std::to_string(run_counter) + ".csv";
            stats::save_predictions_csv((fs::path(opt.out_dir) / csv_name).string(), preds);
            last_report = stats::compute_metrics(preds);
            run_metrics.push_back(metric_values(last_report));
            ++run_counter;
        }
    }

    stats::MetricReport report = last_report;
    report.n_runs = run_counter;
    if (run_counter >= 2) {
        std::map<std::string, std::vector<double>> series;
        for (const auto& run : run_metrics)
            for (const auto& [k, v] : run) series[k].push_back(v);
        double* fields[] = {&report.accuracy, &report.macro_precision, &report.macro_recall,
                            &report.macro_f1, &report.macro_auc};
        const char* names[] = {"accuracy", "macro_precision", "macro_recall", "macro_f1",
                               "macro_auc"};
        for (int i = 0; i < 5; ++i) {
            const auto ci = stats::ci_over_runs(series[names[i]]);
            *fields[i] = ci.mean;
            report.ci.emplace_back(names[i], std::make_pair(ci.lo, ci.hi));
        }
    }

    write_text_file((fs::path(opt.out_dir) / "metrics.json").string(), report.to_json() + "\n");
    write_config_snapshot(opt.out_dir, snapshot);

    std::cout << "mode " << base_mode.name() << " on " << prepared.labels.size() << " subjects ("
              << run_counter << " run" << (run_counter == 1 ? "" : "s") << ")\n";
    const auto vals = metric_values(report);
    for (const auto& [k, v] : vals) {
        std::cout << "  " << k << " = ";
        std::printf("%.4f", v);
        for (const auto& [name, interval] : report.ci)
            if (name == k) std::printf("  [%.4f, %.4f]", interval.first, interval.second);
        std::cout << "\n";
    }
    return kExitOk;
}

}  // namespace

int cmd_eval(int argc, char** argv) {
    CLI::App app{"evaluate checkpoints under a modality mode"};
    EvalOptions opt;
    opt.seed = default_seed();

    app.add_option("--data", opt.data_dir, "dataset directory")->required();
    app.add_option("--out", opt.out_dir, "output directory")->required();
    app.add_option("--ckpt", opt.ckpts, "checkpoint path (repeat for multiple runs)");
    app.add_option("--ensemble", opt.ensemble, "checkpoints averaged as one ensemble")
        ->expected(-1);
    app.add_option("--mode", opt.mode, "full | image-only | feature-only | partial:P");
    app.add_option("--split", opt.split, "train | val | test");
    app.add_option("--runs", opt.runs, "repeated evaluation runs (CIs when >= 2 total)");
    app.add_option("--seed", opt.seed, "base seed for partial-mode masking");
    app.add_flag("--cache-neutral-image", opt.cache_neutral,
                 "select + store the neutral image into each checkpoint first");
    app.add_flag("--no-intubation-high", opt.no_intubation,
                 "do not count intubation as a high-risk outcome");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : kExitOk;
    }

    return guarded("eval", [&]() {
        if (opt.ckpts.empty() && opt.ensemble.empty())
            throw ConfigError("give --ckpt or --ensemble");
        if (!opt.ckpts.empty() && !opt.ensemble.empty())
            throw ConfigError("--ckpt and --ensemble are mutually exclusive");
        if (opt.runs < 1) throw ConfigError("--runs must be >= 1");

        nlohmann::json snapshot = {{"command", "eval"},       {"data", opt.data_dir},
                                   {"out", opt.out_dir},      {"ckpt", opt.ckpts},
                                   {"ensemble", opt.ensemble}, {"mode", opt.mode},
                                   {"split", opt.split},      {"runs", opt.runs},
                                   {"seed", opt.seed}};

        // match the stored parameter precision
        const std::string first = opt.ensemble.empty() ? opt.ckpts[0] : opt.ensemble[0];
        const auto probe = net::Checkpoint::load(first);
        if (probe.dtype_bytes == 8) return run_eval<double>(opt, snapshot);
        return run_eval<float>(opt, snapshot);
    });
}

}  // namespace fuselearn::cli
