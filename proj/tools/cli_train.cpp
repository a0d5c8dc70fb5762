#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "cli_common.hpp"
#include "fuselearn/checkpoint.hpp"
#include "fuselearn/inference.hpp"

namespace fuselearn::cli {

namespace fs = std::filesystem;

namespace {

struct TrainOptions {
    std::string data_dir, out_dir, backbone = "plain", img_feat = "64";
    std::string init_backbone, config_file, precision = "f32";
    uint64_t seed = 0;
    bool image_only = false, feature_only = false;
    bool no_neutral_cache = false;
    bool no_intubation = false;
    int image_size = 64;
    double lr = 2e-4, momentum = 0.9, drop_threshold = 0.40;
    double dropout_image = 0.3, dropout_clinical = 0.3;
    int batch_size = 16, patience = 8;
    int max_epochs = 100, max_epochs_stage1 = -1, max_epochs_stage2 = -1;
};

// Config file values override built-in defaults; explicit flags override both.
void apply_config_file(TrainOptions& opt, const nlohmann::json& file, const CLI::App& app) {
    auto unset = [&](const char* flag) { return app.count(flag) == 0; };
    auto num = [&](const char* key, const char* flag, auto& field) {
        if (file.contains(key) && unset(flag))
            field = static_cast<std::decay_t<decltype(field)>>(
                std::stod(file[key].template get<std::string>()));
    };
    auto str = [&](const char* key, const char* flag, std::string& field) {
        if (file.contains(key) && unset(flag)) field = file[key].template get<std::string>();
    };
    num("lr", "--lr", opt.lr);
    num("momentum", "--momentum", opt.momentum);
    num("dropout_image", "--dropout-image", opt.dropout_image);
    num("dropout_clinical", "--dropout-clinical", opt.dropout_clinical);
    num("drop_threshold", "--drop-threshold", opt.drop_threshold);
    num("batch_size", "--batch-size", opt.batch_size);
    num("patience", "--patience", opt.patience);
    num("max_epochs", "--max-epochs", opt.max_epochs);
    num("max_epochs_stage1", "--max-epochs-stage1", opt.max_epochs_stage1);
    num("max_epochs_stage2", "--max-epochs-stage2", opt.max_epochs_stage2);
    num("image_size", "--image-size", opt.image_size);
    str("backbone", "--backbone", opt.backbone);
    str("img_feat_dim", "--img-feat-dim", opt.img_feat);
    str("precision", "--precision", opt.precision);
}

void write_history_jsonl(const std::string& path, const std::vector<net::EpochStat>& history) {
    std::ostringstream out;
    for (const auto& h : history) {
        nlohmann::json j = {{"epoch", h.epoch},
                            {"train_loss", h.train_loss},
                            {"val_loss", h.val_loss},
                            {"stage", h.stage}};
        out << j.dump() << "\n";
    }
    write_text_file(path, out.str());
}

template <typename T>
int run_training(const TrainOptions& opt, const nlohmann::json& snapshot) {
    const data::Dataset ds = data::load_dataset(opt.data_dir, !opt.no_intubation);
    const auto train_idx = ds.split_indices("train");
    const auto val_idx = ds.split_indices("val");
    if (train_idx.empty() || val_idx.empty())
        throw DataError("dataset needs non-empty train and val splits");

    net::FusionConfig cfg;
    cfg.kind = opt.image_only ? net::ModelKind::image_only
               : opt.feature_only ? net::ModelKind::feature_only
                                  : net::ModelKind::fusion;
    cfg.backbone = net::BackboneProfile::preset(opt.backbone);
    cfg.image_size = opt.image_size;
    cfg.image_feat_dim = opt.img_feat == "native" ? cfg.backbone.feature_dim()
                                                  : std::stoi(opt.img_feat);
    cfg.dropout_image = opt.dropout_image;
    cfg.dropout_clinical = opt.dropout_clinical;
    cfg.seed = opt.seed;

    const bool want_images = cfg.kind != net::ModelKind::feature_only;
    const bool want_clinical = cfg.kind != net::ModelKind::image_only;

    clin::FittedPreprocessor preprocessor;
    if (want_clinical) {
        std::vector<clin::ClinicalRecord> train_records;
        for (size_t i : train_idx) train_records.push_back(ds.subjects[i].record);
        preprocessor = clin::FittedPreprocessor::fit(train_records, ds.schema, opt.drop_threshold);
        cfg.clinical_input_dim = preprocessor.dim();
    }

    std::cout << "preparing " << train_idx.size() << " train / " << val_idx.size()
              << " val subjects...\n";
    const auto prepared_train = prepare_subjects(ds, train_idx, cfg.image_size, want_images,
                                                 want_clinical ? &preprocessor : nullptr);
    const auto prepared_val = prepare_subjects(ds, val_idx, cfg.image_size, want_images,
                                               want_clinical ? &preprocessor : nullptr);
    const auto train_data = to_train_data<T>(prepared_train);
    const auto val_data = to_train_data<T>(prepared_val);

    std::vector<long> counts(3, 0);
    for (int label : prepared_train.labels) ++counts[label];
    net::TrainSpec spec;
    spec.lr = opt.lr;
    spec.momentum = opt.momentum;
    spec.batch_size = opt.batch_size;
    spec.patience = opt.patience;
    spec.class_weights = net::class_weights(counts);

    net::FusionModel<T> model(cfg);
    if (!opt.init_backbone.empty()) {
        const auto init = net::Checkpoint::load(opt.init_backbone);
        const auto src = init.restore_model<T>();
        net::transfer_backbone(src, model);
    }

    Rng rng(mix_seed(opt.seed, 0x7ea17ULL));
    std::vector<net::EpochStat> history;
    int stage_reached = 0;
    if (cfg.kind == net::ModelKind::fusion) {
        spec.max_epochs = opt.max_epochs_stage1 > 0 ? opt.max_epochs_stage1 : opt.max_epochs;
        auto r1 = net::train_model(model, train_data, val_data, spec, 1, rng);
        history = r1.history;
        std::cout << "stage 1: best val loss " << r1.best_val_loss << " at epoch "
                  << r1.best_epoch << "\n";
        spec.max_epochs = opt.max_epochs_stage2 > 0 ? opt.max_epochs_stage2 : opt.max_epochs;
        auto r2 = net::train_model(model, train_data, val_data, spec, 2, rng);
        history.insert(history.end(), r2.history.begin(), r2.history.end());
        std::cout << "stage 2: best val loss " << r2.best_val_loss << " at epoch "
                  << r2.best_epoch << "\n";
        stage_reached = 2;
    } else {
        spec.max_epochs = opt.max_epochs;
        auto r = net::train_model(model, train_data, val_data, spec, 0, rng);
        history = r.history;
        std::cout << "best val loss " << r.best_val_loss << " at epoch " << r.best_epoch << "\n";
    }

    net::Checkpoint ckpt = net::Checkpoint::from_model(model);
    ckpt.class_weights = spec.class_weights;
    ckpt.stage_reached = stage_reached;
    ckpt.seed = opt.seed;
    ckpt.history = history;
    if (want_clinical) {
        ckpt.has_preprocessor = true;
        ckpt.preprocessor = preprocessor;
        std::vector<clin::ClinicalRecord> train_records;
        for (size_t i : train_idx) train_records.push_back(ds.subjects[i].record);
        ckpt.mean_clinical = clin::mean_clinical_vector(preprocessor, train_records);
    }
    if (cfg.kind == net::ModelKind::fusion && !opt.no_neutral_cache) {
        std::vector<std::pair<std::string, std::vector<double>>> candidates;
        for (size_t i = 0; i < prepared_train.ids.size(); ++i)
            candidates.emplace_back(prepared_train.ids[i], prepared_train.images[i]);
        const auto sel = infer::select_neutral_image(model, ckpt.mean_clinical, candidates);
        ckpt.neutral_image_id = sel.image_id;
        for (size_t i = 0; i < prepared_train.ids.size(); ++i)
            if (prepared_train.ids[i] == sel.image_id)
                ckpt.neutral_image_planes = prepared_train.images[i];
        std::cout << "neutral image: " << sel.image_id << " (distance to uniform "
                  << sel.score << ")\n";
    }

    fs::create_directories(opt.out_dir);
    const std::string ckpt_path = (fs::path(opt.out_dir) / "checkpoint.dcfz").string();
    ckpt.save(ckpt_path);
    write_history_jsonl((fs::path(opt.out_dir) / "history.jsonl").string(), history);
    write_config_snapshot(opt.out_dir, snapshot);
    std::cout << "checkpoint written to " << ckpt_path << "\n";
    return kExitOk;
}

}  // namespace

int cmd_train(int argc, char** argv) {
    CLI::App app{"train a fusion / image-only / feature-only model"};
    TrainOptions opt;
    opt.seed = default_seed();

    app.add_option("--data", opt.data_dir, "dataset directory")->required();
    app.add_option("--out", opt.out_dir, "output directory")->required();
    app.add_option("--backbone", opt.backbone, "plain | residual | dense");
    app.add_option("--img-feat-dim", opt.img_feat, "image latent dim: 64, 128 or 'native'");
    app.add_option("--seed", opt.seed, "training seed");
    app.add_flag("--image-only", opt.image_only, "train the image branch + head only");
    app.add_flag("--feature-only", opt.feature_only, "train the clinical branch + head only");
    app.add_option("--init-backbone", opt.init_backbone,
                   "checkpoint whose backbone initializes the image branch");
    app.add_option("--config", opt.config_file, "key=value config file");
    app.add_option("--precision", opt.precision, "f32 | f64");
    app.add_option("--image-size", opt.image_size, "model input side length");
    app.add_option("--lr", opt.lr, "learning rate");
    app.add_option("--momentum", opt.momentum, "SGD momentum");
    app.add_option("--batch-size", opt.batch_size, "batch size");
    app.add_option("--patience", opt.patience, "early-stopping patience");
    app.add_option("--max-epochs", opt.max_epochs, "epoch cap per stage");
    app.add_option("--max-epochs-stage1", opt.max_epochs_stage1, "stage-1 epoch cap");
    app.add_option("--max-epochs-stage2", opt.max_epochs_stage2, "stage-2 epoch cap");
    app.add_option("--dropout-image", opt.dropout_image, "image-branch dropout rate");
    app.add_option("--dropout-clinical", opt.dropout_clinical, "clinical-branch dropout rate");
    app.add_option("--drop-threshold", opt.drop_threshold, "feature missingness drop threshold");
    app.add_flag("--no-cache-neutral-image", opt.no_neutral_cache,
                 "skip caching the neutral image in the checkpoint");
    app.add_flag("--no-intubation-high", opt.no_intubation,
                 "do not count intubation as a high-risk outcome");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : kExitOk;
    }

    return guarded("train", [&]() {
        if (opt.image_only && opt.feature_only)
            throw ConfigError("--image-only and --feature-only are mutually exclusive");
        if (!opt.config_file.empty())
            apply_config_file(opt, load_config_file(opt.config_file), app);
        if (opt.precision != "f32" && opt.precision != "f64")
            throw ConfigError("--precision must be f32 or f64");

        nlohmann::json snapshot = {
            {"command", "train"},
            {"data", opt.data_dir},
            {"out", opt.out_dir},
            {"backbone", opt.backbone},
            {"img_feat_dim", opt.img_feat},
            {"seed", opt.seed},
            {"kind", opt.image_only ? "image_only" : opt.feature_only ? "feature_only" : "fusion"},
            {"init_backbone", opt.init_backbone},
            {"precision", opt.precision},
            {"image_size", opt.image_size},
            {"lr", opt.lr},
            {"momentum", opt.momentum},
            {"batch_size", opt.batch_size},
            {"patience", opt.patience},
            {"max_epochs", opt.max_epochs},
            {"max_epochs_stage1", opt.max_epochs_stage1},
            {"max_epochs_stage2", opt.max_epochs_stage2},
            {"dropout_image", opt.dropout_image},
            {"dropout_clinical", opt.dropout_clinical},
            {"drop_threshold", opt.drop_threshold},
            {"cache_neutral_image", !opt.no_neutral_cache},
            {"include_intubation", !opt.no_intubation}};
        if (opt.precision == "f64") return run_training<double>(opt, snapshot);
        return run_training<float>(opt, snapshot);
    });
}

}  // namespace fuselearn::cli
