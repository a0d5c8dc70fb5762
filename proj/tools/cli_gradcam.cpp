#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "cli_common.hpp"
#include "fuselearn/gradcam.hpp"
#include "fuselearn/image_io.hpp"
#include "fuselearn/inference.hpp"

namespace fuselearn::cli {

namespace fs = std::filesystem;

namespace {

int class_from_flag(const std::string& s) {
    if (s == "low") return 0;
    if (s == "intermediate") return 1;
    if (s == "high") return 2;
    if (s == "pred") return -1;
    throw ConfigError("--class must be low|intermediate|high|pred");
}

template <typename T>
int run_gradcam(const std::string& data_dir, const std::string& ckpt_path,
                const std::vector<std::string>& subjects, const std::string& mode_name,
                int target_class, int layer, const std::string& out_dir, bool no_intubation,
                const nlohmann::json& snapshot) {
    const auto ckpt = net::Checkpoint::load(ckpt_path);
    if (ckpt.config.kind == net::ModelKind::feature_only)
        throw PrereqError("feature-only checkpoints have no image branch to explain");
    auto model = ckpt.restore_model<T>();

    const infer::ModalityMode mode = infer::ModalityMode::parse(mode_name);
    if (mode.tag == infer::ModalityTag::fusion_feature_only ||
        mode.tag == infer::ModalityTag::partial_clinical)
        throw ConfigError("gradcam supports modes 'full' and 'image-only'");

    const data::Dataset ds = data::load_dataset(data_dir, !no_intubation);
    fs::create_directories(out_dir);

    nlohmann::json manifest = nlohmann::json::array();
    int succeeded = 0;
    for (const auto& id : subjects) {
        const data::Subject* subject = ds.find(id);
        if (!subject) {
            std::cerr << "warning: unknown subject '" << id << "', skipped\n";
            continue;
        }
        const auto planes =
            data::load_subject_image(*subject, ckpt.config.image_size, ckpt.crop_margin).planes;

        std::vector<double> clinical;
        if (ckpt.config.kind == net::ModelKind::fusion) {
            if (mode.tag == infer::ModalityTag::fusion_image_only) {
                if (ckpt.mean_clinical.empty())
                    throw PrereqError("checkpoint has no training-mean clinical vector");
                clinical = ckpt.mean_clinical;
            } else {
                clinical = ckpt.preprocessor.transform(subject->record);
            }
        }

        int cls = target_class;
        if (cls < 0) {
            std::vector<T> img(planes.begin(), planes.end());
            std::vector<T> clin_t(clinical.begin(), clinical.end());
            const auto probs = model.predict(img.data(), clin_t);
            cls = 0;
            for (int c = 1; c < 3; ++c)
                if (probs[c] > probs[cls]) cls = c;
        }

        const auto heat = cam::gradcam(model, planes, clinical, cls, layer, id);
        const img::RawImage base = img::read_gray(subject->image_path);
        const std::string png_name = id + "_" + mode.name() + "_" +
                                     stats::kClassNames[cls] + ".png";
        cam::overlay(base, heat, (fs::path(out_dir) / png_name).string());
        manifest.push_back({{"subject", id},
                            {"mode", mode.name()},
                            {"class", stats::kClassNames[cls]},
                            {"layer", heat.layer},
                            {"path", png_name}});
        ++succeeded;
    }

    write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    write_config_snapshot(out_dir, snapshot);
    std::cout << succeeded << "/" << subjects.size() << " heatmaps written to " << out_dir
              << "\n";
    if (succeeded == 0) throw PrereqError("no requested subject produced a heatmap");
    return kExitOk;
}

}  // namespace

int cmd_gradcam(int argc, char** argv) {
    CLI::App app{"export saliency heatmap overlays"};
    std::string data_dir, ckpt_path, subjects_csv, mode = "full", cls = "pred", out_dir;
    int layer = -1;
    bool no_intubation = false;
    app.add_option("--data", data_dir, "dataset directory")->required();
    app.add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    app.add_option("--subjects", subjects_csv, "comma-separated subject ids")->required();
    app.add_option("--mode", mode, "full | image-only");
    app.add_option("--class", cls, "low | intermediate | high | pred");
    app.add_option("--layer", layer, "backbone stage index (-1 = last)");
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_flag("--no-intubation-high", no_intubation,
                 "do not count intubation as a high-risk outcome");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : kExitOk;
    }

    return guarded("gradcam", [&]() {
        std::vector<std::string> subjects;
        for (const auto& s : split(subjects_csv, ','))
            if (!trim(s).empty()) subjects.push_back(trim(s));
        if (subjects.empty()) throw ConfigError("--subjects is empty");
        const int target_class = class_from_flag(cls);

        nlohmann::json snapshot = {{"command", "gradcam"}, {"data", data_dir},
                                   {"ckpt", ckpt_path},    {"subjects", subjects},
                                   {"mode", mode},         {"class", cls},
                                   {"layer", layer},       {"out", out_dir}};

        const auto probe = net::Checkpoint::load(ckpt_path);
        if (probe.dtype_bytes == 8)
            return run_gradcam<double>(data_dir, ckpt_path, subjects, mode, target_class, layer,
                                       out_dir, no_intubation, snapshot);
        return run_gradcam<float>(data_dir, ckpt_path, subjects, mode, target_class, layer,
                                  out_dir, no_intubation, snapshot);
    });
}

}  // namespace fuselearn::cli
