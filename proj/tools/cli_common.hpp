#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fuselearn/dataset.hpp"
#include "fuselearn/train.hpp"

// Shared plumbing for the command-line tools: exit-code conventions, the
// resolved-config snapshot every command writes, and dataset-to-tensor
// preparation reused by train/eval/gradcam.

namespace fuselearn::cli {

// exit codes: 0 ok, 2 config error, 3 data error, 4 missing runtime
// prerequisite, 5 paired-input mismatch
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitPrereq = 4;
inline constexpr int kExitMismatch = 5;

/// Runs a command body and maps thrown error categories onto exit codes.
int guarded(const std::string& command, const std::function<int()>& body);

/// Default seed: FUSELEARN_SEED env var when set, else 0.
uint64_t default_seed();

/// Write the resolved-config snapshot next to a command's outputs.
void write_config_snapshot(const std::string& out_dir, const nlohmann::json& resolved);

/// Parse a key=value config file into a json object (later flags override it).
nlohmann::json load_config_file(const std::string& path);

// Aligned per-subject arrays for one model configuration.
struct PreparedData {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<std::vector<double>> images;    // 3*S*S planes; empty when unused
    std::vector<std::vector<double>> clinical;  // encoded vectors; empty when unused
    std::vector<int> quadrants;
};

PreparedData prepare_subjects(const data::Dataset& ds, const std::vector<size_t>& indices, int S,
                              bool want_images, const clin::FittedPreprocessor* preprocessor,
                              double crop_margin = 0.05);

template <typename T>
net::TrainData<T> to_train_data(const PreparedData& prepared) {
    net::TrainData<T> out;
    for (size_t i = 0; i < prepared.labels.size(); ++i) {
        std::vector<T> image, clinical;
        if (!prepared.images.empty())
            image.assign(prepared.images[i].begin(), prepared.images[i].end());
        if (!prepared.clinical.empty())
            clinical.assign(prepared.clinical[i].begin(), prepared.clinical[i].end());
        out.push(std::move(image), std::move(clinical), prepared.labels[i]);
    }
    return out;
}

int cmd_synth(int argc, char** argv);
int cmd_train(int argc, char** argv);
int cmd_eval(int argc, char** argv);
int cmd_baseline(int argc, char** argv);
int cmd_compare(int argc, char** argv);
int cmd_gradcam(int argc, char** argv);
int cmd_gradcheck(int argc, char** argv);

}  // namespace fuselearn::cli
