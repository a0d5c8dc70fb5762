#pragma once

#include <vector>

#include "fuselearn/model.hpp"

namespace fuselearn::net {

struct TrainSpec {
    double lr = 2e-4;
    double momentum = 0.9;
    int batch_size = 16;
    int patience = 8;
    int max_epochs = 100;
    std::vector<double> class_weights;  // one per class

    void validate(int num_classes) const;
};

struct EpochStat {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    int stage = 0;
};

struct TrainResult {
    std::vector<EpochStat> history;
    double best_val_loss = 0;
    int best_epoch = 0;
};

// In-memory training samples, already converted to the training scalar type.
// Unused modality vectors stay empty.
template <typename T>
struct TrainData {
    std::vector<std::vector<T>> images;     // 3*S*S each
    std::vector<std::vector<T>> clinicals;  // D each
    std::vector<int> labels;

    size_t size() const { return labels.size(); }
    void push(std::vector<T> image, std::vector<T> clinical, int label) {
        images.push_back(std::move(image));
        clinicals.push_back(std::move(clinical));
        labels.push_back(label);
    }
};

/// One training stage with SGD+momentum, per-epoch shuffling, batch-summed
/// gradients of the class-weighted cross-entropy, and early stopping on the
/// validation loss (best weights restored).
///
/// stage 1 freezes the backbone and trains the head from cached backbone
/// features (exact: the frozen convolutional path is deterministic).
/// stage 2 fine-tunes everything. stage 0 is single-stage training for the
/// image-only / feature-only models.
template <typename T>
TrainResult train_model(FusionModel<T>& model, const TrainData<T>& train, const TrainData<T>& val,
                        const TrainSpec& spec, int stage, Rng& rng);

/// Mean per-sample weighted cross-entropy of eval-mode predictions.
template <typename T>
double evaluate_loss(FusionModel<T>& model, const TrainData<T>& data,
                     const std::vector<double>& class_weights);

}  // namespace fuselearn::net
