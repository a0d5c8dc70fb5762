#pragma once

#include <string>
#include <vector>

#include "fuselearn/clinical.hpp"
#include "fuselearn/model.hpp"
#include "fuselearn/train.hpp"

// Self-contained model snapshot: configuration, fitted preprocessing state,
// normalization constants, class weights, parameters, and the cached
// inference artifacts (training-mean clinical vector, neutral image).
// Binary format: magic "DCFZ", u32 version, u8 scalar width, then canonical
// little-endian blocks. Save(load(x)) is byte-identical to x.

namespace fuselearn::net {

struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    uint8_t dtype_bytes = 8;  // 4 = float32 parameters, 8 = float64
    FusionConfig config;
    bool has_preprocessor = false;
    clin::FittedPreprocessor preprocessor;
    std::array<double, 3> channel_mean = img::kChannelMean;
    std::array<double, 3> channel_std = img::kChannelStd;
    double crop_margin = 0.05;
    std::vector<double> class_weights;
    int stage_reached = 0;
    uint64_t seed = 0;
    std::vector<EpochStat> history;

    std::vector<double> mean_clinical;         // empty = not cached
    std::string neutral_image_id;              // empty = not cached
    std::vector<double> neutral_image_planes;  // 3*S*S when cached

    struct ParamBlob {
        std::string name;
        std::vector<int> shape;
        bool frozen = false;
        std::vector<double> f64;  // used when dtype_bytes == 8
        std::vector<float> f32;   // used when dtype_bytes == 4
    };
    std::vector<ParamBlob> params;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    std::vector<uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<uint8_t>& bytes);

    template <typename T>
    static Checkpoint from_model(const FusionModel<T>& model);

    /// Rebuild the model this checkpoint describes. T must match dtype_bytes.
    template <typename T>
    FusionModel<T> restore_model() const;
};

}  // namespace fuselearn::net
