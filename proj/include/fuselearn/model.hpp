#pragma once

#include <array>
#include <string>
#include <vector>

#include "fuselearn/autodiff.hpp"
#include "fuselearn/image.hpp"

// Two-branch fusion network: a compact convolutional image branch and a dense
// clinical branch, concatenated into a shared classification head. The same
// machinery also builds the single-branch (image-only / feature-only) models.

namespace fuselearn::net {

enum class BackboneStyle { plain, residual, dense_concat };
enum class ModelKind { fusion, image_only, feature_only };

std::string style_name(BackboneStyle s);
BackboneStyle style_from_name(const std::string& s);
std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& s);

// Compact 4-stage CNN profiles standing in for large pretrained backbones.
// Three structurally distinct styles with native feature dims 128/160/192.
struct BackboneProfile {
    BackboneStyle style = BackboneStyle::plain;
    int stem_width = 8;
    int stem_stride = 2;
    std::vector<int> stage_widths = {16, 32, 64, 128};

    int feature_dim() const { return stage_widths.back(); }
    void validate() const;
    static BackboneProfile preset(BackboneStyle s);
    static BackboneProfile preset(const std::string& name);
};

struct FusionConfig {
    ModelKind kind = ModelKind::fusion;
    BackboneProfile backbone;
    int image_size = 64;
    int image_feat_dim = 64;      // 64, 128, or the backbone's native dim
    int clinical_feat_dim = 128;  // fixed
    int clinical_input_dim = 0;   // encoded clinical vector length D
    std::vector<int> head_hidden = {128, 64};
    double dropout_image = 0.3;
    double dropout_clinical = 0.3;
    int num_classes = 3;
    uint64_t seed = 0;

    void validate() const;
    int head_input_dim() const;
};

template <typename T>
class FusionModel {
public:
    explicit FusionModel(const FusionConfig& cfg);

    const FusionConfig& config() const { return cfg_; }
    ad::ParameterSet<T>& params() { return params_; }
    const ad::ParameterSet<T>& params() const { return params_; }

    /// Backbone stem+stages+GAP. `stage_maps`, when given, receives each
    /// stage's output map (the last one is the usual saliency target).
    ad::TensorRef<T> backbone_features(ad::Tape<T>& tape, const ad::TensorRef<T>& image,
                                       std::vector<ad::TensorRef<T>>* stage_maps = nullptr);

    /// Full graph to class logits. `image` is 3*S*S (channel-major); either
    /// modality may be unused depending on the model kind.
    ad::TensorRef<T> logits(ad::Tape<T>& tape, const T* image, const std::vector<T>& clinical,
                            bool train, Rng* dropout_rng,
                            std::vector<ad::TensorRef<T>>* stage_maps = nullptr);

    /// Head-only graph from precomputed backbone features (frozen-backbone
    /// stage-1 training path; numerically identical to the full graph).
    ad::TensorRef<T> logits_from_features(ad::Tape<T>& tape, const std::vector<T>& features,
                                          const std::vector<T>& clinical, bool train,
                                          Rng* dropout_rng);

    /// Gradient-free backbone forward; returns the pooled feature vector.
    std::vector<T> compute_backbone_features(const T* image);

    /// Eval-mode class probabilities (sum to 1).
    std::vector<double> predict(const T* image, const std::vector<T>& clinical);

    void freeze_backbone(bool frozen) { params_.set_frozen("backbone.", frozen); }

private:
    FusionConfig cfg_;
    ad::ParameterSet<T> params_;

    void build_parameters();
};

/// Copy all "backbone.*" parameter values from one model into another with an
/// identical backbone profile (image-branch weight transfer).
template <typename T>
void transfer_backbone(const FusionModel<T>& src, FusionModel<T>& dst);

/// Inverse-frequency class weights: alpha_c = N / (K * n_c). Balanced counts
/// give unit weights.
std::vector<double> class_weights(const std::vector<long>& counts);

}  // namespace fuselearn::net
