#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fuselearn/checkpoint.hpp"
#include "fuselearn/stats.hpp"

// Test-time modality regimes for a jointly trained fusion model: full input,
// image-only (training-mean clinical substitute), feature-only (neutral
// training image substitute), and a partial-clinical regime keeping a random
// nested subset of raw-feature groups. Plus ensemble probability averaging.

namespace fuselearn::infer {

enum class ModalityTag { full, fusion_image_only, fusion_feature_only, partial_clinical };

struct ModalityMode {
    ModalityTag tag = ModalityTag::full;
    double fraction = 1.0;   // partial_clinical only
    uint64_t mask_seed = 0;  // partial_clinical only

    /// "full" | "image-only" | "feature-only" | "partial:<fraction>"
    static ModalityMode parse(const std::string& text, uint64_t mask_seed = 0);
    std::string name() const;
};

struct NeutralImageSelection {
    std::string image_id;
    std::array<double, 3> probs{};
    double score = 0;  // max-norm distance to the uniform distribution
};

/// Replace the complement of a kept subset of raw-feature groups with the
/// training-mean coordinates. ceil(fraction * G) groups are kept; the kept
/// sets are nested across fractions for a fixed seed.
std::vector<double> mask_clinical_subset(const std::vector<double>& encoded,
                                         const clin::FittedPreprocessor& fitted,
                                         const std::vector<double>& mean_vector, double fraction,
                                         uint64_t seed);

/// Unweighted (or explicitly weighted) coordinate-wise mean of probability
/// vectors.
std::array<double, 3> ensemble_average(const std::vector<std::array<double, 3>>& probs,
                                       const std::vector<double>& weights = {});

// One checkpointed model plus its cached inference artifacts.
template <typename T>
class Predictor {
public:
    explicit Predictor(net::Checkpoint ckpt);

    const net::Checkpoint& checkpoint() const { return ckpt_; }
    net::FusionModel<T>& model() { return model_; }

    /// Probabilities for one subject under a modality mode. Image planes and
    /// encoded clinical vector are optional depending on the model kind and
    /// mode; a mode that needs a missing cached artifact raises PrereqError.
    std::array<double, 3> predict(const std::vector<double>* image_planes,
                                  const std::vector<double>* clinical_encoded,
                                  const ModalityMode& mode);

private:
    net::Checkpoint ckpt_;
    net::FusionModel<T> model_;
    std::vector<T> neutral_image_;  // cached conversion
};

/// Forward each training image with the training-mean clinical vector and
/// pick the image whose prediction is closest (max-norm) to uniform; ties
/// break to the lexicographically smaller id.
template <typename T>
NeutralImageSelection select_neutral_image(
    net::FusionModel<T>& model, const std::vector<double>& mean_clinical,
    const std::vector<std::pair<std::string, std::vector<double>>>& training_images);

/// Ensemble prediction: each member evaluates the subject under the mode
/// with its own cached artifacts, then the outputs are averaged.
template <typename T>
std::array<double, 3> predict_subject(std::vector<Predictor<T>>& members,
                                      const std::vector<double>* image_planes,
                                      const std::vector<double>* clinical_encoded,
                                      const ModalityMode& mode);

}  // namespace fuselearn::infer
