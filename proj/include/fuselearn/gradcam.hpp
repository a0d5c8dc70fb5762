#pragma once

#include <string>
#include <vector>

#include "fuselearn/image.hpp"
#include "fuselearn/model.hpp"

// Gradient class activation maps over the image branch: spatially averaged
// class-score gradients weight the chosen convolution stage's activation
// maps; the ReLU'd weighted sum is upsampled and normalized by its maximum.

namespace fuselearn::cam {

struct Heatmap {
    int size = 0;                // S; values are S*S in [0,1]
    std::vector<double> values;
    int target_class = 0;
    int layer = 0;  // backbone stage index
    std::string subject_id;

    double mass_in_quadrant(int quadrant) const;  // fraction of total mass
};

/// Compute the heatmap for one subject. `layer` < 0 selects the last backbone
/// stage. Clinical input may be empty for image-only models.
template <typename T>
Heatmap gradcam(net::FusionModel<T>& model, const std::vector<double>& image_planes,
                const std::vector<double>& clinical_encoded, int target_class, int layer = -1,
                const std::string& subject_id = "");

/// Composite the heatmap over the grayscale base as a red overlay and write
/// an RGB PNG. A zero heatmap reproduces the grayscale image exactly.
void overlay(const img::RawImage& base, const Heatmap& heat, const std::string& path);

/// The composited RGB bytes (interleaved), exposed for verification.
std::vector<uint8_t> composite_overlay(const img::RawImage& base, const Heatmap& heat);

}  // namespace fuselearn::cam
