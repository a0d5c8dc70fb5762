#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fuselearn/common.hpp"

namespace fuselearn::img {

struct RawImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major grayscale

    uint8_t at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
    uint8_t& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
};

struct LungMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> fg;  // nonzero = foreground

    bool at(int r, int c) const { return fg[static_cast<size_t>(r) * width + c] != 0; }
};

struct CropBox {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive
};

// 3 x S x S planes, channel-major. Channels are identical before the
// per-channel normalization constants are applied.
struct PreprocessedImage {
    int size = 0;
    std::vector<double> planes;
    std::string source_path;
    CropBox crop;

    double at(int c, int r, int col) const {
        return planes[(static_cast<size_t>(c) * size + r) * size + col];
    }
};

// Per-channel normalization constants applied after the /255 scaling.
inline constexpr std::array<double, 3> kChannelMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kChannelStd = {0.229, 0.224, 0.225};

/// Tight bounding box of the mask foreground, expanded per side by
/// floor(margin_frac * box_extent) and clamped to the image bounds.
CropBox mask_bbox(const LungMask& mask, double margin_frac);

RawImage crop_to_mask_bbox(const RawImage& raw, const LungMask& mask, double margin_frac = 0.05,
                           CropBox* out_box = nullptr);

/// Corner-aligned bilinear resize to S x S, rounded back to 8 bits.
RawImage resize_bilinear(const RawImage& img, int S);

/// Replicate to 3 channels, scale by 1/255, then normalize per channel.
PreprocessedImage scale_and_normalize(const RawImage& img);

/// Full pipeline: crop -> resize(S) -> scale_and_normalize. Records provenance.
PreprocessedImage preprocess(const RawImage& raw, const LungMask& mask, int S,
                             const std::string& source_path, double margin_frac = 0.05);

/// Debug dump: 16-byte header ("FIMG", u32 channels, u32 side, u32 reserved)
/// followed by little-endian float32 planes.
void dump_planes(const PreprocessedImage& img, const std::string& path);
PreprocessedImage load_planes(const std::string& path);

}  // namespace fuselearn::img
