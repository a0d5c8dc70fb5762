#include "fuselearn/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fuselearn::img {

CropBox mask_bbox(const LungMask& mask, double margin_frac) {
    int r0 = mask.height, r1 = -1, c0 = mask.width, c1 = -1;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            if (!mask.at(r, c)) continue;
            r0 = std::min(r0, r);
            r1 = std::max(r1, r);
            c0 = std::min(c0, c);
            c1 = std::max(c1, c);
        }
    }
    if (r1 < 0) throw DataError("mask has no foreground pixels");
    const int mr = static_cast<int>(std::floor(margin_frac * (r1 - r0 + 1)));
    const int mc = static_cast<int>(std::floor(margin_frac * (c1 - c0 + 1)));
    CropBox box;
    box.row0 = std::max(0, r0 - mr);
    box.row1 = std::min(mask.height - 1, r1 + mr);
    box.col0 = std::max(0, c0 - mc);
    box.col1 = std::min(mask.width - 1, c1 + mc);
    return box;
}

RawImage crop_to_mask_bbox(const RawImage& raw, const LungMask& mask, double margin_frac,
                           CropBox* out_box) {
    if (raw.width != mask.width || raw.height != mask.height)
        throw DataError("image/mask shape mismatch: " + std::to_string(raw.width) + "x" +
                        std::to_string(raw.height) + " vs " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height));
    const CropBox box = mask_bbox(mask, margin_frac);
    if (out_box) *out_box = box;
    RawImage out;
    out.height = box.row1 - box.row0 + 1;
    out.width = box.col1 - box.col0 + 1;
    out.pixels.resize(static_cast<size_t>(out.width) * out.height);
    for (int r = 0; r < out.height; ++r)
        std::memcpy(&out.pixels[static_cast<size_t>(r) * out.width],
                    &raw.pixels[static_cast<size_t>(r + box.row0) * raw.width + box.col0],
                    static_cast<size_t>(out.width));
    return out;
}

RawImage resize_bilinear(const RawImage& in, int S) {
    if (S < 8) throw std::invalid_argument("resize_bilinear: target size must be >= 8");
    if (in.width < 1 || in.height < 1) throw DataError("resize_bilinear: empty input");
    RawImage out;
    out.width = out.height = S;
    out.pixels.resize(static_cast<size_t>(S) * S);
    // corner-aligned sampling
    const double sr = S > 1 ? static_cast<double>(in.height - 1) / (S - 1) : 0.0;
    const double sc = S > 1 ? static_cast<double>(in.width - 1) / (S - 1) : 0.0;
    for (int r = 0; r < S; ++r) {
        const double fr = r * sr;
        const int r0 = static_cast<int>(fr);
        const int r1 = std::min(r0 + 1, in.height - 1);
        const double wr = fr - r0;
        for (int c = 0; c < S; ++c) {
            const double fc = c * sc;
            const int c0 = static_cast<int>(fc);
            const int c1 = std::min(c0 + 1, in.width - 1);
            const double wc = fc - c0;
            const double v = (1 - wr) * ((1 - wc) * in.at(r0, c0) + wc * in.at(r0, c1)) +
                             wr * ((1 - wc) * in.at(r1, c0) + wc * in.at(r1, c1));
            out.pixels[static_cast<size_t>(r) * S + c] =
                static_cast<uint8_t>(std::lround(std::min(255.0, std::max(0.0, v))));
        }
    }
    return out;
}

PreprocessedImage scale_and_normalize(const RawImage& in) {
    if (in.width != in.height) throw DataError("scale_and_normalize: expected a square image");
    PreprocessedImage out;
    out.size = in.width;
    const size_t plane = static_cast<size_t>(out.size) * out.size;
    out.planes.resize(3 * plane);
    for (int ch = 0; ch < 3; ++ch) {
        const double mu = kChannelMean[ch];
        const double sigma = kChannelStd[ch];
        double* dst = out.planes.data() + ch * plane;
        for (size_t i = 0; i < plane; ++i) dst[i] = (in.pixels[i] / 255.0 - mu) / sigma;
    }
    return out;
}

PreprocessedImage preprocess(const RawImage& raw, const LungMask& mask, int S,
                             const std::string& source_path, double margin_frac) {
    CropBox box;
    RawImage cropped = crop_to_mask_bbox(raw, mask, margin_frac, &box);
    PreprocessedImage out = scale_and_normalize(resize_bilinear(cropped, S));
    out.source_path = source_path;
    out.crop = box;
    return out;
}

namespace {
void put_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}
}  // namespace

void dump_planes(const PreprocessedImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f.write("FIMG", 4);
    put_u32(f, 3);
    put_u32(f, static_cast<uint32_t>(img.size));
    put_u32(f, 0);
    for (double v : img.planes) {
        float x = static_cast<float>(v);
        uint32_t u;
        std::memcpy(&u, &x, 4);
        put_u32(f, u);
    }
}

PreprocessedImage load_planes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "FIMG", 4) != 0) throw DataError("bad plane-dump magic in " + path);
    const uint32_t channels = get_u32(f);
    const uint32_t side = get_u32(f);
    get_u32(f);  // reserved
    if (channels != 3) throw DataError("plane dump must have 3 channels");
    PreprocessedImage img;
    img.size = static_cast<int>(side);
    img.planes.resize(3 * static_cast<size_t>(side) * side);
    for (double& v : img.planes) {
        uint32_t u = get_u32(f);
        float x;
        std::memcpy(&x, &u, 4);
        v = x;
    }
    if (!f) throw DataError("truncated plane dump: " + path);
    return img;
}

}  // namespace fuselearn::img
