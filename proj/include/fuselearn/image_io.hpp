#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fuselearn/image.hpp"

namespace fuselearn::img {

/// Load an 8-bit grayscale image; format picked by magic bytes (PGM P5 or PNG).
RawImage read_gray(const std::string& path);

/// Load a binary mask (same formats; nonzero = foreground).
LungMask read_mask(const std::string& path);

void write_pgm(const std::string& path, const RawImage& img);

void write_png_gray(const std::string& path, const RawImage& img);

/// pixels are interleaved RGB, row-major, 3 * width * height bytes.
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<uint8_t>& pixels);

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // interleaved RGB
};

RgbImage read_png_rgb(const std::string& path);

}  // namespace fuselearn::img
