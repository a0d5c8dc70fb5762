#include "fuselearn/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace fuselearn::img {

namespace {

const unsigned char kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t read_be32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
           static_cast<uint32_t>(p[2]) << 8 | static_cast<uint32_t>(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    be32(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = static_cast<uint32_t>(
        ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    be32(out, crc);
}

void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<uint8_t>& pixels) {
    if (width < 1 || height < 1 ||
        pixels.size() != static_cast<size_t>(width) * height * channels)
        throw DataError("write_png: bad dimensions for " + path);

    std::vector<uint8_t> ihdr;
    be32(ihdr, static_cast<uint32_t>(width));
    be32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);              // color type: gray / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);

    // filter byte 0 (None) per scanline
    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<uint8_t> raw(static_cast<size_t>(height) * (stride + 1));
    for (int r = 0; r < height; ++r) {
        raw[static_cast<size_t>(r) * (stride + 1)] = 0;
        std::memcpy(&raw[static_cast<size_t>(r) * (stride + 1) + 1], &pixels[r * stride], stride);
    }

    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> idat(bound);
    if (::compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("write_png: deflate failed for " + path);
    idat.resize(bound);

    std::vector<uint8_t> out(kPngSig, kPngSig + 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", idat);
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

// Returns defiltered pixels (width*height*channels) for 8-bit gray or RGB PNGs.
std::vector<uint8_t> read_png(const std::string& path, int& width, int& height, int& channels) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (file.size() < 8 || std::memcmp(file.data(), kPngSig, 8) != 0)
        throw DataError("not a PNG file: " + path);

    width = height = channels = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 12 <= file.size()) {
        const uint32_t len = read_be32(&file[pos]);
        if (pos + 12 + len > file.size()) throw DataError("truncated PNG chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
        const uint8_t* data = &file[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("bad IHDR in " + path);
            width = static_cast<int>(read_be32(data));
            height = static_cast<int>(read_be32(data + 4));
            const int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8) throw DataError("unsupported PNG bit depth in " + path);
            if (color == 0)
                channels = 1;
            else if (color == 2)
                channels = 3;
            else
                throw DataError("unsupported PNG color type " + std::to_string(color) + " in " + path);
            if (interlace != 0) throw DataError("interlaced PNG not supported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width < 1 || height < 1 || idat.empty()) throw DataError("malformed PNG: " + path);

    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<uint8_t> raw(static_cast<size_t>(height) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw DataError("PNG inflate failed: " + path);

    std::vector<uint8_t> pixels(static_cast<size_t>(height) * stride);
    const int bpp = channels;
    for (int r = 0; r < height; ++r) {
        const uint8_t filter = raw[static_cast<size_t>(r) * (stride + 1)];
        const uint8_t* src = &raw[static_cast<size_t>(r) * (stride + 1) + 1];
        uint8_t* cur = &pixels[static_cast<size_t>(r) * stride];
        const uint8_t* up = r > 0 ? &pixels[static_cast<size_t>(r - 1) * stride] : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw DataError("bad PNG filter type in " + path);
            }
            cur[i] = static_cast<uint8_t>(v & 0xff);
        }
    }
    return pixels;
}

RawImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw DataError("not a P5 PGM: " + path);
    // header tokens may be separated by whitespace/comments
    auto next_int = [&]() -> int {
        for (;;) {
            int ch = f.peek();
            if (ch == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(ch)) {
                f.get();
            } else {
                break;
            }
        }
        int v;
        f >> v;
        return v;
    };
    RawImage img;
    img.width = next_int();
    img.height = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw DataError("PGM maxval must be 255: " + path);
    f.get();  // single whitespace before raster
    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw DataError("truncated PGM raster: " + path);
    return img;
}

bool is_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    unsigned char sig[8] = {};
    f.read(reinterpret_cast<char*>(sig), 8);
    return f && std::memcmp(sig, kPngSig, 8) == 0;
}

}  // namespace

RawImage read_gray(const std::string& path) {
    RawImage img;
    if (is_png(path)) {
        int w, h, ch;
        std::vector<uint8_t> px = read_png(path, w, h, ch);
        if (ch != 1) throw DataError("expected grayscale PNG: " + path);
        img.width = w;
        img.height = h;
        img.pixels = std::move(px);
    } else {
        img = read_pgm(path);
    }
    if (img.width < 16 || img.height < 16)
        throw DataError("image too small (< 16 px per side): " + path);
    return img;
}

LungMask read_mask(const std::string& path) {
    RawImage img = read_gray(path);
    LungMask m;
    m.width = img.width;
    m.height = img.height;
    m.fg.resize(img.pixels.size());
    bool any = false;
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        m.fg[i] = img.pixels[i] != 0;
        any = any || m.fg[i];
    }
    if (!any) throw DataError("mask has no foreground pixels: " + path);
    return m;
}

void write_pgm(const std::string& path, const RawImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

void write_png_gray(const std::string& path, const RawImage& img) {
    write_png(path, img.width, img.height, 1, img.pixels);
}

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<uint8_t>& pixels) {
    write_png(path, width, height, 3, pixels);
}

RgbImage read_png_rgb(const std::string& path) {
    RgbImage img;
    int ch;
    img.pixels = read_png(path, img.width, img.height, ch);
    if (ch == 1) {  // promote grayscale
        std::vector<uint8_t> rgb(img.pixels.size() * 3);
        for (size_t i = 0; i < img.pixels.size(); ++i)
            rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = img.pixels[i];
        img.pixels = std::move(rgb);
    }
    return img;
}

}  // namespace fuselearn::img
