#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "fuselearn/image.hpp"
#include "fuselearn/image_io.hpp"

using namespace fuselearn;
using namespace fuselearn::img;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

RawImage solid(int w, int h, uint8_t v) {
    RawImage im;
    im.width = w;
    im.height = h;
    im.pixels.assign(static_cast<size_t>(w) * h, v);
    return im;
}

LungMask full_mask(int w, int h) {
    LungMask m;
    m.width = w;
    m.height = h;
    m.fg.assign(static_cast<size_t>(w) * h, 1);
    return m;
}

}  // namespace

TEST_CASE("crop: full-foreground mask reproduces the original image") {
    Rng rng(5);
    RawImage im = solid(20, 16, 0);
    for (auto& p : im.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
    const auto out = crop_to_mask_bbox(im, full_mask(20, 16), 0.05);
    CHECK(out.width == 20);
    CHECK(out.height == 16);
    CHECK(out.pixels == im.pixels);
}

TEST_CASE("crop: single center pixel with zero margin gives a 1x1 crop") {
    RawImage im = solid(17, 17, 50);
    im.at(8, 8) = 200;
    LungMask m;
    m.width = m.height = 17;
    m.fg.assign(17 * 17, 0);
    m.fg[8 * 17 + 8] = 1;
    const auto out = crop_to_mask_bbox(im, m, 0.0);
    REQUIRE(out.width == 1);
    REQUIRE(out.height == 1);
    CHECK(out.pixels[0] == 200);
}

TEST_CASE("crop: margin expands by floor of the fractional box extent") {
    // mask box rows 20..79 (extent 60 -> margin 3), cols 30..69 (extent 40 -> margin 2)
    LungMask m;
    m.width = m.height = 100;
    m.fg.assign(100 * 100, 0);
    for (int r = 20; r <= 79; ++r)
        for (int c = 30; c <= 69; ++c) m.fg[r * 100 + c] = 1;
    const auto box = mask_bbox(m, 0.05);
    CHECK(box.row0 == 17);
    CHECK(box.row1 == 82);
    CHECK(box.col0 == 28);
    CHECK(box.col1 == 71);

    LungMask empty;
    empty.width = empty.height = 8;
    empty.fg.assign(64, 0);
    CHECK_THROWS_AS(mask_bbox(empty, 0.05), DataError);
}

TEST_CASE("resize: identity at the same size, constants stay constant") {
    Rng rng(9);
    RawImage im = solid(24, 24, 0);
    for (auto& p : im.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
    CHECK(resize_bilinear(im, 24).pixels == im.pixels);

    const auto c = resize_bilinear(solid(10, 10, 77), 16);
    for (auto p : c.pixels) CHECK(p == 77);
}

TEST_CASE("resize: 2x2 checkerboard to 4x4 matches the hand-computed bilinear grid") {
    RawImage im = solid(2, 2, 0);
    im.at(0, 1) = 255;
    im.at(1, 0) = 255;
    const auto out = resize_bilinear(im, 8);  // resize floor is 8
    // corner-aligned sample positions are at fractions k/7 of the source square;
    // independent oracle: f(y, x) = (1-y)(1-x)*0 + (1-y)x*255 + y(1-x)*255 + yx*0
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
            const double y = r / 7.0, x = c / 7.0;
            const double expect = (1 - y) * x * 255.0 + y * (1 - x) * 255.0;
            CHECK(static_cast<int>(out.at(r, c)) ==
                  static_cast<int>(std::lround(expect)));
        }
    }
    CHECK_THROWS_AS(resize_bilinear(im, 4), std::invalid_argument);
}

TEST_CASE("scale_and_normalize applies the per-channel constants") {
    RawImage im = solid(8, 8, 0);
    im.pixels[0] = 0;
    im.pixels[1] = 255;
    const auto pre = scale_and_normalize(im);
    CHECK(pre.at(0, 0, 0) == doctest::Approx((0.0 - 0.485) / 0.229).epsilon(1e-12));
    CHECK(pre.at(0, 0, 0) == doctest::Approx(-2.1179).epsilon(1e-4));
    CHECK(pre.at(0, 0, 1) == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-12));
    CHECK(pre.at(0, 0, 1) == doctest::Approx(2.2489).epsilon(1e-4));

    // channels are identical once the affine constants are undone
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
            const double g0 = pre.at(0, r, c) * kChannelStd[0] + kChannelMean[0];
            const double g1 = pre.at(1, r, c) * kChannelStd[1] + kChannelMean[1];
            const double g2 = pre.at(2, r, c) * kChannelStd[2] + kChannelMean[2];
            CHECK(g0 == doctest::Approx(g1).epsilon(1e-12));
            CHECK(g0 == doctest::Approx(g2).epsilon(1e-12));
        }
    }
}

TEST_CASE("pipeline is deterministic and bounded") {
    Rng rng(31);
    RawImage im = solid(40, 40, 0);
    for (auto& p : im.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
    const auto a = preprocess(im, full_mask(40, 40), 16, "probe");
    const auto b = preprocess(im, full_mask(40, 40), 16, "probe");
    CHECK(a.planes == b.planes);

    for (int ch = 0; ch < 3; ++ch) {
        const double lo = (0.0 - kChannelMean[ch]) / kChannelStd[ch];
        const double hi = (1.0 - kChannelMean[ch]) / kChannelStd[ch];
        for (int i = 0; i < 16 * 16; ++i) {
            const double v = a.planes[ch * 256 + i];
            CHECK(std::isfinite(v));
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("crop+resize commutes with intensity scaling on exact-grid inputs") {
    // multiples of 49 keep every corner-aligned k/7 bilinear sample integral,
    // so doubling intensities doubles the resized output exactly
    RawImage im = solid(2, 2, 0);
    im.at(0, 1) = 49;
    im.at(1, 0) = 98;
    im.at(1, 1) = 49;
    RawImage doubled = im;
    for (auto& p : doubled.pixels) p = static_cast<uint8_t>(p * 2);

    const auto small = resize_bilinear(im, 8);
    const auto big = resize_bilinear(doubled, 8);
    for (size_t i = 0; i < small.pixels.size(); ++i)
        CHECK(static_cast<int>(big.pixels[i]) == 2 * static_cast<int>(small.pixels[i]));
}

TEST_CASE("PGM and PNG files round-trip through the readers") {
    Rng rng(3);
    RawImage im = solid(24, 18, 0);
    for (auto& p : im.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));

    const std::string pgm = temp_path("fuselearn_io_test.pgm");
    write_pgm(pgm, im);
    const auto back_pgm = read_gray(pgm);
    CHECK(back_pgm.pixels == im.pixels);

    const std::string png = temp_path("fuselearn_io_test.png");
    write_png_gray(png, im);
    const auto back_png = read_gray(png);
    CHECK(back_png.width == 24);
    CHECK(back_png.height == 18);
    CHECK(back_png.pixels == im.pixels);

    std::vector<uint8_t> rgb(24 * 18 * 3);
    for (auto& v : rgb) v = static_cast<uint8_t>(rng.uniform_int(256));
    const std::string png_rgb = temp_path("fuselearn_io_rgb.png");
    write_png_rgb(png_rgb, 24, 18, rgb);
    const auto back_rgb = read_png_rgb(png_rgb);
    CHECK(back_rgb.pixels == rgb);
}

TEST_CASE("an all-background mask file is rejected") {
    const std::string path = temp_path("fuselearn_zero_mask.pgm");
    write_pgm(path, solid(16, 16, 0));
    CHECK_THROWS_AS(read_mask(path), DataError);
}

TEST_CASE("plane dumps round-trip through the FIMG format") {
    Rng rng(8);
    RawImage im = solid(16, 16, 0);
    for (auto& p : im.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
    const auto pre = scale_and_normalize(im);
    const std::string path = temp_path("fuselearn_planes.fimg");
    dump_planes(pre, path);
    const auto back = load_planes(path);
    REQUIRE(back.size == 16);
    for (size_t i = 0; i < pre.planes.size(); ++i)
        CHECK(back.planes[i] == doctest::Approx(pre.planes[i]).epsilon(1e-6));
}
