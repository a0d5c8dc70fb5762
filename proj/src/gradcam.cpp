#include "fuselearn/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "fuselearn/image_io.hpp"

namespace fuselearn::cam {

double Heatmap::mass_in_quadrant(int quadrant) const {
    double total = 0, inside = 0;
    const int half = size / 2;
    const int r0 = (quadrant / 2) * half, c0 = (quadrant % 2) * half;
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double v = values[static_cast<size_t>(r) * size + c];
            total += v;
            if (r >= r0 && r < r0 + half && c >= c0 && c < c0 + half) inside += v;
        }
    }
    return total > 0 ? inside / total : 0.0;
}

namespace {

// corner-aligned bilinear upsample of a single-channel map
std::vector<double> upsample(const std::vector<double>& in, int h, int w, int S) {
    std::vector<double> out(static_cast<size_t>(S) * S);
    const double sr = S > 1 ? static_cast<double>(h - 1) / (S - 1) : 0.0;
    const double sc = S > 1 ? static_cast<double>(w - 1) / (S - 1) : 0.0;
    for (int r = 0; r < S; ++r) {
        const double fr = r * sr;
        const int r0 = std::min(static_cast<int>(fr), h - 1);
        const int r1 = std::min(r0 + 1, h - 1);
        const double wr = fr - r0;
        for (int c = 0; c < S; ++c) {
            const double fc = c * sc;
            const int c0 = std::min(static_cast<int>(fc), w - 1);
            const int c1 = std::min(c0 + 1, w - 1);
            const double wc = fc - c0;
            out[static_cast<size_t>(r) * S + c] =
                (1 - wr) * ((1 - wc) * in[static_cast<size_t>(r0) * w + c0] +
                            wc * in[static_cast<size_t>(r0) * w + c1]) +
                wr * ((1 - wc) * in[static_cast<size_t>(r1) * w + c0] +
                      wc * in[static_cast<size_t>(r1) * w + c1]);
        }
    }
    return out;
}

}  // namespace

template <typename T>
Heatmap gradcam(net::FusionModel<T>& model, const std::vector<double>& image_planes,
                const std::vector<double>& clinical_encoded, int target_class, int layer,
                const std::string& subject_id) {
    const auto& cfg = model.config();
    if (cfg.kind == net::ModelKind::feature_only)
        throw std::invalid_argument("gradcam: model has no image branch");
    if (target_class < 0 || target_class >= cfg.num_classes)
        throw std::invalid_argument("gradcam: bad target class");

    std::vector<T> image(image_planes.begin(), image_planes.end());
    std::vector<T> clinical(clinical_encoded.begin(), clinical_encoded.end());

    // gradients must reach the convolution stack even on a stage-1 snapshot
    model.freeze_backbone(false);

    ad::Tape<T> tape;
    std::vector<ad::TensorRef<T>> maps;
    auto logits = model.logits(tape, image.data(), clinical, /*train=*/false, nullptr, &maps);
    if (layer < 0) layer = static_cast<int>(maps.size()) - 1;
    if (layer >= static_cast<int>(maps.size()))
        throw std::invalid_argument("gradcam: layer index out of range");
    auto act = maps[static_cast<size_t>(layer)];
    if (act->shape.size() != 3)
        throw std::invalid_argument("gradcam: target layer has no spatial extent");

    model.params().zero_grads();
    auto score = ad::pick(tape, logits, target_class);
    tape.backward(score);

    const int C = act->dim(0), H = act->dim(1), W = act->dim(2);
    const int hw = H * W;
    act->ensure_grad();

    std::vector<double> map(static_cast<size_t>(hw), 0.0);
    for (int c = 0; c < C; ++c) {
        double wk = 0;
        const T* g = act->grad.data() + static_cast<size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) wk += static_cast<double>(g[i]);
        wk /= hw;
        const T* a = act->values.data() + static_cast<size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) map[i] += wk * static_cast<double>(a[i]);
    }
    for (double& v : map) v = std::max(0.0, v);

    Heatmap out;
    out.size = cfg.image_size;
    out.target_class = target_class;
    out.layer = layer;
    out.subject_id = subject_id;
    out.values = upsample(map, H, W, cfg.image_size);

    double mx = 0;
    for (double v : out.values) mx = std::max(mx, v);
    if (mx > 0)
        for (double& v : out.values) v /= mx;  // a zero map stays zero
    return out;
}

std::vector<uint8_t> composite_overlay(const img::RawImage& base, const Heatmap& heat) {
    img::RawImage gray = base;
    if (gray.width != heat.size || gray.height != heat.size)
        gray = img::resize_bilinear(gray, heat.size);
    std::vector<uint8_t> rgb(static_cast<size_t>(heat.size) * heat.size * 3);
    for (size_t i = 0; i < gray.pixels.size(); ++i) {
        const double g = gray.pixels[i];
        const double h = heat.values[i];
        rgb[3 * i] = static_cast<uint8_t>(std::lround(g + h * (255.0 - g)));
        rgb[3 * i + 1] = gray.pixels[i];
        rgb[3 * i + 2] = gray.pixels[i];
    }
    return rgb;
}

void overlay(const img::RawImage& base, const Heatmap& heat, const std::string& path) {
    img::write_png_rgb(path, heat.size, heat.size, composite_overlay(base, heat));
}

template Heatmap gradcam<float>(net::FusionModel<float>&, const std::vector<double>&,
                                const std::vector<double>&, int, int, const std::string&);
template Heatmap gradcam<double>(net::FusionModel<double>&, const std::vector<double>&,
                                 const std::vector<double>&, int, int, const std::string&);

}  // namespace fuselearn::cam
