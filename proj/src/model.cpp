#include "fuselearn/model.hpp"

#include <algorithm>
#include <cmath>

namespace fuselearn::net {

std::string style_name(BackboneStyle s) {
    switch (s) {
        case BackboneStyle::plain: return "plain";
        case BackboneStyle::residual: return "residual";
        case BackboneStyle::dense_concat: return "dense";
    }
    return "?";
}

BackboneStyle style_from_name(const std::string& s) {
    if (s == "plain") return BackboneStyle::plain;
    if (s == "residual") return BackboneStyle::residual;
    if (s == "dense" || s == "dense_concat") return BackboneStyle::dense_concat;
    throw ConfigError("unknown backbone style: '" + s + "'");
}

std::string kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::fusion: return "fusion";
        case ModelKind::image_only: return "image_only";
        case ModelKind::feature_only: return "feature_only";
    }
    return "?";
}

ModelKind kind_from_name(const std::string& s) {
    if (s == "fusion") return ModelKind::fusion;
    if (s == "image_only" || s == "image-only") return ModelKind::image_only;
    if (s == "feature_only" || s == "feature-only") return ModelKind::feature_only;
    throw ConfigError("unknown model kind: '" + s + "'");
}

void BackboneProfile::validate() const {
    if (stage_widths.empty()) throw ConfigError("backbone: no stages");
    for (int w : stage_widths)
        if (w < 1) throw ConfigError("backbone: stage width must be positive");
    if (feature_dim() < 8) throw ConfigError("backbone: native feature dim must be >= 8");
    if (stem_width < 1) throw ConfigError("backbone: stem width must be positive");
    if (stem_stride != 1 && stem_stride != 2) throw ConfigError("backbone: stem stride must be 1 or 2");
    if (style == BackboneStyle::dense_concat)
        for (int w : stage_widths)
            if (w % 2 != 0) throw ConfigError("backbone: dense-concat widths must be even");
}

BackboneProfile BackboneProfile::preset(BackboneStyle s) {
    BackboneProfile p;
    p.style = s;
    p.stem_width = 8;
    p.stem_stride = 2;
    switch (s) {
        case BackboneStyle::plain: p.stage_widths = {16, 32, 64, 128}; break;
        case BackboneStyle::residual: p.stage_widths = {16, 32, 64, 160}; break;
        case BackboneStyle::dense_concat: p.stage_widths = {24, 48, 96, 192}; break;
    }
    return p;
}

BackboneProfile BackboneProfile::preset(const std::string& name) {
    return preset(style_from_name(name));
}

int FusionConfig::head_input_dim() const {
    switch (kind) {
        case ModelKind::fusion: return image_feat_dim + clinical_feat_dim;
        case ModelKind::image_only: return image_feat_dim;
        case ModelKind::feature_only: return clinical_feat_dim;
    }
    return 0;
}

void FusionConfig::validate() const {
    if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
    if (head_hidden.size() != 2) throw ConfigError("config: head must have exactly two hidden layers");
    for (int h : head_hidden)
        if (h < 1) throw ConfigError("config: head hidden dims must be positive");
    if (dropout_image < 0 || dropout_image >= 1 || dropout_clinical < 0 || dropout_clinical >= 1)
        throw ConfigError("config: dropout rates must be in [0,1)");
    if (kind != ModelKind::feature_only) {
        backbone.validate();
        if (image_size < 8) throw ConfigError("config: image size must be >= 8");
        if (image_feat_dim < 1) throw ConfigError("config: image_feat_dim must be positive");
    }
    if (kind != ModelKind::image_only) {
        if (clinical_input_dim < 1) throw ConfigError("config: clinical_input_dim must be positive");
        if (clinical_feat_dim != 128) throw ConfigError("config: clinical_feat_dim is fixed at 128");
    }
}

// ---- parameter construction -------------------------------------------------

template <typename T>
FusionModel<T>::FusionModel(const FusionConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build_parameters();
}

template <typename T>
void FusionModel<T>::build_parameters() {
    Rng rng(cfg_.seed);
    auto conv = [&](const std::string& name, int out_ch, int in_ch, int k) {
        params_.add(name + ".w", ad::he_uniform<T>({out_ch, in_ch, k, k}, in_ch * k * k, rng));
        params_.add(name + ".b", ad::Tensor<T>({out_ch}));
    };
    auto fc = [&](const std::string& name, int out_dim, int in_dim) {
        params_.add(name + ".w", ad::he_uniform<T>({out_dim, in_dim}, in_dim, rng));
        params_.add(name + ".b", ad::Tensor<T>({out_dim}));
    };

    if (cfg_.kind != ModelKind::feature_only) {
        const auto& bb = cfg_.backbone;
        conv("backbone.stem", bb.stem_width, 3, 3);
        int cin = bb.stem_width;
        for (size_t i = 0; i < bb.stage_widths.size(); ++i) {
            const std::string base = "backbone.s" + std::to_string(i);
            const int w = bb.stage_widths[i];
            switch (bb.style) {
                case BackboneStyle::plain:
                    conv(base + ".conv1", w, cin, 3);
                    break;
                case BackboneStyle::residual:
                    conv(base + ".conv1", w, cin, 3);
                    conv(base + ".conv2", w, w, 3);
                    if (cin != w) conv(base + ".skip", w, cin, 1);
                    break;
                case BackboneStyle::dense_concat: {
                    const int g = w / 2;
                    conv(base + ".conv1", g, cin, 3);
                    conv(base + ".conv2", g, cin + g, 3);
                    break;
                }
            }
            cin = w;
        }
        fc("img_proj", cfg_.image_feat_dim, bb.feature_dim());
    }
    if (cfg_.kind != ModelKind::image_only)
        fc("clin", cfg_.clinical_feat_dim, cfg_.clinical_input_dim);

    fc("head.fc1", cfg_.head_hidden[0], cfg_.head_input_dim());
    fc("head.fc2", cfg_.head_hidden[1], cfg_.head_hidden[0]);
    fc("head.out", cfg_.num_classes, cfg_.head_hidden[1]);
}

// ---- graphs --------------------------------------------------------------

template <typename T>
ad::TensorRef<T> FusionModel<T>::backbone_features(ad::Tape<T>& tape,
                                                   const ad::TensorRef<T>& image,
                                                   std::vector<ad::TensorRef<T>>* stage_maps) {
    const auto& bb = cfg_.backbone;
    auto x = ad::relu(tape, ad::conv2d(tape, image, params_.get("backbone.stem.w"),
                                       params_.get("backbone.stem.b"), bb.stem_stride, 1));
    for (size_t i = 0; i < bb.stage_widths.size(); ++i) {
        const std::string base = "backbone.s" + std::to_string(i);
        const int w = bb.stage_widths[i];
        const int cin = x->dim(0);
        switch (bb.style) {
            case BackboneStyle::plain:
                x = ad::relu(tape, ad::conv2d(tape, x, params_.get(base + ".conv1.w"),
                                              params_.get(base + ".conv1.b"), 1, 1));
                break;
            case BackboneStyle::residual: {
                auto y = ad::relu(tape, ad::conv2d(tape, x, params_.get(base + ".conv1.w"),
                                                   params_.get(base + ".conv1.b"), 1, 1));
                auto z = ad::conv2d(tape, y, params_.get(base + ".conv2.w"),
                                    params_.get(base + ".conv2.b"), 1, 1);
                auto skip = cin == w ? x
                                     : ad::conv2d(tape, x, params_.get(base + ".skip.w"),
                                                  params_.get(base + ".skip.b"), 1, 0);
                x = ad::relu(tape, ad::add(tape, z, skip));
                break;
            }
            case BackboneStyle::dense_concat: {
                auto y1 = ad::relu(tape, ad::conv2d(tape, x, params_.get(base + ".conv1.w"),
                                                    params_.get(base + ".conv1.b"), 1, 1));
                auto y2 = ad::relu(
                    tape, ad::conv2d(tape, ad::concat_channels<T>(tape, {x, y1}),
                                     params_.get(base + ".conv2.w"), params_.get(base + ".conv2.b"),
                                     1, 1));
                x = ad::concat_channels<T>(tape, {y1, y2});
                break;
            }
        }
        if (stage_maps) stage_maps->push_back(x);
        if (i + 1 < bb.stage_widths.size()) x = ad::max_pool2d(tape, x, 2);
    }
    return ad::global_avg_pool(tape, x);
}

template <typename T>
ad::TensorRef<T> FusionModel<T>::logits(ad::Tape<T>& tape, const T* image,
                                        const std::vector<T>& clinical, bool train,
                                        Rng* dropout_rng,
                                        std::vector<ad::TensorRef<T>>* stage_maps) {
    Rng null_rng(0);
    Rng& rng = dropout_rng ? *dropout_rng : null_rng;
    std::vector<ad::TensorRef<T>> branches;

    if (cfg_.kind != ModelKind::feature_only) {
        if (!image) throw std::invalid_argument("forward: image input required");
        const int S = cfg_.image_size;
        ad::Tensor<T> leaf({3, S, S});
        std::copy(image, image + leaf.size(), leaf.values.begin());
        auto feat = backbone_features(tape, ad::make_tensor(std::move(leaf)), stage_maps);
        auto proj = ad::relu(tape, ad::dense(tape, feat, params_.get("img_proj.w"),
                                             params_.get("img_proj.b")));
        branches.push_back(ad::dropout(tape, proj, cfg_.dropout_image, train, rng));
    }
    if (cfg_.kind != ModelKind::image_only) {
        if (static_cast<int>(clinical.size()) != cfg_.clinical_input_dim)
            throw std::invalid_argument("forward: clinical vector length " +
                                        std::to_string(clinical.size()) + " != configured " +
                                        std::to_string(cfg_.clinical_input_dim));
        ad::Tensor<T> leaf({cfg_.clinical_input_dim});
        leaf.values.assign(clinical.begin(), clinical.end());
        auto c = ad::relu(tape, ad::dense(tape, ad::make_tensor(std::move(leaf)),
                                          params_.get("clin.w"), params_.get("clin.b")));
        branches.push_back(ad::dropout(tape, c, cfg_.dropout_clinical, train, rng));
    }

    auto h = branches.size() == 1 ? branches[0] : ad::concat(tape, branches);
    h = ad::relu(tape, ad::dense(tape, h, params_.get("head.fc1.w"), params_.get("head.fc1.b")));
    h = ad::relu(tape, ad::dense(tape, h, params_.get("head.fc2.w"), params_.get("head.fc2.b")));
    return ad::dense(tape, h, params_.get("head.out.w"), params_.get("head.out.b"));
}

template <typename T>
ad::TensorRef<T> FusionModel<T>::logits_from_features(ad::Tape<T>& tape,
                                                      const std::vector<T>& features,
                                                      const std::vector<T>& clinical, bool train,
                                                      Rng* dropout_rng) {
    Rng null_rng(0);
    Rng& rng = dropout_rng ? *dropout_rng : null_rng;
    std::vector<ad::TensorRef<T>> branches;

    if (cfg_.kind != ModelKind::feature_only) {
        ad::Tensor<T> leaf({static_cast<int>(features.size())});
        leaf.values = features;
        auto proj = ad::relu(tape, ad::dense(tape, ad::make_tensor(std::move(leaf)),
                                             params_.get("img_proj.w"), params_.get("img_proj.b")));
        branches.push_back(ad::dropout(tape, proj, cfg_.dropout_image, train, rng));
    }
    if (cfg_.kind != ModelKind::image_only) {
        ad::Tensor<T> leaf({cfg_.clinical_input_dim});
        leaf.values.assign(clinical.begin(), clinical.end());
        auto c = ad::relu(tape, ad::dense(tape, ad::make_tensor(std::move(leaf)),
                                          params_.get("clin.w"), params_.get("clin.b")));
        branches.push_back(ad::dropout(tape, c, cfg_.dropout_clinical, train, rng));
    }
    auto h = branches.size() == 1 ? branches[0] : ad::concat(tape, branches);
    h = ad::relu(tape, ad::dense(tape, h, params_.get("head.fc1.w"), params_.get("head.fc1.b")));
    h = ad::relu(tape, ad::dense(tape, h, params_.get("head.fc2.w"), params_.get("head.fc2.b")));
    return ad::dense(tape, h, params_.get("head.out.w"), params_.get("head.out.b"));
}

template <typename T>
std::vector<T> FusionModel<T>::compute_backbone_features(const T* image) {
    ad::Tape<T> tape(false);
    const int S = cfg_.image_size;
    ad::Tensor<T> leaf({3, S, S});
    std::copy(image, image + leaf.size(), leaf.values.begin());
    auto feat = backbone_features(tape, ad::make_tensor(std::move(leaf)));
    return feat->values;
}

template <typename T>
std::vector<double> FusionModel<T>::predict(const T* image, const std::vector<T>& clinical) {
    ad::Tape<T> tape(false);
    auto out = logits(tape, image, clinical, /*train=*/false, nullptr);
    std::vector<double> lg(out->values.begin(), out->values.end());
    return ad::softmax(lg);
}

template <typename T>
void transfer_backbone(const FusionModel<T>& src, FusionModel<T>& dst) {
    for (const auto& p : src.params().items()) {
        if (p.name.rfind("backbone.", 0) != 0) continue;
        auto t = dst.params().get(p.name);
        if (t->shape != p.tensor->shape)
            throw ConfigError("backbone transfer: shape mismatch on '" + p.name + "'");
        t->values = p.tensor->values;
    }
}

std::vector<double> class_weights(const std::vector<long>& counts) {
    if (counts.size() < 2) throw std::invalid_argument("class_weights: need >= 2 classes");
    long total = 0;
    for (long c : counts) {
        if (c <= 0) throw std::invalid_argument("class_weights: every class count must be > 0");
        total += c;
    }
    const double k = static_cast<double>(counts.size());
    std::vector<double> alpha(counts.size());
    for (size_t i = 0; i < counts.size(); ++i)
        alpha[i] = static_cast<double>(total) / (k * static_cast<double>(counts[i]));
    return alpha;
}

template class FusionModel<float>;
template class FusionModel<double>;
template void transfer_backbone<float>(const FusionModel<float>&, FusionModel<float>&);
template void transfer_backbone<double>(const FusionModel<double>&, FusionModel<double>&);

}  // namespace fuselearn::net
