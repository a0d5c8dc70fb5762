#include "fuselearn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fuselearn::infer {

ModalityMode ModalityMode::parse(const std::string& text, uint64_t mask_seed) {
    ModalityMode m;
    m.mask_seed = mask_seed;
    if (text == "full") {
        m.tag = ModalityTag::full;
    } else if (text == "image-only") {
        m.tag = ModalityTag::fusion_image_only;
    } else if (text == "feature-only") {
        m.tag = ModalityTag::fusion_feature_only;
    } else if (text.rfind("partial:", 0) == 0) {
        m.tag = ModalityTag::partial_clinical;
        m.fraction = std::stod(text.substr(8));
        if (m.fraction < 0.0 || m.fraction > 1.0)
            throw ConfigError("partial fraction must be in [0,1], got " + text);
    } else {
        throw ConfigError("unknown modality mode: '" + text + "'");
    }
    return m;
}

std::string ModalityMode::name() const {
    switch (tag) {
        case ModalityTag::full: return "full";
        case ModalityTag::fusion_image_only: return "image-only";
        case ModalityTag::fusion_feature_only: return "feature-only";
        case ModalityTag::partial_clinical: {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "partial:%g", fraction);
            return buf;
        }
    }
    return "?";
}

std::vector<double> mask_clinical_subset(const std::vector<double>& encoded,
                                         const clin::FittedPreprocessor& fitted,
                                         const std::vector<double>& mean_vector, double fraction,
                                         uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("mask_clinical_subset: fraction must be in [0,1]");
    if (encoded.size() != static_cast<size_t>(fitted.dim()) ||
        mean_vector.size() != encoded.size())
        throw std::invalid_argument("mask_clinical_subset: vector length mismatch");

    const int groups = fitted.group_count();
    const int keep = static_cast<int>(std::ceil(fraction * groups));

    // one fixed permutation per seed; prefixes give nested kept sets
    std::vector<int> order(static_cast<size_t>(groups));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<double> out = mean_vector;
    for (int g = 0; g < keep; ++g) {
        const auto& rf = fitted.retained()[order[g]];
        for (int i = 0; i < rf.width; ++i) out[rf.offset + i] = encoded[rf.offset + i];
    }
    return out;
}

std::array<double, 3> ensemble_average(const std::vector<std::array<double, 3>>& probs,
                                       const std::vector<double>& weights) {
    if (probs.empty()) throw std::invalid_argument("ensemble_average: empty input");
    std::vector<double> w = weights;
    if (w.empty()) w.assign(probs.size(), 1.0);
    if (w.size() != probs.size())
        throw std::invalid_argument("ensemble_average: weights/models size mismatch");
    double wsum = 0;
    for (double x : w) {
        if (!(x >= 0)) throw std::invalid_argument("ensemble_average: weights must be >= 0");
        wsum += x;
    }
    if (!(wsum > 0)) throw std::invalid_argument("ensemble_average: weights sum to zero");
    std::array<double, 3> out{};
    for (size_t i = 0; i < probs.size(); ++i)
        for (int c = 0; c < 3; ++c) out[c] += w[i] / wsum * probs[i][c];
    return out;
}

template <typename T>
Predictor<T>::Predictor(net::Checkpoint ckpt)
    : ckpt_(std::move(ckpt)), model_(ckpt_.restore_model<T>()) {
    neutral_image_.assign(ckpt_.neutral_image_planes.begin(), ckpt_.neutral_image_planes.end());
}

namespace {

template <typename T>
std::array<double, 3> forward3(net::FusionModel<T>& model, const std::vector<double>* image,
                               const std::vector<double>* clinical) {
    std::vector<T> img_t, clin_t;
    const T* img_ptr = nullptr;
    if (image) {
        img_t.assign(image->begin(), image->end());
        img_ptr = img_t.data();
    }
    if (clinical) clin_t.assign(clinical->begin(), clinical->end());
    const auto p = model.predict(img_ptr, clin_t);
    return {p[0], p[1], p[2]};
}

}  // namespace

template <typename T>
std::array<double, 3> Predictor<T>::predict(const std::vector<double>* image_planes,
                                            const std::vector<double>* clinical_encoded,
                                            const ModalityMode& mode) {
    const net::ModelKind kind = ckpt_.config.kind;

    if (kind == net::ModelKind::image_only) {
        if (mode.tag == ModalityTag::fusion_feature_only)
            throw PrereqError("image-only checkpoint cannot run in feature-only mode");
        if (!image_planes) throw PrereqError("image input required");
        return forward3(model_, image_planes, nullptr);
    }
    if (kind == net::ModelKind::feature_only) {
        if (mode.tag == ModalityTag::fusion_image_only)
            throw PrereqError("feature-only checkpoint cannot run in image-only mode");
        if (!clinical_encoded) throw PrereqError("clinical input required");
        return forward3(model_, nullptr, clinical_encoded);
    }

    switch (mode.tag) {
        case ModalityTag::full: {
            if (!image_planes || !clinical_encoded)
                throw PrereqError("full mode needs both modalities");
            return forward3(model_, image_planes, clinical_encoded);
        }
        case ModalityTag::fusion_image_only: {
            if (!image_planes) throw PrereqError("image input required");
            if (ckpt_.mean_clinical.empty())
                throw PrereqError(
                    "checkpoint has no cached training-mean clinical vector; retrain or "
                    "re-cache it");
            return forward3(model_, image_planes, &ckpt_.mean_clinical);
        }
        case ModalityTag::fusion_feature_only: {
            if (!clinical_encoded) throw PrereqError("clinical input required");
            if (ckpt_.neutral_image_planes.empty())
                throw PrereqError(
                    "checkpoint has no cached neutral image; run eval --cache-neutral-image "
                    "first");
            std::vector<double> img(ckpt_.neutral_image_planes.begin(),
                                    ckpt_.neutral_image_planes.end());
            return forward3(model_, &img, clinical_encoded);
        }
        case ModalityTag::partial_clinical: {
            if (!image_planes || !clinical_encoded)
                throw PrereqError("partial mode needs both modalities");
            if (ckpt_.mean_clinical.empty())
                throw PrereqError("checkpoint has no cached training-mean clinical vector");
            const auto masked = mask_clinical_subset(*clinical_encoded, ckpt_.preprocessor,
                                                     ckpt_.mean_clinical, mode.fraction,
                                                     mode.mask_seed);
            return forward3(model_, image_planes, &masked);
        }
    }
    throw std::logic_error("unreachable modality tag");
}

template <typename T>
NeutralImageSelection select_neutral_image(
    net::FusionModel<T>& model, const std::vector<double>& mean_clinical,
    const std::vector<std::pair<std::string, std::vector<double>>>& training_images) {
    if (training_images.empty())
        throw std::invalid_argument("select_neutral_image: empty training set");
    NeutralImageSelection best;
    bool have = false;
    for (const auto& [id, planes] : training_images) {
        const auto probs = forward3(model, &planes, &mean_clinical);
        double score = 0;
        for (double p : probs) score = std::max(score, std::abs(p - 1.0 / 3.0));
        if (!have || score < best.score || (score == best.score && id < best.image_id)) {
            best.image_id = id;
            best.probs = probs;
            best.score = score;
            have = true;
        }
    }
    return best;
}

template <typename T>
std::array<double, 3> predict_subject(std::vector<Predictor<T>>& members,
                                      const std::vector<double>* image_planes,
                                      const std::vector<double>* clinical_encoded,
                                      const ModalityMode& mode) {
    if (members.empty()) throw std::invalid_argument("predict_subject: no models");
    std::vector<std::array<double, 3>> probs;
    probs.reserve(members.size());
    for (auto& m : members) probs.push_back(m.predict(image_planes, clinical_encoded, mode));
    return ensemble_average(probs);
}

template class Predictor<float>;
template class Predictor<double>;
template NeutralImageSelection select_neutral_image<float>(
    net::FusionModel<float>&, const std::vector<double>&,
    const std::vector<std::pair<std::string, std::vector<double>>>&);
template NeutralImageSelection select_neutral_image<double>(
    net::FusionModel<double>&, const std::vector<double>&,
    const std::vector<std::pair<std::string, std::vector<double>>>&);
template std::array<double, 3> predict_subject<float>(std::vector<Predictor<float>>&,
                                                      const std::vector<double>*,
                                                      const std::vector<double>*,
                                                      const ModalityMode&);
template std::array<double, 3> predict_subject<double>(std::vector<Predictor<double>>&,
                                                       const std::vector<double>*,
                                                       const std::vector<double>*,
                                                       const ModalityMode&);

}  // namespace fuselearn::infer
