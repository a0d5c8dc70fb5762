#include "fuselearn/checkpoint.hpp"

#include <fstream>

namespace fuselearn::net {

namespace {

void write_config(BinaryWriter& w, const FusionConfig& c) {
    w.u8(static_cast<uint8_t>(c.kind));
    w.u8(static_cast<uint8_t>(c.backbone.style));
    w.u32(static_cast<uint32_t>(c.backbone.stem_width));
    w.u32(static_cast<uint32_t>(c.backbone.stem_stride));
    w.u32(static_cast<uint32_t>(c.backbone.stage_widths.size()));
    for (int v : c.backbone.stage_widths) w.u32(static_cast<uint32_t>(v));
    w.u32(static_cast<uint32_t>(c.image_size));
    w.u32(static_cast<uint32_t>(c.image_feat_dim));
    w.u32(static_cast<uint32_t>(c.clinical_feat_dim));
    w.u32(static_cast<uint32_t>(c.clinical_input_dim));
    w.u32(static_cast<uint32_t>(c.head_hidden.size()));
    for (int v : c.head_hidden) w.u32(static_cast<uint32_t>(v));
    w.f64(c.dropout_image);
    w.f64(c.dropout_clinical);
    w.u32(static_cast<uint32_t>(c.num_classes));
    w.u64(c.seed);
}

FusionConfig read_config(BinaryReader& r) {
    FusionConfig c;
    c.kind = static_cast<ModelKind>(r.u8());
    c.backbone.style = static_cast<BackboneStyle>(r.u8());
    c.backbone.stem_width = static_cast<int>(r.u32());
    c.backbone.stem_stride = static_cast<int>(r.u32());
    c.backbone.stage_widths.resize(r.u32());
    for (auto& v : c.backbone.stage_widths) v = static_cast<int>(r.u32());
    c.image_size = static_cast<int>(r.u32());
    c.image_feat_dim = static_cast<int>(r.u32());
    c.clinical_feat_dim = static_cast<int>(r.u32());
    c.clinical_input_dim = static_cast<int>(r.u32());
    c.head_hidden.resize(r.u32());
    for (auto& v : c.head_hidden) v = static_cast<int>(r.u32());
    c.dropout_image = r.f64();
    c.dropout_clinical = r.f64();
    c.num_classes = static_cast<int>(r.u32());
    c.seed = r.u64();
    return c;
}

}  // namespace

std::vector<uint8_t> Checkpoint::serialize() const {
    BinaryWriter w;
    w.raw("DCFZ", 4);
    w.u32(kVersion);
    w.u8(dtype_bytes);
    write_config(w, config);
    w.u8(has_preprocessor ? 1 : 0);
    if (has_preprocessor) preprocessor.write(w);
    for (double v : channel_mean) w.f64(v);
    for (double v : channel_std) w.f64(v);
    w.f64(crop_margin);
    w.f64_vec(class_weights);
    w.u32(static_cast<uint32_t>(stage_reached));
    w.u64(seed);
    w.u32(static_cast<uint32_t>(history.size()));
    for (const auto& h : history) {
        w.u32(static_cast<uint32_t>(h.epoch));
        w.f64(h.train_loss);
        w.f64(h.val_loss);
        w.u32(static_cast<uint32_t>(h.stage));
    }
    w.f64_vec(mean_clinical);
    w.str(neutral_image_id);
    w.f64_vec(neutral_image_planes);
    w.u32(static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
        w.str(p.name);
        w.u8(static_cast<uint8_t>(p.shape.size()));
        for (int d : p.shape) w.u32(static_cast<uint32_t>(d));
        w.u8(p.frozen ? 1 : 0);
        if (dtype_bytes == 8)
            for (double v : p.f64) w.f64(v);
        else
            for (float v : p.f32) w.f32(v);
    }
    return w.bytes();
}

Checkpoint Checkpoint::deserialize(const std::vector<uint8_t>& bytes) {
    BinaryReader r(bytes);
    char magic[4];
    for (auto& c : magic) c = static_cast<char>(r.u8());
    if (std::string(magic, 4) != "DCFZ") throw DataError("not a checkpoint file (bad magic)");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.dtype_bytes = r.u8();
    if (ck.dtype_bytes != 4 && ck.dtype_bytes != 8)
        throw DataError("checkpoint: bad scalar width");
    ck.config = read_config(r);
    ck.has_preprocessor = r.u8() != 0;
    if (ck.has_preprocessor) ck.preprocessor = clin::FittedPreprocessor::read(r);
    for (auto& v : ck.channel_mean) v = r.f64();
    for (auto& v : ck.channel_std) v = r.f64();
    ck.crop_margin = r.f64();
    ck.class_weights = r.f64_vec();
    ck.stage_reached = static_cast<int>(r.u32());
    ck.seed = r.u64();
    ck.history.resize(r.u32());
    for (auto& h : ck.history) {
        h.epoch = static_cast<int>(r.u32());
        h.train_loss = r.f64();
        h.val_loss = r.f64();
        h.stage = static_cast<int>(r.u32());
    }
    ck.mean_clinical = r.f64_vec();
    ck.neutral_image_id = r.str();
    ck.neutral_image_planes = r.f64_vec();
    ck.params.resize(r.u32());
    for (auto& p : ck.params) {
        p.name = r.str();
        p.shape.resize(r.u8());
        int64_t n = 1;
        for (auto& d : p.shape) {
            d = static_cast<int>(r.u32());
            n *= d;
        }
        p.frozen = r.u8() != 0;
        if (ck.dtype_bytes == 8) {
            p.f64.resize(static_cast<size_t>(n));
            for (auto& v : p.f64) v = r.f64();
        } else {
            p.f32.resize(static_cast<size_t>(n));
            for (auto& v : p.f32) v = r.f32();
        }
    }
    if (!r.done()) throw DataError("checkpoint: trailing bytes");
    return ck;
}

void Checkpoint::save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

template <typename T>
Checkpoint Checkpoint::from_model(const FusionModel<T>& model) {
    Checkpoint ck;
    ck.dtype_bytes = sizeof(T);
    ck.config = model.config();
    ck.seed = model.config().seed;
    for (const auto& p : model.params().items()) {
        ParamBlob blob;
        blob.name = p.name;
        blob.shape = p.tensor->shape;
        blob.frozen = p.frozen;
        if constexpr (sizeof(T) == 8)
            blob.f64.assign(p.tensor->values.begin(), p.tensor->values.end());
        else
            blob.f32.assign(p.tensor->values.begin(), p.tensor->values.end());
        ck.params.push_back(std::move(blob));
    }
    return ck;
}

template <typename T>
FusionModel<T> Checkpoint::restore_model() const {
    if (sizeof(T) != dtype_bytes)
        throw PrereqError("checkpoint scalar width is " + std::to_string(dtype_bytes * 8) +
                          "-bit; load it with the matching precision");
    FusionModel<T> model(config);
    for (const auto& blob : params) {
        auto t = model.params().get(blob.name);
        if (t->shape != blob.shape) throw DataError("checkpoint: shape mismatch on " + blob.name);
        if constexpr (sizeof(T) == 8)
            t->values.assign(blob.f64.begin(), blob.f64.end());
        else
            t->values.assign(blob.f32.begin(), blob.f32.end());
        model.params().set_frozen(blob.name, blob.frozen);
    }
    return model;
}

template Checkpoint Checkpoint::from_model<float>(const FusionModel<float>&);
template Checkpoint Checkpoint::from_model<double>(const FusionModel<double>&);
template FusionModel<float> Checkpoint::restore_model<float>() const;
template FusionModel<double> Checkpoint::restore_model<double>() const;

}  // namespace fuselearn::net
