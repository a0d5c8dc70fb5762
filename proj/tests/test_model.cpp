#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "fuselearn/checkpoint.hpp"
#include "fuselearn/train.hpp"

using namespace fuselearn;
using namespace fuselearn::net;

namespace {

FusionConfig tiny_config(ModelKind kind, uint64_t seed, BackboneStyle style = BackboneStyle::plain) {
    FusionConfig cfg;
    cfg.kind = kind;
    cfg.backbone.style = style;
    cfg.backbone.stem_width = 4;
    cfg.backbone.stem_stride = 1;
    cfg.backbone.stage_widths = {6, 8};
    cfg.image_size = 8;
    cfg.image_feat_dim = 5;
    cfg.clinical_input_dim = 6;
    cfg.head_hidden = {10, 7};
    cfg.seed = seed;
    return cfg;
}

std::vector<double> random_image(int S, Rng& rng) {
    std::vector<double> img(3 * S * S);
    for (auto& v : img) v = rng.uniform(-2, 2);
    return img;
}

// A separable toy problem: class index shifts both the image intensity and
// one clinical coordinate.
template <typename T>
TrainData<T> toy_data(int n, uint64_t seed, ModelKind kind) {
    TrainData<T> data;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.uniform_int(3));
        std::vector<T> image, clinical;
        if (kind != ModelKind::feature_only) {
            image.resize(3 * 8 * 8);
            for (auto& v : image)
                v = static_cast<T>(rng.normal(-0.8 + 0.8 * label, 0.4));
        }
        if (kind != ModelKind::image_only) {
            clinical.resize(6);
            for (auto& v : clinical) v = static_cast<T>(rng.uniform(0, 1));
            clinical[1] = static_cast<T>(0.15 + 0.3 * label + rng.normal(0, 0.05));
        }
        data.push(std::move(image), std::move(clinical), label);
    }
    return data;
}

TrainSpec toy_spec(int max_epochs = 12) {
    TrainSpec spec;
    spec.max_epochs = max_epochs;
    spec.class_weights = {1.0, 1.0, 1.0};
    return spec;
}

}  // namespace

TEST_CASE("class_weights: training-split counts give the expected vector") {
    const auto alpha = class_weights({476, 663, 518});
    CHECK(alpha[0] == doctest::Approx(1.1604).epsilon(1e-4));
    CHECK(alpha[1] == doctest::Approx(0.8331).epsilon(1e-4));
    CHECK(alpha[2] == doctest::Approx(1.0663).epsilon(1e-4));

    const auto balanced = class_weights({10, 10, 10});
    for (double a : balanced) CHECK(a == doctest::Approx(1.0));

    const auto skew = class_weights({1, 1, 2});
    CHECK(skew[0] == doctest::Approx(4.0 / 3.0));
    CHECK(skew[1] == doctest::Approx(4.0 / 3.0));
    CHECK(skew[2] == doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(class_weights({3, 0, 2}), std::invalid_argument);
}

TEST_CASE("class_weights ordering is the reverse of the count ordering") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<long> counts = {1 + static_cast<long>(rng.uniform_int(500)),
                                    1 + static_cast<long>(rng.uniform_int(500)),
                                    1 + static_cast<long>(rng.uniform_int(500))};
        const auto alpha = class_weights(counts);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (counts[i] < counts[j]) CHECK(alpha[i] > alpha[j]);
    }
}

TEST_CASE("forward emits a normalized probability vector, deterministically in eval mode") {
    for (auto style : {BackboneStyle::plain, BackboneStyle::residual, BackboneStyle::dense_concat}) {
        FusionModel<double> model(tiny_config(ModelKind::fusion, 77, style));
        Rng rng(3);
        const auto image = random_image(8, rng);
        std::vector<double> clinical = {0.1, 0.9, 0.3, 0.5, 0.0, 1.0};
        const auto p1 = model.predict(image.data(), clinical);
        const auto p2 = model.predict(image.data(), clinical);
        CHECK(p1 == p2);
        double sum = 0;
        for (double v : p1) {
            CHECK(v > 0);
            CHECK(v < 1);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("a zeroed head turns the forward pass into softmax(bias)") {
    FusionModel<double> model(tiny_config(ModelKind::fusion, 11));
    auto w = model.params().get("head.out.w");
    std::fill(w->values.begin(), w->values.end(), 0.0);
    auto b = model.params().get("head.out.b");
    b->values = {0.3, -0.7, 1.1};
    const auto expect = ad::softmax({0.3, -0.7, 1.1});

    Rng rng(4);
    for (int trial = 0; trial < 3; ++trial) {
        const auto image = random_image(8, rng);
        std::vector<double> clinical = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
        const auto p = model.predict(image.data(), clinical);
        for (int c = 0; c < 3; ++c) CHECK(p[c] == doctest::Approx(expect[c]).epsilon(1e-12));
    }
}

TEST_CASE("forward rejects a clinical vector of the wrong length") {
    FusionModel<double> model(tiny_config(ModelKind::fusion, 19));
    Rng rng(6);
    const auto image = random_image(8, rng);
    std::vector<double> wrong(5, 0.0);
    CHECK_THROWS_AS(model.predict(image.data(), wrong), std::invalid_argument);
}

TEST_CASE("stage 1 freezes the backbone bit-exactly while the rest trains") {
    FusionModel<double> model(tiny_config(ModelKind::fusion, 21));
    const auto train = toy_data<double>(60, 1, ModelKind::fusion);
    const auto val = toy_data<double>(24, 2, ModelKind::fusion);
    Rng rng(3);

    model.freeze_backbone(true);
    const uint64_t frozen_before = model.params().frozen_hash();
    model.freeze_backbone(false);

    auto result = train_model(model, train, val, toy_spec(4), /*stage=*/1, rng);
    model.freeze_backbone(true);  // align the hash domain with the pre-training state
    CHECK(model.params().frozen_hash() == frozen_before);
    CHECK(result.history.size() >= 1);
    for (const auto& h : result.history) CHECK(h.stage == 1);
}

TEST_CASE("stage 2 unfreezes everything and gradients reach the backbone") {
    FusionModel<double> model(tiny_config(ModelKind::fusion, 22));
    const auto train = toy_data<double>(40, 3, ModelKind::fusion);
    const auto val = toy_data<double>(16, 4, ModelKind::fusion);
    Rng rng(5);
    train_model(model, train, val, toy_spec(2), 1, rng);

    const uint64_t backbone_after_s1 = [&] {
        model.freeze_backbone(true);
        const uint64_t h = model.params().frozen_hash();
        model.freeze_backbone(false);
        return h;
    }();

    train_model(model, train, val, toy_spec(1), 2, rng);
    for (const auto& p : model.params().items()) CHECK(!p.frozen);

    model.freeze_backbone(true);
    CHECK(model.params().frozen_hash() != backbone_after_s1);  // backbone moved
    model.freeze_backbone(false);
}

TEST_CASE("training a separable problem reduces the validation loss") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        FusionModel<double> model(tiny_config(ModelKind::fusion, seed));
        const auto train = toy_data<double>(90, seed * 10 + 1, ModelKind::fusion);
        const auto val = toy_data<double>(30, seed * 10 + 2, ModelKind::fusion);
        const double initial = evaluate_loss(model, val, {1.0, 1.0, 1.0});
        Rng rng(seed);
        TrainSpec spec = toy_spec(10);
        spec.lr = 2e-3;  // toy-scale problem, fewer epochs
        auto result = train_model(model, train, val, spec, 1, rng);
        CHECK(result.best_val_loss < initial);
    }
}

TEST_CASE("early stopping never runs more than patience epochs past the best") {
    FusionModel<double> model(tiny_config(ModelKind::fusion, 33));
    const auto train = toy_data<double>(50, 7, ModelKind::fusion);
    const auto val = toy_data<double>(20, 8, ModelKind::fusion);
    Rng rng(9);
    TrainSpec spec = toy_spec(60);
    spec.patience = 3;
    spec.lr = 5e-3;
    auto result = train_model(model, train, val, spec, 0 /* single stage */, rng);
    REQUIRE(!result.history.empty());

    int best_epoch = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : result.history) {
        if (h.val_loss < best) {
            best = h.val_loss;
            best_epoch = h.epoch;
        }
        CHECK(h.epoch - best_epoch <= spec.patience);
    }
    // stopped exactly at best + patience when the cap was not reached
    if (static_cast<int>(result.history.size()) < spec.max_epochs)
        CHECK(result.history.back().epoch == best_epoch + spec.patience);
    CHECK(result.best_epoch == best_epoch);
    CHECK(result.best_val_loss == doctest::Approx(best));
}

TEST_CASE("train_model rejects empty splits and bad specs") {
    FusionModel<double> model(tiny_config(ModelKind::fusion, 44));
    const auto data = toy_data<double>(10, 1, ModelKind::fusion);
    Rng rng(1);
    CHECK_THROWS_AS(train_model(model, {}, data, toy_spec(), 1, rng), DataError);
    CHECK_THROWS_AS(train_model(model, data, {}, toy_spec(), 1, rng), DataError);
    TrainSpec bad = toy_spec();
    bad.class_weights = {1.0, -1.0, 1.0};
    CHECK_THROWS_AS(train_model(model, data, data, bad, 1, rng), ConfigError);
}

TEST_CASE("image-only pretraining transfers conv weights that reproduce features") {
    FusionModel<double> image_only(tiny_config(ModelKind::image_only, 55));
    const auto train = toy_data<double>(45, 11, ModelKind::image_only);
    const auto val = toy_data<double>(18, 12, ModelKind::image_only);
    Rng rng(13);
    train_model(image_only, train, val, toy_spec(3), 0, rng);

    FusionModel<double> fusion(tiny_config(ModelKind::fusion, 56));
    transfer_backbone(image_only, fusion);

    Rng probe_rng(14);
    const auto probe = random_image(8, probe_rng);
    std::vector<double> probe_d(probe.begin(), probe.end());
    const auto f1 = image_only.compute_backbone_features(probe_d.data());
    const auto f2 = fusion.compute_backbone_features(probe_d.data());
    CHECK(f1 == f2);
}

TEST_CASE("identical seeds give bit-identical trained models") {
    auto run = [](uint64_t seed) {
        FusionModel<double> model(tiny_config(ModelKind::fusion, seed));
        const auto train = toy_data<double>(40, 5, ModelKind::fusion);
        const auto val = toy_data<double>(16, 6, ModelKind::fusion);
        Rng rng(seed + 100);
        train_model(model, train, val, toy_spec(3), 1, rng);
        return model.params().value_hash();
    };
    CHECK(run(7) == run(7));
    CHECK(run(7) != run(8));
}

TEST_CASE("checkpoint round-trip is byte-identical and reproduces the forward pass") {
    FusionModel<float> model(tiny_config(ModelKind::fusion, 66));
    const auto train = toy_data<float>(30, 9, ModelKind::fusion);
    const auto val = toy_data<float>(12, 10, ModelKind::fusion);
    Rng rng(11);
    train_model(model, train, val, toy_spec(2), 1, rng);

    Checkpoint ck = Checkpoint::from_model(model);
    ck.class_weights = {1.1604, 0.8331, 1.0663};
    ck.stage_reached = 1;
    ck.history = {{1, 1.0, 0.9, 1}, {2, 0.8, 0.85, 1}};
    ck.mean_clinical = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};

    const auto bytes1 = ck.serialize();
    Checkpoint back = Checkpoint::deserialize(bytes1);
    const auto bytes2 = back.serialize();
    CHECK(bytes1 == bytes2);

    auto restored = back.restore_model<float>();
    Rng probe_rng(12);
    std::vector<float> image(3 * 8 * 8);
    for (auto& v : image) v = static_cast<float>(probe_rng.uniform(-1, 1));
    std::vector<float> clinical = {0.2f, 0.4f, 0.6f, 0.8f, 1.0f, 0.0f};
    CHECK(model.predict(image.data(), clinical) == restored.predict(image.data(), clinical));

    // precision mismatch is reported as a prerequisite error
    CHECK_THROWS_AS(back.restore_model<double>(), PrereqError);
}

TEST_CASE("checkpoint file save/load round-trips") {
    FusionModel<double> model(tiny_config(ModelKind::feature_only, 77));
    Checkpoint ck = Checkpoint::from_model(model);
    ck.class_weights = {1.0, 1.0, 1.0};
    const std::string path =
        (std::filesystem::temp_directory_path() / "fuselearn_ckpt_test.dcfz").string();
    ck.save(path);
    const auto loaded = Checkpoint::load(path);
    CHECK(loaded.serialize() == ck.serialize());
}

TEST_CASE("backbone presets expose three distinct styles with the expected dims") {
    const auto plain = BackboneProfile::preset("plain");
    const auto residual = BackboneProfile::preset("residual");
    const auto dense = BackboneProfile::preset("dense");
    CHECK(plain.feature_dim() == 128);
    CHECK(residual.feature_dim() == 160);
    CHECK(dense.feature_dim() == 192);
    CHECK(plain.style != residual.style);
    CHECK(residual.style != dense.style);
    plain.validate();
    residual.validate();
    dense.validate();
}

TEST_CASE("config validation rejects out-of-contract settings") {
    auto cfg = tiny_config(ModelKind::fusion, 1);
    cfg.clinical_feat_dim = 64;
    CHECK_THROWS_AS(FusionModel<double>{cfg}, ConfigError);

    cfg = tiny_config(ModelKind::fusion, 1);
    cfg.head_hidden = {8};
    CHECK_THROWS_AS(FusionModel<double>{cfg}, ConfigError);

    cfg = tiny_config(ModelKind::fusion, 1);
    cfg.dropout_image = 1.0;
    CHECK_THROWS_AS(FusionModel<double>{cfg}, ConfigError);

    cfg = tiny_config(ModelKind::fusion, 1);
    cfg.clinical_input_dim = 0;
    CHECK_THROWS_AS(FusionModel<double>{cfg}, ConfigError);
}
