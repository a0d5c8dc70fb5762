#include "doctest.h"

#include <cmath>

#include "fuselearn/inference.hpp"

using namespace fuselearn;
using namespace fuselearn::infer;

namespace {

clin::TypedFeatureSchema small_schema() {
    clin::TypedFeatureSchema s;
    s.features.push_back({"flag", clin::FeatureKind::binary, {}});
    s.features.push_back({"group", clin::FeatureKind::categorical, {"x", "y"}});
    s.features.push_back({"lab", clin::FeatureKind::continuous, {}});
    return s;
}

clin::FittedPreprocessor small_preprocessor() {
    std::vector<clin::ClinicalRecord> recs;
    for (int i = 0; i < 4; ++i) {
        clin::ClinicalRecord r;
        r.subject_id = "s" + std::to_string(i);
        r.values["flag"] = i % 2 ? "1" : "0";
        r.values["group"] = i < 2 ? "x" : "y";
        r.values["lab"] = std::to_string(90.0 + i * 4);
        recs.push_back(std::move(r));
    }
    return clin::FittedPreprocessor::fit(recs, small_schema());
}

net::Checkpoint small_checkpoint(net::ModelKind kind, uint64_t seed, int clinical_dim,
                                 bool cache_mean = true, bool cache_neutral = true) {
    net::FusionConfig cfg;
    cfg.kind = kind;
    cfg.backbone.stem_width = 4;
    cfg.backbone.stem_stride = 1;
    cfg.backbone.stage_widths = {4, 8};
    cfg.image_size = 8;
    cfg.image_feat_dim = 5;
    cfg.clinical_input_dim = clinical_dim;
    cfg.head_hidden = {8, 6};
    cfg.seed = seed;
    net::FusionModel<double> model(cfg);
    net::Checkpoint ck = net::Checkpoint::from_model(model);
    ck.class_weights = {1, 1, 1};
    if (kind != net::ModelKind::image_only && cache_mean)
        ck.mean_clinical.assign(static_cast<size_t>(clinical_dim), 0.5);
    if (kind == net::ModelKind::fusion && cache_neutral) {
        ck.neutral_image_id = "s0000";
        ck.neutral_image_planes.assign(3 * 8 * 8, 0.1);
        Rng rng(seed + 1);
        for (auto& v : ck.neutral_image_planes) v = rng.uniform(-1, 1);
    }
    return ck;
}

std::vector<double> random_image(uint64_t seed) {
    Rng rng(seed);
    std::vector<double> img(3 * 8 * 8);
    for (auto& v : img) v = rng.uniform(-2, 2);
    return img;
}

std::vector<double> random_clinical(uint64_t seed, int d) {
    Rng rng(seed);
    std::vector<double> c(static_cast<size_t>(d));
    for (auto& v : c) v = rng.uniform(0, 1);
    return c;
}

}  // namespace

TEST_CASE("mask_clinical_subset: endpoint identities and the ceiling rule") {
    const auto fitted = small_preprocessor();
    const int d = fitted.dim();
    const auto subject = random_clinical(5, d);
    std::vector<double> mean(static_cast<size_t>(d), 0.25);

    CHECK(mask_clinical_subset(subject, fitted, mean, 1.0, 7) == subject);
    CHECK(mask_clinical_subset(subject, fitted, mean, 0.0, 7) == mean);

    // 3 groups, fraction 0.34 -> ceil(1.02) = 2 groups kept
    const auto masked = mask_clinical_subset(subject, fitted, mean, 0.34, 7);
    int kept_groups = 0;
    for (const auto& rf : fitted.retained()) {
        bool kept = true;
        for (int i = 0; i < rf.width; ++i)
            kept = kept && masked[rf.offset + i] == subject[rf.offset + i];
        bool meaned = true;
        for (int i = 0; i < rf.width; ++i)
            meaned = meaned && masked[rf.offset + i] == mean[rf.offset + i];
        CHECK((kept || meaned));  // one-hot blocks move as one unit
        kept_groups += kept ? 1 : 0;
    }
    CHECK(kept_groups == 2);

    CHECK_THROWS_AS(mask_clinical_subset(subject, fitted, mean, 1.5, 7), std::invalid_argument);
}

TEST_CASE("mask_clinical_subset: ceil(p*G) groups kept for G = 10") {
    clin::TypedFeatureSchema schema;
    std::vector<clin::ClinicalRecord> recs(2);
    recs[0].subject_id = "a";
    recs[1].subject_id = "b";
    for (int i = 0; i < 10; ++i) {
        const std::string name = "f" + std::to_string(i);
        schema.features.push_back({name, clin::FeatureKind::continuous, {}});
        recs[0].values[name] = std::to_string(i);
        recs[1].values[name] = std::to_string(i + 10);
    }
    const auto fitted = clin::FittedPreprocessor::fit(recs, schema);
    std::vector<double> subject(10, 1.0), mean(10, 0.0);
    const auto masked = mask_clinical_subset(subject, fitted, mean, 0.25, 3);
    int kept = 0;
    for (double v : masked) kept += v == 1.0 ? 1 : 0;
    CHECK(kept == 3);  // ceil(2.5)
}

TEST_CASE("mask_clinical_subset: kept sets are nested across fractions for one seed") {
    const auto fitted = small_preprocessor();
    const int d = fitted.dim();
    const auto subject = random_clinical(9, d);
    std::vector<double> mean(static_cast<size_t>(d), -1.0);

    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        std::vector<int> prev_kept;
        for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const auto masked = mask_clinical_subset(subject, fitted, mean, p, seed);
            std::vector<int> kept;
            for (size_t g = 0; g < fitted.retained().size(); ++g) {
                const auto& rf = fitted.retained()[g];
                bool is_kept = true;
                for (int i = 0; i < rf.width; ++i)
                    is_kept = is_kept && masked[rf.offset + i] == subject[rf.offset + i];
                if (is_kept) kept.push_back(static_cast<int>(g));
            }
            for (int g : prev_kept) CHECK(std::count(kept.begin(), kept.end(), g) == 1);
            prev_kept = kept;
        }
    }
}

TEST_CASE("ensemble_average: identities, the two-model midpoint, and validation") {
    std::array<double, 3> a{1, 0, 0}, b{0, 1, 0};
    const auto mid = ensemble_average({a, b});
    CHECK(mid[0] == doctest::Approx(0.5));
    CHECK(mid[1] == doctest::Approx(0.5));
    CHECK(mid[2] == doctest::Approx(0.0));

    const auto same = ensemble_average({a, a, a});
    CHECK(same == a);

    CHECK_THROWS_AS(ensemble_average({}), std::invalid_argument);

    // permutation invariance and simplex preservation
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::array<double, 3>> probs(3);
        for (auto& p : probs) {
            double z = 0;
            for (auto& v : p) {
                v = rng.uniform(0.01, 1);
                z += v;
            }
            for (auto& v : p) v /= z;
        }
        auto swapped = probs;
        std::swap(swapped[0], swapped[2]);
        const auto m1 = ensemble_average(probs);
        const auto m2 = ensemble_average(swapped);
        double sum = 0;
        for (int c = 0; c < 3; ++c) {
            CHECK(m1[c] == doctest::Approx(m2[c]).epsilon(1e-15));
            sum += m1[c];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    // explicit weights cover the weighted-ensemble reading
    const auto weighted = ensemble_average({a, b}, {3.0, 1.0});
    CHECK(weighted[0] == doctest::Approx(0.75));
}

TEST_CASE("select_neutral_image: uniform candidate wins with score 0; ties break by id") {
    net::FusionConfig cfg;
    cfg.kind = net::ModelKind::fusion;
    cfg.backbone.stem_width = 4;
    cfg.backbone.stem_stride = 1;
    cfg.backbone.stage_widths = {4, 8};
    cfg.image_size = 8;
    cfg.image_feat_dim = 5;
    cfg.clinical_input_dim = 4;
    cfg.head_hidden = {8, 6};
    cfg.seed = 3;
    net::FusionModel<double> model(cfg);

    // zeroed output layer: every image yields exactly uniform probabilities
    auto w = model.params().get("head.out.w");
    std::fill(w->values.begin(), w->values.end(), 0.0);
    auto b = model.params().get("head.out.b");
    std::fill(b->values.begin(), b->values.end(), 0.0);

    std::vector<std::pair<std::string, std::vector<double>>> candidates = {
        {"s2", random_image(1)}, {"s1", random_image(2)}, {"s3", random_image(3)}};
    std::vector<double> mean(4, 0.5);
    const auto sel = select_neutral_image(model, mean, candidates);
    CHECK(sel.score == doctest::Approx(0.0));
    CHECK(sel.image_id == "s1");  // lexicographic tie-break

    // a single skewed candidate is selected by default with the max-norm score
    b->values = {std::log(0.9), std::log(0.05), std::log(0.05)};
    std::vector<std::pair<std::string, std::vector<double>>> one = {{"only", random_image(4)}};
    const auto skew = select_neutral_image(model, mean, one);
    CHECK(skew.image_id == "only");
    CHECK(skew.score == doctest::Approx(0.9 - 1.0 / 3.0).epsilon(1e-9));

    CHECK_THROWS_AS(select_neutral_image(model, mean, {}), std::invalid_argument);
}

TEST_CASE("modality-mode identities: partial 1.0 is full, partial 0.0 is image-only") {
    const auto fitted = small_preprocessor();
    auto ck = small_checkpoint(net::ModelKind::fusion, 5, fitted.dim());
    ck.has_preprocessor = true;
    ck.preprocessor = fitted;
    Predictor<double> predictor(std::move(ck));

    const auto image = random_image(11);
    const auto clinical = random_clinical(12, fitted.dim());

    const auto full = predictor.predict(&image, &clinical, ModalityMode::parse("full"));
    const auto p1 = predictor.predict(&image, &clinical, ModalityMode::parse("partial:1.0", 9));
    CHECK(full == p1);  // bit-exact

    const auto img_only = predictor.predict(&image, &clinical, ModalityMode::parse("image-only"));
    const auto p0 = predictor.predict(&image, &clinical, ModalityMode::parse("partial:0.0", 9));
    CHECK(img_only == p0);  // bit-exact

    // image-only output ignores the clinical input entirely
    const auto other_clinical = random_clinical(77, fitted.dim());
    CHECK(predictor.predict(&image, &other_clinical, ModalityMode::parse("image-only")) ==
          img_only);
}

TEST_CASE("feature-only mode varies with clinical input and is constant in the image") {
    const auto fitted = small_preprocessor();
    auto ck = small_checkpoint(net::ModelKind::fusion, 6, fitted.dim());
    ck.has_preprocessor = true;
    ck.preprocessor = fitted;
    Predictor<double> predictor(std::move(ck));

    const auto imageA = random_image(21);
    const auto imageB = random_image(22);
    const auto clinA = random_clinical(23, fitted.dim());
    const auto clinB = random_clinical(24, fitted.dim());
    const auto mode = ModalityMode::parse("feature-only");

    CHECK(predictor.predict(&imageA, &clinA, mode) == predictor.predict(&imageB, &clinA, mode));
    CHECK(predictor.predict(&imageA, &clinA, mode) != predictor.predict(&imageA, &clinB, mode));
}

TEST_CASE("modes that need missing cached artifacts are rejected with the cause") {
    const auto fitted = small_preprocessor();
    auto no_neutral = small_checkpoint(net::ModelKind::fusion, 7, fitted.dim(), true, false);
    no_neutral.has_preprocessor = true;
    no_neutral.preprocessor = fitted;
    Predictor<double> p1(std::move(no_neutral));
    const auto image = random_image(31);
    const auto clinical = random_clinical(32, fitted.dim());
    CHECK_THROWS_AS(p1.predict(&image, &clinical, ModalityMode::parse("feature-only")),
                    PrereqError);

    auto no_mean = small_checkpoint(net::ModelKind::fusion, 8, fitted.dim(), false, true);
    no_mean.has_preprocessor = true;
    no_mean.preprocessor = fitted;
    Predictor<double> p2(std::move(no_mean));
    CHECK_THROWS_AS(p2.predict(&image, &clinical, ModalityMode::parse("image-only")), PrereqError);

    auto image_only_ck = small_checkpoint(net::ModelKind::image_only, 9, 0);
    Predictor<double> p3(std::move(image_only_ck));
    CHECK_THROWS_AS(p3.predict(&image, &clinical, ModalityMode::parse("feature-only")),
                    PrereqError);
}

TEST_CASE("an ensemble of identical members equals a single member") {
    const auto fitted = small_preprocessor();
    auto make = [&]() {
        auto ck = small_checkpoint(net::ModelKind::fusion, 10, fitted.dim());
        ck.has_preprocessor = true;
        ck.preprocessor = fitted;
        return Predictor<double>(std::move(ck));
    };
    std::vector<Predictor<double>> one, three;
    one.push_back(make());
    for (int i = 0; i < 3; ++i) three.push_back(make());

    const auto image = random_image(41);
    const auto clinical = random_clinical(42, fitted.dim());
    const auto mode = ModalityMode::parse("full");
    const auto single = predict_subject(one, &image, &clinical, mode);
    const auto averaged = predict_subject(three, &image, &clinical, mode);
    for (int c = 0; c < 3; ++c) CHECK(averaged[c] == doctest::Approx(single[c]).epsilon(1e-15));
}

TEST_CASE("mode parsing accepts the documented forms and rejects the rest") {
    CHECK(ModalityMode::parse("full").tag == ModalityTag::full);
    CHECK(ModalityMode::parse("image-only").tag == ModalityTag::fusion_image_only);
    CHECK(ModalityMode::parse("feature-only").tag == ModalityTag::fusion_feature_only);
    const auto p = ModalityMode::parse("partial:0.4", 5);
    CHECK(p.tag == ModalityTag::partial_clinical);
    CHECK(p.fraction == doctest::Approx(0.4));
    CHECK(p.mask_seed == 5);
    CHECK_THROWS_AS(ModalityMode::parse("partial:1.5"), ConfigError);
    CHECK_THROWS_AS(ModalityMode::parse("nonsense"), ConfigError);
}
