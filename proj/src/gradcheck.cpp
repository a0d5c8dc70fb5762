#include "fuselearn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fuselearn/model.hpp"

namespace fuselearn::check {

using ad::Tape;
using ad::Tensor;
using ad::TensorRef;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape), true);
    for (auto& v : t.values) v = rng.uniform(-scale, scale);
    return t;
}

// Reduce any op output to a scalar through a fixed random linear functional
// so every output coordinate contributes to the checked gradient.
TensorRef<double> to_scalar(Tape<double>& tape, const TensorRef<double>& x, Rng& rng) {
    TensorRef<double> vec = x;
    if (x->shape.size() == 3) vec = ad::global_avg_pool(tape, x);
    const int n = static_cast<int>(vec->size());
    Tensor<double> w({1, n});
    for (auto& v : w.values) v = rng.uniform(-1.0, 1.0);
    Tensor<double> b({1});
    return ad::dense(tape, vec, ad::make_tensor(std::move(w)), ad::make_tensor(std::move(b)));
}

struct Case {
    std::string op;
    std::vector<TensorRef<double>> params;  // tensors to check
    std::function<TensorRef<double>(Tape<double>&)> build;
};

std::vector<Case> make_cases(uint64_t seed) {
    std::vector<Case> cases;
    Rng rng(seed);

    {  // conv2d, random geometry
        const int C = 1 + static_cast<int>(rng.uniform_int(3));
        const int O = 1 + static_cast<int>(rng.uniform_int(4));
        const int H = 5 + static_cast<int>(rng.uniform_int(4));
        const int k = 1 + 2 * static_cast<int>(rng.uniform_int(2));  // 1 or 3
        const int stride = 1 + static_cast<int>(rng.uniform_int(2));
        const int padding = static_cast<int>(rng.uniform_int(2));
        auto input = ad::make_tensor(random_tensor({C, H, H}, rng));
        auto kern = ad::make_tensor(random_tensor({O, C, k, k}, rng));
        auto bias = ad::make_tensor(random_tensor({O}, rng));
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"conv2d",
                         {input, kern, bias},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::conv2d(t, input, kern, bias, stride, padding),
                                              wr);
                         }});
    }
    {  // dense
        const int n = 2 + static_cast<int>(rng.uniform_int(6));
        const int m = 1 + static_cast<int>(rng.uniform_int(6));
        auto x = ad::make_tensor(random_tensor({n}, rng));
        auto W = ad::make_tensor(random_tensor({m, n}, rng));
        auto b = ad::make_tensor(random_tensor({m}, rng));
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"dense",
                         {x, W, b},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::dense(t, x, W, b), wr);
                         }});
    }
    {  // relu away from the kink
        const int n = 4 + static_cast<int>(rng.uniform_int(8));
        auto x = ad::make_tensor(random_tensor({n}, rng));
        for (auto& v : x->values)
            if (std::abs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"relu",
                         {x},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::relu(t, x), wr);
                         }});
    }
    {  // max_pool2d; quantized values + distinct offsets keep argmaxes stable
        const int C = 1 + static_cast<int>(rng.uniform_int(3));
        const int H = 4 + 2 * static_cast<int>(rng.uniform_int(3));
        auto x = ad::make_tensor(random_tensor({C, H, H}, rng));
        for (size_t i = 0; i < x->values.size(); ++i)
            x->values[i] = std::round(x->values[i] * 13.0) / 13.0 + static_cast<double>(i) * 1e-4;
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"max_pool2d",
                         {x},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::max_pool2d(t, x, 2), wr);
                         }});
    }
    {  // global_avg_pool
        const int C = 1 + static_cast<int>(rng.uniform_int(4));
        auto x = ad::make_tensor(random_tensor({C, 4, 4}, rng));
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"global_avg_pool",
                         {x},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::global_avg_pool(t, x), wr);
                         }});
    }
    {  // concat
        auto a = ad::make_tensor(random_tensor({3 + static_cast<int>(rng.uniform_int(4))}, rng));
        auto b = ad::make_tensor(random_tensor({2 + static_cast<int>(rng.uniform_int(4))}, rng));
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"concat",
                         {a, b},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::concat<double>(t, {a, b}), wr);
                         }});
    }
    {  // concat_channels
        const int H = 3 + static_cast<int>(rng.uniform_int(3));
        auto a = ad::make_tensor(random_tensor({2, H, H}, rng));
        auto b = ad::make_tensor(random_tensor({3, H, H}, rng));
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"concat_channels",
                         {a, b},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::concat_channels<double>(t, {a, b}), wr);
                         }});
    }
    {  // add
        const int n = 3 + static_cast<int>(rng.uniform_int(5));
        auto a = ad::make_tensor(random_tensor({n}, rng));
        auto b = ad::make_tensor(random_tensor({n}, rng));
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"add",
                         {a, b},
                         [=](Tape<double>& t) {
                             Rng wr(wseed);
                             return to_scalar(t, ad::add(t, a, b), wr);
                         }});
    }
    {  // dropout with a fixed mask stream per rebuild
        const int n = 6 + static_cast<int>(rng.uniform_int(8));
        auto x = ad::make_tensor(random_tensor({n}, rng));
        const uint64_t mask_seed = rng.next_u64();
        const uint64_t wseed = rng.next_u64();
        cases.push_back({"dropout",
                         {x},
                         [=](Tape<double>& t) {
                             Rng mask_rng(mask_seed);
                             Rng wr(wseed);
                             return to_scalar(t, ad::dropout(t, x, 0.3, true, mask_rng), wr);
                         }});
    }
    {  // weighted softmax cross-entropy
        const int K = 3;
        auto logits = ad::make_tensor(random_tensor({K}, rng, 2.0));
        const int label = static_cast<int>(rng.uniform_int(K));
        ad::LossConfig cfg{{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)},
                           K};
        cases.push_back({"weighted_softmax_ce",
                         {logits},
                         [=](Tape<double>& t) {
                             return ad::weighted_softmax_ce(t, logits, label, cfg);
                         }});
    }
    return cases;
}

net::FusionConfig toy_config(const std::string& style, uint64_t seed) {
    net::FusionConfig cfg;
    cfg.kind = net::ModelKind::fusion;
    cfg.backbone.style = net::style_from_name(style);
    cfg.backbone.stem_width = 3;
    cfg.backbone.stem_stride = 1;
    cfg.backbone.stage_widths = {4, 8};
    cfg.image_size = 8;
    cfg.image_feat_dim = 6;
    cfg.clinical_input_dim = 5;
    cfg.head_hidden = {7, 6};
    cfg.dropout_image = 0.25;
    cfg.dropout_clinical = 0.25;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

double full_model_gradcheck(const std::string& backbone_style, uint64_t seed, double eps) {
    net::FusionModel<double> model(toy_config(backbone_style, seed));
    Rng data_rng(mix_seed(seed, 11));
    std::vector<double> image(3 * 8 * 8), clinical(5);
    for (auto& v : image) v = data_rng.uniform(-1, 1);
    for (auto& v : clinical) v = data_rng.uniform(0, 1);
    const int label = static_cast<int>(data_rng.uniform_int(3));
    const ad::LossConfig loss_cfg{{1.1604, 0.8331, 1.0663}, 3};
    const uint64_t dropout_seed = data_rng.next_u64();

    std::vector<double> img_t(image.begin(), image.end());
    auto build = [&](Tape<double>& tape) {
        Rng dropout_rng(dropout_seed);
        auto logits = model.logits(tape, img_t.data(), clinical, /*train=*/true, &dropout_rng);
        return ad::weighted_softmax_ce(tape, logits, label, loss_cfg);
    };

    double worst = 0;
    const std::vector<double> steps = {eps, std::max(1e-7, eps / 10.0), std::min(1e-3, eps * 10.0)};
    for (auto& p : model.params().items()) {
        model.params().zero_grads();
        worst = std::max(worst,
                         ad::finite_diff_max_rel_err_multi<double>(build, *p.tensor, steps));
    }
    return worst;
}

std::vector<OpResult> run_gradcheck_suite(int seeds, double eps, double tol) {
    std::vector<OpResult> results;
    auto slot = [&](const std::string& op) -> OpResult& {
        for (auto& r : results)
            if (r.op == op) return r;
        results.push_back({op, 0.0, true});
        return results.back();
    };

    for (int s = 0; s < seeds; ++s) {
        for (auto& c : make_cases(mix_seed(0xC0FFEE, static_cast<uint64_t>(s)))) {
            double err = 0;
            const std::vector<double> steps = {eps, std::min(1e-3, eps * 10.0)};
            for (auto& p : c.params) {
                for (auto& q : c.params) q->zero_grad();
                err = std::max(err, ad::finite_diff_max_rel_err_multi<double>(c.build, *p, steps));
            }
            auto& r = slot(c.op);
            r.max_rel_err = std::max(r.max_rel_err, err);
        }
        for (const char* style : {"plain", "residual", "dense"}) {
            auto& r = slot(std::string("full_model_") + style);
            r.max_rel_err = std::max(
                r.max_rel_err,
                full_model_gradcheck(style, mix_seed(0xF00D, static_cast<uint64_t>(s)), eps));
        }
    }
    for (auto& r : results) r.pass = r.max_rel_err < tol;
    return results;
}

}  // namespace fuselearn::check
