#include "doctest.h"

#include <cmath>

#include "fuselearn/autodiff.hpp"
#include "fuselearn/gradcheck.hpp"

using namespace fuselearn;
using ad::Tape;
using ad::Tensor;
using ad::TensorRef;

namespace {

TensorRef<double> vec(std::initializer_list<double> vals, bool rg = false) {
    Tensor<double> t({static_cast<int>(vals.size())}, rg);
    std::copy(vals.begin(), vals.end(), t.values.begin());
    return ad::make_tensor(std::move(t));
}

}  // namespace

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    Tape<double> tape;
    Tensor<double> in({1, 4, 4});
    for (int i = 0; i < 16; ++i) in.values[i] = i * 0.5 - 3.0;
    Tensor<double> k({1, 1, 1, 1});
    k.values[0] = 1.0;
    auto in_ref = ad::make_tensor(in);
    auto out = ad::conv2d(tape, in_ref, ad::make_tensor(std::move(k)), vec({0.0}), 1, 0);
    REQUIRE(out->shape == std::vector<int>{1, 4, 4});
    for (int i = 0; i < 16; ++i) CHECK(out->values[i] == doctest::Approx(in.values[i]));
}

TEST_CASE("conv2d: all-zero kernel gives an all-bias output") {
    Tape<double> tape;
    Tensor<double> in({2, 4, 4});
    Rng rng(3);
    for (auto& v : in.values) v = rng.uniform(-1, 1);
    Tensor<double> k({3, 2, 3, 3});
    auto out = ad::conv2d(tape, ad::make_tensor(std::move(in)), ad::make_tensor(std::move(k)),
                          vec({1.5, -2.0, 0.25}), 1, 1);
    REQUIRE(out->shape == std::vector<int>{3, 4, 4});
    const double bias[3] = {1.5, -2.0, 0.25};
    for (int o = 0; o < 3; ++o)
        for (int i = 0; i < 16; ++i) CHECK(out->values[o * 16 + i] == doctest::Approx(bias[o]));
}

TEST_CASE("conv2d: shape mismatches are rejected with a dimension diagnostic") {
    Tape<double> tape;
    auto in = ad::make_tensor(Tensor<double>({2, 4, 4}));
    auto k_bad_ch = ad::make_tensor(Tensor<double>({1, 3, 3, 3}));
    CHECK_THROWS_AS(ad::conv2d(tape, in, k_bad_ch, vec({0.0}), 1, 1), std::invalid_argument);
    auto k = ad::make_tensor(Tensor<double>({1, 2, 3, 3}));
    CHECK_THROWS_AS(ad::conv2d(tape, in, k, vec({0.0, 0.0}), 1, 1), std::invalid_argument);
    auto huge = ad::make_tensor(Tensor<double>({1, 2, 9, 9}));
    CHECK_THROWS_AS(ad::conv2d(tape, in, huge, vec({0.0}), 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d: random 3x3 analytic gradients match central differences") {
    Rng rng(41);
    auto input = ad::make_tensor(ad::he_uniform<double>({2, 5, 5}, 9, rng));
    auto kernels = ad::make_tensor(ad::he_uniform<double>({3, 2, 3, 3}, 18, rng));
    auto bias = ad::make_tensor(ad::he_uniform<double>({3}, 3, rng));
    input->requires_grad = kernels->requires_grad = bias->requires_grad = true;
    const uint64_t wseed = rng.next_u64();
    auto build = [&](Tape<double>& t) -> TensorRef<double> {
        auto conv = ad::conv2d(t, input, kernels, bias, 1, 1);
        auto pooled = ad::global_avg_pool(t, conv);
        Rng wr(wseed);
        Tensor<double> w({1, 3});
        for (auto& v : w.values) v = wr.uniform(-1, 1);
        return ad::dense(t, pooled, ad::make_tensor(std::move(w)), vec({0.0}));
    };
    for (auto* p : {&*input, &*kernels, &*bias}) {
        input->zero_grad();
        kernels->zero_grad();
        bias->zero_grad();
        CHECK(ad::finite_diff_max_rel_err<double>(build, *p, 1e-5) < 1e-4);
    }
}

TEST_CASE("dense: identity weights reproduce the input, zero weights give the bias") {
    Tape<double> tape;
    Tensor<double> eye({3, 3});
    eye.values = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    auto eye_ref = ad::make_tensor(std::move(eye));
    auto x = vec({0.5, -1.5, 2.0});
    auto out = ad::dense(tape, x, eye_ref, vec({0, 0, 0}));
    CHECK(out->values == std::vector<double>{0.5, -1.5, 2.0});

    auto zero_w = ad::make_tensor(Tensor<double>({2, 3}));
    auto out2 = ad::dense(tape, x, zero_w, vec({4.0, -1.0}));
    CHECK(out2->values == std::vector<double>{4.0, -1.0});

    CHECK_THROWS_AS(ad::dense(tape, vec({1.0, 2.0}), eye_ref, vec({0, 0, 0})),
                    std::invalid_argument);
}

TEST_CASE("relu, global_avg_pool and concat basics") {
    Tape<double> tape;
    auto r = ad::relu(tape, vec({-1.0, 0.0, 2.0}));
    CHECK(r->values == std::vector<double>{0.0, 0.0, 2.0});

    Tensor<double> cmap({2, 3, 3});
    std::fill(cmap.values.begin(), cmap.values.begin() + 9, 7.25);
    std::fill(cmap.values.begin() + 9, cmap.values.end(), -1.5);
    auto g = ad::global_avg_pool(tape, ad::make_tensor(std::move(cmap)));
    CHECK(g->values[0] == doctest::Approx(7.25));
    CHECK(g->values[1] == doctest::Approx(-1.5));

    Tensor<double> a({64}), b({128});
    std::fill(a.values.begin(), a.values.end(), 1.0);
    std::fill(b.values.begin(), b.values.end(), 2.0);
    auto c = ad::concat<double>(tape, {ad::make_tensor(std::move(a)), ad::make_tensor(std::move(b))});
    REQUIRE(c->size() == 192);
    for (int i = 0; i < 64; ++i) CHECK(c->values[i] == 1.0);
    for (int i = 64; i < 192; ++i) CHECK(c->values[i] == 2.0);

    CHECK_THROWS_AS(ad::concat<double>(tape, {}), std::invalid_argument);
}

TEST_CASE("max_pool2d picks window maxima and routes gradients to the argmax") {
    Tape<double> tape;
    Tensor<double> x({1, 2, 2}, true);
    x.values = {1.0, 4.0, 3.0, 2.0};
    auto xr = ad::make_tensor(std::move(x));
    auto out = ad::max_pool2d(tape, xr, 2);
    REQUIRE(out->size() == 1);
    CHECK(out->values[0] == 4.0);
    tape.backward(out);
    CHECK(xr->grad == std::vector<double>{0.0, 1.0, 0.0, 0.0});

    CHECK_THROWS_AS(ad::max_pool2d(tape, ad::make_tensor(Tensor<double>({1, 3, 3})), 2),
                    std::invalid_argument);
}

TEST_CASE("dropout: rate 0 and eval mode are identities; train mean is preserved") {
    Rng rng(7);
    auto x = vec({1.0, 1.0, 1.0, 1.0});
    Tape<double> tape;
    CHECK(ad::dropout(tape, x, 0.0, true, rng)->values == x->values);
    CHECK(ad::dropout(tape, x, 0.7, false, rng)->values == x->values);
    CHECK_THROWS_AS(ad::dropout(tape, x, 1.0, true, rng), std::invalid_argument);

    // inverted dropout keeps the expectation: mean over 10k masked ones-vectors
    const double rate = 0.3;
    double total = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Tape<double> t;
        auto out = ad::dropout(t, x, rate, true, rng);
        for (double v : out->values) total += v;
    }
    const double mean = total / (4.0 * n);
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("weighted softmax cross-entropy matches the hand-computed values") {
    ad::LossConfig cfg{{1.1604, 0.8331, 1.0663}, 3};
    Tape<double> tape;
    // uniform logits: loss = alpha_label * ln 3
    auto loss = ad::weighted_softmax_ce(tape, vec({0.2, 0.2, 0.2}), 0, cfg);
    CHECK(loss->values[0] == doctest::Approx(1.1604 * std::log(3.0)).epsilon(1e-10));
    CHECK(loss->values[0] == doctest::Approx(1.2748).epsilon(1e-4));

    // dominant true-class logit drives the loss to zero
    ad::LossConfig unit{{1.0, 1.0, 1.0}, 3};
    auto tiny = ad::weighted_softmax_ce(tape, vec({50.0, 0.0, 0.0}), 0, unit);
    CHECK(tiny->values[0] < 1e-9);

    CHECK_THROWS_AS(ad::weighted_softmax_ce(tape, vec({1.0, 2.0}), 0, cfg),
                    std::invalid_argument);
    CHECK_THROWS_AS(ad::weighted_softmax_ce(tape, vec({1.0, 2.0, 3.0}), 3, cfg),
                    std::invalid_argument);
}

TEST_CASE("weighted softmax cross-entropy gradient check") {
    auto logits = vec({0.3, -1.2, 0.8}, true);
    ad::LossConfig cfg{{1.1604, 0.8331, 1.0663}, 3};
    auto build = [&](Tape<double>& t) { return ad::weighted_softmax_ce(t, logits, 1, cfg); };
    CHECK(ad::finite_diff_max_rel_err<double>(build, *logits, 1e-5) < 1e-4);
}

TEST_CASE("softmax output sums to one and stays in (0,1)") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> logits(3);
        for (auto& v : logits) v = rng.uniform(-15, 15);
        const auto p = ad::softmax(logits);
        double sum = 0;
        for (double v : p) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("sgd with momentum: plain step, frozen params, and momentum recursion") {
    ad::ParameterSet<double> params;
    auto p = params.add("w", Tensor<double>::scalar(5.0));
    p->ensure_grad();
    p->grad[0] = 1.0;
    ad::sgd_momentum_step(params, 0.1, 0.0);
    CHECK(p->values[0] == doctest::Approx(4.9));

    // frozen parameter with a nonzero gradient stays bit-identical
    ad::ParameterSet<double> params2;
    auto q = params2.add("frozen.w", Tensor<double>::scalar(2.5));
    q->ensure_grad();
    q->grad[0] = 10.0;
    params2.set_frozen("frozen.", true);
    ad::sgd_momentum_step(params2, 0.1, 0.9);
    CHECK(q->values[0] == 2.5);

    // momentum 0.9, lr 1, constant unit gradient: updates 1.0 then 1.9
    ad::ParameterSet<double> params3;
    auto r = params3.add("w", Tensor<double>::scalar(0.0));
    r->ensure_grad();
    r->grad[0] = 1.0;
    ad::sgd_momentum_step(params3, 1.0, 0.9);
    CHECK(r->values[0] == doctest::Approx(-1.0));
    r->grad[0] = 1.0;
    ad::sgd_momentum_step(params3, 1.0, 0.9);
    CHECK(r->values[0] == doctest::Approx(-1.0 - 1.9));

    // missing gradient on an unfrozen parameter is rejected
    ad::ParameterSet<double> params4;
    params4.add("w", Tensor<double>::scalar(1.0));
    CHECK_THROWS_AS(ad::sgd_momentum_step(params4, 0.1, 0.9), std::runtime_error);
}

TEST_CASE("momentum buffers exist iff the parameter is trainable") {
    ad::ParameterSet<double> params;
    params.add("a", Tensor<double>({4}));
    CHECK(params.items()[0].momentum.size() == 4);
    params.set_frozen("a", true);
    CHECK(params.items()[0].momentum.empty());
    params.set_frozen("a", false);
    CHECK(params.items()[0].momentum.size() == 4);
}

TEST_CASE("finite differences: exact on a linear function") {
    auto x = vec({0.7, -0.3, 1.1}, true);
    auto w = ad::make_tensor(Tensor<double>({1, 3}));
    w->values = {2.0, -1.0, 0.5};
    auto build = [&](Tape<double>& t) { return ad::dense(t, x, w, vec({0.25})); };
    CHECK(ad::finite_diff_max_rel_err<double>(build, *x, 1e-5) < 1e-8);
}

TEST_CASE("finite differences: validates eps range and scalar output") {
    auto x = vec({1.0, 2.0}, true);
    auto build_vec = [&](Tape<double>& t) { return ad::relu(t, x); };
    CHECK_THROWS_AS(ad::finite_diff_max_rel_err<double>(build_vec, *x, 1e-5),
                    std::invalid_argument);
    auto build_scalar = [&](Tape<double>& t) { return ad::pick(t, x, 0); };
    CHECK_THROWS_AS(ad::finite_diff_max_rel_err<double>(build_scalar, *x, 1e-8),
                    std::invalid_argument);
    CHECK_THROWS_AS(ad::finite_diff_max_rel_err<double>(build_scalar, *x, 1e-2),
                    std::invalid_argument);
}

TEST_CASE("a sign-flipped backward pass is caught with error > 0.5") {
    Rng rng(13);
    auto x = vec({0.4, -0.2, 0.9}, true);
    auto w = ad::make_tensor(ad::he_uniform<double>({2, 3}, 3, rng));
    auto b = ad::make_tensor(ad::he_uniform<double>({2}, 2, rng));
    auto build = [&](Tape<double>& t) {
        auto h = ad::dense(t, x, w, b);
        return ad::pick(t, h, 0);
    };
    ad::set_backward_fault("dense");
    const double err = ad::finite_diff_max_rel_err<double>(build, *x, 1e-5);
    ad::set_backward_fault("");
    CHECK(err > 0.5);
}

TEST_CASE("property: every op passes randomized gradient checks over 20 seeds") {
    const auto results = check::run_gradcheck_suite(20, 1e-5, 1e-4);
    REQUIRE(!results.empty());
    for (const auto& r : results) {
        INFO(r.op, " max rel err ", r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("determinism: identical seed and op sequence give bit-identical parameters") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        ad::ParameterSet<double> params;
        params.add("w", ad::he_uniform<double>({4, 4}, 4, rng));
        params.add("b", Tensor<double>({4}));
        auto x = ad::make_tensor(ad::he_uniform<double>({4}, 4, rng));
        ad::LossConfig cfg{{1.0, 1.0, 1.0, 1.0}, 4};
        for (int step = 0; step < 5; ++step) {
            params.zero_grads();
            Tape<double> tape;
            auto h = ad::dense(tape, x, params.get("w"), params.get("b"));
            auto loss = ad::weighted_softmax_ce(tape, h, step % 4, cfg);
            tape.backward(loss);
            ad::sgd_momentum_step(params, 2e-4, 0.9);
        }
        return params.value_hash();
    };
    CHECK(run(99) == run(99));
    CHECK(run(99) != run(100));
}

TEST_CASE("freezing: the frozen parameter multiset is invariant under training steps") {
    Rng rng(21);
    ad::ParameterSet<double> params;
    params.add("backbone.w", ad::he_uniform<double>({3, 3}, 3, rng));
    params.add("head.w", ad::he_uniform<double>({2, 3}, 3, rng));
    params.add("head.b", Tensor<double>({2}));
    params.set_frozen("backbone.", true);
    const uint64_t frozen_before = params.frozen_hash();

    auto x = ad::make_tensor(ad::he_uniform<double>({3}, 3, rng));
    ad::LossConfig cfg{{1.0, 1.0}, 2};
    for (int step = 0; step < 4; ++step) {
        params.zero_grads();
        Tape<double> tape;
        auto h = ad::dense(tape, x, params.get("head.w"), params.get("head.b"));
        auto loss = ad::weighted_softmax_ce(tape, h, 0, cfg);
        tape.backward(loss);
        ad::sgd_momentum_step(params, 0.1, 0.9);
        CHECK(params.frozen_hash() == frozen_before);
    }
}
