#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fuselearn/stats.hpp"

using namespace fuselearn;
using namespace fuselearn::stats;

namespace {

// brute-force AUC: count positive-negative pairs, ties at 1/2
double auc_brute(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

Prediction pred(const std::string& id, int true_label, std::array<double, 3> probs) {
    Prediction p;
    p.id = id;
    p.true_label = true_label;
    p.probs = probs;
    p.pred_label = argmax_label(probs);
    return p;
}

}  // namespace

TEST_CASE("auc_binary: separation extremes and the worked 4-point example") {
    CHECK(auc_binary({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(auc_binary({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == doctest::Approx(0.0));
    CHECK(auc_binary({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(auc_binary({0.1, 0.2}, {1, 1}), std::invalid_argument);
}

TEST_CASE("auc_binary equals brute-force pair counting on random instances") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(49));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        // quantized scores force plenty of ties
        for (auto& s : scores) s = rng.uniform_int(8) / 7.0;
        for (auto& l : labels) l = rng.bernoulli(0.4) ? 1 : 0;
        labels[0] = 0;
        labels[n - 1] = 1;
        CHECK(auc_binary(scores, labels) == doctest::Approx(auc_brute(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("compute_metrics: all-correct predictions score one everywhere") {
    PredictionSet set;
    set.items = {pred("a", 0, {0.8, 0.1, 0.1}), pred("b", 1, {0.1, 0.8, 0.1}),
                 pred("c", 2, {0.1, 0.1, 0.8}), pred("d", 0, {0.9, 0.05, 0.05}),
                 pred("e", 1, {0.2, 0.7, 0.1}), pred("f", 2, {0.05, 0.15, 0.8})};
    set.validate();
    const auto rep = compute_metrics(set);
    CHECK(rep.accuracy == 1.0);
    CHECK(rep.macro_f1 == doctest::Approx(1.0));
    CHECK(rep.macro_auc == doctest::Approx(1.0));
}

TEST_CASE("compute_metrics: label-independent scores give AUC 1/2 by the midrank rule") {
    PredictionSet set;
    for (int i = 0; i < 9; ++i)
        set.items.push_back(pred("s" + std::to_string(i), i % 3, {0.5, 0.3, 0.2}));
    const auto rep = compute_metrics(set);
    for (int c = 0; c < 3; ++c) CHECK(rep.per_class_auc[c] == doctest::Approx(0.5));
}

TEST_CASE("compute_metrics: six-subject fixture matches the hand computation") {
    PredictionSet set;
    set.items = {pred("a", 0, {0.7, 0.2, 0.1}),  // correct L
                 pred("b", 0, {0.3, 0.5, 0.2}),  // L misread as I
                 pred("c", 1, {0.1, 0.6, 0.3}),  // correct I
                 pred("d", 1, {0.5, 0.3, 0.2}),  // I misread as L
                 pred("e", 2, {0.2, 0.2, 0.6}),  // correct H
                 pred("f", 2, {0.1, 0.3, 0.6})};  // correct H
    const auto rep = compute_metrics(set);
    CHECK(rep.accuracy == doctest::Approx(4.0 / 6.0));
    // per-class: L: tp1 fp1 fn1 -> P=R=0.5; I: tp1 fp1 fn1 -> 0.5; H: tp2 fp0 fn0 -> 1
    CHECK(rep.macro_precision == doctest::Approx((0.5 + 0.5 + 1.0) / 3.0));
    CHECK(rep.macro_recall == doctest::Approx((0.5 + 0.5 + 1.0) / 3.0));
    CHECK(rep.macro_f1 == doctest::Approx((0.5 + 0.5 + 1.0) / 3.0));
    // AUC via the independent pair-counting oracle
    for (int c = 0; c < 3; ++c) {
        std::vector<double> scores;
        std::vector<int> ovr;
        for (const auto& p : set.items) {
            scores.push_back(p.probs[c]);
            ovr.push_back(p.true_label == c ? 1 : 0);
        }
        CHECK(rep.per_class_auc[c] == doctest::Approx(auc_brute(scores, ovr)));
    }
}

TEST_CASE("compute_metrics is invariant under subject reordering") {
    Rng rng(31);
    PredictionSet set;
    for (int i = 0; i < 30; ++i) {
        std::array<double, 3> probs;
        double z = 0;
        for (auto& v : probs) {
            v = rng.uniform(0.01, 1.0);
            z += v;
        }
        for (auto& v : probs) v /= z;
        set.items.push_back(pred("s" + std::to_string(i), static_cast<int>(rng.uniform_int(3)), probs));
    }
    auto shuffled = set;
    rng.shuffle(shuffled.items);
    const auto a = compute_metrics(set);
    const auto b = compute_metrics(shuffled);
    CHECK(a.accuracy == doctest::Approx(b.accuracy));
    CHECK(a.macro_f1 == doctest::Approx(b.macro_f1));
    CHECK(a.macro_auc == doctest::Approx(b.macro_auc));
}

TEST_CASE("delong: identical scores give p = 1, swapping sides negates z") {
    Rng rng(47);
    std::vector<double> a(80), b(80);
    std::vector<int> labels(80);
    for (int i = 0; i < 80; ++i) {
        labels[i] = i % 2;
        a[i] = rng.uniform(0, 1) + 0.3 * labels[i];
        b[i] = rng.uniform(0, 1) + 0.1 * labels[i];
    }
    const auto same = delong_test(a, a, labels);
    CHECK(same.auc_a == doctest::Approx(same.auc_b));
    CHECK(same.p == doctest::Approx(1.0));

    const auto ab = delong_test(a, b, labels);
    const auto ba = delong_test(b, a, labels);
    CHECK(ab.z == doctest::Approx(-ba.z));
    CHECK(ab.p == doctest::Approx(ba.p));
}

TEST_CASE("delong: zero-variance cases are flagged and resolved by the difference") {
    // both models separate perfectly: every placement is 1 or 0, variance 0
    std::vector<double> perfect = {0.1, 0.2, 0.3, 0.8, 0.9, 0.95};
    std::vector<int> labels = {0, 0, 0, 1, 1, 1};
    const auto same = stats::delong_test(perfect, perfect, labels);
    CHECK(same.degenerate_variance);
    CHECK(same.p == 1.0);

    // one perfect, one anti-perfect: zero variance but a real difference
    std::vector<double> reversed = {0.95, 0.9, 0.8, 0.3, 0.2, 0.1};
    const auto opposite = stats::delong_test(perfect, reversed, labels);
    CHECK(opposite.degenerate_variance);
    CHECK(opposite.auc_a == doctest::Approx(1.0));
    CHECK(opposite.auc_b == doctest::Approx(0.0));
    CHECK(opposite.p == 0.0);
}

TEST_CASE("delong: a perfect model against noise is strongly significant") {
    Rng rng(53);
    PredictionSet perfect, noisy;
    for (int i = 0; i < 300; ++i) {
        const int label = static_cast<int>(rng.uniform_int(3));
        std::array<double, 3> p{0.05, 0.05, 0.05};
        p[label] = 0.9;
        perfect.items.push_back(pred("s" + std::to_string(i), label, p));
        std::array<double, 3> q;
        double z = 0;
        for (auto& v : q) {
            v = rng.uniform(0.01, 1.0);
            z += v;
        }
        for (auto& v : q) v /= z;
        noisy.items.push_back(pred("s" + std::to_string(i), label, q));
    }
    const auto cmp = delong_multiclass(perfect, noisy);
    REQUIRE(cmp.per_class.size() == 3);
    for (const auto& c : cmp.per_class) CHECK(c.p < 0.001);
    CHECK(cmp.combined_significant);

    const auto self_cmp = delong_multiclass(perfect, perfect);
    for (const auto& c : self_cmp.per_class) CHECK(c.p == doctest::Approx(1.0));
    CHECK(!self_cmp.combined_significant);
}

TEST_CASE("delong variance tracks a paired bootstrap on correlated scores") {
    Rng rng(61);
    const int n = 200;
    std::vector<double> base(n), a(n), b(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        labels[i] = i < n / 2 ? 0 : 1;
        base[i] = rng.normal(labels[i] * 0.8, 1.0);
        a[i] = base[i] + rng.normal(0, 0.4);
        b[i] = base[i] + rng.normal(0, 0.4);
    }
    const auto res = delong_test(a, b, labels);
    // analytic variance of the AUC difference reconstructed from z
    const double diff = res.auc_a - res.auc_b;
    const double var_analytic = res.z != 0 ? (diff / res.z) * (diff / res.z) : 0.0;

    const int boots = 10000;
    std::vector<double> deltas;
    deltas.reserve(boots);
    for (int rep = 0; rep < boots; ++rep) {
        std::vector<double> ba, bb;
        std::vector<int> bl;
        ba.reserve(n);
        bb.reserve(n);
        bl.reserve(n);
        while (true) {
            ba.clear();
            bb.clear();
            bl.clear();
            bool pos = false, neg = false;
            for (int i = 0; i < n; ++i) {
                const size_t j = static_cast<size_t>(rng.uniform_int(n));
                ba.push_back(a[j]);
                bb.push_back(b[j]);
                bl.push_back(labels[j]);
                (labels[j] ? pos : neg) = true;
            }
            if (pos && neg) break;
        }
        deltas.push_back(auc_binary(ba, bl) - auc_binary(bb, bl));
    }
    double mean = 0;
    for (double d : deltas) mean += d;
    mean /= boots;
    double var_boot = 0;
    for (double d : deltas) var_boot += (d - mean) * (d - mean);
    var_boot /= boots - 1;

    CHECK(std::abs(var_analytic - var_boot) / var_boot < 0.20);
}

TEST_CASE("mcnemar: exact and chi-square branches match the worked examples") {
    // b = c = 5: exact two-sided binomial capped at 1
    std::vector<bool> ca, cb;
    auto push_pairs = [&](int b_cnt, int c_cnt, int both) {
        ca.clear();
        cb.clear();
        for (int i = 0; i < b_cnt; ++i) {
            ca.push_back(true);
            cb.push_back(false);
        }
        for (int i = 0; i < c_cnt; ++i) {
            ca.push_back(false);
            cb.push_back(true);
        }
        for (int i = 0; i < both; ++i) {
            ca.push_back(true);
            cb.push_back(true);
        }
    };
    push_pairs(5, 5, 10);
    auto r = mcnemar_test(ca, cb);
    CHECK(r.exact);
    CHECK(r.p == doctest::Approx(1.0));

    push_pairs(10, 0, 5);
    r = mcnemar_test(ca, cb);
    CHECK(r.exact);
    CHECK(r.p == doctest::Approx(0.001953125).epsilon(1e-9));

    push_pairs(40, 20, 30);
    r = mcnemar_test(ca, cb);
    CHECK(!r.exact);
    CHECK(r.statistic == doctest::Approx(6.0166667).epsilon(1e-6));
    CHECK(r.p == doctest::Approx(0.0141714).epsilon(1e-4));

    push_pairs(0, 0, 12);
    r = mcnemar_test(ca, cb);
    CHECK(r.p == 1.0);
}

TEST_CASE("mcnemar: exact and chi-square agree near the 25-discordant boundary") {
    for (long b = 12; b <= 16; ++b) {
        const long c = 25 - b;
        CHECK(std::abs(mcnemar_exact_p(b, c) - mcnemar_chi2_p(b, c)) < 0.02);
    }
}

TEST_CASE("ci_over_runs: fixture and degenerate cases") {
    const auto r = ci_over_runs({0.60, 0.62, 0.64, 0.66, 0.68});
    CHECK(r.mean == doctest::Approx(0.64));
    CHECK(r.hi - r.mean == doctest::Approx(0.0393).epsilon(2e-3));
    CHECK(r.lo == doctest::Approx(0.6007).epsilon(1e-4));
    CHECK(r.hi == doctest::Approx(0.6793).epsilon(1e-4));

    const auto z = ci_over_runs({0.5, 0.5, 0.5});
    CHECK(z.mean == 0.5);
    CHECK(z.lo == doctest::Approx(0.5));
    CHECK(z.hi == doctest::Approx(0.5));

    CHECK_THROWS_AS(ci_over_runs({0.4}), std::invalid_argument);

    // the interval always contains the mean
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> vals(2 + rng.uniform_int(6));
        for (auto& v : vals) v = rng.uniform(0, 1);
        const auto ci = ci_over_runs(vals);
        CHECK(ci.lo <= ci.mean);
        CHECK(ci.mean <= ci.hi);
    }
}

TEST_CASE("student t quantile matches the reference value") {
    CHECK(student_t_quantile(0.975, 4) == doctest::Approx(2.7764451).epsilon(1e-6));
    CHECK(student_t_quantile(0.975, 1) == doctest::Approx(12.7062047).epsilon(1e-5));
}

TEST_CASE("spearman: monotone sequences correlate to +-1, midranks handle ties") {
    CHECK(spearman({1, 2, 3, 4, 5}, {10, 20, 30, 40, 50}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4, 5}, {50, 40, 30, 20, 10}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 2, 3, 4}, {2, 1, 4, 3}) == doctest::Approx(0.6));
}

TEST_CASE("prediction CSV round-trips probabilities exactly") {
    Rng rng(71);
    PredictionSet set;
    for (int i = 0; i < 25; ++i) {
        std::array<double, 3> probs;
        double z = 0;
        for (auto& v : probs) {
            v = rng.uniform(1e-6, 1.0);
            z += v;
        }
        for (auto& v : probs) v /= z;
        set.items.push_back(pred("s" + std::to_string(i), static_cast<int>(rng.uniform_int(3)), probs));
    }
    const std::string path =
        (std::filesystem::temp_directory_path() / "fuselearn_pred_test.csv").string();
    save_predictions_csv(path, set);
    const auto back = load_predictions_csv(path);
    REQUIRE(back.items.size() == set.items.size());
    for (size_t i = 0; i < set.items.size(); ++i) {
        CHECK(back.items[i].id == set.items[i].id);
        CHECK(back.items[i].true_label == set.items[i].true_label);
        CHECK(back.items[i].pred_label == set.items[i].pred_label);
        for (int c = 0; c < 3; ++c) CHECK(back.items[i].probs[c] == set.items[i].probs[c]);
    }
}

TEST_CASE("argmax ties break to the lowest class index") {
    CHECK(argmax_label({0.4, 0.4, 0.2}) == 0);
    CHECK(argmax_label({0.2, 0.4, 0.4}) == 1);
    CHECK(argmax_label({1.0 / 3, 1.0 / 3, 1.0 / 3}) == 0);
}
