#include "fuselearn/stats.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace fuselearn::stats {

int class_index(const std::string& name) {
    for (int i = 0; i < kNumClasses; ++i)
        if (name == kClassNames[i]) return i;
    throw DataError("unknown class label: '" + name + "'");
}

int argmax_label(const std::array<double, kNumClasses>& probs) {
    int best = 0;
    for (int i = 1; i < kNumClasses; ++i)
        if (probs[i] > probs[best]) best = i;
    return best;
}

void PredictionSet::validate() const {
    for (const auto& p : items) {
        double sum = 0;
        for (double v : p.probs) sum += v;
        if (std::abs(sum - 1.0) > 1e-6)
            throw DataError("prediction for '" + p.id + "' does not sum to 1");
        if (p.pred_label != argmax_label(p.probs))
            throw DataError("prediction for '" + p.id + "' has inconsistent argmax label");
    }
}

std::vector<double> midranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc_binary: size mismatch or empty input");
    long n_pos = 0, n_neg = 0;
    for (int y : labels) (y ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc_binary: both classes must be present");
    const auto ranks = midranks(scores);
    double rank_sum = 0;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) rank_sum += ranks[i];
    return (rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricReport compute_metrics(const PredictionSet& preds) {
    if (preds.items.empty()) throw std::invalid_argument("compute_metrics: empty prediction set");
    MetricReport rep;

    long correct = 0;
    long tp[kNumClasses] = {}, fp[kNumClasses] = {}, fn[kNumClasses] = {};
    for (const auto& p : preds.items) {
        if (p.pred_label == p.true_label) {
            ++correct;
            ++tp[p.true_label];
        } else {
            ++fp[p.pred_label];
            ++fn[p.true_label];
        }
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(preds.items.size());

    double psum = 0, rsum = 0, fsum = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        const double prec = tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
        const double rec = tp[c] + fn[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
        const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        psum += prec;
        rsum += rec;
        fsum += f1;
    }
    rep.macro_precision = psum / kNumClasses;
    rep.macro_recall = rsum / kNumClasses;
    rep.macro_f1 = fsum / kNumClasses;

    double auc_sum = 0;
    int auc_n = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<double> scores;
        std::vector<int> ovr;
        scores.reserve(preds.items.size());
        ovr.reserve(preds.items.size());
        for (const auto& p : preds.items) {
            scores.push_back(p.probs[c]);
            ovr.push_back(p.true_label == c ? 1 : 0);
        }
        const bool has_pos = std::find(ovr.begin(), ovr.end(), 1) != ovr.end();
        const bool has_neg = std::find(ovr.begin(), ovr.end(), 0) != ovr.end();
        if (has_pos && has_neg) {
            rep.per_class_auc[c] = auc_binary(scores, ovr);
            auc_sum += rep.per_class_auc[c];
            ++auc_n;
        } else {
            rep.per_class_auc[c] = std::numeric_limits<double>::quiet_NaN();
            rep.auc_partial = true;
        }
    }
    rep.macro_auc = auc_n > 0 ? auc_sum / auc_n : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["metrics"] = {{"accuracy", accuracy},
                    {"macro_precision", macro_precision},
                    {"macro_recall", macro_recall},
                    {"macro_f1", macro_f1},
                    {"macro_auc", macro_auc}};
    nlohmann::json per;
    for (int c = 0; c < kNumClasses; ++c) {
        if (std::isnan(per_class_auc[c]))
            per[kClassNames[c]] = nullptr;
        else
            per[kClassNames[c]] = per_class_auc[c];
    }
    j["per_class"] = {{"auc", per}};
    j["auc_partial"] = auc_partial;
    nlohmann::json jci = nlohmann::json::object();
    for (const auto& [name, interval] : ci) jci[name] = {interval.first, interval.second};
    j["ci"] = jci;
    j["n_runs"] = n_runs;
    return j.dump(2);
}

// ---- DeLong ---------------------------------------------------------------

namespace {

// Placement values: V10[i] = mean_j psi(x_i, y_j), V01[j] = mean_i psi(x_i, y_j)
void placements(const std::vector<double>& pos, const std::vector<double>& neg,
                std::vector<double>& v10, std::vector<double>& v01, double& auc) {
    const size_t m = pos.size(), n = neg.size();
    v10.assign(m, 0.0);
    v01.assign(n, 0.0);
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            const double psi = pos[i] > neg[j] ? 1.0 : (pos[i] == neg[j] ? 0.5 : 0.0);
            v10[i] += psi;
            v01[j] += psi;
        }
    }
    double total = 0;
    for (size_t i = 0; i < m; ++i) {
        v10[i] /= static_cast<double>(n);
        total += v10[i];
    }
    for (size_t j = 0; j < n; ++j) v01[j] /= static_cast<double>(m);
    auc = total / static_cast<double>(m);
}

double covariance(const std::vector<double>& a, double ma, const std::vector<double>& b,
                  double mb) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / static_cast<double>(a.size() - 1);
}

}  // namespace

DelongResult delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                         const std::vector<int>& labels) {
    if (scores_a.size() != labels.size() || scores_b.size() != labels.size())
        throw std::invalid_argument("delong_test: scores must be paired over identical subjects");
    std::vector<double> pos_a, neg_a, pos_b, neg_b;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            pos_a.push_back(scores_a[i]);
            pos_b.push_back(scores_b[i]);
        } else {
            neg_a.push_back(scores_a[i]);
            neg_b.push_back(scores_b[i]);
        }
    }
    if (pos_a.size() < 2 || neg_a.size() < 2)
        throw std::invalid_argument("delong_test: need >= 2 subjects in each class");

    DelongResult res;
    std::vector<double> v10a, v01a, v10b, v01b;
    placements(pos_a, neg_a, v10a, v01a, res.auc_a);
    placements(pos_b, neg_b, v10b, v01b, res.auc_b);

    const double m = static_cast<double>(pos_a.size());
    const double n = static_cast<double>(neg_a.size());
    const double s10 = covariance(v10a, res.auc_a, v10a, res.auc_a) +
                       covariance(v10b, res.auc_b, v10b, res.auc_b) -
                       2 * covariance(v10a, res.auc_a, v10b, res.auc_b);
    const double s01 = covariance(v01a, res.auc_a, v01a, res.auc_a) +
                       covariance(v01b, res.auc_b, v01b, res.auc_b) -
                       2 * covariance(v01a, res.auc_a, v01b, res.auc_b);
    const double var = s10 / m + s01 / n;
    const double diff = res.auc_a - res.auc_b;

    if (var <= 1e-24) {
        res.degenerate_variance = true;
        res.z = 0;
        res.p = std::abs(diff) < 1e-15 ? 1.0 : 0.0;
        return res;
    }
    res.z = diff / std::sqrt(var);
    res.p = 2.0 * (1.0 - normal_cdf(std::abs(res.z)));
    return res;
}

MulticlassDelong delong_multiclass(const PredictionSet& a, const PredictionSet& b) {
    if (a.items.size() != b.items.size())
        throw MismatchError("delong_multiclass: prediction sets differ in size");
    for (size_t i = 0; i < a.items.size(); ++i)
        if (a.items[i].id != b.items[i].id || a.items[i].true_label != b.items[i].true_label)
            throw MismatchError("delong_multiclass: subject mismatch at row " + std::to_string(i));

    MulticlassDelong out;
    const double bonferroni = 0.05 / kNumClasses;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<double> sa, sb;
        std::vector<int> labels;
        for (size_t i = 0; i < a.items.size(); ++i) {
            sa.push_back(a.items[i].probs[c]);
            sb.push_back(b.items[i].probs[c]);
            labels.push_back(a.items[i].true_label == c ? 1 : 0);
        }
        const DelongResult r = delong_test(sa, sb, labels);
        PairedComparison cmp;
        cmp.metric = std::string("auc_") + kClassNames[c];
        cmp.value_a = r.auc_a;
        cmp.value_b = r.auc_b;
        cmp.statistic = r.z;
        cmp.p = r.p;
        cmp.significant = r.p < 0.05;
        out.per_class.push_back(cmp);
        if (r.p < bonferroni) out.combined_significant = true;
    }
    return out;
}

// ---- McNemar -------------------------------------------------------------

double mcnemar_exact_p(long b, long c) {
    const long n = b + c;
    if (n == 0) return 1.0;
    const long k = std::min(b, c);
    // P(X <= k) under Bin(n, 1/2)
    double tail = 0;
    double log_half_n = -static_cast<double>(n) * std::log(2.0);
    for (long i = 0; i <= k; ++i) {
        double log_comb = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
        tail += std::exp(log_comb + log_half_n);
    }
    return std::min(1.0, 2.0 * tail);
}

double mcnemar_chi2_p(long b, long c) {
    const long n = b + c;
    if (n == 0) return 1.0;
    const double stat = std::pow(std::abs(static_cast<double>(b - c)) - 1.0, 2) /
                        static_cast<double>(n);
    return chi2_sf_1df(stat);
}

McNemarResult mcnemar_test(const std::vector<bool>& correct_a,
                           const std::vector<bool>& correct_b) {
    if (correct_a.size() != correct_b.size())
        throw std::invalid_argument("mcnemar_test: inputs must be paired over identical subjects");
    McNemarResult res;
    for (size_t i = 0; i < correct_a.size(); ++i) {
        if (correct_a[i] && !correct_b[i]) ++res.b;
        if (!correct_a[i] && correct_b[i]) ++res.c;
    }
    const long n = res.b + res.c;
    if (n == 0) {
        res.exact = true;
        res.statistic = 0;
        res.p = 1.0;
        return res;
    }
    if (n < 25) {
        res.exact = true;
        res.statistic = static_cast<double>(std::min(res.b, res.c));
        res.p = mcnemar_exact_p(res.b, res.c);
    } else {
        res.exact = false;
        res.statistic = std::pow(std::abs(static_cast<double>(res.b - res.c)) - 1.0, 2) /
                        static_cast<double>(n);
        res.p = chi2_sf_1df(res.statistic);
    }
    return res;
}

// ---- intervals and correlations -----------------------------------------

RunInterval ci_over_runs(const std::vector<double>& values) {
    const int r = static_cast<int>(values.size());
    if (r < 2) throw std::invalid_argument("ci_over_runs: need >= 2 runs");
    RunInterval out;
    for (double v : values) out.mean += v;
    out.mean /= r;
    double ss = 0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double s = std::sqrt(ss / (r - 1));
    const double hw = student_t_quantile(0.975, r - 1) * s / std::sqrt(static_cast<double>(r));
    out.lo = out.mean - hw;
    out.hi = out.mean + hw;
    return out;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman: need paired vectors of size >= 2");
    const auto rx = midranks(x);
    const auto ry = midranks(y);
    double mx = 0, my = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= rx.size();
    my /= ry.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// ---- distributions -------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double chi2_sf_1df(double x) { return x <= 0 ? 1.0 : std::erfc(std::sqrt(x / 2.0)); }

namespace {

// Continued-fraction evaluation of the regularized incomplete beta function.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                               a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, int df) {
    const double x = static_cast<double>(df) / (df + t * t);
    const double half_tail = 0.5 * betai(df / 2.0, 0.5, x);
    return t >= 0 ? 1.0 - half_tail : half_tail;
}

}  // namespace

double student_t_quantile(double p, int df) {
    if (!(p > 0.5 && p < 1.0)) throw std::invalid_argument("student_t_quantile: p in (0.5, 1)");
    if (df < 1) throw std::invalid_argument("student_t_quantile: df >= 1");
    double lo = 0.0, hi = 1.0;
    while (student_t_cdf(hi, df) < p) hi *= 2.0;  // bracket
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, df) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// ---- prediction CSV -------------------------------------------------------

void save_predictions_csv(const std::string& path, const PredictionSet& preds) {
    std::ostringstream out;
    out << "subject_id,p_low,p_intermediate,p_high,pred_label,true_label\n";
    char buf[64];
    for (const auto& p : preds.items) {
        out << p.id;
        for (double v : p.probs) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << ',' << kClassNames[p.pred_label] << ',' << kClassNames[p.true_label] << '\n';
    }
    write_text_file(path, out.str());
}

PredictionSet load_predictions_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open predictions: " + path);
    std::string line;
    if (!std::getline(in, line) ||
        trim(line) != "subject_id,p_low,p_intermediate,p_high,pred_label,true_label")
        throw DataError("bad prediction CSV header: " + path);
    PredictionSet set;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cols = split(line, ',');
        if (cols.size() != 6)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 6 columns");
        Prediction p;
        p.id = trim(cols[0]);
        for (int c = 0; c < kNumClasses; ++c) p.probs[c] = std::stod(cols[1 + c]);
        p.pred_label = class_index(trim(cols[4]));
        p.true_label = class_index(trim(cols[5]));
        set.items.push_back(std::move(p));
    }
    return set;
}

}  // namespace fuselearn::stats
