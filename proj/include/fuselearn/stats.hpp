#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fuselearn/common.hpp"

// Evaluation metrics and paired significance tests: accuracy and macro
// precision/recall/F1, one-vs-rest AUC with midrank tie handling, the DeLong
// test for correlated AUCs, McNemar's test on discordant pairs, and
// Student-t confidence intervals over repeated runs.

namespace fuselearn::stats {

inline constexpr int kNumClasses = 3;
inline const char* kClassNames[kNumClasses] = {"L", "I", "H"};

int class_index(const std::string& name);

struct Prediction {
    std::string id;
    int true_label = 0;
    std::array<double, kNumClasses> probs{};
    int pred_label = 0;  // argmax, ties to the lowest index
};

struct PredictionSet {
    std::vector<Prediction> items;

    void validate() const;  // probs sum to 1, pred consistent with argmax
};

/// argmax with ties resolved to the lowest index.
int argmax_label(const std::array<double, kNumClasses>& probs);

struct MetricReport {
    double accuracy = 0;
    double macro_precision = 0;
    double macro_recall = 0;
    double macro_f1 = 0;
    std::array<double, kNumClasses> per_class_auc{};  // NaN when undefined
    double macro_auc = 0;                             // mean over defined classes
    bool auc_partial = false;  // true when some class had no positives/negatives

    // Optional 95% CIs keyed by metric name, set by multi-run aggregation.
    std::vector<std::pair<std::string, std::pair<double, double>>> ci;
    int n_runs = 1;

    std::string to_json() const;
};

MetricReport compute_metrics(const PredictionSet& preds);

/// Rank-statistic AUC with midranks for ties. Both classes must be present.
double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

struct DelongResult {
    double auc_a = 0, auc_b = 0;
    double z = 0;
    double p = 1;
    bool degenerate_variance = false;
};

/// Paired DeLong test on two score vectors over the same subjects.
DelongResult delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                         const std::vector<int>& labels);

struct PairedComparison {
    std::string metric;
    double value_a = 0, value_b = 0;
    double statistic = 0;
    double p = 1;
    bool significant = false;  // p < 0.05
};

struct MulticlassDelong {
    std::vector<PairedComparison> per_class;
    bool combined_significant = false;  // any per-class p < 0.05/3 (Bonferroni)
};

/// One-vs-rest DeLong per class; subjects must be aligned between the sets.
MulticlassDelong delong_multiclass(const PredictionSet& a, const PredictionSet& b);

struct McNemarResult {
    long b = 0;  // first-only-correct count
    long c = 0;  // second-only-correct count
    double statistic = 0;  // chi-square value, or min(b,c) on the exact branch
    double p = 1;
    bool exact = false;
};

/// Exact two-sided binomial for b+c < 25, else continuity-corrected chi-square.
McNemarResult mcnemar_test(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b);

double mcnemar_exact_p(long b, long c);
double mcnemar_chi2_p(long b, long c);

struct RunInterval {
    double mean = 0, lo = 0, hi = 0;
};

/// Student-t 95% interval over R >= 2 independent runs.
RunInterval ci_over_runs(const std::vector<double>& values);

/// Spearman rank correlation (midranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Distribution helpers.
double normal_cdf(double x);
double chi2_sf_1df(double x);
double student_t_quantile(double p, int df);  // p in (0.5, 1)

/// Midranks (1-based, ties averaged).
std::vector<double> midranks(const std::vector<double>& v);

// Prediction CSV: subject_id,p_low,p_intermediate,p_high,pred_label,true_label.
// Probabilities round-trip exactly (printed with %.17g).
void save_predictions_csv(const std::string& path, const PredictionSet& preds);
PredictionSet load_predictions_csv(const std::string& path);

}  // namespace fuselearn::stats
