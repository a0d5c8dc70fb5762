#pragma once

#include <array>
#include <vector>

#include "fuselearn/common.hpp"
#include "fuselearn/train.hpp"

// Clinical-only reference models: quadratic discriminant analysis, one-vs-rest
// linear ridge classification, a random forest with Gini splits, and the
// feature-only deep network (the clinical branch plus the shared head).

namespace fuselearn::baselines {

using Matrix = std::vector<std::vector<double>>;  // row-major samples

struct QdaModel {
    std::vector<std::vector<double>> means;       // per class
    std::vector<std::vector<double>> chol;        // lower Cholesky of Sigma_c + lambda*I
    std::vector<double> log_det;                  // log det of the regularized covariance
    std::vector<double> log_priors;
    int dim = 0;
    int num_classes = 0;

    std::vector<double> predict(const std::vector<double>& x) const;  // class probabilities
};

QdaModel qda_fit(const Matrix& X, const std::vector<int>& y, int num_classes,
                 double lambda = 1e-3);

struct RidgeClassifier {
    Matrix weights;                  // per class
    std::vector<double> intercepts;  // per class
    double lambda = 1.0;

    std::vector<double> scores(const std::vector<double>& x) const;
    int predict(const std::vector<double>& x) const;  // argmax, ties to lowest index
};

/// One-vs-rest ridge regression on +-1 targets, intercept unpenalized,
/// solved exactly via the normal equations.
RidgeClassifier ridge_fit(const Matrix& X, const std::vector<int>& y, int num_classes,
                          double lambda = 1.0);

struct RandomForest {
    struct Node {
        int feature = -1;  // -1 = leaf
        double threshold = 0;
        int left = -1, right = -1;
        std::vector<double> leaf_dist;
    };
    struct Tree {
        std::vector<Node> nodes;
    };
    std::vector<Tree> trees;
    int num_classes = 0;

    std::vector<double> predict(const std::vector<double>& x) const;  // mean leaf distribution
};

struct ForestSpec {
    int n_trees = 200;
    int max_depth = 12;
    int features_per_split = 0;  // 0 = ceil(sqrt(D))
    uint64_t seed = 0;
};

/// Bootstrap-per-tree CART with Gini impurity; splits must strictly reduce
/// weighted impurity or the node becomes a leaf.
RandomForest rf_fit(const Matrix& X, const std::vector<int>& y, int num_classes,
                    const ForestSpec& spec = {});

/// Feature-only deep model: clinical branch + shared two-layer head, trained
/// with the same optimizer/early-stopping contract as the fusion network.
template <typename T>
net::FusionModel<T> train_feature_only_dnn(const net::TrainData<T>& train,
                                           const net::TrainData<T>& val, int clinical_dim,
                                           const net::TrainSpec& spec, uint64_t seed);

}  // namespace fuselearn::baselines
