#include "fuselearn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fuselearn/autodiff.hpp"

namespace fuselearn::baselines {

namespace {

// Lower Cholesky factor of a symmetric positive-definite matrix (row-major).
// Returns false when the matrix is not positive definite.
bool cholesky(const std::vector<double>& a, int n, std::vector<double>& L) {
    L.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[static_cast<size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= L[static_cast<size_t>(i) * n + k] * L[static_cast<size_t>(j) * n + k];
            if (i == j) {
                if (s <= 0) return false;
                L[static_cast<size_t>(i) * n + j] = std::sqrt(s);
            } else {
                L[static_cast<size_t>(i) * n + j] = s / L[static_cast<size_t>(j) * n + j];
            }
        }
    }
    return true;
}

// Solve L y = b, then L^T x = y.
std::vector<double> chol_solve(const std::vector<double>& L, int n, std::vector<double> b) {
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < i; ++k) b[i] -= L[static_cast<size_t>(i) * n + k] * b[k];
        b[i] /= L[static_cast<size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int k = i + 1; k < n; ++k) b[i] -= L[static_cast<size_t>(k) * n + i] * b[k];
        b[i] /= L[static_cast<size_t>(i) * n + i];
    }
    return b;
}

}  // namespace

// ---- QDA -------------------------------------------------------------------

QdaModel qda_fit(const Matrix& X, const std::vector<int>& y, int num_classes, double lambda) {
    if (X.empty() || X.size() != y.size()) throw std::invalid_argument("qda_fit: bad inputs");
    const int d = static_cast<int>(X[0].size());
    QdaModel m;
    m.dim = d;
    m.num_classes = num_classes;

    for (int c = 0; c < num_classes; ++c) {
        std::vector<size_t> members;
        for (size_t i = 0; i < y.size(); ++i)
            if (y[i] == c) members.push_back(i);
        if (members.size() < 2)
            throw std::invalid_argument("qda_fit: class " + std::to_string(c) +
                                        " needs >= 2 samples");

        std::vector<double> mu(d, 0.0);
        for (size_t i : members)
            for (int j = 0; j < d; ++j) mu[j] += X[i][j];
        for (double& v : mu) v /= static_cast<double>(members.size());

        std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
        for (size_t i : members) {
            for (int a = 0; a < d; ++a) {
                const double da = X[i][a] - mu[a];
                for (int b = 0; b <= a; ++b)
                    cov[static_cast<size_t>(a) * d + b] += da * (X[i][b] - mu[b]);
            }
        }
        // maximum-likelihood covariance: duplicating a class's samples leaves
        // its fitted density unchanged
        const double denom = static_cast<double>(members.size());
        for (int a = 0; a < d; ++a)
            for (int b = 0; b <= a; ++b) {
                cov[static_cast<size_t>(a) * d + b] /= denom;
                cov[static_cast<size_t>(b) * d + a] = cov[static_cast<size_t>(a) * d + b];
            }
        for (int a = 0; a < d; ++a) cov[static_cast<size_t>(a) * d + a] += lambda;

        std::vector<double> L;
        if (!cholesky(cov, d, L))
            throw std::runtime_error("qda_fit: covariance for class " + std::to_string(c) +
                                     " is singular even after regularization");
        double logdet = 0;
        for (int a = 0; a < d; ++a) logdet += 2.0 * std::log(L[static_cast<size_t>(a) * d + a]);

        m.means.push_back(std::move(mu));
        m.chol.push_back(std::move(L));
        m.log_det.push_back(logdet);
        m.log_priors.push_back(std::log(static_cast<double>(members.size()) /
                                        static_cast<double>(y.size())));
    }
    return m;
}

std::vector<double> QdaModel::predict(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != dim) throw std::invalid_argument("qda predict: bad dim");
    std::vector<double> disc(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        std::vector<double> diff(dim);
        for (int j = 0; j < dim; ++j) diff[j] = x[j] - means[c][j];
        // (x-mu)^T Sigma^-1 (x-mu) via one triangular solve: ||L^-1 diff||^2
        std::vector<double> z = diff;
        for (int i = 0; i < dim; ++i) {
            for (int k = 0; k < i; ++k) z[i] -= chol[c][static_cast<size_t>(i) * dim + k] * z[k];
            z[i] /= chol[c][static_cast<size_t>(i) * dim + i];
        }
        double quad = 0;
        for (double v : z) quad += v * v;
        disc[c] = -0.5 * quad - 0.5 * log_det[c] + log_priors[c];
    }
    return ad::softmax(disc);
}

// ---- ridge -----------------------------------------------------------------

RidgeClassifier ridge_fit(const Matrix& X, const std::vector<int>& y, int num_classes,
                          double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("ridge_fit: lambda must be > 0");
    if (X.empty() || X.size() != y.size()) throw std::invalid_argument("ridge_fit: bad inputs");
    const int d = static_cast<int>(X[0].size());
    const size_t n = X.size();

    std::vector<double> xmean(d, 0.0);
    for (const auto& row : X)
        for (int j = 0; j < d; ++j) xmean[j] += row[j];
    for (double& v : xmean) v /= static_cast<double>(n);

    // gram matrix of centered features + lambda*I
    std::vector<double> gram(static_cast<size_t>(d) * d, 0.0);
    for (const auto& row : X) {
        for (int a = 0; a < d; ++a) {
            const double da = row[a] - xmean[a];
            for (int b = 0; b <= a; ++b) gram[static_cast<size_t>(a) * d + b] += da * (row[b] - xmean[b]);
        }
    }
    for (int a = 0; a < d; ++a)
        for (int b = 0; b <= a; ++b) gram[static_cast<size_t>(b) * d + a] = gram[static_cast<size_t>(a) * d + b];
    for (int a = 0; a < d; ++a) gram[static_cast<size_t>(a) * d + a] += lambda;

    std::vector<double> L;
    if (!cholesky(gram, d, L)) throw std::runtime_error("ridge_fit: normal equations not SPD");

    RidgeClassifier rc;
    rc.lambda = lambda;
    for (int c = 0; c < num_classes; ++c) {
        double tmean = 0;
        std::vector<double> rhs(d, 0.0);
        for (size_t i = 0; i < n; ++i) {
            const double t = y[i] == c ? 1.0 : -1.0;
            tmean += t;
            for (int j = 0; j < d; ++j) rhs[j] += (X[i][j] - xmean[j]) * t;
        }
        tmean /= static_cast<double>(n);
        auto w = chol_solve(L, d, std::move(rhs));
        double b = tmean;
        for (int j = 0; j < d; ++j) b -= w[j] * xmean[j];
        rc.weights.push_back(std::move(w));
        rc.intercepts.push_back(b);
    }
    return rc;
}

std::vector<double> RidgeClassifier::scores(const std::vector<double>& x) const {
    std::vector<double> out(weights.size());
    for (size_t c = 0; c < weights.size(); ++c) {
        double s = intercepts[c];
        for (size_t j = 0; j < x.size(); ++j) s += weights[c][j] * x[j];
        out[c] = s;
    }
    return out;
}

int RidgeClassifier::predict(const std::vector<double>& x) const {
    const auto s = scores(x);
    int best = 0;
    for (size_t c = 1; c < s.size(); ++c)
        if (s[c] > s[best]) best = static_cast<int>(c);
    return best;
}

// ---- random forest ----------------------------------------------------------

namespace {

double gini(const std::vector<long>& counts, long total) {
    if (total == 0) return 0.0;
    double g = 1.0;
    for (long c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        g -= p * p;
    }
    return g;
}

struct TreeBuilder {
    const Matrix& X;
    const std::vector<int>& y;
    int num_classes;
    int max_depth;
    int m_features;
    Rng rng;
    RandomForest::Tree tree;

    int build(std::vector<size_t> idx, int depth) {
        std::vector<long> counts(num_classes, 0);
        for (size_t i : idx) ++counts[y[i]];
        const long total = static_cast<long>(idx.size());
        const double node_gini = gini(counts, total);

        auto make_leaf = [&]() {
            RandomForest::Node node;
            node.leaf_dist.resize(num_classes);
            for (int c = 0; c < num_classes; ++c)
                node.leaf_dist[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
            tree.nodes.push_back(std::move(node));
            return static_cast<int>(tree.nodes.size() - 1);
        };

        if (depth >= max_depth || node_gini == 0.0 || idx.size() < 2) return make_leaf();

        const int d = static_cast<int>(X[0].size());
        // sample m distinct candidate features
        std::vector<int> feats(d);
        std::iota(feats.begin(), feats.end(), 0);
        for (int k = 0; k < m_features && k < d; ++k) {
            const int j = k + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(d - k)));
            std::swap(feats[k], feats[j]);
        }

        int best_feature = -1;
        double best_threshold = 0, best_score = node_gini;  // must strictly improve
        for (int k = 0; k < m_features && k < d; ++k) {
            const int f = feats[k];
            std::vector<std::pair<double, int>> vals;
            vals.reserve(idx.size());
            for (size_t i : idx) vals.emplace_back(X[i][f], y[i]);
            std::sort(vals.begin(), vals.end());
            std::vector<long> left(num_classes, 0);
            std::vector<long> right = counts;
            for (size_t i = 0; i + 1 < vals.size(); ++i) {
                ++left[vals[i].second];
                --right[vals[i].second];
                if (vals[i].first == vals[i + 1].first) continue;
                const long nl = static_cast<long>(i + 1), nr = total - nl;
                const double score = (nl * gini(left, nl) + nr * gini(right, nr)) /
                                     static_cast<double>(total);
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        if (best_feature < 0) return make_leaf();

        std::vector<size_t> left_idx, right_idx;
        for (size_t i : idx)
            (X[i][best_feature] <= best_threshold ? left_idx : right_idx).push_back(i);
        idx.clear();
        idx.shrink_to_fit();

        const int me = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[me].feature = best_feature;
        tree.nodes[me].threshold = best_threshold;
        const int l = build(std::move(left_idx), depth + 1);
        const int r = build(std::move(right_idx), depth + 1);
        tree.nodes[me].left = l;
        tree.nodes[me].right = r;
        return me;
    }
};

}  // namespace

RandomForest rf_fit(const Matrix& X, const std::vector<int>& y, int num_classes,
                    const ForestSpec& spec) {
    if (spec.n_trees < 1) throw std::invalid_argument("rf_fit: need >= 1 tree");
    if (X.empty() || X.size() != y.size()) throw std::invalid_argument("rf_fit: bad inputs");
    const int d = static_cast<int>(X[0].size());
    const int m = spec.features_per_split > 0
                      ? spec.features_per_split
                      : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));

    RandomForest forest;
    forest.num_classes = num_classes;
    for (int t = 0; t < spec.n_trees; ++t) {
        Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(t)));
        std::vector<size_t> bootstrap(X.size());
        for (auto& i : bootstrap) i = static_cast<size_t>(rng.uniform_int(X.size()));
        TreeBuilder builder{X, y, num_classes, spec.max_depth, m, rng.fork(1), {}};
        builder.build(std::move(bootstrap), 0);
        forest.trees.push_back(std::move(builder.tree));
    }
    return forest;
}

std::vector<double> RandomForest::predict(const std::vector<double>& x) const {
    std::vector<double> probs(num_classes, 0.0);
    for (const auto& tree : trees) {
        int node = 0;
        while (tree.nodes[node].feature >= 0)
            node = x[tree.nodes[node].feature] <= tree.nodes[node].threshold
                       ? tree.nodes[node].left
                       : tree.nodes[node].right;
        for (int c = 0; c < num_classes; ++c) probs[c] += tree.nodes[node].leaf_dist[c];
    }
    for (double& p : probs) p /= static_cast<double>(trees.size());
    return probs;
}

// ---- feature-only DNN --------------------------------------------------------

template <typename T>
net::FusionModel<T> train_feature_only_dnn(const net::TrainData<T>& train,
                                           const net::TrainData<T>& val, int clinical_dim,
                                           const net::TrainSpec& spec, uint64_t seed) {
    net::FusionConfig cfg;
    cfg.kind = net::ModelKind::feature_only;
    cfg.clinical_input_dim = clinical_dim;
    cfg.seed = seed;
    net::FusionModel<T> model(cfg);
    Rng rng(mix_seed(seed, 0xfeedULL));
    net::train_model(model, train, val, spec, /*stage=*/0, rng);
    return model;
}

template net::FusionModel<float> train_feature_only_dnn<float>(const net::TrainData<float>&,
                                                               const net::TrainData<float>&, int,
                                                               const net::TrainSpec&, uint64_t);
template net::FusionModel<double> train_feature_only_dnn<double>(const net::TrainData<double>&,
                                                                 const net::TrainData<double>&,
                                                                 int, const net::TrainSpec&,
                                                                 uint64_t);

}  // namespace fuselearn::baselines
