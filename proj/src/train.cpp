#include "fuselearn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fuselearn::net {

void TrainSpec::validate(int num_classes) const {
    if (!(lr > 0) || !(momentum >= 0) || batch_size < 1 || patience < 1 || max_epochs < 1)
        throw ConfigError("train spec: lr/momentum/batch/patience/max_epochs must be positive");
    if (static_cast<int>(class_weights.size()) != num_classes)
        throw ConfigError("train spec: class_weights size must equal num_classes");
    for (double w : class_weights)
        if (!(w > 0)) throw ConfigError("train spec: class weights must be > 0");
}

namespace {

template <typename T>
double weighted_ce(const std::vector<double>& probs, int label,
                   const std::vector<double>& alpha) {
    return -alpha[label] * std::log(std::max(probs[label], 1e-300));
}

}  // namespace

template <typename T>
double evaluate_loss(FusionModel<T>& model, const TrainData<T>& data,
                     const std::vector<double>& alpha) {
    double total = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        const T* image = data.images[i].empty() ? nullptr : data.images[i].data();
        auto probs = model.predict(image, data.clinicals[i]);
        total += weighted_ce<T>(probs, data.labels[i], alpha);
    }
    return total / static_cast<double>(data.size());
}

template <typename T>
TrainResult train_model(FusionModel<T>& model, const TrainData<T>& train, const TrainData<T>& val,
                        const TrainSpec& spec, int stage, Rng& rng) {
    const FusionConfig& cfg = model.config();
    spec.validate(cfg.num_classes);
    if (train.size() == 0 || val.size() == 0)
        throw DataError("train_model: empty train or validation set");
    if (stage < 0 || stage > 2) throw ConfigError("train_model: stage must be 0, 1 or 2");
    if (stage != 0 && cfg.kind != ModelKind::fusion)
        throw ConfigError("train_model: staged training applies to the fusion model");

    ad::LossConfig loss_cfg{spec.class_weights, cfg.num_classes};
    loss_cfg.validate();

    const bool cache_features = stage == 1 && cfg.kind == ModelKind::fusion;
    model.freeze_backbone(stage == 1 && cfg.kind == ModelKind::fusion);

    // Frozen backbone => its outputs are constant across epochs; compute once.
    std::vector<std::vector<T>> train_feats, val_feats;
    if (cache_features) {
        train_feats.reserve(train.size());
        for (const auto& im : train.images) train_feats.push_back(model.compute_backbone_features(im.data()));
        val_feats.reserve(val.size());
        for (const auto& im : val.images) val_feats.push_back(model.compute_backbone_features(im.data()));
    }

    auto val_loss_now = [&]() -> double {
        if (!cache_features) return evaluate_loss(model, val, spec.class_weights);
        double total = 0;
        for (size_t i = 0; i < val.size(); ++i) {
            ad::Tape<T> tape(false);
            auto out = model.logits_from_features(tape, val_feats[i], val.clinicals[i], false, nullptr);
            std::vector<double> lg(out->values.begin(), out->values.end());
            total += weighted_ce<T>(ad::softmax(lg), val.labels[i], spec.class_weights);
        }
        return total / static_cast<double>(val.size());
    };

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_best = 0;
    std::vector<std::vector<T>> best_snapshot = model.params().snapshot_values();

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
        rng.shuffle(order);
        double train_loss_sum = 0;
        size_t pos = 0;
        while (pos < order.size()) {
            const size_t end = std::min(pos + static_cast<size_t>(spec.batch_size), order.size());
            model.params().zero_grads();
            for (size_t b = pos; b < end; ++b) {
                const size_t i = order[b];
                ad::Tape<T> tape;
                ad::TensorRef<T> out;
                if (cache_features) {
                    out = model.logits_from_features(tape, train_feats[i], train.clinicals[i], true,
                                                     &rng);
                } else {
                    const T* image = train.images[i].empty() ? nullptr : train.images[i].data();
                    out = model.logits(tape, image, train.clinicals[i], true, &rng);
                }
                auto loss = ad::weighted_softmax_ce(tape, out, train.labels[i], loss_cfg);
                tape.backward(loss);  // gradients sum over the batch
                train_loss_sum += static_cast<double>(loss->values[0]);
            }
            ad::sgd_momentum_step(model.params(), spec.lr, spec.momentum);
            pos = end;
        }

        EpochStat stat;
        stat.epoch = epoch;
        stat.stage = stage;
        stat.train_loss = train_loss_sum / static_cast<double>(train.size());
        stat.val_loss = val_loss_now();
        result.history.push_back(stat);

        if (stat.val_loss < best_val) {
            best_val = stat.val_loss;
            best_epoch = epoch;
            since_best = 0;
            best_snapshot = model.params().snapshot_values();
        } else {
            ++since_best;
            if (since_best >= spec.patience) break;
        }
    }

    model.params().restore_values(best_snapshot);
    result.best_val_loss = best_val;
    result.best_epoch = best_epoch;
    return result;
}

template TrainResult train_model<float>(FusionModel<float>&, const TrainData<float>&,
                                        const TrainData<float>&, const TrainSpec&, int, Rng&);
template TrainResult train_model<double>(FusionModel<double>&, const TrainData<double>&,
                                         const TrainData<double>&, const TrainSpec&, int, Rng&);
template double evaluate_loss<float>(FusionModel<float>&, const TrainData<float>&,
                                     const std::vector<double>&);
template double evaluate_loss<double>(FusionModel<double>&, const TrainData<double>&,
                                      const std::vector<double>&);

}  // namespace fuselearn::net
