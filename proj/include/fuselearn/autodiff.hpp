#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "fuselearn/common.hpp"

// Minimal reverse-mode automatic differentiation: dense tensors, a tape of
// backward closures, and the layer primitives a small fusion network needs.
// Templated on the scalar so gradient checks run in double while training
// can run in float (selected at run time by the callers).

namespace fuselearn::ad {

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> values;
    std::vector<T> grad;  // same length as values once gradients have flowed
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<int> shp, bool rg = false) : shape(std::move(shp)), requires_grad(rg) {
        values.assign(static_cast<size_t>(size()), T(0));
    }

    static Tensor scalar(T v, bool rg = false) {
        Tensor t(std::vector<int>{1}, rg);
        t.values[0] = v;
        return t;
    }

    int64_t size() const {
        int64_t n = 1;
        for (int e : shape) n *= e;
        return n;
    }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
    void zero_grad() { grad.assign(values.size(), T(0)); }
};

template <typename T>
using TensorRef = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorRef<T> make_tensor(Tensor<T> t) {
    return std::make_shared<Tensor<T>>(std::move(t));
}

/// Test hook: gradient contributions of the named op kind are sign-flipped.
/// Used by the gradcheck mutation tests; empty string disables the fault.
void set_backward_fault(const std::string& op_kind);
const std::string& backward_fault();

template <typename T>
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    size_t node_count() const { return steps_.size(); }

    void record(std::function<void()> fn) { steps_.push_back(std::move(fn)); }

    /// Reverse sweep from a scalar output; accumulates into .grad of every
    /// tensor with requires_grad that participated in the graph.
    void backward(const TensorRef<T>& out) {
        if (out->size() != 1)
            throw std::invalid_argument("backward: output must be a scalar, got size " +
                                        std::to_string(out->size()));
        out->ensure_grad();
        out->grad[0] = T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

    void clear() { steps_.clear(); }

private:
    bool grad_enabled_;
    std::vector<std::function<void()>> steps_;
};

// Class-weighted softmax cross-entropy configuration.
struct LossConfig {
    std::vector<double> class_weights;  // one positive weight per class
    int num_classes = 3;

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("LossConfig: num_classes must be >= 2");
        if (static_cast<int>(class_weights.size()) != num_classes)
            throw std::invalid_argument("LossConfig: weights/classes size mismatch");
        for (double w : class_weights)
            if (!(w > 0.0)) throw std::invalid_argument("LossConfig: class weights must be > 0");
    }
};

// ---- layer primitives ------------------------------------------------------

/// 2-D cross-correlation. input: C*H*W, kernels: O*C*k*k, bias: O.
template <typename T>
TensorRef<T> conv2d(Tape<T>& tape, const TensorRef<T>& input, const TensorRef<T>& kernels,
                    const TensorRef<T>& bias, int stride, int padding);

/// y = W x + b. x: n, W: m*n, b: m.
template <typename T>
TensorRef<T> dense(Tape<T>& tape, const TensorRef<T>& x, const TensorRef<T>& W,
                   const TensorRef<T>& b);

template <typename T>
TensorRef<T> relu(Tape<T>& tape, const TensorRef<T>& x);

/// Non-overlapping max pooling with square window; H and W must divide evenly.
template <typename T>
TensorRef<T> max_pool2d(Tape<T>& tape, const TensorRef<T>& x, int window);

/// C*H*W -> C (spatial mean per channel).
template <typename T>
TensorRef<T> global_avg_pool(Tape<T>& tape, const TensorRef<T>& x);

/// Concatenate rank-1 tensors end to end, preserving argument order.
template <typename T>
TensorRef<T> concat(Tape<T>& tape, const std::vector<TensorRef<T>>& parts);

/// Stack C*H*W maps along the channel axis (all spatial dims equal).
template <typename T>
TensorRef<T> concat_channels(Tape<T>& tape, const std::vector<TensorRef<T>>& maps);

/// Elementwise sum of two same-shape tensors.
template <typename T>
TensorRef<T> add(Tape<T>& tape, const TensorRef<T>& a, const TensorRef<T>& b);

/// Inverted dropout: train mode scales kept units by 1/(1-rate); eval mode is
/// the identity. rate must be < 1.
template <typename T>
TensorRef<T> dropout(Tape<T>& tape, const TensorRef<T>& x, double rate, bool train, Rng& rng);

/// Scalar slice y = x[index] (used to target one class score).
template <typename T>
TensorRef<T> pick(Tape<T>& tape, const TensorRef<T>& x, int index);

/// Fused stable softmax + class-weighted cross-entropy:
/// loss = -alpha[label] * log(softmax(logits)[label]).
template <typename T>
TensorRef<T> weighted_softmax_ce(Tape<T>& tape, const TensorRef<T>& logits, int label,
                                 const LossConfig& cfg);

/// Numerically stable softmax of a plain vector (no tape).
std::vector<double> softmax(const std::vector<double>& logits);

// ---- parameters and optimizer ----------------------------------------------

template <typename T>
struct Param {
    std::string name;
    TensorRef<T> tensor;
    bool frozen = false;
    std::vector<T> momentum;  // present iff trainable
};

template <typename T>
class ParameterSet {
public:
    TensorRef<T> add(const std::string& name, Tensor<T> t);
    TensorRef<T> get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    /// Freeze/unfreeze every parameter whose name starts with `prefix`
    /// ("" matches all). Freezing drops the momentum buffer and turns off
    /// requires_grad so frozen subgraphs record no backward work.
    void set_frozen(const std::string& prefix, bool frozen);

    void zero_grads();

    std::vector<Param<T>>& items() { return params_; }
    const std::vector<Param<T>>& items() const { return params_; }

    /// FNV-1a over the raw bytes of every frozen parameter.
    uint64_t frozen_hash() const;
    /// FNV-1a over the raw bytes of every parameter.
    uint64_t value_hash() const;

    std::vector<std::vector<T>> snapshot_values() const;
    void restore_values(const std::vector<std::vector<T>>& snap);

    int64_t total_size() const;

private:
    std::vector<Param<T>> params_;
    std::unordered_map<std::string, size_t> index_;
};

/// v <- momentum*v + grad; p <- p - lr*v, for every unfrozen parameter.
/// Frozen parameters are untouched; an unfrozen parameter with no populated
/// gradient is an error.
template <typename T>
void sgd_momentum_step(ParameterSet<T>& params, double lr, double momentum);

/// He-uniform initialization: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename T>
Tensor<T> he_uniform(std::vector<int> shape, int fan_in, Rng& rng);

// ---- finite differences ------------------------------------------------

/// Central-difference gradient check of a scalar-valued graph with respect to
/// one parameter tensor. `build` must construct the same forward computation
/// from current parameter values on every call. Returns
/// max over coordinates of |analytic - numeric| / max(1e-12, |numeric|).
template <typename T>
double finite_diff_max_rel_err(const std::function<TensorRef<T>(Tape<T>&)>& build,
                               Tensor<T>& param, double eps);

/// Same check over several step sizes, per coordinate keeping the best-
/// conditioned one. A small step can drown a near-zero gradient in f64
/// roundoff while a large step can cross a ReLU/pool kink; a genuine backward
/// defect fails at every step size.
template <typename T>
double finite_diff_max_rel_err_multi(const std::function<TensorRef<T>(Tape<T>&)>& build,
                                     Tensor<T>& param, const std::vector<double>& steps);

}  // namespace fuselearn::ad
