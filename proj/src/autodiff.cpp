#include "fuselearn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace fuselearn::ad {

namespace {
std::string g_backward_fault;
}

void set_backward_fault(const std::string& op_kind) { g_backward_fault = op_kind; }
const std::string& backward_fault() { return g_backward_fault; }

namespace {

// Sign applied to an op's backward contributions; -1 only under the fault hook.
template <typename T>
T fault_sign(const char* op_kind) {
    return g_backward_fault == op_kind ? T(-1) : T(1);
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// C[m x n] += A[m x k] * B[k x n], all row-major. i-k-j order with 4-way
// k-blocking: the inner loop streams contiguous rows of B against one row of
// C, which the compiler vectorizes without reassociation licenses.
template <typename T>
void gemm_acc(const T* A, const T* B, T* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* a_row = A + static_cast<size_t>(i) * k;
        T* c_row = C + static_cast<size_t>(i) * n;
        int p = 0;
        for (; p + 4 <= k; p += 4) {
            const T a0 = a_row[p], a1 = a_row[p + 1], a2 = a_row[p + 2], a3 = a_row[p + 3];
            const T* b0 = B + static_cast<size_t>(p) * n;
            const T* b1 = b0 + n;
            const T* b2 = b1 + n;
            const T* b3 = b2 + n;
            for (int j = 0; j < n; ++j)
                c_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; p < k; ++p) {
            const T a = a_row[p];
            if (a == T(0)) continue;
            const T* b_row = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// dot(x, y) over n entries with 8 independent accumulator lanes (vectorizes
// as-is; no reduction reassociation needed until the final fold).
template <typename T>
T dot_lanes(const T* x, const T* y, int n) {
    T acc[8] = {};
    int j = 0;
    for (; j + 8 <= n; j += 8)
        for (int l = 0; l < 8; ++l) acc[l] += x[j + l] * y[j + l];
    T s = T(0);
    for (int l = 0; l < 8; ++l) s += acc[l];
    for (; j < n; ++j) s += x[j] * y[j];
    return s;
}

template <typename T>
bool want_grad(const Tape<T>& tape, std::initializer_list<const TensorRef<T>*> inputs) {
    if (!tape.grad_enabled()) return false;
    for (const TensorRef<T>* t : inputs)
        if (*t && (*t)->requires_grad) return true;
    return false;
}

}  // namespace

// ---- conv2d -----------------------------------------------------------------

template <typename T>
TensorRef<T> conv2d(Tape<T>& tape, const TensorRef<T>& input, const TensorRef<T>& kernels,
                    const TensorRef<T>& bias, int stride, int padding) {
    if (input->shape.size() != 3 || kernels->shape.size() != 4)
        throw std::invalid_argument("conv2d: expected input CHW and kernels OCkk, got input " +
                                    shape_str(input->shape) + " kernels " +
                                    shape_str(kernels->shape));
    const int C = input->dim(0), H = input->dim(1), W = input->dim(2);
    const int O = kernels->dim(0), KC = kernels->dim(1), kh = kernels->dim(2), kw = kernels->dim(3);
    if (KC != C)
        throw std::invalid_argument("conv2d: kernel channels " + std::to_string(KC) +
                                    " != input channels " + std::to_string(C));
    if (kh != kw) throw std::invalid_argument("conv2d: only square kernels supported");
    if (bias->size() != O)
        throw std::invalid_argument("conv2d: bias size " + std::to_string(bias->size()) +
                                    " != output channels " + std::to_string(O));
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
    const int OH = (H + 2 * padding - kh) / stride + 1;
    const int OW = (W + 2 * padding - kw) / stride + 1;
    if (H + 2 * padding < kh || W + 2 * padding < kw)
        throw std::invalid_argument("conv2d: input " + shape_str(input->shape) +
                                    " too small for kernel " + std::to_string(kh) + " at padding " +
                                    std::to_string(padding));

    const int K = C * kh * kw;   // im2col rows
    const int N = OH * OW;       // spatial positions

    auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(K) * N, T(0));
    {
        T* col = cols->data();
        const T* in = input->values.data();
        for (int c = 0; c < C; ++c) {
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    T* row = col + (static_cast<size_t>(c) * kh * kw + ki * kw + kj) * N;
                    for (int oh = 0; oh < OH; ++oh) {
                        const int ih = oh * stride - padding + ki;
                        if (ih < 0 || ih >= H) continue;
                        const T* in_row = in + (static_cast<size_t>(c) * H + ih) * W;
                        for (int ow = 0; ow < OW; ++ow) {
                            const int iw = ow * stride - padding + kj;
                            if (iw >= 0 && iw < W) row[oh * OW + ow] = in_row[iw];
                        }
                    }
                }
            }
        }
    }

    auto out = make_tensor(Tensor<T>({O, OH, OW}));
    {
        T* y = out->values.data();
        const T* b = bias->values.data();
        for (int o = 0; o < O; ++o) std::fill(y + static_cast<size_t>(o) * N, y + (o + 1) * static_cast<size_t>(N), b[o]);
        gemm_acc(kernels->values.data(), cols->data(), y, O, K, N);
    }

    if (!want_grad(tape, {&input, &kernels, &bias})) return out;
    out->requires_grad = true;
    const int Hc = H, Wc = W;
    tape.record([input, kernels, bias, out, cols, stride, padding, C, Hc, Wc, O, kh, OH, OW, K, N]() {
        const T sgn = fault_sign<T>("conv2d");
        const T* g = out->grad.data();
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int o = 0; o < O; ++o) {
                T s = T(0);
                const T* gr = g + static_cast<size_t>(o) * N;
                for (int j = 0; j < N; ++j) s += gr[j];
                bias->grad[o] += sgn * s;
            }
        }
        if (kernels->requires_grad) {
            kernels->ensure_grad();
            // dW[o][p] += sum_j g[o][j] * cols[p][j]
            const T* col = cols->data();
            for (int o = 0; o < O; ++o) {
                const T* gr = g + static_cast<size_t>(o) * N;
                T* dw = kernels->grad.data() + static_cast<size_t>(o) * K;
                for (int p = 0; p < K; ++p)
                    dw[p] += sgn * dot_lanes(gr, col + static_cast<size_t>(p) * N, N);
            }
        }
        if (input->requires_grad) {
            input->ensure_grad();
            // dcols = W^T g, then scatter back (col2im).
            std::vector<T> dcols(static_cast<size_t>(K) * N, T(0));
            const T* W = kernels->values.data();
            for (int p = 0; p < K; ++p) {
                T* dr = dcols.data() + static_cast<size_t>(p) * N;
                int o = 0;
                for (; o + 4 <= O; o += 4) {
                    const T w0 = W[static_cast<size_t>(o) * K + p];
                    const T w1 = W[static_cast<size_t>(o + 1) * K + p];
                    const T w2 = W[static_cast<size_t>(o + 2) * K + p];
                    const T w3 = W[static_cast<size_t>(o + 3) * K + p];
                    const T* g0 = g + static_cast<size_t>(o) * N;
                    const T* g1 = g0 + N;
                    const T* g2 = g1 + N;
                    const T* g3 = g2 + N;
                    for (int j = 0; j < N; ++j)
                        dr[j] += w0 * g0[j] + w1 * g1[j] + w2 * g2[j] + w3 * g3[j];
                }
                for (; o < O; ++o) {
                    const T w = W[static_cast<size_t>(o) * K + p];
                    if (w == T(0)) continue;
                    const T* gr = g + static_cast<size_t>(o) * N;
                    for (int j = 0; j < N; ++j) dr[j] += w * gr[j];
                }
            }
            T* din = input->grad.data();
            for (int c = 0; c < C; ++c) {
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kh; ++kj) {
                        const T* dr = dcols.data() + (static_cast<size_t>(c) * kh * kh + ki * kh + kj) * N;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * stride - padding + ki;
                            if (ih < 0 || ih >= Hc) continue;
                            T* din_row = din + (static_cast<size_t>(c) * Hc + ih) * Wc;
                            for (int ow = 0; ow < OW; ++ow) {
                                const int iw = ow * stride - padding + kj;
                                if (iw >= 0 && iw < Wc) din_row[iw] += sgn * dr[oh * OW + ow];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

// ---- dense -------------------------------------------------------------

template <typename T>
TensorRef<T> dense(Tape<T>& tape, const TensorRef<T>& x, const TensorRef<T>& W,
                   const TensorRef<T>& b) {
    if (W->shape.size() != 2)
        throw std::invalid_argument("dense: W must be rank-2, got " + shape_str(W->shape));
    const int m = W->dim(0), n = W->dim(1);
    if (x->size() != n || b->size() != m)
        throw std::invalid_argument("dense: got x " + shape_str(x->shape) + ", W " +
                                    shape_str(W->shape) + ", b " + shape_str(b->shape));

    auto out = make_tensor(Tensor<T>({m}));
    const T* xp = x->values.data();
    const T* wp = W->values.data();
    for (int i = 0; i < m; ++i) {
        const T* w_row = wp + static_cast<size_t>(i) * n;
        T s = b->values[i];
        for (int j = 0; j < n; ++j) s += w_row[j] * xp[j];
        out->values[i] = s;
    }

    if (!want_grad(tape, {&x, &W, &b})) return out;
    out->requires_grad = true;
    tape.record([x, W, b, out, m, n]() {
        const T sgn = fault_sign<T>("dense");
        const T* g = out->grad.data();
        if (b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < m; ++i) b->grad[i] += sgn * g[i];
        }
        if (W->requires_grad) {
            W->ensure_grad();
            for (int i = 0; i < m; ++i) {
                T gi = sgn * g[i];
                if (gi == T(0)) continue;
                T* dw = W->grad.data() + static_cast<size_t>(i) * n;
                const T* xp = x->values.data();
                for (int j = 0; j < n; ++j) dw[j] += gi * xp[j];
            }
        }
        if (x->requires_grad) {
            x->ensure_grad();
            for (int i = 0; i < m; ++i) {
                T gi = sgn * g[i];
                if (gi == T(0)) continue;
                const T* w_row = W->values.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) x->grad[j] += gi * w_row[j];
            }
        }
    });
    return out;
}

// ---- elementwise / pooling ----------------------------------------------

template <typename T>
TensorRef<T> relu(Tape<T>& tape, const TensorRef<T>& x) {
    auto out = make_tensor(Tensor<T>(x->shape));
    const size_t n = x->values.size();
    for (size_t i = 0; i < n; ++i) out->values[i] = x->values[i] > T(0) ? x->values[i] : T(0);

    if (!want_grad(tape, {&x})) return out;
    out->requires_grad = true;
    tape.record([x, out, n]() {
        const T sgn = fault_sign<T>("relu");
        x->ensure_grad();
        for (size_t i = 0; i < n; ++i)
            if (x->values[i] > T(0)) x->grad[i] += sgn * out->grad[i];
    });
    return out;
}

template <typename T>
TensorRef<T> max_pool2d(Tape<T>& tape, const TensorRef<T>& x, int window) {
    if (x->shape.size() != 3)
        throw std::invalid_argument("max_pool2d: expected CHW, got " + shape_str(x->shape));
    const int C = x->dim(0), H = x->dim(1), W = x->dim(2);
    if (window < 1 || H % window != 0 || W % window != 0)
        throw std::invalid_argument("max_pool2d: window " + std::to_string(window) +
                                    " does not divide " + shape_str(x->shape));
    const int OH = H / window, OW = W / window;
    auto out = make_tensor(Tensor<T>({C, OH, OW}));
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(C) * OH * OW);
    for (int c = 0; c < C; ++c) {
        const T* in = x->values.data() + static_cast<size_t>(c) * H * W;
        for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow) {
                int best = (oh * window) * W + ow * window;
                T bv = in[best];
                for (int i = 0; i < window; ++i) {
                    for (int j = 0; j < window; ++j) {
                        int idx = (oh * window + i) * W + ow * window + j;
                        if (in[idx] > bv) {
                            bv = in[idx];
                            best = idx;
                        }
                    }
                }
                size_t o = (static_cast<size_t>(c) * OH + oh) * OW + ow;
                out->values[o] = bv;
                (*argmax)[o] = c * H * W + best;
            }
        }
    }

    if (!want_grad(tape, {&x})) return out;
    out->requires_grad = true;
    tape.record([x, out, argmax]() {
        const T sgn = fault_sign<T>("max_pool2d");
        x->ensure_grad();
        for (size_t o = 0; o < argmax->size(); ++o) x->grad[(*argmax)[o]] += sgn * out->grad[o];
    });
    return out;
}

template <typename T>
TensorRef<T> global_avg_pool(Tape<T>& tape, const TensorRef<T>& x) {
    if (x->shape.size() != 3)
        throw std::invalid_argument("global_avg_pool: expected CHW, got " + shape_str(x->shape));
    const int C = x->dim(0);
    const int HW = x->dim(1) * x->dim(2);
    auto out = make_tensor(Tensor<T>({C}));
    for (int c = 0; c < C; ++c) {
        const T* in = x->values.data() + static_cast<size_t>(c) * HW;
        T s = T(0);
        for (int i = 0; i < HW; ++i) s += in[i];
        out->values[c] = s / static_cast<T>(HW);
    }

    if (!want_grad(tape, {&x})) return out;
    out->requires_grad = true;
    tape.record([x, out, C, HW]() {
        const T sgn = fault_sign<T>("global_avg_pool");
        x->ensure_grad();
        for (int c = 0; c < C; ++c) {
            T g = sgn * out->grad[c] / static_cast<T>(HW);
            T* dx = x->grad.data() + static_cast<size_t>(c) * HW;
            for (int i = 0; i < HW; ++i) dx[i] += g;
        }
    });
    return out;
}

template <typename T>
TensorRef<T> concat(Tape<T>& tape, const std::vector<TensorRef<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input list");
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != 1)
            throw std::invalid_argument("concat: inputs must be rank-1, got " + shape_str(p->shape));
        total += p->size();
    }
    auto out = make_tensor(Tensor<T>({static_cast<int>(total)}));
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->values.begin(), p->values.end(), out->values.begin() + off);
        off += p->values.size();
    }

    bool rg = false;
    for (const auto& p : parts) rg = rg || p->requires_grad;
    if (!tape.grad_enabled() || !rg) return out;
    out->requires_grad = true;
    tape.record([parts, out]() {
        const T sgn = fault_sign<T>("concat");
        size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < p->values.size(); ++i) p->grad[i] += sgn * out->grad[off + i];
            }
            off += p->values.size();
        }
    });
    return out;
}

template <typename T>
TensorRef<T> concat_channels(Tape<T>& tape, const std::vector<TensorRef<T>>& maps) {
    if (maps.empty()) throw std::invalid_argument("concat_channels: empty input list");
    const int H = maps[0]->dim(1), W = maps[0]->dim(2);
    int C = 0;
    for (const auto& m : maps) {
        if (m->shape.size() != 3 || m->dim(1) != H || m->dim(2) != W)
            throw std::invalid_argument("concat_channels: incompatible map " + shape_str(m->shape));
        C += m->dim(0);
    }
    auto out = make_tensor(Tensor<T>({C, H, W}));
    size_t off = 0;
    for (const auto& m : maps) {
        std::copy(m->values.begin(), m->values.end(), out->values.begin() + off);
        off += m->values.size();
    }

    bool rg = false;
    for (const auto& m : maps) rg = rg || m->requires_grad;
    if (!tape.grad_enabled() || !rg) return out;
    out->requires_grad = true;
    tape.record([maps, out]() {
        const T sgn = fault_sign<T>("concat_channels");
        size_t off = 0;
        for (const auto& m : maps) {
            if (m->requires_grad) {
                m->ensure_grad();
                for (size_t i = 0; i < m->values.size(); ++i) m->grad[i] += sgn * out->grad[off + i];
            }
            off += m->values.size();
        }
    });
    return out;
}

template <typename T>
TensorRef<T> add(Tape<T>& tape, const TensorRef<T>& a, const TensorRef<T>& b) {
    if (a->shape != b->shape)
        throw std::invalid_argument("add: shape mismatch " + shape_str(a->shape) + " vs " +
                                    shape_str(b->shape));
    auto out = make_tensor(Tensor<T>(a->shape));
    for (size_t i = 0; i < a->values.size(); ++i) out->values[i] = a->values[i] + b->values[i];

    if (!want_grad(tape, {&a, &b})) return out;
    out->requires_grad = true;
    tape.record([a, b, out]() {
        const T sgn = fault_sign<T>("add");
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < a->values.size(); ++i) a->grad[i] += sgn * out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->values.size(); ++i) b->grad[i] += sgn * out->grad[i];
        }
    });
    return out;
}

template <typename T>
TensorRef<T> dropout(Tape<T>& tape, const TensorRef<T>& x, double rate, bool train, Rng& rng) {
    if (rate >= 1.0 || rate < 0.0)
        throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!train || rate == 0.0) return x;

    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<uint8_t>>(x->values.size());
    auto out = make_tensor(Tensor<T>(x->shape));
    for (size_t i = 0; i < x->values.size(); ++i) {
        bool keep = !rng.bernoulli(rate);
        (*mask)[i] = keep;
        out->values[i] = keep ? x->values[i] * scale : T(0);
    }

    if (!want_grad(tape, {&x})) return out;
    out->requires_grad = true;
    tape.record([x, out, mask, scale]() {
        const T sgn = fault_sign<T>("dropout");
        x->ensure_grad();
        for (size_t i = 0; i < x->values.size(); ++i)
            if ((*mask)[i]) x->grad[i] += sgn * scale * out->grad[i];
    });
    return out;
}

template <typename T>
TensorRef<T> pick(Tape<T>& tape, const TensorRef<T>& x, int index) {
    if (index < 0 || index >= x->size())
        throw std::invalid_argument("pick: index " + std::to_string(index) + " out of range for " +
                                    shape_str(x->shape));
    auto out = make_tensor(Tensor<T>::scalar(x->values[index]));

    if (!want_grad(tape, {&x})) return out;
    out->requires_grad = true;
    tape.record([x, out, index]() {
        const T sgn = fault_sign<T>("pick");
        x->ensure_grad();
        x->grad[index] += sgn * out->grad[0];
    });
    return out;
}

template <typename T>
TensorRef<T> weighted_softmax_ce(Tape<T>& tape, const TensorRef<T>& logits, int label,
                                 const LossConfig& cfg) {
    cfg.validate();
    if (logits->shape.size() != 1 || logits->size() != cfg.num_classes)
        throw std::invalid_argument("weighted_softmax_ce: logits " + shape_str(logits->shape) +
                                    " vs num_classes " + std::to_string(cfg.num_classes));
    if (label < 0 || label >= cfg.num_classes)
        throw std::invalid_argument("weighted_softmax_ce: label " + std::to_string(label) +
                                    " out of range");
    const int K = cfg.num_classes;
    T m = logits->values[0];
    for (int i = 1; i < K; ++i) m = std::max(m, logits->values[i]);
    auto probs = std::make_shared<std::vector<T>>(K);
    T z = T(0);
    for (int i = 0; i < K; ++i) {
        (*probs)[i] = std::exp(logits->values[i] - m);
        z += (*probs)[i];
    }
    for (int i = 0; i < K; ++i) (*probs)[i] /= z;
    const T alpha = static_cast<T>(cfg.class_weights[label]);
    // log(p_label) computed from the shifted logit for stability
    T log_p = (logits->values[label] - m) - std::log(z);
    auto out = make_tensor(Tensor<T>::scalar(-alpha * log_p));

    if (!want_grad(tape, {&logits})) return out;
    out->requires_grad = true;
    tape.record([logits, out, probs, alpha, label, K]() {
        const T sgn = fault_sign<T>("weighted_softmax_ce");
        logits->ensure_grad();
        const T g = sgn * out->grad[0] * alpha;
        for (int i = 0; i < K; ++i)
            logits->grad[i] += g * ((*probs)[i] - (i == label ? T(1) : T(0)));
    });
    return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

// ---- parameters ----------------------------------------------------------

template <typename T>
TensorRef<T> ParameterSet<T>::add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Param<T> p;
    p.name = name;
    p.tensor = make_tensor(std::move(t));
    p.tensor->requires_grad = true;
    p.frozen = false;
    p.momentum.assign(p.tensor->values.size(), T(0));
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back().tensor;
}

template <typename T>
TensorRef<T> ParameterSet<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return params_[it->second].tensor;
}

template <typename T>
void ParameterSet<T>::set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : params_) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        if (p.frozen == frozen) continue;
        p.frozen = frozen;
        p.tensor->requires_grad = !frozen;
        if (frozen)
            p.momentum.clear();
        else
            p.momentum.assign(p.tensor->values.size(), T(0));
    }
}

template <typename T>
void ParameterSet<T>::zero_grads() {
    for (auto& p : params_) p.tensor->grad.clear();
}

namespace {
template <typename T>
void fnv_bytes(uint64_t& h, const std::vector<T>& v) {
    const unsigned char* b = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < v.size() * sizeof(T); ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
}
}  // namespace

template <typename T>
uint64_t ParameterSet<T>::frozen_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_)
        if (p.frozen) fnv_bytes(h, p.tensor->values);
    return h;
}

template <typename T>
uint64_t ParameterSet<T>::value_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) fnv_bytes(h, p.tensor->values);
    return h;
}

template <typename T>
std::vector<std::vector<T>> ParameterSet<T>::snapshot_values() const {
    std::vector<std::vector<T>> snap;
    snap.reserve(params_.size());
    for (const auto& p : params_) snap.push_back(p.tensor->values);
    return snap;
}

template <typename T>
void ParameterSet<T>::restore_values(const std::vector<std::vector<T>>& snap) {
    if (snap.size() != params_.size())
        throw std::invalid_argument("restore_values: snapshot size mismatch");
    for (size_t i = 0; i < params_.size(); ++i) params_[i].tensor->values = snap[i];
}

template <typename T>
int64_t ParameterSet<T>::total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.tensor->size();
    return n;
}

template <typename T>
void sgd_momentum_step(ParameterSet<T>& params, double lr, double momentum) {
    for (auto& p : params.items()) {
        if (p.frozen) continue;
        if (p.tensor->grad.size() != p.tensor->values.size())
            throw std::runtime_error("sgd_momentum_step: missing gradient on unfrozen parameter '" +
                                     p.name + "'");
        const T m = static_cast<T>(momentum);
        const T step = static_cast<T>(lr);
        for (size_t i = 0; i < p.tensor->values.size(); ++i) {
            p.momentum[i] = m * p.momentum[i] + p.tensor->grad[i];
            p.tensor->values[i] -= step * p.momentum[i];
        }
    }
}

template <typename T>
Tensor<T> he_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    if (fan_in < 1) throw std::invalid_argument("he_uniform: fan_in must be >= 1");
    Tensor<T> t(std::move(shape));
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : t.values) v = static_cast<T>(rng.uniform(-limit, limit));
    return t;
}

// ---- finite differences ------------------------------------------------

namespace {

template <typename T>
std::vector<T> analytic_gradient(const std::function<TensorRef<T>(Tape<T>&)>& build,
                                 Tensor<T>& param) {
    param.zero_grad();
    Tape<T> tape;
    auto out = build(tape);
    if (out->size() != 1)
        throw std::invalid_argument("finite_diff: graph output must be scalar");
    tape.backward(out);
    std::vector<T> analytic = param.grad;
    if (analytic.empty()) analytic.assign(param.values.size(), T(0));
    return analytic;
}

template <typename T>
double numeric_rel_err(const std::function<TensorRef<T>(Tape<T>&)>& build, Tensor<T>& param,
                       size_t i, double analytic, double eps) {
    auto eval = [&]() -> double {
        Tape<T> tape(false);
        auto out = build(tape);
        return static_cast<double>(out->values[0]);
    };
    const T saved = param.values[i];
    param.values[i] = saved + static_cast<T>(eps);
    const double fp = eval();
    param.values[i] = saved - static_cast<T>(eps);
    const double fm = eval();
    param.values[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    return std::abs(analytic - numeric) / std::max(1e-12, std::abs(numeric));
}

}  // namespace

template <typename T>
double finite_diff_max_rel_err(const std::function<TensorRef<T>(Tape<T>&)>& build,
                               Tensor<T>& param, double eps) {
    if (eps < 1e-7 || eps > 1e-3)
        throw std::invalid_argument("finite_diff: eps must be in [1e-7, 1e-3]");
    const auto analytic = analytic_gradient(build, param);
    double max_rel = 0.0;
    for (size_t i = 0; i < param.values.size(); ++i)
        max_rel = std::max(max_rel, numeric_rel_err(build, param, i,
                                                    static_cast<double>(analytic[i]), eps));
    return max_rel;
}

template <typename T>
double finite_diff_max_rel_err_multi(const std::function<TensorRef<T>(Tape<T>&)>& build,
                                     Tensor<T>& param, const std::vector<double>& steps) {
    if (steps.empty()) throw std::invalid_argument("finite_diff: need at least one step");
    for (double eps : steps)
        if (eps < 1e-7 || eps > 1e-3)
            throw std::invalid_argument("finite_diff: eps must be in [1e-7, 1e-3]");
    const auto analytic = analytic_gradient(build, param);
    double max_rel = 0.0;
    for (size_t i = 0; i < param.values.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (double eps : steps) {
            best = std::min(best, numeric_rel_err(build, param, i,
                                                  static_cast<double>(analytic[i]), eps));
            if (best < 1e-6) break;  // already clearly agreeing
        }
        max_rel = std::max(max_rel, best);
    }
    return max_rel;
}

// ---- explicit instantiations ---------------------------------------------

#define FUSELEARN_INSTANTIATE_AD(T)                                                               \
    template struct Tensor<T>;                                                                    \
    template class Tape<T>;                                                                       \
    template class ParameterSet<T>;                                                               \
    template TensorRef<T> conv2d<T>(Tape<T>&, const TensorRef<T>&, const TensorRef<T>&,           \
                                    const TensorRef<T>&, int, int);                               \
    template TensorRef<T> dense<T>(Tape<T>&, const TensorRef<T>&, const TensorRef<T>&,            \
                                   const TensorRef<T>&);                                          \
    template TensorRef<T> relu<T>(Tape<T>&, const TensorRef<T>&);                                 \
    template TensorRef<T> max_pool2d<T>(Tape<T>&, const TensorRef<T>&, int);                      \
    template TensorRef<T> global_avg_pool<T>(Tape<T>&, const TensorRef<T>&);                      \
    template TensorRef<T> concat<T>(Tape<T>&, const std::vector<TensorRef<T>>&);                  \
    template TensorRef<T> concat_channels<T>(Tape<T>&, const std::vector<TensorRef<T>>&);         \
    template TensorRef<T> add<T>(Tape<T>&, const TensorRef<T>&, const TensorRef<T>&);             \
    template TensorRef<T> dropout<T>(Tape<T>&, const TensorRef<T>&, double, bool, Rng&);          \
    template TensorRef<T> pick<T>(Tape<T>&, const TensorRef<T>&, int);                            \
    template TensorRef<T> weighted_softmax_ce<T>(Tape<T>&, const TensorRef<T>&, int,              \
                                                 const LossConfig&);                              \
    template void sgd_momentum_step<T>(ParameterSet<T>&, double, double);                         \
    template Tensor<T> he_uniform<T>(std::vector<int>, int, Rng&);                                \
    template double finite_diff_max_rel_err<T>(const std::function<TensorRef<T>(Tape<T>&)>&,      \
                                               Tensor<T>&, double);                               \
    template double finite_diff_max_rel_err_multi<T>(                                             \
        const std::function<TensorRef<T>(Tape<T>&)>&, Tensor<T>&, const std::vector<double>&);

FUSELEARN_INSTANTIATE_AD(float)
FUSELEARN_INSTANTIATE_AD(double)

#undef FUSELEARN_INSTANTIATE_AD

}  // namespace fuselearn::ad
