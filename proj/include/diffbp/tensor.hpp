#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "diffbp/errors.hpp"
#include "diffbp/rng.hpp"

namespace diffbp {

// Training runs in 32-bit; TensorT<double> exists solely as the shadow mode
// for gradient checking, where central differences need the extra precision.

enum class OpKind : std::uint8_t {
    leaf,
    add,
    sub,
    mul,
    scalar_mul,
    scalar_add,
    add_rowvec,
    mul_rowvec,
    matmul,
    transpose,
    layer_norm,
    softmax,
    gelu,
    relu,
    sum,
    mean,
    reshape,
    slice_rows,
    slice_cols,
    concat_rows,
    concat_cols,
    mean_rows,
    gather,
    custom,
};

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

// RAII guard: ops executed inside do not join any tape.
struct GradPause {
    GradPause() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
    ~GradPause() { grad_mode_flag() = prev_; }
    GradPause(const GradPause&) = delete;
    GradPause& operator=(const GradPause&) = delete;

private:
    bool prev_;
};

template <typename S>
struct NodeT {
    std::vector<std::size_t> shape;
    std::vector<S> data;
    bool requires_grad = false;
    std::vector<S> grad;  // empty until first accumulation

    // Tape record. The closure captures whatever intermediates its backward
    // needs; `parents` drives the reverse topological traversal.
    OpKind op = OpKind::leaf;
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void(NodeT&)> backward_fn;

    std::size_t numel() const { return data.size(); }

    S* ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
        return grad.data();
    }
};

inline std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

template <typename S>
class TensorT {
public:
    using Node = NodeT<S>;

    TensorT() : node_(std::make_shared<Node>()) {}

    explicit TensorT(std::vector<std::size_t> shape) : node_(std::make_shared<Node>()) {
        check_shape(shape);
        node_->shape = std::move(shape);
        node_->data.assign(shape_numel(node_->shape), S(0));
    }

    TensorT(std::vector<std::size_t> shape, std::vector<S> data) : node_(std::make_shared<Node>()) {
        check_shape(shape);
        if (shape_numel(shape) != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_to_string(shape));
        node_->shape = std::move(shape);
        node_->data = std::move(data);
    }

    static TensorT zeros(std::vector<std::size_t> shape) { return TensorT(std::move(shape)); }

    static TensorT full(std::vector<std::size_t> shape, S value) {
        TensorT t(std::move(shape));
        std::fill(t.node_->data.begin(), t.node_->data.end(), value);
        return t;
    }

    static TensorT scalar(S value) { return TensorT({1}, {value}); }

    static TensorT gaussian(std::vector<std::size_t> shape, DiffusionRng& rng, double stddev = 1.0) {
        TensorT t(std::move(shape));
        for (S& x : t.node_->data) x = static_cast<S>(rng.gaussian() * stddev);
        return t;
    }

    // Deep copy of shape and data; never carries tape state.
    TensorT clone() const { return TensorT(node_->shape, node_->data); }

    bool defined() const { return !node_->shape.empty(); }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    S* data() { return node_->data.data(); }
    const S* data() const { return node_->data.data(); }
    std::vector<S>& storage() { return node_->data; }
    const std::vector<S>& storage() const { return node_->data; }

    S item() const {
        if (numel() != 1) throw ContractError("item() requires a scalar tensor, got shape " + shape_to_string(shape()));
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    TensorT& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<S>& grad() const { return node_->grad; }
    void clear_grad() { node_->grad.clear(); }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }

    // Reverse-mode sweep from a scalar root. Visits every reachable tape node
    // exactly once in reverse topological order; leaf grads accumulate
    // additively across uses and across repeated backward() calls.
    void backward() const {
        if (numel() != 1)
            throw ContractError("backward() requires a scalar loss, got shape " + shape_to_string(shape()));
        std::vector<Node*> order;
        std::unordered_set<Node*> visited;
        topo_visit(node_.get(), visited, order);
        node_->ensure_grad()[0] += S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }
    }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    static void check_shape(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
        for (std::size_t d : shape)
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }

    static void topo_visit(Node* root, std::unordered_set<Node*>& visited, std::vector<Node*>& order) {
        // Iterative post-order DFS over parents.
        std::vector<std::pair<Node*, std::size_t>> stack;
        if (!visited.insert(root).second) return;
        stack.emplace_back(root, 0);
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node* p = n->parents[idx++].get();
                if (visited.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

// Builds an op result and wires it into the tape when gradients are enabled
// and any input carries them. Public so tests can inject faulty backwards.
template <typename S>
TensorT<S> make_taped(OpKind op, std::vector<std::size_t> shape, std::vector<S> data,
                      std::vector<TensorT<S>> inputs, std::function<void(NodeT<S>&)> backward) {
    TensorT<S> out(std::move(shape), std::move(data));
    bool taped = false;
    if (grad_enabled()) {
        for (const auto& in : inputs)
            if (in.requires_grad()) taped = true;
    }
    if (taped) {
        auto& n = *out.node();
        n.requires_grad = true;
        n.op = op;
        n.parents.reserve(inputs.size());
        for (const auto& in : inputs) n.parents.push_back(in.node());
        n.backward_fn = std::move(backward);
    }
    return out;
}

namespace detail {

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* opname) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(opname) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

template <typename S>
void require_2d(const TensorT<S>& a, const char* opname) {
    if (a.rank() != 2)
        throw ShapeError(std::string(opname) + ": expected a 2-d tensor, got " + shape_to_string(a.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_taped<S>(OpKind::add, a.shape(), std::move(out), {a, b}, [pa, pb](NodeT<S>& self) {
        if (pa->requires_grad) {
            S* g = pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            S* g = pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_taped<S>(OpKind::sub, a.shape(), std::move(out), {a, b}, [pa, pb](NodeT<S>& self) {
        if (pa->requires_grad) {
            S* g = pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            S* g = pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_taped<S>(OpKind::mul, a.shape(), std::move(out), {a, b}, [pa, pb](NodeT<S>& self) {
        if (pa->requires_grad) {
            S* g = pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            S* g = pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa->data[i];
        }
    });
}

template <typename S>
TensorT<S> scalar_mul(const TensorT<S>& a, S c) {
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto pa = a.node();
    return make_taped<S>(OpKind::scalar_mul, a.shape(), std::move(out), {a}, [pa, c](NodeT<S>& self) {
        if (!pa->requires_grad) return;
        S* g = pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * c;
    });
}

template <typename S>
TensorT<S> scalar_add(const TensorT<S>& a, S c) {
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    auto pa = a.node();
    return make_taped<S>(OpKind::scalar_add, a.shape(), std::move(out), {a}, [pa](NodeT<S>& self) {
        if (!pa->requires_grad) return;
        S* g = pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

// v broadcasts over the last axis: out[r, j] = a[r, j] + v[j].
template <typename S>
TensorT<S> add_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
    const std::size_t d = a.shape().back();
    if (v.numel() != d)
        throw ShapeError("add_rowvec: vector length " + std::to_string(v.numel()) + " does not match last axis of " +
                         shape_to_string(a.shape()));
    const std::size_t rows = a.numel() / d;
    std::vector<S> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = a.data()[r * d + j] + v.data()[j];
    auto pa = a.node(), pv = v.node();
    return make_taped<S>(OpKind::add_rowvec, a.shape(), std::move(out), {a, v}, [pa, pv, rows, d](NodeT<S>& self) {
        if (pa->requires_grad) {
            S* g = pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (pv->requires_grad) {
            S* g = pv->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
        }
    });
}

template <typename S>
TensorT<S> mul_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
    const std::size_t d = a.shape().back();
    if (v.numel() != d)
        throw ShapeError("mul_rowvec: vector length " + std::to_string(v.numel()) + " does not match last axis of " +
                         shape_to_string(a.shape()));
    const std::size_t rows = a.numel() / d;
    std::vector<S> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = a.data()[r * d + j] * v.data()[j];
    auto pa = a.node(), pv = v.node();
    return make_taped<S>(OpKind::mul_rowvec, a.shape(), std::move(out), {a, v}, [pa, pv, rows, d](NodeT<S>& self) {
        if (pa->requires_grad) {
            S* g = pa->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[r * d + j] * pv->data[j];
        }
        if (pv->requires_grad) {
            S* g = pv->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j] * pa->data[r * d + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree for " + shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()));
    std::vector<S> out(m * n, S(0));
    const S* ad = a.data();
    const S* bd = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const S aik = ad[i * k + kk];
            const S* brow = bd + kk * n;
            S* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    auto pa = a.node(), pb = b.node();
    return make_taped<S>(OpKind::matmul, {m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](NodeT<S>& self) {
        // dA = G * B^T, dB = A^T * G
        if (pa->requires_grad) {
            S* g = pa->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const S gij = self.grad[i * n + j];
                    for (std::size_t kk = 0; kk < k; ++kk) g[i * k + kk] += gij * pb->data[kk * n + j];
                }
        }
        if (pb->requires_grad) {
            S* g = pb->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const S aik = pa->data[i * k + kk];
                    for (std::size_t j = 0; j < n; ++j) g[kk * n + j] += aik * self.grad[i * n + j];
                }
        }
    });
}

template <typename S>
TensorT<S> transpose(const TensorT<S>& a) {
    detail::require_2d(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<S> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    auto pa = a.node();
    return make_taped<S>(OpKind::transpose, {n, m}, std::move(out), {a}, [pa, m, n](NodeT<S>& self) {
        if (!pa->requires_grad) return;
        S* g = pa->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    });
}

// ---------------------------------------------------------------------------
// Normalization and nonlinearities
// ---------------------------------------------------------------------------

// Per-row normalization over the last axis; population variance with eps
// inside the square root. Carries no learnable affine.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, double eps = 1e-5) {
    const std::size_t d = x.shape().back();
    if (d < 1) throw ShapeError("layer_norm: empty last axis");
    const std::size_t rows = x.numel() / d;
    std::vector<S> out(x.numel());
    std::vector<S> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* row = x.data() + r * d;
        double mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = static_cast<S>(inv);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = static_cast<S>((row[j] - mean) * inv);
    }
    auto px = x.node();
    return make_taped<S>(OpKind::layer_norm, x.shape(), std::move(out), {x},
                         [px, inv_std, rows, d](NodeT<S>& self) {
                             if (!px->requires_grad) return;
                             S* g = px->ensure_grad();
                             for (std::size_t r = 0; r < rows; ++r) {
                                 const S* go = self.grad.data() + r * d;
                                 const S* y = self.data.data() + r * d;
                                 double mean_g = 0, mean_gy = 0;
                                 for (std::size_t j = 0; j < d; ++j) {
                                     mean_g += go[j];
                                     mean_gy += go[j] * y[j];
                                 }
                                 mean_g /= static_cast<double>(d);
                                 mean_gy /= static_cast<double>(d);
                                 for (std::size_t j = 0; j < d; ++j)
                                     g[r * d + j] += static_cast<S>(inv_std[r] * (go[j] - mean_g - y[j] * mean_gy));
                             }
                         });
}

// Rows sum to one; max-subtracted for stability.
template <typename S>
TensorT<S> softmax(const TensorT<S>& x) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<S> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const S* row = x.data() + r * d;
        S mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double denom = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double e = std::exp(static_cast<double>(row[j] - mx));
            out[r * d + j] = static_cast<S>(e);
            denom += e;
        }
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = static_cast<S>(out[r * d + j] / denom);
    }
    auto px = x.node();
    return make_taped<S>(OpKind::softmax, x.shape(), std::move(out), {x}, [px, rows, d](NodeT<S>& self) {
        if (!px->requires_grad) return;
        S* g = px->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const S* go = self.grad.data() + r * d;
            const S* y = self.data.data() + r * d;
            double dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += go[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) g[r * d + j] += static_cast<S>(y[j] * (go[j] - dot));
        }
    });
}

namespace detail {

template <typename T>
T gelu_scalar(T x) {
    const T c = T(0.7978845608028654);  // sqrt(2/pi)
    const T u = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad_scalar(T x) {
    const T c = T(0.7978845608028654);
    const T u = c * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(u);
    const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

}  // namespace detail

// tanh-approximated GELU.
template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
    std::vector<S> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::gelu_scalar(x.data()[i]);
    auto px = x.node();
    return make_taped<S>(OpKind::gelu, x.shape(), std::move(out), {x}, [px](NodeT<S>& self) {
        if (!px->requires_grad) return;
        S* g = px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            g[i] += self.grad[i] * detail::gelu_grad_scalar(px->data[i]);
    });
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
    std::vector<S> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
    auto px = x.node();
    return make_taped<S>(OpKind::relu, x.shape(), std::move(out), {x}, [px](NodeT<S>& self) {
        if (!px->requires_grad) return;
        S* g = px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (px->data[i] > S(0)) g[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions and reshapes
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> sum_all(const TensorT<S>& x) {
    double acc = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
    auto px = x.node();
    return make_taped<S>(OpKind::sum, {1}, {static_cast<S>(acc)}, {x}, [px](NodeT<S>& self) {
        if (!px->requires_grad) return;
        S* g = px->ensure_grad();
        for (std::size_t i = 0; i < px->data.size(); ++i) g[i] += self.grad[0];
    });
}

template <typename S>
TensorT<S> mean_all(const TensorT<S>& x) {
    double acc = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
    const std::size_t n = x.numel();
    auto px = x.node();
    return make_taped<S>(OpKind::mean, {1}, {static_cast<S>(acc / static_cast<double>(n))}, {x},
                         [px, n](NodeT<S>& self) {
                             if (!px->requires_grad) return;
                             S* g = px->ensure_grad();
                             const S go = self.grad[0] / static_cast<S>(n);
                             for (std::size_t i = 0; i < px->data.size(); ++i) g[i] += go;
                         });
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, std::vector<std::size_t> new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(new_shape));
    auto px = x.node();
    return make_taped<S>(OpKind::reshape, std::move(new_shape), x.storage(), {x}, [px](NodeT<S>& self) {
        if (!px->requires_grad) return;
        S* g = px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

template <typename S>
TensorT<S> slice_rows(const TensorT<S>& x, std::size_t r0, std::size_t r1) {
    detail::require_2d(x, "slice_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (r0 >= r1 || r1 > rows)
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") invalid for " + shape_to_string(x.shape()));
    std::vector<S> out((r1 - r0) * cols);
    std::copy(x.data() + r0 * cols, x.data() + r1 * cols, out.begin());
    auto px = x.node();
    return make_taped<S>(OpKind::slice_rows, {r1 - r0, cols}, std::move(out), {x},
                         [px, r0, cols](NodeT<S>& self) {
                             if (!px->requires_grad) return;
                             S* g = px->ensure_grad();
                             for (std::size_t i = 0; i < self.grad.size(); ++i) g[r0 * cols + i] += self.grad[i];
                         });
}

template <typename S>
TensorT<S> slice_cols(const TensorT<S>& x, std::size_t c0, std::size_t c1) {
    detail::require_2d(x, "slice_cols");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (c0 >= c1 || c1 > cols)
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for " + shape_to_string(x.shape()));
    const std::size_t w = c1 - c0;
    std::vector<S> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(x.data() + r * cols + c0, x.data() + r * cols + c1, out.begin() + r * w);
    auto px = x.node();
    return make_taped<S>(OpKind::slice_cols, {rows, w}, std::move(out), {x},
                         [px, rows, cols, c0, w](NodeT<S>& self) {
                             if (!px->requires_grad) return;
                             S* g = px->ensure_grad();
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t j = 0; j < w; ++j) g[r * cols + c0 + j] += self.grad[r * w + j];
                         });
}

template <typename S>
TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t cols = parts[0].dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_rows");
        if (p.dim(1) != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.dim(0);
    }
    std::vector<S> out(rows * cols);
    std::size_t offset = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        std::copy(p.data(), p.data() + p.numel(), out.begin() + offset);
        offset += p.numel();
    }
    std::vector<std::shared_ptr<NodeT<S>>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return make_taped<S>(OpKind::concat_rows, {rows, cols}, std::move(out), parts,
                         [pnodes, offsets](NodeT<S>& self) {
                             for (std::size_t k = 0; k < pnodes.size(); ++k) {
                                 auto& p = pnodes[k];
                                 if (!p->requires_grad) continue;
                                 S* g = p->ensure_grad();
                                 for (std::size_t i = 0; i < p->data.size(); ++i) g[i] += self.grad[offsets[k] + i];
                             }
                         });
}

template <typename S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = parts[0].dim(0);
    std::size_t cols = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_cols");
        if (p.dim(0) != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p.dim(1);
    }
    std::vector<S> out(rows * cols);
    std::vector<std::size_t> col_offsets;
    std::size_t c = 0;
    for (const auto& p : parts) {
        col_offsets.push_back(c);
        const std::size_t w = p.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(p.data() + r * w, p.data() + (r + 1) * w, out.begin() + r * cols + c);
        c += w;
    }
    std::vector<std::shared_ptr<NodeT<S>>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return make_taped<S>(OpKind::concat_cols, {rows, cols}, std::move(out), parts,
                         [pnodes, col_offsets, rows, cols](NodeT<S>& self) {
                             for (std::size_t k = 0; k < pnodes.size(); ++k) {
                                 auto& p = pnodes[k];
                                 if (!p->requires_grad) continue;
                                 const std::size_t w = p->shape[1];
                                 S* g = p->ensure_grad();
                                 for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t j = 0; j < w; ++j)
                                         g[r * w + j] += self.grad[r * cols + col_offsets[k] + j];
                             }
                         });
}

// Column means of a 2-d tensor -> [1 x D].
template <typename S>
TensorT<S> mean_rows(const TensorT<S>& x) {
    detail::require_2d(x, "mean_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<S> out(cols, S(0));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) out[j] += x.data()[r * cols + j];
    for (std::size_t j = 0; j < cols; ++j) out[j] /= static_cast<S>(rows);
    auto px = x.node();
    return make_taped<S>(OpKind::mean_rows, {1, cols}, std::move(out), {x}, [px, rows, cols](NodeT<S>& self) {
        if (!px->requires_grad) return;
        S* g = px->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += self.grad[j] / static_cast<S>(rows);
    });
}

// Fixed index permutation: out[i] = x[src_index[i]]. src_index must be a
// bijection when used for patchify/unpatchify; backward scatter-adds.
template <typename S>
TensorT<S> gather(const TensorT<S>& x, const std::vector<std::size_t>& src_index,
                  std::vector<std::size_t> out_shape) {
    if (shape_numel(out_shape) != src_index.size())
        throw ShapeError("gather: index count does not match output shape " + shape_to_string(out_shape));
    std::vector<S> out(src_index.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (src_index[i] >= x.numel()) throw ShapeError("gather: index out of range");
        out[i] = x.data()[src_index[i]];
    }
    auto px = x.node();
    return make_taped<S>(OpKind::gather, std::move(out_shape), std::move(out), {x},
                         [px, src_index](NodeT<S>& self) {
                             if (!px->requires_grad) return;
                             S* g = px->ensure_grad();
                             for (std::size_t i = 0; i < self.grad.size(); ++i) g[src_index[i]] += self.grad[i];
                         });
}

// Mean squared error over all elements.
template <typename S>
TensorT<S> mse(const TensorT<S>& a, const TensorT<S>& b) {
    TensorT<S> d = sub(a, b);
    return mean_all(mul(d, d));
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Compares the taped gradient of f() w.r.t. x against central finite
// differences. Returns max over coordinates of
// |analytic - numeric| / max(1, |analytic|). Meaningful in the 64-bit
// shadow mode; 32-bit rounding would swamp the 1e-4 tolerance.
template <typename S, typename F>
double grad_check(F&& f, TensorT<S>& x, double h = 1e-5) {
    x.set_requires_grad(true);
    x.clear_grad();
    TensorT<S> loss = f();
    loss.backward();
    std::vector<S> analytic = x.grad();
    if (analytic.empty()) analytic.assign(x.numel(), S(0));
    x.clear_grad();

    GradPause pause;
    double max_rel = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const S orig = x.data()[i];
        x.data()[i] = orig + static_cast<S>(h);
        const double lp = static_cast<double>(f().item());
        x.data()[i] = orig - static_cast<S>(h);
        const double lm = static_cast<double>(f().item());
        x.data()[i] = orig;
        const double numeric = (lp - lm) / (2 * h);
        const double a = static_cast<double>(analytic[i]);
        const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace diffbp
