#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "gantts/common.hpp"

namespace gantts {

class Tape;

// Dense row-major tensor of doubles.  The payload is immutable once created
// and shared by handle; copying a Tensor is cheap.  A tensor optionally
// carries a (tape, node) pair when it was produced by a differentiable op or
// registered as a leaf via Tape::watch.
//
// Layout convention: audio/feature maps are rank 2 [T, C] or rank 3
// [B, T, C] with channels innermost, so index (b, t, c) maps to flat
// offset (b * T + t) * C + c.
struct Tensor {
    std::vector<i64> shape;
    std::shared_ptr<std::vector<double>> data;
    Tape* tape = nullptr;
    i64 node = -1;

    Tensor() = default;

    i64 numel() const {
        i64 n = 1;
        for (i64 d : shape) n *= d;
        return n;
    }
    i64 rank() const { return static_cast<i64>(shape.size()); }
    i64 dim(i64 i) const { return shape[static_cast<size_t>(i)]; }

    const std::vector<double>& values() const { return *data; }
    double* raw() { return data->data(); }
    const double* raw() const { return data->data(); }

    double at(std::initializer_list<i64> idx) const {
        check(static_cast<i64>(idx.size()) == rank(), "tensor: at() index rank mismatch");
        i64 flat = 0;
        i64 i = 0;
        for (i64 v : idx) {
            check(v >= 0 && v < shape[static_cast<size_t>(i)], "tensor: at() index out of range");
            flat = flat * shape[static_cast<size_t>(i)] + v;
            ++i;
        }
        return (*data)[static_cast<size_t>(flat)];
    }

    static Tensor zeros(std::vector<i64> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<double>>(static_cast<size_t>(t.numel()), 0.0);
        return t;
    }

    static Tensor full(std::vector<i64> shape, double v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.data->begin(), t.data->end(), v);
        return t;
    }

    static Tensor from(std::vector<i64> shape, std::vector<double> vals) {
        Tensor t;
        t.shape = std::move(shape);
        check(static_cast<i64>(vals.size()) == t.numel(), "tensor: from() size mismatch");
        t.data = std::make_shared<std::vector<double>>(std::move(vals));
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    // Same payload, new shape with identical element count.
    Tensor reshaped(std::vector<i64> new_shape) const {
        Tensor t = *this;
        i64 n = 1;
        for (i64 d : new_shape) n *= d;
        check(n == numel(), "tensor: reshape element count mismatch");
        t.shape = std::move(new_shape);
        return t;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << "]";
        return os.str();
    }
};

// Reverse-mode tape.  Ops append nodes in execution order; backward() walks
// them strictly in reverse creation order, which fixes the gradient
// accumulation order and makes runs bitwise reproducible.
class Tape {
public:
    using BackFn = std::function<void(Tape&, const std::vector<double>&)>;

    // Register a differentiable node; `back` receives this node's output
    // gradient and is responsible for accumulating into input gradients.
    // Leaf nodes pass a null function.
    i64 add(i64 numel, BackFn back) {
        nodes_.push_back(Node{numel, std::move(back), nullptr});
        return static_cast<i64>(nodes_.size()) - 1;
    }

    // Gradient buffer of a node, allocated (zero-filled) on first touch.
    std::vector<double>& grad_buf(i64 id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad)
            n.grad = std::make_shared<std::vector<double>>(static_cast<size_t>(n.numel), 0.0);
        return *n.grad;
    }

    // Register (or look up) a leaf.  Keyed by payload pointer: watching the
    // same underlying buffer twice yields the same node, so a parameter used
    // in several places accumulates into a single gradient.
    Tensor watch(const Tensor& t) {
        check(t.data != nullptr, "tape: watch of empty tensor");
        const void* key = static_cast<const void*>(t.data.get());
        auto it = watched_.find(key);
        i64 id;
        if (it != watched_.end()) {
            id = it->second;
        } else {
            id = add(t.numel(), nullptr);
            watched_.emplace(key, id);
        }
        Tensor out = t;
        out.tape = this;
        out.node = id;
        return out;
    }

    // Run reverse-mode accumulation from a scalar root.
    void backward(const Tensor& root) {
        check(root.tape == this && root.node >= 0, "tape: backward root not on this tape");
        check(root.numel() == 1, "tape: backward root must be scalar");
        grad_buf(root.node)[0] += 1.0;
        for (i64 id = root.node; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.grad && n.back) n.back(*this, *n.grad);
        }
    }

    // Gradient of a tensor on this tape, or nullptr when nothing flowed into
    // it (e.g. a watched parameter that the objective never touched).
    const std::vector<double>* grad_of(const Tensor& t) const {
        if (t.tape != this || t.node < 0) return nullptr;
        const Node& n = nodes_[static_cast<size_t>(t.node)];
        return n.grad ? n.grad.get() : nullptr;
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        i64 numel;
        BackFn back;
        std::shared_ptr<std::vector<double>> grad;
    };
    std::vector<Node> nodes_;
    std::unordered_map<const void*, i64> watched_;
};

namespace detail {

// Ops use this to decide whether to record.  All taped inputs must agree on
// the tape; constants (no tape) mix freely with taped tensors and simply
// receive no gradient.
inline Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (t->tape == nullptr) continue;
        if (tape == nullptr) tape = t->tape;
        else check(tape == t->tape, "ops: inputs recorded on different tapes");
    }
    return tape;
}

// In-place gradient target for an op input: null when the input is a
// constant, otherwise the (lazily allocated) accumulation buffer.
inline std::vector<double>* grad_target(Tape& tape, const Tensor& input) {
    if (input.tape == nullptr || input.node < 0) return nullptr;
    return &tape.grad_buf(input.node);
}

}  // namespace detail

}  // namespace gantts
