#pragma once

#include "dimel/numkernel/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dimel::nk {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor2& value() const;
    const Tensor2& grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode recording of primitive operations. Nodes are appended in
/// evaluation order, so the node vector is already a topological order and
/// backward simply walks it in reverse.
///
/// A tape is single-owner: do not share one across threads.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives a gradient.
    Var variable(Tensor2 value);
    /// Leaf that never receives a gradient.
    Var constant(Tensor2 value);

    const Tensor2& value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient from the most recent backward(). Zero for nodes that are not on
    /// a path to the loss.
    const Tensor2& grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    /// Accumulates d(loss)/d(node) into every gradient-carrying node. Loss must
    /// be a 1×1 node of this tape.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    /// Number of backward rules executed by the last backward().
    std::size_t last_backward_visits() const noexcept { return visits_; }

    // Used by the primitive ops below.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;
    Var record(Tensor2 value, std::span<const Var> inputs, BackwardFn backward);
    Tensor2& grad_mut(std::size_t id) { return nodes_[id].grad; }
    const Tensor2& value_at(std::size_t id) const { return nodes_[id].value; }
    const Tensor2& grad_at(std::size_t id) const { return nodes_[id].grad; }
    bool requires_grad_at(std::size_t id) const { return nodes_[id].requires_grad; }

private:
    struct Node {
        Tensor2 value;
        Tensor2 grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::size_t visits_ = 0;
    bool has_backward_ = false;
};

// Differentiable primitives. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);   ///< elementwise
Var div(Var a, Var b);   ///< elementwise
Var scale(Var a, double s);
/// a - s, where s is a 1×1 node broadcast over a.
Var sub_scalar(Var a, Var s);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
/// log Σ exp over every entry, max-stabilized. Returns 1×1.
Var logsumexp(Var a);
/// Row-wise max-subtracted softmax.
Var softmax_rows(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
/// Cosine of a (1×d) against each row of b (K×d), as a 1×K row.
Var cosine_rows(Var a, Var b);
/// Copy of the value with no gradient path back to `a`.
Var detach(Var a);

} // namespace dimel::nk
