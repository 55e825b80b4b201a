#pragma once

#include <functional>
#include <vector>

#include "s2rl/array.hpp"

namespace s2rl::numgrad {

class Tape;

// Lightweight handle to a tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Arrays. Forward values are computed eagerly;
// each operation records a backward closure. Graphs are built per training
// step and discarded. Every new node is checked for finiteness, so a
// diverging computation fails loudly at the op that produced it.
class Tape {
public:
    Tape();

    Var leaf(Array value, bool requires_grad = false);
    Var constant(Array value) { return leaf(std::move(value), false); }
    Var constant_scalar(double v) { return leaf(Array::scalar(v), false); }

    // {n,k} x {k,m} -> {n,m}
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    // {n,m} + {m}, bias broadcast over rows
    Var add_rowvec(Var a, Var bias);
    // {n,m} * {n,1}, column broadcast over cols
    Var mul_colvec(Var a, Var col);
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }
    Var tanh_(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var softplus(Var a);
    Var square(Var a);
    Var min_(Var a, Var b);
    Var concat_cols(Var a, Var b);
    Var cols(Var a, int c0, int c1);
    Var sum(Var a);
    Var mean(Var a);
    Var row_sum(Var a);
    // Per-row Euclidean norm {n,m} -> {n,1}. Backward uses a zero
    // subgradient for all-zero rows.
    Var rownorm(Var a);
    Var stop_gradient(Var a);
    // Forward identity; backward multiplies the incoming gradient by c.
    Var grad_scale(Var a, double c);

    // Seeds d(loss)/d(loss) = 1 and propagates. loss must be a scalar.
    void backward(Var loss);

    const Array& value(Var v) const { return nodes_[v.id].value; }
    const Array& grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Array value;
        Array grad;
        std::function<void(Tape&)> back;
        bool requires_grad = false;
        const char* op = "leaf";
    };

    Var push(Array value, bool requires_grad, const char* op, std::function<void(Tape&)> back);
    Array& grad_ref(Var v) { return nodes_[v.id].grad; }
    void check(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace s2rl::numgrad
