#include "s2rl/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace s2rl::numgrad {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstMatMap as_mat(const Array& a, int rows, int cols) {
    return ConstMatMap(a.data(), rows, cols);
}

MatMap as_mat(Array& a, int rows, int cols) {
    return MatMap(a.data(), rows, cols);
}

double softplus_stable(double x) {
    // log(1 + e^x) without overflow
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Tape::Tape() {
    nodes_.reserve(256);
}

void Tape::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw Error("tape: invalid Var handle");
    }
}

Var Tape::push(Array value, bool requires_grad, const char* op, std::function<void(Tape&)> back) {
    if (!value.all_finite()) {
        throw NumericError(std::string("tape: op '") + op + "' at node " +
                           std::to_string(nodes_.size()) + " produced non-finite values");
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Array value, bool requires_grad) {
    return push(std::move(value), requires_grad, "leaf", nullptr);
}

const Array& Tape::grad(Var v) const {
    check(v);
    const Node& n = nodes_[v.id];
    if (!n.requires_grad) throw Error("tape: grad() on a node that does not require gradients");
    return n.grad;
}

Var Tape::matmul(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = value(a);
    const Array& bv = value(b);
    if (av.ndim() != 2 || bv.ndim() != 2 || av.cols() != bv.rows()) {
        throw DimensionError("matmul: incompatible shapes " + av.shape_str() + " x " +
                             bv.shape_str());
    }
    const int n = av.rows(), k = av.cols(), m = bv.cols();
    Array out({n, m});
    as_mat(out, n, m).noalias() = as_mat(av, n, k) * as_mat(bv, k, m);
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = push(std::move(out), rg, "matmul", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, b, oid, n, k, m](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            if (t.requires_grad(a)) {
                as_mat(t.grad_ref(a), n, k).noalias() +=
                    as_mat(g, n, m) * as_mat(t.value(b), k, m).transpose();
            }
            if (t.requires_grad(b)) {
                as_mat(t.grad_ref(b), k, m).noalias() +=
                    as_mat(t.value(a), n, k).transpose() * as_mat(g, n, m);
            }
        };
    }
    return o;
}

Var Tape::add(Var a, Var b) {
    check(a);
    check(b);
    check_same_shape(value(a), value(b), "add");
    Array out = value(a);
    const Array& bv = value(b);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) += bv.at(i);
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = push(std::move(out), rg, "add", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, b, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            if (t.requires_grad(a)) {
                Array& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
            }
            if (t.requires_grad(b)) {
                Array& gb = t.grad_ref(b);
                for (std::size_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i);
            }
        };
    }
    return o;
}

Var Tape::sub(Var a, Var b) {
    check(a);
    check(b);
    check_same_shape(value(a), value(b), "sub");
    Array out = value(a);
    const Array& bv = value(b);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) -= bv.at(i);
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = push(std::move(out), rg, "sub", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, b, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            if (t.requires_grad(a)) {
                Array& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
            }
            if (t.requires_grad(b)) {
                Array& gb = t.grad_ref(b);
                for (std::size_t i = 0; i < g.numel(); ++i) gb.at(i) -= g.at(i);
            }
        };
    }
    return o;
}

Var Tape::mul(Var a, Var b) {
    check(a);
    check(b);
    check_same_shape(value(a), value(b), "mul");
    Array out = value(a);
    const Array& bv = value(b);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= bv.at(i);
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = push(std::move(out), rg, "mul", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, b, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            if (t.requires_grad(a)) {
                Array& ga = t.grad_ref(a);
                const Array& bv2 = t.value(b);
                for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * bv2.at(i);
            }
            if (t.requires_grad(b)) {
                Array& gb = t.grad_ref(b);
                const Array& av2 = t.value(a);
                for (std::size_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i) * av2.at(i);
            }
        };
    }
    return o;
}

Var Tape::add_rowvec(Var a, Var bias) {
    check(a);
    check(bias);
    const Array& av = value(a);
    const Array& bv = value(bias);
    if (av.ndim() != 2 || bv.ndim() != 1 || av.cols() != bv.cols()) {
        throw DimensionError("add_rowvec: incompatible shapes " + av.shape_str() + " + " +
                             bv.shape_str());
    }
    const int n = av.rows(), m = av.cols();
    Array out = av;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) out.at(r, c) += bv.at(static_cast<std::size_t>(c));
    bool rg = requires_grad(a) || requires_grad(bias);
    Var o = push(std::move(out), rg, "add_rowvec", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, bias, oid, n, m](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            if (t.requires_grad(a)) {
                Array& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
            }
            if (t.requires_grad(bias)) {
                Array& gb = t.grad_ref(bias);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < m; ++c) gb.at(static_cast<std::size_t>(c)) += g.at(r, c);
            }
        };
    }
    return o;
}

Var Tape::mul_colvec(Var a, Var col) {
    check(a);
    check(col);
    const Array& av = value(a);
    const Array& cv = value(col);
    if (av.ndim() != 2 || cv.ndim() != 2 || cv.cols() != 1 || cv.rows() != av.rows()) {
        throw DimensionError("mul_colvec: incompatible shapes " + av.shape_str() + " * " +
                             cv.shape_str());
    }
    const int n = av.rows(), m = av.cols();
    Array out = av;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) out.at(r, c) *= cv.at(r, 0);
    bool rg = requires_grad(a) || requires_grad(col);
    Var o = push(std::move(out), rg, "mul_colvec", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, col, oid, n, m](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            if (t.requires_grad(a)) {
                Array& ga = t.grad_ref(a);
                const Array& cv2 = t.value(col);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < m; ++c) ga.at(r, c) += g.at(r, c) * cv2.at(r, 0);
            }
            if (t.requires_grad(col)) {
                Array& gc = t.grad_ref(col);
                const Array& av2 = t.value(a);
                for (int r = 0; r < n; ++r) {
                    double s = 0.0;
                    for (int c = 0; c < m; ++c) s += g.at(r, c) * av2.at(r, c);
                    gc.at(r, 0) += s;
                }
            }
        };
    }
    return o;
}

Var Tape::scale(Var a, double c) {
    check(a);
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= c;
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "scale", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, c, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += c * g.at(i);
        };
    }
    return o;
}

Var Tape::add_const(Var a, double c) {
    check(a);
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) += c;
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "add_const", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
        };
    }
    return o;
}

Var Tape::tanh_(Var a) {
    check(a);
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = std::tanh(out.at(i));
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "tanh", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            const Array& y = t.nodes_[oid].value;
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i)
                ga.at(i) += g.at(i) * (1.0 - y.at(i) * y.at(i));
        };
    }
    return o;
}

Var Tape::exp_(Var a) {
    check(a);
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = std::exp(out.at(i));
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "exp", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            const Array& y = t.nodes_[oid].value;
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * y.at(i);
        };
    }
    return o;
}

Var Tape::log_(Var a) {
    check(a);
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = std::log(out.at(i));
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "log", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            const Array& x = t.value(a);
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) / x.at(i);
        };
    }
    return o;
}

Var Tape::softplus(Var a) {
    check(a);
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = softplus_stable(out.at(i));
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "softplus", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            const Array& x = t.value(a);
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                // sigmoid(x), computed stably
                double s = x.at(i) >= 0.0 ? 1.0 / (1.0 + std::exp(-x.at(i)))
                                          : std::exp(x.at(i)) / (1.0 + std::exp(x.at(i)));
                ga.at(i) += g.at(i) * s;
            }
        };
    }
    return o;
}

Var Tape::square(Var a) {
    check(a);
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= out.at(i);
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "square", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            const Array& x = t.value(a);
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * 2.0 * x.at(i);
        };
    }
    return o;
}

Var Tape::min_(Var a, Var b) {
    check(a);
    check(b);
    check_same_shape(value(a), value(b), "min");
    const Array& av = value(a);
    const Array& bv = value(b);
    Array out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = std::min(av.at(i), bv.at(i));
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = push(std::move(out), rg, "min", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, b, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            const Array& av2 = t.value(a);
            const Array& bv2 = t.value(b);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                // ties route to a
                if (av2.at(i) <= bv2.at(i)) {
                    if (t.requires_grad(a)) t.grad_ref(a).at(i) += g.at(i);
                } else {
                    if (t.requires_grad(b)) t.grad_ref(b).at(i) += g.at(i);
                }
            }
        };
    }
    return o;
}

Var Tape::concat_cols(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = value(a);
    const Array& bv = value(b);
    if (av.ndim() != 2 || bv.ndim() != 2 || av.rows() != bv.rows()) {
        throw DimensionError("concat_cols: incompatible shapes " + av.shape_str() + " | " +
                             bv.shape_str());
    }
    const int n = av.rows(), p = av.cols(), q = bv.cols();
    Array out({n, p + q});
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < p; ++c) out.at(r, c) = av.at(r, c);
        for (int c = 0; c < q; ++c) out.at(r, p + c) = bv.at(r, c);
    }
    bool rg = requires_grad(a) || requires_grad(b);
    Var o = push(std::move(out), rg, "concat_cols", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, b, oid, n, p, q](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            if (t.requires_grad(a)) {
                Array& ga = t.grad_ref(a);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < p; ++c) ga.at(r, c) += g.at(r, c);
            }
            if (t.requires_grad(b)) {
                Array& gb = t.grad_ref(b);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < q; ++c) gb.at(r, c) += g.at(r, p + c);
            }
        };
    }
    return o;
}

Var Tape::cols(Var a, int c0, int c1) {
    check(a);
    const Array& av = value(a);
    if (av.ndim() != 2 || c0 < 0 || c1 > av.cols() || c0 >= c1) {
        throw DimensionError("cols: bad slice [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") of " + av.shape_str());
    }
    const int n = av.rows(), w = c1 - c0;
    Array out({n, w});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < w; ++c) out.at(r, c) = av.at(r, c0 + c);
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "cols", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid, n, w, c0](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            Array& ga = t.grad_ref(a);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < w; ++c) ga.at(r, c0 + c) += g.at(r, c);
        };
    }
    return o;
}

Var Tape::sum(Var a) {
    check(a);
    const Array& av = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) s += av.at(i);
    bool rg = requires_grad(a);
    Var o = push(Array::scalar(s), rg, "sum", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid](Tape& t) {
            double g = t.nodes_[oid].grad.at(std::size_t{0});
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
        };
    }
    return o;
}

Var Tape::mean(Var a) {
    check(a);
    const Array& av = value(a);
    if (av.numel() == 0) throw DimensionError("mean: empty array");
    const double inv = 1.0 / static_cast<double>(av.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) s += av.at(i);
    bool rg = requires_grad(a);
    Var o = push(Array::scalar(s * inv), rg, "mean", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid, inv](Tape& t) {
            double g = t.nodes_[oid].grad.at(std::size_t{0}) * inv;
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
        };
    }
    return o;
}

Var Tape::row_sum(Var a) {
    check(a);
    const Array& av = value(a);
    if (av.ndim() != 2) throw DimensionError("row_sum: expected 2-D, got " + av.shape_str());
    const int n = av.rows(), m = av.cols();
    Array out({n, 1});
    for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int c = 0; c < m; ++c) s += av.at(r, c);
        out.at(r, 0) = s;
    }
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "row_sum", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid, n, m](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            Array& ga = t.grad_ref(a);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < m; ++c) ga.at(r, c) += g.at(r, 0);
        };
    }
    return o;
}

Var Tape::rownorm(Var a) {
    check(a);
    const Array& av = value(a);
    if (av.ndim() != 2) throw DimensionError("rownorm: expected 2-D, got " + av.shape_str());
    const int n = av.rows(), m = av.cols();
    Array out({n, 1});
    for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int c = 0; c < m; ++c) s += av.at(r, c) * av.at(r, c);
        out.at(r, 0) = std::sqrt(s);
    }
    bool rg = requires_grad(a);
    Var o = push(std::move(out), rg, "rownorm", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, oid, n, m](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            const Array& x = t.value(a);
            const Array& y = t.nodes_[oid].value;
            Array& ga = t.grad_ref(a);
            for (int r = 0; r < n; ++r) {
                double nrm = y.at(r, 0);
                if (nrm <= 0.0) continue;  // zero subgradient at the origin
                double gr = g.at(r, 0) / nrm;
                for (int c = 0; c < m; ++c) ga.at(r, c) += gr * x.at(r, c);
            }
        };
    }
    return o;
}

Var Tape::stop_gradient(Var a) {
    check(a);
    return push(value(a), false, "stop_gradient", nullptr);
}

Var Tape::grad_scale(Var a, double c) {
    check(a);
    bool rg = requires_grad(a);
    Var o = push(value(a), rg, "grad_scale", nullptr);
    if (rg) {
        const int oid = o.id;
        nodes_[oid].back = [a, c, oid](Tape& t) {
            const Array& g = t.nodes_[oid].grad;
            Array& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.at(i) += c * g.at(i);
        };
    }
    return o;
}

void Tape::backward(Var loss) {
    check(loss);
    if (value(loss).numel() != 1) {
        throw DimensionError("backward: loss must be scalar, got " + value(loss).shape_str());
    }
    if (!nodes_[loss.id].requires_grad) {
        throw Error("tape: backward on a node with no gradient path");
    }
    for (Node& n : nodes_) {
        if (n.requires_grad) n.grad = Array::zeros(n.value.shape());
    }
    nodes_[loss.id].grad.at(std::size_t{0}) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.back) n.back(*this);
    }
}

}  // namespace s2rl::numgrad
