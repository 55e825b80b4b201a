#include "s2rl/mlp.hpp"

#include <cmath>
#include <string>

namespace s2rl::numgrad {

namespace {

void check_sizes(const std::vector<int>& layer_sizes) {
    if (layer_sizes.size() < 2) throw DimensionError("mlp: need at least two layer sizes");
    for (int w : layer_sizes) {
        if (w <= 0) throw DimensionError("mlp: non-positive layer width");
    }
}

}  // namespace

MlpParams mlp_init(const std::vector<int>& layer_sizes, RandomStream& rng) {
    check_sizes(layer_sizes);
    MlpParams p;
    p.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Array w({fan_in, fan_out});
        for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-bound, bound);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Array::zeros({fan_out}));
    }
    return p;
}

MlpParams mlp_zeros(const std::vector<int>& layer_sizes) {
    check_sizes(layer_sizes);
    MlpParams p;
    p.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        p.weights.push_back(Array::zeros({layer_sizes[l], layer_sizes[l + 1]}));
        p.biases.push_back(Array::zeros({layer_sizes[l + 1]}));
    }
    return p;
}

Array mlp_forward(const MlpParams& params, const Array& input) {
    const bool single = input.ndim() == 1;
    if (input.cols() != params.in_dim()) {
        throw DimensionError("mlp: input width " + std::to_string(input.cols()) +
                             " does not match layer 0 width " + std::to_string(params.in_dim()));
    }
    const int n = input.rows();
    Array x = single ? Array({1, input.cols()}, input.values()) : input;
    for (int l = 0; l < params.n_layers(); ++l) {
        const Array& w = params.weights[l];
        const Array& b = params.biases[l];
        if (x.cols() != w.rows()) {
            throw DimensionError("mlp: layer " + std::to_string(l) + " expects width " +
                                 std::to_string(w.rows()) + ", got " + std::to_string(x.cols()));
        }
        Array y({n, w.cols()});
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < w.cols(); ++c) {
                double s = b.at(static_cast<std::size_t>(c));
                for (int k = 0; k < w.rows(); ++k) s += x.at(r, k) * w.at(k, c);
                y.at(r, c) = s;
            }
        }
        if (l + 1 < params.n_layers()) {
            for (std::size_t i = 0; i < y.numel(); ++i) y.at(i) = std::tanh(y.at(i));
        }
        x = std::move(y);
    }
    if (single) return Array({x.cols()}, x.values());
    return x;
}

MlpVars mlp_leaves(Tape& tape, const MlpParams& params, bool requires_grad) {
    MlpVars v;
    for (int l = 0; l < params.n_layers(); ++l) {
        v.weights.push_back(tape.leaf(params.weights[l], requires_grad));
        v.biases.push_back(tape.leaf(params.biases[l], requires_grad));
    }
    return v;
}

Var mlp_apply(Tape& tape, const MlpVars& vars, Var input) {
    Var x = input;
    const int L = static_cast<int>(vars.weights.size());
    for (int l = 0; l < L; ++l) {
        x = tape.add_rowvec(tape.matmul(x, vars.weights[l]), vars.biases[l]);
        if (l + 1 < L) x = tape.tanh_(x);
    }
    return x;
}

MlpParams mlp_grads(const Tape& tape, const MlpVars& vars, const MlpParams& like) {
    MlpParams g = mlp_zeros(like.layer_sizes);
    for (int l = 0; l < like.n_layers(); ++l) {
        g.weights[l] = tape.grad(vars.weights[l]);
        g.biases[l] = tape.grad(vars.biases[l]);
    }
    return g;
}

std::vector<Array*> mlp_param_ptrs(MlpParams& params) {
    std::vector<Array*> out;
    for (Array& w : params.weights) out.push_back(&w);
    for (Array& b : params.biases) out.push_back(&b);
    return out;
}

std::vector<const Array*> mlp_param_ptrs(const MlpParams& params) {
    std::vector<const Array*> out;
    for (const Array& w : params.weights) out.push_back(&w);
    for (const Array& b : params.biases) out.push_back(&b);
    return out;
}

MlpParams mlp_grad(const MlpParams& params,
                   const std::function<Var(Tape&, const MlpVars&)>& build_loss) {
    Tape tape;
    MlpVars vars = mlp_leaves(tape, params, true);
    Var loss = build_loss(tape, vars);
    tape.backward(loss);
    return mlp_grads(tape, vars, params);
}

MlpParams mlp_finite_diff_grad(const MlpParams& params,
                               const std::function<double(const MlpParams&)>& loss, double eps) {
    if (eps <= 0.0) throw ValidationError("finite_diff_grad: eps must be positive");
    MlpParams work = params;
    MlpParams g = mlp_zeros(params.layer_sizes);
    std::vector<Array*> wp = mlp_param_ptrs(work);
    std::vector<Array*> gp = mlp_param_ptrs(g);
    for (std::size_t a = 0; a < wp.size(); ++a) {
        for (std::size_t i = 0; i < wp[a]->numel(); ++i) {
            double saved = wp[a]->at(i);
            wp[a]->at(i) = saved + eps;
            double hi = loss(work);
            wp[a]->at(i) = saved - eps;
            double lo = loss(work);
            wp[a]->at(i) = saved;
            gp[a]->at(i) = (hi - lo) / (2.0 * eps);
        }
    }
    return g;
}

}  // namespace s2rl::numgrad
