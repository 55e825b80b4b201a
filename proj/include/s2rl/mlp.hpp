#pragma once

#include <functional>
#include <vector>

#include "s2rl/array.hpp"
#include "s2rl/rng.hpp"
#include "s2rl/tape.hpp"

namespace s2rl::numgrad {

// Fully-connected net: tanh on hidden layers, identity on the output.
// weights[l] has shape {layer_sizes[l], layer_sizes[l+1]} so a batch row
// vector multiplies from the left; biases[l] has shape {layer_sizes[l+1]}.
struct MlpParams {
    std::vector<int> layer_sizes;
    std::vector<Array> weights;
    std::vector<Array> biases;

    int n_layers() const { return static_cast<int>(weights.size()); }
    int in_dim() const { return layer_sizes.front(); }
    int out_dim() const { return layer_sizes.back(); }
};

// Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases.
MlpParams mlp_init(const std::vector<int>& layer_sizes, RandomStream& rng);
MlpParams mlp_zeros(const std::vector<int>& layer_sizes);

// Plain forward pass. Accepts a 1-D input (single sample) or a 2-D batch;
// the output matches the input's rank.
Array mlp_forward(const MlpParams& params, const Array& input);

// Tape handles for one net's parameters.
struct MlpVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

MlpVars mlp_leaves(Tape& tape, const MlpParams& params, bool requires_grad = true);

// Forward pass on the tape; input must be a 2-D batch.
Var mlp_apply(Tape& tape, const MlpVars& vars, Var input);

// Gradients read back from the tape into a params-shaped container.
MlpParams mlp_grads(const Tape& tape, const MlpVars& vars, const MlpParams& like);

// Flat views over all parameter arrays (weights then biases, layer order),
// for the optimizer and serialization.
std::vector<Array*> mlp_param_ptrs(MlpParams& params);
std::vector<const Array*> mlp_param_ptrs(const MlpParams& params);

// Gradients of a scalar loss built on a fresh tape from `params`.
MlpParams mlp_grad(const MlpParams& params,
                   const std::function<Var(Tape&, const MlpVars&)>& build_loss);

// Central-difference oracle: perturbs one coordinate at a time.
MlpParams mlp_finite_diff_grad(const MlpParams& params,
                               const std::function<double(const MlpParams&)>& loss,
                               double eps = 1e-5);

}  // namespace s2rl::numgrad
