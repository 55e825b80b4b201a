#pragma once

#include "s2rl/array.hpp"
#include "s2rl/tape.hpp"

namespace s2rl::numgrad {

// Default log-variance bounds for probabilistic heads.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 0.5;

// Diagonal Gaussian output of a probabilistic net. log_variance is always
// inside its clamp interval; construct through make_gaussian_head.
struct GaussianHead {
    Array mean;
    Array log_variance;
};

// Smooth squash into [lo, hi]: an affine sigmoid centred on the interval
// midpoint with unit slope there. Never leaves the bounds (tanh saturates
// to them in floating point), and gradients stay nonzero everywhere a
// hard clamp would kill them.
double soft_clamp(double x, double lo, double hi);
Array soft_clamp(const Array& x, double lo, double hi);
Var soft_clamp(Tape& tape, Var x, double lo, double hi);

GaussianHead make_gaussian_head(Array mean, const Array& log_variance_raw,
                                double lo = kLogVarMin, double hi = kLogVarMax);

// Negative log-likelihood of `target` under a diagonal Gaussian:
// per row, sum over dims of 0.5*(log 2pi + logvar + (target-mean)^2/var);
// for a batch, the mean of the per-row sums. 1-D inputs count as one row.
double gaussian_nll(const Array& mean, const Array& log_variance, const Array& target);

// Tape version; all three must be 2-D batches of equal shape.
Var gaussian_nll(Tape& tape, Var mean, Var log_variance, Var target);

}  // namespace s2rl::numgrad
