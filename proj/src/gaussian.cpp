#include "s2rl/gaussian.hpp"

#include <cmath>

namespace s2rl::numgrad {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

double soft_clamp(double x, double lo, double hi) {
    if (!(lo < hi)) throw ValidationError("soft_clamp: lo must be < hi");
    const double c = 0.5 * (lo + hi);
    const double u = 2.0 * (x - c) / (hi - lo);
    return lo + (hi - lo) * 0.5 * (std::tanh(u) + 1.0);
}

Array soft_clamp(const Array& x, double lo, double hi) {
    Array out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = soft_clamp(out.at(i), lo, hi);
    return out;
}

Var soft_clamp(Tape& tape, Var x, double lo, double hi) {
    if (!(lo < hi)) throw ValidationError("soft_clamp: lo must be < hi");
    const double c = 0.5 * (lo + hi);
    Var u = tape.scale(tape.add_const(x, -c), 2.0 / (hi - lo));
    Var s = tape.scale(tape.add_const(tape.tanh_(u), 1.0), 0.5);
    return tape.add_const(tape.scale(s, hi - lo), lo);
}

GaussianHead make_gaussian_head(Array mean, const Array& log_variance_raw, double lo, double hi) {
    check_same_shape(mean, log_variance_raw, "gaussian_head");
    return GaussianHead{std::move(mean), soft_clamp(log_variance_raw, lo, hi)};
}

double gaussian_nll(const Array& mean, const Array& log_variance, const Array& target) {
    check_same_shape(mean, log_variance, "gaussian_nll");
    check_same_shape(mean, target, "gaussian_nll");
    const int n = mean.rows(), d = mean.cols();
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) {
            double lv = log_variance.at(r, c);
            double diff = target.at(r, c) - mean.at(r, c);
            total += 0.5 * (kLog2Pi + lv + diff * diff * std::exp(-lv));
        }
    }
    return total / n;
}

Var gaussian_nll(Tape& tape, Var mean, Var log_variance, Var target) {
    check_same_shape(tape.value(mean), tape.value(log_variance), "gaussian_nll");
    check_same_shape(tape.value(mean), tape.value(target), "gaussian_nll");
    if (tape.value(mean).ndim() != 2) {
        throw DimensionError("gaussian_nll: tape version expects 2-D batches, got " +
                             tape.value(mean).shape_str());
    }
    Var diff = tape.sub(target, mean);
    Var quad = tape.mul(tape.square(diff), tape.exp_(tape.neg(log_variance)));
    Var elem = tape.scale(tape.add_const(tape.add(log_variance, quad), kLog2Pi), 0.5);
    return tape.mean(tape.row_sum(elem));
}

}  // namespace s2rl::numgrad
