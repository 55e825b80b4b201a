#include "s2rl/adam.hpp"

#include <cmath>
#include <string>

namespace s2rl::numgrad {

AdamState adam_init(const std::vector<const Array*>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Array* p : params) {
        st.m.push_back(Array::zeros(p->shape()));
        st.v.push_back(Array::zeros(p->shape()));
    }
    return st;
}

void adam_step(const std::vector<Array*>& params, const std::vector<const Array*>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw DimensionError("adam: group sizes disagree (params " +
                             std::to_string(params.size()) + ", grads " +
                             std::to_string(grads.size()) + ", state " +
                             std::to_string(state.m.size()) + ")");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t a = 0; a < params.size(); ++a) {
        Array& p = *params[a];
        const Array& g = *grads[a];
        check_same_shape(p, g, "adam");
        check_same_shape(p, state.m[a], "adam");
        Array& m = state.m[a];
        Array& v = state.v[a];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m.at(i) = cfg.beta1 * m.at(i) + (1.0 - cfg.beta1) * g.at(i);
            v.at(i) = cfg.beta2 * v.at(i) + (1.0 - cfg.beta2) * g.at(i) * g.at(i);
            double mhat = m.at(i) / bc1;
            double vhat = v.at(i) / bc2;
            p.at(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace s2rl::numgrad
