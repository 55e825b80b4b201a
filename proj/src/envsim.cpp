#include "s2rl/envsim.hpp"

#include <algorithm>
#include <cmath>

#include "s2rl/errors.hpp"
#include "s2rl/textio.hpp"

namespace s2rl::envsim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxSpin = 8.0;   // pendulum |theta_dot| bound
constexpr double kMaxPos = 5.0;    // pointmass position box

double wrap_angle(double th) {
    // into [-pi, pi)
    th = std::fmod(th + kPi, 2.0 * kPi);
    if (th < 0) th += 2.0 * kPi;
    return th - kPi;
}

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

bool axis_supported(Family f, Perturbation p) {
    if (p == Perturbation::none) return true;
    if (f == Family::pendulum) {
        return p == Perturbation::gravity || p == Perturbation::length ||
               p == Perturbation::mass;
    }
    return p == Perturbation::gravity || p == Perturbation::mass || p == Perturbation::drag;
}

}  // namespace

std::string to_string(Family f) {
    return f == Family::pointmass ? "pointmass" : "pendulum";
}

std::string to_string(Perturbation p) {
    switch (p) {
        case Perturbation::gravity: return "gravity";
        case Perturbation::length: return "length";
        case Perturbation::mass: return "mass";
        case Perturbation::drag: return "drag";
        case Perturbation::none: return "none";
    }
    throw ValidationError("bad perturbation enum");
}

std::string to_string(Role r) { return r == Role::sim ? "sim" : "real"; }

Family family_from_string(const std::string& s) {
    if (s == "pointmass") return Family::pointmass;
    if (s == "pendulum") return Family::pendulum;
    throw ValidationError("unknown env family '" + s + "'");
}

Perturbation perturbation_from_string(const std::string& s) {
    if (s == "gravity") return Perturbation::gravity;
    if (s == "length") return Perturbation::length;
    if (s == "mass") return Perturbation::mass;
    if (s == "drag") return Perturbation::drag;
    if (s == "none") return Perturbation::none;
    throw ValidationError("unknown perturbation '" + s + "'");
}

Role role_from_string(const std::string& s) {
    if (s == "sim") return Role::sim;
    if (s == "real") return Role::real;
    throw ValidationError("unknown role '" + s + "'");
}

std::string EnvSpec::to_kv() const {
    return "family=" + envsim::to_string(family) +
           ";perturbation=" + envsim::to_string(perturbation) + ";scale=" + fmt_double(scale) +
           ";role=" + envsim::to_string(role) + ";horizon=" + std::to_string(horizon) +
           ";seed=" + std::to_string(seed);
}

EnvSpec EnvSpec::from_kv(const std::string& text) {
    EnvSpec spec;
    for (const std::string& item : split(text, ';')) {
        if (item.empty()) continue;
        std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("env spec item '" + item + "' is not key=value");
        }
        std::string key = item.substr(0, eq), val = item.substr(eq + 1);
        if (key == "family") spec.family = family_from_string(val);
        else if (key == "perturbation") spec.perturbation = perturbation_from_string(val);
        else if (key == "scale") spec.scale = parse_double(val);
        else if (key == "role") spec.role = role_from_string(val);
        else if (key == "horizon") spec.horizon = static_cast<int>(parse_int(val));
        else if (key == "seed") spec.seed = static_cast<std::uint64_t>(parse_int(val));
        else throw ValidationError("unknown env spec key '" + key + "'");
    }
    return spec;
}

Environment::Environment(EnvSpec spec) : spec_(spec) {
    if (!(spec.scale > 0.0)) throw ValidationError("env spec: scale must be positive");
    if (spec.horizon <= 0) throw ValidationError("env spec: horizon must be positive");
    if (!axis_supported(spec.family, spec.perturbation)) {
        throw ValidationError("env spec: family " + envsim::to_string(spec.family) +
                              " does not support perturbation " +
                              envsim::to_string(spec.perturbation));
    }
    if (spec.perturbation == Perturbation::none && spec.scale != 1.0) {
        throw ValidationError("env spec: perturbation 'none' requires scale 1.0");
    }
    switch (spec.perturbation) {
        case Perturbation::gravity: gravity_ *= spec.scale; break;
        case Perturbation::length: length_ *= spec.scale; break;
        case Perturbation::mass: mass_ *= spec.scale; break;
        case Perturbation::drag: drag_ *= spec.scale; break;
        case Perturbation::none: break;
    }
}

EnvState Environment::reset(RandomStream& rng) const {
    EnvState st;
    st.step_index = 0;
    if (spec_.family == Family::pendulum) {
        double th = rng.uniform(-kPi, kPi);
        double thdot = rng.uniform(-1.0, 1.0);
        st.observation = Array::vec({std::cos(th), std::sin(th), thdot});
    } else {
        double x = rng.uniform(-1.0, 1.0);
        double y = rng.uniform(-1.0, 1.0);
        st.observation = Array::vec({x, y, 0.0, 0.0});
    }
    return st;
}

StepResult Environment::step(const EnvState& state, const Array& action) const {
    if (!action.all_finite()) throw ValidationError("step: non-finite action");
    if (static_cast<int>(action.numel()) != action_dim()) {
        throw DimensionError("step: action has " + std::to_string(action.numel()) +
                             " dims, expected " + std::to_string(action_dim()));
    }
    if (state.step_index >= spec_.horizon) {
        throw ValidationError("step: episode already finished (step " +
                              std::to_string(state.step_index) + " of " +
                              std::to_string(spec_.horizon) + ")");
    }
    const double bound = action_bound();
    StepResult res;
    if (spec_.family == Family::pendulum) {
        double th = std::atan2(state.observation.at(1), state.observation.at(0));
        double thdot = state.observation.at(2);
        double a = clip(action.at(0), -bound, bound);
        // reward from the pre-step state, swing-up shaping
        double w = wrap_angle(th);
        res.reward = -(w * w + 0.1 * thdot * thdot + 0.001 * a * a);
        double thacc =
            (3.0 * gravity_ / (2.0 * length_)) * std::sin(th) + 3.0 * a / (mass_ * length_ * length_);
        double thdot2 = clip(thdot + kDt * thacc, -kMaxSpin, kMaxSpin);
        double th2 = th + kDt * thdot2;  // semi-implicit Euler
        res.next_state.observation = Array::vec({std::cos(th2), std::sin(th2), thdot2});
    } else {
        double x = state.observation.at(0), y = state.observation.at(1);
        double vx = state.observation.at(2), vy = state.observation.at(3);
        double ax = clip(action.at(0), -bound, bound);
        double ay = clip(action.at(1), -bound, bound);
        double g_tilt = 0.3 * gravity_ / 9.81;  // downhill pull along -y
        double vx2 = vx + kDt * (ax / mass_ - drag_ * vx);
        double vy2 = vy + kDt * (ay / mass_ - g_tilt - drag_ * vy);
        double x2 = clip(x + kDt * vx2, -kMaxPos, kMaxPos);
        double y2 = clip(y + kDt * vy2, -kMaxPos, kMaxPos);
        res.reward = vx2 - 0.1 * (ax * ax + ay * ay);
        res.next_state.observation = Array::vec({x2, y2, vx2, vy2});
    }
    res.next_state.step_index = state.step_index + 1;
    res.done = res.next_state.step_index == spec_.horizon;
    return res;
}

Environment make_env(const EnvSpec& spec) { return Environment(spec); }

std::vector<EnvSpec> perturbation_grid(Family family) {
    std::vector<Perturbation> axes;
    if (family == Family::pendulum) {
        axes = {Perturbation::gravity, Perturbation::length, Perturbation::mass};
    } else {
        axes = {Perturbation::gravity, Perturbation::mass, Perturbation::drag};
    }
    std::vector<EnvSpec> grid;
    for (Perturbation p : axes) {
        for (double s : kScales) {
            EnvSpec spec;
            spec.family = family;
            spec.perturbation = p;
            spec.scale = s;
            spec.role = Role::real;
            grid.push_back(spec);
        }
    }
    return grid;
}

}  // namespace s2rl::envsim
