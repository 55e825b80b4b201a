#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2rl/array.hpp"
#include "s2rl/rng.hpp"

namespace s2rl::envsim {

using numgrad::Array;

enum class Family { pointmass, pendulum };
enum class Perturbation { gravity, length, mass, drag, none };
enum class Role { sim, real };

std::string to_string(Family f);
std::string to_string(Perturbation p);
std::string to_string(Role r);
Family family_from_string(const std::string& s);
Perturbation perturbation_from_string(const std::string& s);
Role role_from_string(const std::string& s);

// One MDP instance: a task family plus a single perturbed physics axis.
// Supported axes — pointmass: gravity/mass/drag; pendulum: gravity/length/mass.
struct EnvSpec {
    Family family = Family::pendulum;
    Perturbation perturbation = Perturbation::none;
    double scale = 1.0;
    Role role = Role::sim;
    int horizon = 200;
    std::uint64_t seed = 0;

    // Flat "key=value;key=value" form used in configs and report rows.
    std::string to_kv() const;
    static EnvSpec from_kv(const std::string& text);

    bool operator==(const EnvSpec&) const = default;
};

struct EnvState {
    Array observation;
    int step_index = 0;
};

struct StepResult {
    EnvState next_state;
    double reward = 0.0;
    bool done = false;
};

// Deterministic toy environment; stochasticity enters only through reset.
// Immutable after construction, so concurrent rollouts with per-episode
// RNG streams are safe.
class Environment {
public:
    explicit Environment(EnvSpec spec);

    const EnvSpec& spec() const { return spec_; }
    int obs_dim() const { return spec_.family == Family::pendulum ? 3 : 4; }
    int action_dim() const { return spec_.family == Family::pendulum ? 1 : 2; }
    // Symmetric per-dimension action bound; actions outside are clipped.
    double action_bound() const { return spec_.family == Family::pendulum ? 2.0 : 1.0; }

    // Effective physics constants (base x scale on the perturbed axis).
    double gravity() const { return gravity_; }
    double length() const { return length_; }
    double mass() const { return mass_; }
    double drag() const { return drag_; }
    double dt() const { return kDt; }

    EnvState reset(RandomStream& rng) const;
    StepResult step(const EnvState& state, const Array& action) const;

    static constexpr double kDt = 0.05;

private:
    EnvSpec spec_;
    double gravity_ = 9.81;
    double length_ = 1.0;
    double mass_ = 1.0;
    double drag_ = 0.1;
};

Environment make_env(const EnvSpec& spec);

// Full cross product of the family's perturbation axes with the scales
// {1.0, 1.05, 1.1, 1.5, 2.0}; role=real, default horizon and seed.
std::vector<EnvSpec> perturbation_grid(Family family);

inline constexpr double kScales[] = {1.0, 1.05, 1.1, 1.5, 2.0};

}  // namespace s2rl::envsim
