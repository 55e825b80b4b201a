#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2rl/adam.hpp"
#include "s2rl/array.hpp"
#include "s2rl/datastore.hpp"
#include "s2rl/mlp.hpp"
#include "s2rl/rng.hpp"

namespace s2rl::sacpolicy {

using numgrad::AdamState;
using numgrad::Array;
using numgrad::MlpParams;

// Squash interval for the actor's per-dimension log standard deviation.
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct SacConfig {
    int obs_dim = 0;
    int act_dim = 0;
    double action_bound = 1.0;     // actions live in [-bound, bound] per dim
    std::vector<int> hidden = {64, 64};
    double gamma = 0.99;
    double tau = 0.005;
    double lr = 3e-4;              // shared by actor, critics and temperature
    double init_alpha = 1.0;
    std::uint64_t seed = 0;
};

enum class ActMode { stochastic, deterministic };

// Diagnostics from one sac_update call. When `skipped` is set the agent
// was left untouched because a non-finite quantity appeared.
struct UpdateReport {
    double critic1_loss = 0.0;
    double critic2_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;            // temperature after the step
    double mean_log_pi = 0.0;      // fresh-sample estimate; entropy ~ -mean_log_pi
    double mean_target_q1 = 0.0;   // per-batch means of the two target critics
    double mean_target_q2 = 0.0;
    double mean_min_target_q = 0.0;  // mean of the elementwise minimum actually used
    bool skipped = false;
};

// Soft actor-critic with automatic temperature tuning. The actor outputs
// [mean, raw log-std] per action dimension; actions are tanh-squashed and
// scaled to the bound. alpha is optimized in log space so it stays > 0.
struct Agent {
    SacConfig config;
    MlpParams actor;
    MlpParams critic1, critic2;
    MlpParams target1, target2;    // exponential moving averages of the critics
    Array log_alpha;               // single element
    AdamState actor_opt, critic1_opt, critic2_opt, alpha_opt;
    double target_entropy = 0.0;   // -act_dim

    double alpha() const;
};

Agent make_agent(const SacConfig& config);

// Lifts the agent to a wider observation (padded coordinates appended after
// the original ones): first-layer weights for the new coordinates start at
// zero, everything else is copied, so the lifted agent behaves exactly like
// the source on zero-padded observations. Optimizer moments start fresh.
Agent extend_agent(const Agent& agent, int new_obs_dim);

// Single observation (1-D) in, action (1-D) out. Deterministic mode returns
// tanh(mean)*bound and consumes no randomness; stochastic mode draws one
// normal per action dimension.
Array act(const Agent& agent, const Array& obs, ActMode mode, RandomStream& rng);

// Batch helper behind `act` and the update's target computation: squashed
// actions {n, act_dim} and per-row log-probabilities {n, 1}.
std::pair<Array, Array> sample_actions(const Agent& agent, const Array& obs,
                                       RandomStream& rng);

// One full SAC step on the batch: critic regression to
// r + gamma*(1-done)*(min target-Q - alpha*log pi), actor ascent on
// min-Q - alpha*log pi, temperature step toward target entropy, then a
// soft target update with config.tau. All-or-nothing: a non-finite loss
// anywhere leaves the agent unchanged and sets report.skipped.
UpdateReport sac_update(Agent& agent, const datastore::Batch& batch, RandomStream& rng);

// target <- (1-tau)*target + tau*online, per parameter. Requires 0 < tau <= 1.
void soft_target_update(Agent& agent, double tau);

void save_agent(const std::string& path, const Agent& agent);
Agent load_agent(const std::string& path);

}  // namespace s2rl::sacpolicy
