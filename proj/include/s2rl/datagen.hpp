#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s2rl/datastore.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/sacpolicy.hpp"

namespace s2rl::datastore {

// Offline-dataset flavours: "medium" freezes a mid-training policy and rolls
// it out; "medium-replay" dumps the training run's replay buffer instead.
enum class Quality { medium, medium_replay };

std::string to_string(Quality q);
Quality quality_from_string(const std::string& s);

// Tuning for the model-free SAC run behind offline-dataset generation.
struct OfflineGenConfig {
    int max_env_steps = 30000;   // budget before generation fails
    int warmup_steps = 1000;     // uniform-random exploration, no updates
    int eval_every = 1000;       // deterministic eval cadence (env steps)
    int eval_episodes = 5;
    int batch_size = 128;
    std::vector<int> hidden = {64, 64};
    double lr = 3e-4;
    double medium_fraction = 0.5;  // normalized-score stop threshold
    int stats_episodes = 20;       // manifest return statistics sample
};

// Return anchors measured once with tools/calibrate on the unperturbed
// real-role environments. The normalized score
// (R - random) / (expert - random) makes quality thresholds meaningful for
// tasks whose raw returns are negative.
struct ReferenceReturns {
    double expert = 0.0;
    double random = 0.0;
};

ReferenceReturns reference_returns(envsim::Family family);

// Raw-return stop threshold at the given normalized-score fraction.
double medium_threshold(envsim::Family family, double fraction);

struct SacTrainerResult {
    sacpolicy::Agent agent;
    std::vector<Transition> replay;             // insertion order, nothing evicted
    std::vector<std::pair<int, double>> evals;  // (env step, deterministic return)
    int steps_run = 0;
    bool reached_stop = false;
};

// Model-free SAC in one environment: one gradient step per env step after
// warmup, stopping once the deterministic evaluation return reaches
// stop_return (pass -infinity to always run the full budget).
SacTrainerResult train_sac_model_free(const envsim::EnvSpec& spec, double stop_return,
                                      RandomStream& rng, const OfflineGenConfig& cfg = {});

struct OfflineDataset {
    std::vector<Transition> transitions;
    DatasetManifest manifest;
    sacpolicy::Agent policy;  // the generating (threshold) policy
};

// Trains to the medium threshold, then materializes `size` transitions of
// the requested flavour. Throws GenerationError when the threshold is out
// of reach within the step budget.
OfflineDataset make_offline_dataset(const envsim::EnvSpec& spec, Quality quality, int size,
                                    RandomStream& rng, const OfflineGenConfig& cfg = {});

// Mean undiscounted return of the agent over full episodes; deterministic
// or stochastic actions, per-episode substreams of `rng`.
double eval_return(const sacpolicy::Agent& agent, const envsim::Environment& env, int episodes,
                   sacpolicy::ActMode mode, const RandomStream& rng);

}  // namespace s2rl::datastore
