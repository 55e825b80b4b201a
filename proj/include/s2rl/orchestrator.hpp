#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2rl/datastore.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/latentspace.hpp"
#include "s2rl/sacpolicy.hpp"
#include "s2rl/worldmodel.hpp"

namespace s2rl::orchestrator {

using numgrad::Array;

// latent: the shared-latent-space method; pooled_baseline: one model trained
// on both data sources with the policy on raw observations; offline_only:
// standard MBPO on the real offline dataset alone.
enum class Mode { latent, pooled_baseline, offline_only };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

// Loop constants and component settings for one training run. The defaults
// complete in minutes on one CPU core.
struct TrainerConfig {
    Mode mode = Mode::latent;
    int N = 50;              // outer iterations
    int E = 100;             // env steps per iteration
    int M = 16;              // rollout batches per env step
    int G = 5;               // policy gradient steps per env step
    int k = 3;               // model rollout depth
    int rollout_batch = 64;  // rollout starts per batch
    int eval_every = 5;      // iterations between evaluations
    int eval_episodes = 10;
    std::uint64_t seed = 0;

    envsim::EnvSpec sim;
    envsim::EnvSpec real{envsim::Family::pendulum, envsim::Perturbation::none, 1.0,
                         envsim::Role::real};
    std::string real_offline_path;  // dataset backing the real side
    std::string out_dir;            // manifest, eval CSV and checkpoints

    int dim_latent = 0;  // 0 -> obs_dim + 2
    std::vector<int> map_hidden = {32, 32};
    latentspace::LossWeights weights;
    bool freeze_maps = false;  // pin encoders/decoders/m (equivalence runs)
    double latent_lr = 3e-4;
    int latent_batches = 20;  // model updates per outer iteration
    int latent_batch_size = 256;

    worldmodel::EnsembleConfig model;  // phase-1 ensemble fit
    std::vector<int> sac_hidden = {64, 64};
    double sac_lr = 3e-4;
    int sac_batch = 256;

    std::size_t env_buffer_capacity = 200000;
    std::size_t model_buffer_capacity = 200000;

    // Pooled mode without an offline dataset seeds its first model fit from
    // this many random sim episodes (kept outside D_env).
    int bootstrap_episodes = 10;

    // Optional phase-1 artifacts to reuse instead of refitting.
    std::string phase1_model_path;
    std::string phase1_agent_path;
};

void validate(const TrainerConfig& config);
nlohmann::json config_to_json(const TrainerConfig& config);
TrainerConfig config_from_json(const nlohmann::json& j);

struct EvalRecord {
    int iteration = 0;
    double sim_return = 0.0;
    double real_return = 0.0;
    double sum = 0.0;        // sim_return + real_return, the selection score
    std::string checkpoint;  // policy file saved at this evaluation
};

// Everything needed to audit or resume a run; persisted as JSON next to the
// eval-history CSV.
struct RunManifest {
    nlohmann::json config_echo;
    std::string code_version;
    std::uint64_t seed = 0;
    std::string mode;
    nlohmann::json loss_history = nlohmann::json::array();  // one entry per iteration
    std::vector<EvalRecord> evals;
    double wall_clock_seconds = 0.0;
    std::vector<std::string> files;  // names written under out_dir
    std::uint64_t env_transitions = 0;    // |D_env| when the run ended
    std::uint64_t model_insertions = 0;   // pushes into D_model
    std::uint64_t model_truncations = 0;  // evicted by capacity
    nlohmann::json extra = nlohmann::json::object();  // mode-specific summaries
    std::string error;  // non-empty when the run aborted
};

void save_manifest(const std::string& path, const RunManifest& manifest);
RunManifest load_manifest(const std::string& path);

// CSV dialect shared by every report: comma separator, '.' decimals,
// LF line endings, no quoting.
std::string eval_history_csv(const std::vector<EvalRecord>& evals);

using ObsMap = std::function<Array(const Array&)>;

// The evaluation stream for one (run seed, iteration, env index); exposed so
// checkpointed evaluations can be replayed bit-exactly.
RandomStream eval_stream(std::uint64_t seed, int iteration, int env_index);

// Mean undiscounted return over full episodes: deterministic actions on
// encoded observations (identity when `encoder` is empty). Never mutates the
// policy; per-episode substreams make the result batch-order free.
double evaluate(const sacpolicy::Agent& policy, const envsim::EnvSpec& spec,
                const ObsMap& encoder, int episodes, const RandomStream& rng);

// Highest sim+real sum; ties go to the earliest iteration.
EvalRecord select_best(const std::vector<EvalRecord>& history);

struct Phase1Result {
    worldmodel::EnsembleModel model;
    sacpolicy::Agent agent;
    RunManifest manifest;
};

// Standard MBPO on the real-side offline dataset: one ensemble fit, then
// model rollouts and SAC updates with starts drawn from the dataset. This is
// also the offline-only baseline run.
Phase1Result phase1_single_env(const TrainerConfig& config);

// Algorithm phase 2 over sim interaction plus the real offline stream.
RunManifest run_latent_training(const TrainerConfig& config);

// Same loop with a single pooled model: latent dimension pinned to the
// observation width and every map frozen at identity, so the policy
// effectively consumes raw observations.
RunManifest run_pooled_baseline(const TrainerConfig& config);

}  // namespace s2rl::orchestrator
