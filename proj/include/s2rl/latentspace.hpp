#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2rl/adam.hpp"
#include "s2rl/array.hpp"
#include "s2rl/datastore.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/mlp.hpp"
#include "s2rl/rng.hpp"
#include "s2rl/worldmodel.hpp"

namespace s2rl::latentspace {

using envsim::Role;
using numgrad::Array;
using numgrad::MlpParams;

// Mixing weights for the three objective families plus the gradient gate
// on the correspondence term's path into the encoders (the map `m` always
// receives full gradient).
struct LossWeights {
    double w_pred = 1.0;
    double w_recon = 1.0;
    double w_corr = 1.0;
    double grad_to_encoders_from_corr = 0.0;
};

// Shared latent MDP: per-domain encoders/decoders, the cross-domain map m,
// and an ensemble dynamics/reward model operating on latent states.
//
// Every map is residual so that zeroing its correction net's final layer
// yields an exact closed form: encode = [s; zeros], decode = first obs_dim
// coordinates, m = identity. init_from_single builds exactly that state.
struct LatentModel {
    int obs_dim = 0;
    int act_dim = 0;
    int dim_latent = 0;
    Role init_side = Role::sim;
    LossWeights weights;            // objective configuration, recorded in checkpoints
    MlpParams p_sim, p_real;        // encoder corrections, obs -> dim_latent
    MlpParams q_sim, q_real;        // decoder corrections, dim_latent -> obs
    MlpParams m;                    // cross-map correction, dim_latent -> dim_latent
    worldmodel::EnsembleModel dynamics;  // (z, a) -> (reward, delta z)
};

struct LatentLossReport {
    double pred_sim = 0.0;
    double pred_real = 0.0;
    double recon_sim = 0.0;
    double recon_real = 0.0;
    double corr = 0.0;
    double total = 0.0;
    bool skipped = false;   // update aborted on a non-finite quantity
};

// Adam accumulators for every parameter group a latent_update touches.
struct LatentOptState {
    numgrad::AdamState p_sim, p_real, q_sim, q_real, m;
    std::vector<numgrad::AdamState> members;
};

LatentOptState make_opt_state(const LatentModel& model);

// Lift a trained single-environment ensemble into the latent space: both
// encoders start as the same identity+padding map, decoders as coordinate
// projections, m as the identity, and the dynamics weights are copied with
// zero rows/columns inserted for the padded coordinates (whose noise is
// pinned near the log-variance floor). Requires dim_latent >= obs dim.
LatentModel init_from_single(const worldmodel::EnsembleModel& single, Role side,
                             int dim_latent, const std::vector<int>& map_hidden = {32, 32},
                             std::uint64_t seed = 0);

// Plain map evaluations; accept a 1-D state or a 2-D batch.
Array encode(const LatentModel& model, Role side, const Array& s);
Array decode(const LatentModel& model, Role side, const Array& z);
Array cross_map(const LatentModel& model, const Array& z_real);

// Initial latent distribution: push one environment reset through the
// encoder matching the environment's role.
Array rho_bar_sample(const LatentModel& model, envsim::Environment& env, RandomStream& rng);

// The three objective families on a pair of batches, evaluated at the
// model's current parameters. pred_* is the ensemble NLL of gradient-stopped
// next-state encodings (and rewards); recon_* the autoencoding MSE over s
// and s'; corr the mean two-norm gap between p_sim and m's image of p_real
// over all observations of both batches.
LatentLossReport latent_losses(const LatentModel& model, const datastore::Batch& batch_sim,
                               const datastore::Batch& batch_real, const LossWeights& weights);

// One Adam step on all parameter groups (maps optional, for frozen-map
// baselines). Returns the pre-step losses; on a non-finite loss the model
// is left untouched and the report is marked skipped.
LatentLossReport latent_update(LatentModel& model, const datastore::Batch& batch_sim,
                               const datastore::Batch& batch_real, const LossWeights& weights,
                               LatentOptState& opt,
                               const numgrad::AdamConfig& opt_cfg = {},
                               bool update_maps = true);

// Encode the starts with the side's encoder, then roll the latent ensemble
// exactly as worldmodel::model_rollout does (same elite sampling, same
// stream layout). Transitions are in latent coordinates.
worldmodel::RolloutResult latent_rollout(const LatentModel& model,
                                         const datastore::Policy& policy,
                                         const Array& start_observations, Role side, int k,
                                         RandomStream& rng,
                                         worldmodel::PredictMode mode = worldmodel::PredictMode::sample);

void save_latent(const std::string& path, const LatentModel& model);
LatentModel load_latent(const std::string& path);

}  // namespace s2rl::latentspace
