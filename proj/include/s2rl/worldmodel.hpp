#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s2rl/datastore.hpp"
#include "s2rl/gaussian.hpp"
#include "s2rl/mlp.hpp"
#include "s2rl/rng.hpp"
#include "s2rl/serialize.hpp"

namespace s2rl::worldmodel {

using numgrad::Array;
using numgrad::GaussianHead;
using numgrad::MlpParams;

// Per-dimension standardization statistics. Population std, floored at
// 1e-6 so constant columns stay harmless.
struct Normalizer {
    Array mean;
    Array std;

    static Normalizer fit(const Array& rows);
    Array normalize(const Array& rows) const;
    Array denormalize(const Array& rows) const;
    int dim() const { return static_cast<int>(mean.numel()); }
};

struct EnsembleConfig {
    int n_members = 5;
    int n_elites = 3;
    std::vector<int> hidden = {64, 64};
    int batch_size = 256;
    int max_epochs = 200;
    int patience = 5;          // epochs without holdout improvement
    double holdout_frac = 0.1;
    double lr = 3e-4;
    std::uint64_t seed = 0;
};

// Probabilistic dynamics+reward ensemble. Each member maps a normalized
// (state, action) row to a Gaussian over the normalized target (r, ds)
// — reward first, then the state delta, so models whose state was
// extended by padded coordinates keep the original outputs in the same
// positions (and at the same RNG draw indices when sampling).
struct EnsembleModel {
    int obs_dim = 0;
    int act_dim = 0;
    EnsembleConfig config;
    std::vector<MlpParams> members;
    std::vector<int> elites;
    Normalizer in_norm;   // over (s, a)
    Normalizer out_norm;  // over (r, ds)
    bool trained = false;

    int out_dim() const { return 1 + obs_dim; }
};

struct ModelTrainReport {
    std::vector<std::vector<double>> holdout_nll;  // per member, per epoch
    std::vector<double> best_nll;
    std::vector<int> epochs_run;
    std::vector<std::string> stop_reason;  // "early_stop" | "max_epochs"
    std::vector<int> elites;
};

std::pair<EnsembleModel, ModelTrainReport> train_ensemble(
    const std::vector<datastore::Transition>& data, const EnsembleConfig& config);

enum class PredictMode { sample, mean };

// Normalized-space Gaussian head of one member on a raw (s, a) batch.
GaussianHead member_head(const EnsembleModel& model, int member, const Array& s, const Array& a);

// Denormalized mean prediction of one member: (s_next rows, r column).
std::pair<Array, Array> member_mean_prediction(const EnsembleModel& model, int member,
                                               const Array& s, const Array& a);

// One-step prediction for a single (s, a): draws a uniform elite member,
// then `mode` decides sampling vs the Gaussian mean. Draw order is
// member, then one normal per output coordinate (reward first).
std::pair<Array, double> predict(const EnsembleModel& model, const Array& s, const Array& a,
                                 RandomStream& rng, PredictMode mode);

struct RolloutResult {
    std::vector<datastore::Transition> transitions;
    std::int64_t truncations = 0;  // (start, step) pairs lost to non-finite output
};

// Branched short rollouts: k model steps from each start row. Every
// (start, step) pair draws from its own RNG substream, so results are
// independent of batch layout. Rollouts never set done (the model has
// no terminal predicate).
RolloutResult model_rollout(const EnsembleModel& model, const datastore::Policy& policy,
                            const Array& starts, int k, RandomStream& rng,
                            PredictMode mode = PredictMode::sample);

// Per-row variance of elite-member mean predictions, averaged over
// output dimensions; the epistemic-uncertainty signal. Returns {n, 1}.
Array ensemble_disagreement(const EnsembleModel& model, const Array& s, const Array& a);

void save_model(const std::string& path, const EnsembleModel& model);
EnsembleModel load_model(const std::string& path);

// Embed an ensemble inside a larger container under a name prefix.
void pack_ensemble(datastore::Blob& blob, const std::string& prefix,
                   const EnsembleModel& model);
EnsembleModel unpack_ensemble(const datastore::Blob& blob, const std::string& prefix);

}  // namespace s2rl::worldmodel
