#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2rl/array.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/latentspace.hpp"
#include "s2rl/sacpolicy.hpp"

namespace s2rl::gapmetrics {

using numgrad::Array;

// Denominator guard for the latent/original divergence ratio.
inline constexpr double kEpsDiv = 1e-8;
// Latent coordinates whose variance is below this in BOTH sample sets are
// treated as padded constants and dropped from the Gaussian fit.
inline constexpr double kVarExclude = 1e-9;
// Any surviving coordinate with variance below this is raised to it and the
// comparison is flagged; degenerate variances never propagate silently.
inline constexpr double kVarFloor = 1e-6;

// ---------------------------------------------------------------------------
// Scalar diagnostics
// ---------------------------------------------------------------------------

// Mean Euclidean distance between m(p_real(o)) and p_real(o) over a batch of
// real-side observations ({n, obs_dim}, or one 1-D observation). Exactly zero
// while the cross-map is the identity.
double m_identity_gap(const latentspace::LatentModel& model, const Array& observations);

// Closed-form KL(N0 || N1) between diagonal Gaussians, summed over
// coordinates. All four arrays must share one length; variances must be
// strictly positive.
double gaussian_kl(const Array& mean0, const Array& var0, const Array& mean1, const Array& var1);

// k-nearest-neighbour KL estimate between two sample sets ({n, d} and
// {m, d}); provided as a nonparametric cross-check for the Gaussian fit.
// The estimate is noisy and may be slightly negative near zero divergence.
double knn_kl(const Array& x_from, const Array& x_to, int k = 5);

// Diagonal-Gaussian comparison of a real and a sim observation set, done in
// the original space and again in the latent space (each set pushed through
// its own role's encoder).
struct KlComparison {
    double kl_original = 0.0;
    double kl_latent = 0.0;
    double ratio = 0.0;              // kl_latent / max(kl_original, kEpsDiv)
    int n_real = 0;
    int n_sim = 0;
    int excluded_latent_coords = 0;  // near-constant latent coordinates dropped
    bool variance_floored = false;   // some coordinate needed the kVarFloor guard
    std::string estimator = "diag_gaussian";
};

// Fits moments to both sets (>= 100 rows each, in KL(real || sim) direction)
// and reports both divergences plus their guarded ratio.
KlComparison kl_ratio(const latentspace::LatentModel& model, const Array& real_samples,
                      const Array& sim_samples);

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

// One (axis, scale) grid cell of the gap diagnostics.
struct GapCell {
    double scale = 1.0;
    double m_identity_gap = 0.0;
    double kl_original = 0.0;
    double kl_latent = 0.0;
    double kl_ratio = 0.0;
    int n_real = 0;
    int n_sim = 0;
    int excluded_latent_coords = 0;
    bool variance_floored = false;
};

// Diagnostics for one perturbation axis across a scale grid.
struct GapReport {
    envsim::Family family = envsim::Family::pendulum;
    envsim::Perturbation axis = envsim::Perturbation::gravity;
    std::vector<GapCell> cells;  // one per scale, in grid order
    std::string estimator = "diag_gaussian";
    std::uint64_t seed = 0;
    double eps_div = kEpsDiv;
};

enum class GapMetric { m_identity_gap, kl_original, kl_latent, kl_ratio };

std::string to_string(GapMetric metric);

// Direct-transfer return of a frozen policy: rows are perturbation axes,
// columns are scales, each cell a mean +/- sample std over seeds.
struct DegradationCell {
    double mean = 0.0;
    double stddev = 0.0;
};

struct DegradationTable {
    envsim::Family family = envsim::Family::pendulum;
    std::vector<envsim::Perturbation> axes;           // row order
    std::vector<double> scales;                       // column order
    std::vector<std::vector<DegradationCell>> cells;  // [axis][scale]
    int episodes = 0;
    std::vector<std::uint64_t> seeds;
};

// The perturbation axes a family supports, in grid order.
std::vector<envsim::Perturbation> family_axes(envsim::Family family);

// Mean undiscounted return of the deterministic policy over full episodes,
// using per-episode substreams of `rng` (the parent stream is not advanced,
// so equal seeds give equal episodes regardless of the environment).
double policy_return(const sacpolicy::Agent& policy, const envsim::Environment& env,
                     int episodes, const RandomStream& rng);

// Evaluates the frozen policy on every (axis, scale) environment of the
// family, `episodes` episodes per seed. Episode randomness depends only on
// (seed, episode), so physically identical cells — the whole scale-1.0
// column — score identically.
DegradationTable degradation_study(const sacpolicy::Agent& base_policy, envsim::Family family,
                                   const std::vector<double>& scales, int episodes,
                                   const std::vector<std::uint64_t>& seeds);

// ---------------------------------------------------------------------------
// Exports: CSV mirrors the row = axis, column = scale table layout; JSON
// carries every field.
// ---------------------------------------------------------------------------

std::string gap_table_csv(const std::vector<GapReport>& reports, GapMetric metric);
std::string gap_report_json(const std::vector<GapReport>& reports);
std::string degradation_csv(const DegradationTable& table);
std::string degradation_json(const DegradationTable& table);

}  // namespace s2rl::gapmetrics
