#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/gapmetrics.hpp"
#include "s2rl/latentspace.hpp"
#include "s2rl/sacpolicy.hpp"

using namespace s2rl;
using namespace s2rl::gapmetrics;
using numgrad::Array;

namespace {

// Untrained ensemble shell with the requested dimensions; the dynamics
// weights never matter for the map-level diagnostics under test.
worldmodel::EnsembleModel ensemble_shell(int obs_dim, int act_dim) {
    worldmodel::EnsembleModel single;
    single.obs_dim = obs_dim;
    single.act_dim = act_dim;
    single.config.n_members = 1;
    single.config.n_elites = 1;
    single.elites = {0};
    const int din = obs_dim + act_dim;
    const int dout = 2 * (1 + obs_dim);
    single.members.push_back(numgrad::mlp_zeros({din, 8, dout}));
    single.in_norm = {Array({din}), Array::full({din}, 1.0)};
    single.out_norm = {Array({1 + obs_dim}), Array::full({1 + obs_dim}, 1.0)};
    single.trained = true;
    return single;
}

latentspace::LatentModel identity_model(int obs_dim, int act_dim, int dim_latent) {
    return latentspace::init_from_single(ensemble_shell(obs_dim, act_dim), latentspace::Role::sim,
                                         dim_latent);
}

Array gaussian_rows(int n, int d, double mean, double stddev, std::uint64_t seed) {
    RandomStream rng(seed);
    Array rows({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) rows.at(i, j) = rng.normal(mean, stddev);
    return rows;
}

// Trapezoidal integration of p0 log(p0/p1) over 12 standard deviations,
// the independent oracle for the closed-form 1-dim KL.
double kl_by_quadrature(double m0, double v0, double m1, double v1) {
    const int npts = 20001;
    const double s0 = std::sqrt(v0);
    const double lo = m0 - 12.0 * s0;
    const double hi = m0 + 12.0 * s0;
    const double h = (hi - lo) / (npts - 1);
    auto log_pdf = [](double x, double m, double v) {
        return -0.5 * std::log(2.0 * M_PI * v) - 0.5 * (x - m) * (x - m) / v;
    };
    double acc = 0.0;
    for (int i = 0; i < npts; ++i) {
        const double x = lo + h * i;
        const double lp0 = log_pdf(x, m0, v0);
        const double f = std::exp(lp0) * (lp0 - log_pdf(x, m1, v1));
        acc += (i == 0 || i == npts - 1) ? 0.5 * f : f;
    }
    return acc * h;
}

sacpolicy::Agent pendulum_policy(std::uint64_t seed) {
    sacpolicy::SacConfig cfg;
    cfg.obs_dim = 3;
    cfg.act_dim = 1;
    cfg.action_bound = 2.0;
    cfg.hidden = {32, 32};
    cfg.seed = seed;
    return sacpolicy::make_agent(cfg);
}

}  // namespace

TEST_CASE("m_identity_gap is zero at init and exact for constant offsets") {
    latentspace::LatentModel lm = identity_model(3, 1, 5);
    const Array obs = gaussian_rows(16, 3, 0.0, 1.0, 11);

    CHECK(m_identity_gap(lm, obs) == 0.0);

    // Zero final weights make the cross-map correction a pure bias, so
    // m(z) = z + c exactly; the gap is the norm of c for every input.
    Array& bias = lm.m.biases.back();
    bias.at(1) = 2.0;
    CHECK(m_identity_gap(lm, obs) == 2.0);
    CHECK(m_identity_gap(lm, Array::vec({0.3, -0.8, 0.5})) == 2.0);

    bias = Array({5}, {1.2, -0.9, 1.1, 0.0, 0.7});
    const double norm_c = std::sqrt(1.2 * 1.2 + 0.9 * 0.9 + 1.1 * 1.1 + 0.7 * 0.7);
    CHECK(m_identity_gap(lm, obs) == doctest::Approx(norm_c).epsilon(1e-13));

    CHECK_THROWS_AS(m_identity_gap(lm, Array()), ValidationError);
    CHECK_THROWS_AS(m_identity_gap(lm, gaussian_rows(4, 2, 0.0, 1.0, 1)), DimensionError);
}

TEST_CASE("gaussian_kl closed form: fixtures, properties, validation") {
    const Array z = Array::vec({0.0});
    const Array o = Array::vec({1.0});
    CHECK(gaussian_kl(z, o, o, o) == 0.5);
    CHECK(gaussian_kl(z, o, z, o) == 0.0);

    const Array m0 = Array::vec({0.3, -1.2, 0.8});
    const Array v0 = Array::vec({0.5, 2.0, 1.3});
    CHECK(gaussian_kl(m0, v0, m0, v0) == 0.0);

    SUBCASE("non-negative, zero only at equality") {
        RandomStream rng(21);
        for (int trial = 0; trial < 200; ++trial) {
            const Array a = Array::vec({rng.uniform(-2, 2), rng.uniform(-2, 2)});
            const Array va = Array::vec({rng.uniform(0.1, 3), rng.uniform(0.1, 3)});
            const Array b = Array::vec({rng.uniform(-2, 2), rng.uniform(-2, 2)});
            const Array vb = Array::vec({rng.uniform(0.1, 3), rng.uniform(0.1, 3)});
            CHECK(gaussian_kl(a, va, b, vb) >= 0.0);
        }
        Array m1 = m0;
        m1.at(0) += 1e-6;
        CHECK(gaussian_kl(m0, v0, m1, v0) > 0.0);
    }

    SUBCASE("asymmetric in general") {
        const Array v1 = Array::vec({2.0});
        CHECK(gaussian_kl(z, o, z, v1) != gaussian_kl(z, v1, z, o));
    }

    SUBCASE("validation") {
        CHECK_THROWS_AS(gaussian_kl(z, Array::vec({0.0}), z, o), ValidationError);
        CHECK_THROWS_AS(gaussian_kl(z, Array::vec({-1.0}), z, o), ValidationError);
        CHECK_THROWS_AS(gaussian_kl(z, o, m0, v0), DimensionError);
        CHECK_THROWS_AS(gaussian_kl(Array(), Array(), Array(), Array()), ValidationError);
    }
}

TEST_CASE("gaussian_kl matches trapezoidal integration within 1%") {
    RandomStream rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const double m0 = rng.uniform(-2, 2);
        const double v0 = rng.uniform(0.2, 3.0);
        const double m1 = rng.uniform(-2, 2);
        const double v1 = rng.uniform(0.2, 3.0);
        const double closed =
            gaussian_kl(Array::vec({m0}), Array::vec({v0}), Array::vec({m1}), Array::vec({v1}));
        const double oracle = kl_by_quadrature(m0, v0, m1, v1);
        CHECK(closed == doctest::Approx(oracle).epsilon(0.01));
    }
}

TEST_CASE("knn_kl cross-checks the Gaussian estimate") {
    const Array a = gaussian_rows(2000, 1, 0.0, 1.0, 41);
    const Array b = gaussian_rows(2000, 1, 1.0, 1.0, 42);

    // True KL is 0.5; the k-NN estimate is consistent but noisy.
    CHECK(std::abs(knn_kl(a, b, 5) - 0.5) < 0.15);
    CHECK(std::abs(knn_kl(a, gaussian_rows(2000, 1, 0.0, 1.0, 43), 5)) < 0.1);

    CHECK_THROWS_AS(knn_kl(a, gaussian_rows(10, 2, 0.0, 1.0, 1), 5), DimensionError);
    CHECK_THROWS_AS(knn_kl(gaussian_rows(5, 1, 0.0, 1.0, 1), b, 5), ValidationError);
    CHECK_THROWS_AS(knn_kl(a, b, 0), ValidationError);
}

TEST_CASE("kl_ratio: identical sets, identity encoders, validation") {
    latentspace::LatentModel lm = identity_model(3, 1, 5);

    SUBCASE("identical sets give zero everywhere") {
        const Array same = gaussian_rows(150, 3, 0.0, 1.0, 51);
        const KlComparison r = kl_ratio(lm, same, same);
        CHECK(r.kl_original == 0.0);
        CHECK(r.kl_latent == 0.0);
        CHECK(r.ratio == 0.0);
        CHECK(r.n_real == 150);
        CHECK(r.n_sim == 150);
        CHECK(r.excluded_latent_coords == 2);  // the two padded coordinates
        CHECK_FALSE(r.variance_floored);
        CHECK(r.estimator == "diag_gaussian");
    }

    SUBCASE("identity encoders preserve the divergence exactly") {
        const Array real = gaussian_rows(400, 3, 0.0, 1.0, 52);
        const Array sim = gaussian_rows(400, 3, 0.5, 1.3, 53);
        const KlComparison r = kl_ratio(lm, real, sim);
        CHECK(r.kl_original > 0.1);
        CHECK(r.kl_latent == r.kl_original);
        CHECK(r.ratio == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.excluded_latent_coords == 2);
    }

    SUBCASE("validation") {
        const Array ok = gaussian_rows(120, 3, 0.0, 1.0, 54);
        CHECK_THROWS_AS(kl_ratio(lm, gaussian_rows(99, 3, 0.0, 1.0, 1), ok), ValidationError);
        CHECK_THROWS_AS(kl_ratio(lm, ok, gaussian_rows(99, 3, 0.0, 1.0, 1)), ValidationError);
        CHECK_THROWS_AS(kl_ratio(lm, gaussian_rows(120, 2, 0.0, 1.0, 1), ok), DimensionError);
    }
}

TEST_CASE("kl_ratio is invariant under a shared affine encoder") {
    // One-dimensional model whose residual correction is a single linear
    // layer; setting its weight to 1 turns both encoders into z = 2 s.
    latentspace::LatentModel lm = latentspace::init_from_single(
        ensemble_shell(1, 1), latentspace::Role::sim, 1, /*map_hidden=*/{});
    lm.p_sim.weights[0].at(0, 0) = 1.0;
    lm.p_real.weights[0].at(0, 0) = 1.0;
    CHECK(latentspace::encode(lm, latentspace::Role::real, Array::vec({1.25})).at(0) == 2.5);

    const Array real = gaussian_rows(4000, 1, 0.0, 1.0, 61);
    const Array sim = gaussian_rows(4000, 1, 3.0, 1.0, 62);
    const KlComparison r = kl_ratio(lm, real, sim);

    // Mean gap 3, unit variances: KL = 4.5 up to sampling error of the fit.
    CHECK(r.kl_original == doctest::Approx(4.5).epsilon(0.05));
    CHECK(std::abs(r.kl_latent - r.kl_original) < 1e-9);
    CHECK(r.ratio == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.excluded_latent_coords == 0);
}

TEST_CASE("kl_ratio floors degenerate variances and flags them") {
    latentspace::LatentModel lm = identity_model(3, 1, 5);
    Array real = gaussian_rows(120, 3, 0.0, 1.0, 71);
    Array sim = gaussian_rows(120, 3, 0.0, 1.0, 72);
    // Coordinate 2 frozen at different values: a genuine gap with zero
    // variance. It must be floored and flagged, not dropped.
    for (int i = 0; i < 120; ++i) {
        real.at(i, 2) = 0.7;
        sim.at(i, 2) = 0.9;
    }
    const KlComparison r = kl_ratio(lm, real, sim);
    CHECK(r.variance_floored);
    CHECK(std::isfinite(r.kl_original));
    CHECK(std::isfinite(r.kl_latent));
    CHECK(std::isfinite(r.ratio));
    // The frozen-but-different coordinate dominates both spaces equally.
    CHECK(r.kl_original > 1000.0);
    CHECK(r.kl_latent == r.kl_original);
    CHECK(r.excluded_latent_coords == 2);  // pads still dropped

    // Same frozen value on both sides: no gap contribution, still flagged.
    for (int i = 0; i < 120; ++i) sim.at(i, 2) = 0.7;
    const KlComparison r2 = kl_ratio(lm, real, sim);
    CHECK(r2.variance_floored);
    CHECK(r2.kl_original < 1.0);
}

TEST_CASE("degradation_study: grid shape, shared column, determinism") {
    const sacpolicy::Agent policy = pendulum_policy(7);
    const std::vector<double> scales{1.0, 1.5};
    const std::vector<std::uint64_t> seeds{1, 2, 3};

    const DegradationTable table =
        degradation_study(policy, envsim::Family::pendulum, scales, 2, seeds);

    REQUIRE(table.axes.size() == 3);  // gravity, length, mass
    REQUIRE(table.cells.size() == 3);
    for (const auto& row : table.cells) REQUIRE(row.size() == scales.size());
    CHECK(table.episodes == 2);
    CHECK(table.seeds == seeds);

    SUBCASE("scale-1.0 column is one home value across axes") {
        for (std::size_t r = 1; r < table.cells.size(); ++r) {
            CHECK(table.cells[r][0].mean == table.cells[0][0].mean);
            CHECK(table.cells[r][0].stddev == table.cells[0][0].stddev);
        }
        // Pendulum rewards are <= 0 by construction.
        CHECK(table.cells[0][0].mean < 0.0);
    }

    SUBCASE("perturbed columns actually depend on the axis") {
        bool any_differ = false;
        for (std::size_t r = 1; r < table.cells.size(); ++r) {
            if (table.cells[r][1].mean != table.cells[0][1].mean) any_differ = true;
        }
        CHECK(any_differ);
    }

    SUBCASE("repeat run is bitwise identical") {
        const DegradationTable again =
            degradation_study(policy, envsim::Family::pendulum, scales, 2, seeds);
        for (std::size_t r = 0; r < table.cells.size(); ++r) {
            for (std::size_t c = 0; c < table.cells[r].size(); ++c) {
                CHECK(table.cells[r][c].mean == again.cells[r][c].mean);
                CHECK(table.cells[r][c].stddev == again.cells[r][c].stddev);
            }
        }
    }

    SUBCASE("validation") {
        CHECK_THROWS_AS(degradation_study(policy, envsim::Family::pendulum, {}, 2, seeds),
                        ValidationError);
        CHECK_THROWS_AS(degradation_study(policy, envsim::Family::pendulum, scales, 2, {}),
                        ValidationError);
        CHECK_THROWS_AS(degradation_study(policy, envsim::Family::pendulum, scales, 0, seeds),
                        ValidationError);
    }
}

TEST_CASE("table exports: CSV layout and JSON round-trip") {
    GapReport g1;
    g1.family = envsim::Family::pendulum;
    g1.axis = envsim::Perturbation::gravity;
    g1.seed = 9;
    g1.cells = {{1.0, 0.0, 0.0, 0.0, 0.0, 200, 200, 2, false},
                {2.0, 0.25, 1.5, 1.2, 0.8, 200, 200, 2, false}};
    GapReport g2 = g1;
    g2.axis = envsim::Perturbation::mass;
    g2.cells[1].m_identity_gap = 0.5;

    SUBCASE("gap CSV: rows are axes, columns are scales") {
        CHECK(gap_table_csv({g1, g2}, GapMetric::m_identity_gap) ==
              "axis,1,2\ngravity,0,0.25\nmass,0,0.5\n");
        CHECK(gap_table_csv({g1, g2}, GapMetric::kl_ratio) ==
              "axis,1,2\ngravity,0,0.8\nmass,0,0.8\n");

        GapReport bad = g2;
        bad.cells.pop_back();
        CHECK_THROWS_AS(gap_table_csv({g1, bad}, GapMetric::kl_ratio), ValidationError);
        CHECK_THROWS_AS(gap_table_csv({}, GapMetric::kl_ratio), ValidationError);
    }

    SUBCASE("gap JSON carries every field") {
        const auto parsed = nlohmann::json::parse(gap_report_json({g1, g2}));
        REQUIRE(parsed.size() == 2);
        CHECK(parsed[0]["axis"] == "gravity");
        CHECK(parsed[0]["family"] == "pendulum");
        CHECK(parsed[0]["seed"] == 9);
        CHECK(parsed[0]["estimator"] == "diag_gaussian");
        CHECK(parsed[0]["cells"][1]["kl_latent"] == 1.2);
        CHECK(parsed[0]["cells"][1]["n_real"] == 200);
        CHECK(parsed[1]["cells"][1]["m_identity_gap"] == 0.5);
        CHECK(parsed[0]["cells"][0]["variance_floored"] == false);
    }

    SUBCASE("degradation CSV and JSON") {
        DegradationTable t;
        t.family = envsim::Family::pendulum;
        t.axes = {envsim::Perturbation::gravity};
        t.scales = {1.0, 2.0};
        t.cells = {{{-10.0, 1.0}, {-20.0, 2.0}}};
        t.episodes = 4;
        t.seeds = {1, 2};
        CHECK(degradation_csv(t) == "axis,1,2\ngravity,-10±1,-20±2\n");

        const auto parsed = nlohmann::json::parse(degradation_json(t));
        CHECK(parsed["family"] == "pendulum");
        CHECK(parsed["axes"][0] == "gravity");
        CHECK(parsed["cells"][0][1]["mean"] == -20.0);
        CHECK(parsed["cells"][0][1]["std"] == 2.0);
        CHECK(parsed["episodes"] == 4);
    }
}
