#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <vector>

#include "s2rl/envsim.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/latentspace.hpp"
#include "s2rl/worldmodel.hpp"

using namespace s2rl;
using namespace s2rl::latentspace;
using datastore::Transition;
using numgrad::Array;

namespace {

// Same linear system as the worldmodel tests: s' = 0.9 s + 0.1 a,
// r = s0 - 0.5 a1, two state and two action dims.
Transition linear_step(const Array& s, const Array& a) {
    Transition t;
    t.s = s;
    t.a = a;
    t.s_next = Array({2});
    for (int j = 0; j < 2; ++j) {
        t.s_next.at(static_cast<std::size_t>(j)) =
            0.9 * s.at(static_cast<std::size_t>(j)) + 0.1 * a.at(static_cast<std::size_t>(j));
    }
    t.r = s.at(0) - 0.5 * a.at(1);
    return t;
}

std::vector<Transition> linear_dataset(int n, std::uint64_t seed) {
    RandomStream rng(seed);
    std::vector<Transition> out;
    for (int i = 0; i < n; ++i) {
        Array s = Array::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        Array a = Array::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        out.push_back(linear_step(s, a));
    }
    return out;
}

worldmodel::EnsembleModel trained_single(std::uint64_t seed = 7) {
    worldmodel::EnsembleConfig cfg;
    cfg.n_members = 3;
    cfg.n_elites = 2;
    cfg.hidden = {32, 32};
    cfg.batch_size = 64;
    cfg.max_epochs = 30;
    cfg.seed = seed;
    auto [model, report] = worldmodel::train_ensemble(linear_dataset(1500, 42), cfg);
    return model;
}

// The real domain observes the same underlying system through a shift:
// o = s + c. Transitions recorded in observation coordinates.
datastore::Batch batch_from(const std::vector<Transition>& data, int lo, int hi,
                            const Array& shift) {
    std::vector<Transition> rows;
    for (int i = lo; i < hi; ++i) {
        Transition t = data[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < shift.numel(); ++j) {
            t.s.at(j) += shift.at(j);
            t.s_next.at(j) += shift.at(j);
        }
        rows.push_back(t);
    }
    return datastore::stack(rows);
}

double mean_map_gap(const LatentModel& model, const Array& obs) {
    Array z_sim = encode(model, Role::sim, obs);
    Array z_real = encode(model, Role::real, obs);
    Array mapped = cross_map(model, z_real);
    double acc = 0;
    for (int i = 0; i < obs.rows(); ++i) {
        double sq = 0;
        for (int j = 0; j < model.dim_latent; ++j) {
            double d = z_sim.at(i, j) - mapped.at(i, j);
            sq += d * d;
        }
        acc += std::sqrt(sq);
    }
    return acc / obs.rows();
}

double params_gap(const numgrad::MlpParams& a, const numgrad::MlpParams& b) {
    double g = 0;
    for (int l = 0; l < a.n_layers(); ++l) {
        for (std::size_t i = 0; i < a.weights[l].numel(); ++i) {
            g += std::abs(a.weights[l].at(i) - b.weights[l].at(i));
        }
        for (std::size_t i = 0; i < a.biases[l].numel(); ++i) {
            g += std::abs(a.biases[l].at(i) - b.biases[l].at(i));
        }
    }
    return g;
}

}  // namespace

TEST_CASE("post-init maps are exact identities") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::real, 4);
    CHECK(lm.dim_latent == 4);
    CHECK(lm.init_side == Role::real);

    RandomStream rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Array s = Array::vec({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        Array z = encode(lm, Role::real, s);
        REQUIRE(z.numel() == 4);
        CHECK(z.at(0) == s.at(0));
        CHECK(z.at(1) == s.at(1));
        CHECK(z.at(2) == 0.0);
        CHECK(z.at(3) == 0.0);
        CHECK(encode(lm, Role::sim, s) == z);

        Array back = decode(lm, Role::real, z);
        CHECK(back == s);
        CHECK(decode(lm, Role::sim, z) == s);

        Array zz = Array::vec({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        CHECK(cross_map(lm, zz) == zz);
        CHECK(cross_map(lm, encode(lm, Role::real, s)) == encode(lm, Role::sim, s));
    }

    // batch form agrees with row form
    Array batch({3, 2}, {0.1, 0.2, -0.3, 0.4, 0.5, -0.6});
    Array zb = encode(lm, Role::sim, batch);
    CHECK(zb.rows() == 3);
    CHECK(zb.cols() == 4);
    CHECK(zb.at(1, 0) == -0.3);
    CHECK(zb.at(1, 2) == 0.0);

    CHECK_THROWS_AS(encode(lm, Role::sim, Array::vec({1.0, 2.0, 3.0})), DimensionError);
    CHECK_THROWS_AS(decode(lm, Role::sim, Array::vec({1.0, 2.0})), DimensionError);
    CHECK_THROWS_AS(init_from_single(single, Role::sim, 1), ValidationError);
}

TEST_CASE("post-init latent predictions match the single model") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::sim, 4);

    RandomStream rng(11);
    double max_err = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Array s = Array::vec({rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
        Array a = Array::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        RandomStream r1(trial), r2(trial);
        auto [s_next, r] = worldmodel::predict(single, s, a, r1, worldmodel::PredictMode::mean);
        Array z = encode(lm, Role::sim, s);
        auto [z_next, r_lat] = worldmodel::predict(lm.dynamics, z, a, r2,
                                                   worldmodel::PredictMode::mean);
        max_err = std::max(max_err, std::abs(r - r_lat));
        for (int j = 0; j < 2; ++j) {
            max_err = std::max(max_err, std::abs(s_next.at(static_cast<std::size_t>(j)) -
                                                 z_next.at(static_cast<std::size_t>(j))));
        }
        // padded coordinates predict zero change from zero
        CHECK(std::abs(z_next.at(2)) < 1e-12);
        CHECK(std::abs(z_next.at(3)) < 1e-12);
    }
    CHECK(max_err < 1e-6);
}

TEST_CASE("post-init losses: recon and corr vanish, total is the weighted sum") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::sim, 4);
    std::vector<Transition> data = linear_dataset(64, 5);
    datastore::Batch bs = batch_from(data, 0, 32, Array::vec({0, 0}));
    datastore::Batch br = batch_from(data, 32, 64, Array::vec({0, 0}));

    LossWeights w;
    w.w_pred = 0.7;
    w.w_recon = 1.3;
    w.w_corr = 2.1;
    LatentLossReport rep = latent_losses(lm, bs, br, w);
    CHECK(rep.recon_sim == 0.0);
    CHECK(rep.recon_real == 0.0);
    CHECK(rep.corr == 0.0);
    CHECK(std::isfinite(rep.pred_sim));
    CHECK(std::isfinite(rep.pred_real));
    CHECK(rep.total ==
          doctest::Approx(0.7 * (rep.pred_sim + rep.pred_real) +
                          1.3 * (rep.recon_sim + rep.recon_real) + 2.1 * rep.corr)
              .epsilon(1e-12));

    LossWeights zero;
    zero.w_pred = zero.w_recon = zero.w_corr = 0.0;
    CHECK_THROWS_AS(latent_losses(lm, bs, br, zero), ValidationError);
    LossWeights neg;
    neg.w_pred = -1.0;
    CHECK_THROWS_AS(latent_losses(lm, bs, br, neg), ValidationError);
}

TEST_CASE("correspondence gradient gate blocks the encoders") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::sim, 4);
    // break the encoder tie so corr is nonzero and has gradients
    RandomStream noise(9);
    Array& w_last = lm.p_real.weights.back();
    for (std::size_t i = 0; i < w_last.numel(); ++i) w_last.at(i) = 0.05 * noise.normal();

    std::vector<Transition> data = linear_dataset(64, 6);
    datastore::Batch bs = batch_from(data, 0, 32, Array::vec({0, 0}));
    datastore::Batch br = batch_from(data, 32, 64, Array::vec({0, 0}));

    LossWeights w;
    w.w_pred = 0.0;
    w.w_recon = 0.0;
    w.w_corr = 1.0;
    w.grad_to_encoders_from_corr = 0.0;

    LatentModel before = lm;
    LatentOptState opt = make_opt_state(lm);
    LatentLossReport rep = latent_update(lm, bs, br, w, opt);
    CHECK_FALSE(rep.skipped);
    CHECK(rep.corr > 0.0);
    // encoders and decoders untouched, m moved
    CHECK(params_gap(lm.p_sim, before.p_sim) == 0.0);
    CHECK(params_gap(lm.p_real, before.p_real) == 0.0);
    CHECK(params_gap(lm.q_sim, before.q_sim) == 0.0);
    CHECK(params_gap(lm.q_real, before.q_real) == 0.0);
    CHECK(params_gap(lm.m, before.m) > 0.0);

    // with the gate open the encoders move too
    LatentModel lm2 = before;
    LatentOptState opt2 = make_opt_state(lm2);
    w.grad_to_encoders_from_corr = 1.0;
    latent_update(lm2, bs, br, w, opt2);
    CHECK(params_gap(lm2.p_real, before.p_real) > 0.0);
}

TEST_CASE("prediction-only updates leave decoders and m untouched") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::sim, 4);
    std::vector<Transition> data = linear_dataset(64, 8);
    datastore::Batch bs = batch_from(data, 0, 32, Array::vec({0, 0}));
    datastore::Batch br = batch_from(data, 32, 64, Array::vec({0.5, -0.5}));

    LossWeights w;
    w.w_pred = 1.0;
    w.w_recon = 0.0;
    w.w_corr = 0.0;
    LatentModel before = lm;
    LatentOptState opt = make_opt_state(lm);
    LatentLossReport rep = latent_update(lm, bs, br, w, opt);
    CHECK_FALSE(rep.skipped);
    CHECK(params_gap(lm.q_sim, before.q_sim) == 0.0);
    CHECK(params_gap(lm.q_real, before.q_real) == 0.0);
    CHECK(params_gap(lm.m, before.m) == 0.0);
    // dynamics members train
    CHECK(params_gap(lm.dynamics.members[0], before.dynamics.members[0]) > 0.0);
}

TEST_CASE("frozen maps: only the dynamics steps") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::sim, 2);  // dim_latent == obs_dim
    std::vector<Transition> data = linear_dataset(64, 12);
    datastore::Batch bs = batch_from(data, 0, 32, Array::vec({0, 0}));
    datastore::Batch br = batch_from(data, 32, 64, Array::vec({0, 0}));

    // identity with no padding: encode is exactly the input
    Array s = Array::vec({0.3, -0.7});
    CHECK(encode(lm, Role::sim, s) == s);

    LatentModel before = lm;
    LatentOptState opt = make_opt_state(lm);
    LossWeights w;
    LatentLossReport rep = latent_update(lm, bs, br, w, opt, {}, /*update_maps=*/false);
    CHECK_FALSE(rep.skipped);
    CHECK(params_gap(lm.p_sim, before.p_sim) == 0.0);
    CHECK(params_gap(lm.p_real, before.p_real) == 0.0);
    CHECK(params_gap(lm.q_sim, before.q_sim) == 0.0);
    CHECK(params_gap(lm.m, before.m) == 0.0);
    CHECK(params_gap(lm.dynamics.members[0], before.dynamics.members[0]) > 0.0);
}

TEST_CASE("update reports pre-step losses and skips on non-finite data") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::sim, 4);
    std::vector<Transition> data = linear_dataset(64, 14);
    datastore::Batch bs = batch_from(data, 0, 32, Array::vec({0, 0}));
    datastore::Batch br = batch_from(data, 32, 64, Array::vec({1, 1}));

    LossWeights w;
    LatentModel copy = lm;
    LatentOptState opt = make_opt_state(lm);
    LatentLossReport from_update = latent_update(lm, bs, br, w, opt);
    LatentLossReport fresh = latent_losses(copy, bs, br, w);
    CHECK(from_update.total == fresh.total);
    CHECK(from_update.pred_sim == fresh.pred_sim);
    CHECK(from_update.corr == fresh.corr);

    datastore::Batch poison = bs;
    poison.s.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    LatentModel before = lm;
    LatentLossReport rep = latent_update(lm, poison, br, w, opt);
    CHECK(rep.skipped);
    CHECK(params_gap(lm.p_sim, before.p_sim) == 0.0);
    CHECK(params_gap(lm.dynamics.members[0], before.dynamics.members[0]) == 0.0);
}

TEST_CASE("training on a shifted domain pair teaches m the bridge") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::sim, 4);
    const Array shift = Array::vec({3.0, 3.0});

    std::vector<Transition> pool = linear_dataset(512, 21);
    datastore::Batch bs = batch_from(pool, 0, 256, Array::vec({0, 0}));
    datastore::Batch br = batch_from(pool, 256, 512, shift);

    LossWeights w;  // all three families active, encoder gate closed
    LatentOptState opt = make_opt_state(lm);
    numgrad::AdamConfig fast;
    fast.lr = 1e-3;
    double first_total = 0, last_total = 0;
    for (int step = 0; step < 500; ++step) {
        LatentLossReport rep = latent_update(lm, bs, br, w, opt, fast);
        REQUIRE_FALSE(rep.skipped);
        if (step == 0) first_total = rep.total;
        if (step == 499) last_total = rep.total;
    }
    CHECK(last_total < 0.5 * first_total);

    // the two encoders separated to explain the domain shift...
    Array probe({64, 2});
    RandomStream prng(31);
    for (std::size_t i = 0; i < probe.numel(); ++i) probe.at(i) = prng.uniform(-1, 1);
    Array z_sim = encode(lm, Role::sim, probe);
    Array z_real = encode(lm, Role::real, probe);
    double sep = 0;
    for (int i = 0; i < 64; ++i) {
        double sq = 0;
        for (int j = 0; j < 4; ++j) {
            double d = z_sim.at(i, j) - z_real.at(i, j);
            sq += d * d;
        }
        sep += std::sqrt(sq) / 64;
    }
    CHECK(sep > 0.01);

    // ...and the trained m bridges them better than the identity map
    double with_m = mean_map_gap(lm, probe);
    LatentModel identity_m = lm;
    for (Array& wt : identity_m.m.weights) {
        for (std::size_t i = 0; i < wt.numel(); ++i) wt.at(i) = 0.0;
    }
    for (Array& bt : identity_m.m.biases) {
        for (std::size_t i = 0; i < bt.numel(); ++i) bt.at(i) = 0.0;
    }
    double without_m = mean_map_gap(identity_m, probe);
    CHECK(with_m < 0.9 * without_m);

    // collapse guard: observable coordinates keep variance
    for (int j = 0; j < 2; ++j) {
        double mu = 0, var = 0;
        for (int i = 0; i < 64; ++i) mu += z_sim.at(i, j) / 64;
        for (int i = 0; i < 64; ++i) {
            var += (z_sim.at(i, j) - mu) * (z_sim.at(i, j) - mu) / 64;
        }
        CHECK(var > 1e-6);
    }
}

TEST_CASE("latent rollouts: shape, determinism, init equivalence") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::real, 4);

    // policy reads only the first two (observable) coordinates and draws
    // the same randomness regardless of the input's width
    datastore::Policy policy = [](const Array& obs, RandomStream& rng) {
        return Array::vec({0.5 * obs.at(0) + 0.1 * rng.normal(), -0.3 * obs.at(1)});
    };

    Array starts({32, 2});
    RandomStream srng(41);
    for (std::size_t i = 0; i < starts.numel(); ++i) starts.at(i) = srng.uniform(-1, 1);

    RandomStream r1(8), r2(8), r3(8);
    worldmodel::RolloutResult lat = latent_rollout(lm, policy, starts, Role::real, 1, r1);
    CHECK(lat.transitions.size() == 32);
    CHECK(lat.transitions[0].s.numel() == 4);
    CHECK(lat.transitions[0].s_next.numel() == 4);

    worldmodel::RolloutResult again = latent_rollout(lm, policy, starts, Role::real, 1, r2);
    CHECK(lat.transitions == again.transitions);

    // post-init equivalence with the raw-space rollout on shared coordinates
    worldmodel::RolloutResult raw = worldmodel::model_rollout(single, policy, starts, 1, r3);
    REQUIRE(raw.transitions.size() == 32);
    double max_err = 0;
    for (std::size_t i = 0; i < 32; ++i) {
        const Transition& a = lat.transitions[i];
        const Transition& b = raw.transitions[i];
        CHECK(a.a == b.a);
        max_err = std::max(max_err, std::abs(a.r - b.r));
        for (int j = 0; j < 2; ++j) {
            max_err = std::max(max_err,
                               std::abs(a.s_next.at(static_cast<std::size_t>(j)) -
                                        b.s_next.at(static_cast<std::size_t>(j))));
        }
    }
    CHECK(max_err < 1e-6);

    CHECK_THROWS_AS(latent_rollout(lm, policy, Array({32, 3}), Role::real, 1, r1),
                    DimensionError);
}

TEST_CASE("rho_bar pushes environment resets through the matching encoder") {
    // hand-built pendulum-dimensioned ensemble (contents irrelevant here)
    worldmodel::EnsembleModel single;
    single.obs_dim = 3;
    single.act_dim = 1;
    single.config.n_members = 1;
    single.config.n_elites = 1;
    single.elites = {0};
    single.members.push_back(numgrad::mlp_zeros({4, 8, 8}));
    single.in_norm = {Array({4}), Array::full({4}, 1.0)};
    single.out_norm = {Array({4}), Array::full({4}, 1.0)};
    single.trained = true;
    LatentModel lm = init_from_single(single, Role::real, 5);

    envsim::EnvSpec spec;
    spec.family = envsim::Family::pendulum;
    spec.role = envsim::Role::real;
    spec.seed = 77;
    envsim::Environment env = envsim::make_env(spec);

    RandomStream r1(13), r2(13);
    Array z = rho_bar_sample(lm, env, r1);
    Array expected = encode(lm, Role::real, env.reset(r2).observation);
    CHECK(z == expected);
    CHECK(z.numel() == 5);

    // mismatched observation width is rejected
    envsim::EnvSpec pm;
    pm.family = envsim::Family::pointmass;
    pm.role = envsim::Role::real;
    envsim::Environment wide = envsim::make_env(pm);
    RandomStream r3(1);
    CHECK_THROWS_AS(rho_bar_sample(lm, wide, r3), DimensionError);
}

TEST_CASE("latent checkpoints round-trip") {
    worldmodel::EnsembleModel single = trained_single();
    LatentModel lm = init_from_single(single, Role::real, 4);
    lm.weights.w_corr = 2.5;
    // make the maps non-trivial before saving
    std::vector<Transition> data = linear_dataset(64, 17);
    datastore::Batch bs = batch_from(data, 0, 32, Array::vec({0, 0}));
    datastore::Batch br = batch_from(data, 32, 64, Array::vec({1, 0}));
    LatentOptState opt = make_opt_state(lm);
    for (int i = 0; i < 3; ++i) latent_update(lm, bs, br, lm.weights, opt);

    std::string path = "/tmp/s2rl_test_latent.bin";
    save_latent(path, lm);
    LatentModel back = load_latent(path);
    CHECK(back.obs_dim == lm.obs_dim);
    CHECK(back.act_dim == lm.act_dim);
    CHECK(back.dim_latent == lm.dim_latent);
    CHECK(back.init_side == lm.init_side);
    CHECK(back.weights.w_corr == 2.5);
    CHECK(params_gap(back.p_sim, lm.p_sim) == 0.0);
    CHECK(params_gap(back.p_real, lm.p_real) == 0.0);
    CHECK(params_gap(back.q_sim, lm.q_sim) == 0.0);
    CHECK(params_gap(back.q_real, lm.q_real) == 0.0);
    CHECK(params_gap(back.m, lm.m) == 0.0);
    CHECK(back.dynamics.elites == lm.dynamics.elites);
    for (std::size_t i = 0; i < lm.dynamics.members.size(); ++i) {
        CHECK(params_gap(back.dynamics.members[i], lm.dynamics.members[i]) == 0.0);
    }

    Array s = Array::vec({0.4, -0.9});
    CHECK(encode(back, Role::real, s) == encode(lm, Role::real, s));
    std::remove(path.c_str());
}
