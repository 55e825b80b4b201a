#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <vector>

#include "s2rl/errors.hpp"
#include "s2rl/worldmodel.hpp"

using namespace s2rl;
using namespace s2rl::worldmodel;
using datastore::Transition;
using numgrad::Array;

namespace {

// Linear system fixture: s' = 0.9 s + 0.1 a per coordinate,
// r = s0 - 0.5 a1. Deterministic, two state dims, two action dims.
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

EnsembleConfig small_config(std::uint64_t seed = 0) {
    EnsembleConfig cfg;
    cfg.n_members = 3;
    cfg.n_elites = 2;
    cfg.hidden = {32, 32};
    cfg.batch_size = 64;
    cfg.max_epochs = 60;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("normalizer round-trip and duplication invariance") {
    RandomStream rng(5);
    Array rows({40, 3});
    for (std::size_t i = 0; i < rows.numel(); ++i) rows.at(i) = rng.normal() * 3 + 1;
    Normalizer nm = Normalizer::fit(rows);
    Array back = nm.denormalize(nm.normalize(rows));
    for (std::size_t i = 0; i < rows.numel(); ++i) {
        CHECK(back.at(i) == doctest::Approx(rows.at(i)).epsilon(1e-12));
    }

    // duplicating every row leaves the statistics unchanged
    Array twice({80, 3});
    for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 3; ++j) {
            twice.at(i, j) = rows.at(i, j);
            twice.at(40 + i, j) = rows.at(i, j);
        }
    }
    Normalizer nm2 = Normalizer::fit(twice);
    for (int j = 0; j < 3; ++j) {
        CHECK(nm2.mean.at(static_cast<std::size_t>(j)) ==
              doctest::Approx(nm.mean.at(static_cast<std::size_t>(j))).epsilon(1e-12));
        CHECK(nm2.std.at(static_cast<std::size_t>(j)) ==
              doctest::Approx(nm.std.at(static_cast<std::size_t>(j))).epsilon(1e-12));
    }

    // constant column is floored, not zero
    Array flat({10, 1});
    Normalizer nm3 = Normalizer::fit(flat);
    CHECK(nm3.std.at(0) == 1e-6);
}

TEST_CASE("ensemble learns the linear system") {
    std::vector<Transition> data = linear_dataset(2000, 42);
    auto [model, report] = train_ensemble(data, small_config(7));

    CHECK(model.trained);
    CHECK(model.members.size() == 3);
    REQUIRE(report.elites.size() == 2);
    for (int e : report.elites) {
        CHECK(e >= 0);
        CHECK(e < 3);
        CHECK(std::isfinite(report.best_nll[static_cast<std::size_t>(e)]));
    }
    // elites are the lowest-NLL members
    double worst_elite = -1e18, best_non_elite = 1e18;
    for (int m = 0; m < 3; ++m) {
        bool is_elite = std::find(report.elites.begin(), report.elites.end(), m) !=
                        report.elites.end();
        double nll = report.best_nll[static_cast<std::size_t>(m)];
        if (is_elite) worst_elite = std::max(worst_elite, nll);
        else best_non_elite = std::min(best_non_elite, nll);
    }
    CHECK(worst_elite <= best_non_elite);

    // holdout one-step mean predictions: MSE < 1e-3
    RandomStream rng(99);
    double mse = 0.0;
    int count = 0;
    for (int i = 0; i < 200; ++i) {
        Array s = Array::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        Array a = Array::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        Transition truth = linear_step(s, a);
        auto [s_next, r] = predict(model, s, a, rng, PredictMode::mean);
        for (int j = 0; j < 2; ++j) {
            double d = s_next.at(static_cast<std::size_t>(j)) -
                       truth.s_next.at(static_cast<std::size_t>(j));
            mse += d * d;
            ++count;
        }
        CHECK(std::abs(s_next.at(0) - truth.s_next.at(0)) < 0.05);
    }
    CHECK(mse / count < 1e-3);
}

TEST_CASE("training rejects bad inputs") {
    std::vector<Transition> tiny = linear_dataset(100, 1);
    CHECK_THROWS_AS(train_ensemble(tiny, small_config()), ValidationError);

    EnsembleConfig bad = small_config();
    bad.n_elites = 5;
    CHECK_THROWS_AS(train_ensemble(linear_dataset(2000, 1), bad), ValidationError);

    // constant targets: s' == s, r == 0 everywhere
    std::vector<Transition> frozen;
    RandomStream rng(3);
    for (int i = 0; i < 700; ++i) {
        Array s = Array::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        frozen.push_back(Transition{s, Array::vec({0.0, 0.0}), 0.0, s, false});
    }
    CHECK_THROWS_AS(train_ensemble(frozen, small_config()), TrainingError);
}

TEST_CASE("predict modes and clamp contract") {
    std::vector<Transition> data = linear_dataset(1200, 8);
    EnsembleConfig cfg = small_config(2);
    cfg.max_epochs = 10;
    auto [model, report] = train_ensemble(data, cfg);

    Array s = Array::vec({0.3, -0.2}), a = Array::vec({0.5, 0.1});
    // mean mode is deterministic once the member draw is fixed by the stream
    RandomStream r1(5), r2(5);
    auto p1 = predict(model, s, a, r1, PredictMode::mean);
    auto p2 = predict(model, s, a, r2, PredictMode::mean);
    CHECK(p1.first == p2.first);
    CHECK(p1.second == p2.second);

    // log-variances respect the clamp interval
    GaussianHead head = member_head(model, 0, Array({1, 2}, {0.3, -0.2}), Array({1, 2}, {0.5, 0.1}));
    for (std::size_t i = 0; i < head.log_variance.numel(); ++i) {
        CHECK(head.log_variance.at(i) >= numgrad::kLogVarMin);
        CHECK(head.log_variance.at(i) <= numgrad::kLogVarMax);
    }

    EnsembleModel untrained;
    CHECK_THROWS_AS(predict(untrained, s, a, r1, PredictMode::mean), ValidationError);
    CHECK_THROWS_AS(predict(model, Array::vec({1.0}), a, r1, PredictMode::mean),
                    DimensionError);
}

TEST_CASE("model rollouts count, chain and stay deterministic") {
    std::vector<Transition> data = linear_dataset(1200, 11);
    EnsembleConfig cfg = small_config(3);
    cfg.max_epochs = 10;
    auto [model, report] = train_ensemble(data, cfg);

    datastore::Policy policy = [](const Array& obs, RandomStream& rng) {
        return Array::vec({rng.uniform(-1, 1), 0.5 * obs.at(0)});
    };

    Array starts({64, 2});
    RandomStream srng(4);
    for (std::size_t i = 0; i < starts.numel(); ++i) starts.at(i) = srng.uniform(-1, 1);

    RandomStream ra(21), rb(21);
    RolloutResult one = model_rollout(model, policy, starts, 1, ra);
    CHECK(one.transitions.size() == 64);
    CHECK(one.truncations == 0);
    for (const Transition& t : one.transitions) CHECK_FALSE(t.done);

    RolloutResult again = model_rollout(model, policy, starts, 1, rb);
    CHECK(one.transitions == again.transitions);

    // batch-layout independence: the first start's rollout is the same
    // whether or not other starts are present
    RandomStream rc(21);
    Array solo({1, 2}, {starts.at(0, 0), starts.at(0, 1)});
    RolloutResult lone = model_rollout(model, policy, solo, 1, rc);
    CHECK(lone.transitions[0] == one.transitions[0]);

    RandomStream rd(33);
    RolloutResult deep = model_rollout(model, policy, starts, 5, rd);
    CHECK(deep.transitions.size() + static_cast<std::size_t>(deep.truncations) == 64 * 5);
    // within one start, transitions chain
    const Transition& t0 = deep.transitions[0];
    const Transition& t1 = deep.transitions[1];
    CHECK(t0.s_next == t1.s);

    CHECK_THROWS_AS(model_rollout(model, policy, starts, 0, rd), ValidationError);
}

TEST_CASE("rollout error compounds with depth on the linear fixture") {
    std::vector<Transition> data = linear_dataset(2000, 13);
    auto [model, report] = train_ensemble(data, small_config(5));

    datastore::Policy policy = [](const Array&, RandomStream& rng) {
        return Array::vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    };

    // evolve the true rule from the same start with the same recorded
    // actions and measure how far the model trajectory has drifted from
    // it; accumulated divergence grows with depth
    RandomStream srng(17);
    const int n = 256;
    Array starts({n, 2});
    for (std::size_t i = 0; i < starts.numel(); ++i) starts.at(i) = srng.uniform(-1, 1);

    RandomStream roll_rng(55);
    RolloutResult roll = model_rollout(model, policy, starts, 5, roll_rng, PredictMode::sample);
    REQUIRE(roll.truncations == 0);
    REQUIRE(roll.transitions.size() == static_cast<std::size_t>(n) * 5);

    double err1 = 0.0, err5 = 0.0;
    for (int i = 0; i < n; ++i) {
        // true trajectory driven by the same action sequence
        Array s({2});
        s.at(std::size_t{0}) = starts.at(i, 0);
        s.at(std::size_t{1}) = starts.at(i, 1);
        for (int t = 0; t < 5; ++t) {
            const Transition& tr = roll.transitions[static_cast<std::size_t>(i) * 5 + t];
            s = linear_step(s, tr.a).s_next;
            double e = std::abs(tr.s_next.at(0) - s.at(0)) +
                       std::abs(tr.s_next.at(1) - s.at(1));
            if (t == 0) err1 += e;
            if (t == 4) err5 += e;
        }
    }
    CHECK(err5 / n > err1 / n);
}

TEST_CASE("disagreement is larger far outside the training range") {
    std::vector<Transition> data = linear_dataset(2000, 19);
    auto [model, report] = train_ensemble(data, small_config(9));

    RandomStream rng(23);
    const int n = 128;
    Array s_in({n, 2}), a_in({n, 2}), s_out({n, 2});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 2; ++j) {
            s_in.at(i, j) = rng.uniform(-1, 1);
            a_in.at(i, j) = rng.uniform(-1, 1);
            s_out.at(i, j) = s_in.at(i, j) * 10.0;
        }
    }
    Array d_in = ensemble_disagreement(model, s_in, a_in);
    Array d_out = ensemble_disagreement(model, s_out, a_in);
    double mean_in = 0, mean_out = 0;
    for (int i = 0; i < n; ++i) {
        mean_in += d_in.at(i, 0);
        mean_out += d_out.at(i, 0);
    }
    CHECK(mean_out / n > mean_in / n);
}

TEST_CASE("model checkpoints round-trip") {
    std::vector<Transition> data = linear_dataset(1200, 29);
    EnsembleConfig cfg = small_config(12);
    cfg.max_epochs = 5;
    auto [model, report] = train_ensemble(data, cfg);

    std::string path = "/tmp/s2rl_test_model.bin";
    save_model(path, model);
    EnsembleModel back = load_model(path);
    CHECK(back.obs_dim == model.obs_dim);
    CHECK(back.act_dim == model.act_dim);
    CHECK(back.elites == model.elites);
    for (std::size_t m = 0; m < model.members.size(); ++m) {
        for (int l = 0; l < model.members[m].n_layers(); ++l) {
            CHECK(back.members[m].weights[l] == model.members[m].weights[l]);
            CHECK(back.members[m].biases[l] == model.members[m].biases[l]);
        }
    }

    // identical predictions after reload
    RandomStream r1(3), r2(3);
    Array s = Array::vec({0.1, 0.2}), a = Array::vec({-0.3, 0.4});
    auto p1 = predict(model, s, a, r1, PredictMode::sample);
    auto p2 = predict(back, s, a, r2, PredictMode::sample);
    CHECK(p1.first == p2.first);
    CHECK(p1.second == p2.second);
    std::remove(path.c_str());
}
