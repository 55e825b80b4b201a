// Measures the reference returns behind datastore::reference_returns():
// trains model-free SAC on an unperturbed environment, then reports expert
// (converged, deterministic) and random-policy returns plus the episode
// spread that informs manifest tolerances.
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "s2rl/datagen.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/textio.hpp"

using namespace s2rl;

namespace {

double random_policy_return(const envsim::Environment& env, int episodes, RandomStream& rng,
                            double* std_out) {
    std::vector<double> rets;
    for (int ep = 0; ep < episodes; ++ep) {
        RandomStream ep_rng = rng.split(static_cast<std::uint64_t>(ep));
        envsim::EnvState state = env.reset(ep_rng);
        double ret = 0.0;
        while (true) {
            numgrad::Array a({env.action_dim()});
            for (std::size_t j = 0; j < a.numel(); ++j) {
                a.at(j) = ep_rng.uniform(-env.action_bound(), env.action_bound());
            }
            const envsim::StepResult sr = env.step(state, a);
            ret += sr.reward;
            if (sr.done) break;
            state = sr.next_state;
        }
        rets.push_back(ret);
    }
    double mean = 0.0;
    for (double r : rets) mean += r;
    mean /= rets.size();
    double s2 = 0.0;
    for (double r : rets) s2 += (r - mean) * (r - mean);
    *std_out = std::sqrt(s2 / (rets.size() - 1));
    return mean;
}

void describe(const char* label, const std::vector<double>& rets) {
    double mean = 0.0;
    for (double r : rets) mean += r;
    mean /= rets.size();
    double s2 = 0.0;
    for (double r : rets) s2 += (r - mean) * (r - mean);
    const double sd = std::sqrt(s2 / (rets.size() - 1));
    std::printf("%s: mean %.2f  std %.2f  (n=%zu)\n", label, mean, sd, rets.size());
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: calibrate <pendulum|pointmass> [max_steps] [seed]\n");
        return 2;
    }
    try {
        envsim::EnvSpec spec;
        spec.family = envsim::family_from_string(argv[1]);
        spec.role = envsim::Role::real;
        const int max_steps = argc > 2 ? static_cast<int>(parse_int(argv[2])) : 30000;
        const std::uint64_t seed = argc > 3 ? static_cast<std::uint64_t>(parse_int(argv[3])) : 0;

        const envsim::Environment env = envsim::make_env(spec);
        RandomStream rng(seed);

        double rand_std = 0.0;
        RandomStream rand_rng = rng.split(100);
        const double rand_mean = random_policy_return(env, 100, rand_rng, &rand_std);
        std::printf("random policy: mean %.2f  std %.2f\n", rand_mean, rand_std);

        datastore::OfflineGenConfig cfg;
        cfg.max_env_steps = max_steps;
        datastore::SacTrainerResult run = datastore::train_sac_model_free(
            spec, std::numeric_limits<double>::infinity(), rng, cfg);
        for (const auto& [step, ret] : run.evals) {
            std::printf("  step %6d  eval %.2f\n", step, ret);
        }

        // Final-policy returns, deterministic and stochastic, 100 episodes.
        std::vector<double> det, sto;
        const envsim::Environment home = envsim::make_env(spec);
        for (int ep = 0; ep < 100; ++ep) {
            det.push_back(datastore::eval_return(run.agent, home, 1,
                                                 sacpolicy::ActMode::deterministic,
                                                 rng.split(200, ep)));
            sto.push_back(datastore::eval_return(run.agent, home, 1,
                                                 sacpolicy::ActMode::stochastic,
                                                 rng.split(300, ep)));
        }
        describe("deterministic", det);
        describe("stochastic   ", sto);
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "calibrate: %s\n", e.what());
        return 1;
    }
}
