#include "s2rl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "s2rl/errors.hpp"

namespace s2rl::datastore {

namespace {

void check_gen_config(const OfflineGenConfig& cfg) {
    if (cfg.max_env_steps < 1) throw ValidationError("datagen: max_env_steps must be >= 1");
    if (cfg.warmup_steps < 0 || cfg.warmup_steps >= cfg.max_env_steps) {
        throw ValidationError("datagen: warmup_steps must lie in [0, max_env_steps)");
    }
    if (cfg.eval_every < 1) throw ValidationError("datagen: eval_every must be >= 1");
    if (cfg.eval_episodes < 1) throw ValidationError("datagen: eval_episodes must be >= 1");
    if (cfg.batch_size < 1) throw ValidationError("datagen: batch_size must be >= 1");
    if (!(cfg.medium_fraction > 0.0 && cfg.medium_fraction <= 1.0)) {
        throw ValidationError("datagen: medium_fraction must lie in (0, 1]");
    }
    if (cfg.stats_episodes < 1) throw ValidationError("datagen: stats_episodes must be >= 1");
}

std::vector<double> episode_returns(const sacpolicy::Agent& agent, const envsim::Environment& env,
                                    int episodes, sacpolicy::ActMode mode,
                                    const RandomStream& rng) {
    std::vector<double> rets;
    rets.reserve(episodes);
    for (int ep = 0; ep < episodes; ++ep) {
        RandomStream ep_rng = rng.split(static_cast<std::uint64_t>(ep));
        envsim::EnvState state = env.reset(ep_rng);
        double ret = 0.0;
        while (true) {
            const Array a = sacpolicy::act(agent, state.observation, mode, ep_rng);
            const envsim::StepResult sr = env.step(state, a);
            ret += sr.reward;
            if (sr.done) break;
            state = sr.next_state;
        }
        rets.push_back(ret);
    }
    return rets;
}

double mean_of(const std::vector<double>& xs) {
    double m = 0.0;
    for (const double x : xs) m += x;
    return m / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double s2 = 0.0;
    for (const double x : xs) s2 += (x - mean) * (x - mean);
    return std::sqrt(s2 / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::string to_string(Quality q) {
    return q == Quality::medium ? "medium" : "medium-replay";
}

Quality quality_from_string(const std::string& s) {
    if (s == "medium") return Quality::medium;
    if (s == "medium-replay") return Quality::medium_replay;
    throw ValidationError("unknown dataset quality '" + s + "'");
}

ReferenceReturns reference_returns(envsim::Family family) {
    // Measured with tools/calibrate on the unperturbed real-role
    // environments: seed 0, model-free SAC for 30k (pendulum) / 20k
    // (pointmass) env steps, final deterministic policy and the random
    // policy each evaluated over 100 episodes.
    if (family == envsim::Family::pendulum) return {-158.94, -1249.62};
    return {653.16, -12.82};
}

double medium_threshold(envsim::Family family, double fraction) {
    const ReferenceReturns ref = reference_returns(family);
    return ref.random + fraction * (ref.expert - ref.random);
}

double eval_return(const sacpolicy::Agent& agent, const envsim::Environment& env, int episodes,
                   sacpolicy::ActMode mode, const RandomStream& rng) {
    if (episodes < 1) throw ValidationError("eval_return: episodes must be >= 1");
    return mean_of(episode_returns(agent, env, episodes, mode, rng));
}

SacTrainerResult train_sac_model_free(const envsim::EnvSpec& spec, double stop_return,
                                      RandomStream& rng, const OfflineGenConfig& cfg) {
    check_gen_config(cfg);
    const envsim::Environment env = envsim::make_env(spec);
    const double bound = env.action_bound();

    sacpolicy::SacConfig scfg;
    scfg.obs_dim = env.obs_dim();
    scfg.act_dim = env.action_dim();
    scfg.action_bound = bound;
    scfg.hidden = cfg.hidden;
    scfg.lr = cfg.lr;
    scfg.seed = rng.split(0).seed();

    RandomStream act_rng = rng.split(1);
    RandomStream update_rng = rng.split(2);
    const RandomStream eval_rng = rng.split(3);

    SacTrainerResult out{sacpolicy::make_agent(scfg), {}, {}, 0, false};
    ReplayBuffer buffer(static_cast<std::size_t>(cfg.max_env_steps));

    envsim::EnvState state = env.reset(act_rng);
    for (int step = 1; step <= cfg.max_env_steps; ++step) {
        Array a({env.action_dim()});
        if (step <= cfg.warmup_steps) {
            for (std::size_t j = 0; j < a.numel(); ++j) a.at(j) = act_rng.uniform(-bound, bound);
        } else {
            a = sacpolicy::act(out.agent, state.observation, sacpolicy::ActMode::stochastic,
                               act_rng);
        }
        const envsim::StepResult sr = env.step(state, a);
        buffer.push({state.observation, a, sr.reward, sr.next_state.observation, sr.done});
        state = sr.done ? env.reset(act_rng) : sr.next_state;

        if (step > cfg.warmup_steps) {
            Batch batch = stack(sample_batch(buffer, cfg.batch_size, update_rng));
            // Episode ends are time limits, not terminal states; keep the
            // bootstrap so values stay horizon-free.
            for (int i = 0; i < batch.size(); ++i) batch.done.at(i, 0) = 0.0;
            sacpolicy::sac_update(out.agent, batch, update_rng);
        }

        out.steps_run = step;
        if (step % cfg.eval_every == 0 && step > cfg.warmup_steps) {
            const double ret =
                eval_return(out.agent, env, cfg.eval_episodes, sacpolicy::ActMode::deterministic,
                            eval_rng.split(static_cast<std::uint64_t>(step)));
            out.evals.emplace_back(step, ret);
            if (ret >= stop_return) {
                out.reached_stop = true;
                break;
            }
        }
    }
    out.replay = buffer.to_vector();
    return out;
}

OfflineDataset make_offline_dataset(const envsim::EnvSpec& spec, Quality quality, int size,
                                    RandomStream& rng, const OfflineGenConfig& cfg) {
    if (spec.role != envsim::Role::real) {
        throw ValidationError("make_offline_dataset: offline data is generated on the real side");
    }
    if (size < 1) throw ValidationError("make_offline_dataset: size must be >= 1");
    check_gen_config(cfg);

    const double threshold = medium_threshold(spec.family, cfg.medium_fraction);
    SacTrainerResult run = train_sac_model_free(spec, threshold, rng, cfg);
    if (!run.reached_stop) {
        const double best = run.evals.empty()
                                ? -std::numeric_limits<double>::infinity()
                                : std::max_element(run.evals.begin(), run.evals.end(),
                                                   [](const auto& a, const auto& b) {
                                                       return a.second < b.second;
                                                   })
                                      ->second;
        throw GenerationError("make_offline_dataset: SAC never reached the medium threshold " +
                              std::to_string(threshold) + " (best evaluation " +
                              std::to_string(best) + " in " + std::to_string(run.steps_run) +
                              " env steps)");
    }

    const envsim::Environment env = envsim::make_env(spec);
    const Policy frozen = [&run](const Array& obs, RandomStream& prng) {
        return sacpolicy::act(run.agent, obs, sacpolicy::ActMode::stochastic, prng);
    };

    OfflineDataset out{{}, {}, run.agent};
    if (quality == Quality::medium) {
        const int episodes = (size + spec.horizon - 1) / spec.horizon;
        RandomStream roll_rng = rng.split(7);
        const std::vector<Transition> data = collect_episodes(env, frozen, episodes, roll_rng);
        out.transitions.assign(data.begin(), data.begin() + size);
    } else {
        if (static_cast<int>(run.replay.size()) < size) {
            const int missing = size - static_cast<int>(run.replay.size());
            const int episodes = (missing + spec.horizon - 1) / spec.horizon;
            RandomStream roll_rng = rng.split(8);
            const std::vector<Transition> extra =
                collect_episodes(env, frozen, episodes, roll_rng);
            run.replay.insert(run.replay.end(), extra.begin(), extra.end());
        }
        out.transitions.assign(run.replay.begin(), run.replay.begin() + size);
    }

    // Generating-policy statistics under a pinned stochastic protocol,
    // independent of which rows landed in the dataset.
    const std::vector<double> stat_returns = episode_returns(
        run.agent, env, cfg.stats_episodes, sacpolicy::ActMode::stochastic, rng.split(9));

    out.manifest.env_spec = spec;
    out.manifest.generator = to_string(quality);
    out.manifest.transition_count = static_cast<std::int64_t>(out.transitions.size());
    out.manifest.policy_return_mean = mean_of(stat_returns);
    out.manifest.policy_return_std = sample_std(stat_returns, out.manifest.policy_return_mean);
    return out;
}

}  // namespace s2rl::datastore
