#include "s2rl/sacpolicy.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "s2rl/errors.hpp"
#include "s2rl/gaussian.hpp"
#include "s2rl/serialize.hpp"
#include "s2rl/tape.hpp"

namespace s2rl::sacpolicy {

namespace {

using numgrad::adam_init;
using numgrad::adam_step;
using numgrad::AdamConfig;
using numgrad::MlpVars;
using numgrad::Tape;
using numgrad::Var;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double stable_softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2) without catastrophic cancellation for saturated u.
double log_one_minus_tanh_sq(double u) {
    return 2.0 * (std::log(2.0) - u - stable_softplus(-2.0 * u));
}

void validate_config(const SacConfig& c) {
    if (c.obs_dim <= 0) throw ValidationError("sac: obs_dim must be positive");
    if (c.act_dim <= 0) throw ValidationError("sac: act_dim must be positive");
    if (c.action_bound <= 0) throw ValidationError("sac: action_bound must be positive");
    if (c.gamma < 0 || c.gamma >= 1) throw ValidationError("sac: gamma must be in [0, 1)");
    if (c.tau <= 0 || c.tau > 1) throw ValidationError("sac: tau must be in (0, 1]");
    if (c.lr <= 0) throw ValidationError("sac: lr must be positive");
    if (c.init_alpha <= 0) throw ValidationError("sac: init_alpha must be positive");
    for (int h : c.hidden) {
        if (h <= 0) throw ValidationError("sac: hidden sizes must be positive");
    }
}

std::vector<int> actor_sizes(const SacConfig& c) {
    std::vector<int> s{c.obs_dim};
    s.insert(s.end(), c.hidden.begin(), c.hidden.end());
    s.push_back(2 * c.act_dim);
    return s;
}

std::vector<int> critic_sizes(const SacConfig& c) {
    std::vector<int> s{c.obs_dim + c.act_dim};
    s.insert(s.end(), c.hidden.begin(), c.hidden.end());
    s.push_back(1);
    return s;
}

Array hstack(const Array& a, const Array& b) {
    const int n = a.rows(), ca = a.cols(), cb = b.cols();
    Array out({n, ca + cb});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ca; ++j) out.at(i, j) = a.at(i, j);
        for (int j = 0; j < cb; ++j) out.at(i, ca + j) = b.at(i, j);
    }
    return out;
}

void ema_params(MlpParams& target, const MlpParams& online, double tau) {
    for (int l = 0; l < target.n_layers(); ++l) {
        for (std::size_t i = 0; i < target.weights[l].numel(); ++i) {
            target.weights[l].at(i) =
                (1.0 - tau) * target.weights[l].at(i) + tau * online.weights[l].at(i);
        }
        for (std::size_t i = 0; i < target.biases[l].numel(); ++i) {
            target.biases[l].at(i) =
                (1.0 - tau) * target.biases[l].at(i) + tau * online.biases[l].at(i);
        }
    }
}

bool all_finite(const MlpParams& p) {
    for (const Array& w : p.weights) {
        if (!w.all_finite()) return false;
    }
    for (const Array& b : p.biases) {
        if (!b.all_finite()) return false;
    }
    return true;
}

}  // namespace

double Agent::alpha() const { return std::exp(log_alpha.at(0)); }

Agent make_agent(const SacConfig& config) {
    validate_config(config);
    Agent agent;
    agent.config = config;
    RandomStream root(config.seed);
    RandomStream actor_rng = root.split(1);
    RandomStream c1_rng = root.split(2);
    RandomStream c2_rng = root.split(3);
    agent.actor = numgrad::mlp_init(actor_sizes(config), actor_rng);
    agent.critic1 = numgrad::mlp_init(critic_sizes(config), c1_rng);
    agent.critic2 = numgrad::mlp_init(critic_sizes(config), c2_rng);
    agent.target1 = agent.critic1;
    agent.target2 = agent.critic2;
    agent.log_alpha = Array::vec({std::log(config.init_alpha)});
    agent.actor_opt = adam_init(numgrad::mlp_param_ptrs(std::as_const(agent.actor)));
    agent.critic1_opt = adam_init(numgrad::mlp_param_ptrs(std::as_const(agent.critic1)));
    agent.critic2_opt = adam_init(numgrad::mlp_param_ptrs(std::as_const(agent.critic2)));
    agent.alpha_opt = adam_init({&agent.log_alpha});
    agent.target_entropy = -static_cast<double>(config.act_dim);
    return agent;
}

namespace {

// Rebuilds a net's first layer for a wider input: rows listed in
// `row_moves` (src row -> dst row) are copied, every other row is zero.
void widen_first_layer(MlpParams& dst, const MlpParams& src,
                       const std::vector<std::pair<int, int>>& row_moves) {
    Array w0({dst.layer_sizes.front(), dst.layer_sizes[1]});
    for (const auto& [from, to] : row_moves) {
        for (int c = 0; c < w0.cols(); ++c) w0.at(to, c) = src.weights[0].at(from, c);
    }
    dst.weights[0] = std::move(w0);
    dst.biases[0] = src.biases[0];
    for (int l = 1; l < src.n_layers(); ++l) {
        dst.weights[l] = src.weights[l];
        dst.biases[l] = src.biases[l];
    }
}

}  // namespace

Agent extend_agent(const Agent& agent, int new_obs_dim) {
    const int ds = agent.config.obs_dim;
    const int da = agent.config.act_dim;
    if (new_obs_dim < ds) {
        throw ValidationError("extend_agent: new obs dim " + std::to_string(new_obs_dim) +
                              " is narrower than " + std::to_string(ds));
    }
    if (new_obs_dim == ds) return agent;

    SacConfig cfg = agent.config;
    cfg.obs_dim = new_obs_dim;
    Agent out = make_agent(cfg);

    std::vector<std::pair<int, int>> obs_rows;
    for (int i = 0; i < ds; ++i) obs_rows.emplace_back(i, i);
    widen_first_layer(out.actor, agent.actor, obs_rows);

    // Critics read (obs, action); action rows shift past the padding.
    std::vector<std::pair<int, int>> critic_rows = obs_rows;
    for (int j = 0; j < da; ++j) critic_rows.emplace_back(ds + j, new_obs_dim + j);
    widen_first_layer(out.critic1, agent.critic1, critic_rows);
    widen_first_layer(out.critic2, agent.critic2, critic_rows);
    widen_first_layer(out.target1, agent.target1, critic_rows);
    widen_first_layer(out.target2, agent.target2, critic_rows);

    out.log_alpha = agent.log_alpha;
    return out;
}

std::pair<Array, Array> sample_actions(const Agent& agent, const Array& obs,
                                       RandomStream& rng) {
    if (obs.cols() != agent.config.obs_dim) {
        throw DimensionError("sac sample: obs dim " + std::to_string(obs.cols()) +
                             " != " + std::to_string(agent.config.obs_dim));
    }
    const int n = obs.rows(), da = agent.config.act_dim;
    const double bound = agent.config.action_bound;
    Array head = numgrad::mlp_forward(agent.actor, obs);
    Array actions({n, da});
    Array log_pi({n, 1});
    for (int i = 0; i < n; ++i) {
        double lp = 0.0;
        for (int j = 0; j < da; ++j) {
            double mean = head.at(i, j);
            double log_std = numgrad::soft_clamp(head.at(i, da + j), kLogStdMin, kLogStdMax);
            double eps = rng.normal();
            double u = mean + std::exp(log_std) * eps;
            actions.at(i, j) = bound * std::tanh(u);
            lp += -0.5 * kLog2Pi - log_std - 0.5 * eps * eps;
            lp -= std::log(bound) + log_one_minus_tanh_sq(u);
        }
        log_pi.at(i, 0) = lp;
    }
    return {std::move(actions), std::move(log_pi)};
}

Array act(const Agent& agent, const Array& obs, ActMode mode, RandomStream& rng) {
    if (obs.numel() != static_cast<std::size_t>(agent.config.obs_dim)) {
        throw DimensionError("sac act: obs dim " + std::to_string(obs.numel()) + " != " +
                             std::to_string(agent.config.obs_dim));
    }
    const int da = agent.config.act_dim;
    Array row({1, agent.config.obs_dim}, obs.values());
    if (mode == ActMode::deterministic) {
        Array head = numgrad::mlp_forward(agent.actor, row);
        Array action({da});
        for (int j = 0; j < da; ++j) {
            action.at(static_cast<std::size_t>(j)) =
                agent.config.action_bound * std::tanh(head.at(0, j));
        }
        return action;
    }
    auto [actions, log_pi] = sample_actions(agent, row, rng);
    Array action({da});
    for (int j = 0; j < da; ++j) action.at(static_cast<std::size_t>(j)) = actions.at(0, j);
    return action;
}

UpdateReport sac_update(Agent& agent, const datastore::Batch& batch, RandomStream& rng) {
    if (batch.size() == 0) throw ValidationError("sac update: empty batch");
    if (batch.s.cols() != agent.config.obs_dim || batch.a.cols() != agent.config.act_dim) {
        throw DimensionError("sac update: batch dims (" + std::to_string(batch.s.cols()) +
                             ", " + std::to_string(batch.a.cols()) + ") != agent dims (" +
                             std::to_string(agent.config.obs_dim) + ", " +
                             std::to_string(agent.config.act_dim) + ")");
    }
    const int n = batch.size(), da = agent.config.act_dim;
    const double alpha_now = agent.alpha();
    UpdateReport report;
    report.alpha = alpha_now;

    // Critic regression targets from the target nets and a fresh next-action
    // sample. No gradients flow here, so everything is on the plain path.
    auto [a_next, logp_next] = sample_actions(agent, batch.s_next, rng);
    Array in_next = hstack(batch.s_next, a_next);
    Array qt1 = numgrad::mlp_forward(agent.target1, in_next);
    Array qt2 = numgrad::mlp_forward(agent.target2, in_next);
    Array y({n, 1});
    for (int i = 0; i < n; ++i) {
        double qmin = std::min(qt1.at(i, 0), qt2.at(i, 0));
        report.mean_target_q1 += qt1.at(i, 0) / n;
        report.mean_target_q2 += qt2.at(i, 0) / n;
        report.mean_min_target_q += qmin / n;
        double soft = qmin - alpha_now * logp_next.at(i, 0);
        y.at(i, 0) = batch.r.at(i, 0) + agent.config.gamma * (1.0 - batch.done.at(i, 0)) * soft;
    }
    if (!y.all_finite()) {
        report.skipped = true;
        return report;
    }

    MlpParams critic1_grads, critic2_grads, actor_grads;
    Array alpha_grad({1});
    try {
        // Both critics on one tape; their parameters are disjoint leaves.
        {
            Tape tape;
            MlpVars c1 = numgrad::mlp_leaves(tape, agent.critic1, true);
            MlpVars c2 = numgrad::mlp_leaves(tape, agent.critic2, true);
            Var input = tape.constant(hstack(batch.s, batch.a));
            Var target = tape.constant(y);
            Var l1 = tape.mean(tape.square(tape.sub(numgrad::mlp_apply(tape, c1, input), target)));
            Var l2 = tape.mean(tape.square(tape.sub(numgrad::mlp_apply(tape, c2, input), target)));
            tape.backward(tape.add(l1, l2));
            report.critic1_loss = tape.value(l1).at(0);
            report.critic2_loss = tape.value(l2).at(0);
            critic1_grads = numgrad::mlp_grads(tape, c1, agent.critic1);
            critic2_grads = numgrad::mlp_grads(tape, c2, agent.critic2);
        }

        // Actor ascent on min-Q - alpha*log pi; critics enter as constants
        // so the gradient reaches the actor only through the action.
        Array eps({n, da});
        for (std::size_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
        double mean_log_pi;
        {
            Tape tape;
            MlpVars av = numgrad::mlp_leaves(tape, agent.actor, true);
            MlpVars c1 = numgrad::mlp_leaves(tape, agent.critic1, false);
            MlpVars c2 = numgrad::mlp_leaves(tape, agent.critic2, false);
            Var obs = tape.constant(batch.s);
            Var head = numgrad::mlp_apply(tape, av, obs);
            Var mean = tape.cols(head, 0, da);
            Var log_std = numgrad::soft_clamp(tape, tape.cols(head, da, 2 * da),
                                              kLogStdMin, kLogStdMax);
            Var u = tape.add(mean, tape.mul(tape.exp_(log_std), tape.constant(eps)));
            Var action = tape.scale(tape.tanh_(u), agent.config.action_bound);

            // log N(u; mean, std) with eps held constant: -log_std - eps^2/2 - log(2pi)/2
            Array gauss_const({n, da});
            for (std::size_t i = 0; i < eps.numel(); ++i) {
                gauss_const.at(i) = -0.5 * eps.at(i) * eps.at(i) - 0.5 * kLog2Pi;
            }
            Var log_gauss = tape.add(tape.neg(log_std), tape.constant(gauss_const));
            // squash correction: log(bound) + 2*(log 2 - u - softplus(-2u)) per dim
            Var neg2u = tape.scale(u, -2.0);
            Var corr = tape.add_const(tape.add(neg2u, tape.scale(tape.softplus(neg2u), -2.0)),
                                      2.0 * std::log(2.0) + std::log(agent.config.action_bound));
            Var log_pi = tape.row_sum(tape.sub(log_gauss, corr));

            Var q1 = numgrad::mlp_apply(tape, c1, tape.concat_cols(obs, action));
            Var q2 = numgrad::mlp_apply(tape, c2, tape.concat_cols(obs, action));
            Var loss = tape.mean(tape.sub(tape.scale(log_pi, alpha_now), tape.min_(q1, q2)));
            tape.backward(loss);
            report.actor_loss = tape.value(loss).at(0);
            actor_grads = numgrad::mlp_grads(tape, av, agent.actor);

            const Array& lp = tape.value(log_pi);
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += lp.at(i, 0);
            mean_log_pi = s / n;
        }
        report.mean_log_pi = mean_log_pi;

        // Temperature: minimize -log_alpha * (log pi + target entropy), which
        // raises alpha while the policy is less random than the target.
        double pull = mean_log_pi + agent.target_entropy;
        alpha_grad.at(0) = -pull;
        report.alpha_loss = -agent.log_alpha.at(0) * pull;
    } catch (const NumericError&) {
        report.skipped = true;
        return report;
    }
    // tape checks node values, not gradients, so overflowed grads get here
    if (!all_finite(critic1_grads) || !all_finite(critic2_grads) ||
        !all_finite(actor_grads) || !alpha_grad.all_finite()) {
        report.skipped = true;
        return report;
    }

    AdamConfig opt{agent.config.lr};
    adam_step(numgrad::mlp_param_ptrs(agent.critic1),
              numgrad::mlp_param_ptrs(std::as_const(critic1_grads)), agent.critic1_opt, opt);
    adam_step(numgrad::mlp_param_ptrs(agent.critic2),
              numgrad::mlp_param_ptrs(std::as_const(critic2_grads)), agent.critic2_opt, opt);
    adam_step(numgrad::mlp_param_ptrs(agent.actor),
              numgrad::mlp_param_ptrs(std::as_const(actor_grads)), agent.actor_opt, opt);
    adam_step({&agent.log_alpha}, {&alpha_grad}, agent.alpha_opt, opt);
    report.alpha = agent.alpha();
    soft_target_update(agent, agent.config.tau);
    return report;
}

void soft_target_update(Agent& agent, double tau) {
    if (tau <= 0 || tau > 1) throw ValidationError("sac: tau must be in (0, 1]");
    ema_params(agent.target1, agent.critic1, tau);
    ema_params(agent.target2, agent.critic2, tau);
}

namespace {

void pack_mlp(datastore::Blob& blob, const std::string& prefix, const MlpParams& p) {
    for (int l = 0; l < p.n_layers(); ++l) {
        blob.arrays.emplace_back(prefix + "_w" + std::to_string(l), p.weights[l]);
        blob.arrays.emplace_back(prefix + "_b" + std::to_string(l), p.biases[l]);
    }
}

MlpParams unpack_mlp(const datastore::Blob& blob, const std::string& prefix,
                     const std::vector<int>& sizes) {
    MlpParams p = numgrad::mlp_zeros(sizes);
    for (int l = 0; l < p.n_layers(); ++l) {
        Array w = blob.get(prefix + "_w" + std::to_string(l));
        Array b = blob.get(prefix + "_b" + std::to_string(l));
        if (!w.same_shape(p.weights[l]) || !b.same_shape(p.biases[l])) {
            throw IoError("sac checkpoint: layer shape mismatch at " + prefix +
                          " layer " + std::to_string(l));
        }
        p.weights[l] = std::move(w);
        p.biases[l] = std::move(b);
    }
    return p;
}

}  // namespace

void save_agent(const std::string& path, const Agent& agent) {
    datastore::Blob blob;
    blob.meta = {
        {"kind", "sac_agent"},
        {"obs_dim", agent.config.obs_dim},
        {"act_dim", agent.config.act_dim},
        {"action_bound", agent.config.action_bound},
        {"hidden", agent.config.hidden},
        {"gamma", agent.config.gamma},
        {"tau", agent.config.tau},
        {"lr", agent.config.lr},
        {"seed", agent.config.seed},
    };
    pack_mlp(blob, "actor", agent.actor);
    pack_mlp(blob, "c1", agent.critic1);
    pack_mlp(blob, "c2", agent.critic2);
    pack_mlp(blob, "t1", agent.target1);
    pack_mlp(blob, "t2", agent.target2);
    blob.arrays.emplace_back("log_alpha", agent.log_alpha);
    datastore::write_container(path, blob);
}

Agent load_agent(const std::string& path) {
    datastore::Blob blob = datastore::read_container(path);
    if (blob.meta.value("kind", "") != "sac_agent") {
        throw IoError("sac checkpoint: unexpected kind '" +
                      blob.meta.value("kind", std::string("<missing>")) + "'");
    }
    SacConfig config;
    config.obs_dim = blob.meta.at("obs_dim").get<int>();
    config.act_dim = blob.meta.at("act_dim").get<int>();
    config.action_bound = blob.meta.at("action_bound").get<double>();
    config.hidden = blob.meta.at("hidden").get<std::vector<int>>();
    config.gamma = blob.meta.at("gamma").get<double>();
    config.tau = blob.meta.at("tau").get<double>();
    config.lr = blob.meta.at("lr").get<double>();
    config.seed = blob.meta.at("seed").get<std::uint64_t>();
    Agent agent = make_agent(config);
    agent.actor = unpack_mlp(blob, "actor", actor_sizes(config));
    agent.critic1 = unpack_mlp(blob, "c1", critic_sizes(config));
    agent.critic2 = unpack_mlp(blob, "c2", critic_sizes(config));
    agent.target1 = unpack_mlp(blob, "t1", critic_sizes(config));
    agent.target2 = unpack_mlp(blob, "t2", critic_sizes(config));
    agent.log_alpha = blob.get("log_alpha");
    return agent;
}

}  // namespace s2rl::sacpolicy
