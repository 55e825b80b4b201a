#include "s2rl/latentspace.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "s2rl/errors.hpp"
#include "s2rl/gaussian.hpp"
#include "s2rl/serialize.hpp"
#include "s2rl/tape.hpp"

namespace s2rl::latentspace {

namespace {

using numgrad::MlpVars;
using numgrad::Tape;
using numgrad::Var;
using worldmodel::EnsembleModel;
using worldmodel::Normalizer;

// Raw pad log-variance: deep in the squash's saturation so padded latent
// coordinates carry (nearly) the floor variance and no trainable pressure.
constexpr double kPadRawLogVar = -30.0;

void check_weights(const LossWeights& w) {
    if (w.w_pred < 0 || w.w_recon < 0 || w.w_corr < 0) {
        throw ValidationError("latent weights: components must be non-negative");
    }
    if (w.w_pred == 0 && w.w_recon == 0 && w.w_corr == 0) {
        throw ValidationError("latent weights: at least one component must be positive");
    }
    if (w.grad_to_encoders_from_corr < 0 || w.grad_to_encoders_from_corr > 1) {
        throw ValidationError("latent weights: grad_to_encoders_from_corr must be in [0, 1]");
    }
}

void check_batch(const LatentModel& model, const datastore::Batch& b, const char* name) {
    if (b.size() == 0) throw ValidationError(std::string("latent losses: empty ") + name);
    if (b.s.cols() != model.obs_dim || b.a.cols() != model.act_dim) {
        throw DimensionError(std::string("latent losses: ") + name + " dims (" +
                             std::to_string(b.s.cols()) + ", " + std::to_string(b.a.cols()) +
                             ") != model dims (" + std::to_string(model.obs_dim) + ", " +
                             std::to_string(model.act_dim) + ")");
    }
}

// MLP whose final layer starts at zero, so the residual map it corrects
// is exact until training moves it.
MlpParams residual_net(const std::vector<int>& sizes, RandomStream& rng) {
    MlpParams p = numgrad::mlp_init(sizes, rng);
    Array& w = p.weights.back();
    Array& b = p.biases.back();
    for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = 0.0;
    for (std::size_t i = 0; i < b.numel(); ++i) b.at(i) = 0.0;
    return p;
}

std::vector<int> map_sizes(int in, int out, const std::vector<int>& hidden) {
    std::vector<int> s{in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
}

// Zero-extended copy of a single-env ensemble member. Input gains `pad`
// dead rows between state and action blocks; the output gains pad mean
// columns at zero and pad log-variance columns pinned at kPadRawLogVar.
numgrad::MlpParams extend_member(const numgrad::MlpParams& src, int ds, int da, int dl) {
    const int pad = dl - ds;
    std::vector<int> sizes = src.layer_sizes;
    sizes.front() = dl + da;
    sizes.back() = 2 * (1 + dl);
    numgrad::MlpParams out = numgrad::mlp_zeros(sizes);
    for (int l = 1; l + 1 < src.n_layers(); ++l) {
        out.weights[l] = src.weights[l];
        out.biases[l] = src.biases[l];
    }

    const int h0 = src.layer_sizes[1];
    for (int c = 0; c < h0; ++c) {
        for (int r = 0; r < ds; ++r) out.weights[0].at(r, c) = src.weights[0].at(r, c);
        for (int r = 0; r < da; ++r) out.weights[0].at(dl + r, c) = src.weights[0].at(ds + r, c);
    }
    out.biases[0] = src.biases[0];

    const int last = src.n_layers() - 1;
    const int hl = src.layer_sizes[src.layer_sizes.size() - 2];
    const int dout_src = 1 + ds, dout_dst = 1 + dl;
    // column c of the source output block maps to column `to` of the target
    auto copy_out_col = [&](int from, int to) {
        for (int r = 0; r < hl; ++r) out.weights[last].at(r, to) = src.weights[last].at(r, from);
        out.biases[last].at(static_cast<std::size_t>(to)) =
            src.biases[last].at(static_cast<std::size_t>(from));
    };
    copy_out_col(0, 0);  // reward mean
    for (int j = 0; j < ds; ++j) copy_out_col(1 + j, 1 + j);               // state means
    copy_out_col(dout_src, dout_dst);                                       // reward logvar
    for (int j = 0; j < ds; ++j) copy_out_col(dout_src + 1 + j, dout_dst + 1 + j);
    for (int j = 0; j < pad; ++j) {
        out.biases[last].at(static_cast<std::size_t>(dout_dst + 1 + ds + j)) = kPadRawLogVar;
    }
    return out;
}

EnsembleModel extend_ensemble(const EnsembleModel& single, int dl) {
    const int ds = single.obs_dim, da = single.act_dim;
    EnsembleModel out;
    out.obs_dim = dl;
    out.act_dim = da;
    out.config = single.config;
    out.elites = single.elites;
    out.trained = true;

    out.in_norm.mean = Array({dl + da});
    out.in_norm.std = Array::full({dl + da}, 1.0);
    out.out_norm.mean = Array({1 + dl});
    out.out_norm.std = Array::full({1 + dl}, 1.0);
    for (int j = 0; j < ds; ++j) {
        out.in_norm.mean.at(static_cast<std::size_t>(j)) =
            single.in_norm.mean.at(static_cast<std::size_t>(j));
        out.in_norm.std.at(static_cast<std::size_t>(j)) =
            single.in_norm.std.at(static_cast<std::size_t>(j));
    }
    for (int j = 0; j < da; ++j) {
        out.in_norm.mean.at(static_cast<std::size_t>(dl + j)) =
            single.in_norm.mean.at(static_cast<std::size_t>(ds + j));
        out.in_norm.std.at(static_cast<std::size_t>(dl + j)) =
            single.in_norm.std.at(static_cast<std::size_t>(ds + j));
    }
    for (int j = 0; j < 1 + ds; ++j) {
        out.out_norm.mean.at(static_cast<std::size_t>(j)) =
            single.out_norm.mean.at(static_cast<std::size_t>(j));
        out.out_norm.std.at(static_cast<std::size_t>(j)) =
            single.out_norm.std.at(static_cast<std::size_t>(j));
    }
    for (const numgrad::MlpParams& member : single.members) {
        out.members.push_back(extend_member(member, ds, da, dl));
    }
    return out;
}

const MlpParams& encoder_of(const LatentModel& model, Role side) {
    return side == Role::sim ? model.p_sim : model.p_real;
}
const MlpParams& decoder_of(const LatentModel& model, Role side) {
    return side == Role::sim ? model.q_sim : model.q_real;
}

// Residual map applied to a 2-D batch on the plain path.
Array encode_rows(const LatentModel& model, Role side, const Array& s) {
    const int n = s.rows(), ds = model.obs_dim, dl = model.dim_latent;
    Array corr = numgrad::mlp_forward(encoder_of(model, side), s);
    Array z({n, dl});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dl; ++j) {
            z.at(i, j) = (j < ds ? s.at(i, j) : 0.0) + corr.at(i, j);
        }
    }
    return z;
}

Array decode_rows(const LatentModel& model, Role side, const Array& z) {
    const int n = z.rows(), ds = model.obs_dim;
    Array corr = numgrad::mlp_forward(decoder_of(model, side), z);
    Array s({n, ds});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ds; ++j) s.at(i, j) = z.at(i, j) + corr.at(i, j);
    }
    return s;
}

Array cross_rows(const LatentModel& model, const Array& z) {
    const int n = z.rows(), dl = model.dim_latent;
    Array corr = numgrad::mlp_forward(model.m, z);
    Array out({n, dl});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dl; ++j) out.at(i, j) = z.at(i, j) + corr.at(i, j);
    }
    return out;
}

// Dispatch that keeps 1-D in, 1-D out.
Array apply_map(const LatentModel& model, const Array& x, int in_dim, const char* what,
                Array (*rows_fn)(const LatentModel&, Role, const Array&), Role side) {
    if (x.cols() != in_dim) {
        throw DimensionError(std::string(what) + ": input dim " + std::to_string(x.cols()) +
                             " != " + std::to_string(in_dim));
    }
    if (x.ndim() == 1) {
        Array row({1, in_dim}, x.values());
        Array out = rows_fn(model, side, row);
        return Array({out.cols()}, out.values());
    }
    return rows_fn(model, side, x);
}

// --- tape-side builders ---------------------------------------------------

Var encode_t(Tape& t, const MlpVars& enc, Var s, int n, int ds, int dl) {
    Var corr = numgrad::mlp_apply(t, enc, s);
    Var base = (dl == ds) ? s : t.concat_cols(s, t.constant(Array({n, dl - ds})));
    return t.add(base, corr);
}

Var decode_t(Tape& t, const MlpVars& dec, Var z, int ds) {
    return t.add(t.cols(z, 0, ds), numgrad::mlp_apply(t, dec, z));
}

Var normalize_t(Tape& t, Var x, const Normalizer& nm, int n) {
    const int d = nm.dim();
    Array neg_mean({n, d}), inv_std({n, d});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            neg_mean.at(i, j) = -nm.mean.at(static_cast<std::size_t>(j));
            inv_std.at(i, j) = 1.0 / nm.std.at(static_cast<std::size_t>(j));
        }
    }
    return t.mul(t.add(x, t.constant(neg_mean)), t.constant(inv_std));
}

Array stack_rows(const Array& a, const Array& b) {
    const int d = a.cols();
    Array out({a.rows() + b.rows(), d});
    std::size_t k = 0;
    for (double v : a.values()) out.at(k++) = v;
    for (double v : b.values()) out.at(k++) = v;
    return out;
}

struct LossGraph {
    MlpVars p_sim, p_real, q_sim, q_real, m;
    std::vector<MlpVars> members;
    Var pred_sim, pred_real, recon_sim, recon_real, corr, total;
};

// Ensemble NLL (mean over members) of gradient-stopped latent targets,
// in the dynamics model's normalized space.
Var pred_loss_t(Tape& t, const LatentModel& model, const LossGraph& g, Var z, Var z_next,
                const datastore::Batch& batch) {
    const int n = batch.size(), dl = model.dim_latent;
    const int dout = 1 + dl;
    Var dz = t.stop_gradient(t.sub(z_next, z));
    Var target_full = t.concat_cols(t.constant(batch.r), dz);
    Var target_norm = normalize_t(t, target_full, model.dynamics.out_norm, n);
    Var input = normalize_t(t, t.concat_cols(z, t.constant(batch.a)),
                            model.dynamics.in_norm, n);
    Var acc = t.constant_scalar(0.0);
    for (const MlpVars& mv : g.members) {
        Var head = numgrad::mlp_apply(t, mv, input);
        Var mean = t.cols(head, 0, dout);
        Var logvar = numgrad::soft_clamp(t, t.cols(head, dout, 2 * dout),
                                         numgrad::kLogVarMin, numgrad::kLogVarMax);
        acc = t.add(acc, numgrad::gaussian_nll(t, mean, logvar, target_norm));
    }
    return t.scale(acc, 1.0 / static_cast<double>(g.members.size()));
}

LossGraph build_losses(Tape& t, const LatentModel& model, const datastore::Batch& bs,
                       const datastore::Batch& br, const LossWeights& w, bool maps_grad) {
    const int ds = model.obs_dim, dl = model.dim_latent;
    LossGraph g;
    g.p_sim = numgrad::mlp_leaves(t, model.p_sim, maps_grad);
    g.p_real = numgrad::mlp_leaves(t, model.p_real, maps_grad);
    g.q_sim = numgrad::mlp_leaves(t, model.q_sim, maps_grad);
    g.q_real = numgrad::mlp_leaves(t, model.q_real, maps_grad);
    g.m = numgrad::mlp_leaves(t, model.m, maps_grad);
    for (const numgrad::MlpParams& member : model.dynamics.members) {
        g.members.push_back(numgrad::mlp_leaves(t, member, true));
    }

    Var s_sim = t.constant(bs.s), sp_sim = t.constant(bs.s_next);
    Var s_real = t.constant(br.s), sp_real = t.constant(br.s_next);

    Var z_sim = encode_t(t, g.p_sim, s_sim, bs.size(), ds, dl);
    Var zp_sim = encode_t(t, g.p_sim, sp_sim, bs.size(), ds, dl);
    Var z_real = encode_t(t, g.p_real, s_real, br.size(), ds, dl);
    Var zp_real = encode_t(t, g.p_real, sp_real, br.size(), ds, dl);

    g.pred_sim = pred_loss_t(t, model, g, z_sim, zp_sim, bs);
    g.pred_real = pred_loss_t(t, model, g, z_real, zp_real, br);

    Var mse_s_sim = t.mean(t.square(t.sub(decode_t(t, g.q_sim, z_sim, ds), s_sim)));
    Var mse_sp_sim = t.mean(t.square(t.sub(decode_t(t, g.q_sim, zp_sim, ds), sp_sim)));
    g.recon_sim = t.scale(t.add(mse_s_sim, mse_sp_sim), 0.5);
    Var mse_s_real = t.mean(t.square(t.sub(decode_t(t, g.q_real, z_real, ds), s_real)));
    Var mse_sp_real = t.mean(t.square(t.sub(decode_t(t, g.q_real, zp_real, ds), sp_real)));
    g.recon_real = t.scale(t.add(mse_s_real, mse_sp_real), 0.5);

    // correspondence over every observation of both batches; the encoders
    // see a gated gradient from this term, m the full one
    Array all_s = stack_rows(bs.s, br.s);
    Array all_sp = stack_rows(bs.s_next, br.s_next);
    const int na = all_s.rows();
    const double gate = w.grad_to_encoders_from_corr;
    Var cs_sim = t.grad_scale(encode_t(t, g.p_sim, t.constant(all_s), na, ds, dl), gate);
    Var cs_real = t.grad_scale(encode_t(t, g.p_real, t.constant(all_s), na, ds, dl), gate);
    Var csp_sim = t.grad_scale(encode_t(t, g.p_sim, t.constant(all_sp), na, ds, dl), gate);
    Var csp_real = t.grad_scale(encode_t(t, g.p_real, t.constant(all_sp), na, ds, dl), gate);
    Var m_s = t.add(cs_real, numgrad::mlp_apply(t, g.m, cs_real));
    Var m_sp = t.add(csp_real, numgrad::mlp_apply(t, g.m, csp_real));
    g.corr = t.mean(t.add(t.rownorm(t.sub(cs_sim, m_s)), t.rownorm(t.sub(csp_sim, m_sp))));

    g.total = t.add(t.add(t.scale(t.add(g.pred_sim, g.pred_real), w.w_pred),
                          t.scale(t.add(g.recon_sim, g.recon_real), w.w_recon)),
                    t.scale(g.corr, w.w_corr));
    return g;
}

LatentLossReport read_report(const Tape& t, const LossGraph& g) {
    LatentLossReport r;
    r.pred_sim = t.value(g.pred_sim).at(0);
    r.pred_real = t.value(g.pred_real).at(0);
    r.recon_sim = t.value(g.recon_sim).at(0);
    r.recon_real = t.value(g.recon_real).at(0);
    r.corr = t.value(g.corr).at(0);
    r.total = t.value(g.total).at(0);
    return r;
}

}  // namespace

LatentOptState make_opt_state(const LatentModel& model) {
    LatentOptState opt;
    opt.p_sim = numgrad::adam_init(numgrad::mlp_param_ptrs(model.p_sim));
    opt.p_real = numgrad::adam_init(numgrad::mlp_param_ptrs(model.p_real));
    opt.q_sim = numgrad::adam_init(numgrad::mlp_param_ptrs(model.q_sim));
    opt.q_real = numgrad::adam_init(numgrad::mlp_param_ptrs(model.q_real));
    opt.m = numgrad::adam_init(numgrad::mlp_param_ptrs(model.m));
    for (const numgrad::MlpParams& member : model.dynamics.members) {
        opt.members.push_back(numgrad::adam_init(numgrad::mlp_param_ptrs(member)));
    }
    return opt;
}

LatentModel init_from_single(const worldmodel::EnsembleModel& single, Role side,
                             int dim_latent, const std::vector<int>& map_hidden,
                             std::uint64_t seed) {
    if (!single.trained) throw ValidationError("init_from_single: model is not trained");
    const int ds = single.obs_dim;
    if (dim_latent < ds) {
        throw ValidationError("init_from_single: dim_latent " + std::to_string(dim_latent) +
                              " < obs dim " + std::to_string(ds));
    }
    LatentModel lm;
    lm.obs_dim = ds;
    lm.act_dim = single.act_dim;
    lm.dim_latent = dim_latent;
    lm.init_side = side;
    RandomStream root(seed);
    RandomStream enc_rng = root.split(1);
    RandomStream dec_rng = root.split(2);
    RandomStream m_rng = root.split(3);
    lm.p_sim = residual_net(map_sizes(ds, dim_latent, map_hidden), enc_rng);
    lm.p_real = lm.p_sim;  // both domains start as the same map
    lm.q_sim = residual_net(map_sizes(dim_latent, ds, map_hidden), dec_rng);
    lm.q_real = lm.q_sim;
    lm.m = residual_net(map_sizes(dim_latent, dim_latent, map_hidden), m_rng);
    lm.dynamics = extend_ensemble(single, dim_latent);
    return lm;
}

Array encode(const LatentModel& model, Role side, const Array& s) {
    return apply_map(model, s, model.obs_dim, "encode", encode_rows, side);
}

Array decode(const LatentModel& model, Role side, const Array& z) {
    return apply_map(model, z, model.dim_latent, "decode", decode_rows, side);
}

Array cross_map(const LatentModel& model, const Array& z_real) {
    auto shim = [](const LatentModel& m, Role, const Array& z) { return cross_rows(m, z); };
    return apply_map(model, z_real, model.dim_latent, "cross_map", shim, Role::sim);
}

Array rho_bar_sample(const LatentModel& model, envsim::Environment& env, RandomStream& rng) {
    if (env.obs_dim() != model.obs_dim) {
        throw DimensionError("rho_bar: env obs dim " + std::to_string(env.obs_dim()) +
                             " != model obs dim " + std::to_string(model.obs_dim));
    }
    envsim::EnvState st = env.reset(rng);
    return encode(model, env.spec().role, st.observation);
}

LatentLossReport latent_losses(const LatentModel& model, const datastore::Batch& batch_sim,
                               const datastore::Batch& batch_real, const LossWeights& weights) {
    check_weights(weights);
    check_batch(model, batch_sim, "sim batch");
    check_batch(model, batch_real, "real batch");
    Tape tape;
    LossGraph g = build_losses(tape, model, batch_sim, batch_real, weights, false);
    return read_report(tape, g);
}

LatentLossReport latent_update(LatentModel& model, const datastore::Batch& batch_sim,
                               const datastore::Batch& batch_real, const LossWeights& weights,
                               LatentOptState& opt, const numgrad::AdamConfig& opt_cfg,
                               bool update_maps) {
    check_weights(weights);
    check_batch(model, batch_sim, "sim batch");
    check_batch(model, batch_real, "real batch");
    if (opt.members.size() != model.dynamics.members.size()) {
        throw ValidationError("latent update: optimizer state does not match the model");
    }

    LatentLossReport report;
    std::vector<numgrad::MlpParams> map_grads;
    std::vector<numgrad::MlpParams> member_grads;
    try {
        Tape tape;
        LossGraph g = build_losses(tape, model, batch_sim, batch_real, weights, update_maps);
        tape.backward(g.total);
        report = read_report(tape, g);
        if (update_maps) {
            map_grads.push_back(numgrad::mlp_grads(tape, g.p_sim, model.p_sim));
            map_grads.push_back(numgrad::mlp_grads(tape, g.p_real, model.p_real));
            map_grads.push_back(numgrad::mlp_grads(tape, g.q_sim, model.q_sim));
            map_grads.push_back(numgrad::mlp_grads(tape, g.q_real, model.q_real));
            map_grads.push_back(numgrad::mlp_grads(tape, g.m, model.m));
        }
        for (std::size_t i = 0; i < g.members.size(); ++i) {
            member_grads.push_back(
                numgrad::mlp_grads(tape, g.members[i], model.dynamics.members[i]));
        }
    } catch (const NumericError&) {
        report.skipped = true;
        return report;
    }

    auto finite = [](const numgrad::MlpParams& p) {
        for (const Array& w : p.weights) {
            if (!w.all_finite()) return false;
        }
        for (const Array& b : p.biases) {
            if (!b.all_finite()) return false;
        }
        return true;
    };
    for (const numgrad::MlpParams& gp : map_grads) {
        if (!finite(gp)) {
            report.skipped = true;
            return report;
        }
    }
    for (const numgrad::MlpParams& gp : member_grads) {
        if (!finite(gp)) {
            report.skipped = true;
            return report;
        }
    }

    if (update_maps) {
        numgrad::adam_step(numgrad::mlp_param_ptrs(model.p_sim),
                           numgrad::mlp_param_ptrs(std::as_const(map_grads[0])), opt.p_sim, opt_cfg);
        numgrad::adam_step(numgrad::mlp_param_ptrs(model.p_real),
                           numgrad::mlp_param_ptrs(std::as_const(map_grads[1])), opt.p_real, opt_cfg);
        numgrad::adam_step(numgrad::mlp_param_ptrs(model.q_sim),
                           numgrad::mlp_param_ptrs(std::as_const(map_grads[2])), opt.q_sim, opt_cfg);
        numgrad::adam_step(numgrad::mlp_param_ptrs(model.q_real),
                           numgrad::mlp_param_ptrs(std::as_const(map_grads[3])), opt.q_real, opt_cfg);
        numgrad::adam_step(numgrad::mlp_param_ptrs(model.m),
                           numgrad::mlp_param_ptrs(std::as_const(map_grads[4])), opt.m, opt_cfg);
    }
    for (std::size_t i = 0; i < member_grads.size(); ++i) {
        numgrad::adam_step(numgrad::mlp_param_ptrs(model.dynamics.members[i]),
                           numgrad::mlp_param_ptrs(std::as_const(member_grads[i])),
                           opt.members[i], opt_cfg);
    }
    return report;
}

worldmodel::RolloutResult latent_rollout(const LatentModel& model,
                                         const datastore::Policy& policy,
                                         const Array& start_observations, Role side, int k,
                                         RandomStream& rng, worldmodel::PredictMode mode) {
    if (start_observations.ndim() != 2 || start_observations.cols() != model.obs_dim) {
        throw DimensionError("latent rollout: starts must be {n, " +
                             std::to_string(model.obs_dim) + "}, got " +
                             start_observations.shape_str());
    }
    Array z0 = encode(model, side, start_observations);
    return worldmodel::model_rollout(model.dynamics, policy, z0, k, rng, mode);
}

namespace {

void pack_map(datastore::Blob& blob, const std::string& prefix, const MlpParams& p) {
    blob.meta[prefix + "layers"] = p.layer_sizes;
    for (int l = 0; l < p.n_layers(); ++l) {
        blob.arrays.emplace_back(prefix + "w" + std::to_string(l), p.weights[l]);
        blob.arrays.emplace_back(prefix + "b" + std::to_string(l), p.biases[l]);
    }
}

MlpParams unpack_map(const datastore::Blob& blob, const std::string& prefix) {
    MlpParams p;
    p.layer_sizes = blob.meta.at(prefix + "layers").get<std::vector<int>>();
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        p.weights.push_back(blob.get(prefix + "w" + std::to_string(l)));
        p.biases.push_back(blob.get(prefix + "b" + std::to_string(l)));
    }
    return p;
}

}  // namespace

void save_latent(const std::string& path, const LatentModel& model) {
    datastore::Blob blob;
    blob.meta["kind"] = "latent_model";
    blob.meta["obs_dim"] = model.obs_dim;
    blob.meta["act_dim"] = model.act_dim;
    blob.meta["dim_latent"] = model.dim_latent;
    blob.meta["init_side"] = envsim::to_string(model.init_side);
    blob.meta["w_pred"] = model.weights.w_pred;
    blob.meta["w_recon"] = model.weights.w_recon;
    blob.meta["w_corr"] = model.weights.w_corr;
    blob.meta["grad_to_encoders_from_corr"] = model.weights.grad_to_encoders_from_corr;
    pack_map(blob, "p_sim_", model.p_sim);
    pack_map(blob, "p_real_", model.p_real);
    pack_map(blob, "q_sim_", model.q_sim);
    pack_map(blob, "q_real_", model.q_real);
    pack_map(blob, "m_", model.m);
    worldmodel::pack_ensemble(blob, "dyn_", model.dynamics);
    datastore::write_container(path, blob);
}

LatentModel load_latent(const std::string& path) {
    datastore::Blob blob = datastore::read_container(path);
    if (blob.meta.value("kind", "") != "latent_model") {
        throw IoError("load_latent: '" + path + "' is not a latent model checkpoint");
    }
    LatentModel model;
    model.obs_dim = blob.meta.at("obs_dim").get<int>();
    model.act_dim = blob.meta.at("act_dim").get<int>();
    model.dim_latent = blob.meta.at("dim_latent").get<int>();
    model.init_side = envsim::role_from_string(blob.meta.at("init_side").get<std::string>());
    model.weights.w_pred = blob.meta.at("w_pred").get<double>();
    model.weights.w_recon = blob.meta.at("w_recon").get<double>();
    model.weights.w_corr = blob.meta.at("w_corr").get<double>();
    model.weights.grad_to_encoders_from_corr =
        blob.meta.at("grad_to_encoders_from_corr").get<double>();
    model.p_sim = unpack_map(blob, "p_sim_");
    model.p_real = unpack_map(blob, "p_real_");
    model.q_sim = unpack_map(blob, "q_sim_");
    model.q_real = unpack_map(blob, "q_real_");
    model.m = unpack_map(blob, "m_");
    model.dynamics = worldmodel::unpack_ensemble(blob, "dyn_");
    return model;
}

}  // namespace s2rl::latentspace
