#include "s2rl/worldmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "s2rl/adam.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/tape.hpp"

namespace s2rl::worldmodel {

namespace {

using numgrad::Tape;
using numgrad::Var;

Array concat_rows_sa(const Array& s, const Array& a) {
    if (s.rows() != a.rows()) {
        throw DimensionError("model input: state rows " + std::to_string(s.rows()) +
                             " != action rows " + std::to_string(a.rows()));
    }
    const int n = s.rows(), ds = s.cols(), da = a.cols();
    Array x({n, ds + da});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ds; ++j) x.at(i, j) = s.at(i, j);
        for (int j = 0; j < da; ++j) x.at(i, ds + j) = a.at(i, j);
    }
    return x;
}

void check_model(const EnsembleModel& m, const char* where) {
    if (!m.trained) throw ValidationError(std::string(where) + ": model is not trained");
}

Array as_row(const Array& v) {
    return Array({1, static_cast<int>(v.numel())}, v.values());
}

}  // namespace

Normalizer Normalizer::fit(const Array& rows) {
    const int n = rows.rows(), d = rows.cols();
    if (n == 0) throw ValidationError("normalizer: no rows");
    Normalizer nm{Array({d}), Array({d})};
    for (int j = 0; j < d; ++j) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += rows.at(i, j);
        double mu = s / n;
        double v = 0;
        for (int i = 0; i < n; ++i) {
            double dx = rows.at(i, j) - mu;
            v += dx * dx;
        }
        nm.mean.at(static_cast<std::size_t>(j)) = mu;
        nm.std.at(static_cast<std::size_t>(j)) = std::max(std::sqrt(v / n), 1e-6);
    }
    return nm;
}

Array Normalizer::normalize(const Array& rows) const {
    if (rows.cols() != dim()) {
        throw DimensionError("normalize: " + std::to_string(rows.cols()) + " cols vs stats dim " +
                             std::to_string(dim()));
    }
    Array out = rows;
    for (int i = 0; i < rows.rows(); ++i) {
        for (int j = 0; j < dim(); ++j) {
            out.at(i, j) = (rows.at(i, j) - mean.at(static_cast<std::size_t>(j))) /
                           std.at(static_cast<std::size_t>(j));
        }
    }
    return out;
}

Array Normalizer::denormalize(const Array& rows) const {
    if (rows.cols() != dim()) {
        throw DimensionError("denormalize: " + std::to_string(rows.cols()) +
                             " cols vs stats dim " + std::to_string(dim()));
    }
    Array out = rows;
    for (int i = 0; i < rows.rows(); ++i) {
        for (int j = 0; j < dim(); ++j) {
            out.at(i, j) = rows.at(i, j) * std.at(static_cast<std::size_t>(j)) +
                           mean.at(static_cast<std::size_t>(j));
        }
    }
    return out;
}

std::pair<EnsembleModel, ModelTrainReport> train_ensemble(
    const std::vector<datastore::Transition>& data, const EnsembleConfig& config) {
    if (config.n_members < 1 || config.n_elites < 1 || config.n_elites > config.n_members) {
        throw ValidationError("ensemble config: need 1 <= n_elites <= n_members");
    }
    if (static_cast<int>(data.size()) < 10 * config.batch_size) {
        throw ValidationError("train_ensemble: need at least 10x batch_size transitions, got " +
                              std::to_string(data.size()));
    }

    const int n = static_cast<int>(data.size());
    const int ds = static_cast<int>(data[0].s.numel());
    const int da = static_cast<int>(data[0].a.numel());
    const int dout = 1 + ds;

    Array X({n, ds + da}), Y({n, dout});
    for (int i = 0; i < n; ++i) {
        const datastore::Transition& t = data[static_cast<std::size_t>(i)];
        for (int j = 0; j < ds; ++j) X.at(i, j) = t.s.at(static_cast<std::size_t>(j));
        for (int j = 0; j < da; ++j) X.at(i, ds + j) = t.a.at(static_cast<std::size_t>(j));
        Y.at(i, 0) = t.r;
        for (int j = 0; j < ds; ++j) {
            Y.at(i, 1 + j) =
                t.s_next.at(static_cast<std::size_t>(j)) - t.s.at(static_cast<std::size_t>(j));
        }
    }

    // degenerate data: no target column carries any signal
    bool any_variance = false;
    for (int j = 0; j < dout && !any_variance; ++j) {
        for (int i = 1; i < n; ++i) {
            if (Y.at(i, j) != Y.at(0, j)) {
                any_variance = true;
                break;
            }
        }
    }
    if (!any_variance) throw TrainingError("train_ensemble: all targets are constant");

    EnsembleModel model;
    model.obs_dim = ds;
    model.act_dim = da;
    model.config = config;
    model.in_norm = Normalizer::fit(X);
    model.out_norm = Normalizer::fit(Y);
    Array Xn = model.in_norm.normalize(X);
    Array Yn = model.out_norm.normalize(Y);

    RandomStream root(config.seed);
    std::uint64_t run_key = root.raw();

    // shared holdout split
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    RandomStream split_rng = root.split(run_key, 0xD0);
    for (int i = n - 1; i > 0; --i) {
        std::swap(order[static_cast<std::size_t>(i)],
                  order[split_rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
    }
    int n_hold = std::max(1, static_cast<int>(std::floor(config.holdout_frac * n)));
    int n_train = n - n_hold;
    std::vector<int> hold_idx(order.begin() + n_train, order.end());
    std::vector<int> train_idx(order.begin(), order.begin() + n_train);

    auto gather = [](const Array& rows, const std::vector<int>& idx) {
        Array out({static_cast<int>(idx.size()), rows.cols()});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (int j = 0; j < rows.cols(); ++j) {
                out.at(static_cast<int>(i), j) = rows.at(idx[i], j);
            }
        }
        return out;
    };
    Array Xh = gather(Xn, hold_idx), Yh = gather(Yn, hold_idx);

    std::vector<int> layers;
    layers.push_back(ds + da);
    for (int h : config.hidden) layers.push_back(h);
    layers.push_back(2 * dout);

    numgrad::AdamConfig adam_cfg;
    adam_cfg.lr = config.lr;

    ModelTrainReport report;
    report.holdout_nll.resize(static_cast<std::size_t>(config.n_members));

    auto holdout_nll = [&](const MlpParams& p) {
        Array out = numgrad::mlp_forward(p, Xh);
        const int nh = Xh.rows();
        Array mean({nh, dout}), lv({nh, dout});
        for (int i = 0; i < nh; ++i) {
            for (int j = 0; j < dout; ++j) {
                mean.at(i, j) = out.at(i, j);
                lv.at(i, j) = numgrad::soft_clamp(out.at(i, dout + j), numgrad::kLogVarMin,
                                                  numgrad::kLogVarMax);
            }
        }
        return numgrad::gaussian_nll(mean, lv, Yh);
    };

    for (int member = 0; member < config.n_members; ++member) {
        RandomStream mrng = root.split(run_key, 1, static_cast<std::uint64_t>(member));
        MlpParams params = numgrad::mlp_init(layers, mrng);

        // bootstrap resample of the training pool
        std::vector<int> boot(static_cast<std::size_t>(n_train));
        for (int i = 0; i < n_train; ++i) {
            boot[static_cast<std::size_t>(i)] =
                train_idx[mrng.uniform_int(static_cast<std::uint64_t>(n_train))];
        }
        Array Xb = gather(Xn, boot), Yb = gather(Yn, boot);

        numgrad::AdamState opt = numgrad::adam_init(numgrad::mlp_param_ptrs(std::as_const(params)));

        double best = holdout_nll(params);
        MlpParams best_params = params;
        report.holdout_nll[static_cast<std::size_t>(member)].push_back(best);
        int since_best = 0, epoch = 0;
        std::string reason = "max_epochs";

        std::vector<int> perm(static_cast<std::size_t>(n_train));
        std::iota(perm.begin(), perm.end(), 0);
        for (epoch = 1; epoch <= config.max_epochs; ++epoch) {
            for (int i = n_train - 1; i > 0; --i) {
                std::swap(perm[static_cast<std::size_t>(i)],
                          perm[mrng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
            }
            for (int off = 0; off < n_train; off += config.batch_size) {
                int bs = std::min(config.batch_size, n_train - off);
                Array xb({bs, ds + da}), yb({bs, dout});
                for (int i = 0; i < bs; ++i) {
                    int row = perm[static_cast<std::size_t>(off + i)];
                    for (int j = 0; j < ds + da; ++j) xb.at(i, j) = Xb.at(row, j);
                    for (int j = 0; j < dout; ++j) yb.at(i, j) = Yb.at(row, j);
                }
                Tape tape;
                numgrad::MlpVars vars = numgrad::mlp_leaves(tape, params, true);
                Var out = numgrad::mlp_apply(tape, vars, tape.constant(xb));
                Var mean = tape.cols(out, 0, dout);
                Var lv = numgrad::soft_clamp(tape, tape.cols(out, dout, 2 * dout),
                                             numgrad::kLogVarMin, numgrad::kLogVarMax);
                Var loss = numgrad::gaussian_nll(tape, mean, lv, tape.constant(yb));
                tape.backward(loss);
                MlpParams grads = numgrad::mlp_grads(tape, vars, params);
                numgrad::adam_step(numgrad::mlp_param_ptrs(params),
                                   numgrad::mlp_param_ptrs(std::as_const(grads)), opt, adam_cfg);
            }
            double nll = holdout_nll(params);
            report.holdout_nll[static_cast<std::size_t>(member)].push_back(nll);
            if (nll < best - 1e-6) {
                best = nll;
                best_params = params;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                reason = "early_stop";
                break;
            }
        }
        model.members.push_back(std::move(best_params));
        report.best_nll.push_back(best);
        report.epochs_run.push_back(std::min(epoch, config.max_epochs));
        report.stop_reason.push_back(reason);
    }

    // elites: lowest holdout NLL
    std::vector<int> rank(static_cast<std::size_t>(config.n_members));
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) {
        return report.best_nll[static_cast<std::size_t>(a)] <
               report.best_nll[static_cast<std::size_t>(b)];
    });
    rank.resize(static_cast<std::size_t>(config.n_elites));
    std::sort(rank.begin(), rank.end());
    model.elites = rank;
    report.elites = rank;
    model.trained = true;
    return {std::move(model), std::move(report)};
}

GaussianHead member_head(const EnsembleModel& model, int member, const Array& s, const Array& a) {
    check_model(model, "member_head");
    if (member < 0 || member >= static_cast<int>(model.members.size())) {
        throw ValidationError("member_head: member index out of range");
    }
    Array x = model.in_norm.normalize(concat_rows_sa(s, a));
    Array out = numgrad::mlp_forward(model.members[static_cast<std::size_t>(member)], x);
    const int n = out.rows(), dout = model.out_dim();
    Array mean({n, dout}), lv({n, dout});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dout; ++j) {
            mean.at(i, j) = out.at(i, j);
            lv.at(i, j) = numgrad::soft_clamp(out.at(i, dout + j), numgrad::kLogVarMin,
                                              numgrad::kLogVarMax);
        }
    }
    return GaussianHead{std::move(mean), std::move(lv)};
}

std::pair<Array, Array> member_mean_prediction(const EnsembleModel& model, int member,
                                               const Array& s, const Array& a) {
    GaussianHead head = member_head(model, member, s, a);
    Array raw = model.out_norm.denormalize(head.mean);
    const int n = raw.rows(), ds = model.obs_dim;
    Array s_next({n, ds}), r({n, 1});
    for (int i = 0; i < n; ++i) {
        r.at(i, 0) = raw.at(i, 0);
        for (int j = 0; j < ds; ++j) s_next.at(i, j) = s.at(i, j) + raw.at(i, 1 + j);
    }
    return {std::move(s_next), std::move(r)};
}

std::pair<Array, double> predict(const EnsembleModel& model, const Array& s, const Array& a,
                                 RandomStream& rng, PredictMode mode) {
    check_model(model, "predict");
    if (static_cast<int>(s.numel()) != model.obs_dim ||
        static_cast<int>(a.numel()) != model.act_dim) {
        throw DimensionError("predict: expected dims (" + std::to_string(model.obs_dim) + "," +
                             std::to_string(model.act_dim) + "), got (" +
                             std::to_string(s.numel()) + "," + std::to_string(a.numel()) + ")");
    }
    int member = model.elites[rng.uniform_int(model.elites.size())];
    GaussianHead head = member_head(model, member, as_row(s), as_row(a));
    const int dout = model.out_dim();
    Array y({1, dout});
    for (int j = 0; j < dout; ++j) {
        double noise = mode == PredictMode::sample ? rng.normal() : 0.0;
        y.at(0, j) = head.mean.at(0, j) + std::exp(0.5 * head.log_variance.at(0, j)) * noise;
    }
    Array raw = model.out_norm.denormalize(y);
    Array s_next({model.obs_dim});
    for (int j = 0; j < model.obs_dim; ++j) {
        s_next.at(static_cast<std::size_t>(j)) = s.at(static_cast<std::size_t>(j)) + raw.at(0, 1 + j);
    }
    return {std::move(s_next), raw.at(0, 0)};
}

RolloutResult model_rollout(const EnsembleModel& model, const datastore::Policy& policy,
                            const Array& starts, int k, RandomStream& rng, PredictMode mode) {
    check_model(model, "model_rollout");
    if (k < 1) throw ValidationError("model_rollout: k must be >= 1");
    if (starts.ndim() != 2 || starts.cols() != model.obs_dim) {
        throw DimensionError("model_rollout: starts must be {n, " +
                             std::to_string(model.obs_dim) + "}, got " + starts.shape_str());
    }
    RolloutResult res;
    const int n = starts.rows();
    std::uint64_t run_key = rng.raw();
    for (int i = 0; i < n; ++i) {
        Array s({model.obs_dim});
        for (int j = 0; j < model.obs_dim; ++j) s.at(static_cast<std::size_t>(j)) = starts.at(i, j);
        for (int t = 0; t < k; ++t) {
            RandomStream step_rng =
                rng.split(run_key, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t));
            Array a = policy(s, step_rng);
            auto [s_next, r] = predict(model, s, a, step_rng, mode);
            if (!s_next.all_finite() || !std::isfinite(r)) {
                res.truncations += k - t;
                break;
            }
            res.transitions.push_back(datastore::Transition{s, a, r, s_next, false});
            s = std::move(s_next);
        }
    }
    return res;
}

Array ensemble_disagreement(const EnsembleModel& model, const Array& s, const Array& a) {
    check_model(model, "ensemble_disagreement");
    const int n = s.rows(), dout = model.out_dim();
    const int ne = static_cast<int>(model.elites.size());
    std::vector<Array> means;
    means.reserve(static_cast<std::size_t>(ne));
    for (int e : model.elites) {
        means.push_back(model.out_norm.denormalize(member_head(model, e, s, a).mean));
    }
    Array out({n, 1});
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < dout; ++j) {
            double mu = 0.0;
            for (const Array& m : means) mu += m.at(i, j);
            mu /= ne;
            double v = 0.0;
            for (const Array& m : means) {
                double d = m.at(i, j) - mu;
                v += d * d;
            }
            acc += v / ne;
        }
        out.at(i, 0) = acc / dout;
    }
    return out;
}

void pack_ensemble(datastore::Blob& blob, const std::string& prefix,
                   const EnsembleModel& model) {
    check_model(model, "pack_ensemble");
    blob.meta[prefix + "obs_dim"] = model.obs_dim;
    blob.meta[prefix + "act_dim"] = model.act_dim;
    blob.meta[prefix + "n_members"] = model.config.n_members;
    blob.meta[prefix + "n_elites"] = model.config.n_elites;
    blob.meta[prefix + "hidden"] = model.config.hidden;
    blob.meta[prefix + "elites"] = model.elites;
    blob.meta[prefix + "layer_sizes"] = model.members[0].layer_sizes;
    blob.arrays.emplace_back(prefix + "in_mean", model.in_norm.mean);
    blob.arrays.emplace_back(prefix + "in_std", model.in_norm.std);
    blob.arrays.emplace_back(prefix + "out_mean", model.out_norm.mean);
    blob.arrays.emplace_back(prefix + "out_std", model.out_norm.std);
    for (std::size_t m = 0; m < model.members.size(); ++m) {
        for (int l = 0; l < model.members[m].n_layers(); ++l) {
            std::string tag = prefix + "m" + std::to_string(m) + "_";
            blob.arrays.emplace_back(tag + "w" + std::to_string(l), model.members[m].weights[l]);
            blob.arrays.emplace_back(tag + "b" + std::to_string(l), model.members[m].biases[l]);
        }
    }
}

EnsembleModel unpack_ensemble(const datastore::Blob& blob, const std::string& prefix) {
    EnsembleModel model;
    model.obs_dim = blob.meta.at(prefix + "obs_dim").get<int>();
    model.act_dim = blob.meta.at(prefix + "act_dim").get<int>();
    model.config.n_members = blob.meta.at(prefix + "n_members").get<int>();
    model.config.n_elites = blob.meta.at(prefix + "n_elites").get<int>();
    model.config.hidden = blob.meta.at(prefix + "hidden").get<std::vector<int>>();
    model.elites = blob.meta.at(prefix + "elites").get<std::vector<int>>();
    std::vector<int> layers = blob.meta.at(prefix + "layer_sizes").get<std::vector<int>>();
    model.in_norm = Normalizer{blob.get(prefix + "in_mean"), blob.get(prefix + "in_std")};
    model.out_norm = Normalizer{blob.get(prefix + "out_mean"), blob.get(prefix + "out_std")};
    for (int m = 0; m < model.config.n_members; ++m) {
        MlpParams p;
        p.layer_sizes = layers;
        std::string tag = prefix + "m" + std::to_string(m) + "_";
        for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
            p.weights.push_back(blob.get(tag + "w" + std::to_string(l)));
            p.biases.push_back(blob.get(tag + "b" + std::to_string(l)));
        }
        model.members.push_back(std::move(p));
    }
    model.trained = true;
    return model;
}

void save_model(const std::string& path, const EnsembleModel& model) {
    datastore::Blob blob;
    blob.meta["kind"] = "ensemble";
    pack_ensemble(blob, "", model);
    datastore::write_container(path, blob);
}

EnsembleModel load_model(const std::string& path) {
    datastore::Blob blob = datastore::read_container(path);
    if (blob.meta.value("kind", "") != "ensemble") {
        throw IoError("load_model: '" + path + "' is not an ensemble checkpoint");
    }
    return unpack_ensemble(blob, "");
}

}  // namespace s2rl::worldmodel
