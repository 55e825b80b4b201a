#include "s2rl/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "build_info.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/textio.hpp"

namespace s2rl::orchestrator {

namespace fs = std::filesystem;
using datastore::ReplayBuffer;
using datastore::Transition;
using envsim::Role;

namespace {

// Child-stream slots off a run's root stream. Each consumer owns a fixed key
// so adding one never shifts another's draws. Phase 2 hangs its whole tree
// under kPhase2Key to stay clear of the phase-1 children; evaluation is keyed
// directly off the run seed so checkpointed evaluations can be replayed and
// so phase-1 and phase-2 evaluations at the same iteration share episode
// starts (common random numbers).
constexpr std::uint64_t kAgentKey = 0;
constexpr std::uint64_t kModelKey = 1;
constexpr std::uint64_t kCollectKey = 2;
constexpr std::uint64_t kRolloutKey = 3;
constexpr std::uint64_t kSacKey = 4;
constexpr std::uint64_t kLatentKey = 5;
constexpr std::uint64_t kEvalKey = 6;
constexpr std::uint64_t kBootstrapKey = 7;
constexpr std::uint64_t kPhase2Key = 9;

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    f.close();
    if (!f) throw IoError("failed writing " + path.string());
}

std::string checkpoint_name(const std::string& prefix, const char* stem, int iteration) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.s2rl", stem, iteration);
    return prefix + buf;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Running mean over the updates of one iteration.
struct LossAccum {
    double sum = 0.0;
    int n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    double mean() const { return n ? sum / n : 0.0; }
};

struct SacAccum {
    LossAccum critic1, critic2, actor;
    double alpha = 0.0;  // value after the last applied update
    int updates = 0;
    int skipped = 0;

    void add(const sacpolicy::UpdateReport& rep) {
        if (rep.skipped) {
            ++skipped;
            return;
        }
        critic1.add(rep.critic1_loss);
        critic2.add(rep.critic2_loss);
        actor.add(rep.actor_loss);
        alpha = rep.alpha;
        ++updates;
    }

    nlohmann::json to_json() const {
        return {{"critic1", critic1.mean()}, {"critic2", critic2.mean()},
                {"actor", actor.mean()},     {"alpha", alpha},
                {"updates", updates},        {"skipped", skipped}};
    }
};

struct LatentAccum {
    LossAccum pred_sim, pred_real, recon_sim, recon_real, corr, total;
    int updates = 0;
    int skipped = 0;

    void add(const latentspace::LatentLossReport& rep) {
        if (rep.skipped) {
            ++skipped;
            return;
        }
        pred_sim.add(rep.pred_sim);
        pred_real.add(rep.pred_real);
        recon_sim.add(rep.recon_sim);
        recon_real.add(rep.recon_real);
        corr.add(rep.corr);
        total.add(rep.total);
        ++updates;
    }

    nlohmann::json to_json() const {
        return {{"pred_sim", pred_sim.mean()},     {"pred_real", pred_real.mean()},
                {"recon_sim", recon_sim.mean()},   {"recon_real", recon_real.mean()},
                {"corr", corr.mean()},             {"total", total.mean()},
                {"updates", updates},              {"skipped", skipped}};
    }
};

nlohmann::json eval_to_json(const EvalRecord& e) {
    return {{"iteration", e.iteration},     {"sim_return", e.sim_return},
            {"real_return", e.real_return}, {"sum", e.sum},
            {"checkpoint", e.checkpoint}};
}

EvalRecord eval_from_json(const nlohmann::json& j) {
    EvalRecord e;
    e.iteration = j.value("iteration", 0);
    e.sim_return = j.value("sim_return", 0.0);
    e.real_return = j.value("real_return", 0.0);
    e.sum = j.value("sum", 0.0);
    e.checkpoint = j.value("checkpoint", std::string());
    return e;
}

// Writes the eval CSV and the manifest; called on success and on abort so a
// failed run still leaves an auditable trail.
void flush_outputs(RunManifest& man, const std::string& out_dir, const std::string& prefix,
                   const std::chrono::steady_clock::time_point& t0) {
    man.wall_clock_seconds = seconds_since(t0);
    auto listed = [&man](const std::string& name) {
        if (std::find(man.files.begin(), man.files.end(), name) == man.files.end()) {
            man.files.push_back(name);
        }
    };
    const std::string csv_name = prefix + "eval.csv";
    const std::string man_name = prefix + "manifest.json";
    listed(csv_name);
    listed(man_name);
    write_text(fs::path(out_dir) / csv_name, eval_history_csv(man.evals));
    save_manifest((fs::path(out_dir) / man_name).string(), man);
}

RunManifest start_manifest(const TrainerConfig& config, const std::string& mode_label) {
    RunManifest man;
    man.config_echo = config_to_json(config);
    man.code_version = kCodeVersion;
    man.seed = config.seed;
    man.mode = mode_label;
    return man;
}

// Stacks the observations of a uniform draw from the buffer into {n, obs}.
Array draw_starts(const ReplayBuffer& buffer, int n, RandomStream& rng) {
    return datastore::stack(datastore::sample_batch(buffer, n, rng)).s;
}

datastore::Policy stochastic_policy(const sacpolicy::Agent& agent) {
    return [&agent](const Array& obs, RandomStream& rng) {
        return sacpolicy::act(agent, obs, sacpolicy::ActMode::stochastic, rng);
    };
}

std::vector<Transition> load_offline(const std::string& path, const envsim::EnvSpec& real) {
    auto [rows, manifest] = datastore::load_dataset(path);
    if (manifest.env_spec.family != real.family) {
        throw ValidationError("offline dataset family " +
                              envsim::to_string(manifest.env_spec.family) +
                              " does not match the real spec family " +
                              envsim::to_string(real.family));
    }
    return rows;
}

}  // namespace

std::string to_string(Mode m) {
    switch (m) {
        case Mode::latent: return "latent";
        case Mode::pooled_baseline: return "pooled_baseline";
        case Mode::offline_only: return "offline_only";
    }
    throw ValidationError("unknown trainer mode");
}

Mode mode_from_string(const std::string& s) {
    if (s == "latent") return Mode::latent;
    if (s == "pooled_baseline") return Mode::pooled_baseline;
    if (s == "offline_only") return Mode::offline_only;
    throw ValidationError("unknown trainer mode '" + s + "'");
}

void validate(const TrainerConfig& config) {
    std::vector<std::string> bad;
    auto need = [&bad](bool ok, const std::string& msg) {
        if (!ok) bad.push_back(msg);
    };
    need(config.N >= 1, "N must be >= 1");
    need(config.E >= 1, "E must be >= 1");
    need(config.M >= 1, "M must be >= 1");
    need(config.G >= 1, "G must be >= 1");
    need(config.k >= 1, "k must be >= 1");
    need(config.rollout_batch >= 1, "rollout_batch must be >= 1");
    need(config.eval_every >= 1, "eval_every must be >= 1");
    need(config.eval_episodes >= 1, "eval_episodes must be >= 1");
    need(config.sim.role == Role::sim, "sim spec must have role=sim");
    need(config.real.role == Role::real, "real spec must have role=real");
    need(config.sim.family == config.real.family, "sim and real must share a task family");
    need(config.sim.scale > 0.0, "sim scale must be positive");
    need(config.real.scale > 0.0, "real scale must be positive");
    need(config.sim.horizon >= 1, "sim horizon must be >= 1");
    need(config.real.horizon >= 1, "real horizon must be >= 1");
    need(!config.out_dir.empty(), "out_dir must be set");

    const int obs = config.sim.family == envsim::Family::pendulum ? 3 : 4;
    need(config.dim_latent == 0 || config.dim_latent >= obs,
         "dim_latent must be 0 (auto) or at least the observation width");
    for (int h : config.map_hidden) need(h >= 1, "map_hidden layers must be >= 1");
    need(config.weights.w_pred >= 0.0 && config.weights.w_recon >= 0.0 &&
             config.weights.w_corr >= 0.0,
         "loss weights must be non-negative");
    need(config.weights.grad_to_encoders_from_corr >= 0.0 &&
             config.weights.grad_to_encoders_from_corr <= 1.0,
         "grad_to_encoders_from_corr must lie in [0, 1]");
    need(config.latent_lr > 0.0, "latent_lr must be positive");
    need(config.latent_batches >= 0, "latent_batches must be >= 0");
    need(config.latent_batch_size >= 1, "latent_batch_size must be >= 1");

    need(config.model.n_members >= 1, "model.n_members must be >= 1");
    need(config.model.n_elites >= 1 && config.model.n_elites <= config.model.n_members,
         "model.n_elites must lie in [1, n_members]");
    for (int h : config.sac_hidden) need(h >= 1, "sac_hidden layers must be >= 1");
    need(config.sac_lr > 0.0, "sac_lr must be positive");
    need(config.sac_batch >= 1, "sac_batch must be >= 1");

    need(config.env_buffer_capacity >=
             static_cast<std::size_t>(config.N) * static_cast<std::size_t>(config.E),
         "env_buffer_capacity must hold all N*E collected transitions");
    need(config.model_buffer_capacity >= 1, "model_buffer_capacity must be >= 1");
    need(config.bootstrap_episodes >= 1, "bootstrap_episodes must be >= 1");

    need(config.phase1_model_path.empty() == config.phase1_agent_path.empty(),
         "phase-1 model and agent paths must be given together");
    if (config.mode != Mode::pooled_baseline) {
        need(!config.real_offline_path.empty(),
             "mode " + to_string(config.mode) + " requires real_offline_path");
    }
    if (!bad.empty()) throw ValidationError("trainer config: " + join(bad, "; "));
}

nlohmann::json config_to_json(const TrainerConfig& c) {
    nlohmann::json j;
    j["mode"] = to_string(c.mode);
    j["N"] = c.N;
    j["E"] = c.E;
    j["M"] = c.M;
    j["G"] = c.G;
    j["k"] = c.k;
    j["rollout_batch"] = c.rollout_batch;
    j["eval_every"] = c.eval_every;
    j["eval_episodes"] = c.eval_episodes;
    j["seed"] = c.seed;
    j["sim"] = c.sim.to_kv();
    j["real"] = c.real.to_kv();
    j["real_offline_path"] = c.real_offline_path;
    j["out_dir"] = c.out_dir;
    j["dim_latent"] = c.dim_latent;
    j["map_hidden"] = c.map_hidden;
    j["weights"] = {{"w_pred", c.weights.w_pred},
                    {"w_recon", c.weights.w_recon},
                    {"w_corr", c.weights.w_corr},
                    {"grad_to_encoders_from_corr", c.weights.grad_to_encoders_from_corr}};
    j["freeze_maps"] = c.freeze_maps;
    j["latent_lr"] = c.latent_lr;
    j["latent_batches"] = c.latent_batches;
    j["latent_batch_size"] = c.latent_batch_size;
    j["model"] = {{"n_members", c.model.n_members},   {"n_elites", c.model.n_elites},
                  {"hidden", c.model.hidden},         {"batch_size", c.model.batch_size},
                  {"max_epochs", c.model.max_epochs}, {"patience", c.model.patience},
                  {"holdout_frac", c.model.holdout_frac}, {"lr", c.model.lr}};
    j["sac_hidden"] = c.sac_hidden;
    j["sac_lr"] = c.sac_lr;
    j["sac_batch"] = c.sac_batch;
    j["env_buffer_capacity"] = c.env_buffer_capacity;
    j["model_buffer_capacity"] = c.model_buffer_capacity;
    j["bootstrap_episodes"] = c.bootstrap_episodes;
    j["phase1_model_path"] = c.phase1_model_path;
    j["phase1_agent_path"] = c.phase1_agent_path;
    return j;
}

TrainerConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("trainer config: expected a JSON object");
    static const std::set<std::string> known = {
        "mode",        "N",          "E",
        "M",           "G",          "k",
        "rollout_batch", "eval_every", "eval_episodes",
        "seed",        "sim",        "real",
        "real_offline_path", "out_dir", "dim_latent",
        "map_hidden",  "weights",    "freeze_maps",
        "latent_lr",   "latent_batches", "latent_batch_size",
        "model",       "sac_hidden", "sac_lr",
        "sac_batch",   "env_buffer_capacity", "model_buffer_capacity",
        "bootstrap_episodes", "phase1_model_path", "phase1_agent_path"};
    static const std::set<std::string> known_weights = {"w_pred", "w_recon", "w_corr",
                                                        "grad_to_encoders_from_corr"};
    static const std::set<std::string> known_model = {
        "n_members",  "n_elites", "hidden", "batch_size",
        "max_epochs", "patience", "holdout_frac", "lr"};

    std::vector<std::string> bad;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) bad.push_back("unknown field '" + it.key() + "'");
    }
    if (j.contains("weights")) {
        for (auto it = j["weights"].begin(); it != j["weights"].end(); ++it) {
            if (!known_weights.count(it.key()))
                bad.push_back("unknown field 'weights." + it.key() + "'");
        }
    }
    if (j.contains("model")) {
        for (auto it = j["model"].begin(); it != j["model"].end(); ++it) {
            if (!known_model.count(it.key()))
                bad.push_back("unknown field 'model." + it.key() + "'");
        }
    }
    if (!bad.empty()) throw ValidationError("trainer config: " + join(bad, "; "));

    TrainerConfig c;
    try {
        c.mode = mode_from_string(j.value("mode", to_string(c.mode)));
        c.N = j.value("N", c.N);
        c.E = j.value("E", c.E);
        c.M = j.value("M", c.M);
        c.G = j.value("G", c.G);
        c.k = j.value("k", c.k);
        c.rollout_batch = j.value("rollout_batch", c.rollout_batch);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
        c.seed = j.value("seed", c.seed);
        if (j.contains("sim")) c.sim = envsim::EnvSpec::from_kv(j.at("sim").get<std::string>());
        if (j.contains("real")) c.real = envsim::EnvSpec::from_kv(j.at("real").get<std::string>());
        c.real_offline_path = j.value("real_offline_path", c.real_offline_path);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.dim_latent = j.value("dim_latent", c.dim_latent);
        c.map_hidden = j.value("map_hidden", c.map_hidden);
        if (j.contains("weights")) {
            const auto& w = j["weights"];
            c.weights.w_pred = w.value("w_pred", c.weights.w_pred);
            c.weights.w_recon = w.value("w_recon", c.weights.w_recon);
            c.weights.w_corr = w.value("w_corr", c.weights.w_corr);
            c.weights.grad_to_encoders_from_corr =
                w.value("grad_to_encoders_from_corr", c.weights.grad_to_encoders_from_corr);
        }
        c.freeze_maps = j.value("freeze_maps", c.freeze_maps);
        c.latent_lr = j.value("latent_lr", c.latent_lr);
        c.latent_batches = j.value("latent_batches", c.latent_batches);
        c.latent_batch_size = j.value("latent_batch_size", c.latent_batch_size);
        if (j.contains("model")) {
            const auto& m = j["model"];
            c.model.n_members = m.value("n_members", c.model.n_members);
            c.model.n_elites = m.value("n_elites", c.model.n_elites);
            c.model.hidden = m.value("hidden", c.model.hidden);
            c.model.batch_size = m.value("batch_size", c.model.batch_size);
            c.model.max_epochs = m.value("max_epochs", c.model.max_epochs);
            c.model.patience = m.value("patience", c.model.patience);
            c.model.holdout_frac = m.value("holdout_frac", c.model.holdout_frac);
            c.model.lr = m.value("lr", c.model.lr);
        }
        c.sac_hidden = j.value("sac_hidden", c.sac_hidden);
        c.sac_lr = j.value("sac_lr", c.sac_lr);
        c.sac_batch = j.value("sac_batch", c.sac_batch);
        c.env_buffer_capacity = j.value("env_buffer_capacity", c.env_buffer_capacity);
        c.model_buffer_capacity = j.value("model_buffer_capacity", c.model_buffer_capacity);
        c.bootstrap_episodes = j.value("bootstrap_episodes", c.bootstrap_episodes);
        c.phase1_model_path = j.value("phase1_model_path", c.phase1_model_path);
        c.phase1_agent_path = j.value("phase1_agent_path", c.phase1_agent_path);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("trainer config: ") + e.what());
    }
    return c;
}

void save_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j;
    j["config"] = m.config_echo;
    j["code_version"] = m.code_version;
    j["seed"] = m.seed;
    j["mode"] = m.mode;
    j["loss_history"] = m.loss_history;
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : m.evals) evals.push_back(eval_to_json(e));
    j["evals"] = evals;
    j["wall_clock_seconds"] = m.wall_clock_seconds;
    j["files"] = m.files;
    j["env_transitions"] = m.env_transitions;
    j["model_insertions"] = m.model_insertions;
    j["model_truncations"] = m.model_truncations;
    j["extra"] = m.extra;
    j["error"] = m.error;
    write_text(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open manifest " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("manifest " + path + ": " + e.what());
    }
    RunManifest m;
    try {
        m.config_echo = j.value("config", nlohmann::json::object());
        m.code_version = j.value("code_version", std::string());
        m.seed = j.value("seed", std::uint64_t{0});
        m.mode = j.value("mode", std::string());
        m.loss_history = j.value("loss_history", nlohmann::json::array());
        for (const auto& e : j.value("evals", nlohmann::json::array())) {
            m.evals.push_back(eval_from_json(e));
        }
        m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
        m.files = j.value("files", std::vector<std::string>{});
        m.env_transitions = j.value("env_transitions", std::uint64_t{0});
        m.model_insertions = j.value("model_insertions", std::uint64_t{0});
        m.model_truncations = j.value("model_truncations", std::uint64_t{0});
        m.extra = j.value("extra", nlohmann::json::object());
        m.error = j.value("error", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("manifest " + path + ": " + e.what());
    }
    return m;
}

std::string eval_history_csv(const std::vector<EvalRecord>& evals) {
    std::ostringstream out;
    out << "iteration,sim_return,real_return,sum\n";
    for (const auto& e : evals) {
        out << e.iteration << ',' << fmt_double(e.sim_return) << ',' << fmt_double(e.real_return)
            << ',' << fmt_double(e.sum) << '\n';
    }
    return out.str();
}

RandomStream eval_stream(std::uint64_t seed, int iteration, int env_index) {
    return RandomStream(seed).split(kEvalKey)
        .split(static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(env_index));
}

double evaluate(const sacpolicy::Agent& policy, const envsim::EnvSpec& spec,
                const ObsMap& encoder, int episodes, const RandomStream& rng) {
    if (episodes < 1) throw ValidationError("evaluate: episodes must be >= 1");
    const envsim::Environment env = envsim::make_env(spec);
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        RandomStream ep_rng = rng.split(static_cast<std::uint64_t>(ep));
        envsim::EnvState state = env.reset(ep_rng);
        double episode_return = 0.0;
        while (true) {
            const Array obs = encoder ? encoder(state.observation) : state.observation;
            const Array a = sacpolicy::act(policy, obs, sacpolicy::ActMode::deterministic, ep_rng);
            envsim::StepResult sr = env.step(state, a);
            episode_return += sr.reward;
            state = std::move(sr.next_state);
            if (sr.done) break;
        }
        total += episode_return;
    }
    return total / episodes;
}

EvalRecord select_best(const std::vector<EvalRecord>& history) {
    if (history.empty()) throw ValidationError("select_best: empty evaluation history");
    const EvalRecord* best = &history.front();
    for (const auto& e : history) {
        if (e.sum > best->sum) best = &e;
    }
    return *best;
}

Phase1Result phase1_single_env(const TrainerConfig& config) {
    validate(config);
    if (config.real_offline_path.empty()) {
        throw ValidationError("phase 1 requires real_offline_path");
    }
    fs::create_directories(config.out_dir);
    const bool is_final = config.mode == Mode::offline_only;
    const std::string prefix = is_final ? "" : "phase1_";
    const auto t0 = std::chrono::steady_clock::now();

    RunManifest man = start_manifest(config, is_final ? to_string(config.mode) : "phase1");
    try {
        const std::vector<Transition> data = load_offline(config.real_offline_path, config.real);

        RandomStream root(config.seed);

        worldmodel::EnsembleConfig mc = config.model;
        mc.seed = root.split(kModelKey).seed();
        auto [model, fit] = worldmodel::train_ensemble(data, mc);
        man.extra["model_fit"] = {{"best_nll", fit.best_nll},
                                  {"epochs_run", fit.epochs_run},
                                  {"stop_reason", fit.stop_reason},
                                  {"elites", fit.elites}};

        const envsim::Environment real_env = envsim::make_env(config.real);
        sacpolicy::SacConfig sc;
        sc.obs_dim = real_env.obs_dim();
        sc.act_dim = real_env.action_dim();
        sc.action_bound = real_env.action_bound();
        sc.hidden = config.sac_hidden;
        sc.lr = config.sac_lr;
        sc.seed = root.split(kAgentKey).seed();
        sacpolicy::Agent agent = sacpolicy::make_agent(sc);

        ReplayBuffer starts_buf(data.size());
        for (const Transition& t : data) starts_buf.push(t);
        ReplayBuffer model_buf(config.model_buffer_capacity);

        RandomStream start_rng = root.split(kCollectKey);
        RandomStream rollout_rng = root.split(kRolloutKey);
        RandomStream sac_rng = root.split(kSacKey);
        const datastore::Policy rollout_policy = stochastic_policy(agent);

        for (int n = 1; n <= config.N; ++n) {
            SacAccum sac;
            for (int e = 0; e < config.E; ++e) {
                for (int done_starts = 0; done_starts < config.M;) {
                    const int width = std::min(config.rollout_batch, config.M - done_starts);
                    const Array starts = draw_starts(starts_buf, width, start_rng);
                    worldmodel::RolloutResult rr =
                        worldmodel::model_rollout(model, rollout_policy, starts, config.k,
                                                  rollout_rng);
                    for (Transition& t : rr.transitions) model_buf.push(std::move(t));
                    man.model_insertions += rr.transitions.size();
                    man.model_truncations += static_cast<std::uint64_t>(rr.truncations);
                    done_starts += width;
                }
                for (int g = 0; g < config.G; ++g) {
                    if (model_buf.empty()) break;
                    const datastore::Batch batch =
                        datastore::stack(datastore::sample_batch(model_buf, config.sac_batch,
                                                                 sac_rng));
                    sac.add(sacpolicy::sac_update(agent, batch, sac_rng));
                }
            }
            man.loss_history.push_back({{"iteration", n}, {"sac", sac.to_json()}});

            if (n % config.eval_every == 0 || n == config.N) {
                EvalRecord rec;
                rec.iteration = n;
                rec.sim_return = evaluate(agent, config.sim, {}, config.eval_episodes,
                                          eval_stream(config.seed, n, 0));
                rec.real_return = evaluate(agent, config.real, {}, config.eval_episodes,
                                           eval_stream(config.seed, n, 1));
                rec.sum = rec.sim_return + rec.real_return;
                rec.checkpoint = checkpoint_name(prefix, "checkpoint", n);
                sacpolicy::save_agent((fs::path(config.out_dir) / rec.checkpoint).string(), agent);
                man.files.push_back(rec.checkpoint);
                man.evals.push_back(rec);
            }
        }

        const std::string model_name = prefix + "model.s2rl";
        const std::string agent_name = prefix + "agent.s2rl";
        worldmodel::save_model((fs::path(config.out_dir) / model_name).string(), model);
        sacpolicy::save_agent((fs::path(config.out_dir) / agent_name).string(), agent);
        man.files.push_back(model_name);
        man.files.push_back(agent_name);

        const EvalRecord best = select_best(man.evals);
        man.extra["best"] = eval_to_json(best);
        man.env_transitions = 0;  // phase 1 never touches the interactive env

        flush_outputs(man, config.out_dir, prefix, t0);
        return Phase1Result{std::move(model), std::move(agent), std::move(man)};
    } catch (const std::exception& e) {
        if (man.error.empty()) {
            man.error = e.what();
            flush_outputs(man, config.out_dir, prefix, t0);
        }
        throw;
    }
}

namespace {

// Phase 2 shared by the latent method and the pooled baseline. The baseline
// is the same loop with the latent width pinned to the observation width and
// every map frozen at its identity initialization, which reduces encode to
// the identity and the latent ensemble to a single pooled model on raw
// observations.
RunManifest run_phase2(const TrainerConfig& config) {
    validate(config);
    fs::create_directories(config.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest man = start_manifest(config, to_string(config.mode));

    try {
        const envsim::Environment sim_env = envsim::make_env(config.sim);
        const int ds = sim_env.obs_dim();
        const int dl = config.dim_latent == 0 ? ds + 2 : config.dim_latent;
        const bool update_maps = !config.freeze_maps;

        std::vector<Transition> offline;
        if (!config.real_offline_path.empty()) {
            offline = load_offline(config.real_offline_path, config.real);
        }

        RandomStream root = RandomStream(config.seed).split(kPhase2Key);

        // Phase-1 artifacts: reuse, train inline, or bootstrap from random
        // sim interaction when running the pooled baseline without a dataset.
        worldmodel::EnsembleModel single;
        sacpolicy::Agent agent;
        Role single_side = Role::real;
        if (!config.phase1_model_path.empty()) {
            single = worldmodel::load_model(config.phase1_model_path);
            agent = sacpolicy::extend_agent(sacpolicy::load_agent(config.phase1_agent_path), dl);
            man.extra["phase1"] = {{"model", config.phase1_model_path},
                                   {"agent", config.phase1_agent_path},
                                   {"reused", true}};
        } else if (!offline.empty()) {
            Phase1Result p1 = phase1_single_env(config);
            single = std::move(p1.model);
            agent = sacpolicy::extend_agent(p1.agent, dl);
            for (const std::string& name : p1.manifest.files) man.files.push_back(name);
            man.extra["phase1"] = {{"model", "phase1_model.s2rl"},
                                   {"agent", "phase1_agent.s2rl"},
                                   {"reused", false}};
        } else {
            single_side = Role::sim;
            RandomStream boot = root.split(kBootstrapKey);
            const datastore::Policy random_policy = [&sim_env](const Array&, RandomStream& r) {
                Array a({sim_env.action_dim()});
                for (int i = 0; i < sim_env.action_dim(); ++i) {
                    a.at(static_cast<std::size_t>(i)) =
                        r.uniform(-sim_env.action_bound(), sim_env.action_bound());
                }
                return a;
            };
            const std::vector<Transition> boot_rows =
                datastore::collect_episodes(sim_env, random_policy, config.bootstrap_episodes,
                                            boot);
            worldmodel::EnsembleConfig mc = config.model;
            mc.seed = root.split(kBootstrapKey, 1).seed();
            single = worldmodel::train_ensemble(boot_rows, mc).first;

            sacpolicy::SacConfig sc;
            sc.obs_dim = dl;
            sc.act_dim = sim_env.action_dim();
            sc.action_bound = sim_env.action_bound();
            sc.hidden = config.sac_hidden;
            sc.lr = config.sac_lr;
            sc.seed = root.split(kAgentKey).seed();
            agent = sacpolicy::make_agent(sc);
            man.extra["phase1"] = {{"bootstrap_transitions", boot_rows.size()},
                                   {"reused", false}};
        }

        latentspace::LatentModel lm = latentspace::init_from_single(
            single, single_side, dl, config.map_hidden, root.split(kModelKey).seed());
        lm.weights = config.weights;
        latentspace::LatentOptState opt = latentspace::make_opt_state(lm);
        numgrad::AdamConfig latent_adam;
        latent_adam.lr = config.latent_lr;

        ReplayBuffer env_buf(config.env_buffer_capacity);
        ReplayBuffer model_buf(config.model_buffer_capacity);
        ReplayBuffer offline_buf(std::max<std::size_t>(offline.size(), 1));
        for (const Transition& t : offline) offline_buf.push(t);

        RandomStream collect_rng = root.split(kCollectKey);
        RandomStream rollout_rng = root.split(kRolloutKey);
        RandomStream sac_rng = root.split(kSacKey);
        RandomStream latent_rng = root.split(kLatentKey);
        const datastore::Policy rollout_policy = stochastic_policy(agent);

        const ObsMap sim_encoder = [&lm](const Array& s) {
            return latentspace::encode(lm, Role::sim, s);
        };
        const ObsMap real_encoder = [&lm](const Array& s) {
            return latentspace::encode(lm, Role::real, s);
        };

        envsim::EnvState sim_state = sim_env.reset(collect_rng);
        for (int n = 1; n <= config.N; ++n) {
            // Joint latent-model update over both data sources. Skipped on
            // the first pass while D_env is still empty; without an offline
            // stream the real-side batch degenerates to a second sim draw.
            LatentAccum latent;
            if (!env_buf.empty()) {
                for (int b = 0; b < config.latent_batches; ++b) {
                    const datastore::Batch batch_sim = datastore::stack(
                        datastore::sample_batch(env_buf, config.latent_batch_size, latent_rng));
                    const datastore::Batch batch_real = datastore::stack(datastore::sample_batch(
                        offline_buf.empty() ? env_buf : offline_buf, config.latent_batch_size,
                        latent_rng));
                    latent.add(latentspace::latent_update(lm, batch_sim, batch_real,
                                                          config.weights, opt, latent_adam,
                                                          update_maps));
                }
            }

            SacAccum sac;
            for (int e = 0; e < config.E; ++e) {
                // One sim transition with the policy acting through the
                // sim-side encoder; stored in original coordinates.
                const Array z = latentspace::encode(lm, Role::sim, sim_state.observation);
                const Array a = sacpolicy::act(agent, z, sacpolicy::ActMode::stochastic,
                                               collect_rng);
                envsim::StepResult sr = sim_env.step(sim_state, a);
                env_buf.push(Transition{sim_state.observation, a, sr.reward,
                                        sr.next_state.observation, sr.done});
                sim_state = sr.done ? sim_env.reset(collect_rng) : std::move(sr.next_state);

                // M branched rollouts of depth k from uniformly drawn D_env
                // starts, in latent coordinates.
                for (int done_starts = 0; done_starts < config.M;) {
                    const int width = std::min(config.rollout_batch, config.M - done_starts);
                    const Array starts = draw_starts(env_buf, width, rollout_rng);
                    worldmodel::RolloutResult rr = latentspace::latent_rollout(
                        lm, rollout_policy, starts, Role::sim, config.k, rollout_rng);
                    for (Transition& t : rr.transitions) model_buf.push(std::move(t));
                    man.model_insertions += rr.transitions.size();
                    man.model_truncations += static_cast<std::uint64_t>(rr.truncations);
                    done_starts += width;
                }

                for (int g = 0; g < config.G; ++g) {
                    if (model_buf.empty()) break;
                    const datastore::Batch batch = datastore::stack(
                        datastore::sample_batch(model_buf, config.sac_batch, sac_rng));
                    sac.add(sacpolicy::sac_update(agent, batch, sac_rng));
                }
            }

            man.loss_history.push_back(
                {{"iteration", n}, {"latent", latent.to_json()}, {"sac", sac.to_json()}});

            if (n % config.eval_every == 0 || n == config.N) {
                EvalRecord rec;
                rec.iteration = n;
                rec.sim_return = evaluate(agent, config.sim, sim_encoder, config.eval_episodes,
                                          eval_stream(config.seed, n, 0));
                rec.real_return = evaluate(agent, config.real, real_encoder, config.eval_episodes,
                                           eval_stream(config.seed, n, 1));
                rec.sum = rec.sim_return + rec.real_return;
                rec.checkpoint = checkpoint_name("", "checkpoint", n);
                const std::string latent_name = checkpoint_name("", "latent", n);
                sacpolicy::save_agent((fs::path(config.out_dir) / rec.checkpoint).string(), agent);
                latentspace::save_latent((fs::path(config.out_dir) / latent_name).string(), lm);
                man.files.push_back(rec.checkpoint);
                man.files.push_back(latent_name);
                man.evals.push_back(rec);
            }
        }

        sacpolicy::save_agent((fs::path(config.out_dir) / "agent_final.s2rl").string(), agent);
        latentspace::save_latent((fs::path(config.out_dir) / "latent_final.s2rl").string(), lm);
        man.files.push_back("agent_final.s2rl");
        man.files.push_back("latent_final.s2rl");

        man.env_transitions = env_buf.size();
        man.extra["dim_latent"] = dl;
        man.extra["update_maps"] = update_maps;
        man.extra["offline_rows"] = offline.size();
        man.extra["best"] = eval_to_json(select_best(man.evals));

        flush_outputs(man, config.out_dir, "", t0);
        return man;
    } catch (const std::exception& e) {
        if (man.error.empty()) {
            man.error = e.what();
            flush_outputs(man, config.out_dir, "", t0);
        }
        throw;
    }
}

}  // namespace

RunManifest run_latent_training(const TrainerConfig& config) {
    if (config.mode != Mode::latent) {
        throw ValidationError("run_latent_training requires mode=latent");
    }
    return run_phase2(config);
}

RunManifest run_pooled_baseline(const TrainerConfig& config) {
    if (config.mode != Mode::pooled_baseline) {
        throw ValidationError("run_pooled_baseline requires mode=pooled_baseline");
    }
    TrainerConfig c = config;
    const int obs = c.sim.family == envsim::Family::pendulum ? 3 : 4;
    c.dim_latent = obs;    // policy consumes raw observations
    c.freeze_maps = true;  // identity maps, single pooled model
    return run_phase2(c);
}

}  // namespace s2rl::orchestrator
