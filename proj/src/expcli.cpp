#include "s2rl/expcli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "s2rl/datagen.hpp"
#include "s2rl/datastore.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/gapmetrics.hpp"
#include "s2rl/latentspace.hpp"
#include "s2rl/orchestrator.hpp"
#include "s2rl/serialize.hpp"
#include "s2rl/textio.hpp"

namespace s2rl::expcli {

namespace fs = std::filesystem;
using numgrad::Array;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

std::string read_file_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    f.close();
    if (!f) throw IoError("failed writing " + path);
}

// Relative output directories land under $S2RL_OUT when it is set, so a
// whole invocation can be redirected without touching its flags.
std::string resolve_out(const std::string& dir) {
    const std::string d = dir.empty() ? std::string(".") : dir;
    const char* root = std::getenv("S2RL_OUT");
    if (root != nullptr && *root != '\0' && !fs::path(d).is_absolute()) {
        return (fs::path(root) / d).string();
    }
    return d;
}

// One-line machine-readable failure record on the error stream.
int fail(std::ostream& err, int code, const std::string& type, const std::string& message) {
    const nlohmann::json record{
        {"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
    err << record.dump() << "\n";
    return code;
}

// Index of everything a subcommand wrote: "fnv1a_hex  name", sorted by name
// so reruns of a deterministic command produce identical indices.
void write_checksum_index(const std::string& dir, std::vector<std::string> names) {
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    std::string index;
    for (const std::string& name : names) {
        const std::string bytes = read_file_text((fs::path(dir) / name).string());
        const std::uint64_t h = datastore::fnv1a(
            reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
        index += hex;
        index += "  ";
        index += name;
        index += "\n";
    }
    write_text((fs::path(dir) / "checksums.txt").string(), index);
}

std::vector<double> parse_scale_list(const std::string& text) {
    std::vector<double> scales;
    for (const std::string& token : split(text, ',')) {
        if (!token.empty()) scales.push_back(parse_double(token));
    }
    if (scales.empty()) throw ValidationError("empty scale list: '" + text + "'");
    return scales;
}

// CLI11 consumes argument vectors back to front. Returns false when --help
// was requested (help text already written); other parse errors propagate.
bool parse_or_help(CLI::App& app, std::vector<std::string> args, std::ostream& out) {
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return false;
    }
    return true;
}

datastore::Policy uniform_policy(int act_dim, double bound) {
    return [act_dim, bound](const Array&, RandomStream& rng) {
        Array a({act_dim});
        for (int i = 0; i < act_dim; ++i) {
            a.at(static_cast<std::size_t>(i)) = rng.uniform(-bound, bound);
        }
        return a;
    };
}

// Observation matrix {n, obs_dim} from whole-episode rollouts; used by the
// divergence reports, which need broad state coverage rather than a tuned
// policy on every (axis, scale) cell.
Array rollout_observations(const envsim::EnvSpec& spec, const datastore::Policy& policy,
                           int episodes, const RandomStream& stream) {
    envsim::Environment env = envsim::make_env(spec);
    RandomStream rng = stream;
    return datastore::stack(datastore::collect_episodes(env, policy, episodes, rng)).s;
}

datastore::Policy stochastic_agent_policy(const sacpolicy::Agent& agent) {
    return [&agent](const Array& obs, RandomStream& rng) {
        return sacpolicy::act(agent, obs, sacpolicy::ActMode::stochastic, rng);
    };
}

envsim::Perturbation parse_axis(envsim::Family family, const std::string& name) {
    const envsim::Perturbation axis = envsim::perturbation_from_string(name);
    const std::vector<envsim::Perturbation> axes = gapmetrics::family_axes(family);
    if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
        std::string known;
        for (const envsim::Perturbation a : axes) {
            if (!known.empty()) known += ", ";
            known += envsim::to_string(a);
        }
        throw ValidationError("family " + envsim::to_string(family) + " has no axis '" + name +
                              "'; available: " + known);
    }
    return axis;
}

// Runs one training configuration and leaves a complete, auditable run
// directory behind: resolved config, manifest, eval CSV, checkpoints and a
// checksum index over all of them.
orchestrator::RunManifest execute_run(const orchestrator::TrainerConfig& config) {
    orchestrator::validate(config);
    fs::create_directories(config.out_dir);
    write_text((fs::path(config.out_dir) / "config.json").string(),
               orchestrator::config_to_json(config).dump(2) + "\n");

    orchestrator::RunManifest man;
    switch (config.mode) {
        case orchestrator::Mode::offline_only:
            man = orchestrator::phase1_single_env(config).manifest;
            break;
        case orchestrator::Mode::latent:
            man = orchestrator::run_latent_training(config);
            break;
        case orchestrator::Mode::pooled_baseline:
            man = orchestrator::run_pooled_baseline(config);
            break;
    }

    std::vector<std::string> files = man.files;
    files.push_back("config.json");
    write_checksum_index(config.out_dir, std::move(files));
    return man;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Generate an offline dataset from a mid-training policy"};
    std::string family_name = "pendulum";
    std::string quality_name = "medium";
    std::string perturbation_name = "none";
    std::string name;
    std::string out_dir;
    int size = 4000;
    double scale = 1.0;
    int horizon = 200;
    std::uint64_t seed = 0;
    datastore::OfflineGenConfig gen;
    app.add_option("--family", family_name, "pendulum | pointmass");
    app.add_option("--quality", quality_name, "medium | medium-replay");
    app.add_option("--size", size, "transitions to keep");
    app.add_option("--perturbation", perturbation_name, "physics axis, 'none' for unperturbed");
    app.add_option("--scale", scale, "perturbation scale factor");
    app.add_option("--horizon", horizon, "episode length");
    app.add_option("--seed", seed, "generation seed");
    app.add_option("--fraction", gen.medium_fraction, "normalized-score stop threshold");
    app.add_option("--max-steps", gen.max_env_steps, "env-step budget for the generating run");
    app.add_option("--warmup", gen.warmup_steps, "uniform-random warmup steps");
    app.add_option("--name", name, "output basename, default <family>_<quality>");
    app.add_option("--out", out_dir, "output directory");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    envsim::EnvSpec spec;
    spec.family = envsim::family_from_string(family_name);
    spec.perturbation = envsim::perturbation_from_string(perturbation_name);
    spec.scale = scale;
    spec.role = envsim::Role::real;
    spec.horizon = horizon;

    const datastore::Quality quality = datastore::quality_from_string(quality_name);
    if (name.empty()) {
        name = envsim::to_string(spec.family) + "_" + datastore::to_string(quality);
        std::replace(name.begin(), name.end(), '-', '_');
    }
    const std::string dir = resolve_out(out_dir);
    fs::create_directories(dir);

    RandomStream rng(seed);
    const datastore::OfflineDataset ds =
        datastore::make_offline_dataset(spec, quality, size, rng, gen);

    const std::string data_name = name + ".s2rl";
    const std::string policy_name = name + "_policy.s2rl";
    const std::string manifest_name = name + "_manifest.json";
    datastore::save_dataset((fs::path(dir) / data_name).string(), ds.transitions, ds.manifest);
    sacpolicy::save_agent((fs::path(dir) / policy_name).string(), ds.policy);

    nlohmann::json mj = ds.manifest.to_json();
    mj["seed"] = seed;
    mj["policy_file"] = policy_name;
    mj["stats_protocol"] = {{"episodes", gen.stats_episodes}, {"actions", "stochastic"}};
    write_text((fs::path(dir) / manifest_name).string(), mj.dump(2) + "\n");

    write_checksum_index(dir, {data_name, policy_name, manifest_name});
    out << "dataset: " << (fs::path(dir) / data_name).string() << "\n"
        << "  transitions " << ds.transitions.size() << ", generating-policy return "
        << fmt_double(ds.manifest.policy_return_mean) << " +/- "
        << fmt_double(ds.manifest.policy_return_std) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train-single / train-latent / train-baseline
// ---------------------------------------------------------------------------

int cmd_train(orchestrator::Mode mode, std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Run " + orchestrator::to_string(mode) + " training"};
    std::string config_path;
    std::string out_dir;
    std::string dataset;
    std::string phase1_model;
    std::string phase1_agent;
    std::int64_t seed = -1;
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--out", out_dir, "run directory, overrides the config's out_dir");
    app.add_option("--seed", seed, "run seed, overrides the config");
    app.add_option("--dataset", dataset, "offline dataset, overrides real_offline_path");
    app.add_option("--phase1-model", phase1_model, "reuse a saved phase-1 ensemble");
    app.add_option("--phase1-agent", phase1_agent, "reuse a saved phase-1 policy");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    const ExperimentConfig ec =
        config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    orchestrator::TrainerConfig t = ec.trainer;
    t.mode = mode;
    if (!out_dir.empty()) t.out_dir = out_dir;
    if (seed >= 0) t.seed = static_cast<std::uint64_t>(seed);
    if (!dataset.empty()) t.real_offline_path = dataset;
    if (!phase1_model.empty()) t.phase1_model_path = phase1_model;
    if (!phase1_agent.empty()) t.phase1_agent_path = phase1_agent;
    if (t.out_dir.empty()) {
        throw ValidationError("no output directory: pass --out or set out_dir in the config");
    }
    t.out_dir = resolve_out(t.out_dir);

    const orchestrator::RunManifest man = execute_run(t);
    const orchestrator::EvalRecord best = orchestrator::select_best(man.evals);
    out << orchestrator::to_string(mode) << " run complete: " << t.out_dir << "\n"
        << "  best iteration " << best.iteration << ": sim " << fmt_double(best.sim_return)
        << ", real " << fmt_double(best.real_return) << ", sum " << fmt_double(best.sum)
        << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Replay a recorded evaluation from its checkpoint"};
    std::string run_dir;
    std::string out_dir;
    int iteration = -1;
    app.add_option("--run", run_dir, "run directory holding manifest.json")->required();
    app.add_option("--iteration", iteration,
                   "evaluation iteration to replay, default: best by sim+real");
    app.add_option("--out", out_dir, "output directory, default: the run directory");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    const orchestrator::RunManifest man =
        orchestrator::load_manifest((fs::path(run_dir) / "manifest.json").string());
    if (man.evals.empty()) {
        throw ValidationError("run has no recorded evaluations: " + run_dir);
    }
    orchestrator::EvalRecord rec;
    if (iteration < 0) {
        rec = orchestrator::select_best(man.evals);
    } else {
        const auto it = std::find_if(man.evals.begin(), man.evals.end(),
                                     [iteration](const orchestrator::EvalRecord& e) {
                                         return e.iteration == iteration;
                                     });
        if (it == man.evals.end()) {
            std::string recorded;
            for (const orchestrator::EvalRecord& e : man.evals) {
                if (!recorded.empty()) recorded += ", ";
                recorded += std::to_string(e.iteration);
            }
            throw ValidationError("no evaluation at iteration " + std::to_string(iteration) +
                                  "; recorded: " + recorded);
        }
        rec = *it;
    }

    const orchestrator::TrainerConfig t = orchestrator::config_from_json(man.config_echo);
    const sacpolicy::Agent agent =
        sacpolicy::load_agent((fs::path(run_dir) / rec.checkpoint).string());

    // Latent runs snapshot the maps next to each checkpoint; identity
    // encoders otherwise (offline-only and pooled runs act on raw
    // observations, the pooled run's maps are frozen at identity anyway).
    orchestrator::ObsMap sim_encoder;
    orchestrator::ObsMap real_encoder;
    char latent_name[32];
    std::snprintf(latent_name, sizeof(latent_name), "latent_%04d.s2rl", rec.iteration);
    if (std::find(man.files.begin(), man.files.end(), std::string(latent_name)) !=
        man.files.end()) {
        auto lm = std::make_shared<latentspace::LatentModel>(
            latentspace::load_latent((fs::path(run_dir) / latent_name).string()));
        sim_encoder = [lm](const Array& o) { return latentspace::encode(*lm, envsim::Role::sim, o); };
        real_encoder =
            [lm](const Array& o) { return latentspace::encode(*lm, envsim::Role::real, o); };
    }

    orchestrator::EvalRecord replay = rec;
    replay.sim_return = orchestrator::evaluate(agent, t.sim, sim_encoder, t.eval_episodes,
                                               orchestrator::eval_stream(man.seed,
                                                                         rec.iteration, 0));
    replay.real_return = orchestrator::evaluate(agent, t.real, real_encoder, t.eval_episodes,
                                                orchestrator::eval_stream(man.seed,
                                                                          rec.iteration, 1));
    replay.sum = replay.sim_return + replay.real_return;

    const std::string dest = out_dir.empty() ? run_dir : resolve_out(out_dir);
    char csv_name[40];
    std::snprintf(csv_name, sizeof(csv_name), "eval_replay_%04d.csv", rec.iteration);
    write_text((fs::path(dest) / csv_name).string(), orchestrator::eval_history_csv({replay}));

    const bool match =
        replay.sim_return == rec.sim_return && replay.real_return == rec.real_return;
    out << orchestrator::eval_history_csv({replay});
    if (match) {
        out << "replay matches the recorded evaluation exactly\n";
        return kExitOk;
    }
    out << "replay DIFFERS from the recorded evaluation: recorded sim "
        << fmt_double(rec.sim_return) << ", real " << fmt_double(rec.real_return) << "\n";
    return kExitFailure;
}

// ---------------------------------------------------------------------------
// gap-report / kl-report
// ---------------------------------------------------------------------------

// Grid evaluation shared by the two divergence reports: observation sets are
// collected with per-(axis, scale) substreams, the sim set once.
std::vector<gapmetrics::GapReport> build_gap_reports(
    const latentspace::LatentModel& model, envsim::Family family,
    const std::vector<envsim::Perturbation>& axes, const std::vector<double>& scales,
    int episodes, int horizon, std::uint64_t seed, const sacpolicy::Agent* collect_agent) {
    envsim::EnvSpec sim_spec;
    sim_spec.family = family;
    sim_spec.perturbation = envsim::Perturbation::none;
    sim_spec.scale = 1.0;
    sim_spec.role = envsim::Role::sim;
    sim_spec.horizon = horizon;

    const envsim::Environment probe = envsim::make_env(sim_spec);
    const datastore::Policy policy =
        collect_agent != nullptr
            ? stochastic_agent_policy(*collect_agent)
            : uniform_policy(probe.action_dim(), probe.action_bound());

    const RandomStream root(seed);
    const Array sim_obs = rollout_observations(sim_spec, policy, episodes, root.split(0));

    std::vector<gapmetrics::GapReport> reports;
    for (std::size_t ai = 0; ai < axes.size(); ++ai) {
        gapmetrics::GapReport report;
        report.family = family;
        report.axis = axes[ai];
        report.seed = seed;
        for (std::size_t si = 0; si < scales.size(); ++si) {
            envsim::EnvSpec real_spec = sim_spec;
            real_spec.role = envsim::Role::real;
            real_spec.perturbation = axes[ai];
            real_spec.scale = scales[si];
            const Array real_obs =
                rollout_observations(real_spec, policy, episodes, root.split(1 + ai, si));

            gapmetrics::GapCell cell;
            cell.scale = scales[si];
            cell.m_identity_gap = gapmetrics::m_identity_gap(model, real_obs);
            const gapmetrics::KlComparison kl = gapmetrics::kl_ratio(model, real_obs, sim_obs);
            cell.kl_original = kl.kl_original;
            cell.kl_latent = kl.kl_latent;
            cell.kl_ratio = kl.ratio;
            cell.n_real = kl.n_real;
            cell.n_sim = kl.n_sim;
            cell.excluded_latent_coords = kl.excluded_latent_coords;
            cell.variance_floored = kl.variance_floored;
            report.cells.push_back(cell);
        }
        reports.push_back(std::move(report));
    }
    return reports;
}

int cmd_gap_report(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Transfer-gap diagnostics of a trained latent model over a perturbation grid"};
    std::string latent_path;
    std::string family_name = "pendulum";
    std::string axis_name = "all";
    std::string scales_text;
    std::string policy_path;
    std::string config_path;
    std::string out_dir;
    int episodes = 20;
    int horizon = 200;
    std::uint64_t seed = 0;
    app.add_option("--latent", latent_path, "trained latent model file")->required();
    app.add_option("--family", family_name, "pendulum | pointmass");
    app.add_option("--axis", axis_name, "one perturbation axis, or 'all'");
    app.add_option("--scales", scales_text, "comma list, default 1,1.05,1.1,1.5,2");
    app.add_option("--episodes", episodes, "rollout episodes per observation set");
    app.add_option("--horizon", horizon, "episode length for collection");
    app.add_option("--seed", seed, "collection seed");
    app.add_option("--policy", policy_path, "collect with this agent instead of random actions");
    app.add_option("--config", config_path, "experiment config (report toggles)");
    app.add_option("--out", out_dir, "output directory");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    const ExperimentConfig ec =
        config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    const latentspace::LatentModel model = latentspace::load_latent(latent_path);
    const envsim::Family family = envsim::family_from_string(family_name);
    const std::vector<envsim::Perturbation> axes =
        axis_name == "all" ? gapmetrics::family_axes(family)
                           : std::vector<envsim::Perturbation>{parse_axis(family, axis_name)};
    const std::vector<double> scales =
        scales_text.empty()
            ? std::vector<double>(std::begin(envsim::kScales), std::end(envsim::kScales))
            : parse_scale_list(scales_text);

    sacpolicy::Agent collect_agent;
    const bool with_agent = !policy_path.empty();
    if (with_agent) collect_agent = sacpolicy::load_agent(policy_path);

    const std::vector<gapmetrics::GapReport> reports =
        build_gap_reports(model, family, axes, scales, episodes, horizon, seed,
                          with_agent ? &collect_agent : nullptr);

    const std::string dir = resolve_out(out_dir);
    std::vector<std::string> written;
    for (const gapmetrics::GapMetric metric :
         {gapmetrics::GapMetric::m_identity_gap, gapmetrics::GapMetric::kl_original,
          gapmetrics::GapMetric::kl_latent, gapmetrics::GapMetric::kl_ratio}) {
        const std::string name = "gap_" + gapmetrics::to_string(metric) + ".csv";
        write_text((fs::path(dir) / name).string(), gapmetrics::gap_table_csv(reports, metric));
        written.push_back(name);
    }
    if (ec.emit_json) {
        write_text((fs::path(dir) / "gap_report.json").string(),
                   gapmetrics::gap_report_json(reports));
        written.push_back("gap_report.json");
    }
    write_checksum_index(dir, std::move(written));

    out << gapmetrics::gap_table_csv(reports, gapmetrics::GapMetric::m_identity_gap);
    out << "gap report written to " << dir << "\n";
    return kExitOk;
}

int cmd_kl_report(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Original- vs latent-space divergence across scales on one axis"};
    std::string latent_path;
    std::string family_name = "pendulum";
    std::string axis_name = "gravity";
    std::string scales_text;
    std::string policy_path;
    std::string config_path;
    std::string out_dir;
    int episodes = 20;
    int horizon = 200;
    std::uint64_t seed = 0;
    app.add_option("--latent", latent_path, "trained latent model file")->required();
    app.add_option("--family", family_name, "pendulum | pointmass");
    app.add_option("--axis", axis_name, "perturbation axis");
    app.add_option("--scales", scales_text, "comma list, default 1,1.05,1.1,1.5,2");
    app.add_option("--episodes", episodes, "rollout episodes per observation set");
    app.add_option("--horizon", horizon, "episode length for collection");
    app.add_option("--seed", seed, "collection seed");
    app.add_option("--policy", policy_path, "collect with this agent instead of random actions");
    app.add_option("--config", config_path, "experiment config (report toggles)");
    app.add_option("--out", out_dir, "output directory");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    const ExperimentConfig ec =
        config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    const latentspace::LatentModel model = latentspace::load_latent(latent_path);
    const envsim::Family family = envsim::family_from_string(family_name);
    const envsim::Perturbation axis = parse_axis(family, axis_name);
    const std::vector<double> scales =
        scales_text.empty()
            ? std::vector<double>(std::begin(envsim::kScales), std::end(envsim::kScales))
            : parse_scale_list(scales_text);

    sacpolicy::Agent collect_agent;
    const bool with_agent = !policy_path.empty();
    if (with_agent) collect_agent = sacpolicy::load_agent(policy_path);

    const std::vector<gapmetrics::GapReport> reports =
        build_gap_reports(model, family, {axis}, scales, episodes, horizon, seed,
                          with_agent ? &collect_agent : nullptr);

    std::string csv =
        "scale,kl_original,kl_latent,kl_ratio,n_real,n_sim,excluded_latent_coords,"
        "variance_floored\n";
    for (const gapmetrics::GapCell& cell : reports.front().cells) {
        csv += fmt_double(cell.scale) + "," + fmt_double(cell.kl_original) + "," +
               fmt_double(cell.kl_latent) + "," + fmt_double(cell.kl_ratio) + "," +
               std::to_string(cell.n_real) + "," + std::to_string(cell.n_sim) + "," +
               std::to_string(cell.excluded_latent_coords) + "," +
               (cell.variance_floored ? "1" : "0") + "\n";
    }

    const std::string dir = resolve_out(out_dir);
    std::vector<std::string> written = {"kl_report.csv"};
    write_text((fs::path(dir) / "kl_report.csv").string(), csv);
    if (ec.emit_json) {
        write_text((fs::path(dir) / "kl_report.json").string(),
                   gapmetrics::gap_report_json(reports));
        written.push_back("kl_report.json");
    }
    write_checksum_index(dir, std::move(written));

    out << csv << "kl report written to " << dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// degrade
// ---------------------------------------------------------------------------

int cmd_degrade(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Direct-transfer degradation table for a frozen policy"};
    std::string family_name = "pendulum";
    std::string axis_name;
    std::string scales_text;
    std::string policy_path;
    std::string config_path;
    std::string out_dir;
    int episodes = 20;
    int seeds = 5;
    std::uint64_t policy_seed = 0;
    app.add_option("--family", family_name, "pendulum | pointmass");
    app.add_option("--axis", axis_name, "restrict to one perturbation axis");
    app.add_option("--scales", scales_text, "comma list, default 1,1.05,1.1,1.5,2");
    app.add_option("--episodes", episodes, "episodes per (scale, seed) cell");
    app.add_option("--seeds", seeds, "evaluation seeds 0..n-1");
    app.add_option("--policy", policy_path,
                   "saved policy; default: a freshly initialized (untrained) one");
    app.add_option("--policy-seed", policy_seed, "init seed for the default policy");
    app.add_option("--config", config_path, "experiment config (report toggles)");
    app.add_option("--out", out_dir, "output directory");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    const ExperimentConfig ec =
        config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    const envsim::Family family = envsim::family_from_string(family_name);
    const std::vector<double> scales =
        scales_text.empty()
            ? std::vector<double>(std::begin(envsim::kScales), std::end(envsim::kScales))
            : parse_scale_list(scales_text);
    if (seeds < 1) throw ValidationError("--seeds must be >= 1");

    sacpolicy::Agent policy;
    if (!policy_path.empty()) {
        policy = sacpolicy::load_agent(policy_path);
    } else {
        envsim::EnvSpec probe_spec;
        probe_spec.family = family;
        const envsim::Environment env = envsim::make_env(probe_spec);
        sacpolicy::SacConfig sc;
        sc.obs_dim = env.obs_dim();
        sc.act_dim = env.action_dim();
        sc.action_bound = env.action_bound();
        sc.seed = policy_seed;
        policy = sacpolicy::make_agent(sc);
    }

    std::vector<std::uint64_t> seed_list(static_cast<std::size_t>(seeds));
    std::iota(seed_list.begin(), seed_list.end(), std::uint64_t{0});
    gapmetrics::DegradationTable table =
        gapmetrics::degradation_study(policy, family, scales, episodes, seed_list);

    if (!axis_name.empty()) {
        const envsim::Perturbation axis = parse_axis(family, axis_name);
        const auto it = std::find(table.axes.begin(), table.axes.end(), axis);
        const std::size_t row = static_cast<std::size_t>(it - table.axes.begin());
        table.axes = {axis};
        table.cells = {table.cells[row]};
    }

    const std::string dir = resolve_out(out_dir);
    std::vector<std::string> written = {"degradation.csv"};
    write_text((fs::path(dir) / "degradation.csv").string(),
               gapmetrics::degradation_csv(table));
    if (ec.emit_json) {
        write_text((fs::path(dir) / "degradation.json").string(),
                   gapmetrics::degradation_json(table));
        written.push_back("degradation.json");
    }
    write_checksum_index(dir, std::move(written));

    out << gapmetrics::degradation_csv(table) << "degradation table written to " << dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepCell {
    std::string mode;
    double scale = 0.0;
    std::uint64_t seed = 0;
    orchestrator::EvalRecord best;
};

int cmd_sweep(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Train every (mode, scale, seed) cell of a transfer study and tabulate"};
    std::string config_path;
    std::string out_dir;
    std::string axis_name;
    std::string scales_text;
    std::string modes_text = "latent,pooled_baseline,offline_only";
    int seeds = -1;
    int gen_size = 4000;
    double gen_fraction = 0.5;
    int gen_max_steps = 30000;
    std::uint64_t gen_seed = 9000;
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--out", out_dir, "sweep root directory")->required();
    app.add_option("--axis", axis_name, "perturbation axis, default from config");
    app.add_option("--scales", scales_text, "comma list, default from config");
    app.add_option("--modes", modes_text, "comma list of training modes to tabulate");
    app.add_option("--seeds", seeds, "training seeds 0..n-1, default from config");
    app.add_option("--gen-size", gen_size, "transitions per generated dataset");
    app.add_option("--gen-fraction", gen_fraction, "dataset quality threshold");
    app.add_option("--gen-max-steps", gen_max_steps, "dataset generation budget");
    app.add_option("--gen-seed", gen_seed, "base seed for dataset generation");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    const ExperimentConfig ec =
        config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    const envsim::Family family = ec.trainer.sim.family;
    const envsim::Perturbation axis =
        axis_name.empty() ? ec.sweep_axes.front() : parse_axis(family, axis_name);
    const std::vector<double> scales =
        scales_text.empty() ? ec.sweep_scales : parse_scale_list(scales_text);
    const int n_seeds = seeds > 0 ? seeds : ec.sweep_seeds;
    if (n_seeds < 1) throw ValidationError("sweep needs at least one seed");

    std::vector<orchestrator::Mode> modes;
    for (const std::string& token : split(modes_text, ',')) {
        if (token.empty()) continue;
        const orchestrator::Mode m = orchestrator::mode_from_string(token);
        if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
    }
    if (modes.empty()) throw ValidationError("empty mode list: '" + modes_text + "'");
    const bool offline_requested =
        std::find(modes.begin(), modes.end(), orchestrator::Mode::offline_only) != modes.end();

    const std::string root = resolve_out(out_dir);
    fs::create_directories(root);

    // The sim side is always the unperturbed environment; only the real side
    // moves with the sweep scale.
    envsim::EnvSpec sim_spec = ec.trainer.sim;
    sim_spec.perturbation = envsim::Perturbation::none;
    sim_spec.scale = 1.0;
    sim_spec.role = envsim::Role::sim;

    std::vector<SweepCell> cells;
    for (std::size_t si = 0; si < scales.size(); ++si) {
        envsim::EnvSpec real_spec = sim_spec;
        real_spec.role = envsim::Role::real;
        real_spec.perturbation = axis;
        real_spec.scale = scales[si];

        // One dataset per real environment, shared by every seed and mode of
        // the column so training differences cannot hide in the data.
        const std::string scale_token = fmt_double(scales[si]);
        const std::string dataset_path =
            (fs::path(root) / "datasets" /
             (envsim::to_string(family) + "_" + envsim::to_string(axis) + "_s" + scale_token +
              ".s2rl"))
                .string();
        if (!fs::exists(dataset_path)) {
            out << "[sweep] generating dataset " << dataset_path << "\n";
            out.flush();
            fs::create_directories(fs::path(dataset_path).parent_path());
            datastore::OfflineGenConfig gen;
            gen.medium_fraction = gen_fraction;
            gen.max_env_steps = gen_max_steps;
            RandomStream gen_rng(gen_seed + si);
            const datastore::OfflineDataset ds = datastore::make_offline_dataset(
                real_spec, datastore::Quality::medium, gen_size, gen_rng, gen);
            datastore::save_dataset(dataset_path, ds.transitions, ds.manifest);
        }

        for (int seed = 0; seed < n_seeds; ++seed) {
            const fs::path cell_root = fs::path(root) / "cells" /
                                       (envsim::to_string(axis) + "_s" + scale_token) /
                                       ("seed" + std::to_string(seed));

            orchestrator::TrainerConfig base = ec.trainer;
            base.sim = sim_spec;
            base.real = real_spec;
            base.real_offline_path = dataset_path;
            base.seed = static_cast<std::uint64_t>(seed);
            base.phase1_model_path.clear();
            base.phase1_agent_path.clear();

            // The offline-only run doubles as the shared phase 1: both
            // phase-2 modes start from its ensemble and policy, so every
            // mode in a cell builds on identical groundwork.
            orchestrator::TrainerConfig offline_cfg = base;
            offline_cfg.mode = orchestrator::Mode::offline_only;
            offline_cfg.out_dir = (cell_root / "offline_only").string();
            const orchestrator::RunManifest offline_man = execute_run(offline_cfg);
            if (offline_requested) {
                cells.push_back({orchestrator::to_string(orchestrator::Mode::offline_only),
                                 scales[si], static_cast<std::uint64_t>(seed),
                                 orchestrator::select_best(offline_man.evals)});
            }
            out << "[sweep] scale " << scale_token << " seed " << seed
                << " offline_only done\n";
            out.flush();

            for (const orchestrator::Mode mode : modes) {
                if (mode == orchestrator::Mode::offline_only) continue;
                orchestrator::TrainerConfig cfg = base;
                cfg.mode = mode;
                cfg.out_dir = (cell_root / orchestrator::to_string(mode)).string();
                cfg.phase1_model_path = (fs::path(offline_cfg.out_dir) / "model.s2rl").string();
                cfg.phase1_agent_path = (fs::path(offline_cfg.out_dir) / "agent.s2rl").string();
                const orchestrator::RunManifest man = execute_run(cfg);
                cells.push_back({orchestrator::to_string(mode), scales[si],
                                 static_cast<std::uint64_t>(seed),
                                 orchestrator::select_best(man.evals)});
                out << "[sweep] scale " << scale_token << " seed " << seed << " "
                    << orchestrator::to_string(mode) << " done\n";
                out.flush();
            }
        }
    }

    // Per-cell rows, loop order (scale-major, then seed, then mode).
    std::string cells_csv = "mode,axis,scale,seed,iteration,sim_return,real_return,sum\n";
    for (const SweepCell& c : cells) {
        cells_csv += c.mode + "," + envsim::to_string(axis) + "," + fmt_double(c.scale) + "," +
                     std::to_string(c.seed) + "," + std::to_string(c.best.iteration) + "," +
                     fmt_double(c.best.sim_return) + "," + fmt_double(c.best.real_return) +
                     "," + fmt_double(c.best.sum) + "\n";
    }

    // Aggregate table: one row per scale, sim/real/sum columns per mode,
    // seed-averaged.
    std::string table_csv = "scale";
    for (const orchestrator::Mode mode : modes) {
        const std::string m = orchestrator::to_string(mode);
        table_csv += "," + m + "_sim," + m + "_real," + m + "_sum";
    }
    table_csv += "\n";
    for (const double scale : scales) {
        table_csv += fmt_double(scale);
        for (const orchestrator::Mode mode : modes) {
            const std::string m = orchestrator::to_string(mode);
            double sim = 0.0;
            double real = 0.0;
            double sum = 0.0;
            int n = 0;
            for (const SweepCell& c : cells) {
                if (c.mode == m && c.scale == scale) {
                    sim += c.best.sim_return;
                    real += c.best.real_return;
                    sum += c.best.sum;
                    ++n;
                }
            }
            const double dn = n > 0 ? static_cast<double>(n) : 1.0;
            table_csv += "," + fmt_double(sim / dn) + "," + fmt_double(real / dn) + "," +
                         fmt_double(sum / dn);
        }
        table_csv += "\n";
    }

    std::vector<std::string> written = {"sweep.csv", "sweep_cells.csv"};
    write_text((fs::path(root) / "sweep.csv").string(), table_csv);
    write_text((fs::path(root) / "sweep_cells.csv").string(), cells_csv);
    if (ec.emit_json) {
        nlohmann::json cj = nlohmann::json::array();
        for (const SweepCell& c : cells) {
            cj.push_back({{"mode", c.mode},
                          {"axis", envsim::to_string(axis)},
                          {"scale", c.scale},
                          {"seed", c.seed},
                          {"iteration", c.best.iteration},
                          {"sim_return", c.best.sim_return},
                          {"real_return", c.best.real_return},
                          {"sum", c.best.sum}});
        }
        const nlohmann::json sj{{"family", envsim::to_string(family)},
                                {"axis", envsim::to_string(axis)},
                                {"scales", scales},
                                {"seeds", n_seeds},
                                {"cells", cj}};
        write_text((fs::path(root) / "sweep.json").string(), sj.dump(2) + "\n");
        written.push_back("sweep.json");
    }
    write_checksum_index(root, std::move(written));

    out << table_csv << "sweep written to " << root << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

std::string xml_escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        if (c == '&') {
            out += "&amp;";
        } else if (c == '<') {
            out += "&lt;";
        } else if (c == '>') {
            out += "&gt;";
        } else {
            out += c;
        }
    }
    return out;
}

// A table cell is numeric if it parses after stripping a trailing
// "+/- spread" annotation; anything else becomes a gap in the series.
double parse_cell(const std::string& raw) {
    std::string s = raw;
    for (const std::string& sep : {std::string("\xC2\xB1"), std::string("+/-")}) {
        const std::size_t pos = s.find(sep);
        if (pos != std::string::npos) s = s.substr(0, pos);
    }
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.pop_back();
    if (s.empty()) return std::nan("");
    try {
        return parse_double(s);
    } catch (const ValidationError&) {
        return std::nan("");
    }
}

std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
}

int cmd_plot(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"Render a CSV table as an SVG line chart"};
    std::string input;
    std::string out_file;
    std::string title;
    int width = 900;
    int height = 520;
    app.add_option("--input", input, "CSV file, first row = header, first column = x")
        ->required();
    app.add_option("--out", out_file, "SVG file, default: the input with .svg extension");
    app.add_option("--title", title, "chart title, default: the input filename");
    app.add_option("--width", width, "canvas width in px");
    app.add_option("--height", height, "canvas height in px");
    if (!parse_or_help(app, std::move(args), out)) return kExitOk;

    const std::string text = read_file_text(input);
    std::vector<std::string> lines = split(text, '\n');
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.size() < 2) throw ValidationError("plot input needs a header row and data rows");
    const std::vector<std::string> header = split(lines[0], ',');
    if (header.size() < 2) throw ValidationError("plot input needs at least two columns");

    const std::size_t n_rows = lines.size() - 1;
    const std::size_t n_series = header.size() - 1;
    std::vector<std::string> x_labels(n_rows);
    std::vector<double> x(n_rows);
    std::vector<std::vector<double>> y(n_series, std::vector<double>(n_rows, std::nan("")));

    bool numeric_x = true;
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::vector<std::string> cells = split(lines[r + 1], ',');
        if (cells.size() != header.size()) {
            throw ValidationError("row " + std::to_string(r + 2) + " has " +
                                  std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(header.size()));
        }
        x_labels[r] = cells[0];
        const double xv = parse_cell(cells[0]);
        if (std::isnan(xv)) {
            numeric_x = false;
        } else {
            x[r] = xv;
        }
        for (std::size_t c = 0; c < n_series; ++c) y[c][r] = parse_cell(cells[c + 1]);
    }
    if (!numeric_x) {
        for (std::size_t r = 0; r < n_rows; ++r) x[r] = static_cast<double>(r);
    }

    double x_min = x[0];
    double x_max = x[0];
    double y_min = std::numeric_limits<double>::infinity();
    double y_max = -std::numeric_limits<double>::infinity();
    for (const double v : x) {
        x_min = std::min(x_min, v);
        x_max = std::max(x_max, v);
    }
    for (const auto& series : y) {
        for (const double v : series) {
            if (std::isnan(v)) continue;
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
        }
    }
    if (!std::isfinite(y_min)) throw ValidationError("plot input has no numeric data cells");
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max == y_min) {
        y_max += 1.0;
        y_min -= 1.0;
    }
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double ml = 70.0;
    const double mr = 160.0;
    const double mt = 40.0;
    const double mb = 50.0;
    const double pw = width - ml - mr;
    const double ph = height - mt - mb;
    const auto sx = [&](double v) { return ml + (v - x_min) / (x_max - x_min) * pw; };
    const auto sy = [&](double v) { return mt + (y_max - v) / (y_max - y_min) * ph; };

    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                     "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    const std::string shown_title =
        title.empty() ? fs::path(input).filename().string() : title;
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << xml_escape(shown_title)
        << "</text>\n";

    // Axes with min/mid/max ticks; category labels when x is not numeric.
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    for (const double f : {0.0, 0.5, 1.0}) {
        const double yv = y_min + f * (y_max - y_min);
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << sy(yv) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << svg_num(yv) << "</text>\n"
            << "<line x1=\"" << ml - 4 << "\" y1=\"" << sy(yv) << "\" x2=\"" << ml
            << "\" y2=\"" << sy(yv) << "\" stroke=\"black\"/>\n";
    }
    if (numeric_x) {
        for (const double f : {0.0, 0.5, 1.0}) {
            const double xv = x_min + f * (x_max - x_min);
            svg << "<text x=\"" << sx(xv) << "\" y=\"" << mt + ph + 18
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
                << svg_num(xv) << "</text>\n";
        }
    } else {
        for (std::size_t r = 0; r < n_rows; ++r) {
            svg << "<text x=\"" << sx(x[r]) << "\" y=\"" << mt + ph + 18
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
                << xml_escape(x_labels[r]) << "</text>\n";
        }
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << xml_escape(header[0]) << "</text>\n";

    for (std::size_t c = 0; c < n_series; ++c) {
        const char* color = kPalette[c % kPaletteSize];
        std::string points;
        for (std::size_t r = 0; r < n_rows; ++r) {
            if (std::isnan(y[c][r])) continue;
            if (!points.empty()) points += " ";
            points += svg_num(sx(x[r])) + "," + svg_num(sy(y[c][r]));
        }
        if (points.empty()) continue;
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" "
            << "points=\"" << points << "\"/>\n";
        const double ly = mt + 14 + 18 * static_cast<double>(c);
        svg << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 34
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.8\"/>\n"
            << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(header[c + 1])
            << "</text>\n";
    }
    svg << "</svg>\n";

    std::string dest = out_file;
    if (dest.empty()) dest = fs::path(input).replace_extension(".svg").string();
    write_text(dest, svg.str());
    out << "wrote " << dest << "\n";
    return kExitOk;
}

const char kUsage[] =
    "usage: s2rl-cli <subcommand> [flags]   (every subcommand accepts --help)\n"
    "\n"
    "  gen-data        generate an offline dataset from a mid-training policy\n"
    "  train-single    offline-only MBPO baseline on the real dataset\n"
    "  train-latent    shared-latent training: sim interaction + real offline data\n"
    "  train-baseline  pooled single-model baseline on raw observations\n"
    "  eval            replay a recorded evaluation from its checkpoint\n"
    "  gap-report      latent-model gap diagnostics over a perturbation grid\n"
    "  kl-report       original- vs latent-space divergence per scale\n"
    "  degrade         direct-transfer degradation table for a frozen policy\n"
    "  sweep           train every (mode, scale, seed) cell and tabulate\n"
    "  plot            render a CSV table as an SVG line chart\n";

}  // namespace

// ---------------------------------------------------------------------------
// Config loading and dispatch
// ---------------------------------------------------------------------------

ExperimentConfig load_config(const std::string& path) {
    std::string text = read_file_text(path);
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
    const auto not_space = [](unsigned char c) { return std::isspace(c) == 0; };
    if (std::find_if(text.begin(), text.end(), not_space) == text.end()) {
        return {};  // an empty config file means all defaults
    }

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("config " + path + ": top level must be a JSON object");
    }

    ExperimentConfig cfg;
    try {
        if (j.contains("sweep")) {
            const nlohmann::json s = j.at("sweep");
            if (!s.is_object()) throw ValidationError("config field sweep: must be an object");
            static const std::set<std::string> known = {"axes", "scales", "seeds"};
            std::string unknown;
            for (const auto& [key, value] : s.items()) {
                (void)value;
                if (known.count(key) == 0) unknown += (unknown.empty() ? "" : ", ") + key;
            }
            if (!unknown.empty()) {
                throw ValidationError("config field sweep: unknown keys: " + unknown);
            }
            if (s.contains("axes")) {
                cfg.sweep_axes.clear();
                for (const auto& a : s.at("axes")) {
                    cfg.sweep_axes.push_back(
                        envsim::perturbation_from_string(a.get<std::string>()));
                }
            }
            if (s.contains("scales")) cfg.sweep_scales = s.at("scales").get<std::vector<double>>();
            if (s.contains("seeds")) cfg.sweep_seeds = s.at("seeds").get<int>();
            if (cfg.sweep_axes.empty() || cfg.sweep_scales.empty() || cfg.sweep_seeds < 1) {
                throw ValidationError(
                    "config field sweep: axes and scales must be non-empty, seeds >= 1");
            }
            j.erase("sweep");
        }
        if (j.contains("reports")) {
            const nlohmann::json r = j.at("reports");
            if (!r.is_object()) {
                throw ValidationError("config field reports: must be an object");
            }
            for (const auto& [key, value] : r.items()) {
                (void)value;
                if (key != "json") {
                    throw ValidationError("config field reports: unknown key: " + key);
                }
            }
            if (r.contains("json")) cfg.emit_json = r.at("json").get<bool>();
            j.erase("reports");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config ") + path + ": " + e.what());
    }

    cfg.trainer = orchestrator::config_from_json(j);
    return cfg;
}

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (args.empty()) {
        return fail(err, kExitUnknownCommand, "usage",
                    "no subcommand given; expected one of: gen-data, train-single, "
                    "train-latent, train-baseline, eval, gap-report, kl-report, degrade, "
                    "sweep, plot");
    }
    const std::string cmd = args[0];
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    if (cmd == "help" || cmd == "--help" || cmd == "-h") {
        out << kUsage;
        return kExitOk;
    }
    try {
        if (cmd == "gen-data") return cmd_gen_data(rest, out);
        if (cmd == "train-single") return cmd_train(orchestrator::Mode::offline_only, rest, out);
        if (cmd == "train-latent") return cmd_train(orchestrator::Mode::latent, rest, out);
        if (cmd == "train-baseline") {
            return cmd_train(orchestrator::Mode::pooled_baseline, rest, out);
        }
        if (cmd == "eval") return cmd_eval(rest, out);
        if (cmd == "gap-report") return cmd_gap_report(rest, out);
        if (cmd == "kl-report") return cmd_kl_report(rest, out);
        if (cmd == "degrade") return cmd_degrade(rest, out);
        if (cmd == "sweep") return cmd_sweep(rest, out);
        if (cmd == "plot") return cmd_plot(rest, out);
        return fail(err, kExitUnknownCommand, "unknown_subcommand",
                    "unknown subcommand '" + cmd + "'; run with --help for the list");
    } catch (const CLI::ParseError& e) {
        return fail(err, kExitInvalidConfig, "flags", e.what());
    } catch (const ValidationError& e) {
        return fail(err, kExitInvalidConfig, "validation", e.what());
    } catch (const IoError& e) {
        return fail(err, kExitMissingInput, "io", e.what());
    } catch (const std::exception& e) {
        return fail(err, kExitFailure, "runtime", e.what());
    }
}

}  // namespace s2rl::expcli
