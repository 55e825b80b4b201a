// Command-line front end: exit codes, machine-readable error records, config
// loading, run-directory contents, checkpoint replay, and the report/plot
// outputs. Everything drives cli_run() in-process with captured streams — the
// binary in tools/ is a two-line wrapper around the same entry point.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "s2rl/datastore.hpp"
#include "s2rl/envsim.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/expcli.hpp"
#include "s2rl/orchestrator.hpp"
#include "s2rl/serialize.hpp"
#include "s2rl/textio.hpp"

using namespace s2rl;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    const std::string dir = "/tmp/s2rl_test_cli_" + name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    REQUIRE(bool(f));
    f << text;
}

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = expcli::cli_run(args, out, err);
    return {code, out.str(), err.str()};
}

// Failure records are single-line JSON objects so scripts can dispatch on
// them without scraping prose.
nlohmann::json error_record(const CliResult& r) {
    REQUIRE(!r.err.empty());
    const nlohmann::json j = nlohmann::json::parse(r.err);
    REQUIRE(j.contains("error"));
    return j.at("error");
}

datastore::Policy uniform_policy(const envsim::Environment& env) {
    return [&env](const numgrad::Array&, RandomStream& rng) {
        numgrad::Array a({env.action_dim()});
        for (int i = 0; i < env.action_dim(); ++i) {
            a.at(static_cast<std::size_t>(i)) =
                rng.uniform(-env.action_bound(), env.action_bound());
        }
        return a;
    };
}

// Small random-policy dataset shared by the training-command tests.
std::string offline_dataset_path() {
    static const std::string path = [] {
        const std::string dir = fresh_dir("fixtures");
        envsim::EnvSpec spec;
        spec.family = envsim::Family::pendulum;
        spec.role = envsim::Role::real;
        spec.horizon = 100;
        envsim::Environment env = envsim::make_env(spec);
        RandomStream rng(41);
        const std::vector<datastore::Transition> rows =
            datastore::collect_episodes(env, uniform_policy(env), 6, rng);
        datastore::DatasetManifest man;
        man.env_spec = spec;
        man.generator = "random";
        man.transition_count = static_cast<std::int64_t>(rows.size());
        const std::string p = dir + "/pendulum_random.s2rl";
        datastore::save_dataset(p, rows, man);
        return p;
    }();
    return path;
}

orchestrator::TrainerConfig tiny_trainer(envsim::Family family) {
    orchestrator::TrainerConfig t;
    t.N = 2;
    t.E = 10;
    t.M = 4;
    t.G = 2;
    t.k = 1;
    t.rollout_batch = 4;
    t.eval_every = 1;
    t.eval_episodes = 2;
    t.seed = 3;
    const int horizon = family == envsim::Family::pendulum ? 60 : 100;
    t.sim = {family, envsim::Perturbation::none, 1.0, envsim::Role::sim, horizon};
    t.real = {family, envsim::Perturbation::gravity, 1.5, envsim::Role::real, horizon};
    t.map_hidden = {8};
    t.latent_batches = 2;
    t.latent_batch_size = 64;
    t.model.n_members = 2;
    t.model.n_elites = 1;
    t.model.hidden = {16, 16};
    t.model.batch_size = 32;
    t.model.max_epochs = 5;
    t.model.patience = 3;
    t.sac_hidden = {16, 16};
    t.sac_batch = 32;
    return t;
}

std::string write_trainer_config(const std::string& dir,
                                 const orchestrator::TrainerConfig& t) {
    const std::string path = dir + "/config_in.json";
    write_file(path, orchestrator::config_to_json(t).dump(2) + "\n");
    return path;
}

// The hex-prefixed checksum line for one file in a run's index.
std::uint64_t indexed_checksum(const std::string& dir, const std::string& name) {
    const std::string index = read_file(dir + "/checksums.txt");
    for (const std::string& line : split(index, '\n')) {
        if (line.size() > 18 && line.substr(18) == name) {
            return std::stoull(line.substr(0, 16), nullptr, 16);
        }
    }
    FAIL("no checksum entry for " << name);
    return 0;
}

std::uint64_t file_checksum(const std::string& path) {
    const std::string bytes = read_file(path);
    return datastore::fnv1a(reinterpret_cast<const unsigned char*>(bytes.data()),
                            bytes.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Dispatch and exit codes
// ---------------------------------------------------------------------------

TEST_CASE("dispatch: help, unknown subcommands and empty invocations") {
    const CliResult none = run_cli({});
    CHECK(none.code == expcli::kExitUnknownCommand);
    CHECK(error_record(none).at("type") == "usage");

    const CliResult bogus = run_cli({"train-everything"});
    CHECK(bogus.code == expcli::kExitUnknownCommand);
    const nlohmann::json rec = error_record(bogus);
    CHECK(rec.at("type") == "unknown_subcommand");
    CHECK(rec.at("exit_code") == expcli::kExitUnknownCommand);
    CHECK(rec.at("message").get<std::string>().find("train-everything") != std::string::npos);

    const CliResult usage = run_cli({"help"});
    CHECK(usage.code == expcli::kExitOk);
    CHECK(usage.out.find("gen-data") != std::string::npos);
    CHECK(usage.out.find("sweep") != std::string::npos);

    const CliResult sub_help = run_cli({"gen-data", "--help"});
    CHECK(sub_help.code == expcli::kExitOk);
    CHECK(sub_help.out.find("--family") != std::string::npos);
}

TEST_CASE("exit codes separate flag errors, bad configs and missing inputs") {
    // Required flag absent -> invalid invocation.
    const CliResult no_flag = run_cli({"plot"});
    CHECK(no_flag.code == expcli::kExitInvalidConfig);
    CHECK(error_record(no_flag).at("type") == "flags");

    // Unparseable flag value.
    const CliResult bad_value = run_cli({"degrade", "--seeds", "many"});
    CHECK(bad_value.code == expcli::kExitInvalidConfig);

    // Referenced files that do not exist.
    CHECK(run_cli({"eval", "--run", "/nonexistent/run"}).code == expcli::kExitMissingInput);
    CHECK(run_cli({"plot", "--input", "/nonexistent/t.csv"}).code ==
          expcli::kExitMissingInput);
    CHECK(run_cli({"train-latent", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x"})
              .code == expcli::kExitMissingInput);

    // Semantically invalid values are named in the message.
    const CliResult bad_family = run_cli({"degrade", "--family", "cartpole"});
    CHECK(bad_family.code == expcli::kExitInvalidConfig);
    CHECK(error_record(bad_family).at("message").get<std::string>().find("cartpole") !=
          std::string::npos);
}

TEST_CASE("invalid trainer configs report every violation by name") {
    const std::string dir = fresh_dir("badcfg");
    orchestrator::TrainerConfig t = tiny_trainer(envsim::Family::pendulum);
    t.real.scale = -1.0;
    t.N = 0;
    t.real_offline_path = offline_dataset_path();
    const std::string cfg = write_trainer_config(dir, t);

    const CliResult r = run_cli({"train-single", "--config", cfg, "--out", dir + "/run"});
    CHECK(r.code == expcli::kExitInvalidConfig);
    const std::string msg = error_record(r).at("message").get<std::string>();
    CHECK(msg.find("scale") != std::string::npos);   // the bad field is named
    CHECK(msg.find("N must be") != std::string::npos);  // and all violations are listed
}

// ---------------------------------------------------------------------------
// Config loading
// ---------------------------------------------------------------------------

TEST_CASE("load_config: empty files mean defaults, junk is rejected with position") {
    const std::string dir = fresh_dir("loadcfg");

    write_file(dir + "/empty.json", "");
    const expcli::ExperimentConfig from_empty = expcli::load_config(dir + "/empty.json");
    CHECK(from_empty.trainer.N == orchestrator::TrainerConfig{}.N);
    CHECK(from_empty.sweep_seeds == 5);
    CHECK(from_empty.emit_json);

    write_file(dir + "/blank.json", " \n\t  \n");
    CHECK(expcli::load_config(dir + "/blank.json").trainer.E ==
          orchestrator::TrainerConfig{}.E);

    write_file(dir + "/broken.json", "{ \"N\": 3, ");
    try {
        (void)expcli::load_config(dir + "/broken.json");
        FAIL("parse error not raised");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line") != std::string::npos);
    }

    write_file(dir + "/array.json", "[1, 2]");
    CHECK_THROWS_AS((void)expcli::load_config(dir + "/array.json"), ValidationError);

    // Unknown keys anywhere are named, so typos cannot silently fall back to
    // defaults.
    write_file(dir + "/typo.json", "{\"latent_batchez\": 4}");
    try {
        (void)expcli::load_config(dir + "/typo.json");
        FAIL("unknown key not raised");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("latent_batchez") != std::string::npos);
    }

    write_file(dir + "/sweep_typo.json", "{\"sweep\": {\"axez\": [\"gravity\"]}}");
    CHECK_THROWS_AS((void)expcli::load_config(dir + "/sweep_typo.json"), ValidationError);

    write_file(dir + "/sweep.json",
               "{\"N\": 7, \"sweep\": {\"axes\": [\"mass\", \"gravity\"], "
               "\"scales\": [1.0, 2.0], \"seeds\": 3}, \"reports\": {\"json\": false}}");
    const expcli::ExperimentConfig ec = expcli::load_config(dir + "/sweep.json");
    CHECK(ec.trainer.N == 7);
    REQUIRE(ec.sweep_axes.size() == 2);
    CHECK(ec.sweep_axes[0] == envsim::Perturbation::mass);
    CHECK(ec.sweep_axes[1] == envsim::Perturbation::gravity);
    CHECK(ec.sweep_scales == std::vector<double>{1.0, 2.0});
    CHECK(ec.sweep_seeds == 3);
    CHECK(!ec.emit_json);
}

TEST_CASE("load_config round-trips a resolved trainer config") {
    const std::string dir = fresh_dir("roundtrip");
    orchestrator::TrainerConfig t = tiny_trainer(envsim::Family::pointmass);
    t.mode = orchestrator::Mode::latent;
    t.real_offline_path = "/data/some.s2rl";
    t.out_dir = "/runs/a";
    t.dim_latent = 6;
    t.freeze_maps = true;
    t.weights.w_corr = 2.5;

    const std::string path = write_trainer_config(dir, t);
    const expcli::ExperimentConfig ec = expcli::load_config(path);
    CHECK(orchestrator::config_to_json(ec.trainer) == orchestrator::config_to_json(t));
}

// ---------------------------------------------------------------------------
// Reports and plotting
// ---------------------------------------------------------------------------

TEST_CASE("degrade writes the axis-by-scale table plus checksum index") {
    const std::string dir = fresh_dir("degrade");
    const CliResult r = run_cli({"degrade", "--family", "pendulum", "--axis", "gravity",
                                 "--seeds", "2", "--episodes", "1", "--scales", "1,1.5,2",
                                 "--out", dir});
    REQUIRE(r.code == expcli::kExitOk);

    const std::string csv = read_file(dir + "/degradation.csv");
    const std::vector<std::string> lines = split(csv, '\n');
    REQUIRE(lines.size() >= 2);
    CHECK(lines[0] == "axis,1,1.5,2");
    CHECK(lines[1].substr(0, 8) == "gravity,");
    CHECK(lines[1].find("\xC2\xB1") != std::string::npos);  // mean +/- std cells

    // The command writes exactly its outputs, nothing else.
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        names.insert(e.path().filename().string());
    }
    CHECK(names ==
          std::set<std::string>{"degradation.csv", "degradation.json", "checksums.txt"});
    CHECK(indexed_checksum(dir, "degradation.csv") == file_checksum(dir + "/degradation.csv"));

    // Unsupported axis for the family is rejected with the options listed.
    const CliResult bad = run_cli({"degrade", "--family", "pendulum", "--axis", "drag"});
    CHECK(bad.code == expcli::kExitInvalidConfig);
    CHECK(error_record(bad).at("message").get<std::string>().find("length") !=
          std::string::npos);
}

TEST_CASE("S2RL_OUT redirects relative output directories") {
    const std::string root = fresh_dir("outroot");
    REQUIRE(::setenv("S2RL_OUT", root.c_str(), 1) == 0);
    const CliResult r = run_cli({"degrade", "--family", "pointmass", "--axis", "gravity",
                                 "--seeds", "1", "--episodes", "1", "--scales", "1",
                                 "--out", "sub/deg"});
    REQUIRE(::unsetenv("S2RL_OUT") == 0);
    REQUIRE(r.code == expcli::kExitOk);
    CHECK(fs::exists(root + "/sub/deg/degradation.csv"));
}

TEST_CASE("plot renders CSV tables as self-contained SVG") {
    const std::string dir = fresh_dir("plot");

    // Categorical x column with mean +/- std cells, as in degradation tables.
    write_file(dir + "/table.csv",
               "axis,1,1.5,2\n"
               "gravity,-120.5\xC2\xB1"
               "3.2,-340.25\xC2\xB1"
               "10,-800\xC2\xB1"
               "42\n"
               "length,-118\xC2\xB1"
               "2,-300\xC2\xB1"
               "9,-754\xC2\xB1"
               "40\n");
    const CliResult r1 = run_cli({"plot", "--input", dir + "/table.csv", "--title",
                                  "returns & scales", "--out", dir + "/table.svg"});
    REQUIRE(r1.code == expcli::kExitOk);
    const std::string svg = read_file(dir + "/table.svg");
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("<svg ") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("returns &amp; scales") != std::string::npos);  // escaped title
    CHECK(svg.find("gravity") != std::string::npos);  // category tick labels

    // Numeric x, default output name next to the input.
    write_file(dir + "/curve.csv",
               "iteration,sim_return,real_return\n1,-3,-4\n2,-2,-3.5\n3,-1,-2\n");
    const CliResult r2 = run_cli({"plot", "--input", dir + "/curve.csv"});
    REQUIRE(r2.code == expcli::kExitOk);
    CHECK(fs::exists(dir + "/curve.svg"));

    // Degenerate tables are rejected rather than rendered empty.
    write_file(dir + "/onecol.csv", "x\n1\n2\n");
    CHECK(run_cli({"plot", "--input", dir + "/onecol.csv"}).code ==
          expcli::kExitInvalidConfig);
    write_file(dir + "/nonum.csv", "x,y\na,b\n");
    CHECK(run_cli({"plot", "--input", dir + "/nonum.csv"}).code ==
          expcli::kExitInvalidConfig);
}

// ---------------------------------------------------------------------------
// Data generation
// ---------------------------------------------------------------------------

TEST_CASE("gen-data produces a loadable dataset with manifest and policy") {
    const std::string dir = fresh_dir("gendata");
    const CliResult r = run_cli({"gen-data", "--family", "pointmass", "--quality", "medium",
                                 "--size", "300", "--horizon", "100", "--fraction", "0.01",
                                 "--max-steps", "6000", "--seed", "0", "--out", dir});
    REQUIRE(r.code == expcli::kExitOk);

    const auto [rows, man] = datastore::load_dataset(dir + "/pointmass_medium.s2rl");
    CHECK(rows.size() == 300);
    CHECK(man.generator == "medium");
    CHECK(man.env_spec.family == envsim::Family::pointmass);
    CHECK(man.env_spec.horizon == 100);

    const nlohmann::json mj =
        nlohmann::json::parse(read_file(dir + "/pointmass_medium_manifest.json"));
    CHECK(mj.at("policy_file") == "pointmass_medium_policy.s2rl");
    CHECK(mj.at("stats_protocol").at("episodes") == 20);
    CHECK(fs::exists(dir + "/pointmass_medium_policy.s2rl"));
    CHECK(indexed_checksum(dir, "pointmass_medium.s2rl") ==
          file_checksum(dir + "/pointmass_medium.s2rl"));

    CHECK(run_cli({"gen-data", "--quality", "expert", "--out", dir}).code ==
          expcli::kExitInvalidConfig);
}

// ---------------------------------------------------------------------------
// Training commands, run directories, checkpoint replay
// ---------------------------------------------------------------------------

TEST_CASE("train-single leaves a complete run directory and replays bit-exactly") {
    const std::string dir = fresh_dir("trainsingle");
    orchestrator::TrainerConfig t = tiny_trainer(envsim::Family::pendulum);
    const std::string cfg = write_trainer_config(dir, t);
    const std::string dataset = offline_dataset_path();

    const CliResult r = run_cli({"train-single", "--config", cfg, "--dataset", dataset,
                                 "--out", dir + "/a", "--seed", "3"});
    REQUIRE(r.code == expcli::kExitOk);
    CHECK(r.out.find("best iteration") != std::string::npos);

    for (const char* name : {"config.json", "eval.csv", "manifest.json", "checksums.txt",
                             "model.s2rl", "agent.s2rl", "checkpoint_0001.s2rl",
                             "checkpoint_0002.s2rl"}) {
        CHECK(fs::exists(dir + "/a/" + name));
    }
    CHECK(indexed_checksum(dir + "/a", "eval.csv") == file_checksum(dir + "/a/eval.csv"));

    // The stored config is the resolved one: reloading it reproduces the run
    // settings including flag overrides.
    const nlohmann::json stored = nlohmann::json::parse(read_file(dir + "/a/config.json"));
    CHECK(stored.at("seed") == 3);
    CHECK(stored.at("real_offline_path") == dataset);
    CHECK(stored.at("mode") == "offline_only");

    // Same config + seed, different directory: byte-identical CSV.
    const CliResult r2 = run_cli({"train-single", "--config", cfg, "--dataset", dataset,
                                  "--out", dir + "/b", "--seed", "3"});
    REQUIRE(r2.code == expcli::kExitOk);
    CHECK(read_file(dir + "/a/eval.csv") == read_file(dir + "/b/eval.csv"));

    // Checkpoint replay reproduces the recorded row exactly.
    const CliResult rep = run_cli({"eval", "--run", dir + "/a", "--iteration", "2"});
    REQUIRE(rep.code == expcli::kExitOk);
    CHECK(rep.out.find("matches the recorded evaluation exactly") != std::string::npos);
    const std::string replay_csv = read_file(dir + "/a/eval_replay_0002.csv");
    const std::vector<std::string> replay_lines = split(replay_csv, '\n');
    const std::vector<std::string> eval_lines = split(read_file(dir + "/a/eval.csv"), '\n');
    REQUIRE(replay_lines.size() >= 2);
    CHECK(replay_lines[0] == eval_lines[0]);
    CHECK(replay_lines[1] == eval_lines[2]);  // header, iteration 1, iteration 2

    // Asking for an unrecorded iteration lists what exists.
    const CliResult missing = run_cli({"eval", "--run", dir + "/a", "--iteration", "99"});
    CHECK(missing.code == expcli::kExitInvalidConfig);
    CHECK(error_record(missing).at("message").get<std::string>().find("recorded") !=
          std::string::npos);
}

TEST_CASE("train-latent run replays through its latent snapshots") {
    const std::string dir = fresh_dir("trainlatent");
    orchestrator::TrainerConfig t = tiny_trainer(envsim::Family::pendulum);
    const std::string cfg = write_trainer_config(dir, t);

    const CliResult r = run_cli({"train-latent", "--config", cfg, "--dataset",
                                 offline_dataset_path(), "--out", dir + "/run"});
    REQUIRE(r.code == expcli::kExitOk);
    CHECK(fs::exists(dir + "/run/latent_final.s2rl"));
    CHECK(fs::exists(dir + "/run/latent_0002.s2rl"));

    // Replay picks the best record by default and must hit it exactly,
    // which only works if the encoder snapshot from that iteration is used.
    const CliResult rep = run_cli({"eval", "--run", dir + "/run"});
    REQUIRE(rep.code == expcli::kExitOk);
    CHECK(rep.out.find("matches the recorded evaluation exactly") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

TEST_CASE("sweep trains the grid and tabulates per-mode returns") {
    const std::string dir = fresh_dir("sweep");
    orchestrator::TrainerConfig t = tiny_trainer(envsim::Family::pointmass);
    nlohmann::json j = orchestrator::config_to_json(t);
    j["sweep"] = {{"axes", {"gravity"}}, {"scales", {1.0, 1.1}}, {"seeds", 1}};
    write_file(dir + "/sweep_cfg.json", j.dump(2) + "\n");

    const CliResult r = run_cli({"sweep", "--config", dir + "/sweep_cfg.json", "--out",
                                 dir + "/out", "--modes", "latent,offline_only",
                                 "--gen-size", "400", "--gen-fraction", "0.01",
                                 "--gen-max-steps", "8000"});
    REQUIRE(r.code == expcli::kExitOk);

    const std::vector<std::string> table = split(read_file(dir + "/out/sweep.csv"), '\n');
    REQUIRE(table.size() >= 3);
    CHECK(table[0] ==
          "scale,latent_sim,latent_real,latent_sum,offline_only_sim,offline_only_real,"
          "offline_only_sum");
    CHECK(table[1].substr(0, 2) == "1,");
    CHECK(table[2].substr(0, 4) == "1.1,");

    const std::vector<std::string> cells =
        split(read_file(dir + "/out/sweep_cells.csv"), '\n');
    REQUIRE(cells.size() >= 5);  // header + 2 modes x 2 scales
    CHECK(cells[0] == "mode,axis,scale,seed,iteration,sim_return,real_return,sum");
    int latent_rows = 0;
    int offline_rows = 0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i].rfind("latent,gravity,", 0) == 0) ++latent_rows;
        if (cells[i].rfind("offline_only,gravity,", 0) == 0) ++offline_rows;
    }
    CHECK(latent_rows == 2);
    CHECK(offline_rows == 2);

    // Datasets are generated once per scale; every cell is a complete run
    // directory whose latent mode reuses the offline cell's phase-1 outputs.
    CHECK(fs::exists(dir + "/out/datasets/pointmass_gravity_s1.s2rl"));
    CHECK(fs::exists(dir + "/out/datasets/pointmass_gravity_s1.1.s2rl"));
    for (const char* cell : {"gravity_s1/seed0/offline_only", "gravity_s1/seed0/latent",
                             "gravity_s1.1/seed0/offline_only", "gravity_s1.1/seed0/latent"}) {
        CHECK(fs::exists(dir + "/out/cells/" + std::string(cell) + "/manifest.json"));
        CHECK(fs::exists(dir + "/out/cells/" + std::string(cell) + "/checksums.txt"));
    }
    const nlohmann::json latent_cfg = nlohmann::json::parse(
        read_file(dir + "/out/cells/gravity_s1/seed0/latent/config.json"));
    CHECK(latent_cfg.at("phase1_model_path").get<std::string>().find("offline_only") !=
          std::string::npos);
    CHECK(fs::exists(dir + "/out/sweep.json"));
}
