#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "s2rl/envsim.hpp"
#include "s2rl/orchestrator.hpp"

namespace s2rl::expcli {

// Process exit codes. Every failure path also prints a one-line JSON error
// record to the error stream so callers can dispatch without parsing prose.
inline constexpr int kExitOk = 0;
// A component failed while executing an otherwise well-formed request
// (training diverged, generation budget exhausted, ...).
inline constexpr int kExitFailure = 1;
// The first argument is not a known subcommand.
inline constexpr int kExitUnknownCommand = 2;
// Flags or the config file were rejected (parse error, failed validation,
// unknown fields). The message lists every violation, not just the first.
inline constexpr int kExitInvalidConfig = 3;
// A referenced input file (config, dataset, checkpoint, run directory) does
// not exist or cannot be read.
inline constexpr int kExitMissingInput = 4;

// Top-level experiment description: the trainer settings plus the grid used
// by `sweep` and the report toggles. Stored as one JSON object; the trainer
// fields live at the top level, the grid under "sweep", toggles under
// "reports". An empty or whitespace-only config file means all defaults.
struct ExperimentConfig {
    orchestrator::TrainerConfig trainer;

    // Perturbation axes and scale factors swept by `sweep`, and the number
    // of training seeds (0..seeds-1) run per cell.
    std::vector<envsim::Perturbation> sweep_axes = {envsim::Perturbation::gravity};
    std::vector<double> sweep_scales = {1.0, 1.05, 1.1, 1.5, 2.0};
    int sweep_seeds = 5;

    // When set, report subcommands write a JSON twin next to every CSV.
    bool emit_json = true;
};

// Loads and validates a config file. Unknown keys anywhere in the object are
// an error; a JSON syntax error reports the parser's line/byte position.
ExperimentConfig load_config(const std::string& path);

// Runs one subcommand. `args` is argv without the program name, e.g.
// {"train-latent", "--config", "cfg.json", "--out", "runs/a"}. Progress and
// result paths go to `out`; failures print a JSON error record to `err` and
// return the matching exit code. Never throws.
//
// Subcommands: gen-data, train-single, train-latent, train-baseline, eval,
// gap-report, kl-report, degrade, sweep, plot. Each accepts --help.
//
// All output lands under the directory named by --out (or the config's
// out_dir). If the S2RL_OUT environment variable is set, relative output
// directories are resolved beneath it.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace s2rl::expcli
