#include "s2rl/gapmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "s2rl/errors.hpp"
#include "s2rl/textio.hpp"

namespace s2rl::gapmetrics {

namespace {

// Promotes a single 1-D observation to a one-row batch; checks the width.
Array as_rows(const Array& x, int dim, const char* what) {
    if (x.ndim() == 1) {
        if (static_cast<int>(x.numel()) != dim) {
            throw DimensionError(std::string(what) + ": got " + std::to_string(x.numel()) +
                                 " coordinates, expected " + std::to_string(dim));
        }
        return Array({1, dim}, x.values());
    }
    if (x.cols() != dim) {
        throw DimensionError(std::string(what) + ": got " + std::to_string(x.cols()) +
                             " columns, expected " + std::to_string(dim));
    }
    return x;
}

struct DiagFit {
    std::vector<double> mean;
    std::vector<double> var;  // maximum-likelihood (divide by n)
};

DiagFit fit_diag(const Array& rows) {
    const int n = rows.rows();
    const int d = rows.cols();
    DiagFit fit;
    fit.mean.assign(d, 0.0);
    fit.var.assign(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) fit.mean[j] += rows.at(i, j);
    for (int j = 0; j < d; ++j) fit.mean[j] /= n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double c = rows.at(i, j) - fit.mean[j];
            fit.var[j] += c * c;
        }
    for (int j = 0; j < d; ++j) fit.var[j] /= n;
    return fit;
}

// KL(N0 || N1) over a coordinate subset, flooring degenerate variances.
double diag_kl(const DiagFit& from, const DiagFit& to, const std::vector<int>& coords,
               bool* floored) {
    double kl = 0.0;
    for (int j : coords) {
        double v0 = from.var[j];
        double v1 = to.var[j];
        if (v0 < kVarFloor || v1 < kVarFloor) {
            v0 = std::max(v0, kVarFloor);
            v1 = std::max(v1, kVarFloor);
            *floored = true;
        }
        const double dm = from.mean[j] - to.mean[j];
        kl += 0.5 * (std::log(v1) - std::log(v0) + (v0 + dm * dm) / v1 - 1.0);
    }
    return kl;
}

std::vector<int> all_coords(int d) {
    std::vector<int> idx(d);
    for (int j = 0; j < d; ++j) idx[j] = j;
    return idx;
}

double sq_dist(const Array& a, int i, const Array& b, int j, int d) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) {
        const double diff = a.at(i, c) - b.at(j, c);
        s += diff * diff;
    }
    return s;
}

// k-th smallest element of a scratch distance list.
double kth_smallest(std::vector<double>& d2, int k) {
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    return std::sqrt(d2[k - 1]);
}

std::string fmt_pm(const DegradationCell& cell) {
    return fmt_double(cell.mean) + "±" + fmt_double(cell.stddev);
}

}  // namespace

double m_identity_gap(const latentspace::LatentModel& model, const Array& observations) {
    if (observations.numel() == 0) throw ValidationError("m_identity_gap: empty observation set");
    const Array obs = as_rows(observations, model.obs_dim, "m_identity_gap");
    const Array z = latentspace::encode(model, latentspace::Role::real, obs);
    const Array mz = latentspace::cross_map(model, z);
    const int n = z.rows();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double s2 = 0.0;
        for (int j = 0; j < model.dim_latent; ++j) {
            const double d = mz.at(i, j) - z.at(i, j);
            s2 += d * d;
        }
        total += std::sqrt(s2);
    }
    return total / n;
}

double gaussian_kl(const Array& mean0, const Array& var0, const Array& mean1, const Array& var1) {
    const std::size_t d = mean0.numel();
    if (d == 0) throw ValidationError("gaussian_kl: empty parameter vectors");
    if (var0.numel() != d || mean1.numel() != d || var1.numel() != d) {
        throw DimensionError("gaussian_kl: parameter vectors disagree in length");
    }
    double kl = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double v0 = var0.at(j);
        const double v1 = var1.at(j);
        if (v0 <= 0.0 || v1 <= 0.0) {
            throw ValidationError("gaussian_kl: non-positive variance at coordinate " +
                                  std::to_string(j));
        }
        const double dm = mean0.at(j) - mean1.at(j);
        kl += 0.5 * (std::log(v1) - std::log(v0) + (v0 + dm * dm) / v1 - 1.0);
    }
    return kl;
}

double knn_kl(const Array& x_from, const Array& x_to, int k) {
    if (x_from.ndim() != 2 || x_to.ndim() != 2 || x_from.cols() != x_to.cols()) {
        throw DimensionError("knn_kl: sample sets must be 2-D with matching columns");
    }
    const int n = x_from.rows();
    const int m = x_to.rows();
    const int d = x_from.cols();
    if (k < 1) throw ValidationError("knn_kl: k must be >= 1");
    if (n <= k || m < k) {
        throw ValidationError("knn_kl: need more than k samples per set (n=" + std::to_string(n) +
                              ", m=" + std::to_string(m) + ", k=" + std::to_string(k) + ")");
    }
    double sum_log = 0.0;
    std::vector<double> within(n - 1), across(m);
    for (int i = 0; i < n; ++i) {
        int w = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) within[w++] = sq_dist(x_from, i, x_from, j, d);
        for (int j = 0; j < m; ++j) across[j] = sq_dist(x_from, i, x_to, j, d);
        // Duplicate points give zero distances; keep the log finite.
        const double rho = std::max(kth_smallest(within, k), 1e-12);
        const double nu = std::max(kth_smallest(across, k), 1e-12);
        sum_log += std::log(nu / rho);
    }
    return static_cast<double>(d) / n * sum_log +
           std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

KlComparison kl_ratio(const latentspace::LatentModel& model, const Array& real_samples,
                      const Array& sim_samples) {
    const Array real = as_rows(real_samples, model.obs_dim, "kl_ratio real samples");
    const Array sim = as_rows(sim_samples, model.obs_dim, "kl_ratio sim samples");
    if (real.rows() < 100 || sim.rows() < 100) {
        throw ValidationError("kl_ratio: need at least 100 observations per set, got " +
                              std::to_string(real.rows()) + " and " + std::to_string(sim.rows()));
    }
    KlComparison out;
    out.n_real = real.rows();
    out.n_sim = sim.rows();

    const DiagFit orig_real = fit_diag(real);
    const DiagFit orig_sim = fit_diag(sim);
    out.kl_original = diag_kl(orig_real, orig_sim, all_coords(model.obs_dim),
                              &out.variance_floored);

    const DiagFit lat_real = fit_diag(latentspace::encode(model, latentspace::Role::real, real));
    const DiagFit lat_sim = fit_diag(latentspace::encode(model, latentspace::Role::sim, sim));
    // Padded coordinates are constant at the same value in both sets; a
    // coordinate frozen at two different values is a real gap and stays in
    // (its variance gets floored and flagged below).
    std::vector<int> active;
    for (int j = 0; j < model.dim_latent; ++j) {
        const bool padded = lat_real.var[j] < kVarExclude && lat_sim.var[j] < kVarExclude &&
                            std::abs(lat_real.mean[j] - lat_sim.mean[j]) < kVarExclude;
        if (!padded) active.push_back(j);
    }
    out.excluded_latent_coords = model.dim_latent - static_cast<int>(active.size());
    out.kl_latent = diag_kl(lat_real, lat_sim, active, &out.variance_floored);

    out.ratio = out.kl_latent / std::max(out.kl_original, kEpsDiv);
    return out;
}

std::string to_string(GapMetric metric) {
    switch (metric) {
        case GapMetric::m_identity_gap: return "m_identity_gap";
        case GapMetric::kl_original: return "kl_original";
        case GapMetric::kl_latent: return "kl_latent";
        case GapMetric::kl_ratio: return "kl_ratio";
    }
    throw ValidationError("unknown gap metric");
}

std::vector<envsim::Perturbation> family_axes(envsim::Family family) {
    std::vector<envsim::Perturbation> axes;
    for (const auto& spec : envsim::perturbation_grid(family)) {
        if (std::find(axes.begin(), axes.end(), spec.perturbation) == axes.end()) {
            axes.push_back(spec.perturbation);
        }
    }
    return axes;
}

double policy_return(const sacpolicy::Agent& policy, const envsim::Environment& env,
                     int episodes, const RandomStream& rng) {
    if (episodes < 1) throw ValidationError("policy_return: episodes must be >= 1");
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        RandomStream ep_rng = rng.split(static_cast<std::uint64_t>(ep));
        envsim::EnvState state = env.reset(ep_rng);
        double ret = 0.0;
        while (true) {
            const Array action =
                sacpolicy::act(policy, state.observation, sacpolicy::ActMode::deterministic, ep_rng);
            const envsim::StepResult sr = env.step(state, action);
            ret += sr.reward;
            if (sr.done) break;
            state = sr.next_state;
        }
        total += ret;
    }
    return total / episodes;
}

DegradationTable degradation_study(const sacpolicy::Agent& base_policy, envsim::Family family,
                                   const std::vector<double>& scales, int episodes,
                                   const std::vector<std::uint64_t>& seeds) {
    if (scales.empty()) throw ValidationError("degradation_study: empty scale list");
    if (seeds.empty()) throw ValidationError("degradation_study: empty seed list");
    if (episodes < 1) throw ValidationError("degradation_study: episodes must be >= 1");

    DegradationTable table;
    table.family = family;
    table.axes = family_axes(family);
    table.scales = scales;
    table.episodes = episodes;
    table.seeds = seeds;
    for (const auto axis : table.axes) {
        std::vector<DegradationCell> row;
        for (const double scale : scales) {
            envsim::EnvSpec spec;
            spec.family = family;
            spec.perturbation = axis;
            spec.scale = scale;
            spec.role = envsim::Role::real;
            const envsim::Environment env = envsim::make_env(spec);
            std::vector<double> per_seed;
            per_seed.reserve(seeds.size());
            // Episode streams depend on (seed, episode) only, never on the
            // cell, so identical physics means identical scores.
            for (const std::uint64_t s : seeds) {
                per_seed.push_back(policy_return(base_policy, env, episodes, RandomStream(s)));
            }
            DegradationCell cell;
            for (const double v : per_seed) cell.mean += v;
            cell.mean /= static_cast<double>(per_seed.size());
            if (per_seed.size() > 1) {
                double s2 = 0.0;
                for (const double v : per_seed) s2 += (v - cell.mean) * (v - cell.mean);
                cell.stddev = std::sqrt(s2 / static_cast<double>(per_seed.size() - 1));
            }
            row.push_back(cell);
        }
        table.cells.push_back(std::move(row));
    }
    return table;
}

std::string gap_table_csv(const std::vector<GapReport>& reports, GapMetric metric) {
    if (reports.empty()) throw ValidationError("gap_table_csv: no reports");
    const auto& grid = reports.front().cells;
    std::ostringstream out;
    out << "axis";
    for (const auto& cell : grid) out << ',' << fmt_double(cell.scale);
    out << '\n';
    for (const auto& report : reports) {
        if (report.cells.size() != grid.size()) {
            throw ValidationError("gap_table_csv: reports disagree on the scale grid");
        }
        out << envsim::to_string(report.axis);
        for (std::size_t c = 0; c < report.cells.size(); ++c) {
            if (report.cells[c].scale != grid[c].scale) {
                throw ValidationError("gap_table_csv: reports disagree on the scale grid");
            }
            const GapCell& cell = report.cells[c];
            double v = 0.0;
            switch (metric) {
                case GapMetric::m_identity_gap: v = cell.m_identity_gap; break;
                case GapMetric::kl_original: v = cell.kl_original; break;
                case GapMetric::kl_latent: v = cell.kl_latent; break;
                case GapMetric::kl_ratio: v = cell.kl_ratio; break;
            }
            out << ',' << fmt_double(v);
        }
        out << '\n';
    }
    return out.str();
}

std::string gap_report_json(const std::vector<GapReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& report : reports) {
        nlohmann::json j;
        j["family"] = envsim::to_string(report.family);
        j["axis"] = envsim::to_string(report.axis);
        j["estimator"] = report.estimator;
        j["seed"] = report.seed;
        j["eps_div"] = report.eps_div;
        j["cells"] = nlohmann::json::array();
        for (const auto& cell : report.cells) {
            j["cells"].push_back({{"scale", cell.scale},
                                  {"m_identity_gap", cell.m_identity_gap},
                                  {"kl_original", cell.kl_original},
                                  {"kl_latent", cell.kl_latent},
                                  {"kl_ratio", cell.kl_ratio},
                                  {"n_real", cell.n_real},
                                  {"n_sim", cell.n_sim},
                                  {"excluded_latent_coords", cell.excluded_latent_coords},
                                  {"variance_floored", cell.variance_floored}});
        }
        arr.push_back(std::move(j));
    }
    return arr.dump(2);
}

std::string degradation_csv(const DegradationTable& table) {
    std::ostringstream out;
    out << "axis";
    for (const double scale : table.scales) out << ',' << fmt_double(scale);
    out << '\n';
    for (std::size_t r = 0; r < table.axes.size(); ++r) {
        out << envsim::to_string(table.axes[r]);
        for (const auto& cell : table.cells[r]) out << ',' << fmt_pm(cell);
        out << '\n';
    }
    return out.str();
}

std::string degradation_json(const DegradationTable& table) {
    nlohmann::json j;
    j["family"] = envsim::to_string(table.family);
    j["episodes"] = table.episodes;
    j["seeds"] = table.seeds;
    j["scales"] = table.scales;
    j["axes"] = nlohmann::json::array();
    for (const auto axis : table.axes) j["axes"].push_back(envsim::to_string(axis));
    j["cells"] = nlohmann::json::array();
    for (const auto& row : table.cells) {
        nlohmann::json jr = nlohmann::json::array();
        for (const auto& cell : row) {
            jr.push_back({{"mean", cell.mean}, {"std", cell.stddev}});
        }
        j["cells"].push_back(std::move(jr));
    }
    return j.dump(2);
}

}  // namespace s2rl::gapmetrics
