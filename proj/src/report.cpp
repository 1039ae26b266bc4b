// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "pilm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace pilm {

using nlohmann::json;

namespace {

const char* mu_mode_name(MuMode m) {
    switch (m) {
        case MuMode::Theoretical: return "theoretical";
        case MuMode::Practical: return "practical";
        case MuMode::DeltaSchedule: return "delta";
    }
    return "unknown";
}

json fractions_json(const SigmaFractions& fr) {
    return json{{"f1", fr.f1}, {"f2", fr.f2}, {"f3", fr.f3}};
}

/// Shortest representation that parses back to the same double.
std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

json solver_config_to_json(const SolverConfig& cfg) {
    json j;
    j["K"] = cfg.K;
    j["ell"] = cfg.ell;
    j["adaptive_ell"] = cfg.adaptive_ell;
    j["adaptive_eta"] = cfg.adaptive_eta;
    j["ell_max"] = cfg.ell_max;
    j["mu"] = {{"mode", mu_mode_name(cfg.mu.mode)}, {"mu_min", cfg.mu.mu_min},
               {"mu_max", cfg.mu.mu_max},           {"c_mu", cfg.mu.c_mu},
               {"mu0", cfg.mu.mu0},                 {"mu_bar", cfg.mu.mu_bar},
               {"delta", cfg.mu.delta}};
    j["line_search"] = {
        {"mode", cfg.line_search.mode == AlphaMode::FullStep ? "full_step" : "backtracking"},
        {"beta", cfg.line_search.beta},
        {"c", cfg.line_search.c},
        {"eps0", cfg.line_search.eps0},
        {"gamma", cfg.line_search.gamma},
        {"alpha_min", cfg.line_search.alpha_min}};
    j["termination"] = {{"sigma_rule", cfg.termination.sigma_rule},
                        {"grad_tol", cfg.termination.grad_tol},
                        {"grad_rtol", cfg.termination.grad_rtol},
                        {"max_outer_iters", cfg.termination.max_outer_iters},
                        {"time_budget_s", std::isfinite(cfg.termination.time_budget_s)
                                              ? json(cfg.termination.time_budget_s)
                                              : json()}};
    j["workers"] = cfg.workers;
    j["seed"] = cfg.seed;
    j["b_norm_iters"] = cfg.b_norm_iters;
    j["balance_tau"] = cfg.balance_tau;
    return j;
}

json iteration_record_to_json(const IterationRecord& rec) {
    json j;
    j["k"] = rec.k;
    j["F"] = rec.F;
    j["grad_norm"] = rec.grad_norm;
    j["mu"] = rec.mu;
    j["alpha"] = rec.alpha;
    j["backtracks"] = rec.backtracks;
    j["inner_residual_norms"] = rec.inner_residual_norms;
    j["rho_bound"] = rec.rho_bound;
    j["b_norm_est"] = rec.b_norm_est;
    j["inner_iterations"] = rec.inner_iterations;
    j["eps_k"] = rec.eps_k;
    j["step_norm"] = rec.step_norm;
    j["within_sigma"] = fractions_json(rec.within_sigma);
    j["elapsed_s"] = rec.elapsed_s;
    return j;
}

json run_report_json(const std::string& algorithm, const SolverConfig& cfg,
                     const SolveResult& result,
                     const std::optional<ErrorQuantiles>& errors) {
    json j;
    j["schema"] = report_schema;
    j["algorithm"] = algorithm;
    j["config"] = solver_config_to_json(cfg);
    j["status"] = status_name(result.status);
    j["criterion"] = converged_by_name(result.criterion);
    j["iterations"] = result.iterations();
    j["wall_time_s"] = result.wall_time_s;
    j["phase_times_s"] = {{"partition", result.phase_times.partition},
                          {"residual_eval", result.phase_times.residual_eval},
                          {"assembly", result.phase_times.assembly},
                          {"b_norm", result.phase_times.b_norm},
                          {"factor", result.phase_times.factor},
                          {"inner", result.phase_times.inner},
                          {"line_search", result.phase_times.line_search},
                          {"aggregation", result.phase_times.aggregation}};
    j["F0"] = result.F0;
    j["grad_norm0"] = result.grad_norm0;
    j["initial_sigma_fractions"] = fractions_json(result.initial_fractions);
    j["final_F"] = result.final_F;
    j["final_sigma_fractions"] = fractions_json(result.final_fractions);
    j["partition"] = {{"K", result.K},
                      {"workers", result.workers},
                      {"block_points", result.block_points},
                      {"e_hat", result.e_hat_size},
                      {"separability_ratio", result.separability_ratio}};
    if (errors) {
        j["coordinate_error"] = {{"median", errors->median},
                                 {"p90", errors->p90},
                                 {"p99", errors->p99},
                                 {"max", errors->max}};
    }
    json recs = json::array();
    for (const IterationRecord& rec : result.records) {
        recs.push_back(iteration_record_to_json(rec));
    }
    j["records"] = std::move(recs);
    return j;
}

void save_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw Error("failed writing " + path);
    }
}

void write_fractions_csv(const std::vector<IterationRecord>& records,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    out << "k,f1,f2,f3\n";
    for (const IterationRecord& rec : records) {
        out << rec.k << ',' << exact(rec.within_sigma.f1) << ','
            << exact(rec.within_sigma.f2) << ',' << exact(rec.within_sigma.f3) << '\n';
    }
    if (!out) {
        throw Error("failed writing " + path);
    }
}

void write_error_histogram_csv(const std::vector<double>& errors, int bins,
                               const std::string& path) {
    if (bins < 1) {
        throw InvalidArgument("histogram needs at least one bin");
    }
    if (errors.empty()) {
        throw InvalidArgument("no errors to bin");
    }
    double max = 0.0;
    for (double e : errors) {
        max = std::max(max, e);
    }
    const double width = max > 0.0 ? max / bins : 1.0;
    std::vector<long> counts(static_cast<size_t>(bins), 0);
    for (double e : errors) {
        const int b = std::min(bins - 1, static_cast<int>(e / width));
        ++counts[static_cast<size_t>(b)];
    }
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    out << "lower,upper,count\n";
    for (int b = 0; b < bins; ++b) {
        out << exact(b * width) << ',' << exact((b + 1) * width) << ','
            << counts[static_cast<size_t>(b)] << '\n';
    }
    if (!out) {
        throw Error("failed writing " + path);
    }
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    out << "K,repetition,wall_time_s,iterations,status\n";
    for (const SweepRow& row : rows) {
        out << row.K << ',' << row.repetition << ',' << exact(row.wall_time_s) << ','
            << row.iterations << ',' << row.status << '\n';
    }
    if (!out) {
        throw Error("failed writing " + path);
    }
}

}  // namespace pilm
