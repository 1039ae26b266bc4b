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

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pilm/gen.hpp"
#include "pilm/outer.hpp"
#include "pilm/problem_io.hpp"
#include "pilm/report.hpp"
#include "pilm/runtime.hpp"

namespace {

// Exit codes: 0 converged, 1 iteration cap, 2 usage or I/O failure,
// 3 time budget, 4 stalled line search.
constexpr int exit_converged = 0;
constexpr int exit_max_iters = 1;
constexpr int exit_usage = 2;
constexpr int exit_time_budget = 3;
constexpr int exit_stalled = 4;

int exit_code_for(pilm::Status s) {
    switch (s) {
        case pilm::Status::Converged: return exit_converged;
        case pilm::Status::MaxIters: return exit_max_iters;
        case pilm::Status::TimeBudget: return exit_time_budget;
        case pilm::Status::Stalled: return exit_stalled;
    }
    return exit_usage;
}

int log_level() {
    const char* env = std::getenv("PILM_LOG");
    return env ? std::atoi(env) : 0;
}

/// "90", "90s", "1500ms", "5m", "1h" -> seconds.
double parse_duration(const std::string& text) {
    size_t pos = 0;
    const double value = std::stod(text, &pos);
    const std::string unit = text.substr(pos);
    if (unit.empty() || unit == "s") {
        return value;
    }
    if (unit == "ms") {
        return value / 1000.0;
    }
    if (unit == "m") {
        return value * 60.0;
    }
    if (unit == "h") {
        return value * 3600.0;
    }
    throw pilm::InvalidArgument("unknown duration unit \"" + unit + "\"");
}

struct SolveFlags {
    std::string algorithm = "pilm";
    pilm::SolverConfig cfg;
    std::string mu_mode = "practical";
    std::string time_budget;
    bool full_step = false;
};

void add_solver_flags(CLI::App& cmd, SolveFlags& f) {
    cmd.add_option("--algorithm", f.algorithm, "Solver: pilm or lm")
        ->check(CLI::IsMember({"pilm", "lm"}));
    cmd.add_option("-k,--k", f.cfg.K, "Number of blocks");
    cmd.add_option("--ell", f.cfg.ell, "Inner iterations per outer step");
    cmd.add_flag("--adaptive-ell", f.cfg.adaptive_ell,
                 "Stop inner sweeps once the inner residual is small");
    cmd.add_option("--adaptive-eta", f.cfg.adaptive_eta, "Adaptive inner tolerance scale");
    cmd.add_option("--ell-max", f.cfg.ell_max, "Adaptive inner iteration cap");
    cmd.add_option("--mu-mode", f.mu_mode, "Damping schedule: theoretical, practical, delta")
        ->check(CLI::IsMember({"theoretical", "practical", "delta"}));
    cmd.add_option("--c-mu", f.cfg.mu.c_mu, "Theoretical schedule factor (> 1)");
    cmd.add_option("--mu0", f.cfg.mu.mu0, "Practical schedule start (default ||R(x0)||)");
    cmd.add_option("--mu-min", f.cfg.mu.mu_min, "Damping lower safeguard");
    cmd.add_option("--mu-max", f.cfg.mu.mu_max, "Damping upper safeguard");
    cmd.add_option("--mu-bar", f.cfg.mu.mu_bar, "Delta schedule scale");
    cmd.add_option("--delta", f.cfg.mu.delta, "Delta schedule exponent in (0, 1]");
    cmd.add_flag("--full-step", f.full_step, "Take alpha = 1 without line search");
    cmd.add_option("--ls-c", f.cfg.line_search.c, "Line-search acceptance constant");
    cmd.add_option("--ls-beta", f.cfg.line_search.beta, "Backtracking factor");
    cmd.add_option("--eps0", f.cfg.line_search.eps0,
                   "Nonmonotone slack scale (default 1e-3 F(x0))");
    cmd.add_option("--gamma", f.cfg.line_search.gamma, "Slack decay per iteration");
    cmd.add_option("--grad-tol", f.cfg.termination.grad_tol, "Absolute gradient norm stop");
    cmd.add_option("--grad-rtol", f.cfg.termination.grad_rtol,
                   "Gradient norm stop relative to the start");
    cmd.add_flag("!--no-sigma-rule", f.cfg.termination.sigma_rule,
                 "Disable the 68/95/99.5 residual-fraction stop");
    cmd.add_option("--max-iters", f.cfg.termination.max_outer_iters, "Outer iteration cap");
    cmd.add_option("--time-budget", f.time_budget, "Wall-clock budget, e.g. 90s, 5m");
    cmd.add_option("-w,--workers", f.cfg.workers, "Worker threads (default min(K, cores))");
    cmd.add_option("--seed", f.cfg.seed, "Seed for the partitioner and estimators");
    cmd.add_option("--b-norm-iters", f.cfg.b_norm_iters, "Power-iteration steps for ||B||");
}

pilm::SolverConfig resolve_config(SolveFlags& f) {
    static const std::map<std::string, pilm::MuMode> modes = {
        {"theoretical", pilm::MuMode::Theoretical},
        {"practical", pilm::MuMode::Practical},
        {"delta", pilm::MuMode::DeltaSchedule}};
    f.cfg.mu.mode = modes.at(f.mu_mode);
    f.cfg.line_search.mode =
        f.full_step ? pilm::AlphaMode::FullStep : pilm::AlphaMode::LineSearch;
    if (!f.time_budget.empty()) {
        f.cfg.termination.time_budget_s = parse_duration(f.time_budget);
    }
    return f.cfg;
}

pilm::SolveResult run_solver(const pilm::Problem& problem, const std::string& algorithm,
                             const pilm::SolverConfig& cfg) {
    if (algorithm == "lm") {
        return pilm::classical_lm_solve(problem, cfg);
    }
    return pilm::pilm_solve(problem, cfg);
}

void print_progress(const pilm::SolveResult& result) {
    if (log_level() < 1) {
        return;
    }
    for (const pilm::IterationRecord& rec : result.records) {
        std::fprintf(stderr,
                     "k=%d F=%.6e |g|=%.3e mu=%.3e alpha=%.3g bt=%d f=(%.3f %.3f %.3f)\n",
                     rec.k, rec.F, rec.grad_norm, rec.mu, rec.alpha, rec.backtracks,
                     rec.within_sigma.f1, rec.within_sigma.f2, rec.within_sigma.f3);
    }
}

int cmd_generate(const std::string& output, const pilm::GenConfig& cfg, bool no_truth) {
    pilm::Problem problem = pilm::generate(cfg);
    pilm::save_problem(problem, output, !no_truth);
    int n_dist = 0;
    int n_angle = 0;
    int n_line = 0;
    int n_coord = 0;
    for (const pilm::Measurement& m : problem.measurements) {
        if (std::holds_alternative<pilm::DistanceMeasurement>(m)) {
            ++n_dist;
        } else if (std::holds_alternative<pilm::AngleMeasurement>(m)) {
            ++n_angle;
        } else if (std::holds_alternative<pilm::PointLineMeasurement>(m)) {
            ++n_line;
        } else {
            ++n_coord;
        }
    }
    std::printf("wrote %s: %d points, %d measurements "
                "(%d distance, %d angle, %d point-line, %d coordinate)\n",
                output.c_str(), problem.n_points, problem.n_measurements(), n_dist,
                n_angle, n_line, n_coord);
    return exit_converged;
}

int cmd_solve(const std::string& input, SolveFlags& flags, const std::string& report_path,
              const std::string& fractions_csv, const std::string& hist_csv,
              int hist_bins) {
    const pilm::Problem problem = pilm::load_problem(input);
    const pilm::SolverConfig cfg = resolve_config(flags);
    const pilm::SolveResult result = run_solver(problem, flags.algorithm, cfg);
    print_progress(result);

    std::optional<pilm::ErrorQuantiles> quantiles;
    std::vector<double> errors;
    if (problem.ground_truth) {
        errors = pilm::coordinate_error(result.x, *problem.ground_truth);
        quantiles = pilm::error_quantiles(errors);
    }
    if (!report_path.empty()) {
        pilm::save_json(pilm::run_report_json(flags.algorithm, cfg, result, quantiles),
                        report_path);
    }
    if (!fractions_csv.empty()) {
        pilm::write_fractions_csv(result.records, fractions_csv);
    }
    if (!hist_csv.empty()) {
        if (errors.empty()) {
            throw pilm::Error("error histogram requires ground truth in the problem file");
        }
        pilm::write_error_histogram_csv(errors, hist_bins, hist_csv);
    }

    std::printf("status=%s criterion=%s iterations=%d wall_time_s=%.3f "
                "fractions=(%.4f %.4f %.4f)\n",
                pilm::status_name(result.status).c_str(),
                pilm::converged_by_name(result.criterion).c_str(), result.iterations(),
                result.wall_time_s, result.final_fractions.f1, result.final_fractions.f2,
                result.final_fractions.f3);
    if (quantiles) {
        std::printf("coordinate_error median=%.6g p90=%.6g p99=%.6g max=%.6g\n",
                    quantiles->median, quantiles->p90, quantiles->p99, quantiles->max);
    }
    return exit_code_for(result.status);
}

int cmd_partition_info(const std::string& input, int K, std::uint64_t seed, double tau) {
    const pilm::Problem problem = pilm::load_problem(input);
    const pilm::VariableGraph graph = pilm::build_variable_graph(problem);
    const std::vector<int> block_of = pilm::partition_points(graph, K, seed, tau);
    const pilm::Partition part = pilm::induce_residual_partition(problem, block_of, K);
    auto [rp, ro] = pilm::reorder(problem, part);

    const Eigen::VectorXd x0 = ro.apply(pilm::initial_guess(problem));
    const pilm::SparseJacobian J = pilm::eval_J(rp, x0);
    const pilm::JacobianSplit split = pilm::split_jacobian(J, ro);
    const Eigen::VectorXd R = pilm::eval_R(rp, x0);
    const pilm::BlockSystem bs = pilm::assemble_blocks(split, R, ro);
    const double b_norm = pilm::estimate_B_norm(bs);
    const double jtj_norm = pilm::estimate_JtJ_norm(J);

    nlohmann::json j;
    j["K"] = K;
    j["m"] = problem.n_measurements();
    j["n_points"] = problem.n_points;
    std::vector<int> sizes;
    for (const auto& pts : part.points_of) {
        sizes.push_back(static_cast<int>(pts.size()));
    }
    j["block_points"] = sizes;
    j["e_hat"] = part.e_hat_size();
    j["separability_ratio"] = part.separability_ratio();
    j["b_norm_est"] = b_norm;
    j["jtj_norm_est"] = jtj_norm;
    j["b_over_jtj"] = jtj_norm > 0.0 ? b_norm / jtj_norm : 0.0;
    const pilm::CommunicationVolume comm = pilm::simulate_communication_volume(part, 1, 1);
    j["comm_values_per_inner"] = {{"broadcast", comm.broadcast_values_per_inner},
                                  {"targeted", comm.targeted_values_per_inner}};
    std::printf("%s\n", j.dump(2).c_str());
    return exit_converged;
}

int cmd_sweep_k(const std::string& input, SolveFlags& flags, const std::vector<int>& ks,
                int reps, const std::string& output) {
    if (ks.empty()) {
        throw pilm::InvalidArgument("the K list is empty");
    }
    const pilm::Problem problem = pilm::load_problem(input);
    std::vector<pilm::SweepRow> rows;
    for (int K : ks) {
        for (int rep = 0; rep < reps; ++rep) {
            pilm::SolverConfig cfg = resolve_config(flags);
            cfg.K = K;
            const pilm::SolveResult result = run_solver(problem, flags.algorithm, cfg);
            rows.push_back({K, rep, result.wall_time_s, result.iterations(),
                            pilm::status_name(result.status)});
            std::printf("K=%d rep=%d status=%s iterations=%d wall_time_s=%.3f\n", K, rep,
                        pilm::status_name(result.status).c_str(), result.iterations(),
                        result.wall_time_s);
        }
    }
    if (!output.empty()) {
        pilm::write_sweep_csv(rows, output);
    }
    return exit_converged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-partitioned inexact Levenberg-Marquardt solver for sparse "
                 "network adjustment"};
    app.require_subcommand(1);

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic problem file");
    pilm::GenConfig gen_cfg;
    std::string gen_output = "problem.json";
    bool no_truth = false;
    std::string angle_unit = "deg";
    gen_cmd->add_option("--n-hat", gen_cfg.n_hat, "Point count (perfect square)")
        ->required();
    gen_cmd->add_option("--seed", gen_cfg.seed, "Generator seed");
    gen_cmd->add_option("-o,--output", gen_output, "Output path");
    gen_cmd->add_flag("--no-truth", no_truth, "Strip ground truth from the file");
    gen_cmd->add_option("--cell-size", gen_cfg.cell_size, "Grid spacing");
    gen_cmd->add_option("--sigma-dist", gen_cfg.sigma_dist, "Distance/offset sigma");
    gen_cmd->add_option("--sigma-angle", gen_cfg.sigma_angle, "Angle sigma");
    gen_cmd->add_option("--angle-unit", angle_unit, "Unit of --sigma-angle: deg or rad")
        ->check(CLI::IsMember({"deg", "rad"}));
    gen_cmd->add_option("--sigma-coord", gen_cfg.sigma_coord_loose, "Loose coordinate sigma");
    gen_cmd->add_option("--sigma-coord-tight", gen_cfg.sigma_coord_tight,
                        "Tight coordinate sigma");
    gen_cmd->add_option("--tight-fraction", gen_cfg.tight_fraction,
                        "Share of points with tight coordinates");
    gen_cmd->add_option("--avg-obs", gen_cfg.avg_obs_per_point,
                        "Mean non-coordinate observations per point");
    gen_cmd->add_option("--mix", [&gen_cfg](const std::vector<std::string>& vals) {
        if (vals.size() != 3) {
            return false;
        }
        gen_cfg.w_distance = std::stod(vals[0]);
        gen_cfg.w_angle = std::stod(vals[1]);
        gen_cfg.w_point_line = std::stod(vals[2]);
        return true;
    }, "Type weights: distance angle point-line")->expected(3);
    gen_cmd->add_option("--pair-decay", gen_cfg.pair_decay,
                        "Partner-selection decay length, grid units");
    gen_cmd->add_option("--noise-scale", gen_cfg.noise_scale,
                        "Scales all observation noise (0 = exact)");

    // solve
    auto* solve_cmd = app.add_subcommand("solve", "Run the solver on a problem file");
    std::string solve_input;
    SolveFlags solve_flags;
    std::string report_path;
    std::string fractions_csv;
    std::string hist_csv;
    int hist_bins = 50;
    solve_cmd->add_option("problem", solve_input, "Problem JSON file")->required();
    add_solver_flags(*solve_cmd, solve_flags);
    solve_cmd->add_option("--report", report_path, "Write the run report JSON here");
    solve_cmd->add_option("--fractions-csv", fractions_csv,
                          "Write per-iteration residual fractions");
    solve_cmd->add_option("--error-hist-csv", hist_csv,
                          "Write a coordinate-error histogram (needs ground truth)");
    solve_cmd->add_option("--hist-bins", hist_bins, "Histogram bin count");

    // partition-info
    auto* part_cmd = app.add_subcommand("partition-info", "Print partition stats as JSON");
    std::string part_input;
    int part_k = 4;
    std::uint64_t part_seed = 0;
    double part_tau = 0.05;
    part_cmd->add_option("problem", part_input, "Problem JSON file")->required();
    part_cmd->add_option("-k,--k", part_k, "Number of blocks");
    part_cmd->add_option("--seed", part_seed, "Partitioner seed");
    part_cmd->add_option("--tau", part_tau, "Balance tolerance");

    // sweep-k
    auto* sweep_cmd = app.add_subcommand("sweep-k", "Solve repeatedly over a list of K");
    std::string sweep_input;
    SolveFlags sweep_flags;
    std::vector<int> sweep_ks;
    int sweep_reps = 1;
    std::string sweep_output;
    sweep_cmd->add_option("problem", sweep_input, "Problem JSON file")->required();
    sweep_cmd->add_option("--k-list", sweep_ks, "Block counts to run")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--reps", sweep_reps, "Repetitions per K");
    sweep_cmd->add_option("-o,--output", sweep_output, "Sweep CSV path");
    add_solver_flags(*sweep_cmd, sweep_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_usage;
    }

    try {
        if (*gen_cmd) {
            gen_cfg.angle_sigma_degrees = angle_unit == "deg";
            return cmd_generate(gen_output, gen_cfg, no_truth);
        }
        if (*solve_cmd) {
            return cmd_solve(solve_input, solve_flags, report_path, fractions_csv,
                             hist_csv, hist_bins);
        }
        if (*part_cmd) {
            return cmd_partition_info(part_input, part_k, part_seed, part_tau);
        }
        if (*sweep_cmd) {
            return cmd_sweep_k(sweep_input, sweep_flags, sweep_ks, sweep_reps,
                               sweep_output);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    }
    return exit_usage;
}
