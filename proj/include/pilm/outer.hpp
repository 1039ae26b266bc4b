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

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pilm/blocks.hpp"
#include "pilm/inner.hpp"

namespace pilm {

enum class MuMode {
    /// mu = max(mu_min, c_mu * ||B|| estimate); keeps the inner iteration a
    /// contraction with factor <= 1/c_mu.
    Theoretical,
    /// mu starts near ||R(x0)||, halves when the accepted step exceeds 0.5
    /// and doubles otherwise, clamped to [mu_min, mu_max].
    Practical,
    /// mu = mu_bar * ||g||^delta; the fast local schedule.
    DeltaSchedule,
};

struct MuConfig {
    MuMode mode = MuMode::Practical;
    double mu_min = 1e-10;
    double mu_max = 1e10;
    double c_mu = 2.0;    ///< Theoretical; must be > 1
    double mu0 = -1.0;    ///< Practical start; < 0 resolves to max(1, ||R(x0)||)
    double mu_bar = 1.0;  ///< DeltaSchedule scale
    double delta = 1.0;   ///< DeltaSchedule exponent in (0, 1]
};

enum class AlphaMode { LineSearch, FullStep };

struct LineSearchConfig {
    AlphaMode mode = AlphaMode::LineSearch;
    double beta = 0.5;  ///< backtracking factor in (0, 1)
    /// Acceptance constant > 0. The decrease term c * alpha^2 * ||g||^2 scales
    /// with the squared weighted Jacobian, so a full damped step passes only
    /// when c <= 1/(2 (||J||^2 + mu)); the default leaves headroom for
    /// measurement weights up to ~1e3.
    double c = 1e-8;
    double eps0 = -1.0;   ///< slack scale; < 0 resolves to 1e-3 * F(x0)
    double gamma = 0.9;   ///< slack decay in (0, 1); eps_k = eps0 * gamma^k
    double alpha_min = 1e-16;
};

struct TerminationConfig {
    bool sigma_rule = true;  ///< stop when 68/95/99.5% of weighted residuals
                             ///< are within 1/2/3
    double grad_tol = 0.0;   ///< absolute ||g|| threshold; 0 disables
    double grad_rtol = 0.0;  ///< relative to ||g(x0)||; 0 disables
    int max_outer_iters = 500;
    double time_budget_s = std::numeric_limits<double>::infinity();
};

struct SolverConfig {
    int K = 1;
    int ell = 5;
    /// Adaptive inner mode: stop a sweep early once
    /// ||r^l|| <= adaptive_eta * ||g||^(1 + delta_exponent), where
    /// delta_exponent is MuConfig::delta under DeltaSchedule and 0 otherwise.
    bool adaptive_ell = false;
    double adaptive_eta = 0.1;
    int ell_max = 100;
    MuConfig mu;
    LineSearchConfig line_search;
    TerminationConfig termination;
    int workers = -1;  ///< -1 resolves to min(K, hardware threads)
    std::uint64_t seed = 0;
    int b_norm_iters = 30;
    double balance_tau = 0.05;
    std::optional<Eigen::VectorXd> x0;  ///< default: coordinate observations
};

enum class Status { Converged, MaxIters, TimeBudget, Stalled };
enum class ConvergedBy { None, SigmaRule, GradTol };

std::string status_name(Status s);
std::string converged_by_name(ConvergedBy c);

struct SigmaFractions {
    double f1 = 0.0;
    double f2 = 0.0;
    double f3 = 0.0;
};

/// Fractions of weighted residuals strictly inside 1, 2 and 3.
SigmaFractions sigma_fractions(const Eigen::VectorXd& R_weighted);
bool sigma_rule_met(const SigmaFractions& fr);

/// One outer iteration that performed (or attempted) a step. F and the
/// fractions describe the post-step iterate; grad_norm, mu, rho_bound
/// describe the state the step was computed from.
struct IterationRecord {
    int k = 0;
    double F = 0.0;
    double grad_norm = 0.0;
    double mu = 0.0;
    double alpha = 0.0;
    int backtracks = 0;
    std::vector<double> inner_residual_norms;
    double rho_bound = 0.0;
    double b_norm_est = 0.0;
    int inner_iterations = 0;
    double eps_k = 0.0;
    double step_norm = 0.0;
    SigmaFractions within_sigma;
    double elapsed_s = 0.0;
};

struct PhaseTimes {
    double partition = 0.0;
    double residual_eval = 0.0;
    double assembly = 0.0;
    double b_norm = 0.0;
    double factor = 0.0;
    double inner = 0.0;
    double line_search = 0.0;
    double aggregation = 0.0;

    double sum() const {
        return partition + residual_eval + assembly + b_norm + factor + inner +
               line_search + aggregation;
    }
};

struct SolveResult {
    Eigen::VectorXd x;  ///< original variable order
    Status status = Status::MaxIters;
    ConvergedBy criterion = ConvergedBy::None;
    std::vector<IterationRecord> records;
    PhaseTimes phase_times;
    double wall_time_s = 0.0;

    double F0 = 0.0;
    double grad_norm0 = 0.0;
    SigmaFractions initial_fractions;
    double final_F = 0.0;
    SigmaFractions final_fractions;

    int K = 1;
    int workers = 1;
    std::vector<int> block_points;
    int e_hat_size = 0;
    double separability_ratio = 0.0;

    int iterations() const { return static_cast<int>(records.size()); }
};

/// mu for the next step under the configured schedule, clamped to
/// [mu_min, mu_max]. prev_mu < 0 marks the first iteration.
double choose_mu(const MuConfig& mc, double b_norm_est, double grad_norm, double prev_mu,
                 double prev_alpha);

struct LineSearchResult {
    double alpha = 1.0;
    double F_new = 0.0;
    int backtracks = 0;
};

/// Largest alpha in {1, beta, beta^2, ...} with
/// F(x + alpha d) <= F_x - c alpha^2 ||g||^2 + eps_k. The slack eps_k makes
/// this succeed for ascent directions too; alpha below alpha_min raises
/// StallError.
LineSearchResult line_search(const Problem& p, const Eigen::VectorXd& x, double F_x,
                             const Eigen::VectorXd& d, double grad_norm, double c,
                             double eps_k, double beta, double alpha_min = 1e-16);

/// Starting point from the coordinate observations: each observed variable
/// takes the mean of its observations, unobserved variables start at 0.
Eigen::VectorXd initial_guess(const Problem& p);

/// Block-partitioned inexact LM: partitions the points, reorders, and
/// iterates damped steps solved by the block fixed-point inner iteration
/// with a nonmonotone backtracking line search.
SolveResult pilm_solve(const Problem& p, const SolverConfig& cfg);

/// Baseline: identical outer loop with the full system (J^T J + mu I) d = -g
/// solved by one sparse factorization per iteration.
SolveResult classical_lm_solve(const Problem& p, const SolverConfig& cfg);

}  // namespace pilm
