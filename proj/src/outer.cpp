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

#include "pilm/outer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pilm/runtime.hpp"

namespace pilm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

class PhaseTimer {
  public:
    explicit PhaseTimer(double& acc) : acc_(acc), t0_(Clock::now()) {}
    ~PhaseTimer() { acc_ += seconds_since(t0_); }
    PhaseTimer(const PhaseTimer&) = delete;
    PhaseTimer& operator=(const PhaseTimer&) = delete;

  private:
    double& acc_;
    Clock::time_point t0_;
};

}  // namespace

std::string status_name(Status s) {
    switch (s) {
        case Status::Converged: return "converged";
        case Status::MaxIters: return "max_iters";
        case Status::TimeBudget: return "time_budget";
        case Status::Stalled: return "stalled";
    }
    return "unknown";
}

std::string converged_by_name(ConvergedBy c) {
    switch (c) {
        case ConvergedBy::None: return "none";
        case ConvergedBy::SigmaRule: return "sigma_rule";
        case ConvergedBy::GradTol: return "grad_tol";
    }
    return "unknown";
}

SigmaFractions sigma_fractions(const Eigen::VectorXd& R_weighted) {
    const auto m = R_weighted.size();
    if (m == 0) {
        return {1.0, 1.0, 1.0};
    }
    long c1 = 0;
    long c2 = 0;
    long c3 = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double a = std::abs(R_weighted[i]);
        c1 += a < 1.0;
        c2 += a < 2.0;
        c3 += a < 3.0;
    }
    const double dm = static_cast<double>(m);
    return {static_cast<double>(c1) / dm, static_cast<double>(c2) / dm,
            static_cast<double>(c3) / dm};
}

bool sigma_rule_met(const SigmaFractions& fr) {
    return fr.f1 >= 0.68 && fr.f2 >= 0.95 && fr.f3 >= 0.995;
}

double choose_mu(const MuConfig& mc, double b_norm_est, double grad_norm, double prev_mu,
                 double prev_alpha) {
    double mu = 0.0;
    switch (mc.mode) {
        case MuMode::Theoretical:
            if (!(mc.c_mu > 1.0)) {
                throw InvalidArgument("c_mu must exceed 1");
            }
            mu = mc.c_mu * b_norm_est;
            break;
        case MuMode::Practical:
            if (prev_mu < 0.0) {
                if (mc.mu0 < 0.0) {
                    throw InvalidArgument("starting damping is unresolved");
                }
                mu = mc.mu0;
            } else {
                mu = prev_alpha > 0.5 ? prev_mu / 2.0 : prev_mu * 2.0;
            }
            break;
        case MuMode::DeltaSchedule:
            if (!(mc.delta > 0.0) || mc.delta > 1.0) {
                throw InvalidArgument("delta must lie in (0, 1]");
            }
            mu = mc.mu_bar * std::pow(grad_norm, mc.delta);
            break;
    }
    return std::clamp(mu, mc.mu_min, mc.mu_max);
}

LineSearchResult line_search(const Problem& p, const Eigen::VectorXd& x, double F_x,
                             const Eigen::VectorXd& d, double grad_norm, double c,
                             double eps_k, double beta, double alpha_min) {
    if (!(eps_k > 0.0)) {
        throw InvalidArgument("line-search slack must be positive");
    }
    if (!(beta > 0.0) || beta >= 1.0) {
        throw InvalidArgument("beta must lie in (0, 1)");
    }
    if (!d.allFinite()) {
        throw InvalidArgument("direction is not finite");
    }
    const double gn2 = grad_norm * grad_norm;
    double alpha = 1.0;
    int backtracks = 0;
    while (true) {
        const double F_try = eval_F(p, x + alpha * d);
        if (F_try <= F_x - c * alpha * alpha * gn2 + eps_k) {
            return {alpha, F_try, backtracks};
        }
        alpha *= beta;
        ++backtracks;
        if (alpha < alpha_min) {
            throw StallError("line search underflow", alpha, F_x, grad_norm);
        }
    }
}

Eigen::VectorXd initial_guess(const Problem& p) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p.n_vars());
    std::vector<int> counts(static_cast<size_t>(p.n_vars()), 0);
    for (const Measurement& m : p.measurements) {
        if (const auto* cm = std::get_if<CoordinateMeasurement>(&m)) {
            const int var = 2 * cm->i + (cm->axis == Axis::X ? 0 : 1);
            x[var] += cm->value;
            ++counts[static_cast<size_t>(var)];
        }
    }
    for (int v = 0; v < p.n_vars(); ++v) {
        if (counts[static_cast<size_t>(v)] > 0) {
            x[v] /= static_cast<double>(counts[static_cast<size_t>(v)]);
        }
    }
    return x;
}

namespace {

struct DirectionDiag {
    std::vector<double> inner_residual_norms;
    double rho_bound = 0.0;
    int inner_iterations = 0;
};

/// Per-iteration system builder and direction solver; the outer loop is
/// shared between the block solver and the classical baseline.
class DirectionEngine {
  public:
    virtual ~DirectionEngine() = default;
    /// Builds the iteration's linear-algebra state; returns the gradient.
    virtual Eigen::VectorXd prepare(const Eigen::VectorXd& x, const Eigen::VectorXd& R,
                                    PhaseTimes& pt) = 0;
    /// ||B|| estimate of the prepared system (0 for the baseline).
    virtual double coupling_norm(PhaseTimes& pt) = 0;
    virtual Eigen::VectorXd direction(double mu, double grad_norm, DirectionDiag& diag,
                                      PhaseTimes& pt) = 0;
};

class PilmEngine final : public DirectionEngine {
  public:
    PilmEngine(const Problem& rp, const Reordering& ro, const SolverConfig& cfg,
               int workers)
        : rp_(rp), ro_(ro), cfg_(cfg), workers_(workers) {}

    Eigen::VectorXd prepare(const Eigen::VectorXd& x, const Eigen::VectorXd& R,
                            PhaseTimes& pt) override {
        PhaseTimer t(pt.assembly);
        const SparseJacobian J = eval_J(rp_, x);
        split_ = split_jacobian(J, ro_);
        bs_ = assemble_blocks(split_, R, ro_, workers_);
        return bs_.concat_g();
    }

    double coupling_norm(PhaseTimes& pt) override {
        PhaseTimer t(pt.b_norm);
        b_norm_ = ro_.K > 1 ? estimate_B_norm(bs_, cfg_.b_norm_iters) : 0.0;
        return b_norm_;
    }

    Eigen::VectorXd direction(double mu, double grad_norm, DirectionDiag& diag,
                              PhaseTimes& pt) override {
        BlockFactorization fac = [&] {
            PhaseTimer t(pt.factor);
            return factor_blocks(bs_, mu, workers_);
        }();
        InnerOptions opt;
        opt.ell = cfg_.ell;
        opt.adaptive = cfg_.adaptive_ell;
        if (opt.adaptive) {
            const double dexp =
                cfg_.mu.mode == MuMode::DeltaSchedule ? cfg_.mu.delta : 0.0;
            opt.residual_tol = cfg_.adaptive_eta * std::pow(grad_norm, 1.0 + dexp);
        }
        opt.ell_max = cfg_.ell_max;
        opt.workers = workers_;
        opt.b_norm_estimate = b_norm_;
        PhaseTimer t(pt.inner);
        InnerResult ir = fixed_point_solve(bs_, fac, opt);
        diag.inner_residual_norms = std::move(ir.inner_residual_norms);
        diag.rho_bound = ir.rho_bound;
        diag.inner_iterations = ir.iterations_used;
        return std::move(ir.d);
    }

  private:
    const Problem& rp_;
    const Reordering& ro_;
    const SolverConfig& cfg_;
    int workers_;
    JacobianSplit split_;
    BlockSystem bs_;
    double b_norm_ = 0.0;
};

class ClassicalEngine final : public DirectionEngine {
  public:
    explicit ClassicalEngine(const Problem& p) : p_(p) {}

    Eigen::VectorXd prepare(const Eigen::VectorXd& x, const Eigen::VectorXd& R,
                            PhaseTimes& pt) override {
        PhaseTimer t(pt.assembly);
        const Eigen::SparseMatrix<double> J = eval_J(p_, x).to_eigen();
        A_ = Eigen::SparseMatrix<double>(J.transpose()) * J;
        g_ = J.transpose() * R;
        return g_;
    }

    double coupling_norm(PhaseTimes&) override { return 0.0; }

    Eigen::VectorXd direction(double mu, double /*grad_norm*/, DirectionDiag& diag,
                              PhaseTimes& pt) override {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> fac;
        {
            PhaseTimer t(pt.factor);
            Eigen::SparseMatrix<double> ident(A_.rows(), A_.cols());
            ident.setIdentity();
            fac.compute(Eigen::SparseMatrix<double>(A_ + mu * ident));
            if (fac.info() != Eigen::Success) {
                throw NumericalError("normal-equation factorization failed");
            }
        }
        PhaseTimer t(pt.inner);
        Eigen::VectorXd d = fac.solve(-g_);
        if (!d.allFinite()) {
            throw NumericalError("normal-equation solve produced non-finite values");
        }
        diag.inner_residual_norms = {(A_ * d + mu * d + g_).norm()};
        diag.rho_bound = 0.0;
        diag.inner_iterations = 1;
        return d;
    }

  private:
    const Problem& p_;
    Eigen::SparseMatrix<double> A_;
    Eigen::VectorXd g_;
};

SolveResult run_outer_loop(const Problem& p, const Eigen::VectorXd& x_start,
                           const SolverConfig& cfg, DirectionEngine& eng,
                           Clock::time_point t0, PhaseTimes pt) {
    SolveResult res;
    res.phase_times = pt;

    Eigen::VectorXd x = x_start;
    Eigen::VectorXd R;
    {
        PhaseTimer t(res.phase_times.residual_eval);
        R = eval_R(p, x);
    }
    double F = 0.5 * R.squaredNorm();
    SigmaFractions fr = sigma_fractions(R);
    res.F0 = F;
    res.initial_fractions = fr;

    LineSearchConfig ls = cfg.line_search;
    if (ls.eps0 < 0.0) {
        ls.eps0 = 1e-3 * std::max(F, 1e-300);
    }
    MuConfig mc = cfg.mu;
    if (mc.mode == MuMode::Practical && mc.mu0 < 0.0) {
        mc.mu0 = std::max(1.0, R.norm());
    }

    double prev_mu = -1.0;
    double prev_alpha = 1.0;
    res.status = Status::MaxIters;
    bool stalled = false;

    for (int k = 0; k < cfg.termination.max_outer_iters && !stalled; ++k) {
        if (cfg.termination.sigma_rule && sigma_rule_met(fr)) {
            res.status = Status::Converged;
            res.criterion = ConvergedBy::SigmaRule;
            break;
        }
        const Eigen::VectorXd g = eng.prepare(x, R, res.phase_times);
        const double grad_norm = g.norm();
        if (k == 0) {
            res.grad_norm0 = grad_norm;
        }
        if ((cfg.termination.grad_tol > 0.0 && grad_norm <= cfg.termination.grad_tol) ||
            (cfg.termination.grad_rtol > 0.0 &&
             grad_norm <= cfg.termination.grad_rtol * res.grad_norm0)) {
            res.status = Status::Converged;
            res.criterion = ConvergedBy::GradTol;
            break;
        }
        if (seconds_since(t0) > cfg.termination.time_budget_s) {
            res.status = Status::TimeBudget;
            break;
        }

        const double b_norm = eng.coupling_norm(res.phase_times);
        double mu = choose_mu(mc, b_norm, grad_norm, prev_mu, prev_alpha);
        const double eps_k = ls.eps0 * std::pow(ls.gamma, k);
        const double F_before = F;

        DirectionDiag diag;
        Eigen::VectorXd d;
        double alpha = 1.0;
        int backtracks = 0;
        for (int attempt = 0;; ++attempt) {
            d = eng.direction(mu, grad_norm, diag, res.phase_times);
            if (ls.mode == AlphaMode::FullStep) {
                alpha = 1.0;
                backtracks = 0;
                break;
            }
            try {
                PhaseTimer t(res.phase_times.line_search);
                const LineSearchResult lsr = line_search(p, x, F, d, grad_norm, ls.c,
                                                         eps_k, ls.beta, ls.alpha_min);
                alpha = lsr.alpha;
                backtracks = lsr.backtracks;
                break;
            } catch (const StallError& e) {
                // One escalation: a larger damping shortens and bends the
                // direction towards -g, which the slack then accepts.
                if (attempt == 0 && mu < mc.mu_max) {
                    mu = std::min(mu * 2.0, mc.mu_max);
                    continue;
                }
                stalled = true;
                alpha = 0.0;
                backtracks = static_cast<int>(
                    std::lround(std::log(std::max(e.last_alpha(), 1e-300)) /
                                std::log(ls.beta)));
                break;
            }
        }

        if (!stalled) {
            PhaseTimer t(res.phase_times.aggregation);
            x += alpha * d;
        }
        if (!stalled) {
            PhaseTimer t(res.phase_times.residual_eval);
            R = eval_R(p, x);
        }
        {
            PhaseTimer t(res.phase_times.aggregation);
            if (!stalled) {
                F = 0.5 * R.squaredNorm();
                fr = sigma_fractions(R);
            }
            IterationRecord rec;
            rec.k = k;
            rec.F = F;
            rec.grad_norm = grad_norm;
            rec.mu = mu;
            rec.alpha = alpha;
            rec.backtracks = backtracks;
            rec.inner_residual_norms = std::move(diag.inner_residual_norms);
            rec.rho_bound = diag.rho_bound;
            rec.b_norm_est = b_norm;
            rec.inner_iterations = diag.inner_iterations;
            rec.eps_k = eps_k;
            rec.step_norm = alpha * d.norm();
            rec.within_sigma = fr;
            rec.elapsed_s = seconds_since(t0);
            res.records.push_back(std::move(rec));
        }
        prev_mu = mu;
        // A step the slack admitted without decreasing F is not a success;
        // feeding alpha = 0 into the halve/double rule raises the damping so
        // the inner recurrence contracts again instead of compounding.
        prev_alpha = F <= F_before ? alpha : 0.0;
    }

    if (stalled) {
        res.status = Status::Stalled;
    } else if (res.status == Status::MaxIters) {
        // The final step may reach a criterion right at the iteration cap;
        // the returned iterate then deserves Converged, not MaxIters.
        if (cfg.termination.sigma_rule && sigma_rule_met(fr)) {
            res.status = Status::Converged;
            res.criterion = ConvergedBy::SigmaRule;
        } else if (cfg.termination.grad_tol > 0.0 ||
                   cfg.termination.grad_rtol > 0.0) {
            const double gn = eval_gradient(p, x).norm();
            if ((cfg.termination.grad_tol > 0.0 &&
                 gn <= cfg.termination.grad_tol) ||
                (cfg.termination.grad_rtol > 0.0 &&
                 gn <= cfg.termination.grad_rtol * res.grad_norm0)) {
                res.status = Status::Converged;
                res.criterion = ConvergedBy::GradTol;
            }
        }
    }
    res.x = std::move(x);
    res.final_F = F;
    res.final_fractions = fr;
    res.wall_time_s = seconds_since(t0);
    return res;
}

Eigen::VectorXd resolve_x0(const Problem& p, const SolverConfig& cfg) {
    if (cfg.x0) {
        if (cfg.x0->size() != p.n_vars()) {
            throw InvalidArgument("x0 size does not match the problem");
        }
        return *cfg.x0;
    }
    return initial_guess(p);
}

}  // namespace

SolveResult pilm_solve(const Problem& p, const SolverConfig& cfg) {
    validate(p);
    const auto t0 = Clock::now();
    PhaseTimes pt;

    const Eigen::VectorXd x0 = resolve_x0(p, cfg);
    Partition part;
    Problem rp;
    Reordering ro;
    {
        PhaseTimer t(pt.partition);
        const VariableGraph graph = build_variable_graph(p);
        const std::vector<int> block_of =
            partition_points(graph, cfg.K, cfg.seed, cfg.balance_tau);
        part = induce_residual_partition(p, block_of, cfg.K);
        std::tie(rp, ro) = reorder(p, part);
    }
    const int workers = cfg.workers >= 1 ? cfg.workers : default_workers(cfg.K);

    PilmEngine eng(rp, ro, cfg, workers);
    SolveResult res = run_outer_loop(rp, ro.apply(x0), cfg, eng, t0, pt);
    res.x = ro.undo(res.x);
    res.K = cfg.K;
    res.workers = workers;
    res.block_points.reserve(static_cast<size_t>(cfg.K));
    for (const auto& pts : part.points_of) {
        res.block_points.push_back(static_cast<int>(pts.size()));
    }
    res.e_hat_size = part.e_hat_size();
    res.separability_ratio = part.separability_ratio();
    return res;
}

SolveResult classical_lm_solve(const Problem& p, const SolverConfig& cfg) {
    validate(p);
    const auto t0 = Clock::now();
    ClassicalEngine eng(p);
    SolveResult res = run_outer_loop(p, resolve_x0(p, cfg), cfg, eng, t0, PhaseTimes{});
    res.K = 1;
    res.workers = 1;
    res.block_points = {p.n_points};
    res.e_hat_size = 0;
    res.separability_ratio = 0.0;
    return res;
}

}  // namespace pilm
