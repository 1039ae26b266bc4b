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

#include "pilm/inner.hpp"

#include <cmath>

#include "pilm/runtime.hpp"

namespace pilm {

BlockFactorization factor_blocks(const BlockSystem& bs, double mu, int workers) {
    if (!(mu > 0.0)) {
        throw InvalidArgument("damping must be positive");
    }
    BlockFactorization out;
    out.mu = mu;
    out.fac.resize(static_cast<size_t>(bs.K));
    WorkPlan plan;
    plan.phase = Phase::Factor;
    plan.n_tasks = bs.K;
    plan.task = [&](int i) {
        const int ni = bs.n_i[static_cast<size_t>(i)];
        Eigen::SparseMatrix<double> ident(ni, ni);
        ident.setIdentity();
        const Eigen::SparseMatrix<double> A = bs.P[static_cast<size_t>(i)] + mu * ident;
        auto fac = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        fac->compute(A);
        if (fac->info() != Eigen::Success) {
            throw NumericalError("block factorization failed", i);
        }
        out.fac[static_cast<size_t>(i)] = std::move(fac);
    };
    run_phase(plan, workers);
    return out;
}

Eigen::VectorXd solve_block_rhs(const BlockFactorization& fac, int i,
                                const Eigen::VectorXd& rhs) {
    Eigen::VectorXd y = fac.fac[static_cast<size_t>(i)]->solve(rhs);
    if (!y.allFinite()) {
        throw NumericalError("block solve produced non-finite values", i);
    }
    return y;
}

InnerResult fixed_point_solve(const BlockSystem& bs, const BlockFactorization& fac,
                              const InnerOptions& opt) {
    const int n = bs.n();
    const double mu = fac.mu;
    InnerResult res;
    res.rho_bound = mu > 0.0 ? opt.b_norm_estimate / mu : 0.0;

    Eigen::VectorXd y(n);
    Eigen::VectorXd By = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r(n);

    const int limit = opt.adaptive ? opt.ell_max : opt.ell;
    if (limit < 1) {
        throw InvalidArgument("inner iteration count must be at least 1");
    }

    // Divergence means the recurrence is expanding, not that the residual
    // jitters at the rounding floor once it has contracted by ~12 digits.
    double gsq = 0.0;
    for (int i = 0; i < bs.K; ++i) {
        gsq += bs.g[static_cast<size_t>(i)].squaredNorm();
    }
    const double divergence_floor = 1e-12 * std::sqrt(gsq);

    WorkPlan solve_plan;
    solve_plan.n_tasks = bs.K;
    WorkPlan residual_plan;
    residual_plan.phase = Phase::InnerStep;
    residual_plan.n_tasks = bs.K;
    // Reads the full y of the completed sweep; writes only block-i segments.
    residual_plan.task = [&](int i) {
        const int off = bs.offset[static_cast<size_t>(i)];
        const int ni = bs.n_i[static_cast<size_t>(i)];
        By.segment(off, ni) = bs.apply_B_block(i, y);
        r.segment(off, ni) = bs.P[static_cast<size_t>(i)] * y.segment(off, ni) +
                             mu * y.segment(off, ni) + By.segment(off, ni) +
                             bs.g[static_cast<size_t>(i)];
    };

    for (int l = 0; l < limit; ++l) {
        solve_plan.phase = l == 0 ? Phase::FirstSolve : Phase::InnerStep;
        solve_plan.task = [&, l](int i) {
            const int off = bs.offset[static_cast<size_t>(i)];
            const int ni = bs.n_i[static_cast<size_t>(i)];
            Eigen::VectorXd rhs = -bs.g[static_cast<size_t>(i)];
            if (l > 0) {
                rhs -= By.segment(off, ni);
            }
            y.segment(off, ni) = solve_block_rhs(fac, i, rhs);
        };
        run_phase(solve_plan, opt.workers);
        run_phase(residual_plan, opt.workers);

        // Fixed-order reduction keeps the recorded norms worker-independent.
        double sq = 0.0;
        for (int i = 0; i < bs.K; ++i) {
            sq += r.segment(bs.offset[static_cast<size_t>(i)], bs.n_i[static_cast<size_t>(i)])
                      .squaredNorm();
        }
        const double rnorm = std::sqrt(sq);
        if (!std::isfinite(rnorm)) {
            throw NumericalError("inner iteration produced non-finite residual");
        }
        if (!res.inner_residual_norms.empty() &&
            rnorm > res.inner_residual_norms.back() && rnorm > divergence_floor) {
            res.diverged = true;
        }
        res.inner_residual_norms.push_back(rnorm);
        if (opt.adaptive && rnorm <= opt.residual_tol) {
            break;
        }
    }
    res.iterations_used = static_cast<int>(res.inner_residual_norms.size());
    res.d = std::move(y);
    return res;
}

}  // namespace pilm
