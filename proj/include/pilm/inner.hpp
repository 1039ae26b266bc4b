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

#include <Eigen/SparseCholesky>
#include <memory>
#include <vector>

#include "pilm/blocks.hpp"

namespace pilm {

/// Sparse LDLT factors of P_i + mu I, one per block; valid only for the mu
/// they were built with.
struct BlockFactorization {
    double mu = 0.0;
    std::vector<std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>> fac;
};

/// Factors every P_i + mu I. P_i is positive semi-definite, so this succeeds
/// for any mu > 0; a failure raises NumericalError carrying the block index.
BlockFactorization factor_blocks(const BlockSystem& bs, double mu, int workers = 1);

/// Solves (P_i + mu I) y = rhs for one block.
Eigen::VectorXd solve_block_rhs(const BlockFactorization& fac, int i,
                                const Eigen::VectorXd& rhs);

struct InnerOptions {
    int ell = 5;               ///< fixed iteration count when adaptive is off
    bool adaptive = false;     ///< stop once ||r^l|| <= residual_tol
    double residual_tol = 0.0;
    int ell_max = 100;         ///< adaptive-mode cap
    int workers = 1;
    double b_norm_estimate = 0.0;  ///< feeds rho_bound = estimate / mu
};

struct InnerResult {
    Eigen::VectorXd d;  ///< concatenated final iterate
    /// ||r^l|| for each iterate, where r^l = (J^T J + mu I) y^l + g computed
    /// through block operations (so block-solve error is included).
    std::vector<double> inner_residual_norms;
    double rho_bound = 0.0;
    int iterations_used = 0;
    /// Some ||r^{l+1}|| exceeded ||r^l||; surfaced as a diagnostic, never an
    /// error, because the damping choice does not guarantee contraction.
    bool diverged = false;
};

/// Runs the block fixed-point iteration: y^1 solves (P + mu I) y = -g, then
/// y^{l+1} solves (P + mu I) y = -(g + B y^l). Block solves of one sweep run
/// concurrently; a barrier separates sweeps. Results are bitwise identical
/// for any worker count.
InnerResult fixed_point_solve(const BlockSystem& bs, const BlockFactorization& fac,
                              const InnerOptions& opt);

}  // namespace pilm
