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
#include <map>
#include <utility>
#include <vector>

#include "pilm/partition.hpp"

namespace pilm {

/// Per-block slices of the reordered Jacobian: J_R[i] holds the rows fully
/// inside block i restricted to its columns; J_rho[i] holds the coupling
/// rows' columns that fall in block i. All blocks share the coupling row
/// numbering, so stacking [J_R; J_rho] over blocks reproduces J.
struct JacobianSplit {
    int K = 1;
    std::vector<Eigen::SparseMatrix<double>> J_R;
    std::vector<Eigen::SparseMatrix<double>> J_rho;
};

/// Requires J in the reordered row/column numbering. Throws
/// PartitionConsistencyError if an in-block row has a nonzero outside its
/// block's columns.
JacobianSplit split_jacobian(const SparseJacobian& J, const Reordering& ro);

/// Block view of the normal equations: the block diagonal P (one sparse
/// symmetric matrix per block), the coupling blocks B_ij for j in N_i (both
/// halves stored, B_ij = B_ji^T exactly), and the gradient segments g_i.
/// Assembling P + B equals J^T J of the reordered problem.
struct BlockSystem {
    int K = 1;
    double mu = 0.0;  ///< damping used downstream; assembly leaves it 0
    std::vector<int> n_i;
    std::vector<int> offset;  ///< size K+1 prefix sums of n_i
    std::vector<Eigen::SparseMatrix<double>> P;
    std::map<std::pair<int, int>, Eigen::SparseMatrix<double>> B;
    std::vector<Eigen::VectorXd> g;
    std::vector<std::vector<int>> neighbors;

    int n() const { return offset.empty() ? 0 : offset.back(); }
    Eigen::VectorXd concat_g() const;

    /// (B y)_i with neighbors accumulated in ascending order; reads only y.
    Eigen::VectorXd apply_B_block(int i, const Eigen::VectorXd& y) const;
    Eigen::VectorXd apply_B(const Eigen::VectorXd& y) const;
};

/// Computes P_i, g_i and the B_ij for the residual vector R of the reordered
/// problem. Off-diagonal blocks are formed once per unordered pair and
/// mirrored by transposition.
BlockSystem assemble_blocks(const JacobianSplit& split, const Eigen::VectorXd& R,
                            const Reordering& ro, int workers = 1);

/// Power-iteration estimate of ||B||_2 using block mat-vecs only. The
/// estimate is a lower bound, nondecreasing in iters, and 0 when B is empty.
double estimate_B_norm(const BlockSystem& bs, int iters = 30,
                       std::uint64_t seed = 0x2545F4914F6CDD1DULL);

/// Same estimator for ||J^T J||_2 via products with J; used for the
/// near-separability diagnostic ||B|| / ||J^T J||.
double estimate_JtJ_norm(const SparseJacobian& J, int iters = 30,
                         std::uint64_t seed = 0x2545F4914F6CDD1DULL);

/// Writes one "row col" line per structural nonzero of the reordered normal
/// matrix P + B (block sparsity spy data).
void dump_block_pattern(const BlockSystem& bs, const std::string& path);

}  // namespace pilm
