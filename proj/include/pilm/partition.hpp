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
#include <utility>
#include <vector>

#include "pilm/model.hpp"

namespace pilm {

/// Coupling graph over points: one vertex per point, an edge (a, b) weighted
/// by the number of measurements involving both a and b. Coordinate
/// measurements contribute no edges.
struct VariableGraph {
    int n = 0;
    /// Per-vertex (neighbor, weight) lists, neighbors ascending, symmetric,
    /// no self loops, weights >= 1.
    std::vector<std::vector<std::pair<int, int>>> adj;

    int total_edge_weight() const;  ///< sum of weights, each edge counted once
};

VariableGraph build_variable_graph(const Problem& p);

/// K-way partition of the points together with the induced split of the
/// measurement set: E_s holds the measurements entirely inside block s, E_hat
/// the coupling measurements touching two or more blocks.
struct Partition {
    int K = 1;
    int m = 0;                                 ///< total measurements
    std::vector<int> block_of;                 ///< point -> block
    std::vector<std::vector<int>> points_of;   ///< block -> points, ascending
    std::vector<int> n_s;                      ///< scalar variables per block
    std::vector<std::vector<int>> E_s;         ///< per-block residual indices
    std::vector<int> E_hat;                    ///< coupling residual indices
    std::vector<std::vector<int>> neighbors;   ///< N_i, ascending, excludes i

    int e_hat_size() const { return static_cast<int>(E_hat.size()); }
    /// |E_hat| / (m - |E_hat|); 0 when separable.
    double separability_ratio() const;
};

/// Balanced K-way partition by multilevel coarsening (heavy-edge matching),
/// greedy region growing on the coarsest graph, and boundary refinement on
/// each level. Deterministic: ties break towards the lowest vertex index.
/// Block sizes satisfy max_s |points_s| <= max(ceil(n/K), (1+tau) n/K).
std::vector<int> partition_points(const VariableGraph& g, int K, std::uint64_t seed,
                                  double tau = 0.05);

/// Convenience wrapper producing a Partition without the residual split.
Partition partition_variables(const VariableGraph& g, int K, std::uint64_t seed,
                              double tau = 0.05);

/// Classifies every measurement: inside block s if all its points are in s,
/// otherwise coupling. Fills E_s, E_hat and the block neighborhood sets.
Partition induce_residual_partition(const Problem& p, const std::vector<int>& block_of,
                                    int K);

/// Permutation produced by reorder(): variables grouped block by block,
/// measurements ordered E_1, ..., E_K, E_hat. Indices map new -> old.
struct Reordering {
    int K = 1;
    int n = 0;  ///< scalar variables
    int m = 0;  ///< measurements

    std::vector<int> point_perm;  ///< new point -> old point
    std::vector<int> var_perm;    ///< new variable -> old variable
    std::vector<int> var_inv;     ///< old variable -> new variable
    std::vector<int> meas_perm;   ///< new measurement -> old measurement

    /// Block i owns variables [var_offset[i], var_offset[i+1]).
    std::vector<int> var_offset;
    /// Rows [res_offset[i], res_offset[i+1]) are E_i; rows [res_offset[K], m)
    /// are the coupling set.
    std::vector<int> res_offset;
    std::vector<std::vector<int>> neighbors;

    int n_blocks() const { return K; }
    int block_size(int i) const { return var_offset[i + 1] - var_offset[i]; }
    int coupling_rows() const { return m - res_offset[K]; }

    /// x in original variable order -> reordered order.
    Eigen::VectorXd apply(const Eigen::VectorXd& x_old) const;
    /// Inverse of apply().
    Eigen::VectorXd undo(const Eigen::VectorXd& x_new) const;
};

/// Renumbers points and measurements so variables are contiguous per block
/// and coupling measurements come last. Evaluations are invariant: F and
/// ||g|| of the reordered problem at apply(x) equal those of p at x.
std::pair<Problem, Reordering> reorder(const Problem& p, const Partition& part);

}  // namespace pilm
