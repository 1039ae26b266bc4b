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

#include "pilm/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace pilm {

int VariableGraph::total_edge_weight() const {
    int total = 0;
    for (int v = 0; v < n; ++v) {
        for (const auto& [u, w] : adj[static_cast<size_t>(v)]) {
            if (u > v) {
                total += w;
            }
        }
    }
    return total;
}

VariableGraph build_variable_graph(const Problem& p) {
    std::map<std::pair<int, int>, int> weights;
    for (const Measurement& m : p.measurements) {
        std::array<int, 3> pts{};
        const int np = involved_points(m, pts);
        for (int a = 0; a < np; ++a) {
            for (int b = a + 1; b < np; ++b) {
                const int lo = std::min(pts[a], pts[b]);
                const int hi = std::max(pts[a], pts[b]);
                ++weights[{lo, hi}];
            }
        }
    }
    VariableGraph g;
    g.n = p.n_points;
    g.adj.resize(static_cast<size_t>(g.n));
    for (const auto& [edge, w] : weights) {
        g.adj[static_cast<size_t>(edge.first)].emplace_back(edge.second, w);
        g.adj[static_cast<size_t>(edge.second)].emplace_back(edge.first, w);
    }
    for (auto& list : g.adj) {
        std::sort(list.begin(), list.end());
    }
    return g;
}

double Partition::separability_ratio() const {
    const int e = e_hat_size();
    if (m == e) {
        return e == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return static_cast<double>(e) / static_cast<double>(m - e);
}

namespace {

/// Working graph for the multilevel scheme; vertex weight = points merged.
struct WorkGraph {
    int n = 0;
    std::vector<int> vwgt;
    std::vector<std::vector<std::pair<int, int>>> adj;  ///< (neighbor, weight)
};

WorkGraph to_work_graph(const VariableGraph& g) {
    WorkGraph w;
    w.n = g.n;
    w.vwgt.assign(static_cast<size_t>(g.n), 1);
    w.adj = g.adj;
    return w;
}

/// One heavy-edge matching round. Returns false when no pair merged.
bool coarsen(const WorkGraph& g, int max_vwgt, WorkGraph& out, std::vector<int>& to_coarse) {
    std::vector<int> match(static_cast<size_t>(g.n), -1);
    to_coarse.assign(static_cast<size_t>(g.n), -1);
    int nc = 0;
    for (int v = 0; v < g.n; ++v) {
        if (match[static_cast<size_t>(v)] != -1) {
            continue;
        }
        int best = -1;
        int best_w = 0;
        for (const auto& [u, w] : g.adj[static_cast<size_t>(v)]) {
            if (match[static_cast<size_t>(u)] == -1 &&
                g.vwgt[static_cast<size_t>(v)] + g.vwgt[static_cast<size_t>(u)] <= max_vwgt &&
                w > best_w) {
                best = u;
                best_w = w;
            }
        }
        match[static_cast<size_t>(v)] = best >= 0 ? best : v;
        if (best >= 0) {
            match[static_cast<size_t>(best)] = v;
            to_coarse[static_cast<size_t>(best)] = nc;
        }
        to_coarse[static_cast<size_t>(v)] = nc;
        ++nc;
    }
    if (nc == g.n) {
        return false;
    }
    out.n = nc;
    out.vwgt.assign(static_cast<size_t>(nc), 0);
    for (int v = 0; v < g.n; ++v) {
        out.vwgt[static_cast<size_t>(to_coarse[static_cast<size_t>(v)])] +=
            g.vwgt[static_cast<size_t>(v)];
    }
    std::vector<std::map<int, int>> acc(static_cast<size_t>(nc));
    for (int v = 0; v < g.n; ++v) {
        const int cv = to_coarse[static_cast<size_t>(v)];
        for (const auto& [u, w] : g.adj[static_cast<size_t>(v)]) {
            const int cu = to_coarse[static_cast<size_t>(u)];
            if (cu != cv) {
                acc[static_cast<size_t>(cv)][cu] += w;
            }
        }
    }
    out.adj.assign(static_cast<size_t>(nc), {});
    for (int c = 0; c < nc; ++c) {
        out.adj[static_cast<size_t>(c)].assign(acc[static_cast<size_t>(c)].begin(),
                                               acc[static_cast<size_t>(c)].end());
    }
    return true;
}

/// Greedy region growing: blocks are grown one at a time towards an equal
/// share of the remaining weight, preferring the most connected candidate.
std::vector<int> initial_partition(const WorkGraph& g, int K, int cap) {
    std::vector<int> block_of(static_cast<size_t>(g.n), -1);
    std::vector<long long> conn(static_cast<size_t>(g.n), 0);
    int unassigned = g.n;
    long long weight_left = 0;
    for (int v = 0; v < g.n; ++v) {
        weight_left += g.vwgt[static_cast<size_t>(v)];
    }
    for (int s = 0; s < K - 1; ++s) {
        const double target =
            static_cast<double>(weight_left) / static_cast<double>(K - s);
        std::fill(conn.begin(), conn.end(), 0);
        long long bw = 0;
        while (bw < target && unassigned > K - 1 - s) {
            int pick = -1;
            long long pick_conn = 0;
            for (int v = 0; v < g.n; ++v) {
                if (block_of[static_cast<size_t>(v)] != -1) {
                    continue;
                }
                if (bw > 0 && bw + g.vwgt[static_cast<size_t>(v)] > cap) {
                    continue;
                }
                if (pick == -1 || conn[static_cast<size_t>(v)] > pick_conn) {
                    pick = v;
                    pick_conn = conn[static_cast<size_t>(v)];
                }
            }
            if (pick == -1) {
                break;
            }
            block_of[static_cast<size_t>(pick)] = s;
            bw += g.vwgt[static_cast<size_t>(pick)];
            weight_left -= g.vwgt[static_cast<size_t>(pick)];
            --unassigned;
            for (const auto& [u, w] : g.adj[static_cast<size_t>(pick)]) {
                if (block_of[static_cast<size_t>(u)] == -1) {
                    conn[static_cast<size_t>(u)] += w;
                }
            }
        }
    }
    for (int v = 0; v < g.n; ++v) {
        if (block_of[static_cast<size_t>(v)] == -1) {
            block_of[static_cast<size_t>(v)] = K - 1;
        }
    }
    return block_of;
}

std::vector<long long> block_weights(const WorkGraph& g, const std::vector<int>& block_of,
                                     int K) {
    std::vector<long long> bw(static_cast<size_t>(K), 0);
    for (int v = 0; v < g.n; ++v) {
        bw[static_cast<size_t>(block_of[static_cast<size_t>(v)])] +=
            g.vwgt[static_cast<size_t>(v)];
    }
    return bw;
}

/// Moves vertices out of blocks above `cap` along the cheapest cut increase.
/// Guaranteed to succeed on the finest level (unit weights); on coarse levels
/// it gives up when no move fits, leaving the fix to finer levels.
void rebalance(const WorkGraph& g, std::vector<int>& block_of, int K, int cap) {
    auto bw = block_weights(g, block_of, K);
    std::vector<long long> conn(static_cast<size_t>(K), 0);
    for (int guard = 0; guard < 4 * g.n + 16; ++guard) {
        int over = -1;
        for (int b = 0; b < K; ++b) {
            if (bw[static_cast<size_t>(b)] > cap &&
                (over == -1 || bw[static_cast<size_t>(b)] > bw[static_cast<size_t>(over)])) {
                over = b;
            }
        }
        if (over == -1) {
            return;
        }
        int best_v = -1;
        int best_dst = -1;
        long long best_delta = 0;
        for (int v = 0; v < g.n; ++v) {
            if (block_of[static_cast<size_t>(v)] != over) {
                continue;
            }
            std::fill(conn.begin(), conn.end(), 0);
            for (const auto& [u, w] : g.adj[static_cast<size_t>(v)]) {
                conn[static_cast<size_t>(block_of[static_cast<size_t>(u)])] += w;
            }
            for (int b = 0; b < K; ++b) {
                if (b == over || bw[static_cast<size_t>(b)] + g.vwgt[static_cast<size_t>(v)] > cap) {
                    continue;
                }
                const long long delta = conn[static_cast<size_t>(over)] - conn[static_cast<size_t>(b)];
                if (best_v == -1 || delta < best_delta) {
                    best_v = v;
                    best_dst = b;
                    best_delta = delta;
                }
            }
        }
        if (best_v == -1) {
            return;
        }
        bw[static_cast<size_t>(over)] -= g.vwgt[static_cast<size_t>(best_v)];
        bw[static_cast<size_t>(best_dst)] += g.vwgt[static_cast<size_t>(best_v)];
        block_of[static_cast<size_t>(best_v)] = best_dst;
    }
}

/// Greedy boundary refinement: accepts moves that cut fewer edges, or equal
/// cut with strictly better balance, never exceeding `cap` and never
/// emptying a block. Each accepted move lowers (cut, sum of squared block
/// weights) lexicographically, so the loop terminates.
void refine(const WorkGraph& g, std::vector<int>& block_of, int K, int cap) {
    auto bw = block_weights(g, block_of, K);
    std::vector<long long> conn(static_cast<size_t>(K), 0);
    for (int pass = 0; pass < 10; ++pass) {
        bool moved = false;
        for (int v = 0; v < g.n; ++v) {
            const int b = block_of[static_cast<size_t>(v)];
            const int wv = g.vwgt[static_cast<size_t>(v)];
            if (bw[static_cast<size_t>(b)] == wv) {
                continue;
            }
            std::fill(conn.begin(), conn.end(), 0);
            bool boundary = false;
            for (const auto& [u, w] : g.adj[static_cast<size_t>(v)]) {
                const int ub = block_of[static_cast<size_t>(u)];
                conn[static_cast<size_t>(ub)] += w;
                boundary = boundary || ub != b;
            }
            if (!boundary) {
                continue;
            }
            int best = -1;
            long long best_gain = 0;
            for (int b2 = 0; b2 < K; ++b2) {
                if (b2 == b || conn[static_cast<size_t>(b2)] == 0 ||
                    bw[static_cast<size_t>(b2)] + wv > cap) {
                    continue;
                }
                const long long gain = conn[static_cast<size_t>(b2)] - conn[static_cast<size_t>(b)];
                const bool balances = bw[static_cast<size_t>(b2)] + wv < bw[static_cast<size_t>(b)];
                if ((gain > 0 || (gain == 0 && balances)) && (best == -1 || gain > best_gain)) {
                    best = b2;
                    best_gain = gain;
                }
            }
            if (best >= 0) {
                bw[static_cast<size_t>(b)] -= wv;
                bw[static_cast<size_t>(best)] += wv;
                block_of[static_cast<size_t>(v)] = best;
                moved = true;
            }
        }
        if (!moved) {
            return;
        }
    }
}

}  // namespace

std::vector<int> partition_points(const VariableGraph& g, int K, std::uint64_t /*seed*/,
                                  double tau) {
    if (K < 1) {
        throw InvalidArgument("K must be at least 1");
    }
    if (K > g.n) {
        throw InvalidArgument("K exceeds the number of points (" + std::to_string(K) +
                              " > " + std::to_string(g.n) + ")");
    }
    if (K == 1) {
        return std::vector<int>(static_cast<size_t>(g.n), 0);
    }
    const int cap = std::max<int>(
        static_cast<int>((g.n + K - 1) / K),
        static_cast<int>(std::floor((1.0 + tau) * static_cast<double>(g.n) / K)));
    // Merged vertices never exceed a quarter block so the coarsest level
    // still has enough granularity to balance.
    const int max_vwgt = std::max(1, (g.n + 4 * K - 1) / (4 * K));
    const int coarse_stop = std::max(64, 8 * K);

    std::vector<WorkGraph> levels;
    std::vector<std::vector<int>> maps;
    levels.push_back(to_work_graph(g));
    while (levels.back().n > coarse_stop) {
        WorkGraph next;
        std::vector<int> to_coarse;
        if (!coarsen(levels.back(), max_vwgt, next, to_coarse)) {
            break;
        }
        // Stalled matching (< 5% shrink) means further rounds are futile.
        if (next.n > levels.back().n * 19 / 20) {
            break;
        }
        levels.push_back(std::move(next));
        maps.push_back(std::move(to_coarse));
    }

    std::vector<int> block_of = initial_partition(levels.back(), K, cap);
    rebalance(levels.back(), block_of, K, cap);
    refine(levels.back(), block_of, K, cap);
    for (size_t lvl = maps.size(); lvl-- > 0;) {
        const WorkGraph& fine = levels[lvl];
        std::vector<int> fine_blocks(static_cast<size_t>(fine.n));
        for (int v = 0; v < fine.n; ++v) {
            fine_blocks[static_cast<size_t>(v)] =
                block_of[static_cast<size_t>(maps[lvl][static_cast<size_t>(v)])];
        }
        block_of = std::move(fine_blocks);
        rebalance(fine, block_of, K, cap);
        refine(fine, block_of, K, cap);
    }
    return block_of;
}

Partition partition_variables(const VariableGraph& g, int K, std::uint64_t seed, double tau) {
    Partition part;
    part.K = K;
    part.block_of = partition_points(g, K, seed, tau);
    part.points_of.assign(static_cast<size_t>(K), {});
    for (int v = 0; v < g.n; ++v) {
        part.points_of[static_cast<size_t>(part.block_of[static_cast<size_t>(v)])].push_back(v);
    }
    part.n_s.resize(static_cast<size_t>(K));
    for (int b = 0; b < K; ++b) {
        part.n_s[static_cast<size_t>(b)] = 2 * static_cast<int>(part.points_of[static_cast<size_t>(b)].size());
    }
    return part;
}

Partition induce_residual_partition(const Problem& p, const std::vector<int>& block_of,
                                    int K) {
    if (static_cast<int>(block_of.size()) != p.n_points) {
        throw PartitionConsistencyError("block map does not cover all points");
    }
    Partition part;
    part.K = K;
    part.m = p.n_measurements();
    part.block_of = block_of;
    part.points_of.assign(static_cast<size_t>(K), {});
    for (int v = 0; v < p.n_points; ++v) {
        const int b = block_of[static_cast<size_t>(v)];
        if (b < 0 || b >= K) {
            throw PartitionConsistencyError("block index out of range for point " +
                                            std::to_string(v));
        }
        part.points_of[static_cast<size_t>(b)].push_back(v);
    }
    part.n_s.resize(static_cast<size_t>(K));
    for (int b = 0; b < K; ++b) {
        if (part.points_of[static_cast<size_t>(b)].empty()) {
            throw PartitionConsistencyError("block " + std::to_string(b) + " is empty");
        }
        part.n_s[static_cast<size_t>(b)] =
            2 * static_cast<int>(part.points_of[static_cast<size_t>(b)].size());
    }
    part.E_s.assign(static_cast<size_t>(K), {});
    std::vector<std::map<int, char>> nbr(static_cast<size_t>(K));
    for (int idx = 0; idx < part.m; ++idx) {
        std::array<int, 3> pts{};
        const int np = involved_points(p.measurements[static_cast<size_t>(idx)], pts);
        int blocks[3];
        bool coupling = false;
        for (int a = 0; a < np; ++a) {
            blocks[a] = block_of[static_cast<size_t>(pts[a])];
            coupling = coupling || blocks[a] != blocks[0];
        }
        if (!coupling) {
            part.E_s[static_cast<size_t>(blocks[0])].push_back(idx);
        } else {
            part.E_hat.push_back(idx);
            for (int a = 0; a < np; ++a) {
                for (int b = 0; b < np; ++b) {
                    if (blocks[a] != blocks[b]) {
                        nbr[static_cast<size_t>(blocks[a])][blocks[b]] = 1;
                    }
                }
            }
        }
    }
    part.neighbors.assign(static_cast<size_t>(K), {});
    for (int b = 0; b < K; ++b) {
        for (const auto& [other, tag] : nbr[static_cast<size_t>(b)]) {
            part.neighbors[static_cast<size_t>(b)].push_back(other);
        }
    }
    return part;
}

namespace {

Measurement remap_points(const Measurement& m, const std::vector<int>& new_of_old) {
    Measurement out = m;
    std::visit(
        [&new_of_old](auto& v) {
            using T = std::decay_t<decltype(v)>;
            v.i = new_of_old[static_cast<size_t>(v.i)];
            if constexpr (!std::is_same_v<T, CoordinateMeasurement>) {
                v.j = new_of_old[static_cast<size_t>(v.j)];
            }
            if constexpr (std::is_same_v<T, AngleMeasurement> ||
                          std::is_same_v<T, PointLineMeasurement>) {
                v.k = new_of_old[static_cast<size_t>(v.k)];
            }
        },
        out);
    return out;
}

}  // namespace

Eigen::VectorXd Reordering::apply(const Eigen::VectorXd& x_old) const {
    Eigen::VectorXd x_new(n);
    for (int v = 0; v < n; ++v) {
        x_new[v] = x_old[var_perm[static_cast<size_t>(v)]];
    }
    return x_new;
}

Eigen::VectorXd Reordering::undo(const Eigen::VectorXd& x_new) const {
    Eigen::VectorXd x_old(n);
    for (int v = 0; v < n; ++v) {
        x_old[var_perm[static_cast<size_t>(v)]] = x_new[v];
    }
    return x_old;
}

std::pair<Problem, Reordering> reorder(const Problem& p, const Partition& part) {
    Reordering ro;
    ro.K = part.K;
    ro.n = p.n_vars();
    ro.m = p.n_measurements();
    ro.neighbors = part.neighbors;

    ro.point_perm.reserve(static_cast<size_t>(p.n_points));
    ro.var_offset.assign(1, 0);
    for (int b = 0; b < part.K; ++b) {
        for (int old_pt : part.points_of[static_cast<size_t>(b)]) {
            ro.point_perm.push_back(old_pt);
        }
        ro.var_offset.push_back(2 * static_cast<int>(ro.point_perm.size()));
    }
    std::vector<int> new_of_old(static_cast<size_t>(p.n_points));
    for (int np = 0; np < p.n_points; ++np) {
        new_of_old[static_cast<size_t>(ro.point_perm[static_cast<size_t>(np)])] = np;
    }
    ro.var_perm.resize(static_cast<size_t>(ro.n));
    ro.var_inv.resize(static_cast<size_t>(ro.n));
    for (int np = 0; np < p.n_points; ++np) {
        const int op = ro.point_perm[static_cast<size_t>(np)];
        ro.var_perm[static_cast<size_t>(2 * np)] = 2 * op;
        ro.var_perm[static_cast<size_t>(2 * np + 1)] = 2 * op + 1;
        ro.var_inv[static_cast<size_t>(2 * op)] = 2 * np;
        ro.var_inv[static_cast<size_t>(2 * op + 1)] = 2 * np + 1;
    }

    ro.res_offset.assign(1, 0);
    ro.meas_perm.reserve(static_cast<size_t>(ro.m));
    for (int b = 0; b < part.K; ++b) {
        for (int idx : part.E_s[static_cast<size_t>(b)]) {
            ro.meas_perm.push_back(idx);
        }
        ro.res_offset.push_back(static_cast<int>(ro.meas_perm.size()));
    }
    for (int idx : part.E_hat) {
        ro.meas_perm.push_back(idx);
    }

    Problem q;
    q.n_points = p.n_points;
    q.measurements.reserve(static_cast<size_t>(ro.m));
    for (int row = 0; row < ro.m; ++row) {
        q.measurements.push_back(remap_points(
            p.measurements[static_cast<size_t>(ro.meas_perm[static_cast<size_t>(row)])],
            new_of_old));
    }
    if (p.ground_truth) {
        std::vector<double> truth(static_cast<size_t>(ro.n));
        for (int v = 0; v < ro.n; ++v) {
            truth[static_cast<size_t>(v)] =
                (*p.ground_truth)[static_cast<size_t>(ro.var_perm[static_cast<size_t>(v)])];
        }
        q.ground_truth = std::move(truth);
    }
    return {std::move(q), std::move(ro)};
}

}  // namespace pilm
