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

#include "pilm/blocks.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "pilm/runtime.hpp"

namespace pilm {

namespace {

int block_of_var(const Reordering& ro, int col) {
    const auto it = std::upper_bound(ro.var_offset.begin(), ro.var_offset.end(), col);
    return static_cast<int>(it - ro.var_offset.begin()) - 1;
}

}  // namespace

JacobianSplit split_jacobian(const SparseJacobian& J, const Reordering& ro) {
    using Triplet = Eigen::Triplet<double>;
    JacobianSplit split;
    split.K = ro.K;
    split.J_R.resize(static_cast<size_t>(ro.K));
    split.J_rho.resize(static_cast<size_t>(ro.K));
    const int m_hat = ro.coupling_rows();

    std::vector<std::vector<Triplet>> trip_R(static_cast<size_t>(ro.K));
    std::vector<std::vector<Triplet>> trip_rho(static_cast<size_t>(ro.K));
    for (int b = 0; b < ro.K; ++b) {
        for (int row = ro.res_offset[static_cast<size_t>(b)];
             row < ro.res_offset[static_cast<size_t>(b) + 1]; ++row) {
            for (int e = J.row_ptr[static_cast<size_t>(row)];
                 e < J.row_ptr[static_cast<size_t>(row) + 1]; ++e) {
                const int col = J.col_idx[static_cast<size_t>(e)];
                if (col < ro.var_offset[static_cast<size_t>(b)] ||
                    col >= ro.var_offset[static_cast<size_t>(b) + 1]) {
                    throw PartitionConsistencyError(
                        "row " + std::to_string(row) + " of block " + std::to_string(b) +
                        " touches a variable outside the block");
                }
                trip_R[static_cast<size_t>(b)].emplace_back(
                    row - ro.res_offset[static_cast<size_t>(b)],
                    col - ro.var_offset[static_cast<size_t>(b)],
                    J.values[static_cast<size_t>(e)]);
            }
        }
    }
    for (int row = ro.res_offset[static_cast<size_t>(ro.K)]; row < ro.m; ++row) {
        for (int e = J.row_ptr[static_cast<size_t>(row)];
             e < J.row_ptr[static_cast<size_t>(row) + 1]; ++e) {
            const int col = J.col_idx[static_cast<size_t>(e)];
            const int b = block_of_var(ro, col);
            trip_rho[static_cast<size_t>(b)].emplace_back(
                row - ro.res_offset[static_cast<size_t>(ro.K)],
                col - ro.var_offset[static_cast<size_t>(b)],
                J.values[static_cast<size_t>(e)]);
        }
    }
    for (int b = 0; b < ro.K; ++b) {
        const int rows_b = ro.res_offset[static_cast<size_t>(b) + 1] -
                           ro.res_offset[static_cast<size_t>(b)];
        split.J_R[static_cast<size_t>(b)].resize(rows_b, ro.block_size(b));
        split.J_R[static_cast<size_t>(b)].setFromTriplets(
            trip_R[static_cast<size_t>(b)].begin(), trip_R[static_cast<size_t>(b)].end());
        split.J_rho[static_cast<size_t>(b)].resize(m_hat, ro.block_size(b));
        split.J_rho[static_cast<size_t>(b)].setFromTriplets(
            trip_rho[static_cast<size_t>(b)].begin(),
            trip_rho[static_cast<size_t>(b)].end());
    }
    return split;
}

Eigen::VectorXd BlockSystem::concat_g() const {
    Eigen::VectorXd out(n());
    for (int i = 0; i < K; ++i) {
        out.segment(offset[static_cast<size_t>(i)], n_i[static_cast<size_t>(i)]) =
            g[static_cast<size_t>(i)];
    }
    return out;
}

Eigen::VectorXd BlockSystem::apply_B_block(int i, const Eigen::VectorXd& y) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_i[static_cast<size_t>(i)]);
    for (int j : neighbors[static_cast<size_t>(i)]) {
        const auto it = B.find({i, j});
        if (it != B.end()) {
            out += it->second * y.segment(offset[static_cast<size_t>(j)],
                                          n_i[static_cast<size_t>(j)]);
        }
    }
    return out;
}

Eigen::VectorXd BlockSystem::apply_B(const Eigen::VectorXd& y) const {
    Eigen::VectorXd out(n());
    for (int i = 0; i < K; ++i) {
        out.segment(offset[static_cast<size_t>(i)], n_i[static_cast<size_t>(i)]) =
            apply_B_block(i, y);
    }
    return out;
}

BlockSystem assemble_blocks(const JacobianSplit& split, const Eigen::VectorXd& R,
                            const Reordering& ro, int workers) {
    BlockSystem bs;
    bs.K = ro.K;
    bs.neighbors = ro.neighbors;
    bs.n_i.resize(static_cast<size_t>(ro.K));
    bs.offset.assign(1, 0);
    for (int i = 0; i < ro.K; ++i) {
        bs.n_i[static_cast<size_t>(i)] = ro.block_size(i);
        bs.offset.push_back(bs.offset.back() + ro.block_size(i));
    }
    bs.P.resize(static_cast<size_t>(ro.K));
    bs.g.resize(static_cast<size_t>(ro.K));

    const Eigen::VectorXd rho =
        R.segment(ro.res_offset[static_cast<size_t>(ro.K)], ro.coupling_rows());

    WorkPlan diag;
    diag.phase = Phase::Assemble;
    diag.n_tasks = ro.K;
    diag.task = [&](int i) {
        const auto& JR = split.J_R[static_cast<size_t>(i)];
        const auto& Jrho = split.J_rho[static_cast<size_t>(i)];
        bs.P[static_cast<size_t>(i)] =
            Eigen::SparseMatrix<double>(JR.transpose() * JR) +
            Eigen::SparseMatrix<double>(Jrho.transpose() * Jrho);
        const Eigen::VectorXd R_i =
            R.segment(ro.res_offset[static_cast<size_t>(i)], JR.rows());
        bs.g[static_cast<size_t>(i)] = JR.transpose() * R_i + Jrho.transpose() * rho;
    };
    run_phase(diag, workers);

    // Materialize the coupling-pair slots first so the parallel fill writes
    // through stable pointers and never mutates the map structure.
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < ro.K; ++i) {
        for (int j : ro.neighbors[static_cast<size_t>(i)]) {
            if (i < j) {
                pairs.emplace_back(i, j);
            }
            bs.B[{i, j}] = Eigen::SparseMatrix<double>();
        }
    }
    std::vector<Eigen::SparseMatrix<double>*> slot_ij;
    std::vector<Eigen::SparseMatrix<double>*> slot_ji;
    slot_ij.reserve(pairs.size());
    slot_ji.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        slot_ij.push_back(&bs.B.at({i, j}));
        slot_ji.push_back(&bs.B.at({j, i}));
    }
    WorkPlan coupling;
    coupling.phase = Phase::Assemble;
    coupling.n_tasks = static_cast<int>(pairs.size());
    coupling.task = [&](int t) {
        const auto [i, j] = pairs[static_cast<size_t>(t)];
        Eigen::SparseMatrix<double> Bij = split.J_rho[static_cast<size_t>(i)].transpose() *
                                          split.J_rho[static_cast<size_t>(j)];
        *slot_ji[static_cast<size_t>(t)] = Bij.transpose();
        *slot_ij[static_cast<size_t>(t)] = std::move(Bij);
    };
    run_phase(coupling, workers);
    return bs;
}

namespace {

/// Deterministic start vector; mt19937_64 output is fixed by the standard.
Eigen::VectorXd seeded_unit_vector(int n, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) {
        v[i] = static_cast<double>(eng() >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
    }
    const double norm = v.norm();
    if (norm == 0.0) {
        v.setOnes();
        return v / v.norm();
    }
    return v / norm;
}

}  // namespace

double estimate_B_norm(const BlockSystem& bs, int iters, std::uint64_t seed) {
    if (bs.B.empty() || bs.n() == 0) {
        return 0.0;
    }
    Eigen::VectorXd v = seeded_unit_vector(bs.n(), seed);
    double est = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd w = bs.apply_B(v);
        const double norm = w.norm();
        if (norm == 0.0) {
            return est;
        }
        est = norm;
        v = w / norm;
    }
    return est;
}

double estimate_JtJ_norm(const SparseJacobian& J, int iters, std::uint64_t seed) {
    if (J.cols == 0) {
        return 0.0;
    }
    const Eigen::SparseMatrix<double, Eigen::RowMajor> Je = J.to_eigen();
    Eigen::VectorXd v = seeded_unit_vector(J.cols, seed);
    double est = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd w = Je.transpose() * (Je * v);
        const double norm = w.norm();
        if (norm == 0.0) {
            return est;
        }
        est = norm;
        v = w / norm;
    }
    return est;
}

void dump_block_pattern(const BlockSystem& bs, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    out << "row,col\n";
    for (int i = 0; i < bs.K; ++i) {
        const auto& P = bs.P[static_cast<size_t>(i)];
        for (int c = 0; c < P.outerSize(); ++c) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(P, c); it; ++it) {
                out << bs.offset[static_cast<size_t>(i)] + it.row() << ','
                    << bs.offset[static_cast<size_t>(i)] + it.col() << '\n';
            }
        }
    }
    for (const auto& [key, Bij] : bs.B) {
        for (int c = 0; c < Bij.outerSize(); ++c) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(Bij, c); it; ++it) {
                out << bs.offset[static_cast<size_t>(key.first)] + it.row() << ','
                    << bs.offset[static_cast<size_t>(key.second)] + it.col() << '\n';
            }
        }
    }
    if (!out) {
        throw Error("failed writing " + path);
    }
}

}  // namespace pilm
