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

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pilm/blocks.hpp"
#include "pilm/model.hpp"

namespace pilm::test {

/// Deterministic helper RNG for test fixtures. Uses the raw engine output so
/// the values are pinned across standard library implementations.
class TestRng {
  public:
    explicit TestRng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double span(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Modulo bias is irrelevant for fixture construction.
    int below(int n) { return static_cast<int>(eng_() % static_cast<std::uint64_t>(n)); }

  private:
    std::mt19937_64 eng_;
};

/// Central-difference gradient of F; the oracle for the analytic gradient.
inline Eigen::VectorXd fd_gradient(const Problem& p, const Eigen::VectorXd& x,
                                   double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = xp(i);
        xp(i) = orig + h;
        const double fp = eval_F(p, xp);
        xp(i) = orig - h;
        const double fm = eval_F(p, xp);
        xp(i) = orig;
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Central-difference Jacobian of R; the oracle for the analytic rows.
inline Eigen::MatrixXd fd_jacobian(const Problem& p, const Eigen::VectorXd& x,
                                   double h = 1e-6) {
    Eigen::MatrixXd J(p.n_measurements(), x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = xp(i);
        xp(i) = orig + h;
        const Eigen::VectorXd rp = eval_R(p, xp);
        xp(i) = orig - h;
        const Eigen::VectorXd rm = eval_R(p, xp);
        xp(i) = orig;
        J.col(i) = (rp - rm) / (2.0 * h);
    }
    return J;
}

inline Eigen::MatrixXd dense(const SparseJacobian& J) {
    return Eigen::MatrixXd(J.to_eigen());
}

/// Block-diagonal part of the assembled system as a dense matrix.
inline Eigen::MatrixXd dense_P(const BlockSystem& bs) {
    const int n = bs.n();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < bs.K; ++i) {
        A.block(bs.offset[static_cast<size_t>(i)], bs.offset[static_cast<size_t>(i)],
                bs.n_i[static_cast<size_t>(i)], bs.n_i[static_cast<size_t>(i)]) =
            Eigen::MatrixXd(bs.P[static_cast<size_t>(i)]);
    }
    return A;
}

/// Off-diagonal (coupling) part of the assembled system as a dense matrix.
inline Eigen::MatrixXd dense_B(const BlockSystem& bs) {
    const int n = bs.n();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [key, mat] : bs.B) {
        A.block(bs.offset[static_cast<size_t>(key.first)],
                bs.offset[static_cast<size_t>(key.second)], mat.rows(), mat.cols()) =
            Eigen::MatrixXd(mat);
    }
    return A;
}

inline double spectral_norm(const Eigen::MatrixXd& A) {
    if (A.rows() == 0 || A.cols() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    return svd.singularValues()(0);
}

/// Fixture builder: scattered points with a mix of all four measurement
/// types, valid geometry, observed values close to the model values.
/// Independent of the shipping generator.
inline Problem make_random_problem(int n_points, std::uint64_t seed,
                                   double noise = 0.3, bool with_truth = true) {
    TestRng rng(seed);
    const double side = std::max(20.0, 2.0 * std::sqrt(static_cast<double>(n_points)));
    std::vector<double> truth(2 * static_cast<size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
        for (;;) {
            const double x = rng.span(0.0, side);
            const double y = rng.span(0.0, side);
            bool separated = true;
            for (int j = 0; j < i; ++j) {
                const double dx = x - truth[2 * static_cast<size_t>(j)];
                const double dy = y - truth[2 * static_cast<size_t>(j) + 1];
                if (dx * dx + dy * dy < 0.25) {
                    separated = false;
                    break;
                }
            }
            if (separated) {
                truth[2 * static_cast<size_t>(i)] = x;
                truth[2 * static_cast<size_t>(i) + 1] = y;
                break;
            }
        }
    }
    const Eigen::VectorXd xt =
        Eigen::Map<const Eigen::VectorXd>(truth.data(), 2 * n_points);

    Problem p;
    p.n_points = n_points;
    // Model value = residual at truth with value zeroed and unit sigma.
    // Shares the solver's wrapping so angle values stay consistent.
    const auto model_value = [&xt](Measurement m) {
        std::visit([](auto& mm) {
            mm.value = 0.0;
            mm.sigma = 1.0;
        }, m);
        return eval_residual(m, xt);
    };
    const auto push = [&](Measurement m, double sigma) {
        const double v = model_value(m) + noise * sigma * (rng.uniform() - 0.5);
        std::visit([&](auto& mm) {
            mm.value = v;
            mm.sigma = sigma;
        }, m);
        p.measurements.push_back(m);
    };

    // Ring of distances keeps every point referenced and the graph connected.
    for (int i = 0; i < n_points; ++i) {
        push(DistanceMeasurement{i, (i + 1) % n_points, 0.0, 1.0}, 0.01);
    }
    for (int t = 0; t < n_points; ++t) {
        const int i = rng.below(n_points);
        int j = rng.below(n_points);
        if (j == i) {
            j = (j + 1) % n_points;
        }
        push(DistanceMeasurement{i, j, 0.0, 1.0}, 0.01);
    }
    // Angles: reject configurations near the wrap discontinuity at pi.
    for (int t = 0; t < n_points / 2; ++t) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            const int j = rng.below(n_points);
            const int i = rng.below(n_points);
            const int k = rng.below(n_points);
            if (i == j || k == j || i == k) {
                continue;
            }
            AngleMeasurement m{i, j, k, 0.0, 1.0};
            const double theta = model_value(Measurement{m});
            if (std::abs(theta) > M_PI - 0.05) {
                continue;
            }
            push(Measurement{m}, 0.0175);
            break;
        }
    }
    // Point-line offsets: reject near-zero offsets (the residual kinks there).
    for (int t = 0; t < n_points / 3; ++t) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            const int k = rng.below(n_points);
            const int i = rng.below(n_points);
            const int j = rng.below(n_points);
            if (i == j || k == i || k == j) {
                continue;
            }
            PointLineMeasurement m{k, i, j, 0.0, 1.0};
            if (model_value(Measurement{m}) < 0.05) {
                continue;
            }
            push(Measurement{m}, 0.01);
            break;
        }
    }
    // A few absolute coordinates anchor the gauge freedom.
    const int anchors = std::max(2, n_points / 10);
    for (int t = 0; t < anchors; ++t) {
        const int i = (t * 7) % n_points;
        push(CoordinateMeasurement{i, Axis::X, 0.0, 1.0}, 0.5);
        push(CoordinateMeasurement{i, Axis::Y, 0.0, 1.0}, 0.5);
    }

    if (with_truth) {
        p.ground_truth = truth;
    }
    validate(p);
    return p;
}

/// truth + per-coordinate uniform offset of the given magnitude.
inline Eigen::VectorXd perturbed_start(const Problem& p, double scale,
                                       std::uint64_t seed) {
    TestRng rng(seed);
    Eigen::VectorXd x(p.n_vars());
    for (int i = 0; i < p.n_vars(); ++i) {
        x(i) = (*p.ground_truth)[static_cast<size_t>(i)] +
               scale * (rng.uniform() - 0.5);
    }
    return x;
}

}  // namespace pilm::test
