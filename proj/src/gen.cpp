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

#include "pilm/gen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace pilm {

namespace {

/// mt19937_64 with hand-rolled draws; the standard pins the engine's output,
/// so generated problems are identical across platforms for a given seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), unbiased by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = eng_();
        while (v >= limit) {
            v = eng_();
        }
        return v % n;
    }

    /// Standard normal via Box-Muller; draws two values at a time.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

  private:
    std::mt19937_64 eng_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

/// First k elements of a Fisher-Yates shuffle of 0..n-1.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    std::vector<int> pool(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        pool[static_cast<size_t>(i)] = i;
    }
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    return pool;
}

struct Grid {
    int side = 0;
    std::vector<double> px;
    std::vector<double> py;
    std::vector<int> point_at;  ///< grid cell -> point index or -1

    int cell(int gx, int gy) const { return gy * side + gx; }
};

/// Partner draw with weight exp(-dist / decay), restricted to a window of
/// 8 * decay grid units around the anchor; candidates are scanned in cell
/// order so the cumulative draw is deterministic.
int pick_partner(const Grid& grid, int anchor, double decay, Rng& rng, int exclude) {
    const int ax = static_cast<int>(grid.px[static_cast<size_t>(anchor)]);
    const int ay = static_cast<int>(grid.py[static_cast<size_t>(anchor)]);
    const int radius = std::max(2, static_cast<int>(std::ceil(8.0 * decay)));
    const int x0 = std::max(0, ax - radius);
    const int x1 = std::min(grid.side - 1, ax + radius);
    const int y0 = std::max(0, ay - radius);
    const int y1 = std::min(grid.side - 1, ay + radius);

    std::vector<std::pair<int, double>> cand;
    double total = 0.0;
    for (int gy = y0; gy <= y1; ++gy) {
        for (int gx = x0; gx <= x1; ++gx) {
            const int pt = grid.point_at[static_cast<size_t>(grid.cell(gx, gy))];
            if (pt < 0 || pt == anchor || pt == exclude) {
                continue;
            }
            const double dx = grid.px[static_cast<size_t>(pt)] - grid.px[static_cast<size_t>(anchor)];
            const double dy = grid.py[static_cast<size_t>(pt)] - grid.py[static_cast<size_t>(anchor)];
            const double w = std::exp(-std::sqrt(dx * dx + dy * dy) / decay);
            cand.emplace_back(pt, w);
            total += w;
        }
    }
    if (cand.empty()) {
        return -1;
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (const auto& [pt, w] : cand) {
        acc += w;
        if (u < acc) {
            return pt;
        }
    }
    return cand.back().first;
}

}  // namespace

Problem generate(const GenConfig& cfg) {
    if (cfg.n_hat < 4) {
        throw InvalidArgument("n_hat must be at least 4");
    }
    const int root = static_cast<int>(std::llround(std::sqrt(static_cast<double>(cfg.n_hat))));
    if (root * root != cfg.n_hat) {
        throw InvalidArgument("n_hat must be a perfect square (grid side 2*sqrt(n_hat))");
    }
    const double w_total = cfg.w_distance + cfg.w_angle + cfg.w_point_line;
    if (!(w_total > 0.0) || cfg.w_distance < 0.0 || cfg.w_angle < 0.0 ||
        cfg.w_point_line < 0.0) {
        throw InvalidArgument("measurement mix weights must be nonnegative, sum > 0");
    }
    if (cfg.tight_fraction < 0.0 || cfg.tight_fraction > 1.0) {
        throw InvalidArgument("tight_fraction must lie in [0, 1]");
    }
    if (!(cfg.cell_size > 0.0)) {
        throw InvalidArgument("cell_size must be positive");
    }

    Rng rng(cfg.seed);
    Grid grid;
    grid.side = 2 * root;
    const int n_cells = grid.side * grid.side;
    std::vector<int> chosen = sample_without_replacement(n_cells, cfg.n_hat, rng);
    std::sort(chosen.begin(), chosen.end());
    grid.px.resize(static_cast<size_t>(cfg.n_hat));
    grid.py.resize(static_cast<size_t>(cfg.n_hat));
    grid.point_at.assign(static_cast<size_t>(n_cells), -1);
    for (int p = 0; p < cfg.n_hat; ++p) {
        const int c = chosen[static_cast<size_t>(p)];
        grid.px[static_cast<size_t>(p)] = static_cast<double>(c % grid.side);
        grid.py[static_cast<size_t>(p)] = static_cast<double>(c / grid.side);
        grid.point_at[static_cast<size_t>(c)] = p;
    }

    const double sigma_angle_rad =
        cfg.angle_sigma_degrees ? cfg.sigma_angle * std::numbers::pi / 180.0
                                : cfg.sigma_angle;
    auto noisy = [&](double truth, double sigma) {
        return truth + cfg.noise_scale * sigma * rng.normal();
    };

    Problem prob;
    prob.n_points = cfg.n_hat;
    std::vector<double> truth(static_cast<size_t>(2 * cfg.n_hat));
    for (int p = 0; p < cfg.n_hat; ++p) {
        truth[static_cast<size_t>(2 * p)] = cfg.cell_size * grid.px[static_cast<size_t>(p)];
        truth[static_cast<size_t>(2 * p + 1)] = cfg.cell_size * grid.py[static_cast<size_t>(p)];
    }

    const long long target =
        static_cast<long long>(std::ceil(cfg.avg_obs_per_point * cfg.n_hat));
    long long incidence = 0;
    const long long round_limit = 100 * std::max<long long>(target, 1);
    const Eigen::VectorXd truth_vec = Eigen::Map<const Eigen::VectorXd>(
        truth.data(), static_cast<Eigen::Index>(truth.size()));

    for (long long round = 0; incidence < target; ++round) {
        if (round > round_limit) {
            throw Error("observation generation failed to reach the target incidence");
        }
        const double u = rng.uniform() * w_total;
        const int anchor = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_hat)));
        if (u < cfg.w_distance) {
            const int b = pick_partner(grid, anchor, cfg.pair_decay, rng, -1);
            if (b < 0) {
                continue;
            }
            DistanceMeasurement m{anchor, b, 0.0, 1.0};
            const double d = eval_residual(Measurement{m}, truth_vec);
            m.value = noisy(d, cfg.sigma_dist);
            m.sigma = cfg.sigma_dist;
            prob.measurements.push_back(m);
            incidence += 2;
        } else if (u < cfg.w_distance + cfg.w_angle) {
            // Vertex at the anchor; rays to two nearby partners. Near-collinear
            // triples are rejected to keep the arctangent rows well scaled.
            bool placed = false;
            for (int tries = 0; tries < 20 && !placed; ++tries) {
                const int i = pick_partner(grid, anchor, cfg.pair_decay, rng, -1);
                if (i < 0) {
                    break;
                }
                const int k = pick_partner(grid, anchor, cfg.pair_decay, rng, i);
                if (k < 0) {
                    break;
                }
                // Probe with sigma 1 so the stored value is the model output
                // bitwise; dividing and re-multiplying by sigma would leave a
                // one-ulp residual at the truth even with zero noise.
                AngleMeasurement m{i, anchor, k, 0.0, 1.0};
                const double theta = eval_residual(Measurement{m}, truth_vec);
                if (std::abs(theta) < 0.05 || std::numbers::pi - std::abs(theta) < 0.05) {
                    continue;
                }
                m.value = noisy(theta, sigma_angle_rad);
                m.sigma = sigma_angle_rad;
                prob.measurements.push_back(m);
                incidence += 3;
                placed = true;
            }
        } else {
            // Anchor is the offset point; the line runs through two partners.
            bool placed = false;
            for (int tries = 0; tries < 20 && !placed; ++tries) {
                const int i = pick_partner(grid, anchor, cfg.pair_decay, rng, -1);
                if (i < 0) {
                    break;
                }
                const int j = pick_partner(grid, anchor, cfg.pair_decay, rng, i);
                if (j < 0) {
                    break;
                }
                PointLineMeasurement m{anchor, i, j, 0.0, 1.0};
                const double offset = eval_residual(Measurement{m}, truth_vec);
                // A point on (or almost on) the line sits at the kink of the
                // absolute value; such triples are rejected like collinear
                // angle triples.
                if (offset < 0.05) {
                    continue;
                }
                m.value = noisy(offset, cfg.sigma_dist);
                m.sigma = cfg.sigma_dist;
                prob.measurements.push_back(m);
                incidence += 3;
                placed = true;
            }
        }
    }

    const int n_tight = static_cast<int>(std::llround(cfg.tight_fraction * cfg.n_hat));
    std::vector<char> tight(static_cast<size_t>(cfg.n_hat), 0);
    for (int p : sample_without_replacement(cfg.n_hat, n_tight, rng)) {
        tight[static_cast<size_t>(p)] = 1;
    }
    for (int p = 0; p < cfg.n_hat; ++p) {
        const double sc =
            tight[static_cast<size_t>(p)] ? cfg.sigma_coord_tight : cfg.sigma_coord_loose;
        prob.measurements.push_back(CoordinateMeasurement{
            p, Axis::X, noisy(truth_vec[2 * p], sc), sc});
        prob.measurements.push_back(CoordinateMeasurement{
            p, Axis::Y, noisy(truth_vec[2 * p + 1], sc), sc});
    }

    prob.ground_truth = std::move(truth);
    validate(prob);
    return prob;
}

std::vector<double> coordinate_error(const Eigen::VectorXd& x,
                                     const std::vector<double>& truth) {
    if (static_cast<size_t>(x.size()) != truth.size()) {
        throw InvalidArgument("estimate and ground truth differ in size");
    }
    std::vector<double> err(truth.size());
    for (size_t i = 0; i < truth.size(); ++i) {
        err[i] = std::abs(x[static_cast<Eigen::Index>(i)] - truth[i]);
    }
    return err;
}

ErrorQuantiles error_quantiles(std::vector<double> errors) {
    if (errors.empty()) {
        throw InvalidArgument("no errors to summarize");
    }
    std::sort(errors.begin(), errors.end());
    const auto rank = [&errors](double p) {
        const size_t n = errors.size();
        const size_t idx = static_cast<size_t>(
            std::max<long long>(0, static_cast<long long>(
                                       std::ceil(p * static_cast<double>(n))) - 1));
        return errors[std::min(idx, n - 1)];
    };
    return {rank(0.5), rank(0.9), rank(0.99), errors.back()};
}

}  // namespace pilm
