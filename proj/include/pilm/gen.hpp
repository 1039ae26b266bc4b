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
#include <vector>

#include "pilm/model.hpp"

namespace pilm {

/// Synthetic network-adjustment instances: n_hat points sampled from a
/// 2*sqrt(n_hat) x 2*sqrt(n_hat) grid with cell_size spacing (25% coverage),
/// geometric observations between nearby points until the mean incidence per
/// point reaches avg_obs_per_point, plus one observation per coordinate axis
/// per point. Observed values are true values plus Gaussian noise of the
/// configured sigma; noise_scale = 0 yields exact observations.
struct GenConfig {
    int n_hat = 100;  ///< must be a perfect square, >= 4
    std::uint64_t seed = 0;

    /// Grid spacing. Coordinate noise (sigma_coord_loose) perturbs the start
    /// by ~1/cell_size of an edge, so the default keeps the initial geometry
    /// well inside the basin of the generating configuration while leaving
    /// the coordinate observations far looser than the geometric ones.
    double cell_size = 100.0;

    double sigma_dist = 0.01;
    double sigma_angle = 1.0;
    bool angle_sigma_degrees = true;  ///< interpret sigma_angle in degrees

    double sigma_coord_loose = 1.0;
    double sigma_coord_tight = 0.01;
    double tight_fraction = 0.01;  ///< share of points with tight coordinates

    double avg_obs_per_point = 6.0;  ///< coordinate observations excluded

    /// Relative draw weights of the geometric observation types. An angle
    /// pins a point tangentially only to sigma_angle times the edge length,
    /// so angles stay a minor share; distances and point-line offsets carry
    /// the tight absolute precision that pulls adjusted coordinates well
    /// below the loose coordinate noise.
    double w_distance = 0.7;
    double w_angle = 0.1;
    double w_point_line = 0.2;

    double pair_decay = 2.0;    ///< partner weight exp(-dist / pair_decay), in cells
    double noise_scale = 1.0;
};

/// Deterministic for a given seed. Throws InvalidArgument when n_hat is not
/// a perfect square or the weights are degenerate.
Problem generate(const GenConfig& cfg);

/// |x_i - truth_i| per scalar variable.
std::vector<double> coordinate_error(const Eigen::VectorXd& x,
                                     const std::vector<double>& truth);

struct ErrorQuantiles {
    double median = 0.0;
    double p90 = 0.0;
    double p99 = 0.0;
    double max = 0.0;
};

/// Nearest-rank quantiles: q(p) is element ceil(p*N)-1 of the sorted values.
ErrorQuantiles error_quantiles(std::vector<double> errors);

}  // namespace pilm
